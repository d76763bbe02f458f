"""Prime fields, reduced multivariate polynomials and dense truth tables.

Polynomials are kept reduced modulo x_i^p - x_i, so two polynomials are
equal as functions F_p^n -> F_p exactly when their term maps agree.
Points are encoded base p, little-endian: variable 1 is the least
significant digit of a table index.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ResourceLimitError
from .linalg import inverse
from .rng import as_rng

DEFAULT_MAX_TABLE = 1 << 26
TABLE_MAGIC = b"PSTT"


def max_table_size() -> int:
    return int(os.environ.get("POLYSTRUCT_MAX_TABLE", DEFAULT_MAX_TABLE))


def check_table_size(p: int, n: int, what: str = "truth table") -> int:
    size = p**n
    if size > max_table_size():
        raise ResourceLimitError(
            f"{what} needs {p}^{n} = {size} entries, above the cap {max_table_size()} "
            "(raise POLYSTRUCT_MAX_TABLE to override)"
        )
    return size


def is_prime(p: int) -> bool:
    return p >= 2 and all(p % d for d in range(2, int(p**0.5) + 1))


@dataclass(frozen=True)
class PrimeField:
    p: int

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not is_prime(int(self.p)):
            raise ValueError(f"{self.p} is not prime")
        if not 2 <= self.p <= 31:
            raise ValueError("field size must lie in [2, 31]")

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        return pow(a, self.p - 2, self.p)

    def elements(self) -> range:
        return range(self.p)


def check_field(p: int) -> int:
    PrimeField(int(p))
    return int(p)


def reduce_exponent(e: int, p: int) -> int:
    return 0 if e == 0 else (e - 1) % (p - 1) + 1


# ---------------------------------------------------------------- points


@lru_cache(maxsize=64)
def all_points(p: int, n: int) -> np.ndarray:
    """Every point of F_p^n, row i holding the digits of index i."""
    size = check_table_size(p, n, "point enumeration")
    idx = np.arange(size, dtype=np.int64)
    pts = np.empty((size, n), dtype=np.int64)
    for k in range(n):
        pts[:, k] = idx % p
        idx = idx // p
    pts.setflags(write=False)
    return pts


def place_values(p: int, n: int) -> np.ndarray:
    return p ** np.arange(n, dtype=np.int64)


def encode(points, p: int) -> np.ndarray | int:
    pts = np.asarray(points, dtype=np.int64)
    n = pts.shape[-1]
    return (pts % p) @ place_values(p, n)


def decode(index: int, p: int, n: int) -> tuple[int, ...]:
    digits = []
    for _ in range(n):
        digits.append(index % p)
        index //= p
    return tuple(digits)


# ------------------------------------------------------ dense transforms


@lru_cache(maxsize=None)
def power_matrix(p: int) -> np.ndarray:
    """V[x, e] = x^e mod p with 0^0 = 1."""
    V = np.zeros((p, p), dtype=np.int64)
    for x in range(p):
        for e in range(p):
            V[x, e] = pow(x, e, p)
    return V


@lru_cache(maxsize=None)
def interpolation_matrix(p: int) -> np.ndarray:
    return inverse(power_matrix(p), p)


def _axis_transform(flat: np.ndarray, M: np.ndarray, p: int, n: int) -> np.ndarray:
    if n == 0:
        return flat % p
    if p == 2:
        # both directions are the Moebius transform over F_2
        a = (flat % 2).astype(np.uint8).copy()
        for k in range(n):
            v = a.reshape(-1, 2, 1 << k)
            v[:, 1, :] ^= v[:, 0, :]
        return a.astype(np.int64)
    a = (flat % p).astype(np.int64).reshape((p,) * n)
    for axis in range(n):
        a = np.moveaxis(np.tensordot(M, a, axes=([1], [axis])), 0, axis) % p
    return a.reshape(-1)


def values_from_coefficients(coeffs: np.ndarray, p: int, n: int) -> np.ndarray:
    return _axis_transform(coeffs, power_matrix(p), p, n)


def coefficients_from_values(values: np.ndarray, p: int, n: int) -> np.ndarray:
    return _axis_transform(values, interpolation_matrix(p), p, n)


# ------------------------------------------------------------ polynomial


def _reduce_terms(raw, p: int, n: int | None) -> tuple[int, dict]:
    out: dict[tuple[int, ...], int] = {}
    for exps, c in raw:
        exps = tuple(int(e) for e in exps)
        if n is None:
            n = len(exps)
        elif len(exps) != n:
            raise ValueError(f"exponent vector {exps} does not have length {n}")
        if any(e < 0 for e in exps):
            raise ValueError("negative exponent")
        key = tuple(reduce_exponent(e, p) for e in exps)
        out[key] = (out.get(key, 0) + int(c)) % p
    return (n or 0), {k: v for k, v in out.items() if v}


def _mul_terms(a: Mapping, b: Mapping, p: int) -> dict:
    out: dict[tuple[int, ...], int] = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            key = tuple(reduce_exponent(x + y, p) for x, y in zip(ea, eb))
            out[key] = (out.get(key, 0) + ca * cb) % p
    return {k: v for k, v in out.items() if v}


class Polynomial:
    """Reduced polynomial over F_p in n variables (sparse term map)."""

    __slots__ = ("p", "n", "terms", "_hash", "_table")

    def __init__(self, p: int, n: int, terms: Mapping | Iterable = (), _trusted: bool = False):
        self.p = int(p)
        self.n = int(n)
        if _trusted:
            self.terms = dict(terms)
        else:
            check_field(self.p)
            items = terms.items() if isinstance(terms, Mapping) else terms
            _, self.terms = _reduce_terms(items, self.p, self.n)
        self._hash = None
        self._table = None

    # constructors
    @classmethod
    def zero(cls, p: int, n: int) -> "Polynomial":
        return cls(p, n, {}, _trusted=True)

    @classmethod
    def constant(cls, p: int, n: int, c: int) -> "Polynomial":
        c %= p
        return cls(p, n, {(0,) * n: c} if c else {}, _trusted=True)

    @classmethod
    def variable(cls, p: int, n: int, i: int, coeff: int = 1) -> "Polynomial":
        """The polynomial coeff * x_{i+1} (0-based index i)."""
        exps = [0] * n
        exps[i] = 1
        return cls(p, n, {tuple(exps): coeff})

    @classmethod
    def linear(cls, p: int, coeffs: Sequence[int], constant: int = 0) -> "Polynomial":
        n = len(coeffs)
        terms = {}
        for i, c in enumerate(coeffs):
            if int(c) % p:
                e = [0] * n
                e[i] = 1
                terms[tuple(e)] = int(c) % p
        if constant % p:
            terms[(0,) * n] = constant % p
        return cls(p, n, terms, _trusted=True)

    @classmethod
    def monomial(cls, p: int, exps: Sequence[int], coeff: int = 1) -> "Polynomial":
        return cls(p, len(exps), {tuple(exps): coeff})

    @classmethod
    def from_table(cls, p: int, n: int, values) -> "Polynomial":
        vals = np.asarray(values, dtype=np.int64).reshape(-1)
        if vals.size != p**n:
            raise ValueError(f"table length {vals.size} is not {p}^{n}")
        coeffs = coefficients_from_values(vals, p, n)
        nz = np.flatnonzero(coeffs)
        terms = {decode(int(i), p, n): int(coeffs[i]) for i in nz}
        poly = cls(p, n, terms, _trusted=True)
        poly._table = vals % p
        return poly

    # basic properties
    @property
    def field(self) -> PrimeField:
        return PrimeField(self.p)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    @property
    def constant_term(self) -> int:
        return self.terms.get((0,) * self.n, 0)

    def coefficient(self, exps: Sequence[int]) -> int:
        return self.terms.get(tuple(exps), 0)

    def variables_used(self) -> list[int]:
        return sorted({i for e in self.terms for i, x in enumerate(e) if x})

    def homogeneous_part(self, d: int) -> "Polynomial":
        return Polynomial(self.p, self.n, {e: c for e, c in self.terms.items() if sum(e) == d}, _trusted=True)

    def truncate(self, max_degree: int) -> "Polynomial":
        return Polynomial(self.p, self.n, {e: c for e, c in self.terms.items() if sum(e) <= max_degree}, _trusted=True)

    def linear_coefficients(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.int64)
        for e, c in self.terms.items():
            if sum(e) == 1:
                out[e.index(1)] = c
        return out

    # arithmetic
    def _check(self, other: "Polynomial"):
        if (self.p, self.n) != (other.p, other.n):
            raise ValueError(f"polynomials live in different rings: F_{self.p}^{self.n} vs F_{other.p}^{other.n}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, np.integer)):
            return Polynomial.constant(self.p, self.n, int(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for e, c in other.terms.items():
            v = (terms.get(e, 0) + c) % self.p
            if v:
                terms[e] = v
            else:
                terms.pop(e, None)
        return Polynomial(self.p, self.n, terms, _trusted=True)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.p, self.n, {e: (-c) % self.p for e, c in self.terms.items()}, _trusted=True)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c: int) -> "Polynomial":
        c %= self.p
        if not c:
            return Polynomial.zero(self.p, self.n)
        return Polynomial(self.p, self.n, {e: v * c % self.p for e, v in self.terms.items()}, _trusted=True)

    def __mul__(self, other):
        if isinstance(other, (int, np.integer)):
            return self.scale(int(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        return Polynomial(self.p, self.n, _mul_terms(self.terms, other.terms, self.p), _trusted=True)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(self.p, self.n, 1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return (self.p, self.n) == (other.p, other.n) and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.p, self.n, frozenset(self.terms.items())))
        return self._hash

    def sorted_terms(self) -> list[tuple[tuple[int, ...], int]]:
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0][::-1]))

    def __repr__(self):
        if not self.terms:
            return f"Polynomial(F_{self.p}, n={self.n}: 0)"
        return f"Polynomial(F_{self.p}, n={self.n}: {self.pretty()})"

    def pretty(self, var: str = "x") -> str:
        if not self.terms:
            return "0"
        parts = []
        for exps, c in sorted(self.terms.items(), key=lambda t: (-sum(t[0]), t[0][::-1])):
            factors = [f"{var}{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(exps) if e]
            if not factors:
                parts.append(str(c))
            else:
                parts.append(("" if c == 1 else f"{c}*") + "*".join(factors))
        return " + ".join(parts)

    # evaluation
    def evaluate(self, x: Sequence[int]) -> int:
        if len(x) != self.n:
            raise ValueError(f"point has length {len(x)}, expected {self.n}")
        total = 0
        for exps, c in self.terms.items():
            term = c
            for xi, e in zip(x, exps):
                if e:
                    term = term * pow(int(xi), e, self.p) % self.p
            total += term
        return total % self.p

    __call__ = evaluate

    def evaluate_many(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64) % self.p
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ValueError(f"points must have shape (N, {self.n})")
        V = power_matrix(self.p)
        acc = np.zeros(pts.shape[0], dtype=np.int64)
        for exps, c in self.terms.items():
            term = np.full(pts.shape[0], c, dtype=np.int64)
            for k, e in enumerate(exps):
                if e:
                    term = term * V[pts[:, k], e] % self.p
            acc += term
        return acc % self.p

    def table(self) -> np.ndarray:
        """Values at every point in index order (cached, read-only)."""
        if self._table is None:
            check_table_size(self.p, self.n)
            coeffs = np.zeros(self.p**self.n, dtype=np.int64)
            pv = place_values(self.p, self.n)
            for exps, c in self.terms.items():
                coeffs[int(np.dot(exps, pv)) if self.n else 0] = c
            self._table = values_from_coefficients(coeffs, self.p, self.n)
            self._table.setflags(write=False)
        return self._table

    # substitution
    def substitute(self, M, offset=None) -> "Polynomial":
        """g(s) = f(offset + s M) for s in F_p^k, M of shape k x n."""
        M = np.asarray(M, dtype=np.int64)
        rows = M.shape[0] if M.ndim == 2 else (0 if self.n == 0 else -1)
        M = M.reshape(rows, self.n) % self.p
        k = M.shape[0]
        off = np.zeros(self.n, dtype=np.int64) if offset is None else np.asarray(offset, dtype=np.int64) % self.p
        if not self.terms:
            return Polynomial.zero(self.p, k)
        if self.p**k <= 1 << 16:
            S = all_points(self.p, k)
            X = (off + S @ M) % self.p
            if self.p**self.n <= 1 << 18:
                vals = self.table()[encode(X, self.p)]
            else:
                vals = self.evaluate_many(X)
            return Polynomial.from_table(self.p, k, vals)
        return self._substitute_symbolic(M, off)

    def _substitute_symbolic(self, M: np.ndarray, off: np.ndarray) -> "Polynomial":
        p, k = self.p, M.shape[0]
        images = []
        for i in range(self.n):
            t = {}
            for j in range(k):
                if M[j, i]:
                    e = [0] * k
                    e[j] = 1
                    t[tuple(e)] = int(M[j, i])
            if off[i]:
                t[(0,) * k] = int(off[i])
            images.append(t)
        total: dict = {}
        for exps, c in self.terms.items():
            acc = {(0,) * k: c}
            for i, e in enumerate(exps):
                for _ in range(e):
                    acc = _mul_terms(acc, images[i], p)
                    if not acc:
                        break
            for key, v in acc.items():
                total[key] = (total.get(key, 0) + v) % p
        return Polynomial(p, k, {e: c for e, c in total.items() if c}, _trusted=True)

    def shift(self, y) -> "Polynomial":
        """x -> f(x + y)."""
        return self.substitute(np.eye(self.n, dtype=np.int64), y)

    def rename(self, n_new: int, mapping: Sequence[int]) -> "Polynomial":
        """Move variable i to position mapping[i] inside n_new variables."""
        terms = {}
        for exps, c in self.terms.items():
            e = [0] * n_new
            for i, x in enumerate(exps):
                if x:
                    e[mapping[i]] = x
            terms[tuple(e)] = c
        return Polynomial(self.p, n_new, terms)

    # serialisation
    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "n": self.n,
            "terms": [{"exps": list(e), "coeff": c} for e, c in self.sorted_terms()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Polynomial":
        try:
            p, n = int(d["p"]), int(d["n"])
            raw = [(t["exps"], t["coeff"]) for t in d["terms"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed polynomial JSON: {exc}") from None
        check_field(p)
        for exps, _ in raw:
            if len(exps) != n:
                raise ValueError(f"exponent vector {exps} does not have length {n}")
        return cls(p, n, raw)

    @classmethod
    def from_json(cls, text: str) -> "Polynomial":
        return cls.from_dict(json.loads(text))


def reduce(raw_terms: Iterable[tuple[Sequence[int], int]], p: int, n: int | None = None) -> Polynomial:
    """Build the reduced polynomial of a list of (exponents, coefficient)."""
    check_field(p)
    raw_terms = list(raw_terms)
    n, terms = _reduce_terms(raw_terms, p, n)
    return Polynomial(p, n, terms, _trusted=True)


def evaluate(f: Polynomial, x: Sequence[int]) -> int:
    return f.evaluate(x)


def compose_affine(f: Polynomial, T, b=None) -> Polynomial:
    """f(T x + b) for an invertible n x n matrix T."""
    T = np.asarray(T, dtype=np.int64) % f.p
    if T.shape != (f.n, f.n):
        raise ValueError(f"T must be {f.n} x {f.n}")
    from .linalg import is_invertible

    if not is_invertible(T, f.p):
        raise ValueError("T is singular")
    return f.substitute(T.T, b)


# ------------------------------------------------------------ monomials


def monomials(p: int, n: int, max_degree: int, min_degree: int = 0) -> list[tuple[int, ...]]:
    """Reduced exponent vectors with min_degree <= degree <= max_degree."""
    out: list[tuple[int, ...]] = []

    def rec(i: int, left: int, prefix: list[int]):
        if i == n:
            if sum(prefix) >= min_degree:
                out.append(tuple(prefix))
            return
        for e in range(min(p - 1, left) + 1):
            prefix.append(e)
            rec(i + 1, left - e, prefix)
            prefix.pop()

    rec(0, max_degree, [])
    out.sort(key=lambda e: (sum(e), e[::-1]))
    return out


def random_polynomial(p: int, n: int, d: int, seed=0, min_degree: int = 0) -> Polynomial:
    """Uniform coefficients on every reduced monomial of degree in [min_degree, d]."""
    check_field(p)
    if d > n * (p - 1):
        raise ValueError(f"degree {d} exceeds n(p-1) = {n * (p - 1)}")
    rng = as_rng(seed)
    mons = monomials(p, n, d, min_degree)
    coeffs = rng.integers(p, len(mons)) if mons else []
    return Polynomial(p, n, {m: int(c) for m, c in zip(mons, coeffs) if c}, _trusted=True)


def random_form(p: int, n: int, seed=0, homogeneous: bool = True) -> Polynomial:
    """Random nonzero linear (or affine) polynomial."""
    rng = as_rng(seed)
    while True:
        coeffs = rng.integers(p, n)
        if coeffs.any():
            break
    const = 0 if homogeneous else rng.integers(p)
    return Polynomial.linear(p, [int(c) for c in coeffs], int(const))


def elementary_symmetric(p: int, n: int, k: int) -> Polynomial:
    from itertools import combinations

    terms = {}
    for S in combinations(range(n), k):
        e = [0] * n
        for i in S:
            e[i] = 1
        terms[tuple(e)] = 1
    return Polynomial(p, n, terms)


# ------------------------------------------------------------ truth tables


@dataclass(frozen=True, eq=False)
class TruthTable:
    p: int
    n: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64).reshape(-1)
        if vals.size != self.p**self.n:
            raise ValueError(f"table length {vals.size} is not {self.p}^{self.n}")
        object.__setattr__(self, "values", vals % self.p)

    def __eq__(self, other):
        return (
            isinstance(other, TruthTable)
            and (self.p, self.n) == (other.p, other.n)
            and np.array_equal(self.values, other.values)
        )

    def to_bytes(self) -> bytes:
        header = TABLE_MAGIC + struct.pack("<BBxx", self.p, self.n)
        return header + self.values.astype(np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TruthTable":
        if len(data) < 8 or data[:4] != TABLE_MAGIC:
            raise ValueError("not a truth-table file (bad magic)")
        p, n = struct.unpack("<BBxx", data[4:8])
        check_field(p)
        body = np.frombuffer(data[8:], dtype=np.uint8)
        if body.size != p**n:
            raise ValueError(f"truth-table body has {body.size} bytes, expected {p**n}")
        return cls(p, n, body.astype(np.int64))


def to_truth_table(f: Polynomial) -> TruthTable:
    return TruthTable(f.p, f.n, f.table())


def from_truth_table(t: TruthTable) -> Polynomial:
    return Polynomial.from_table(t.p, t.n, t.values)


def table_length_to_n(p: int, length: int) -> int:
    n, size = 0, 1
    while size < length:
        size *= p
        n += 1
    if size != length:
        raise ValueError(f"length {length} is not a power of {p}")
    return n
