"""Affine subspaces of F_p^n in canonical form, restriction and coset partitions.

An :class:`AffineSubspace` stores an RREF basis B (k x n) and an offset that
vanishes on the pivot columns of B. Its canonical parametrisation is
x = offset + t B, so the parameter t_j equals the coordinate x_{pivot_j}.
Nested restrictions compose to canonical parametrisations again, which is
what :meth:`AffineSubspace.compose` relies on.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ffpoly import Polynomial, all_points, check_field, encode
from .linalg import nullspace, rank, rref, solve


@dataclass(frozen=True)
class LinearForm:
    """x -> coeffs . x + constant over F_p."""

    p: int
    coeffs: tuple[int, ...]
    constant: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) % self.p for c in self.coeffs))
        object.__setattr__(self, "constant", int(self.constant) % self.p)

    @property
    def n(self) -> int:
        return len(self.coeffs)

    @property
    def is_homogeneous(self) -> bool:
        return self.constant == 0

    def is_constant(self) -> bool:
        return not any(self.coeffs)

    def vector(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=np.int64)

    def __call__(self, x) -> int:
        return (int(np.dot(self.coeffs, np.asarray(x, dtype=np.int64))) + self.constant) % self.p

    def evaluate_many(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.int64) @ self.vector() + self.constant) % self.p

    def as_polynomial(self) -> Polynomial:
        return Polynomial.linear(self.p, self.coeffs, self.constant)

    def homogeneous(self) -> "LinearForm":
        return LinearForm(self.p, self.coeffs, 0)

    def __add__(self, other: "LinearForm") -> "LinearForm":
        return LinearForm(self.p, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.constant + other.constant)

    def __sub__(self, other: "LinearForm") -> "LinearForm":
        return LinearForm(self.p, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)), self.constant - other.constant)

    def scale(self, c: int) -> "LinearForm":
        return LinearForm(self.p, tuple(a * c for a in self.coeffs), self.constant * c)

    @classmethod
    def from_polynomial(cls, f: Polynomial) -> "LinearForm":
        if f.degree > 1:
            raise ValueError("polynomial is not affine")
        return cls(f.p, tuple(int(c) for c in f.linear_coefficients()), f.constant_term)

    @classmethod
    def coordinate(cls, p: int, n: int, i: int) -> "LinearForm":
        c = [0] * n
        c[i] = 1
        return cls(p, tuple(c))

    def to_dict(self) -> dict:
        return {"coeffs": list(self.coeffs), "constant": self.constant}

    @classmethod
    def from_dict(cls, p: int, d: Mapping) -> "LinearForm":
        return cls(p, tuple(d["coeffs"]), d.get("constant", 0))

    def pretty(self) -> str:
        return self.as_polynomial().pretty()


@dataclass(frozen=True)
class EmptySubspace:
    """Solution set of an inconsistent system."""

    p: int
    n: int
    dim = -1

    def __bool__(self):
        return False


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    p: int
    n: int
    basis: np.ndarray
    offset: np.ndarray
    pivots: tuple[int, ...] = field(default=())

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=np.int64)
        B = (B.reshape(-1, self.n) if self.n else np.zeros((0, 0), dtype=np.int64)) % self.p
        if B.shape[0]:
            B, piv = rref(B, self.p)
        else:
            piv = []
        off = np.asarray(self.offset, dtype=np.int64).reshape(self.n) % self.p
        for i, c in enumerate(piv):
            if off[c]:
                off = (off - off[c] * B[i]) % self.p
        B.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "pivots", tuple(piv))

    # constructors
    @classmethod
    def full(cls, p: int, n: int) -> "AffineSubspace":
        return cls(p, n, np.eye(n, dtype=np.int64), np.zeros(n, dtype=np.int64))

    @classmethod
    def span(cls, p: int, n: int, vectors, offset=None) -> "AffineSubspace":
        off = np.zeros(n, dtype=np.int64) if offset is None else offset
        return cls(p, n, np.asarray(vectors, dtype=np.int64).reshape(-1, n), off)

    @classmethod
    def point(cls, p: int, x) -> "AffineSubspace":
        x = np.asarray(x, dtype=np.int64)
        return cls(p, len(x), np.zeros((0, len(x)), dtype=np.int64), x)

    # structure
    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def codim(self) -> int:
        return self.n - self.dim

    @property
    def is_linear(self) -> bool:
        return not self.offset.any()

    def __bool__(self):
        return True

    def key(self) -> tuple:
        return (self.p, self.n, self.basis.tobytes(), self.basis.shape, self.offset.tobytes())

    def __eq__(self, other):
        return isinstance(other, AffineSubspace) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"AffineSubspace(F_{self.p}^{self.n}, dim={self.dim}, offset={self.offset.tolist()})"

    def direction(self) -> "AffineSubspace":
        return AffineSubspace(self.p, self.n, self.basis, np.zeros(self.n, dtype=np.int64))

    def embed(self, t) -> np.ndarray:
        """Ambient point(s) for parameter vector(s) t."""
        t = np.asarray(t, dtype=np.int64)
        return (self.offset + t @ self.basis) % self.p

    def params(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.int64)[..., list(self.pivots)] % self.p

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.int64) % self.p
        return bool(np.array_equal(self.embed(self.params(x)), x))

    def contains_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64) % self.p
        return np.all(self.embed(self.params(X)) == X, axis=1)

    def points(self) -> np.ndarray:
        return self.embed(all_points(self.p, self.dim))

    def indices(self) -> np.ndarray:
        return encode(self.points(), self.p)

    def equations(self) -> tuple[list[LinearForm], list[int]]:
        """Forms and values whose common solution set is this subspace."""
        if self.dim:
            normals = nullspace(self.basis, self.p, self.n)
        else:
            normals = np.eye(self.n, dtype=np.int64)
        forms = [LinearForm(self.p, tuple(int(c) for c in row)) for row in normals]
        return forms, [f(self.offset) for f in forms]

    def compose(self, inner: "AffineSubspace") -> "AffineSubspace":
        """Lift a subspace of this subspace's parameter space to F_p^n."""
        if inner.n != self.dim:
            raise ValueError("inner subspace lives in a different parameter space")
        return AffineSubspace(self.p, self.n, inner.basis @ self.basis, self.embed(inner.offset))

    def lift_form(self, form: LinearForm) -> LinearForm:
        """Ambient form agreeing with a parameter-space form on this subspace."""
        coeffs = [0] * self.n
        for j, c in enumerate(form.coeffs):
            coeffs[self.pivots[j]] = c
        return LinearForm(self.p, tuple(coeffs), form.constant)

    def pull_form(self, form: LinearForm) -> LinearForm:
        """Restrict an ambient form to parameter coordinates."""
        v = form.vector()
        return LinearForm(self.p, tuple(int(c) for c in (self.basis @ v) % self.p), form(self.offset))

    def translate(self, x) -> "AffineSubspace":
        return AffineSubspace(self.p, self.n, self.basis, (self.offset + np.asarray(x)) % self.p)

    def intersect(self, forms: Sequence[LinearForm], values: Sequence[int] | None = None):
        """Intersection with {forms = values}."""
        values = [0] * len(forms) if values is None else list(values)
        pulled = [self.pull_form(f) for f in forms]
        inner = kernel_of(pulled, values, p=self.p, n=self.dim)
        if not inner:
            return EmptySubspace(self.p, self.n)
        return self.compose(inner)

    # serialisation
    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "basis": self.basis.tolist(), "offset": self.offset.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "AffineSubspace":
        p, n = check_field(int(d["p"])), int(d["n"])
        basis = np.asarray(d["basis"], dtype=np.int64).reshape(-1, n)
        if rank(basis, p) != basis.shape[0]:
            raise ValueError("basis rows are linearly dependent")
        return cls(p, n, basis, d["offset"])

    @classmethod
    def from_json(cls, text: str) -> "AffineSubspace":
        return cls.from_dict(json.loads(text))


def kernel_of(forms: Sequence[LinearForm], values: Sequence[int] | None = None, p: int | None = None, n: int | None = None):
    """{x : forms[i](x) = values[i] for all i}, canonical, or EmptySubspace."""
    forms = list(forms)
    if forms:
        p, n = forms[0].p, forms[0].n
    if p is None or n is None:
        raise ValueError("empty form list needs explicit p and n")
    if not forms:
        return AffineSubspace.full(p, n)
    values = [0] * len(forms) if values is None else list(values)
    if len(values) != len(forms):
        raise ValueError("one value per form is required")
    M = np.array([f.coeffs for f in forms], dtype=np.int64).reshape(len(forms), n)
    rhs = np.array([v - f.constant for f, v in zip(forms, values)], dtype=np.int64) % p
    x0 = solve(M, rhs, p)
    if x0 is None:
        return EmptySubspace(p, n)
    return AffineSubspace(p, n, nullspace(M, p, n), x0)


def restrict(f: Polynomial, V) -> Polynomial:
    """f(offset + t B) as a polynomial in the dim(V) parameters t."""
    if not isinstance(V, AffineSubspace):
        raise ValueError("cannot restrict to an empty subspace")
    if (f.p, f.n) != (V.p, V.n):
        raise ValueError("polynomial and subspace live in different spaces")
    return f.substitute(V.basis, V.offset)


def direction_set(V: AffineSubspace) -> AffineSubspace:
    return V.direction()


@dataclass(frozen=True, eq=False)
class SubspacePartition:
    ambient: AffineSubspace
    cells: list
    labels: list = field(default_factory=list)

    @property
    def ragged(self) -> bool:
        return len({c.dim for c in self.cells}) > 1

    def verify(self) -> bool:
        """Exhaustive check: cells lie in the ambient, are disjoint and cover it."""
        p = self.ambient.p
        seen = []
        for cell in self.cells:
            pts = cell.points()
            if not self.ambient.contains_many(pts).all():
                return False
            seen.append(encode(pts, p))
        allidx = np.concatenate(seen) if seen else np.zeros(0, dtype=np.int64)
        if np.unique(allidx).size != allidx.size:
            return False
        return allidx.size == p**self.ambient.dim

    def cell_of(self, x) -> int:
        for i, cell in enumerate(self.cells):
            if cell.contains(x):
                return i
        raise ValueError("point is not covered")


def coset_partition(V: AffineSubspace, forms: Sequence[LinearForm]) -> SubspacePartition:
    """One cell per attained value vector of the forms on V."""
    p = V.p
    forms = list(forms)
    if not forms:
        return SubspacePartition(V, [V], [()])
    pulled = [V.pull_form(f) for f in forms]
    M = np.array([f.coeffs for f in pulled], dtype=np.int64).reshape(len(forms), V.dim)
    from .linalg import independent_rows

    lead = independent_rows(M, p) if V.dim else []
    cells, labels = [], []
    for beta in all_points(p, len(lead)):
        inner = kernel_of([pulled[i] for i in lead], [int(b) for b in beta], p=p, n=V.dim)
        cell = V.compose(inner)
        cells.append(cell)
        labels.append(tuple(f(cell.offset) for f in forms))
    return SubspacePartition(V, cells, labels)
