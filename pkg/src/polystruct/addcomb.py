"""Sumsets, the Bogolyubov-Chang density increment and subspaces of small
values for subadditive functions on F_p^n."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .analytic import walsh_hadamard
from .errors import ResourceLimitError, ThresholdError, VerificationError
from .ffpoly import all_points, check_field, encode
from .rng import as_rng
from .subspace import AffineSubspace, LinearForm, kernel_of

SUMSET_CAP = 1 << 14


@dataclass(frozen=True, eq=False)
class DenseSet:
    p: int
    n: int
    members: np.ndarray  # bool, length p^n

    def __post_init__(self):
        m = np.asarray(self.members, dtype=bool).reshape(-1)
        if m.size != self.p**self.n:
            raise ValueError("membership vector must have length p^n")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @classmethod
    def from_indices(cls, p: int, n: int, idx) -> "DenseSet":
        m = np.zeros(p**n, dtype=bool)
        m[np.asarray(idx, dtype=np.int64)] = True
        return cls(p, n, m)

    @classmethod
    def from_subspace(cls, V: AffineSubspace) -> "DenseSet":
        return cls.from_indices(V.p, V.n, V.indices())

    @classmethod
    def random(cls, p: int, n: int, mu: float, seed=0) -> "DenseSet":
        """Exactly round(mu p^n) members chosen uniformly."""
        N = p**n
        size = max(1, int(round(mu * N)))
        return cls.from_indices(p, n, as_rng(seed).choice(N, size))

    @property
    def size(self) -> int:
        return int(self.members.sum())

    @property
    def density(self) -> Fraction:
        return Fraction(self.size, self.p**self.n)

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.members)

    def __contains__(self, x) -> bool:
        return bool(self.members[int(encode(np.asarray(x) % self.p, self.p))])

    def issuperset(self, V: AffineSubspace) -> bool:
        return bool(self.members[V.indices()].all())

    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "members": [int(i) for i in self.indices()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "DenseSet":
        p, n = check_field(int(d["p"])), int(d["n"])
        idx = [int(i) for i in d["members"]]
        if any(i < 0 or i >= p**n for i in idx):
            raise ValueError("member index out of range")
        return cls.from_indices(p, n, idx)


def _negate_indices(p: int, n: int) -> np.ndarray:
    return encode((-all_points(p, n)) % p, p)


def _convolution_support(a: np.ndarray, b: np.ndarray, p: int, n: int) -> np.ndarray:
    """Support of sum_y a(y) b(x - y) for 0/1 vectors a, b."""
    if p == 2:
        N = 2**n
        counts = walsh_hadamard(walsh_hadamard(a.astype(np.int64)) * walsh_hadamard(b.astype(np.int64))) // N
        return counts > 0
    shape = (p,) * n
    fa = np.fft.fftn(a.astype(float).reshape(shape))
    fb = np.fft.fftn(b.astype(float).reshape(shape))
    counts = np.rint(np.fft.ifftn(fa * fb).real).reshape(-1)
    return counts > 0


def sumset(A: DenseSet, k: int) -> DenseSet:
    """kA - kA by repeated convolution of indicators."""
    if k < 1:
        raise ValueError("k must be >= 1")
    p, n = A.p, A.n
    if p**n > SUMSET_CAP:
        raise ResourceLimitError(f"exact sumsets need p^n <= {SUMSET_CAP}")
    a = A.members
    neg = a[_negate_indices(p, n)]
    step = _convolution_support(a, neg, p, n)
    cur = step
    for _ in range(k - 1):
        cur = _convolution_support(cur, step, p, n)
    return DenseSet(p, n, cur)


# ------------------------------------------------------------ Bogolyubov-Chang


def bc_k(p: int, mu) -> int:
    """max(1, ceil((log_{p/(p-1/2)}(2/mu) + 2) / 2))."""
    val = (math.log(2 / float(mu)) / math.log(p / (p - 0.5)) + 2) / 2
    return max(1, math.ceil(val - 1e-12))


def bc_codim_bound(p: int, mu0) -> float:
    """log_{(p-1/2)/(p-1)}(1/(2 mu0)), floored at 0."""
    val = math.log(1 / (2 * float(mu0))) / math.log((p - 0.5) / (p - 1))
    return max(0.0, val)


@dataclass(frozen=True)
class BCStep:
    alpha: tuple[int, ...]   # Fourier witness, in the coordinates of the previous subspace
    value: int               # the coset alpha . t = value that was kept
    density_before: Fraction
    density_after: Fraction


@dataclass(frozen=True, eq=False)
class BCCertificate:
    A: DenseSet
    k: int
    W: AffineSubspace
    V: AffineSubspace
    chain: tuple
    terminal: str  # "dense" or "flat"

    @property
    def mu0(self) -> Fraction:
        return self.A.density

    @property
    def k_bound(self) -> int:
        return bc_k(self.A.p, self.mu0)

    @property
    def codim_bound(self) -> float:
        return bc_codim_bound(self.A.p, self.mu0)

    def verify(self) -> bool:
        """W lies inside kA - kA (exhaustive)."""
        return sumset(self.A, self.k).issuperset(self.W)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "k": self.k,
            "k_bound": self.k_bound,
            "codim": self.W.codim,
            "codim_bound": self.codim_bound,
            "density": str(self.mu0),
            "terminal": self.terminal,
            "W": self.W.to_dict(),
            "chain": [
                {"alpha": list(s.alpha), "value": s.value, "before": str(s.density_before), "after": str(s.density_after)}
                for s in self.chain
            ],
        }


def _large_coefficients(mask: np.ndarray, p: int, d: int) -> np.ndarray:
    """Indices alpha != 0 with |sum_{x in B} omega^{-alpha.x}| >= (p - 1/2)/p * |B|."""
    size = int(mask.sum())
    if p == 2:
        S = np.abs(walsh_hadamard(mask.astype(np.int64)))
        ok = 4 * S >= 3 * size
    else:
        S = np.fft.fftn(mask.astype(float).reshape((p,) * d)).reshape(-1)
        lhs = np.abs(S) ** 2 * (2 * p) ** 2
        rhs = float(((2 * p - 1) * size) ** 2)
        ok = lhs >= rhs * (1 - 1e-12)
    ok[0] = False
    return np.flatnonzero(ok)


def bogolyubov_chang(A: DenseSet) -> BCCertificate:
    """Density increment on affine hyperplanes until A is dense (> 1/2) on the
    current coset or has no large nonzero Fourier coefficient there."""
    p, n = A.p, A.n
    if p**n > SUMSET_CAP:
        raise ResourceLimitError(f"Bogolyubov-Chang needs p^n <= {SUMSET_CAP}")
    if A.size == 0:
        raise ValueError("the set is empty")
    eps = Fraction(1, 2 * p - 2)
    V = AffineSubspace.full(p, n)
    chain = []
    while True:
        mask = A.members[V.indices()]
        d = V.dim
        mu = Fraction(int(mask.sum()), p**d)
        if 2 * mu > 1:
            terminal, k = "dense", 1
            break
        cand = _large_coefficients(mask, p, d)
        if cand.size == 0:
            terminal, k = "flat", bc_k(p, mu)
            break
        pts = all_points(p, d)
        alphas = pts[cand]
        vals = (pts[mask] @ alphas.T) % p
        best = None
        for j in range(len(cand)):
            counts = np.bincount(vals[:, j], minlength=p)
            a = int(np.argmax(counts))
            key = (int(counts[a]), tuple(-int(c) for c in alphas[j]))
            if best is None or key > best[0]:
                best = (key, j, a)
        (top, _), j, a = best
        new_mu = Fraction(top, p ** (d - 1))
        if new_mu < (1 + eps) * mu:
            raise VerificationError("density increment below (1 + 1/(2p-2))")
        alpha = tuple(int(c) for c in alphas[j])
        inner = kernel_of([LinearForm(p, alpha)], [a], p=p, n=d)
        V = V.compose(inner)
        chain.append(BCStep(alpha, a, mu, new_mu))
    cert = BCCertificate(A, k, V.direction(), V, tuple(chain), terminal)
    return cert


# ------------------------------------------------------------ subadditive functions


@dataclass(frozen=True, eq=False)
class SubadditiveResult:
    V: AffineSubspace
    bound: float
    k: int
    r: float
    density: Fraction
    certificate: BCCertificate
    max_on_V: float


def oracle_values(oracle: Callable, p: int, n: int) -> np.ndarray:
    if p**n > SUMSET_CAP:
        raise ResourceLimitError(f"exhaustive oracle sweeps need p^n <= {SUMSET_CAP}")
    return np.array([float(oracle(y)) for y in all_points(p, n)])


def check_subadditive(values: np.ndarray, p: int, n: int, trials: int = 1000, seed=0):
    """Random (alpha, u, v) probes of F(alpha u + v) <= F(u) + F(v).

    Returns None or the first counterexample (alpha, u_index, v_index)."""
    rng = as_rng(seed)
    N = p**n
    pts = all_points(p, n)
    us = rng.integers(N, size=trials)
    vs = rng.integers(N, size=trials)
    als = rng.integers(p, size=trials)
    w = encode((als[:, None] * pts[us] + pts[vs]) % p, p)
    bad = np.flatnonzero(values[w] > values[us] + values[vs] + 1e-12)
    if bad.size:
        i = bad[0]
        return int(als[i]), int(us[i]), int(vs[i])
    return None


def subadditive_subspace(oracle, p: int, n: int, r: float, mu_hint: float | None = None) -> SubadditiveResult:
    """Subspace on which a subadditive F stays <= 2kr, from Bogolyubov-Chang
    applied to A_r = {F <= r}. ``oracle`` is a callable on points or a
    precomputed value vector indexed by point index."""
    values = np.asarray(oracle, dtype=float) if not callable(oracle) else oracle_values(oracle, p, n)
    if values.size != p**n:
        raise ValueError("oracle table must have p^n entries")
    A = DenseSet(p, n, values <= r + 1e-12)
    mu = A.density
    if A.size == 0 or (mu_hint is not None and mu < mu_hint):
        raise ThresholdError(
            f"density of A_r is {float(mu):.4g}, below the hint",
            stage="subadditive",
            metrics={"density": float(mu), "r": r},
        )
    cert = bogolyubov_chang(A)
    if not cert.verify():
        raise VerificationError("W is not contained in kA - kA")
    bound = 2 * cert.k * r
    on_V = values[cert.W.indices()]
    worst = float(on_V.max())
    if worst > bound + 1e-12:
        bad = int(cert.W.indices()[int(np.argmax(on_V))])
        raise VerificationError(f"F exceeds 2kr at point index {bad}; the oracle is not subadditive")
    return SubadditiveResult(cert.W, bound, cert.k, r, mu, cert, worst)
