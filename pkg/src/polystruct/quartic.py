"""Degree-4 structure: the class calculus [f]_A for cubics, derivative bases
for quartics, the degree-dropping partition, the biased-quartic and
high-characteristic structure pipelines and the S_4 worked example.

Class calculus. For A = {Q_i} u {l_i}, a cubic f lies in [0]_A when
f = sum l'_i Q_i + sum l_i Q'_i + Q'_0. On U = {l_i = 0} the second sum
vanishes and the third has degree <= 2, so membership is a linear question
about the cubic part of f|_U against the cubic parts of t_j * Q_i|_U.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .addcomb import subadditive_subspace
from .analytic import add_indices, batch_rank, derivative, derivative_tensor, gowers_norm
from .cubic import bias_threshold, measured_bias, rank3_upper, split_by_forms
from .errors import ThresholdError, VerificationError
from .ffpoly import Polynomial, all_points, elementary_symmetric, monomials
from .linalg import inverse, rank, rref
from .quadform import (
    dickson_canonicalize,
    disjointify,
    fit_composition,
    min_combination_rank,
    poly_of_disjoint_is_low_degree,
    rank2,
    regularize,
)
from .rng import as_rng
from .subspace import AffineSubspace, LinearForm, SubspacePartition, coset_partition, kernel_of, restrict

EXHAUSTIVE_DIRECTIONS = 1 << 14
SAMPLED_DIRECTIONS = 1000
EXACT_U4_COST = 1 << 24
EPS_TARGET = 2.0**-10
BV_RETRIES = 8


def _lift(q: Polynomial, W: AffineSubspace) -> Polynomial:
    """Ambient polynomial agreeing with a parameter-space polynomial on W."""
    return q.rename(W.n, list(W.pivots))


def _restrict(f: Polynomial, V: AffineSubspace) -> Polynomial:
    if V.n == 0 or (V.dim == V.n and V.is_linear):
        return f
    if V.dim == 0:
        return Polynomial.constant(f.p, 0, f.evaluate(V.offset))
    return restrict(f, V)


def _vector(f: Polynomial, index: dict) -> np.ndarray:
    v = np.zeros(len(index), dtype=np.int64)
    for mono, c in f.terms.items():
        if mono in index:
            v[index[mono]] = c
    return v


def _independent(vectors: Sequence, p: int) -> list[int]:
    keep, rows = [], []
    for i, v in enumerate(vectors):
        v = [int(c) % p for c in v]
        if any(v) and rank(np.array(rows + [v]), p) == len(rows) + 1:
            rows.append(v)
            keep.append(i)
    return keep


def equation_forms(W: AffineSubspace) -> list[LinearForm]:
    """Affine forms whose common zero set is W."""
    forms, values = W.equations()
    return [LinearForm(W.p, f.coeffs, (-v) % W.p) for f, v in zip(forms, values)]


# ------------------------------------------------------------ the set A


@dataclass(frozen=True, eq=False)
class ModSet:
    p: int
    n: int
    Qs: tuple = ()
    ells: tuple = ()

    @classmethod
    def build(cls, p: int, n: int, Qs=(), ells=()) -> "ModSet":
        """Drop repeated or dependent members: forms by their linear part,
        quadratics by their quadratic part."""
        ells = [l for l in ells]
        ells = [ells[i] for i in _independent([l.coeffs for l in ells], p)]
        index = {m: i for i, m in enumerate(monomials(p, n, 2, 2))}
        Qs = list(Qs)
        Qs = [Qs[i] for i in _independent([_vector(q, index) for q in Qs], p)]
        return cls(p, n, tuple(Qs), tuple(ells))

    @property
    def t1(self) -> int:
        return len(self.Qs)

    @property
    def t2(self) -> int:
        return len(self.ells)

    def extend(self, Qs=(), ells=()) -> "ModSet":
        return ModSet.build(self.p, self.n, self.Qs + tuple(Qs), self.ells + tuple(ells))

    def kernel(self) -> AffineSubspace:
        return kernel_of(list(self.ells), p=self.p, n=self.n)

    def to_dict(self) -> dict:
        return {"Qs": [q.to_dict() for q in self.Qs], "ells": [l.to_dict() for l in self.ells]}


@dataclass(frozen=True, eq=False)
class ClassReduction:
    member: bool
    residue: Polynomial          # canonical cubic part on U, in U's parameters
    U: AffineSubspace
    coeffs: np.ndarray           # (t1, dim U): f|_U - residue ~ sum_ij c_ij t_j Q_i|_U

    @property
    def representative(self) -> Polynomial:
        """An element of [f]_A: the residue read in ambient coordinates."""
        return _lift(self.residue, self.U)


class ClassSolver:
    """Reusable linear algebra for [.]_A over a fixed A."""

    def __init__(self, A: ModSet):
        self.A = A
        p = A.p
        self.U = A.kernel()
        d = self.U.dim
        self.monos = monomials(p, d, 3, 3)
        self.index = {m: i for i, m in enumerate(self.monos)}
        self.restricted = [restrict(Q, self.U) for Q in A.Qs]
        vecs = []
        for QU in self.restricted:
            for j in range(d):
                vecs.append(_vector((Polynomial.variable(p, d, j) * QU).homogeneous_part(3), self.index))
        g = len(vecs)
        self.n_gens = g
        if g and self.monos:
            aug = np.hstack([np.array(vecs, dtype=np.int64), np.eye(g, dtype=np.int64)])
            R, piv = rref(aug, p)
            k = sum(1 for c in piv if c < len(self.monos))
            self.rows, self.piv = R[:k], piv[:k]
        else:
            self.rows, self.piv = np.zeros((0, len(self.monos) + g), dtype=np.int64), []

    def prefix(self, k: int) -> "ClassSolver":
        """Solver for A with only its first k quadratics (same forms), cached."""
        if k == self.A.t1:
            return self
        cache = self.__dict__.setdefault("_prefixes", {})
        if k not in cache:
            cache[k] = ClassSolver(ModSet(self.A.p, self.A.n, self.A.Qs[:k], self.A.ells))
        return cache[k]

    def _eliminate(self, f: Polynomial):
        if f.degree > 3:
            raise ValueError(f"expected degree <= 3, got {f.degree}")
        p = self.A.p
        v = _vector(restrict(f, self.U).homogeneous_part(3), self.index)
        m = len(self.monos)
        combo = np.zeros(self.n_gens, dtype=np.int64)
        for row, c in zip(self.rows, self.piv):
            a = v[c]
            if a:
                v = (v - a * row[:m]) % p
                combo = (combo + a * row[m:]) % p
        return v, combo

    def residue_vector(self, f: Polynomial) -> np.ndarray:
        """Coordinates of the reduced cubic part; zero iff f is in [0]_A."""
        return self._eliminate(f)[0]

    def reduce(self, f: Polynomial) -> ClassReduction:
        p, d = self.A.p, self.U.dim
        v, combo = self._eliminate(f)
        residue = Polynomial(p, d, {self.monos[k]: int(v[k]) for k in np.flatnonzero(v)})
        coeffs = combo.reshape(self.A.t1, d) if self.A.t1 else np.zeros((0, d), dtype=np.int64)
        return ClassReduction(not v.any(), residue, self.U, coeffs)

    def decompose(self, f: Polynomial):
        """(l'_i, Q'_i, Q'_0) with f = sum l'_i Q_i + sum l_i Q'_i + Q'_0,
        or None when f is not in [0]_A."""
        red = self.reduce(f)
        if not red.member:
            return None
        p, n = self.A.p, self.A.n
        primes = []
        for i in range(self.A.t1):
            coeffs = [0] * n
            for j, c in enumerate(red.coeffs[i]):
                coeffs[self.U.pivots[j]] = int(c)
            primes.append(LinearForm(p, tuple(coeffs)))
        h = f
        for l, Q in zip(primes, self.A.Qs):
            h = h - l.as_polynomial() * Q
        qs, q0 = split_by_forms(h, list(self.A.ells))
        if q0.degree > 2:
            raise VerificationError("class decomposition left a cubic remainder")
        return primes, qs, q0


def class_reduce(f: Polynomial, A: ModSet) -> ClassReduction:
    return ClassSolver(A).reduce(f)


# ------------------------------------------------------------ rank_3^c


@dataclass(frozen=True, eq=False)
class Rank3cCertificate:
    """representative = sum l_i Q_i (r pairs) + sum a_k b_k c_k + Q0."""

    r: int
    c: int
    pairs: tuple
    triples: tuple
    Q0: Polynomial
    representative: Polynomial
    exactness: str = "upper_bound"
    overflow: bool = False

    @property
    def dim3c(self) -> int:
        vecs = [fm.coeffs for t in self.triples for fm in t]
        return rank(np.array(vecs), self.Q0.p) if vecs else 0

    def triple_forms(self) -> list[LinearForm]:
        forms = [fm.homogeneous() for t in self.triples for fm in t]
        return [forms[i] for i in _independent([fm.coeffs for fm in forms], self.Q0.p)]

    def reconstruct(self) -> Polynomial:
        total = self.Q0
        for l, Q in self.pairs:
            total = total + l.as_polynomial() * Q
        for a, b, c in self.triples:
            total = total + a.as_polynomial() * b.as_polynomial() * c.as_polynomial()
        return total

    def verify(self) -> bool:
        return (
            len(self.pairs) == self.r
            and len(self.triples) <= self.c
            and self.Q0.degree <= 2
            and self.reconstruct() == self.representative
        )

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "r": self.r,
            "c": self.c,
            "exactness": self.exactness,
            "overflow": self.overflow,
            "pairs": [{"ell": l.to_dict(), "Q": Q.to_dict()} for l, Q in self.pairs],
            "triples": [[fm.to_dict() for fm in t] for t in self.triples],
            "Q0": self.Q0.to_dict(),
            "representative": self.representative.to_dict(),
        }


def _split_pair(l: LinearForm, q: Polynomial) -> tuple[list, Polynomial]:
    """l * q as triple products of forms plus a quadratic remainder."""
    p, n = q.p, q.n
    if q.degree <= 1:
        return [], l.as_polynomial() * q
    D = dickson_canonicalize(q)
    zs = D.linear_forms()
    triples = []
    for i, a in enumerate(D.alphas):
        if not a % p:
            continue
        if D.shape == "char2_pairs":
            triples.append((l.scale(a), zs[2 * i], zs[2 * i + 1]))
        else:
            triples.append((l.scale(a), zs[i], zs[i]))
    return triples, l.as_polynomial() * D.residual_form().as_polynomial()


def _pair_cost(q: Polynomial) -> int:
    return 0 if q.degree <= 1 else rank2(q)


def _rank3c_from(residue: Polynomial, U: AffineSubspace, c: int) -> Rank3cCertificate:
    """Greedy split of one representative, given in U's parameters."""
    cert = rank3_upper(residue)
    pairs = [(U.lift_form(l), _lift(q, U)) for l, q in zip(cert.ells, cert.qs)]
    Q0 = _lift(cert.q0, U)
    costs = [_pair_cost(q) for _, q in pairs]
    used, triples, kept = 0, [], []
    for i in sorted(range(len(pairs)), key=lambda i: (costs[i], i)):
        if used + costs[i] <= c:
            tr, rest = _split_pair(*pairs[i])
            triples.extend(tr)
            Q0 = Q0 + rest
            used += costs[i]
        else:
            kept.append(i)
    kept.sort()
    return Rank3cCertificate(
        len(kept), c, tuple(pairs[i] for i in kept), tuple(triples), Q0, _lift(residue, U), "upper_bound", bool(kept)
    )


def rank3c_upper(f: Polynomial, A: ModSet, c: int, solver: ClassSolver | None = None) -> Rank3cCertificate:
    """Greedy rank_3^c of [f]_A.

    The representatives tried are the canonical residues modulo each prefix
    {Q_1..Q_k} u {l_i} of A, k = 0..t1 (k = 0 is f restricted to U); all
    lie in [f]_A, and the best greedy split wins. Cheapest pairs are split
    into triple products while the budget c lasts, and ``overflow`` means
    pairs remain because the budget ran out."""
    solver = solver or ClassSolver(A)
    red = solver.reduce(f)
    p, n = A.p, A.n
    if red.member:
        rep = red.representative
        return Rank3cCertificate(0, c, (), (), Polynomial.zero(p, n), rep, "exact", False)
    U = red.U
    options = [_rank3c_from(red.residue, U, c)]
    options += [_rank3c_from(solver.prefix(k).reduce(f).residue, U, c) for k in range(A.t1)]
    out = min(options, key=lambda ct: (ct.r, len(ct.triples)))
    if not out.verify():
        raise VerificationError("rank_3^c certificate does not reconstruct the representative")
    return out


# ------------------------------------------------------------ derivative bases


def quartic_derivative_profile(f: Polynomial) -> np.ndarray:
    """Flattening rank of the cubic part of Delta_y f for every y.

    For deg f = 4 that cubic part has tensor T4(y, ., ., .), linear in y, so
    the profile is subadditive; it bounds rank_3(Delta_y f) from above."""
    p, n = f.p, f.n
    T4 = derivative_tensor(f, 4).reshape(n, n**3)
    pts = all_points(p, n)
    out = np.zeros(len(pts), dtype=np.int64)
    step = max(1, (1 << 22) // max(1, n**4))
    for s in range(0, len(pts), step):
        mats = (pts[s : s + step] @ T4) % p
        out[s : s + step] = batch_rank(mats.reshape(-1, n, n * n), p) if n else 0
    return out


def good_subspace(f: Polynomial, density: float = 0.5):
    """Subspace of directions with bounded derivative rank: Bogolyubov-Chang on
    {y : profile(y) <= r} for the smallest r whose set has density > density."""
    profile = quartic_derivative_profile(f)
    N = profile.size
    for r in sorted(set(int(v) for v in profile)):
        if np.count_nonzero(profile <= r) > density * N:
            return subadditive_subspace(profile, f.p, f.n, r), profile
    raise AssertionError("unreachable: the largest value covers every point")


@dataclass(frozen=True, eq=False)
class DerivativeBasis:
    """For every y in the direction space of V, Delta_y(f|_V) lies in [0]_A,
    with A given in V's parameter coordinates."""

    f: Polynomial
    V: AffineSubspace
    A: ModSet
    c: int
    rounds: tuple
    metrics: dict = field(default_factory=dict)

    @property
    def t1(self) -> int:
        return self.A.t1

    @property
    def t2(self) -> int:
        return self.A.t2

    @property
    def Qs(self) -> list[Polynomial]:
        return [_lift(Q, self.V) for Q in self.A.Qs]

    @property
    def ells(self) -> list[LinearForm]:
        return [self.V.lift_form(l) for l in self.A.ells]

    def restricted(self) -> Polynomial:
        return restrict(self.f, self.V)

    def solver(self) -> ClassSolver:
        return ClassSolver(self.A)

    def decompose(self, y):
        """(l^y, Q^y, Q_0^y) for a direction given in V's parameters."""
        return self.solver().decompose(derivative(self.restricted(), y))

    def directions(self, seed=0) -> tuple[np.ndarray, str]:
        p, d = self.V.p, self.V.dim
        if p**d <= EXHAUSTIVE_DIRECTIONS:
            return all_points(p, d), "exhaustive"
        return as_rng(seed).integers(p, (SAMPLED_DIRECTIONS, d)), "sampled"

    def verify(self, seed=0) -> bool:
        # The cubic part of Delta_y g is linear in y, hence so is its residue
        # modulo [0]_A; residues along the unit directions give all the others.
        g = self.restricted()
        solver = self.solver()
        p, d = self.V.p, self.V.dim
        if d == 0:
            return True
        R = np.array([solver.residue_vector(derivative(g, e)) for e in np.eye(d, dtype=np.int64)], dtype=np.int64)
        ys, _ = self.directions(seed)
        for start in range(0, len(ys), 4096):
            if ((ys[start:start + 4096] @ R) % p).any():
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "V": self.V.to_dict(),
            "c": self.c,
            "t1": self.t1,
            "t2": self.t2,
            "Qs": [Q.to_dict() for Q in self.Qs],
            "ells": [l.to_dict() for l in self.ells],
            "rounds": list(self.rounds),
            "metrics": self.metrics,
        }


def _u4_metric(f: Polynomial, seed=0) -> tuple[float, str]:
    if f.p ** (3 * f.n) <= EXACT_U4_COST:
        return gowers_norm(f, 4).value, "exact"
    return gowers_norm(f, 4, samples=20000, seed=seed).value, "monte_carlo"


def derivative_basis(
    f: Polynomial, c: int = 1, V: AffineSubspace | None = None, seed=0, candidates: int = 8, u4_min: float | None = None
) -> DerivativeBasis:
    """A = {Q_i} u {l_i} with every derivative of f|_V in [0]_A.

    Rounds pick the candidate derivative (the directional derivatives along
    V's basis plus ``candidates`` seeded random ones) of largest rank_3^c
    modulo the current A. Type 1 adjoins its pair forms and its first
    quadratic cofactor; type 2 (no pairs left) adjoins its triple forms.
    With ``u4_min`` set, a measured U^4 norm below it is reported as a
    threshold diagnostic before any round runs."""
    if f.degree != 4:
        raise ValueError(f"expected a quartic, got degree {f.degree}")
    p, n = f.p, f.n
    metrics: dict = {}
    if V is None:
        sub, profile = good_subspace(f)
        V = sub.V
        metrics.update(profile_r=sub.r, profile_bound=sub.bound, profile_max_on_V=sub.max_on_V, k=sub.k)
    d = V.dim
    metrics["dim_V"] = d
    metrics["u4"], metrics["u4_method"] = _u4_metric(f, seed)
    if u4_min is not None and metrics["u4"] < u4_min:
        raise ThresholdError(
            f"measured U^4 = {metrics['u4']:.4f} is below {u4_min}", stage="u4", metrics=dict(metrics, u4_min=u4_min)
        )
    g = restrict(f, V)
    rng = as_rng(seed).spawn("derivative_basis")
    ys = [np.eye(d, dtype=np.int64)[j] for j in range(d)]
    ys += [rng.integers(p, d) for _ in range(candidates if d else 0)]
    cands = [derivative(g, y) for y in ys]

    A = ModSet(p, d)
    rounds: list[dict] = []
    guard = None
    while True:
        solver = ClassSolver(A)
        certs = [rank3c_upper(h, A, c, solver) for h in cands]
        best = max(range(len(certs)), key=lambda i: (certs[i].r, certs[i].dim3c, -i))
        cert = certs[best]
        if guard is None:
            metrics["r0"] = cert.r
            guard = cert.r + 3 * c + 8
        if cert.r == 0 and not cert.triples:
            break
        if len(rounds) >= guard:
            raise ThresholdError(
                f"derivative basis did not close within {guard} rounds",
                stage="derivative_basis",
                metrics=dict(metrics, rounds=len(rounds), t1=A.t1, t2=A.t2),
            )
        if cert.r > 0:
            kind = "pairs"
            new = A.extend(Qs=[cert.pairs[0][1]], ells=[l for l, _ in cert.pairs])
            info = {"type": 1, "r": cert.r, "candidate": best}
        else:
            kind = "triples"
            bound = 9 * c + A.t1 + A.t2
            low = min_combination_rank(list(A.Qs))[0] if A.Qs and d else math.inf
            new = A.extend(ells=cert.triple_forms())
            after = rank3c_upper(cands[best], new, c)
            info = {
                "type": 2,
                "dim3c_before": cert.dim3c,
                "dim3c_after": after.dim3c,
                "precondition_rank": None if math.isinf(low) else int(low),
                "precondition_bound": bound,
                "precondition_ok": bool(low > bound),
                "candidate": best,
            }
            if after.dim3c >= cert.dim3c:
                raise ThresholdError("type-2 round did not reduce dim_3^c", stage="derivative_basis", metrics=info)
        if new.t1 == A.t1 and new.t2 == A.t2:
            raise ThresholdError(f"round adjoined nothing new ({kind})", stage="derivative_basis", metrics=info)
        A = new
        info.update(t1=A.t1, t2=A.t2)
        rounds.append(info)
    metrics.update(t1=A.t1, t2=A.t2, rounds=len(rounds), guard=guard)
    metrics["precondition_ok"] = all(r.get("precondition_ok", True) for r in rounds)
    U = A.kernel()
    metrics["dim_U"] = U.dim
    if d and U.dim == 0:
        raise ThresholdError(
            "derivative basis is trivial: its linear forms span the whole subspace",
            stage="derivative_basis",
            metrics=metrics,
        )
    basis = DerivativeBasis(f, V, A, c, tuple(rounds), metrics)
    _, mode = basis.directions(seed)
    metrics["direction_check"] = mode
    if not basis.verify(seed):
        raise VerificationError("a derivative of f|_V is outside [0]_A")
    return basis


# ------------------------------------------------------------ degree-dropping partition


def _sqrt_mod(a: int, p: int) -> int | None:
    for x in range(p):
        if x * x % p == a % p:
            return x
    return None


def _nonresidue(p: int) -> int:
    return next(a for a in range(2, p) if _sqrt_mod(a, p) is None)


def affinizing_forms(q: Polynomial) -> list[LinearForm]:
    """Forms whose fixing makes q affine.

    Characteristic 2: one form from each Dickson pair. Odd p: squares are
    scaled to coefficient 1 or a fixed nonresidue, grouped into blocks of p
    with equal coefficient, and each block costs the p - 1 differences
    l_{b+j} - l_b (p equal squares sum to a multiple of p, leaving
    2 l_b * sum_j (l_{b+j} - l_b), which is affine once the differences are
    fixed). Leftover squares are fixed one by one."""
    p = q.p
    if q.degree <= 1:
        return []
    D = dickson_canonicalize(q)
    zs = D.linear_forms()
    if D.shape == "char2_pairs":
        return [zs[2 * i] for i, a in enumerate(D.alphas) if a % p]
    nu = _nonresidue(p)
    classes: dict[int, list[LinearForm]] = {1: [], nu: []}
    for i, a in enumerate(D.alphas):
        if not a % p:
            continue
        s = _sqrt_mod(a, p)
        if s is not None:
            classes[1].append(zs[i].scale(s))
        else:
            s = _sqrt_mod(a * pow(nu, p - 2, p), p)
            classes[nu].append(zs[i].scale(s))
    out = []
    for forms in classes.values():
        full = len(forms) // p * p
        for b in range(0, full, p):
            out.extend(forms[b + j] - forms[b] for j in range(1, p))
        out.extend(forms[full:])
    return out


@dataclass(frozen=True, eq=False)
class CellCertificate:
    index: int
    cell: AffineSubspace
    restriction: Polynomial

    @property
    def degree(self) -> int:
        return self.restriction.degree


@dataclass(frozen=True, eq=False)
class PartitionResult:
    f: Polynomial
    partition: SubspacePartition
    cells: tuple
    basis: DerivativeBasis | None
    metrics: dict = field(default_factory=dict)

    def verify(self) -> bool:
        if not self.partition.verify():
            return False
        return all(
            restrict(self.f, c.cell) == c.restriction and c.degree <= 3 for c in self.cells
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_index", "dim", "degree_of_restriction"])
        for c in self.cells:
            w.writerow([c.index, c.cell.dim, c.degree])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "p": self.f.p,
            "n": self.f.n,
            "ambient": self.partition.ambient.to_dict(),
            "cells": [
                {"index": c.index, "dim": c.cell.dim, "degree": c.degree, "cell": c.cell.to_dict(), "restriction": c.restriction.to_dict()}
                for c in self.cells
            ],
            "basis": None if self.basis is None else self.basis.to_dict(),
            "metrics": self.metrics,
        }


def partition_degree_drop(f: Polynomial, basis: DerivativeBasis | None = None, c: int = 1, seed=0) -> PartitionResult:
    """Partition V into cosets on which f has degree <= 3.

    Fix the basis forms l_i (outer cells), then for each Q_i in turn its
    affinizing forms on the current cell. On a final cell every l_i is
    constant and every Q_i affine, so each derivative of f there has degree
    <= 2."""
    p, n = f.p, f.n
    if f.degree <= 3:
        full = AffineSubspace.full(p, n)
        part = SubspacePartition(full, [full], [()])
        cells = (CellCertificate(0, full, f),)
        return PartitionResult(f, part, cells, None, {"cells": 1, "dims": [n]})
    if basis is None:
        basis = derivative_basis(f, c=c, seed=seed)
    V, A = basis.V, basis.A
    d = V.dim
    outer = coset_partition(AffineSubspace.full(p, d), list(A.ells))
    current = list(zip(outer.cells, outer.labels))
    for Q in A.Qs:
        nxt = []
        for cell, label in current:
            forms = [cell.lift_form(fm) for fm in affinizing_forms(restrict(Q, cell))]
            sub = coset_partition(cell, forms)
            nxt.extend((sc, tuple(label) + tuple(sl)) for sc, sl in zip(sub.cells, sub.labels))
        current = nxt
    cells, certs, labels = [], [], []
    for i, (cell, label) in enumerate(current):
        amb = V.compose(cell)
        h = restrict(f, amb)
        if h.degree > 3:
            raise VerificationError(f"cell {i} restriction has degree {h.degree}")
        cells.append(amb)
        labels.append(label)
        certs.append(CellCertificate(i, amb, h))
    part = SubspacePartition(V, cells, labels)
    if not part.verify():
        raise VerificationError("cells do not partition V")
    dims = [cl.dim for cl in cells]
    metrics = {
        "cells": len(cells),
        "dims": dims,
        "min_dim": min(dims),
        "dim_V": d,
        "t1": A.t1,
        "t2": A.t2,
        "max_degree": max(ct.degree for ct in certs),
    }
    if p == 2:
        metrics["dim_guarantee"] = (d - A.t2) / 2**A.t1
    return PartitionResult(f, part, tuple(certs), basis, metrics)


# ------------------------------------------------------------ structures


@dataclass
class ChartStack:
    """Nested subspaces, each given in the parameters of the previous one."""

    charts: list = field(default_factory=list)

    def push(self, W: AffineSubspace) -> "ChartStack":
        self.charts.append(W)
        return self

    def flatten(self) -> AffineSubspace:
        out = self.charts[0]
        for W in self.charts[1:]:
            out = out.compose(W)
        return out

    def to_dict(self) -> list:
        return [W.to_dict() for W in self.charts]


@dataclass(frozen=True, eq=False)
class QuarticStructure:
    """f = sum ells[i] * gs[i] + sum a * q * q' + g0, deg g_i <= 3, deg g0 <= 3."""

    p: int
    n: int
    variant: str
    ells: tuple
    gs: tuple
    products: tuple   # (a, q, q')
    g0: Polynomial
    metrics: dict = field(default_factory=dict)
    charts: ChartStack | None = None

    @property
    def c(self) -> int:
        return len(self.ells)

    def paired(self) -> list[tuple[Polynomial, Polynomial]]:
        """Products grouped as q_j * q'_j with one q per distinct left factor."""
        groups: dict = {}
        order = []
        for a, q, q2 in self.products:
            key = q.to_json()
            if key not in groups:
                groups[key] = [q, Polynomial.zero(self.p, self.n)]
                order.append(key)
            groups[key][1] = groups[key][1] + q2.scale(a)
        return [tuple(groups[k]) for k in order]

    def reconstruct(self) -> Polynomial:
        total = self.g0
        for l, g in zip(self.ells, self.gs):
            total = total + l.as_polynomial() * g
        for a, q, q2 in self.products:
            total = total + (q * q2).scale(a)
        return total

    def verify(self, f: Polynomial, seed=0) -> bool:
        if len(self.ells) != len(self.gs) or any(g.degree > 3 for g in self.gs) or self.g0.degree > 3:
            return False
        if any(q.degree > 2 or q2.degree > 2 for _, q, q2 in self.products):
            return False
        rec = self.reconstruct()
        if self.p**self.n <= 1 << 16:
            return bool(np.array_equal(rec.table(), f.table()))
        pts = as_rng(seed).integers(self.p, (10**4, self.n))
        return bool(np.array_equal(rec.evaluate_many(pts), f.evaluate_many(pts)))

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "variant": self.variant,
            "p": self.p,
            "n": self.n,
            "c": self.c,
            "ells": [l.to_dict() for l in self.ells],
            "gs": [g.to_dict() for g in self.gs],
            "products": [{"a": a, "q": q.to_dict(), "q_prime": q2.to_dict()} for a, q, q2 in self.products],
            "g0": self.g0.to_dict(),
            "charts": None if self.charts is None else self.charts.to_dict(),
            "metrics": self.metrics,
        }


def _trivial_structure(f: Polynomial, variant: str) -> QuarticStructure:
    return QuarticStructure(f.p, f.n, variant, (), (), (), f, {"c": 0, "products": 0})


def _emit(f: Polynomial, W: AffineSubspace, products: list, rest: Polynomial, variant: str, metrics: dict, charts: ChartStack) -> QuarticStructure:
    """Split f - products - rest along the equations of W; the remainder must
    vanish on W, so everything lands in sum l_i g_i."""
    h = f - rest
    for a, q, q2 in products:
        h = h - (q * q2).scale(a)
    ells = equation_forms(W)
    gs, g0 = split_by_forms(h, ells)
    out = QuarticStructure(f.p, f.n, variant, tuple(ells), tuple(gs), tuple(products), rest + g0, metrics, charts)
    return out


def plurality_error(values: np.ndarray, features: np.ndarray, p: int) -> tuple[int, np.ndarray]:
    """Errors of the plurality decoder values ~ H(features) and the decoded
    value for each row."""
    if features.shape[1] == 0:
        labels = np.zeros(len(values), dtype=np.int64)
    else:
        _, labels = np.unique(features, axis=0, return_inverse=True)
        labels = labels.reshape(-1)
    k = int(labels.max()) + 1 if labels.size else 0
    counts = np.bincount(labels * p + values, minlength=k * p).reshape(k, p)
    best = counts.argmax(axis=1)
    errors = int(len(values) - counts.max(axis=1).sum())
    return errors, best[labels]


def _derivative_table(table: np.ndarray, a: np.ndarray, p: int, d: int) -> np.ndarray:
    x = np.arange(p**d, dtype=np.int64)
    a_idx = int(np.dot(a, p ** np.arange(d)))
    return (table[add_indices(x, a_idx, p, d)] - table) % p


def approximate_by_derivatives(g: Polynomial, seed=0, target: float = EPS_TARGET) -> dict:
    """Directions a_1..a_t with g = H(Delta_{a_1} g, ..., Delta_{a_t} g) up to
    error <= target, H the plurality decoder. t doubles from 2 for up to
    ``BV_RETRIES`` retries; redundant directions are then pruned."""
    p, d = g.p, g.n
    table = g.table().astype(np.int64)
    N = p**d
    rng = as_rng(seed).spawn("bogdanov_viola")
    t = 2
    history = []
    for attempt in range(BV_RETRIES + 1):
        dirs = rng.integers(p, (t, d)) if d else np.zeros((t, 0), dtype=np.int64)
        feats = np.stack([_derivative_table(table, a, p, d) for a in dirs], axis=1)
        errors, _ = plurality_error(table, feats, p)
        history.append({"t": t, "eps": errors / N})
        if errors / N <= target:
            keep = list(range(t))
            for i in reversed(range(t)):
                trial = [j for j in keep if j != i]
                if plurality_error(table, feats[:, trial], p)[0] <= errors:
                    keep = trial
            return {"directions": dirs[keep], "eps": errors / N, "t": len(keep), "history": history}
        t *= 2
    raise ThresholdError(
        f"no derivative approximation reached eps <= {target:g}",
        stage="approximation",
        metrics={"history": history},
    )


def quartic_bias_structure(f: Polynomial, delta_hint: float | None = None, seed=0, r: int | None = None) -> QuarticStructure:
    """f = sum l_i g_i + sum a_ij Q_i Q_j + g0 for a biased quartic.

    Stages: a coset of a subspace of low-rank derivatives with the largest
    bias; a plurality-decoder approximation of f by few derivatives; a coset
    U of the derivatives' linear forms on which those derivatives are
    quadratics P_k and f = H(P); regularization and disjointification of the
    P_k; an exact table fit f = F(disjoint forms) with deg F <= 2; the
    remainder split along the equations of the final subspace."""
    p, n = f.p, f.n
    if f.degree <= 3:
        return _trivial_structure(f, "bias_form")
    if f.degree > 4:
        raise ValueError(f"expected degree <= 4, got {f.degree}")
    delta, method = measured_bias(f, seed)
    floor = bias_threshold(p, n) if delta_hint is None else float(delta_hint)
    if delta < floor or delta == 0.0:
        raise ThresholdError(
            f"bias {delta:.4g} is below the pipeline threshold {floor:.4g}",
            stage="bias",
            metrics={"bias": delta, "method": method, "threshold": floor},
        )
    metrics: dict = {"bias": delta, "bias_method": method, "threshold": floor}
    charts = ChartStack()

    # (1) directions with low-rank derivatives, then the most biased coset
    profile = quartic_derivative_profile(f)
    frac = delta**2 / 2
    r_good = next(v for v in sorted(set(int(x) for x in profile)) if np.count_nonzero(profile <= v) >= frac * profile.size)
    sub = subadditive_subspace(profile, p, n, r_good)
    forms, _ = sub.V.equations()
    best = None
    for cell in coset_partition(AffineSubspace.full(p, n), forms).cells:
        b = measured_bias(restrict(f, cell), seed)[0]
        if best is None or b > best[0] + 1e-12:
            best = (b, cell)
    V1 = best[1]
    charts.push(V1)
    ft = restrict(f, V1)
    metrics.update(profile_r=r_good, profile_bound=sub.bound, codim_V=V1.codim, coset_bias=best[0])

    # (2) approximation by derivatives
    bv = approximate_by_derivatives(ft, seed)
    dirs = bv["directions"]
    metrics.update(eps=bv["eps"], t=bv["t"], bv_history=bv["history"])
    ders = [derivative(ft, a) for a in dirs]
    lin: list[LinearForm] = []
    for D in ders:
        lin.extend(rank3_upper(D).ells)
    d = ft.n
    table = ft.table().astype(np.int64)
    best = None
    for cell in coset_partition(AffineSubspace.full(p, d), lin).cells:
        Ps = [restrict(D, cell) for D in ders]
        if any(P.degree > 2 for P in Ps):
            raise VerificationError("a derivative is not quadratic on its coset")
        feats = np.stack([P.table() for P in Ps], axis=1) if Ps else np.zeros((p**cell.dim, 0), dtype=np.int64)
        err = plurality_error(restrict(ft, cell).table().astype(np.int64), feats, p)[0]
        if best is None or err < best[0]:
            best = (err, cell, Ps)
    err, U, Ps = best
    charts.push(U)
    metrics.update(codim_U=U.codim, coset_errors=err, n_linear=len(lin))

    # (3) regularize and disjointify the derivatives on U
    index = {m: i for i, m in enumerate(monomials(p, U.dim, 2, 1))}
    Ps = [Ps[i] for i in _independent([_vector(P, index) for P in Ps], p)]
    r_reg = max(1, math.floor(math.log(2 / delta, p) + 1e-12)) if r is None else int(r)
    metrics.update(r_regularize=r_reg, n_quadratics=len(Ps))
    W = AffineSubspace.full(p, U.dim)
    kept: list[Polynomial] = []
    if Ps and U.dim:
        reg = regularize(Ps, r_reg)
        W = reg.V
        kept = reg.kept
    charts.push(W)
    fW = _restrict(ft, U.compose(W))
    if fit_composition(fW, kept) is None:
        raise VerificationError("table fit on the regularized quadratics is inconsistent")
    quad = [q for q in kept if q.degree == 2]
    if quad:
        fam = disjointify(quad)
        Tinv = inverse(fam.T, p)
        D_forms, T = list(fam.forms), fam.T
        W2 = fam.V
    else:
        fam, D_forms, T, Tinv = None, [], np.eye(W.dim, dtype=np.int64), np.eye(W.dim, dtype=np.int64)
        W2 = AffineSubspace.full(p, W.dim)
    charts.push(W2)
    phi = _restrict(fW, W2).substitute(T) if W2.dim else _restrict(fW, W2)

    # (4) exact fit on the disjoint forms
    F = fit_composition(phi, D_forms)
    if F is None:
        raise VerificationError("table fit on the disjoint quadratics is inconsistent")
    if F.degree > 2:
        raise VerificationError(f"fitted F has degree {F.degree} > 2")
    check = poly_of_disjoint_is_low_degree(F, D_forms, phi) if D_forms else None
    metrics.update(deg_F=F.degree, disjoint_lemma=None if check is None else bool(check), n_disjoint=len(D_forms))

    # (5) emit
    Wamb = charts.flatten()
    lifted = [_lift(D.substitute(Tinv), Wamb) for D in D_forms]
    products, rest = [], Polynomial.zero(p, n)
    for mono, coef in F.terms.items():
        factors = [lifted[i] for i, e in enumerate(mono) for _ in range(e)]
        if len(factors) == 2:
            products.append((int(coef), factors[0], factors[1]))
        elif len(factors) == 1:
            rest = rest + factors[0].scale(coef)
        else:
            rest = rest + Polynomial.constant(p, n, coef)
    metrics.update(c=Wamb.codim, products=len(products))
    out = _emit(f, Wamb, products, rest, "bias_form", metrics, charts)
    if not out.verify(f, seed):
        raise VerificationError("bias-form quartic structure does not reconstruct f")
    return out


def quartic_highchar_structure(f: Polynomial, basis: DerivativeBasis | None = None, c: int = 1, seed=0) -> QuarticStructure:
    """f = sum a_ij q_i q_j + sum y_i g_i + g0 over p >= 5.

    The basis quadratics are made disjoint on U = {l_i = 0}, each having a
    designated square u_k^2. The coefficient of u_k^2 u_j^2 in f fixes a_kj;
    after subtracting the products, fixing the designated variables (and
    the forms cutting out the disjoint subspace) must leave degree <= 3."""
    p, n = f.p, f.n
    if p < 5:
        raise ValueError("the high-characteristic structure needs p >= 5")
    if f.degree <= 3:
        return _trivial_structure(f, "highchar_form")
    if basis is None:
        basis = derivative_basis(f, c=c, seed=seed)
    V, A = basis.V, basis.A
    charts = ChartStack([V])
    U = A.kernel()
    charts.push(U)
    g = restrict(f, V.compose(U))
    quad = [q for q in (restrict(Q, U) for Q in A.Qs) if q.degree == 2]
    products_u: list = []
    if quad:
        fam = disjointify(quad)
        W, T = fam.V, fam.T
        phi = restrict(g, W).substitute(T)
        designated = [fam.pairs[k][0] for k in fam.active]
        forms = [fam.forms[k] for k in fam.active]
        k_dim = W.dim
        for x in range(len(designated)):
            for y in range(x, len(designated)):
                e = [0] * k_dim
                e[designated[x]] += 2
                e[designated[y]] += 2
                a = phi.coefficient(e)
                if a:
                    products_u.append((a, x, y))
        Tinv = inverse(T, p)
    else:
        W, designated, forms, Tinv = AffineSubspace.full(p, U.dim), [], [], np.eye(U.dim, dtype=np.int64)
        T = Tinv
        phi = g
    charts.push(W)
    # the designated variables, as forms in W's canonical parameters
    Z = kernel_of([LinearForm(p, tuple(int(v) for v in Tinv[:, a])) for a in designated], p=p, n=W.dim)
    charts.push(Z)
    Wamb = ChartStack(charts.charts[:3]).flatten()
    lifted = [_lift(D.substitute(Tinv), Wamb) for D in forms]
    products = [(int(a), lifted[x], lifted[y]) for a, x, y in products_u]
    Zamb = charts.flatten()
    residual = f
    for a, q, q2 in products:
        residual = residual - (q * q2).scale(a)
    top = restrict(residual, Zamb)
    if top.degree > 3:
        mono = next(m for m, _ in top.sorted_terms() if sum(m) > 3)
        raise ThresholdError(
            f"monomial elimination left a degree-{sum(mono)} term {Polynomial.monomial(p, mono).pretty('z')} on the bookkeeping subspace",
            stage="highchar_elimination",
            metrics={"monomial": list(mono)},
        )
    metrics = dict(
        t1=A.t1,
        t2=A.t2,
        dim_V=V.dim,
        dim_U=U.dim,
        dim_W=W.dim,
        R=Zamb.codim,
        r=len(products),
        designated=len(designated),
    )
    out = _emit(f, Zamb, products, Polynomial.zero(p, n), "highchar_form", metrics, charts)
    if not out.verify(f, seed):
        raise VerificationError("high-characteristic structure does not reconstruct f")
    return out


# ------------------------------------------------------------ the S_4 example


def _bilinear_sum(n: int, y) -> Polynomial:
    """sum_{i != j} x_i y_j as a linear form in x."""
    sy = sum(int(v) for v in y) % 2
    return Polynomial.linear(2, [(sy - int(v)) % 2 for v in y])


def s4_derivative_remainder(n: int, y) -> Polynomial:
    """Delta_y S_4 - S_2 * sum_{i != j} x_i y_j, which has degree <= 2: the
    cubic part of every derivative is S_2 times a linear form."""
    S4, S2 = elementary_symmetric(2, n, 4), elementary_symmetric(2, n, 2)
    return derivative(S4, y) - S2 * _bilinear_sum(n, y)


def s4_display_form(n: int, y) -> Polynomial:
    """(S_2 + S_1 + 1) * sum_{i != j} x_i y_j, the three-term derivative
    formula read literally with the same bilinear sum in every slot."""
    S1, S2 = elementary_symmetric(2, n, 1), elementary_symmetric(2, n, 2)
    return (S2 + S1 + 1) * _bilinear_sum(n, y)


def s2_pairing(m: int) -> tuple[list[Polynomial], Polynomial]:
    """l_k = x_1 + ... + x_{2k-1} and the right-hand side
    sum_k l_k (x_{2k} + x_1 + ... + x_{2k-2}) + sum_i (x_{4i-3} + x_{4i-2})."""
    n = 4 * m
    X = [Polynomial.variable(2, n, i) for i in range(n)]
    zero = Polynomial.zero(2, n)
    ells, rhs = [], zero
    for k in range(1, 2 * m + 1):
        l = sum(X[: 2 * k - 1], zero)
        ells.append(l)
        rhs = rhs + l * (X[2 * k - 1] + sum(X[: 2 * k - 2], zero))
    for i in range(1, m + 1):
        rhs = rhs + X[4 * i - 4] + X[4 * i - 3]
    return ells, rhs


def v0_parametrization(m: int) -> np.ndarray:
    """Rows map (y_1..y_2m) to (0, y_1, y_1, ..., y_{2m-1}, y_{2m-1}, y_2m)."""
    n = 4 * m
    M = np.zeros((2 * m, n), dtype=np.int64)
    for j in range(1, 2 * m):
        M[j - 1, 2 * j - 1] = M[j - 1, 2 * j] = 1
    M[2 * m - 1, n - 1] = 1
    return M


def s4_case_study(m: int, strict: bool = True) -> dict:
    if not 1 <= m <= 3:
        raise ValueError("m must be 1, 2 or 3")
    n = 4 * m
    S4 = elementary_symmetric(2, n, 4)
    S2 = elementary_symmetric(2, n, 2)
    pts = all_points(2, n)
    der_ok = all(s4_derivative_remainder(n, y).degree <= 2 for y in pts)
    display_hits = sum(derivative(S4, y) == s4_display_form(n, y) for y in pts)
    ells, rhs = s2_pairing(m)
    s2_ok = S2 == rhs
    restricted = S4.substitute(v0_parametrization(m))
    target = elementary_symmetric(2, 2 * m - 1, 2).rename(2 * m, list(range(2 * m - 1)))
    v0_ok = restricted == target
    forms = [LinearForm.from_polynomial(l) for l in ells]
    degrees = []
    for vals in all_points(2, 2 * m):
        cell = kernel_of(forms, [int(v) for v in vals], p=2, n=n)
        degrees.append(restrict(S4, cell).degree)
    cosets_ok = max(degrees) <= 2
    report = {
        "m": m,
        "n": n,
        "identities": {
            "derivative": der_ok,
            "s2_pairing": s2_ok,
            "v0_restriction": v0_ok,
            "coset_degrees": cosets_ok,
        },
        "coset_degrees": degrees,
        "display_formula_hits": int(display_hits),
        "directions": len(pts),
        "v0_restriction": restricted.to_dict(),
    }
    report["passed"] = all(report["identities"].values())
    if strict and not report["passed"]:
        failed = [k for k, v in report["identities"].items() if not v]
        raise VerificationError(f"S_4 identities failed: {', '.join(failed)}")
    return report
