"""Quadratic polynomials as matrices.

Dickson canonical forms, rank_2, regularization of quadratic families,
disjointification and strong-regularity measurement.

Matrix conventions: over F_2 a quadratic part is stored as a strictly upper
triangular A with q2(x) = sum_{i<j} A[i,j] x_i x_j; over odd p it is the
symmetric S with q2(x) = x^T S x. Changes of basis act on column vectors,
so ``compose_affine(q, T)`` is q(Tz).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .analytic import add_indices, batch_rank, joint_fraction_from_tables
from .errors import ResourceLimitError, VerificationError
from .ffpoly import Polynomial, all_points, compose_affine, encode
from .linalg import inverse, nullspace, rank, solve
from .rng import as_rng
from .subspace import AffineSubspace, LinearForm, kernel_of, restrict

COMBINATION_GUARD = 1 << 20
REGULARITY_GUARD = 1 << 22


def _check_quadratic(q: Polynomial):
    if q.degree > 2:
        raise ValueError(f"expected a polynomial of degree <= 2, got degree {q.degree}")


# ------------------------------------------------------------ QuadraticForm


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """q(x) = x^T A x + linear(x) + constant."""

    p: int
    A: np.ndarray
    linear: LinearForm

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def constant(self) -> int:
        return self.linear.constant

    @classmethod
    def from_polynomial(cls, q: Polynomial) -> "QuadraticForm":
        _check_quadratic(q)
        p, n = q.p, q.n
        A = np.zeros((n, n), dtype=np.int64)
        half = pow(2, p - 2, p) if p > 2 else 0
        for exps, c in q.terms.items():
            if sum(exps) != 2:
                continue
            idx = [i for i, e in enumerate(exps) for _ in range(e)]
            i, j = idx
            if i == j:
                A[i, i] = c
            elif p == 2:
                A[i, j] = c
            else:
                A[i, j] = A[j, i] = (c * half) % p
        lin = q.linear_coefficients()
        return cls(p, A, LinearForm(p, tuple(int(v) for v in lin), q.constant_term))

    def quadratic_part(self) -> Polynomial:
        p, n = self.p, self.n
        terms = {}
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    c = self.A[i, i] if p > 2 else 0
                elif p == 2:
                    c = self.A[i, j] + self.A[j, i]
                else:
                    c = self.A[i, j] + self.A[j, i]
                if c % p:
                    e = [0] * n
                    e[i] += 1
                    e[j] += 1
                    terms[tuple(e)] = int(c % p)
        return Polynomial(p, n, terms)

    def as_polynomial(self) -> Polynomial:
        return self.quadratic_part() + self.linear.as_polynomial()

    def polar(self) -> np.ndarray:
        """A + A^T, the matrix of the bilinear form (x, y) -> q2(x+y) - q2(x) - q2(y)."""
        return (self.A + self.A.T) % self.p

    def symmetric(self) -> np.ndarray:
        """Symmetric matrix of the quadratic part (odd p only)."""
        if self.p == 2:
            raise ValueError("no symmetric representation in characteristic 2")
        return self.A % self.p


def polar_matrix(q: Polynomial) -> np.ndarray:
    return QuadraticForm.from_polynomial(q).polar()


def representing_matrix(q: Polynomial) -> np.ndarray:
    return QuadraticForm.from_polynomial(q).A


# ------------------------------------------------------------ Dickson form


@dataclass(frozen=True, eq=False)
class DicksonForm:
    """q(T z) = sum alpha_i z_{2i-1} z_{2i} + residual   (characteristic 2)
    q(T z) = sum alpha_i z_i^2 + residual              (odd characteristic)

    ``residual_linear`` carries the affine remainder (with constant)."""

    p: int
    T: np.ndarray
    alphas: tuple[int, ...]
    shape: str
    residual_linear: LinearForm

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def rank(self) -> int:
        return sum(1 for a in self.alphas if a % self.p)

    def canonical_polynomial(self) -> Polynomial:
        """The right-hand side, a polynomial in z."""
        p, n = self.p, self.n
        terms = {}
        for i, a in enumerate(self.alphas):
            e = [0] * n
            if self.shape == "char2_pairs":
                e[2 * i] = e[2 * i + 1] = 1
            else:
                e[i] = 2
            terms[tuple(e)] = a
        return Polynomial(p, n, terms) + self.residual_linear.as_polynomial()

    def recompose(self) -> Polynomial:
        """canonical(T^{-1} x), equal to the original q."""
        return compose_affine(self.canonical_polynomial(), inverse(self.T, self.p))

    def linear_forms(self) -> list[LinearForm]:
        """z_k as linear forms in the original coordinates (rows of T^{-1})."""
        Tinv = inverse(self.T, self.p)
        return [LinearForm(self.p, tuple(int(c) for c in row)) for row in Tinv]

    def residual_form(self) -> LinearForm:
        """The residual linear part expressed in original coordinates."""
        Tinv = inverse(self.T, self.p)
        v = (self.residual_linear.vector() @ Tinv) % self.p
        return LinearForm(self.p, tuple(int(c) for c in v), self.residual_linear.constant)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "p": self.p,
            "n": self.n,
            "shape": self.shape,
            "T": self.T.tolist(),
            "alphas": list(self.alphas),
            "rank2": self.rank,
            "residual_linear": self.residual_linear.to_dict(),
        }


def _symplectic_basis(B: np.ndarray, p: int) -> tuple[list[np.ndarray], int]:
    """Columns u1, v1, ..., ur, vr, radical... with B(u_i, v_i) = 1 and all
    other pairings zero. Lowest index pairs are taken first."""
    n = B.shape[0]
    work = [np.eye(n, dtype=np.int64)[:, i] for i in range(n)]
    out: list[np.ndarray] = []
    pairs = 0
    while True:
        found = None
        for a in range(len(work)):
            for b in range(a + 1, len(work)):
                if int(work[a] @ B @ work[b]) % p:
                    found = (a, b)
                    break
            if found:
                break
        if found is None:
            break
        a, b = found
        u, v = work[a], work[b]
        buv = int(u @ B @ v) % p
        v = (v * pow(buv, p - 2, p)) % p
        rest = []
        for k, w in enumerate(work):
            if k in (a, b):
                continue
            wv = int(w @ B @ v) % p
            wu = int(w @ B @ u) % p
            rest.append((w - wv * u + wu * v) % p)
        out += [u, v]
        pairs += 1
        work = rest
    return out + work, pairs


def _congruence_diagonalize(S: np.ndarray, p: int) -> np.ndarray:
    """T with T^T S T diagonal, nonzero entries first."""
    n = S.shape[0]
    T = np.eye(n, dtype=np.int64)
    for k in range(n):
        M = (T.T @ S @ T) % p
        diag = [j for j in range(k, n) if M[j, j]]
        if not diag:
            off = [(j, l) for j in range(k, n) for l in range(j + 1, n) if M[j, l]]
            if not off:
                break
            j, l = off[0]
            T[:, j] = (T[:, j] + T[:, l]) % p
            M = (T.T @ S @ T) % p
            diag = [j]
        j = diag[0]
        if j != k:
            T[:, [k, j]] = T[:, [j, k]]
            M = (T.T @ S @ T) % p
        inv = pow(int(M[k, k]), p - 2, p)
        for l in range(k + 1, n):
            if M[k, l]:
                T[:, l] = (T[:, l] - (M[k, l] * inv) * T[:, k]) % p
    return T % p


def dickson_canonicalize(q: Polynomial, verify: bool = True) -> DicksonForm:
    _check_quadratic(q)
    p, n = q.p, q.n
    Q = QuadraticForm.from_polynomial(q)
    if p == 2:
        cols, r = _symplectic_basis(Q.polar(), p)
        T = np.array(cols, dtype=np.int64).T.reshape(n, n) % p
        alphas = (1,) * r
        shape = "char2_pairs"
    else:
        T = _congruence_diagonalize(Q.symmetric(), p)
        D = (T.T @ Q.symmetric() @ T) % p
        alphas = tuple(int(D[i, i]) for i in range(n) if D[i, i])
        shape = "oddchar_squares"
    g = compose_affine(q, T)
    residual = g.truncate(1)
    form = DicksonForm(p, T, alphas, shape, LinearForm.from_polynomial(residual))
    if verify and form.canonical_polynomial() != g:
        raise VerificationError("Dickson canonical form does not match q(Tz)")
    return form


def rank2(q: Polynomial) -> int:
    """Number of nonzero alphas in the Dickson form of q."""
    return dickson_canonicalize(q).rank


def rank2_fast(q: Polynomial) -> int:
    """rank_2 from a single matrix rank: rank(A + A^T)/2 over F_2, rank(S) otherwise."""
    _check_quadratic(q)
    Q = QuadraticForm.from_polynomial(q)
    if q.p == 2:
        return rank(Q.polar(), 2) // 2
    return rank(Q.symmetric(), q.p)


def _rank_matrices(qs: Sequence[Polynomial]) -> np.ndarray:
    mats = []
    for q in qs:
        Q = QuadraticForm.from_polynomial(q)
        mats.append(Q.polar() if q.p == 2 else Q.symmetric())
    return np.array(mats, dtype=np.int64)


def projective_vectors(p: int, m: int) -> np.ndarray:
    """Nonzero vectors of F_p^m whose first nonzero entry is 1, little-endian order."""
    pts = all_points(p, m)[1:]
    first = np.argmax(pts != 0, axis=1)
    return pts[pts[np.arange(len(pts)), first] == 1]


def combination_ranks(qs: Sequence[Polynomial], coeffs: np.ndarray) -> np.ndarray:
    """rank_2 of sum_i coeffs[k, i] q_i for every row k."""
    p = qs[0].p
    mats = _rank_matrices(qs)
    out = np.zeros(len(coeffs), dtype=np.int64)
    step = 4096
    for s in range(0, len(coeffs), step):
        c = np.asarray(coeffs[s : s + step], dtype=np.int64)
        combo = np.tensordot(c, mats, axes=(1, 0)) % p
        r = batch_rank(combo, p)
        out[s : s + step] = r // 2 if p == 2 else r
    return out


def min_combination_rank(qs: Sequence[Polynomial]) -> tuple[int, tuple[int, ...]]:
    """Minimum rank_2 over nontrivial combinations, with a witness vector.

    Rank is invariant under scaling, so only vectors with leading
    coefficient 1 are swept; the first minimiser in little-endian order wins."""
    qs = list(qs)
    if not qs:
        raise ValueError("need at least one quadratic")
    for q in qs:
        _check_quadratic(q)
    p, m = qs[0].p, len(qs)
    if p**m > COMBINATION_GUARD:
        raise ResourceLimitError(f"{p}^{m} combinations exceed the sweep guard")
    coeffs = projective_vectors(p, m)
    ranks = combination_ranks(qs, coeffs)
    k = int(np.argmin(ranks))
    return int(ranks[k]), tuple(int(c) for c in coeffs[k])


# ------------------------------------------------------------ regularization


def span_coefficients(target: Polynomial, basis: Sequence[Polynomial], affine: bool = False):
    """Solve target = c0 + sum c_j basis[j] (+ a linear form when ``affine``).

    Returns (c0, [c_j], linear coefficient list or None) or None if impossible."""
    p, n = target.p, target.n
    cols = [list(b.terms.items()) for b in basis]
    monos = set(target.terms)
    for b in basis:
        monos |= set(b.terms)
    if affine:
        monos |= {tuple(int(i == j) for i in range(n)) for j in range(n)}
    monos.discard((0,) * n)
    monos = sorted(monos)
    if not monos:
        return target.constant_term, [0] * len(basis), ([0] * n if affine else None)
    row = {mo: i for i, mo in enumerate(monos)}
    extra = n if affine else 0
    M = np.zeros((len(monos), len(basis) + extra), dtype=np.int64)
    for j, items in enumerate(cols):
        for mo, c in items:
            if mo in row:
                M[row[mo], j] = c
    for j in range(extra):
        M[row[tuple(int(i == j) for i in range(n))], len(basis) + j] = 1
    rhs = np.array([target.terms.get(mo, 0) for mo in monos], dtype=np.int64)
    sol = solve(M, rhs, p)
    if sol is None:
        return None
    coeffs = [int(c) for c in sol[: len(basis)]]
    lin = [int(c) for c in sol[len(basis) :]] if affine else None
    rest = target - sum((b.scale(c) for b, c in zip(basis, coeffs)), Polynomial.zero(p, n))
    if lin is not None:
        rest = rest - Polynomial.linear(p, lin)
    if not rest.is_constant:
        raise VerificationError("span solve left a nonconstant remainder")
    return rest.constant_term, coeffs, lin


@dataclass(frozen=True, eq=False)
class RegularizedFamily:
    """Output of ``regularize``.

    ``V`` is the representative shift on which the certificate holds;
    ``span`` maps each discarded index to (constant, coefficients on kept)."""

    qs: tuple
    V: AffineSubspace
    kept_indices: tuple[int, ...]
    r: int
    r_min: float
    span: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)

    @property
    def restricted(self) -> list[Polynomial]:
        return [restrict(q, self.V) for q in self.qs]

    @property
    def kept(self) -> list[Polynomial]:
        rs = self.restricted
        return [rs[i] for i in self.kept_indices]

    def verify(self) -> bool:
        rs = self.restricted
        kept = [rs[i] for i in self.kept_indices]
        for i, q in enumerate(rs):
            if i in self.kept_indices:
                continue
            sol = span_coefficients(q, kept)
            if sol is None:
                return False
        if kept:
            r_min, _ = min_combination_rank(kept)
            if r_min <= self.r:
                return False
        return self.V.dim >= self.V.n - len(self.qs) * (self.r + 1)

    def to_dict(self) -> dict:
        return {
            "V": self.V.to_dict(),
            "kept_indices": list(self.kept_indices),
            "r": self.r,
            "r_min": None if math.isinf(self.r_min) else self.r_min,
            "span": {str(k): {"constant": v[0], "coeffs": v[1]} for k, v in self.span.items()},
        }


def low_rank_kernel(q: Polynomial) -> AffineSubspace:
    """Linear subspace on which q is constant: the zero set of l_0 and one
    form per Dickson pair (all square forms over odd p)."""
    D = dickson_canonicalize(q)
    zs = D.linear_forms()
    if D.shape == "char2_pairs":
        fixed = [zs[2 * i + 1] for i in range(D.rank)]
    else:
        fixed = zs[: D.rank]
    l0 = D.residual_form().homogeneous()
    if any(l0.coeffs):
        fixed.append(l0)
    return kernel_of(fixed, p=q.p, n=q.n)


def regularize(qs: Sequence[Polynomial], r: int, shift=None) -> RegularizedFamily:
    """Pass to a subspace on which every nontrivial combination of the kept
    quadratics has rank_2 > r and the discarded ones are spanned by the kept
    ones and constants.

    ``shift`` (an ambient point) selects a translate of the constructed
    linear subspace as the representative; default is the subspace itself."""
    if r < 1:
        raise ValueError("target rank must be >= 1")
    qs = tuple(qs)
    if not qs:
        raise ValueError("need at least one quadratic")
    p, n = qs[0].p, qs[0].n
    for q in qs:
        _check_quadratic(q)
    V = AffineSubspace.full(p, n)
    alive = list(range(len(qs)))
    steps = []
    while alive:
        local = [restrict(qs[i], V) for i in alive]
        if V.dim == 0:
            low, witness = 0, (1,) + (0,) * (len(alive) - 1)
        else:
            low, witness = min_combination_rank(local)
        if low > r:
            break
        last = max(k for k, c in enumerate(witness) if c)
        scale = pow(witness[last], p - 2, p)
        alpha = [(c * scale) % p for c in witness]
        combo = sum((g.scale(a) for g, a in zip(local, alpha)), Polynomial.zero(p, V.dim))
        W = low_rank_kernel(combo) if V.dim else AffineSubspace.full(p, 0)
        V = V.compose(W)
        steps.append({"discarded": alive[last], "combination": [int(a) for a in alpha], "rank": low})
        del alive[last]
    if shift is not None:
        V = V.translate(shift)
    rs = [restrict(q, V) for q in qs]
    kept = [rs[i] for i in alive]
    span = {}
    for i in range(len(qs)):
        if i in alive:
            continue
        sol = span_coefficients(rs[i], kept)
        if sol is None:
            raise VerificationError(f"q_{i} is not spanned by the kept quadratics on V")
        span[i] = (int(sol[0]), sol[1])
    r_min = min_combination_rank(kept)[0] if kept and V.dim else math.inf
    if kept and r_min <= r:
        raise VerificationError("regularized family still has a low-rank combination")
    return RegularizedFamily(qs, V, tuple(alive), r, r_min, span, steps)


# ------------------------------------------------------------ disjointness


@dataclass(frozen=True, eq=False)
class DisjointFamily:
    """Quadratics in disjoint shape on a subspace.

    Coordinates u of length k = dim(V) are related to the canonical
    parameters c of V by c = u T; forms[i] is a polynomial in u with
    forms[i] = (sum_j comb[i, j] restrict(qs[j], V)) o T. ``pairs[i]`` is the
    designated (x_i, y_i) variable pair (x_i == y_i over odd p, where the
    designated monomial is a square). Forms that became affine before they
    could be processed are listed in ``collapsed``."""

    p: int
    qs: tuple
    V: AffineSubspace
    T: np.ndarray
    forms: tuple
    pairs: tuple
    comb: np.ndarray
    collapsed: tuple = ()

    @property
    def active(self) -> list[int]:
        return [i for i in range(len(self.forms)) if i not in self.collapsed]

    def quadratic_forms(self) -> list[QuadraticForm]:
        return [QuadraticForm.from_polynomial(f) for f in self.forms]

    def shape_ok(self) -> bool:
        """Syntactic disjointness check."""
        designated = set()
        for a, b in self.pairs:
            if a is not None:
                designated |= {a, b}
        for i, f in enumerate(self.forms):
            a, b = self.pairs[i]
            for exps, c in f.terms.items():
                if sum(exps) != 2:
                    continue
                vs = {j for j, e in enumerate(exps) if e}
                if not vs & designated:
                    continue
                own = (a is not None) and vs == {a, b}
                if not own:
                    return False
            if a is not None:
                e = [0] * f.n
                e[a] += 1
                e[b] += 1
                if f.coefficient(e) != 1:
                    return False
        return True

    def span_ok(self) -> bool:
        """forms[i] equals the recorded combination of the restricted inputs."""
        k = self.V.dim
        for i, f in enumerate(self.forms):
            combo = Polynomial.zero(self.p, k)
            for j, q in enumerate(self.qs):
                if self.comb[i, j]:
                    combo = combo + restrict(q, self.V).scale(int(self.comb[i, j]))
            if combo.substitute(self.T) != f:
                return False
        return rank(self.comb, self.p) == len(self.qs)

    def verify(self) -> bool:
        m = len(self.qs)
        return self.shape_ok() and self.span_ok() and self.V.dim >= self.V.n - 2 * m * m

    def to_dict(self) -> dict:
        return {
            "V": self.V.to_dict(),
            "T": self.T.tolist(),
            "forms": [f.to_dict() for f in self.forms],
            "pairs": [list(pr) for pr in self.pairs],
            "comb": self.comb.tolist(),
            "collapsed": list(self.collapsed),
        }


def _quad_coeff(f: Polynomial, a: int, b: int) -> int:
    e = [0] * f.n
    e[a] += 1
    e[b] += 1
    return f.coefficient(e)


def _cofactor_form(f: Polynomial, v: int, skip: set) -> LinearForm:
    """sum_w coeff(x_v x_w) x_w over w not in ``skip`` (w != v)."""
    coeffs = [0] * f.n
    for exps, c in f.terms.items():
        if sum(exps) != 2 or exps[v] != 1:
            continue
        w = next(j for j, e in enumerate(exps) if e and j != v)
        if w not in skip:
            coeffs[w] = c
    return LinearForm(f.p, tuple(coeffs))


def disjointify(qs: Sequence[Polynomial]) -> DisjointFamily:
    """Make each quadratic own a designated monomial that no other quadratic
    term touches, by elimination inside the family and by passing to a
    subspace where the cross terms vanish."""
    qs = tuple(qs)
    if not qs:
        raise ValueError("need at least one quadratic")
    p, n = qs[0].p, qs[0].n
    for q in qs:
        _check_quadratic(q)
    m = len(qs)
    forms = list(qs)
    M = np.eye(n, dtype=np.int64)  # current coordinates u map to x = u M
    comb = np.eye(m, dtype=np.int64)
    pairs: list = [(None, None)] * m
    designated: list[int] = []
    collapsed = []
    for i in range(m):
        g = forms[i]
        k = g.n
        free = [v for v in range(k) if v not in designated]
        pick = None
        if p == 2:
            for a in free:
                for b in free:
                    if b > a and _quad_coeff(g, a, b):
                        pick = (a, b)
                        break
                if pick:
                    break
        else:
            sq = [a for a in free if _quad_coeff(g, a, a)]
            if sq:
                pick = (sq[0], sq[0])
            else:
                for a in free:
                    for b in free:
                        if b > a and _quad_coeff(g, a, b):
                            pick = (a, b)
                            break
                    if pick:
                        break
                if pick:
                    a, b = pick
                    S = np.eye(k, dtype=np.int64)
                    S[a, b] = 1  # u_b = s_b + s_a creates an s_a^2 term
                    forms = [f.substitute(S) for f in forms]
                    M = (S @ M) % p
                    pick = (a, a)
            g = forms[i]
        if pick is None:
            collapsed.append(i)
            continue
        a, b = pick
        c = _quad_coeff(g, a, b)
        inv = pow(c, p - 2, p)
        forms[i] = g.scale(inv)
        comb[i] = (comb[i] * inv) % p
        for j in range(m):
            if j != i:
                d = _quad_coeff(forms[j], a, b)
                if d:
                    forms[j] = forms[j] - forms[i].scale(d)
                    comb[j] = (comb[j] - d * comb[i]) % p
        skip = {a, b}
        constraints = []
        for j in range(m):
            for v in sorted(skip):
                lf = _cofactor_form(forms[j], v, skip)
                if any(lf.coeffs):
                    constraints.append(lf)
        W = kernel_of(constraints, p=p, n=k)
        if W.dim < k:
            forms = [restrict(f, W) for f in forms]
            M = (W.basis @ M) % p
            remap = {v: W.pivots.index(v) for v in designated + [a, b]}
            designated = [remap[v] for v in designated]
            pairs = [(remap[x], remap[y]) if x is not None else (None, None) for x, y in pairs]
            a, b = remap[a], remap[b]
        pairs[i] = (a, b)
        designated += sorted({a, b})
    V = AffineSubspace(p, n, M, np.zeros(n, dtype=np.int64))
    T = M[:, list(V.pivots)] % p
    fam = DisjointFamily(p, qs, V, T, tuple(forms), tuple(pairs), comb % p, tuple(collapsed))
    if not fam.shape_ok():
        raise VerificationError("disjointify produced a form outside the disjoint shape")
    return fam


# ------------------------------------------------------------ strong regularity

INDEX_SETS = tuple(
    [(i,) for i in range(5)] + [(i, j) for i in range(5) for j in range(i + 1, 5)]
)


def lifted_family(qs: Sequence[Polynomial], x0) -> list[Polynomial]:
    """Q_j(x0 + sum_{i in I} Y_i) as polynomials in the 5n variables Y_1..Y_5."""
    p, n = qs[0].p, qs[0].n
    out = []
    for q in qs:
        for I in INDEX_SETS:
            M = np.zeros((5 * n, n), dtype=np.int64)
            for i in I:
                M[i * n : (i + 1) * n] = np.eye(n, dtype=np.int64)
            out.append(q.substitute(M, x0))
    return out


def _lifted_tables(qs: Sequence[Polynomial], x0) -> list[np.ndarray]:
    p, n = qs[0].p, qs[0].n
    N = p**n
    Y = np.arange(N**5, dtype=np.int64)
    blocks = [(Y // N**i) % N for i in range(5)]
    base = int(encode(np.asarray(x0, dtype=np.int64) % p, p))
    tables = []
    sums = []
    for I in INDEX_SETS:
        s = np.full(Y.shape, base, dtype=np.int64)
        for i in I:
            s = add_indices(s, blocks[i], p, n)
        sums.append(s)
    for q in qs:
        tab = q.table()
        tables += [tab[s] for s in sums]
    return tables


def strongly_regular_gamma(qs: Sequence[Polynomial], x0) -> Fraction:
    """Exact distance from uniform of the 15m lifted values at base point x0."""
    qs = list(qs)
    p, n = qs[0].p, qs[0].n
    if p ** (5 * n) > REGULARITY_GUARD:
        raise ResourceLimitError(f"{p}^{5 * n} lifted points exceed the regularity guard")
    return joint_fraction_from_tables(_lifted_tables(qs, x0), p)


@dataclass(frozen=True)
class RegularityCheck:
    """Measured gamma against p^(3m/2 - R/4).

    A bound >= 1 is vacuous and the check passes; ``literal`` records the
    plain comparison gamma <= bound regardless, and ``lifted_bound`` is the
    value p^(3M/2 - R/4) for the M = 15m lifted functions."""

    m: int
    R: int
    bound: float
    lifted_bound: float
    gamma: Fraction
    base_points: int
    literal: bool

    @property
    def vacuous(self) -> bool:
        return self.bound >= 1

    @property
    def holds(self) -> bool:
        return self.vacuous or self.literal

    def __bool__(self):
        return self.holds


def regularity_base_points(p: int, n: int, samples: int = 8, seed=0) -> np.ndarray:
    """All base points for n <= 3, otherwise ``samples`` seeded ones."""
    if n <= 3:
        return all_points(p, n)
    rng = as_rng(seed)
    return rng.integers(p, size=(samples, n))


def strong_regularity_bound_check(qs: Sequence[Polynomial], R: int | None = None, x0s=None, seed=0) -> RegularityCheck:
    """Compare the measured gamma, maximised over base points, with p^(3m/2 - R/4)."""
    qs = list(qs)
    p, n, m = qs[0].p, qs[0].n, len(qs)
    if R is None:
        R = min_combination_rank(qs)[0]
    bound = float(p) ** (1.5 * m - R / 4)
    pts = regularity_base_points(p, n, seed=seed) if x0s is None else np.asarray(x0s)
    gamma = max(strongly_regular_gamma(qs, x) for x in pts)
    lifted = float(p) ** (1.5 * len(INDEX_SETS) * m - R / 4)
    return RegularityCheck(m, R, bound, lifted, gamma, len(pts), float(gamma) <= bound + 1e-12)


# ------------------------------------------------------------ functions of forms


def compose_function(F: Polynomial, forms: Sequence[Polynomial]) -> np.ndarray:
    """Value table of F(forms[0](x), ..., forms[m-1](x))."""
    vals = np.stack([f.table() for f in forms], axis=1)
    return F.evaluate_many(vals)


def fit_composition(f: Polynomial, forms: Sequence[Polynomial]) -> Polynomial | None:
    """The F with f = F(forms) as functions, or None if f is not a function of
    the forms. Unattained value vectors are assigned 0."""
    p, c = f.p, len(forms)
    codes = np.zeros(p**f.n, dtype=np.int64)
    for i, g in enumerate(forms):
        codes += g.table().astype(np.int64) * p**i
    ftab = f.table().astype(np.int64)
    table = np.zeros(p**c, dtype=np.int64)
    table[codes] = ftab
    if not np.array_equal(table[codes], ftab):
        return None
    return Polynomial.from_table(p, c, table)


@dataclass(frozen=True)
class LowDegreeCheck:
    composes: bool
    deg_F: int
    deg_f: int
    holds: bool

    def __bool__(self):
        return self.holds


def poly_of_disjoint_is_low_degree(F: Polynomial, family: DisjointFamily | Sequence[Polynomial], f: Polynomial) -> LowDegreeCheck:
    """Check f = F(Q_1, ..., Q_m) and deg(F) <= deg(f)/2 for disjoint Q's."""
    forms = family.forms if isinstance(family, DisjointFamily) else tuple(family)
    composes = np.array_equal(compose_function(F, forms), f.table())
    deg_F = F.degree
    holds = composes and 2 * deg_F <= f.degree
    return LowDegreeCheck(bool(composes), deg_F, f.degree, bool(holds))
