"""Cubic rank, common linear bases for low-rank quadratic spaces and the
structure pipelines for biased cubics and cubics with large U^3 norm.

Most decisions here go through the third-derivative tensor
T[a, b, c] = Delta_{e_a} Delta_{e_b} Delta_{e_c} f, which is trilinear and
symmetric for deg f <= 3. A cubic has degree <= 2 on a subspace U exactly
when T vanishes on U x U x U, and rank_2(Delta_y f) is read off T(y, ., .).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .addcomb import subadditive_subspace
from .analytic import add_indices, batch_rank, bias_exact, bias_mc, derivative, derivative_tensor, gowers_norm_exact
from .errors import ResourceLimitError, ThresholdError, VerificationError
from .ffpoly import Polynomial, all_points
from .linalg import extend_to_basis, inverse, nullspace, rank
from .quadform import combination_ranks, dickson_canonicalize, projective_vectors, regularize
from .rng import as_rng
from .subspace import AffineSubspace, LinearForm, kernel_of, restrict

EXACT_GUARD = 1 << 24
SPAN_SWEEP = 1 << 12
EXACT_BIAS_LIMIT = 1 << 20
MC_SAMPLES = 10**5


def _check_cubic(f: Polynomial):
    if f.degree > 3:
        raise ValueError(f"expected degree <= 3, got {f.degree}")


# ------------------------------------------------------------ tensors


def cubic_tensor(f: Polynomial) -> np.ndarray:
    _check_cubic(f)
    return derivative_tensor(f, 3)


def restrict_tensor(T: np.ndarray, B: np.ndarray, p: int) -> np.ndarray:
    """T(u B, v B, w B) for parameters u, v, w; B may be a stack (K, d, n)."""
    B = np.asarray(B, dtype=np.int64)
    if B.ndim == 2:
        return np.einsum("abc,ia,jb,kc->ijk", T, B, B, B) % p
    out = np.einsum("abc,sia->sibc", T, B) % p
    out = np.einsum("sibc,sjb->sijc", out, B) % p
    return np.einsum("sijc,skc->sijk", out, B) % p


def flattening_rank(T: np.ndarray, p: int) -> int:
    d = T.shape[0]
    if d == 0:
        return 0
    return rank(T.reshape(d, d * d), p)


def _cubic_terms(T: np.ndarray) -> int:
    """Nonzero entries with a <= b <= c, one per cubic monomial."""
    d = T.shape[-1]
    a, b, c = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    mask = (a <= b) & (b <= c)
    return int(np.count_nonzero(T[..., mask], axis=-1)) if T.ndim == 3 else np.count_nonzero(T[:, mask], axis=1)


def derivative_rank_profile(f: Polynomial) -> np.ndarray:
    """rank_2(Delta_y f) for every y, indexed by point index.

    The quadratic part of Delta_y f has polar form T(y, ., .), so the profile
    is a batch of matrix ranks (halved in characteristic 2)."""
    T = cubic_tensor(f)
    p, n = f.p, f.n
    pts = all_points(p, n)
    out = np.zeros(len(pts), dtype=np.int64)
    step = 4096
    for s in range(0, len(pts), step):
        mats = np.tensordot(pts[s : s + step], T, axes=(1, 0)) % p
        out[s : s + step] = batch_rank(mats, p) if n else 0
    return out // 2 if p == 2 else out


# ------------------------------------------------------------ splitting along linear forms


def _coordinate_change(forms: Sequence[LinearForm], p: int, n: int):
    H = np.array([fm.coeffs for fm in forms], dtype=np.int64).reshape(len(forms), n)
    if rank(H, p) != len(forms):
        raise ValueError("linear forms are not linearly independent")
    L = extend_to_basis(H, p, n)
    c = np.zeros(n, dtype=np.int64)
    c[: len(forms)] = [fm.constant for fm in forms]
    return L, c


def split_by_forms(f: Polynomial, forms: Sequence[LinearForm]) -> tuple[list[Polynomial], Polynomial]:
    """qs, q0 with f = sum forms[i] * qs[i] + q0 and q0 agreeing with f on
    {forms = 0}, q0 free of the forms.

    In coordinates z with z_i = forms[i] (completed by unit vectors) each
    monomial goes to the first form coordinate it contains."""
    p, n = f.p, f.n
    t = len(forms)
    if t == 0:
        return [], f
    L, c = _coordinate_change(forms, p, n)
    Linv = inverse(L, p)
    g = f.substitute(Linv.T, (-Linv @ c) % p)
    parts: list[dict] = [dict() for _ in range(t + 1)]
    for mono, coef in g.terms.items():
        i = next((j for j in range(t) if mono[j]), t)
        if i < t:
            mono = mono[:i] + (mono[i] - 1,) + mono[i + 1 :]
        parts[i][mono] = (parts[i].get(mono, 0) + coef) % p
    back = [Polynomial(p, n, terms).substitute(L.T, c) for terms in parts]
    return back[:t], back[t]


def combine(ells: Sequence[LinearForm], qs: Sequence[Polynomial], q0: Polynomial | None, p: int, n: int) -> Polynomial:
    total = Polynomial.zero(p, n) if q0 is None else q0
    for l, q in zip(ells, qs):
        total = total + l.as_polynomial() * q
    return total


def _same_function(f: Polynomial, g: Polynomial, seed=0) -> bool:
    """Exact polynomial identity; reduced polynomials are functions, so this
    is equality as functions."""
    return f == g


# ------------------------------------------------------------ rank_3


@dataclass(frozen=True, eq=False)
class Rank3Certificate:
    r: int
    ells: tuple
    qs: tuple
    q0: Polynomial
    exactness: str  # "exact" or "upper_bound"

    def reconstruct(self) -> Polynomial:
        return combine(self.ells, self.qs, self.q0, self.q0.p, self.q0.n)

    def verify(self, f: Polynomial) -> bool:
        shapes = len(self.ells) == len(self.qs) == self.r
        degrees = all(q.degree <= 2 for q in self.qs) and self.q0.degree <= 2
        return shapes and degrees and _same_function(self.reconstruct(), f)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "r": self.r,
            "exactness": self.exactness,
            "ells": [l.to_dict() for l in self.ells],
            "qs": [q.to_dict() for q in self.qs],
            "q0": self.q0.to_dict(),
        }


@dataclass(frozen=True)
class Rank3Exceeded:
    """Every r <= r_max was ruled out by exhaustive search."""

    r_max: int
    tuples_checked: int

    def __bool__(self):
        return False


def _certificate(f: Polynomial, forms: Sequence[LinearForm], exactness: str) -> Rank3Certificate:
    qs, q0 = split_by_forms(f, forms)
    cert = Rank3Certificate(len(forms), tuple(forms), tuple(qs), q0, exactness)
    if not cert.verify(f):
        raise VerificationError("rank_3 certificate does not reconstruct f")
    return cert


def _hyperplane_kernels(p: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Projective forms on F_p^d and a kernel basis (d-1 x d) for each."""
    forms = projective_vectors(p, d)
    kernels = np.array([nullspace(a[None, :], p, d) for a in forms], dtype=np.int64).reshape(len(forms), d - 1, d)
    return forms, kernels


def rank3_upper(g: Polynomial) -> Rank3Certificate:
    """Greedy upper bound on rank_3.

    Each round restricts to the hyperplane {l = 0} that leaves the fewest
    cubic directions (flattening rank of the restricted tensor), then the
    fewest cubic monomials, then the lowest form index."""
    _check_cubic(g)
    p, n = g.p, g.n
    if g.degree <= 2:
        return Rank3Certificate(0, (), (), g, "exact")
    T = cubic_tensor(g)
    V = AffineSubspace.full(p, n)
    chosen: list[LinearForm] = []
    while True:
        Tv = restrict_tensor(T, V.basis, p)
        if not Tv.any():
            break
        d = V.dim
        forms, kernels = _hyperplane_kernels(p, d)
        best = None
        step = max(1, (1 << 22) // max(1, d**3))
        for s in range(0, len(forms), step):
            R = restrict_tensor(Tv, kernels[s : s + step], p)
            flat = batch_rank(R.reshape(len(R), d - 1, (d - 1) ** 2), p) if d > 1 else np.zeros(len(R), dtype=np.int64)
            terms = _cubic_terms(R)
            for j in range(len(R)):
                key = (int(flat[j]), int(terms[j]), s + j)
                if best is None or key < best:
                    best = key
        a = forms[best[2]]
        chosen.append(V.lift_form(LinearForm(p, tuple(int(c) for c in a))))
        V = V.compose(AffineSubspace(p, d, kernels[best[2]], np.zeros(d, dtype=np.int64)))
    exactness = "exact" if len(chosen) <= 1 else "upper_bound"
    return _certificate(g, chosen, exactness)


def rank3_exact(g: Polynomial, r_max: int = 3) -> Rank3Certificate | Rank3Exceeded:
    """Minimal r <= r_max by exhaustive search over r-sets of linear forms.

    Forms are taken up to scaling; a set works when the cubic tensor vanishes
    on its common kernel. Each r needs (p^n)^r <= 2^24."""
    _check_cubic(g)
    p, n = g.p, g.n
    if g.degree <= 2:
        return Rank3Certificate(0, (), (), g, "exact")
    T = cubic_tensor(g)
    forms = projective_vectors(p, n)
    checked = 0
    for r in range(1, min(r_max, n) + 1):
        if (p**n) ** r > EXACT_GUARD:
            raise ResourceLimitError(f"exact rank_3 search needs (p^n)^r <= 2^24, got r = {r}")
        batch_idx, batch_ker = [], []

        def flush():
            if not batch_ker:
                return None
            R = restrict_tensor(T, np.array(batch_ker), p)
            hit = np.flatnonzero(~R.reshape(len(R), -1).any(axis=1))
            return batch_idx[hit[0]] if hit.size else None

        for idx in combinations(range(len(forms)), r):
            M = forms[list(idx)]
            if r > 1 and rank(M, p) < r:
                continue
            checked += 1
            batch_idx.append(idx)
            batch_ker.append(nullspace(M, p, n))
            if len(batch_ker) >= 2048:
                found = flush()
                if found is not None:
                    return _exact_certificate(g, forms, found)
                batch_idx, batch_ker = [], []
        found = flush()
        if found is not None:
            return _exact_certificate(g, forms, found)
    return Rank3Exceeded(r_max, checked)


def _exact_certificate(g, forms, idx) -> Rank3Certificate:
    ells = [LinearForm(g.p, tuple(int(c) for c in forms[i])) for i in idx]
    return _certificate(g, ells, "exact")


# ------------------------------------------------------------ common linear basis


@dataclass(frozen=True, eq=False)
class CommonBasisResult:
    """V on which every element of the space is affine; ``decompositions``
    holds, per generator h, (cofactors, remainder) with
    h = sum ells[i] * cofactors[i] + remainder."""

    V: AffineSubspace
    ells: tuple
    decompositions: tuple
    r: int
    rounds: tuple = ()

    @property
    def codim(self) -> int:
        return self.V.codim

    @property
    def codim_bound(self) -> int:
        return 4 * self.r if self.V.p == 2 else 2 * self.r

    def verify(self, generators: Sequence[Polynomial]) -> bool:
        if self.codim > self.codim_bound:
            return False
        for h, (cof, rem) in zip(generators, self.decompositions):
            if restrict(h, self.V).degree > 1 or rem.degree > 1:
                return False
            if any(c.degree > 1 for c in cof):
                return False
            if combine(self.ells, cof, rem, h.p, h.n) != h:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "V": self.V.to_dict(),
            "codim": self.codim,
            "codim_bound": self.codim_bound,
            "r": self.r,
            "ells": [l.to_dict() for l in self.ells],
            "rounds": list(self.rounds),
        }


def _combination_coeffs(p: int, m: int, seed) -> np.ndarray:
    if p**m <= SPAN_SWEEP:
        return projective_vectors(p, m)
    rng = as_rng(seed)
    c = rng.integers(p, size=(1000, m))
    c[np.all(c == 0, axis=1), 0] = 1
    return c


def common_linear_basis(space: Sequence[Polynomial], r: int, seed=0) -> CommonBasisResult:
    """Subspace of codimension <= 4r (char 2) or 2r (odd p) on which every
    element of span(space) is affine.

    Each round takes a maximal-rank element of the current restricted span,
    sets its Dickson forms to zero and recurses."""
    gens = list(space)
    if not gens:
        raise ValueError("need at least one generator")
    p, n = gens[0].p, gens[0].n
    for h in gens:
        if h.degree > 2:
            raise ValueError("generators must have degree <= 2")
    m = len(gens)
    if p**m <= SPAN_SWEEP:
        coeffs = projective_vectors(p, m)
        ranks = combination_ranks(gens, coeffs)
        if ranks.max() > r:
            k = int(np.argmax(ranks))
            raise ValueError(f"combination {coeffs[k].tolist()} has rank_2 {int(ranks[k])} > {r}")
    V = AffineSubspace.full(p, n)
    rounds = []
    while V.dim:
        local = [restrict(h, V) for h in gens]
        if all(h.degree <= 1 for h in local):
            break
        coeffs = _combination_coeffs(p, m, seed)
        ranks = combination_ranks(local, coeffs)
        k = int(np.argmax(ranks))
        s = int(ranks[k])
        if s > r:
            raise ValueError(f"combination {coeffs[k].tolist()} has rank_2 {s} > {r} on the current subspace")
        h = sum((g.scale(int(c)) for g, c in zip(local, coeffs[k])), Polynomial.zero(p, V.dim))
        D = dickson_canonicalize(h)
        zs = D.linear_forms()
        killed = zs[: 2 * D.rank] if D.shape == "char2_pairs" else zs[: D.rank]
        W = kernel_of(killed, p=p, n=V.dim)
        V = V.compose(W)
        rounds.append({"combination": [int(c) for c in coeffs[k]], "rank": s, "codim": V.codim})
    ells = tuple(V.equations()[0])
    decomp = tuple(tuple(split_by_forms(h, ells)) for h in gens)
    res = CommonBasisResult(V, ells, decomp, r, tuple(rounds))
    if res.codim > res.codim_bound:
        raise VerificationError(f"codim {res.codim} exceeds the bound {res.codim_bound}")
    return res


# ------------------------------------------------------------ structure pipelines


@dataclass(frozen=True, eq=False)
class CubicStructure:
    """f = sum ells[j] * qs[j] + q0                      (u3_form)
    f = sum ells[j] * qs[j] + g(inner_ells)            (bias_form)"""

    p: int
    n: int
    variant: str
    ells: tuple
    qs: tuple
    q0: Polynomial | None = None
    inner_ells: tuple = ()
    g: Polynomial | None = None
    metrics: dict = field(default_factory=dict)

    @property
    def c1(self) -> int:
        return len(self.ells)

    @property
    def c2(self) -> int:
        return len(self.inner_ells)

    def inner_part(self) -> Polynomial:
        if self.g is None:
            return Polynomial.zero(self.p, self.n)
        if not self.inner_ells:
            return Polynomial.constant(self.p, self.n, self.g.constant_term)
        Lam = np.array([l.coeffs for l in self.inner_ells], dtype=np.int64)
        c = np.array([l.constant for l in self.inner_ells], dtype=np.int64)
        return self.g.substitute(Lam.T, c)

    def reconstruct(self) -> Polynomial:
        total = combine(self.ells, self.qs, self.q0, self.p, self.n)
        return total + self.inner_part()

    def verify(self, f: Polynomial) -> bool:
        if len(self.ells) != len(self.qs) or any(q.degree > 2 for q in self.qs):
            return False
        if self.variant == "u3_form":
            if self.inner_ells or self.q0 is None or self.q0.degree > 2:
                return False
        elif self.g is not None and (self.g.n != self.c2 or self.g.degree > 3):
            return False
        return _same_function(self.reconstruct(), f)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "variant": self.variant,
            "p": self.p,
            "n": self.n,
            "c1": self.c1,
            "c2": self.c2,
            "ells": [l.to_dict() for l in self.ells],
            "qs": [q.to_dict() for q in self.qs],
            "q0": None if self.q0 is None else self.q0.to_dict(),
            "inner_ells": [l.to_dict() for l in self.inner_ells],
            "g": None if self.g is None else self.g.to_dict(),
            "metrics": self.metrics,
        }


def _kills(T: np.ndarray, forms: Sequence[LinearForm], p: int, n: int) -> bool:
    K = kernel_of(list(forms), p=p, n=n)
    return not restrict_tensor(T, K.basis, p).any()


def _prune(T: np.ndarray, forms: list[LinearForm], p: int, n: int) -> list[LinearForm]:
    """Drop forms (first to last) whose removal keeps the tensor zero."""
    kept = list(forms)
    i = 0
    while i < len(kept):
        trial = kept[:i] + kept[i + 1 :]
        if _kills(T, trial, p, n):
            kept = trial
        else:
            i += 1
    return kept


def low_degree_subspace(f: Polynomial, profile: np.ndarray | None = None) -> tuple[list[LinearForm], dict]:
    """Linear forms whose common kernel U has deg(f|_U) <= 2.

    Runs derivative profile -> subadditive subspace -> common linear basis ->
    kernel for every threshold value the profile takes and keeps the
    smallest codimension after pruning; the greedy rank_3 bound replaces it
    when smaller."""
    _check_cubic(f)
    p, n = f.p, f.n
    T = cubic_tensor(f)
    F = derivative_rank_profile(f) if profile is None else np.asarray(profile)
    best = None
    for r in sorted(set(int(v) for v in F)):
        sub = subadditive_subspace(F.astype(float), p, n, r)
        V = sub.V
        r_space = int(F[V.indices()].max())
        if V.dim and r_space:
            cb = common_linear_basis([derivative(f, b) for b in V.basis], r_space)
            U = V.intersect(list(cb.ells))
            codim_common = cb.codim
        else:
            U, codim_common = V, 0
        forms = U.equations()[0]
        if restrict_tensor(T, U.basis, p).any():
            raise VerificationError(f"f is not quadratic on the kernel subspace (threshold {r})")
        pruned = _prune(T, forms, p, n)
        stage = {
            "threshold": r,
            "density": float(sub.density),
            "k": sub.k,
            "dim_V": V.dim,
            "rank_on_V": r_space,
            "codim_common": codim_common,
            "codim_U": len(forms),
            "codim_pruned": len(pruned),
        }
        if best is None or len(pruned) < len(best[0]):
            best = (pruned, stage)
    forms, stage = best
    stage = dict(stage, source="pipeline")
    if len(forms) > 1:
        greedy = rank3_upper(f)
        stage["greedy_rank3"] = greedy.r
        if greedy.r < len(forms):
            forms = list(greedy.ells)
            stage["source"] = "greedy_rank3"
    return forms, stage


def _u3_metric(f: Polynomial) -> float | None:
    try:
        return gowers_norm_exact(f, 3).value
    except ResourceLimitError:
        return None


def structure_from_u3(f: Polynomial) -> CubicStructure:
    """f = sum_{j <= c} l_j q_j + q0 with c the codimension of the kernel
    subspace on which f is quadratic."""
    _check_cubic(f)
    p, n = f.p, f.n
    forms, stage = low_degree_subspace(f)
    qs, q0 = split_by_forms(f, forms)
    metrics = dict(stage, c=len(forms), u3=_u3_metric(f))
    out = CubicStructure(p, n, "u3_form", tuple(forms), tuple(qs), q0, (), None, metrics)
    if not out.verify(f):
        raise VerificationError("u3 structure does not reconstruct f")
    return out


def measured_bias(f: Polynomial, seed=0) -> tuple[float, str]:
    if f.p**f.n <= EXACT_BIAS_LIMIT:
        return bias_exact(f).value, "exact"
    return bias_mc(f, MC_SAMPLES, seed).value, "monte_carlo"


def bias_threshold(p: int, n: int) -> float:
    """Smallest bias the pipeline accepts: log_p(2/delta^2) must stay below n,
    otherwise the derivative-rank cutoff says nothing about an n-variable
    quadratic."""
    return math.sqrt(2.0) * p ** (-n / 2)


def invariance_subspace(g: Polynomial) -> AffineSubspace:
    """{y : g(x + y) = g(x) for all x}, a linear subspace."""
    p, n = g.p, g.n
    table = g.table()
    N = p**n
    x = np.arange(N, dtype=np.int64)
    good = []
    step = max(1, (1 << 22) // N)
    for s in range(0, N, step):
        ys = np.arange(s, min(N, s + step), dtype=np.int64)
        shifted = table[add_indices(ys[:, None], x[None, :], p, n)]
        good.extend(ys[(shifted == table[None, :]).all(axis=1)].tolist())
    pts = all_points(p, n)[good]
    return AffineSubspace.span(p, n, pts)


def factor_through_forms(g: Polynomial) -> tuple[list[LinearForm], Polynomial]:
    """Forms lambda_1..lambda_c and G with g(x) = G(lambda(x)), c minimal."""
    p, n = g.p, g.n
    K = invariance_subspace(g)
    forms = K.equations()[0]
    c = len(forms)
    if c == 0:
        return [], Polynomial.constant(p, 0, g.constant_term)
    Lam = np.array([l.coeffs for l in forms], dtype=np.int64)
    # rows R with Lam R^T = I, so x - lambda(x) R lies in K
    L = extend_to_basis(Lam, p, n)
    R = inverse(L, p)[:, :c].T
    G = g.substitute(R)
    return forms, G


def structure_from_bias(f: Polynomial, delta_hint: float | None = None, seed=0, r: int | None = None) -> CubicStructure:
    """f = sum_{j <= c1} l_j q_j + g(l''_1, ..., l''_{c2}) for a biased cubic.

    Stages: kernel subspace U with deg(f|_U) <= 2 and f = sum l_i q_i + q0;
    a shift alpha of the l_i folding q0 into the span of the q_i up to low
    rank; regularization of the q_i on U at r = log_p(2/delta); the
    remainder factored through its invariance subspace. ``r`` overrides the
    regularization rank."""
    _check_cubic(f)
    p, n = f.p, f.n
    delta, method = measured_bias(f, seed)
    floor = bias_threshold(p, n) if delta_hint is None else float(delta_hint)
    if delta < floor or delta == 0.0:
        raise ThresholdError(
            f"bias {delta:.4g} is below the pipeline threshold {floor:.4g}",
            stage="bias",
            metrics={"bias": delta, "method": method, "threshold": floor},
        )
    forms, stage = low_degree_subspace(f)
    t = len(forms)
    qs, q0 = split_by_forms(f, forms)
    U = kernel_of(forms, p=p, n=n)
    metrics = dict(stage, bias=delta, bias_method=method, t=t)

    # fold q0: f = sum (l_i - alpha_i) q_i + (q0 + sum alpha_i q_i)
    alpha = [0] * t
    if t:
        local = [restrict(q, U) for q in qs] + [restrict(q0, U)]
        if p**t <= 1 << 16:
            A = all_points(p, t)
            coeffs = np.hstack([A, np.ones((len(A), 1), dtype=np.int64)])
            ranks = combination_ranks(local, coeffs)
            k = int(np.argmin(ranks))
            alpha = [int(a) for a in A[k]]
            metrics["q0_rank"] = int(ranks[k])
        metrics["q0_rank_bound"] = math.log(1 / delta, p)
    shifted = [LinearForm(p, l.coeffs, (l.constant - a) % p) for l, a in zip(forms, alpha)]
    metrics["alpha"] = alpha

    r_reg = max(1, math.floor(math.log(2 / delta, p) + 1e-12)) if r is None else int(r)
    metrics["r_regularize"] = r_reg
    ells, primes = [], []
    if t:
        reg = regularize([restrict(q, U) for q in qs], r_reg)
        W = U.compose(reg.V)
        metrics["codim_W"] = W.codim
        for pos, i in enumerate(reg.kept_indices):
            ell = shifted[i]
            for j, (_, co) in reg.span.items():
                if co[pos]:
                    ell = ell + shifted[j].scale(co[pos])
            ells.append(ell)
            primes.append(restrict(qs[i], W).rename(n, list(W.pivots)))
    t_prime = len(ells)
    metrics.update(t_prime=t_prime, t_prime_bound=math.log(2 / delta, p), t_prime_ok=t_prime < math.log(2 / delta, p))
    main = combine(ells, primes, None, p, n)
    inner, G = factor_through_forms(f - main)
    metrics.update(c1=t_prime, c2=len(inner))
    out = CubicStructure(p, n, "bias_form", tuple(ells), tuple(primes), None, tuple(inner), G, metrics)
    if not out.verify(f):
        raise VerificationError("bias structure does not reconstruct f")
    return out
