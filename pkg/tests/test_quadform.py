import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_bias, brute_eval, brute_table, gauss_rank, points, polar_rank
from polystruct.errors import ResourceLimitError
from polystruct.ffpoly import Polynomial, compose_affine, random_polynomial
from polystruct.quadform import (
    DisjointFamily,
    QuadraticForm,
    dickson_canonicalize,
    disjointify,
    fit_composition,
    min_combination_rank,
    poly_of_disjoint_is_low_degree,
    rank2,
    rank2_fast,
    regularize,
    strong_regularity_bound_check,
    strongly_regular_gamma,
)


def X(p, n, i):
    return Polynomial.variable(p, n, i)


def random_quadratic(p, n, seed):
    return random_polynomial(p, n, 2, seed=seed)


def random_invertible(p, n, rng):
    while True:
        T = rng.integers(0, p, (n, n))
        if gauss_rank(T.tolist(), p) == n:
            return T


# ---- QuadraticForm


@given(st.sampled_from([2, 3, 5]), st.integers(0, 2**32))
def test_quadratic_form_round_trip(p, seed):
    q = random_quadratic(p, 4, seed)
    Q = QuadraticForm.from_polynomial(q)
    assert Q.as_polynomial() == q
    if p == 2:
        assert not np.tril(Q.A).any()
    else:
        assert np.array_equal(Q.A, Q.A.T)


def test_quadratic_form_rejects_cubic():
    with pytest.raises(ValueError):
        QuadraticForm.from_polynomial(X(2, 3, 0) * X(2, 3, 1) * X(2, 3, 2))


# ---- Dickson


def test_dickson_already_canonical():
    q = X(2, 4, 0) * X(2, 4, 1) + X(2, 4, 2) * X(2, 4, 3)
    D = dickson_canonicalize(q)
    assert D.rank == 2 and D.shape == "char2_pairs"
    assert np.array_equal(D.T, np.eye(4, dtype=int))


def test_dickson_x1_times_sum():
    # x1 x2 + x1 x3 = x1 (x2 + x3), and A + A^T has rank 2
    q = X(2, 3, 0) * X(2, 3, 1) + X(2, 3, 0) * X(2, 3, 2)
    assert polar_rank(q) == 2
    assert dickson_canonicalize(q).rank == 1


def test_dickson_product_over_f3_is_two_squares():
    # x1 x2 has symmetric matrix [[0, 2], [2, 0]] over F_3, which is nonsingular
    q = X(3, 2, 0) * X(3, 2, 1)
    D = dickson_canonicalize(q)
    assert D.shape == "oddchar_squares" and D.rank == 2
    assert gauss_rank([[0, 2], [2, 0]], 3) == 2


def test_dickson_rejects_cubic():
    with pytest.raises(ValueError):
        dickson_canonicalize(X(3, 3, 0) * X(3, 3, 1) * X(3, 3, 2))


@given(st.sampled_from([(2, 6), (3, 4), (5, 3), (7, 3)]), st.integers(0, 2**32))
def test_dickson_recomposition(pn, seed):
    p, n = pn
    q = random_quadratic(p, n, seed)
    D = dickson_canonicalize(q)
    assert brute_table(D.recompose()) == brute_table(q)
    canon = D.canonical_polynomial()
    for z in itertools.islice(points(p, n), 50):
        x = tuple(int(v) for v in (D.T @ np.array(z)) % p)
        assert brute_eval(canon, z) == brute_eval(q, x)


# ---- rank2


def test_rank2_examples():
    assert rank2(random_polynomial(3, 4, 1, seed=1)) == 0
    x = [X(2, 6, i) for i in range(6)]
    assert rank2(x[0] * x[1] + x[2] * x[3] + x[4] * x[5]) == 3


def test_rank2_f2_matches_polar_rank():
    for seed in range(100):
        q = random_quadratic(2, 8, seed)
        assert rank2(q) == polar_rank(q) // 2 == rank2_fast(q)


@given(st.sampled_from([3, 5]), st.integers(0, 2**32))
def test_rank2_odd_within_polar_bounds(p, seed):
    q = random_quadratic(p, 5, seed)
    pr = polar_rank(q)
    assert pr / 2 <= rank2(q) <= pr
    assert rank2(q) == rank2_fast(q)


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_rank2_invariant_under_basis_change(p, seed):
    rng = np.random.default_rng(seed)
    q = random_quadratic(p, 5, seed)
    T = random_invertible(p, 5, rng)
    assert rank2(compose_affine(q, T, rng.integers(0, p, 5))) == rank2(q)


@given(st.sampled_from([2, 3, 5]), st.integers(0, 2**32))
def test_rank2_subadditive(p, seed):
    q, r = random_quadratic(p, 6, seed), random_quadratic(p, 6, seed + 1)
    a = int(np.random.default_rng(seed).integers(1, p)) if p > 2 else 1
    assert rank2(q + r.scale(a)) <= rank2(q) + rank2(r)


def test_rank2_f2_bias_is_zero_or_power():
    # over F_2 a quadratic of rank r has bias 0 or exactly 2^-r
    for seed in range(40):
        q = random_quadratic(2, 6, seed)
        b = brute_bias(q)
        assert b == pytest.approx(0, abs=1e-12) or b == pytest.approx(2.0 ** -rank2(q), abs=1e-12)


# ---- combinations


def test_min_combination_rank_examples():
    q = X(3, 2, 0) * X(3, 2, 1)
    assert min_combination_rank([q, q]) == (0, (1, 2))
    a, b = X(2, 4, 0) * X(2, 4, 1), X(2, 4, 2) * X(2, 4, 3)
    r, w = min_combination_rank([a, b])
    assert r == 1 and w in {(1, 0), (0, 1)}
    assert rank2(a + b) == 2


def test_min_combination_rank_brute_force():
    for seed in range(10):
        qs = [random_quadratic(2, 8, 10 * seed + i) for i in range(3)]
        combos = [c for c in itertools.product((0, 1), repeat=3) if any(c)]
        best = min(polar_rank(sum((q for q, ci in zip(qs, c) if ci), Polynomial.zero(2, 8))) // 2 for c in combos)
        r, w = min_combination_rank(qs)
        assert r == best
        assert rank2(sum((q.scale(ci) for q, ci in zip(qs, w)), Polynomial.zero(2, 8))) == r


def test_min_combination_rank_guard():
    qs = [X(2, 2, 0) * X(2, 2, 1)] * 21
    with pytest.raises(ResourceLimitError):
        min_combination_rank(qs)


# ---- regularize


def test_regularize_keeps_high_rank():
    x = [X(2, 6, i) for i in range(6)]
    q = x[0] * x[1] + x[2] * x[3] + x[4] * x[5]
    R = regularize([q], 2)
    assert R.kept_indices == (0,) and R.V.dim == 6 and R.verify()


def test_regularize_discards_rank_one():
    R = regularize([X(2, 4, 0) * X(2, 4, 1)], 1)
    assert R.kept_indices == () and R.V.dim >= 2 and R.verify()
    # the discarded form is constant on V
    vals = {brute_eval(X(2, 4, 0) * X(2, 4, 1), tuple(int(c) for c in R.V.embed(t))) for t in points(2, R.V.dim)}
    assert len(vals) == 1


def test_regularize_dependent_triple():
    x = [X(2, 8, i) for i in range(8)]
    q1 = x[0] * x[1] + x[2] * x[3] + x[4] * x[5]
    q2 = x[1] * x[6] + x[3] * x[7] + x[0] * x[5]
    q3 = q1 + q2 + x[2] * x[4]
    R = regularize([q1, q2, q3], 1)
    assert set(R.kept_indices) <= {0, 1} and R.V.dim >= 8 - 3 * 2
    assert R.verify()
    # span condition checked value by value on V
    for i, (c0, cs) in R.span.items():
        kept = [R.qs[j] for j in R.kept_indices]
        for t in points(2, R.V.dim):
            pt = tuple(int(c) for c in R.V.embed(t))
            expect = (c0 + sum(c * brute_eval(k, pt) for c, k in zip(cs, kept))) % 2
            assert brute_eval(R.qs[i], pt) == expect


def test_regularize_rejects_bad_target():
    with pytest.raises(ValueError):
        regularize([X(2, 2, 0) * X(2, 2, 1)], 0)


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_regularize_property(p, seed):
    n = 6 if p == 2 else 4
    qs = [random_quadratic(p, n, seed + i) for i in range(2)]
    R = regularize(qs, 1)
    assert R.verify()
    assert R.V.dim >= n - 2 * 2
    kept = R.kept
    if kept and R.V.dim:
        assert min_combination_rank(kept)[0] > 1


# ---- disjointify


def test_disjointify_single_product():
    fam = disjointify([X(2, 4, 0) * X(2, 4, 1)])
    assert fam.V.dim == 4 and fam.pairs == ((0, 1),) and fam.verify()


def test_disjointify_drops_shared_terms():
    x = [X(2, 6, i) for i in range(6)]
    fam = disjointify([x[0] * x[1], x[0] * x[2] + x[1] * x[3]])
    assert fam.verify() and fam.shape_ok()
    second = fam.forms[1]
    for exps in second.terms:
        if sum(exps) == 2:
            assert not (exps[0] or exps[1])
    assert fam.V.dim >= 6 - 2 * 4


def test_disjointify_odd_char_finds_square():
    fam = disjointify([X(3, 3, 0) * X(3, 3, 1)])
    a, b = fam.pairs[0]
    assert a == b
    e = [0] * fam.V.dim
    e[a] = 2
    assert fam.forms[0].coefficient(e) == 1
    assert fam.verify()


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_disjointify_property(p, seed):
    n = 8 if p == 2 else 5
    qs = [random_quadratic(p, n, seed + i) for i in range(2)]
    fam = disjointify(qs)
    assert isinstance(fam, DisjointFamily)
    assert fam.shape_ok() and fam.span_ok()
    assert fam.V.dim >= n - 2 * len(qs) ** 2
    # forms[i](u) = sum_j comb[i,j] q_j(x) at x = embed(u T)
    for u in itertools.islice(points(p, fam.V.dim), 40):
        t = (np.array(u) @ fam.T) % p
        pt = tuple(int(c) for c in fam.V.embed(t))
        for i, f in enumerate(fam.forms):
            expect = sum(int(fam.comb[i, j]) * brute_eval(q, pt) for j, q in enumerate(qs)) % p
            assert brute_eval(f, u) == expect


# ---- strong regularity


def test_regularity_bound_vacuous_for_rank_one():
    chk = strong_regularity_bound_check([X(2, 2, 0) * X(2, 2, 1)])
    assert chk.R == 1 and chk.vacuous and chk.holds
    assert chk.gamma >= 0


def test_regularity_full_rank_n3():
    q = X(2, 3, 0) * X(2, 3, 1) + X(2, 3, 2)
    chk = strong_regularity_bound_check([q])
    assert chk.base_points == 8
    assert chk.bound == pytest.approx(2 ** (1.5 - chk.R / 4))
    assert chk.holds


def test_regularity_disjoint_pair_n4():
    x = [X(2, 4, i) for i in range(4)]
    chk = strong_regularity_bound_check([x[0] * x[1], x[2] * x[3]], x0s=[(0, 0, 0, 0)])
    assert chk.m == 2 and chk.R == 1 and chk.holds


def test_regularity_gamma_cost_guard():
    with pytest.raises(ResourceLimitError):
        strongly_regular_gamma([X(2, 5, 0) * X(2, 5, 1)], (0,) * 5)


# ---- functions of disjoint quadratics


def test_low_degree_examples():
    x = [X(2, 4, i) for i in range(4)]
    Q1, Q2 = x[0] * x[1], x[2] * x[3]
    z = [X(2, 2, 0), X(2, 2, 1)]
    chk = poly_of_disjoint_is_low_degree(z[0] * z[1], [Q1, Q2], Q1 * Q2)
    assert chk.composes and chk.deg_F == 2 and chk.deg_f == 4 and chk.holds
    chk = poly_of_disjoint_is_low_degree(z[0], [Q1, Q2], Q1)
    assert chk.holds and chk.deg_F == 1


def test_low_degree_mismatch_reported():
    x = [X(2, 4, i) for i in range(4)]
    chk = poly_of_disjoint_is_low_degree(X(2, 2, 0), [x[0] * x[1], x[2] * x[3]], x[2] * x[3])
    assert not chk.composes and not chk


@given(st.integers(0, 2**32))
def test_random_function_of_disjoint_pair(seed):
    x = [X(2, 6, i) for i in range(6)]
    Q1, Q2 = x[0] * x[1] + x[4], x[2] * x[3] + x[5]
    F = random_polynomial(2, 2, 2, seed=seed)
    table = [brute_eval(F, (brute_eval(Q1, pt), brute_eval(Q2, pt))) for pt in points(2, 6)]
    f = Polynomial.from_table(2, 6, table)
    G = fit_composition(f, [Q1, Q2])
    assert G is not None
    assert poly_of_disjoint_is_low_degree(G, [Q1, Q2], f).holds
