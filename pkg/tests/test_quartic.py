import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_degree_after_restriction, brute_eval, brute_table, points
from polystruct.analytic import derivative
from polystruct.cubic import rank3_exact
from polystruct.errors import ThresholdError
from polystruct.ffpoly import Polynomial, elementary_symmetric, random_polynomial
from polystruct.planted import independent_forms, planted_quadratic_composition, planted_quartic
from polystruct.quadform import rank2, span_coefficients
from polystruct.quartic import (
    ChartStack,
    ClassSolver,
    ModSet,
    affinizing_forms,
    class_reduce,
    derivative_basis,
    partition_degree_drop,
    quartic_bias_structure,
    quartic_highchar_structure,
    rank3c_upper,
    s2_pairing,
    s4_case_study,
    s4_derivative_remainder,
)
from polystruct.subspace import AffineSubspace, kernel_of, restrict


def X(p, n, i):
    return Polynomial.variable(p, n, i)


def planted_member(p, n, A, seed):
    """sum l'_i Q_i + sum l_i Q'_i + Q'_0 with random primed parts."""
    rng = np.random.default_rng(seed)
    f = random_polynomial(p, n, 2, seed=int(rng.integers(2**31)))
    for Q in A.Qs:
        f = f + random_polynomial(p, n, 1, seed=int(rng.integers(2**31))) * Q
    for l in A.ells:
        f = f + l.as_polynomial() * random_polynomial(p, n, 2, seed=int(rng.integers(2**31)))
    return f


def random_modset(p, n, t1, t2, seed):
    Qs = [random_polynomial(p, n, 2, seed=seed * 7 + i, min_degree=2) for i in range(t1)]
    return ModSet.build(p, n, Qs, independent_forms(p, n, t2, seed))


# ---- class calculus


def test_class_reduce_examples():
    x = [X(2, 6, i) for i in range(6)]
    Q = x[1] * x[2] + x[3] * x[4]
    assert class_reduce(x[0] * Q, ModSet.build(2, 6, Qs=[Q])).member
    assert not class_reduce(x[0] * x[1] * x[2], ModSet(2, 6)).member


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_planted_members_are_recognised(p, seed):
    n = 6 if p == 2 else 4
    A = random_modset(p, n, 2, 1, seed)
    f = planted_member(p, n, A, seed)
    solver = ClassSolver(A)
    assert solver.reduce(f).member
    primes, qs, q0 = solver.decompose(f)
    total = [brute_eval(q0, x) for x in points(p, n)]
    for k, x in enumerate(points(p, n)):
        v = total[k]
        for l, Q in zip(primes, A.Qs):
            v += (np.dot(l.coeffs, x) + l.constant) * brute_eval(Q, x)
        for l, q in zip(A.ells, qs):
            v += (np.dot(l.coeffs, x) + l.constant) * brute_eval(q, x)
        total[k] = v % p
    assert total == brute_table(f)


def test_modset_drops_dependent_members():
    x = [X(2, 4, i) for i in range(4)]
    Q = x[0] * x[1]
    A = ModSet.build(2, 4, Qs=[Q, Q + x[2], Q.scale(1)], ells=independent_forms(2, 4, 2, 0) * 2)
    assert A.t1 == 1 and A.t2 == 2


# ---- rank_3^c


def test_rank3c_member_is_zero():
    x = [X(2, 6, i) for i in range(6)]
    Q = x[1] * x[2] + x[3] * x[4]
    cert = rank3c_upper(x[0] * Q, ModSet.build(2, 6, Qs=[Q]), 1)
    assert cert.r == 0 and cert.triples == ()


def test_rank3c_triple_product():
    x = [X(2, 6, i) for i in range(6)]
    cert = rank3c_upper(x[0] * x[1] * x[2], ModSet(2, 6), 1)
    assert cert.r == 0 and len(cert.triples) == 1 and cert.verify()


def test_rank3c_pair_plus_triple():
    x = [X(2, 6, i) for i in range(6)]
    Q = x[0] * x[1] + x[2] * x[4] + x[3] * x[5]
    f = x[0] * Q + x[1] * x[2] * x[3]
    assert rank2(Q) == 3
    assert rank3_exact(f, r_max=3).r == 2
    cert = rank3c_upper(f, ModSet(2, 6), 1)
    assert cert.r == 1 and len(cert.triples) == 1 and cert.verify()
    # with A empty the class of f is f modulo quadratics
    assert (f - cert.reconstruct()).degree <= 2
    assert rank3c_upper(f, ModSet(2, 6), 0).r == 2


@given(st.integers(0, 2**32))
def test_rank3c_monotone_in_A(seed):
    p, n = 2, 6
    f = random_polynomial(p, n, 3, seed=seed)
    Qs = [random_polynomial(p, n, 2, seed=seed + 1 + i, min_degree=2) for i in range(2)]
    ells = independent_forms(p, n, 2, seed)
    chain = [
        ModSet(p, n),
        ModSet.build(p, n, Qs[:1]),
        ModSet.build(p, n, Qs[:1], ells[:1]),
        ModSet.build(p, n, Qs, ells[:1]),
        ModSet.build(p, n, Qs, ells),
    ]
    rs = [rank3c_upper(f, A, 1).r for A in chain]
    assert all(b <= a for a, b in zip(rs, rs[1:]))


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_rank3c_certificate_reconstructs(p, seed):
    n = 6 if p == 2 else 4
    A = random_modset(p, n, 1, 1, seed)
    f = random_polynomial(p, n, 3, seed=seed)
    cert = rank3c_upper(f, A, 2)
    assert cert.verify()
    # the representative is in the class of f
    assert ClassSolver(A).reduce(f - cert.representative).member


# ---- derivative bases


def test_basis_one_variable_cofactor():
    g = random_polynomial(2, 5, 3, seed=1, min_degree=3).rename(6, [1, 2, 3, 4, 5])
    f = X(2, 6, 0) * g
    B = derivative_basis(f, V=AffineSubspace.full(2, 6))
    assert B.rounds[0]["type"] == 1 and B.rounds[0]["t1"] <= 1
    assert B.metrics["direction_check"] == "exhaustive"
    solver = B.solver()
    for y in points(2, 6):
        assert solver.reduce(derivative(f, y)).member


def test_basis_s4():
    S4, S2 = elementary_symmetric(2, 8, 4), elementary_symmetric(2, 8, 2)
    B = derivative_basis(S4, V=AffineSubspace.full(2, 8))
    assert B.t1 == 1 and B.verify()
    U = B.A.kernel()
    # the basis quadratic agrees with S_2 on U up to an affine function
    assert span_coefficients(restrict(S2, U), [restrict(B.Qs[0], U)], affine=True) is not None
    for y in points(2, 8):
        assert s4_derivative_remainder(8, y).degree <= 2


def test_basis_u4_gate():
    f = random_polynomial(2, 8, 4, seed=5)
    B = derivative_basis(f, seed=0)
    u4 = B.metrics["u4"]
    with pytest.raises(ThresholdError) as info:
        derivative_basis(f, seed=0, u4_min=u4 + 0.01)
    assert info.value.stage == "u4" and info.value.metrics["u4"] == pytest.approx(u4)


def test_basis_rejects_cubic():
    with pytest.raises(ValueError):
        derivative_basis(random_polynomial(2, 5, 3, seed=0))


@pytest.mark.parametrize("seed", range(4))
def test_basis_verify_agrees_with_direct_reduction(seed):
    f = planted_quartic(2, 8, 1, 1, seed)
    B = derivative_basis(f, seed=seed)
    g, solver = B.restricted(), B.solver()
    ys = np.random.default_rng(seed).integers(0, 2, (40, B.V.dim))
    assert all(solver.reduce(derivative(g, y)).member for y in ys)


def test_type2_rounds_reduce_dim3c():
    seen = 0
    for seed in (1, 2):
        B = derivative_basis(planted_quartic(2, 8, 1, 1, seed), V=AffineSubspace.full(2, 8), seed=seed)
        for r in B.rounds:
            if r["type"] == 2:
                seen += 1
                assert r["dim3c_after"] < r["dim3c_before"]
    assert seen > 0


# ---- partitions


def check_partition(P, f):
    assert P.verify()
    seen = {}
    for cert in P.cells:
        for t in points(f.p, cert.cell.dim):
            pt = tuple(int(c) for c in cert.cell.embed(t))
            assert pt not in seen
            seen[pt] = cert.index
        assert brute_degree_after_restriction(f, cert.cell) == cert.degree <= 3
    V = P.partition.ambient
    assert len(seen) == f.p**V.dim


def test_partition_s4_cells_have_degree_two():
    S4 = elementary_symmetric(2, 8, 4)
    P = partition_degree_drop(S4)
    check_partition(P, S4)
    assert P.metrics["max_degree"] <= 2


def test_partition_cubic_is_trivial():
    f = random_polynomial(2, 6, 3, seed=0)
    P = partition_degree_drop(f)
    assert len(P.cells) == 1 and P.cells[0].cell.dim == 6 and P.verify()


def test_partition_product_of_disjoint_quadratics():
    x = [X(2, 8, i) for i in range(8)]
    f = (x[0] * x[1] + x[2] * x[3]) * (x[4] * x[5] + x[6] * x[7])
    P = partition_degree_drop(f)
    check_partition(P, f)
    assert len(P.cells) == 64 and all(c.cell.dim == 2 for c in P.cells)


@pytest.mark.parametrize("seed", range(3))
def test_partition_planted(seed):
    f = planted_quartic(2, 8, 1, 1, seed)
    P = partition_degree_drop(f, seed=seed)
    check_partition(P, f)
    assert P.to_csv().splitlines()[0] == "cell_index,dim,degree_of_restriction"


def test_affinizing_forms_make_quadratic_affine():
    for p, n in [(2, 6), (3, 4), (5, 4), (7, 3)]:
        for seed in range(5):
            q = random_polynomial(p, n, 2, seed=seed)
            V = kernel_of(affinizing_forms(q), p=p, n=n)
            assert brute_degree_after_restriction(q, V) <= 1


# ---- structures


def test_bias_structure_cubic_is_trivial():
    f = random_polynomial(2, 6, 3, seed=0)
    s = quartic_bias_structure(f)
    assert s.products == () and s.c == 0 and s.verify(f)


@pytest.mark.parametrize("seed", range(3))
def test_bias_structure_planted(seed):
    f = planted_quartic(2, 8, 1, 1, seed)
    s = quartic_bias_structure(f)
    assert s.variant == "bias_form" and s.verify(f)
    assert brute_table(s.reconstruct()) == brute_table(f)


@pytest.mark.parametrize("seed", range(2))
def test_bias_structure_function_of_quadratics(seed):
    f = planted_quadratic_composition(2, 8, 2, seed)
    s = quartic_bias_structure(f)
    assert s.metrics["deg_F"] <= 2 and s.verify(f)


def test_bias_structure_below_threshold():
    f = random_polynomial(2, 8, 4, seed=0)
    with pytest.raises(ThresholdError) as info:
        quartic_bias_structure(f)
    assert info.value.stage == "bias"


def test_highchar_product_of_quadratics():
    x = [X(5, 6, i) for i in range(6)]
    f = (x[0] * x[0] + x[2] * x[3]) * (x[1] * x[1] + x[4] * x[5])
    s = quartic_highchar_structure(f)
    assert s.variant == "highchar_form" and s.verify(f)
    pts = np.random.default_rng(0).integers(0, 5, (2000, 6))
    rec = s.reconstruct()
    assert all(brute_eval(rec, tuple(pt)) == brute_eval(f, tuple(pt)) for pt in pts)


def test_highchar_cubic_is_trivial():
    f = random_polynomial(5, 3, 3, seed=1)
    s = quartic_highchar_structure(f)
    assert s.products == () and s.verify(f)


def test_highchar_cube_times_variable():
    x = [X(5, 4, i) for i in range(4)]
    f = x[0] * x[0] * x[0] * x[1] + random_polynomial(5, 4, 3, seed=2)
    s = quartic_highchar_structure(f)
    assert brute_table(s.reconstruct()) == brute_table(f)
    assert s.c >= 1


def test_highchar_rejects_small_p():
    with pytest.raises(ValueError):
        quartic_highchar_structure(planted_quartic(3, 4, 1, 1, 0))


@pytest.mark.parametrize("seed", range(3))
def test_highchar_planted(seed):
    f = planted_quartic(5, 4, 1, 1, seed)
    s = quartic_highchar_structure(f, seed=seed)
    assert s.verify(f)
    assert brute_table(s.reconstruct()) == brute_table(f)


def test_structure_json_shape():
    f = planted_quartic(5, 4, 1, 1, 0)
    d = quartic_highchar_structure(f).to_dict()
    assert d["schema"] == 1 and set(d) >= {"ells", "gs", "products", "g0", "charts", "metrics"}


def test_chart_stack_flattens():
    V = kernel_of(independent_forms(2, 6, 1, 0), p=2, n=6)
    W = kernel_of(independent_forms(2, 5, 2, 1), [1, 0], p=2, n=5)
    stack = ChartStack().push(V).push(W)
    assert stack.flatten() == V.compose(W) and len(stack.to_dict()) == 2
    assert stack.flatten().dim == 3


# ---- S_4


@pytest.mark.parametrize("m", [1, 2])
def test_s4_case_study(m):
    rep = s4_case_study(m)
    assert rep["passed"] and all(rep["identities"].values())
    assert len(rep["coset_degrees"]) == 2 ** (2 * m) and max(rep["coset_degrees"]) <= 2


def test_s4_v0_restriction_is_s2():
    rep = s4_case_study(2)
    expect = elementary_symmetric(2, 3, 2).rename(4, [0, 1, 2])
    assert Polynomial.from_dict(rep["v0_restriction"]) == expect


def test_s2_pairing_by_values():
    for m in (1, 2):
        ells, rhs = s2_pairing(m)
        S2 = elementary_symmetric(2, 4 * m, 2)
        assert brute_table(rhs) == brute_table(S2)


def test_s4_rejects_large_m():
    with pytest.raises(ValueError):
        s4_case_study(4)
