import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_eval, points
from polystruct.ffpoly import Polynomial, random_polynomial
from polystruct.linalg import rank
from polystruct.subspace import (
    AffineSubspace,
    EmptySubspace,
    LinearForm,
    coset_partition,
    direction_set,
    kernel_of,
    restrict,
)


def form(p, *coeffs, const=0):
    return LinearForm(p, tuple(coeffs), const)


def brute_solutions(forms, values, p, n):
    return {pt for pt in points(p, n) if all((np.dot(l.coeffs, pt) + l.constant - v) % p == 0 for l, v in zip(forms, values))}


def point_set(V):
    return {tuple(int(c) for c in row) for row in V.points()}


def test_kernel_single_form():
    V = kernel_of([form(2, 1, 0, 0)], [0])
    assert V.dim == 2 and point_set(V) == brute_solutions([form(2, 1, 0, 0)], [0], 2, 3)


def test_kernel_inconsistent_is_empty():
    V = kernel_of([form(2, 1, 0, 0), form(2, 1, 0, 0)], [0, 1])
    assert isinstance(V, EmptySubspace)


def test_kernel_coset_matches_enumeration():
    forms = [form(2, 1, 1, 0), form(2, 0, 1, 1)]
    V = kernel_of(forms, [1, 0])
    assert V.dim == 1
    assert point_set(V) == brute_solutions(forms, [1, 0], 2, 3) == {(1, 0, 0), (0, 1, 1)}


@given(st.sampled_from([2, 3, 5]), st.integers(0, 2**32))
def test_kernel_dimension_and_canonical_form(p, seed):
    rng = np.random.default_rng(seed)
    n, k = 4, int(rng.integers(0, 4))
    M = rng.integers(0, p, (k, n))
    forms = [LinearForm(p, tuple(int(c) for c in row)) for row in M]
    V = kernel_of(forms, p=p, n=n)

    assert V.dim == n - (rank(M, p) if k else 0)
    # re-derive the same set from shuffled generators and a moved base point
    if not V.dim:
        return
    while True:
        gens = rng.integers(0, p, (V.dim, V.dim))
        if rank(gens, p) == V.dim:
            break
    pts = V.points()
    W = AffineSubspace.span(p, n, (gens @ V.basis) % p, pts[len(pts) // 2])
    assert W == V and point_set(W) == point_set(V)


def test_restrict_full_space_is_identity():
    f = random_polynomial(3, 3, 4, seed=1)
    assert restrict(f, AffineSubspace.full(3, 3)) == f


def test_restrict_kills_monomial():
    x = [Polynomial.variable(2, 3, i) for i in range(3)]
    V = kernel_of([form(2, 1, 0, 0)], [0])
    assert restrict(x[0] * x[1] * x[2], V).is_zero


def test_restrict_rejects_empty():
    E = kernel_of([form(2, 1, 0), form(2, 1, 0)], [0, 1])
    with pytest.raises(ValueError):
        restrict(Polynomial.zero(2, 2), E)


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_restrict_agrees_with_f_on_V(p, seed):
    rng = np.random.default_rng(seed)
    n = 4
    forms = [LinearForm(p, tuple(int(c) for c in rng.integers(0, p, n))) for _ in range(2)]
    V = kernel_of(forms, [int(v) for v in rng.integers(0, p, 2)], p=p, n=n)
    if isinstance(V, EmptySubspace):
        return
    f = random_polynomial(p, n, 3, seed=seed)
    g = restrict(f, V)
    assert g.degree <= f.degree
    for t in points(p, V.dim):
        assert g.evaluate(t) == brute_eval(f, tuple(int(c) for c in V.embed(t)))


def test_coset_partition_examples():
    P = coset_partition(AffineSubspace.full(2, 3), [form(2, 1, 0, 0)])
    assert len(P.cells) == 2 and all(c.dim == 2 for c in P.cells)
    P = coset_partition(AffineSubspace.full(2, 4), [form(2, 1, 1, 0, 0), form(2, 0, 0, 1, 0)])
    assert len(P.cells) == 4 and all(c.dim == 2 for c in P.cells)
    seen = {}
    for i, cell in enumerate(P.cells):
        for pt in point_set(cell):
            assert pt not in seen
            seen[pt] = i
    assert set(seen) == set(points(2, 4))
    # each cell is exactly one value class of the two forms
    for pt, i in seen.items():
        key = ((pt[0] + pt[1]) % 2, pt[2])
        assert all(((q[0] + q[1]) % 2, q[2]) == key for q, j in seen.items() if j == i)
    assert P.verify()


@given(st.sampled_from([2, 3]), st.integers(0, 2**32))
def test_coset_partition_rank_nullity(p, seed):
    rng = np.random.default_rng(seed)
    n = 4
    M = rng.integers(0, p, (3, n))
    forms = [LinearForm(p, tuple(int(c) for c in row)) for row in M]
    P = coset_partition(AffineSubspace.full(p, n), forms)

    r = rank(M, p)
    assert len(P.cells) == p**r and all(c.dim == n - r for c in P.cells)
    assert P.verify()


def test_direction_set_examples():
    L = kernel_of([form(2, 1, 1, 0)], [0])
    assert direction_set(L) == L
    C = kernel_of([form(2, 1, 0, 0)], [1])
    assert direction_set(C) == kernel_of([form(2, 1, 0, 0)], [0])


@given(st.integers(0, 2**32))
def test_direction_set_is_pairwise_differences(seed):
    rng = np.random.default_rng(seed)
    p, n = 3, 3
    V = kernel_of([LinearForm(p, tuple(int(c) for c in rng.integers(0, p, n)))], [int(rng.integers(0, p))], p=p, n=n)
    if isinstance(V, EmptySubspace):
        return
    pts = V.points()
    diffs = {tuple(int(c) for c in (a - b) % p) for a in pts for b in pts}
    assert diffs == point_set(direction_set(V))


def test_subspace_json_round_trip():
    V = kernel_of([form(3, 1, 2, 0)], [2])
    assert AffineSubspace.from_json(V.to_json()) == V


def test_linear_form_polynomial_round_trip():
    l = form(5, 1, 0, 3, const=2)
    assert LinearForm.from_polynomial(l.as_polynomial()) == l
    assert not l.is_homogeneous
