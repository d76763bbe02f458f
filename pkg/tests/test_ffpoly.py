import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_eval, brute_table, points
from polystruct.ffpoly import (
    Polynomial,
    PrimeField,
    TruthTable,
    compose_affine,
    decode,
    encode,
    from_truth_table,
    random_polynomial,
    reduce,
    to_truth_table,
)
from polystruct.errors import ResourceLimitError

FIELDS = st.sampled_from([2, 3, 5, 7])


def x(p, n, i):
    return Polynomial.variable(p, n, i)


# ---- reduce


def test_reduce_square_over_f2():
    assert reduce([([2], 1)], 2) == x(2, 1, 0)


def test_reduce_fourth_power_over_f3():
    assert reduce([([4], 1)], 3) == Polynomial.monomial(3, [2])


def test_reduce_cancellation_over_f2():
    assert reduce([([2], 1), ([1], 1)], 2).is_zero


def test_reduce_rejects_ragged_exponents():
    with pytest.raises(ValueError):
        reduce([([1, 0], 1), ([1], 1)], 2)


@given(FIELDS, st.lists(st.tuples(st.lists(st.integers(0, 9), min_size=3, max_size=3), st.integers(-20, 20)), max_size=6))
def test_reduce_agrees_pointwise(p, raw):
    f = reduce(raw, p, 3)
    for pt in points(p, 3):
        expect = sum(c * np.prod([xi**e for xi, e in zip(pt, exps)]) for exps, c in raw) % p
        assert f.evaluate(pt) == expect
    assert all(e < p for mono in f.terms for e in mono)
    assert all(c % p for c in f.terms.values())


# ---- evaluate


def test_evaluate_examples():
    f = x(2, 2, 0) * x(2, 2, 1)
    assert f.evaluate((1, 1)) == 1
    assert f.evaluate((1, 0)) == 0
    g = Polynomial.monomial(3, [2, 0], 2) + x(3, 2, 1)
    assert g.evaluate((2, 2)) == 1


def test_evaluate_dimension_mismatch():
    with pytest.raises(ValueError):
        x(2, 2, 0).evaluate((1, 0, 1))


# ---- truth tables


def test_table_examples():
    assert to_truth_table(x(2, 1, 0)).values.tolist() == [0, 1]
    assert to_truth_table(Polynomial.zero(3, 1)).values.tolist() == [0, 0, 0]
    assert to_truth_table(x(2, 2, 0) * x(2, 2, 1)).values.tolist() == [0, 0, 0, 1]


def test_from_table_examples():
    assert from_truth_table(TruthTable(2, 1, [0, 1])) == x(2, 1, 0)
    assert from_truth_table(TruthTable(2, 2, [1, 1, 1, 1])) == Polynomial.constant(2, 2, 1)
    f = x(2, 3, 0) * x(2, 3, 1) * x(2, 3, 2)
    assert from_truth_table(to_truth_table(f)) == f


def test_from_table_rejects_bad_length():
    with pytest.raises(ValueError):
        Polynomial.from_table(2, 3, [0] * 7)


def test_table_cap(monkeypatch):
    monkeypatch.setenv("POLYSTRUCT_MAX_TABLE", "64")
    with pytest.raises(ResourceLimitError):
        Polynomial.zero(2, 7).table()


def test_table_binary_format():
    f = random_polynomial(3, 3, 4, seed=2)
    t = to_truth_table(f)
    data = t.to_bytes()
    assert data[:4] == b"PSTT" and data[4] == 3 and data[5] == 3 and len(data) == 8 + 27
    assert TruthTable.from_bytes(data) == t
    with pytest.raises(ValueError):
        TruthTable.from_bytes(b"XXXX" + data[4:])


@given(FIELDS, st.integers(1, 4), st.integers(0, 2**32))
def test_round_trip(p, n, seed):
    f = random_polynomial(p, n, min(4, n * (p - 1)), seed=seed)
    assert from_truth_table(to_truth_table(f)) == f
    assert f.table().tolist() == brute_table(f)


def test_point_encoding_little_endian():
    assert encode(np.array([1, 0, 0]), 3) == 1
    assert encode(np.array([0, 1, 0]), 3) == 3
    assert decode(5, 3, 3) == (2, 1, 0)


# ---- affine composition


def test_compose_identity_and_swap():
    f = random_polynomial(5, 3, 3, seed=1)
    assert compose_affine(f, np.eye(3, dtype=int)) == f
    swap = np.array([[0, 1], [1, 0]])
    assert compose_affine(x(2, 2, 0), swap) == x(2, 2, 1)


def test_compose_shear_over_f2():
    # x2 -> x1 + x2 turns x1 x2 into x1 x2 + x1^2 = x1 x2 + x1
    T = np.array([[1, 0], [1, 1]])
    f = x(2, 2, 0) * x(2, 2, 1)
    assert compose_affine(f, T) == f + x(2, 2, 0)


def test_compose_rejects_singular():
    with pytest.raises(ValueError):
        compose_affine(x(2, 2, 0), np.array([[1, 1], [1, 1]]))


@given(FIELDS, st.integers(0, 2**32))
def test_compose_preserves_degree_and_values(p, seed):
    rng = np.random.default_rng(seed)
    n = 3
    while True:
        T = rng.integers(0, p, (n, n))
        if round(np.linalg.det(T)) % p:
            break
    b = rng.integers(0, p, n)
    f = random_polynomial(p, n, min(3, n * (p - 1)), seed=seed)
    g = compose_affine(f, T, b)
    assert g.degree == f.degree
    for pt in points(p, n):
        y = tuple(int(v) for v in (T @ np.array(pt) + b) % p)
        assert g.evaluate(pt) == brute_eval(f, y)


# ---- functional degree over F_2


@given(st.integers(0, 2**32), st.integers(0, 3))
def test_square_of_variable_is_functionally_linear(seed, i):
    g = random_polynomial(2, 4, 3, seed=seed)
    xi = x(2, 4, i)
    assert (xi * xi * g).degree == (xi * g).degree


# ---- random polynomials


def test_random_polynomial_determinism():
    assert random_polynomial(2, 4, 3, seed=7) == random_polynomial(2, 4, 3, seed=7)
    assert random_polynomial(3, 3, 0, seed=4).is_constant


def test_random_polynomial_degree_guard():
    with pytest.raises(ValueError):
        random_polynomial(2, 3, 4)


def test_prime_field_rejects_composites():
    with pytest.raises(ValueError):
        PrimeField(4)
    with pytest.raises(ValueError):
        PrimeField(37)
    assert PrimeField(31).inv(3) * 3 % 31 == 1


def test_json_round_trip_and_errors():
    f = random_polynomial(5, 3, 3, seed=9)
    assert Polynomial.from_json(f.to_json()) == f
    assert json.loads(f.to_json())["p"] == 5
    with pytest.raises(ValueError):
        Polynomial.from_dict({"p": 2, "n": 2, "terms": [{"exps": [1], "coeff": 1}]})
    with pytest.raises(ValueError):
        Polynomial.from_dict({"p": 2})
