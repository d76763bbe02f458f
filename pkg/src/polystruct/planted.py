"""Seeded planted instances with known structure, for tests and experiments."""
from __future__ import annotations

import numpy as np

from .ffpoly import Polynomial, random_polynomial
from .linalg import rank
from .rng import as_rng
from .subspace import LinearForm


def independent_forms(p: int, n: int, k: int, seed=0) -> list[LinearForm]:
    rng = as_rng(seed)
    rows: list[np.ndarray] = []
    while len(rows) < k:
        v = rng.integers(p, n)
        if rank(np.array(rows + [v]), p) == len(rows) + 1:
            rows.append(v)
    return [LinearForm(p, tuple(int(c) for c in v)) for v in rows]


def _draw(p: int, n: int, d: int, rng, min_degree: int = 0) -> Polynomial:
    return random_polynomial(p, n, d, seed=rng.next_u64(), min_degree=min_degree)


def planted_rank3(p: int, n: int, c: int, seed=0) -> Polynomial:
    """sum_{j <= c} l_j q_j + q0 with random forms and quadratics; degree 3."""
    rng = as_rng(seed)
    for _ in range(100):
        ells = independent_forms(p, n, c, rng.next_u64())
        f = _draw(p, n, 2, rng)
        for l in ells:
            f = f + l.as_polynomial() * _draw(p, n, 2, rng, min_degree=2)
        if f.degree == 3 or c == 0:
            return f
    raise RuntimeError("could not draw a cubic")


def planted_bias_cubic(p: int, n: int, c1: int, c2: int, seed=0) -> Polynomial:
    """sum_{i <= c1} l_i q_i + g(l'_1, ..., l'_c2) with g a random cubic."""
    rng = as_rng(seed)
    for _ in range(100):
        forms = independent_forms(p, n, c1 + c2, rng.next_u64())
        f = Polynomial.zero(p, n)
        for l in forms[:c1]:
            f = f + l.as_polynomial() * _draw(p, n, 2, rng, min_degree=2)
        g = _draw(p, c2, min(3, c2 * (p - 1)), rng)
        Lam = np.array([l.coeffs for l in forms[c1:]], dtype=np.int64).reshape(c2, n)
        f = f + g.substitute(Lam.T)
        if f.degree == 3:
            return f
    raise RuntimeError("could not draw a cubic")


def planted_quadratic_composition(p: int, n: int, c: int, seed=0) -> Polynomial:
    """F(q_1, ..., q_c) with F a random quadratic in c variables and q_i
    random homogeneous quadratics; degree 4."""
    rng = as_rng(seed)
    for _ in range(100):
        qs = [_draw(p, n, 2, rng, min_degree=2) for _ in range(c)]
        F = _draw(p, c, 2, rng)
        f = Polynomial.zero(p, n)
        for mono, coef in F.terms.items():
            term = Polynomial.constant(p, n, coef)
            for q, e in zip(qs, mono):
                for _ in range(e):
                    term = term * q
            f = f + term
        if f.degree == 4:
            return f
    raise RuntimeError("could not draw a quartic")


def planted_quartic(p: int, n: int, c_lin: int, c_quad: int, seed=0) -> Polynomial:
    """sum_{i <= c_lin} l_i g_i + sum_{j <= c_quad} q_j q'_j with random cubics
    g_i and homogeneous quadratics q_j, q'_j; degree 4."""
    rng = as_rng(seed)
    for _ in range(100):
        f = Polynomial.zero(p, n)
        for l in independent_forms(p, n, c_lin, rng.next_u64()):
            f = f + l.as_polynomial() * _draw(p, n, 3, rng, min_degree=3)
        for _ in range(c_quad):
            f = f + _draw(p, n, 2, rng, min_degree=2) * _draw(p, n, 2, rng, min_degree=2)
        if f.degree == 4:
            return f
    raise RuntimeError("could not draw a quartic")
