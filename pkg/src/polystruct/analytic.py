"""Bias, discrete derivatives, Gowers norms, Fourier transforms and
closeness of joint distributions.

Exact expectations are accumulated as integer counts per residue class
and turned into a complex number once, so exact paths carry no floating
accumulation error. ``*_fraction`` helpers return the exact rational value
of |E omega^f|^2 (or of a Gowers norm power) whenever it is rational.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from .errors import ResourceLimitError
from .ffpoly import Polynomial, all_points, check_table_size, decode, encode
from .rng import as_rng

GOWERS_COST_GUARD = 1 << 30


@dataclass(frozen=True)
class ComplexStat:
    real: float
    imag: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.real, self.imag)

    def __complex__(self):
        return complex(self.real, self.imag)


@dataclass(frozen=True)
class NormEstimate:
    """Bias or Gowers-norm value.

    For Monte Carlo estimates ``mean`` is the raw sample mean of
    omega^(iterated derivative), ``value = |mean| ** (1 / 2^d)`` and
    ``std_error`` is the standard error of ``mean.real``. Since |mean| is
    biased upward near zero, compare ``mean.real`` with an exact
    ``value ** 2^d`` rather than the rooted values."""

    value: float
    method: str = "exact"
    samples: int = 0
    std_error: float = 0.0
    mean: ComplexStat | None = None

    def __float__(self):
        return float(self.value)


def omega(p: int) -> complex:
    return complex(math.cos(2 * math.pi / p), math.sin(2 * math.pi / p))


def residue_counts(values: np.ndarray, p: int) -> np.ndarray:
    return np.bincount(np.asarray(values, dtype=np.int64).reshape(-1) % p, minlength=p)


def character_sum(counts, p: int) -> complex:
    """sum_a counts[a] * omega^a, evaluated once."""
    w = np.exp(2j * np.pi * np.arange(p) / p)
    return complex(np.dot(np.asarray(counts, dtype=np.float64), w))


def squared_modulus_counts(counts, p: int) -> np.ndarray:
    """N_k with |sum_a c_a omega^a|^2 = sum_k N_k omega^k (integers)."""
    c = [int(v) for v in counts]
    return np.array([sum(c[(b + k) % p] * c[b] for b in range(p)) for k in range(p)], dtype=object)


def cyclotomic_fraction(N, p: int, denom: int) -> Fraction | None:
    """sum_k N_k omega^k / denom as a Fraction when it is rational."""
    N = [int(v) for v in N]
    if p == 2:
        return Fraction(N[0] - N[1], denom)
    if any(v != N[1] for v in N[2:]):
        return None
    return Fraction(N[0] - N[1], denom)


def _real_value(N, p: int, denom: int) -> float:
    frac = cyclotomic_fraction(N, p, denom)
    if frac is not None:
        return float(frac)
    return character_sum(N, p).real / denom


# ------------------------------------------------------------ derivatives


def derivative(f: Polynomial, y: Sequence[int]) -> Polynomial:
    """Delta_y f (x) = f(x + y) - f(x)."""
    if len(y) != f.n:
        raise ValueError(f"direction has length {len(y)}, expected {f.n}")
    if not any(int(v) % f.p for v in y):
        return Polynomial.zero(f.p, f.n)
    return f.shift(y) - f


def iterated_derivative(f: Polynomial, ys: Sequence[Sequence[int]]) -> Polynomial:
    for y in ys:
        f = derivative(f, y)
    return f


def add_indices(a, b, p: int, n: int) -> np.ndarray:
    """Index of x + y for index arrays a, b (broadcasting)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if p == 2:
        return a ^ b
    pts = all_points(p, n)
    return encode((pts[a] + pts[b]) % p, p)


def derivative_tables(table: np.ndarray, p: int, n: int, ys_idx: np.ndarray) -> np.ndarray:
    """Rows of Delta_y table for each direction index in ys_idx."""
    N = p**n
    x = np.arange(N, dtype=np.int64)
    shifted = add_indices(np.asarray(ys_idx)[:, None], x[None, :], p, n)
    return (table[shifted] - table[None, :]) % p


# ------------------------------------------------------------------- bias


def bias_counts(f: Polynomial) -> np.ndarray:
    check_table_size(f.p, f.n)
    return residue_counts(f.table(), f.p)


def bias_exact(f: Polynomial) -> NormEstimate:
    """|E_x omega^f(x)| by an exact sweep of the truth table."""
    counts = bias_counts(f)
    N = f.p**f.n
    val = math.sqrt(max(_real_value(squared_modulus_counts(counts, f.p), f.p, N * N), 0.0))
    return NormEstimate(min(val, 1.0))


def bias_squared_fraction(f: Polynomial) -> Fraction | None:
    """bias(f)^2 as an exact rational, or None when it is irrational."""
    N = f.p**f.n
    return cyclotomic_fraction(squared_modulus_counts(bias_counts(f), f.p), f.p, N * N)


def bias_of_table(values: np.ndarray, p: int) -> float:
    counts = residue_counts(values, p)
    total = int(counts.sum())
    return min(abs(character_sum(counts, p)) / total, 1.0)


def bias_mc(f: Polynomial, samples: int, seed=0) -> NormEstimate:
    return gowers_norm_mc(f, 0, samples, seed)


# ------------------------------------------------------------ Gowers norms


def batch_rank(mats: np.ndarray, p: int) -> np.ndarray:
    """Ranks of a stack of matrices over F_p (shape B x r x c)."""
    from .linalg import inverse_table

    A = np.array(mats, dtype=np.int64) % p
    B, r, c = A.shape
    inv = inverse_table(p)
    rk = np.zeros(B, dtype=np.int64)
    rows = np.arange(r)
    bidx = np.arange(B)
    for col in range(c):
        avail = rows[None, :] >= rk[:, None]
        cand = (A[:, :, col] != 0) & avail
        has = cand.any(axis=1)
        if not has.any():
            continue
        sel = bidx[has]
        piv = np.argmax(cand[sel], axis=1)
        tgt = rk[sel]
        prow = A[sel, piv].copy()
        A[sel, piv] = A[sel, tgt]
        A[sel, tgt] = prow
        prow = (prow * inv[prow[:, col]][:, None]) % p
        A[sel, tgt] = prow
        factors = A[sel, :, col].copy()
        factors[np.arange(sel.size), tgt] = 0
        A[sel] = (A[sel] - factors[:, :, None] * prow[:, None, :]) % p
        rk[sel] += 1
    return rk


def derivative_tensor(f: Polynomial, d: int) -> np.ndarray:
    """T[i_1..i_d] = Delta_{e_i1}...Delta_{e_id} f, multilinear when deg f = d."""
    p, n = f.p, f.n
    table = f.table()
    tuples = np.array(list(product(range(n), repeat=d)), dtype=np.int64).reshape(-1, d)
    T = np.zeros(len(tuples), dtype=np.int64)
    for S in product((0, 1), repeat=d):
        sign = -1 if (d - sum(S)) % 2 else 1
        pts = np.zeros((len(tuples), n), dtype=np.int64)
        for j, s in enumerate(S):
            if s:
                pts[np.arange(len(tuples)), tuples[:, j]] += 1
        T += sign * table[encode(pts % p, p)]
    return (T % p).reshape((n,) * d)


def _polarization_count(f: Polynomial, d: int) -> tuple[int, int]:
    """(#(y_1..y_{d-1}) with Delta_{y_1..y_{d-1}} f of zero linear part, p^{(d-1)n})."""
    p, n = f.p, f.n
    T = derivative_tensor(f, d)
    if d == 1:
        # Delta^0 f = f of degree 1: zero linear part iff f has no linear part
        return int(not T.any()), 1
    pts = all_points(p, n)
    total = 0
    if d == 2:
        return p ** (n - int(batch_rank(T[None], p)[0])), p**n
    chunk = max(1, (1 << 20) // max(1, n * n))
    for prefix in product(range(p**n), repeat=d - 3):
        M = T
        for idx in prefix:
            M = np.tensordot(pts[idx], M, axes=([0], [0])) % p
        # M has shape (n, n, n): contract the next direction over all of F_p^n
        for start in range(0, p**n, chunk):
            Y = pts[start : start + chunk]
            mats = np.tensordot(Y, M, axes=([1], [0])) % p
            ranks = batch_rank(mats, p)
            total += int(np.sum(np.power(p, n - ranks, dtype=object)))
    return total, p ** ((d - 1) * n)


def _general_counts(f: Polynomial, d: int) -> tuple[np.ndarray, int]:
    """N_k with ||f||^(2^d) = sum_k N_k omega^k / p^((d+1)n), for d >= 1."""
    p, n = f.p, f.n
    N = p**n
    table = f.table()
    acc = np.zeros(p, dtype=object)
    xs = np.arange(N, dtype=np.int64)
    chunk = max(1, (1 << 22) // N)

    def sweep(tab: np.ndarray, depth: int):
        if depth == d - 1:
            # all last-level directions at once: rows Delta_y tab, y in F^n
            for start in range(0, N, chunk):
                ys = xs[start : start + chunk]
                rows = derivative_tables(tab, p, n, ys)
                flat = (np.arange(rows.shape[0])[:, None] * p + rows).reshape(-1)
                c = np.bincount(flat, minlength=rows.shape[0] * p).reshape(-1, p)
                for k in range(p):
                    acc[k] += int(np.sum(c * np.roll(c, -k, axis=1)))
            return
        for y in range(N):
            sweep(derivative_tables(tab, p, n, np.array([y]))[0], depth + 1)

    if d == 1:
        c = residue_counts(table, p)
        return squared_modulus_counts(c, p), N * N
    sweep(table, 1)
    return acc, N ** (d + 1)


def _check_cost(cost: int, what: str):
    if cost > GOWERS_COST_GUARD:
        raise ResourceLimitError(f"{what} needs {cost} inner steps (> 2^30); use gowers_norm_mc instead")


def gowers_power_exact(f: Polynomial, d: int) -> tuple[np.ndarray, int]:
    """(N, denom) with ||f||_{U^d}^(2^d) = |sum_k N_k omega^k| / denom."""
    p, n = f.p, f.n
    if d <= 0:
        N = p**n
        return squared_modulus_counts(bias_counts(f), p), N * N
    if f.degree <= d - 1:
        return np.array([1] + [0] * (p - 1), dtype=object), 1
    if f.degree == d:
        _check_cost(p ** ((d - 1) * n), f"polarized U^{d} sweep")
        check_table_size(p, n)
        count, denom = _polarization_count(f, d)
        return np.array([count] + [0] * (p - 1), dtype=object), denom
    _check_cost(p ** (d * n), f"exact U^{d} sweep")
    check_table_size(p, n)
    return _general_counts(f, d)


def gowers_fraction(f: Polynomial, d: int) -> Fraction | None:
    """||f||_{U^d}^(2^d) as an exact rational (d >= 1), or None."""
    N, denom = gowers_power_exact(f, max(d, 1))
    return cyclotomic_fraction(N, f.p, denom)


def gowers_norm_exact(f: Polynomial, d: int) -> NormEstimate:
    if d <= 1:
        return bias_exact(f)
    N, denom = gowers_power_exact(f, d)
    power = max(_real_value(N, f.p, denom), 0.0)
    return NormEstimate(min(power ** (1.0 / 2**d), 1.0))


def gowers_norm(f: Polynomial, d: int, samples: int | None = None, seed=0) -> NormEstimate:
    if samples is None:
        return gowers_norm_exact(f, d)
    return gowers_norm_mc(f, d, samples, seed)


def gowers_norm_mc(f: Polynomial, d: int, samples: int, seed=0) -> NormEstimate:
    """Sample mean of omega^(Delta_{y_1..y_d} f(x)) over uniform tuples."""
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    p, n = f.p, f.n
    rng = as_rng(seed)
    use_table = p**n <= 1 << 22
    table = f.table() if use_table else None
    vals = np.zeros(samples, dtype=np.int64)
    block = 1 << 14
    for start in range(0, samples, block):
        m = min(block, samples - start)
        draws = rng.integers(p, (m, d + 1, n))
        x, ys = draws[:, 0, :], draws[:, 1:, :]
        acc = np.zeros(m, dtype=np.int64)
        for S in product((0, 1), repeat=d):
            pt = x.copy()
            for j, s in enumerate(S):
                if s:
                    pt += ys[:, j, :]
            pt %= p
            v = table[encode(pt, p)] if use_table else f.evaluate_many(pt)
            sign = -1 if (d - sum(S)) % 2 else 1
            acc += sign * v
        vals[start : start + m] = acc % p
    z = np.exp(2j * np.pi * vals / p)
    mean = complex(z.mean())
    se = float(z.real.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    value = min(abs(mean) ** (1.0 / 2**d), 1.0) if d > 0 else min(abs(mean), 1.0)
    return NormEstimate(value, "monte_carlo", samples, se, ComplexStat(mean.real, mean.imag))


# --------------------------------------------------------------- Fourier


def walsh_hadamard(values) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform sum_x h(x) (-1)^(a.x)."""
    a = np.array(values).copy()
    N = a.size
    n = N.bit_length() - 1
    if 1 << n != N:
        raise ValueError("length must be a power of two")
    for k in range(n):
        v = a.reshape(-1, 2, 1 << k)
        lo = v[:, 0, :].copy()
        v[:, 0, :] = lo + v[:, 1, :]
        v[:, 1, :] = lo - v[:, 1, :]
    return a


def fourier(values, p: int, n: int | None = None) -> np.ndarray:
    """h^(alpha) = E_x h(x) conj(chi_alpha(x)) for every alpha (index order)."""
    vals = np.asarray(values)
    if n is None:
        from .ffpoly import table_length_to_n

        n = table_length_to_n(p, vals.size)
    if p**n > 1 << 22:
        raise ResourceLimitError("Fourier transform limited to p^n <= 2^22")
    N = p**n
    if p == 2:
        return walsh_hadamard(vals.astype(np.complex128)) / N
    if n == 0:
        return vals.astype(np.complex128)
    # numpy's fftn uses exp(-2 pi i k x / p) along each axis, i.e. conj(chi)
    return np.fft.fftn(vals.astype(np.complex128).reshape((p,) * n)).reshape(-1) / N


def character_table(beta, p: int) -> np.ndarray:
    n = len(beta)
    return np.exp(2j * np.pi * ((all_points(p, n) @ np.asarray(beta)) % p) / p)


# ------------------------------------------------------- joint distribution


def joint_counts(hs: Sequence[Polynomial]) -> np.ndarray:
    if not hs:
        raise ValueError("need at least one function")
    p, n = hs[0].p, hs[0].n
    m = len(hs)
    check_table_size(p, n)
    if p ** (n + m) > 1 << 30:
        raise ResourceLimitError("joint distribution sweep exceeds its cost guard")
    idx = np.zeros(p**n, dtype=np.int64)
    for i, h in enumerate(hs):
        if (h.p, h.n) != (p, n):
            raise ValueError("functions live in different spaces")
        idx += h.table() * p**i
    return np.bincount(idx, minlength=p**m)


def joint_fraction_from_tables(tables: Sequence[np.ndarray], p: int) -> Fraction:
    """max_alpha |Pr[H = alpha] - p^-m| * p^m for value tables of equal length.

    Outcomes are counted sparsely, so p^m may exceed the number of points;
    an unattained outcome then contributes exactly 1."""
    m = len(tables)
    if m * math.log2(p) > 62:
        raise ResourceLimitError("too many functions to encode a joint outcome")
    code = np.zeros(len(tables[0]), dtype=np.int64)
    for i, t in enumerate(tables):
        code += np.asarray(t, dtype=np.int64) * p**i
    N = code.size
    if p**m <= 1 << 22:
        counts = np.bincount(code, minlength=p**m)
        unattained = False
    else:
        counts = np.unique(code, return_counts=True)[1]
        unattained = counts.size < p**m
    worst = max(abs(int(counts.max()) * p**m - N), abs(int(counts.min()) * p**m - N))
    if unattained:
        worst = max(worst, N)
    return Fraction(worst, N)


def joint_distribution_fraction(hs: Sequence[Polynomial]) -> Fraction:
    """max_alpha |Pr[H = alpha] - p^-m| * p^m as an exact rational."""
    if not hs:
        raise ValueError("need at least one function")
    p, n = hs[0].p, hs[0].n
    check_table_size(p, n)
    for h in hs:
        if (h.p, h.n) != (p, n):
            raise ValueError("functions live in different spaces")
    return joint_fraction_from_tables([h.table() for h in hs], p)


def joint_distribution_distance(hs: Sequence[Polynomial]) -> float:
    return float(joint_distribution_fraction(hs))


def combination_biases(hs: Sequence[Polynomial]) -> list[tuple[tuple[int, ...], float]]:
    """bias of every nontrivial combination sum a_i h_i."""
    p, m = hs[0].p, len(hs)
    tabs = np.array([h.table() for h in hs])
    out = []
    for alpha in product(range(p), repeat=m):
        if not any(alpha):
            continue
        vals = (np.asarray(alpha) @ tabs) % p
        out.append((alpha, bias_of_table(vals, p)))
    return out


@dataclass(frozen=True)
class XorCheck:
    max_bias: float
    gamma: float
    distance: float
    holds: bool


def xor_lemma_check(hs: Sequence[Polynomial]) -> XorCheck:
    """Take gamma = max combination bias * p^(3m/2) and compare with the
    measured joint distance."""
    p, m = hs[0].p, len(hs)
    beta = max(b for _, b in combination_biases(hs))
    gamma = beta * p ** (1.5 * m)
    dist = joint_distribution_distance(hs)
    return XorCheck(beta, gamma, dist, dist <= gamma + 1e-9)


# ----------------------------------------------------- derivative profile


@dataclass
class DerivativeProfile:
    p: int
    n: int
    directions: np.ndarray
    biases: np.ndarray
    delta: float
    sampled: bool = False
    summary: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y_index", "y_digits", "bias"])
        for idx, b in zip(self.directions, self.biases):
            digits = "".join(str(v) for v in decode(int(idx), self.p, self.n))
            w.writerow([int(idx), digits, f"{b:.12f}"])
        return buf.getvalue()


def derivative_bias_profile(f: Polynomial, samples: int | None = None, seed=0) -> DerivativeProfile:
    """bias(Delta_y f) for every direction y (or a seeded sample of them)."""
    p, n = f.p, f.n
    N = p**n
    check_table_size(p, n)
    table = f.table()
    sampled = samples is not None or N * N > 1 << 26
    if sampled:
        k = samples or 4096
        dirs = np.sort(as_rng(seed).integers(N, k))
    else:
        dirs = np.arange(N, dtype=np.int64)
    biases = np.empty(len(dirs))
    chunk = max(1, (1 << 22) // N)
    for start in range(0, len(dirs), chunk):
        rows = derivative_tables(table, p, n, dirs[start : start + chunk])
        for j, row in enumerate(rows):
            biases[start + j] = bias_of_table(row, p)
    delta = bias_exact(f).value
    thresh = delta**2 / 2
    frac = float(np.mean(biases > thresh))
    mean = float(np.mean(biases))
    summary = {
        "bias": delta,
        "mean_derivative_bias": mean,
        "fraction_above": frac,
        "threshold": thresh,
        "expectation_bound_holds": mean >= delta**2 - 1e-9,
        "fraction_bound_holds": frac > thresh,
    }
    return DerivativeProfile(p, n, dirs, biases, delta, sampled, summary)
