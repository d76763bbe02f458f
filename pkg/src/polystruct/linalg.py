"""Dense linear algebra over F_p on int64 numpy arrays."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def inverse_table(p: int) -> np.ndarray:
    inv = np.zeros(p, dtype=np.int64)
    for a in range(1, p):
        inv[a] = pow(a, p - 2, p)
    return inv


def as_matrix(M, p: int, cols: int | None = None) -> np.ndarray:
    A = np.array(M, dtype=np.int64)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, cols or 0), dtype=np.int64)
    if A.size == 0 and cols is not None:
        A = A.reshape(0, cols)
    return A % p


def rref(M, p: int, cols: int | None = None) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form; returns (nonzero rows, pivot columns)."""
    A = as_matrix(M, p, cols).copy()
    inv = inverse_table(p)
    rows, ncols = A.shape
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == rows:
            break
        nz = np.flatnonzero(A[r:, c])
        if nz.size == 0:
            continue
        i = r + int(nz[0])
        if i != r:
            A[[r, i]] = A[[i, r]]
        A[r] = (A[r] * inv[A[r, c]]) % p
        col = A[:, c].copy()
        col[r] = 0
        nzr = np.flatnonzero(col)
        if nzr.size:
            A[nzr] = (A[nzr] - np.outer(col[nzr], A[r])) % p
        pivots.append(c)
        r += 1
    return A[:r], pivots


def rank(M, p: int) -> int:
    A = as_matrix(M, p)
    if A.size == 0:
        return 0
    return len(rref(A, p)[1])


def nullspace(M, p: int, cols: int | None = None) -> np.ndarray:
    """Basis (as rows) of {x : M x = 0}."""
    A = as_matrix(M, p, cols)
    ncols = A.shape[1] if cols is None else cols
    R, piv = rref(A, p, ncols) if A.shape[0] else (np.zeros((0, ncols), np.int64), [])
    free = [c for c in range(ncols) if c not in set(piv)]
    out = np.zeros((len(free), ncols), dtype=np.int64)
    for k, f in enumerate(free):
        out[k, f] = 1
        for i, pc in enumerate(piv):
            out[k, pc] = (-R[i, f]) % p
    return out


def solve(M, b, p: int) -> np.ndarray | None:
    """One solution of M x = b (free variables zero), or None."""
    A = as_matrix(M, p)
    b = np.array(b, dtype=np.int64).reshape(-1) % p
    ncols = A.shape[1]
    R, piv = rref(np.hstack([A, b.reshape(-1, 1)]), p)
    if piv and piv[-1] == ncols:
        return None
    x = np.zeros(ncols, dtype=np.int64)
    for i, pc in enumerate(piv):
        x[pc] = R[i, ncols]
    return x


def inverse(M, p: int) -> np.ndarray:
    A = as_matrix(M, p)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix is not square")
    R, piv = rref(np.hstack([A, np.eye(n, dtype=np.int64)]), p)
    if piv[:n] != list(range(n)):
        raise ValueError("matrix is singular")
    return R[:n, n:] % p


def is_invertible(M, p: int) -> bool:
    A = as_matrix(M, p)
    return A.shape[0] == A.shape[1] and rank(A, p) == A.shape[0]


def extend_to_basis(rows, p: int, n: int) -> np.ndarray:
    """Invertible n x n matrix whose leading rows are a basis of span(rows),
    completed by unit vectors (lowest index first)."""
    A = as_matrix(rows, p, n)
    basis: list[np.ndarray] = []
    current = np.zeros((0, n), dtype=np.int64)
    for v in list(A) + list(np.eye(n, dtype=np.int64)):
        trial = np.vstack([current, v])
        if rank(trial, p) > current.shape[0]:
            current = trial
            basis.append(v)
        if current.shape[0] == n:
            break
    return current % p


def independent_rows(M, p: int) -> list[int]:
    """Indices of a greedy maximal independent subset of rows."""
    A = as_matrix(M, p)
    keep: list[int] = []
    current = np.zeros((0, A.shape[1]), dtype=np.int64)
    r = 0
    for i, v in enumerate(A):
        trial = np.vstack([current, v])
        if rank(trial, p) > r:
            current, r = trial, r + 1
            keep.append(i)
    return keep
