"""Sparse helpers for symmetric cyclic banded systems.

Newton systems of the barrier solver are pentadiagonal with periodic
wrap-around corners, optionally plus a rank-one term; factoring them
sparsely is O(N) instead of the O(N^3) dense path.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse
import scipy.sparse.linalg


def assemble(d0, d1=None, d2=None, tau: float = 0.0):
    """Symmetric cyclic banded matrix from diagonals.

    d0[i] is the (i, i) entry; d1[i] couples i and (i+1) mod n; d2[i]
    couples i and (i+2) mod n.  tau is added to the main diagonal.
    """
    n = len(d0)
    idx = np.arange(n)
    rows = [idx]
    cols = [idx]
    vals = [np.asarray(d0, dtype=float) + tau]
    for off, d in ((1, d1), (2, d2)):
        if d is None:
            continue
        j = (idx + off) % n
        rows.extend([idx, j])
        cols.extend([j, idx])
        vals.extend([d, d])
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    return mat.tocsc()


def try_factor(mat):
    """LU factorization; None when numerically singular."""
    try:
        lu = scipy.sparse.linalg.splu(mat)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(lu.U.diagonal())):
        return None
    return lu


def solve_shifted(d0, d1, d2, rhs, tau: float = 0.0, rank_one=None):
    """Solve (B + tau I + rho v v^T) x = rhs for cyclic banded B.

    rank_one is (rho, v) handled by the Sherman-Morrison formula.
    Returns None when the shifted matrix is singular.
    """
    lu = try_factor(assemble(d0, d1, d2, tau))
    if lu is None:
        return None
    x = lu.solve(rhs)
    if rank_one is not None:
        rho, v = rank_one
        if rho != 0.0:
            bv = lu.solve(v)
            denom = 1.0 + rho * float(v @ bv)
            if abs(denom) < 1e-300:
                return None
            x = x - (rho * float(v @ x) / denom) * bv
    if not np.all(np.isfinite(x)):
        return None
    return x


def lowest_mode(d0, d1, d2, rank_one=None):
    """Smallest eigenvalue and eigenvector (dense; used rarely)."""
    mat = assemble(d0, d1, d2).toarray()
    if rank_one is not None:
        rho, v = rank_one
        mat = mat + rho * np.outer(v, v)
    evals, evecs = np.linalg.eigh(mat)
    return float(evals[0]), evecs[:, 0], float(evals[-1])
