"""Pure-numpy banded linear-algebra kernels.

Storage convention (shared with the compiled backend): a symmetric or
lower-triangular banded matrix of order ``n`` with ``bw`` sub-diagonals is
held as an array ``ab`` of shape ``(bw + 1, n)`` with

    ab[k, j] = A[j + k, j]      for j + k < n,

i.e. row ``k`` holds the ``k``-th sub-diagonal, left-aligned.  Entries with
``j + k >= n`` are padding and must be zero.

These are the reference implementations; ``_banded_cy`` is the compiled
twin selected at import when available.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def cholesky_banded_lower(ab: np.ndarray) -> tuple[np.ndarray, int]:
    """Banded Cholesky ``A = L L^T`` of a symmetric banded matrix.

    Parameters
    ----------
    ab : (bw+1, n) array
        Lower banded storage of the symmetric matrix.

    Returns
    -------
    lb : (bw+1, n) array
        Banded storage of the lower factor ``L``.  Valid only if info == 0.
    info : int
        0 on success; ``j + 1`` if the pivot at column ``j`` was not
        strictly positive (matrix not positive definite).
    """
    ab = np.ascontiguousarray(ab, dtype=np.float64)
    bw = ab.shape[0] - 1
    n = ab.shape[1]
    lb = ab.copy()
    for j in range(n):
        for c in range(max(0, j - bw), j):
            ljc = lb[j - c, c]
            if ljc == 0.0:
                continue
            stop = min(n - 1, c + bw) - j
            lb[: stop + 1, j] -= ljc * lb[j - c : j - c + stop + 1, c]
        piv = lb[0, j]
        if not piv > 0.0 or not np.isfinite(piv):
            return lb, j + 1
        s = np.sqrt(piv)
        lb[0, j] = s
        stop = min(n - 1, j + bw) - j
        if stop > 0:
            lb[1 : stop + 1, j] /= s
    return lb, 0


def forward_solve_banded(lb: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L x = b`` for banded lower-triangular ``L``."""
    bw = lb.shape[0] - 1
    n = lb.shape[1]
    x = np.array(b, dtype=np.float64, copy=True)
    for j in range(n):
        x[j] /= lb[0, j]
        stop = min(bw, n - 1 - j)
        if stop > 0:
            x[j + 1 : j + 1 + stop] -= x[j] * lb[1 : stop + 1, j]
    return x


def banded_lower_matvec(lb: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Compute ``L x`` for banded lower-triangular ``L``."""
    bw = lb.shape[0] - 1
    n = lb.shape[1]
    y = lb[0, :] * x
    for k in range(1, bw + 1):
        if k >= n:
            break
        y[k:] += lb[k, : n - k] * x[: n - k]
    return y


def banded_symmetric_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Compute ``A x`` for symmetric banded ``A``."""
    bw = ab.shape[0] - 1
    n = ab.shape[1]
    y = ab[0, :] * x
    for k in range(1, bw + 1):
        if k >= n:
            break
        band = ab[k, : n - k]
        y[k:] += band * x[: n - k]
        y[: n - k] += band * x[k:]
    return y
