"""Small dense linear-algebra kernels used by the exact oracles.

Everything here works on dense ``numpy`` arrays of modest size (a few
hundred rows at most).
"""
from __future__ import annotations

import math

import numpy as np

from .errors import NumericError

_EXPM_TERM_TOL = 1e-18
_EXPM_MAX_TERMS = 60


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    The matrix is scaled by ``2**-s`` until its infinity norm is at most 1/2,
    the series is summed until the next term is negligible, and the result is
    squared ``s`` times.

    Parameters
    ----------
    a : ndarray, shape (k, k)

    Returns
    -------
    ndarray, shape (k, k)
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expm expects a square matrix")
    norm = np.abs(a).sum(axis=1).max() if a.size else 0.0
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    b = a / (2.0**s)
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, _EXPM_MAX_TERMS):
        term = term @ b / k
        result = result + term
        if np.abs(term).max() < _EXPM_TERM_TOL:
            break
    for _ in range(s):
        result = result @ result
    return result


def solve_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` by LU with partial pivoting (LAPACK ``gesv``)."""
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular linear system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericError("linear solve produced non-finite values")
    return x


def perron_root(
    m: np.ndarray,
    shift: float = 0.0,
    tol: float = 1e-13,
    max_iter: int = 1_000_000,
) -> tuple[float, np.ndarray]:
    """Principal eigenvalue of a Metzler matrix by shifted power iteration.

    Iterates on ``m + shift*I`` (which must be entrywise nonnegative) and
    stops once the Collatz-Wielandt bounds ``min (Bv)_i/v_i`` and
    ``max (Bv)_i/v_i`` agree to ``tol`` (relative to ``max(1, |lambda|)``).

    Returns
    -------
    (eigenvalue, vector)
        The eigenvalue of ``m`` (shift removed) and a positive right
        eigenvector normalised to unit sum.
    """
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    b = m + shift * np.eye(k)
    if (b < 0).any():
        raise NumericError("shifted matrix has negative entries; increase the shift")
    v = np.full(k, 1.0 / k)
    prev_width = np.inf
    stalled = 0
    for _ in range(max_iter):
        w = b @ v
        ratios = w / v
        lo, hi = ratios.min(), ratios.max()
        total = w.sum()
        if not total > 0 or not np.isfinite(total):
            raise NumericError("power iteration collapsed (reducible or zero matrix)")
        v = w / total
        lam = 0.5 * (lo + hi)
        width = hi - lo
        scale = max(1.0, abs(lam - shift), abs(lam))
        if width <= tol * scale:
            return lam - shift, v
        # Bracket stuck at rounding level: accept.
        if width >= prev_width:
            stalled += 1
            if stalled > 50 and width <= 1e3 * np.finfo(float).eps * max(1.0, abs(lam)):
                return lam - shift, v
        else:
            stalled = 0
        prev_width = width
    raise NumericError(f"power iteration did not converge in {max_iter} steps")
