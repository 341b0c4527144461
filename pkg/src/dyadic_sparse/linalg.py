"""Largest singular value by power iteration on ``A^T A`` with a dense fallback."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

DENSE_FALLBACK_LIMIT = 4096


@dataclass(frozen=True)
class NormResult:
    value: float
    converged: bool
    iterations: int
    method: str


def power_norm(apply: Callable[[np.ndarray], np.ndarray],
               apply_adjoint: Callable[[np.ndarray], np.ndarray],
               shape: tuple[int, ...],
               tol: float = 1e-9,
               max_iter: int = 20000,
               seed: int = 0,
               dense: Callable[[], np.ndarray] | None = None,
               dense_limit: int = DENSE_FALLBACK_LIMIT) -> NormResult:
    """Operator 2-norm of a linear map given as matrix-free callables.

    Stops once the eigen-residual ``|A^T A x - theta x| <= tol * theta`` for the unit
    iterate ``x``; ``theta`` is then within ``tol`` (relative) of an eigenvalue of
    ``A^T A`` and, from a generic start, of the largest one.  If the cap is hit and
    ``dense`` can build the matrix, falls back to a full SVD.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    theta = 0.0
    for it in range(1, max_iter + 1):
        y = apply_adjoint(apply(x))
        theta = float(np.vdot(x, y))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return NormResult(0.0, True, it, "power")
        r = np.linalg.norm(y - theta * x)
        if r <= tol * abs(theta):
            return NormResult(float(np.sqrt(max(theta, 0.0))), True, it, "power")
        x = y / ny
    size = int(np.prod(shape))
    if dense is not None and size <= dense_limit:
        logger.info("power iteration stalled after %d steps; dense SVD fallback", max_iter)
        return NormResult(dense_norm(dense()), True, max_iter, "dense")
    logger.warning("power iteration did not converge (size %d)", size)
    return NormResult(float(np.sqrt(max(theta, 0.0))), False, max_iter, "power")


def dense_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(M, check_finite=False)[0])


def psd_power(M: np.ndarray, p: float, floor: float = 1e-12) -> np.ndarray:
    """``M**p`` for (a stack of) symmetric positive-definite matrices via ``eigh``.

    Eigenvalues below ``floor * trace`` raise ``ValueError``.
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    w, V = np.linalg.eigh(M)
    tr = np.trace(M, axis1=-2, axis2=-1)
    if np.any(w <= floor * tr[..., None]):
        raise ValueError("matrix below the positive-definiteness floor")
    return (V * w[..., None, :] ** p) @ np.swapaxes(V, -1, -2)
