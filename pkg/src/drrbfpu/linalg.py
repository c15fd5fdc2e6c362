"""Patch-scale dense symmetric linear algebra.

Matrices are plain square ndarrays; symmetry is enforced on entry by
mirroring, so callers may pass rounding-asymmetric input.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import EigenSolverError, NotPositiveDefiniteError

RESIDUAL_RTOL = 1e-10


def symmetrize(M):
    """Return ``(M + M^T) / 2`` as a new float array, exactly symmetric."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    # float addition commutes, so this is bit-exactly symmetric
    return 0.5 * (M + M.T)


def cholesky_factor(M):
    """Lower-triangular ``L`` with ``L @ L.T == M``.

    Raises
    ------
    NotPositiveDefiniteError
        With the zero-based index of the failing pivot.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return M.copy()
    L, info = lapack.dpotrf(M, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return L


def cholesky_solve(L, b):
    y = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L, y, lower=True, trans="T", check_finite=False)


def solve_spd(M, b):
    """Solve ``M x = b`` for symmetric positive definite ``M`` (vector or matrix ``b``)."""
    return cholesky_solve(cholesky_factor(M), np.asarray(b, dtype=float))


@dataclass(frozen=True)
class EigenPair:
    """Smallest generalized eigenpair with its residual ``||Lambda q - lam Theta q||``."""

    eigenvalue: float
    eigenvector: np.ndarray
    residual: float


def sign_normalize(v):
    """Scale to unit 2-norm with the largest-magnitude entry positive."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    k = np.argmax(np.abs(v))
    return -v if v[k] < 0 else v


def smallest_generalized_eigenpair(Lambda, Theta):
    """Algebraically smallest eigenpair of ``Lambda q = lam Theta q``.

    ``Theta`` must be SPD. With ``Theta = L L^T`` the problem is reduced to the
    standard symmetric one for ``L^{-1} Lambda L^{-T}``, which is fully
    diagonalized (LAPACK ``syevd``); the eigenvector is mapped back with
    ``L^{-T}`` and sign-normalized.
    """
    Lambda = symmetrize(Lambda)
    Theta = symmetrize(Theta)
    if Lambda.shape != Theta.shape:
        raise ValueError(f"shape mismatch: {Lambda.shape} vs {Theta.shape}")
    L = cholesky_factor(Theta)
    X = solve_triangular(L, Lambda, lower=True, check_finite=False)
    C = symmetrize(solve_triangular(L, X.T, lower=True, check_finite=False))
    if not np.all(np.isfinite(C)):
        raise EigenSolverError("reduced matrix has non-finite entries")
    try:
        w, Y = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        off = np.linalg.norm(C - np.diag(np.diag(C)))
        raise EigenSolverError(f"symmetric eigensolver did not converge (off-diagonal norm {off:.3e})") from exc
    q = solve_triangular(L, Y[:, 0], lower=True, trans="T", check_finite=False)
    q = sign_normalize(q)
    lam = float(w[0])
    residual = float(np.linalg.norm(Lambda @ q - lam * (Theta @ q)))
    return EigenPair(lam, q, residual)


def residual_bound(Lambda, Theta, eigenvalue):
    return RESIDUAL_RTOL * (np.linalg.norm(Lambda) + abs(eigenvalue) * np.linalg.norm(Theta))
