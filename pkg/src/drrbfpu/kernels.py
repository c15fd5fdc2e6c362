"""Radial kernels: the C6 Matern trial kernel and the Wendland C4 weight.

All functions accept scalars or arrays of distances and broadcast.
"""

import numpy as np

from .errors import DegenerateNodesError

MATERN_C6_AT_ZERO = 15.0


def _check_shape(c):
    if not np.isfinite(c) or c <= 0:
        raise ValueError(f"shape parameter must be positive, got {c!r}")


def _as_distance(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise ValueError("radial distance must be nonnegative")
    return r


def matern_c6_value(r, c):
    """C6 Matern kernel ``exp(-cr) * (15 + 15cr + 6(cr)^2 + (cr)^3)``."""
    _check_shape(c)
    cr = c * _as_distance(r)
    return np.exp(-cr) * (15.0 + cr * (15.0 + cr * (6.0 + cr)))


def matern_c6_slope_over_r(r, c):
    """Return ``phi'(r) / r`` for the C6 Matern kernel.

    ``phi'(r) = -c^2 r exp(-cr) (3 + 3cr + (cr)^2)``, so the quotient has no
    removable singularity and equals ``-3 c^2`` at the origin. Cartesian
    gradients follow as ``(phi'(r)/r) * (x - x_j)``.
    """
    _check_shape(c)
    cr = c * _as_distance(r)
    return -(c * c) * np.exp(-cr) * (3.0 + cr * (3.0 + cr))


def wendland_c4_value(r):
    """Wendland C4 function ``(1-r)^6 (35r^2 + 18r + 3)`` on [0, 1], zero beyond."""
    r = _as_distance(r)
    t = np.clip(1.0 - r, 0.0, None)
    return t**6 * (35.0 * r * r + 18.0 * r + 3.0)


def pairwise_distances(a, b):
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def kernel_matrix(nodes, c, mu=0.0, duplicate_tol=1e-12):
    """Matern interpolation matrix with a diagonal increment.

    Parameters
    ----------
    nodes : array_like, shape (n, 2)
    c : float
        Shape parameter.
    mu : float
        Diagonal increment added to every diagonal entry.
    duplicate_tol : float
        Two nodes closer than this make the patch degenerate.

    Returns
    -------
    ndarray, shape (n, n)
        ``A + mu * I``; exactly symmetric.
    """
    _check_shape(c)
    if mu < 0:
        raise ValueError(f"diagonal increment must be nonnegative, got {mu!r}")
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    n = len(nodes)
    r = pairwise_distances(nodes, nodes)
    if n > 1:
        off = r[~np.eye(n, dtype=bool)]
        if off.min() < duplicate_tol:
            i, j = np.argwhere((r < duplicate_tol) & ~np.eye(n, dtype=bool))[0]
            raise DegenerateNodesError(f"nodes {i} and {j} coincide (distance {r[i, j]:.3e})")
    A = matern_c6_value(r, c)
    # mirror the upper triangle so the result is bit-exactly symmetric
    A = np.triu(A) + np.triu(A, 1).T
    A[np.diag_indices(n)] = MATERN_C6_AT_ZERO + mu
    return A
