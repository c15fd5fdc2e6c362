"""Local rational RBF approximant on one patch.

The approximant is ``R = p / q`` where numerator and denominator are Matern
expansions over the patch nodes. The denominator values at the nodes come
from the eigenvector of the smallest eigenvalue of ``Lambda q = lam Theta q``
with

    Lambda = D A^-1 D / |f|^2 + A^-1,    Theta = D^2 / |f|^2 + I,

``D = diag(f)`` and ``A`` the (diagonally incremented) kernel matrix. The
numerator interpolates ``f_i q_i`` and the denominator ``q_i``.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import LocalFitError, NotPositiveDefiniteError, VanishingDenominatorError
from .kernels import kernel_matrix, matern_c6_slope_over_r, matern_c6_value
from .linalg import cholesky_factor, cholesky_solve, smallest_generalized_eigenpair, symmetrize

DEFAULT_C = 35.0
DEFAULT_MU = 1e-8
MU_ESCALATION = 100.0


@dataclass(frozen=True)
class FitConfig:
    c: float = DEFAULT_C
    mu: float = DEFAULT_MU
    zero_function_threshold: float = 1e-14
    denominator_floor: float = 1e-12
    duplicate_tol: float = 1e-12

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"shape parameter c must be positive, got {self.c!r}")
        for name in ("mu", "zero_function_threshold", "denominator_floor", "duplicate_tol"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be nonnegative, got {value!r}")


@dataclass(frozen=True, eq=False)
class LocalRationalModel:
    """Fitted rational approximant of one patch.

    ``alpha`` and ``beta`` are the numerator and denominator expansion
    coefficients; ``q_values`` are the denominator values at the nodes
    (unit norm, largest entry positive). ``is_zero`` marks a patch whose data
    vanish, for which the approximant is identically zero.
    """

    node_indices: np.ndarray
    nodes: np.ndarray
    q_values: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    lambda_min: float
    f_norm: float
    mu_used: float
    c: float
    denominator_floor: float = 1e-12
    is_zero: bool = False

    @property
    def size(self):
        return len(self.nodes)


def _check_inputs(nodes, values):
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float).ravel()
    if len(nodes) < 2:
        raise LocalFitError(f"a patch needs at least 2 nodes, got {len(nodes)}", size=len(nodes))
    if len(values) != len(nodes):
        raise ValueError(f"{len(values)} values for {len(nodes)} nodes")
    if not np.all(np.isfinite(values)):
        raise ValueError("data values must be finite")
    return nodes, values


def _factor_kernel(nodes, config):
    """Cholesky of the kernel matrix, escalating the increment once on failure."""
    mu = config.mu
    for attempt in range(2):
        A = kernel_matrix(nodes, config.c, mu, duplicate_tol=config.duplicate_tol)
        try:
            return A, cholesky_factor(A), mu
        except NotPositiveDefiniteError as exc:
            if attempt == 1:
                raise LocalFitError(
                    f"kernel matrix of {len(nodes)} nodes not positive definite with mu={mu:.3e}",
                    size=len(nodes), mu=mu, pivot=exc.pivot,
                ) from exc
            mu = MU_ESCALATION * mu if mu > 0 else DEFAULT_MU


def rational_system(nodes, values, config=FitConfig()):
    """Assemble the symmetric pair ``(Lambda, Theta)`` and the kernel factor.

    Returns ``(Lambda, Theta, L, mu_used)`` where ``L`` factors ``A + mu I``.
    """
    nodes, values = _check_inputs(nodes, values)
    _, L, mu = _factor_kernel(nodes, config)
    n = len(nodes)
    f2 = float(values @ values)
    # A^-1 = W^T W with W = L^-1, so D A^-1 D = (W D)^T (W D)
    W = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    WD = W * values
    Lambda = symmetrize(WD.T @ WD / f2 + W.T @ W)
    Theta = symmetrize(np.diag(values * values / f2 + 1.0))
    return Lambda, Theta, L, mu


def model_from_denominator(nodes, values, q, L, mu, config=FitConfig(), lambda_min=float("nan"),
                           node_indices=None):
    """Build the model for given denominator node values ``q``."""
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    rhs = np.column_stack([values * q, q])
    coef = cholesky_solve(L, rhs)
    if node_indices is None:
        node_indices = np.arange(len(nodes))
    return LocalRationalModel(
        node_indices=np.asarray(node_indices),
        nodes=nodes.copy(),
        q_values=q.copy(),
        alpha=coef[:, 0].copy(),
        beta=coef[:, 1].copy(),
        lambda_min=float(lambda_min),
        f_norm=float(np.linalg.norm(values)),
        mu_used=float(mu),
        c=float(config.c),
        denominator_floor=float(config.denominator_floor),
    )


def fit_local_rational(nodes, values, config=FitConfig(), node_indices=None):
    """Fit the rational approximant to ``values`` sampled at ``nodes``.

    Raises
    ------
    LocalFitError
        Fewer than two nodes, coincident nodes, or a kernel matrix that stays
        indefinite after one increment escalation.
    """
    nodes, values = _check_inputs(nodes, values)
    try:
        f_norm = float(np.linalg.norm(values))
        if f_norm <= config.zero_function_threshold:
            _, L, mu = _factor_kernel(nodes, config)
            q = np.full(len(nodes), 1.0 / np.sqrt(len(nodes)))
            model = model_from_denominator(nodes, values, q, L, mu, config, 0.0, node_indices)
            return replace(model, alpha=np.zeros(len(nodes)), is_zero=True)
        Lambda, Theta, L, mu = rational_system(nodes, values, config)
        pair = smallest_generalized_eigenpair(Lambda, Theta)
    except LocalFitError:
        raise
    except Exception as exc:
        raise LocalFitError(f"{type(exc).__name__}: {exc}", size=len(nodes), mu=config.mu) from exc
    return model_from_denominator(nodes, values, pair.eigenvector, L, mu, config, pair.eigenvalue,
                                  node_indices)


def _points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 2), x.ndim == 1


def _check_denominator(model, pts, q):
    floor = model.denominator_floor * np.abs(model.q_values).max()
    bad = np.abs(q) < floor
    if np.any(bad):
        k = np.argmax(bad)
        raise VanishingDenominatorError(pts[k], float(q[k]))


def _expansions(model, x, with_gradient=False, axis=0):
    pts, scalar = _points(x)
    diff = pts[:, None, :] - model.nodes[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    Phi = matern_c6_value(r, model.c)
    p, q = Phi @ model.alpha, Phi @ model.beta
    _check_denominator(model, pts, q)
    if not with_gradient:
        return pts, scalar, p, q
    G = matern_c6_slope_over_r(r, model.c) * diff[:, :, axis]
    return pts, scalar, p, q, G @ model.alpha, G @ model.beta


def _axis(axis):
    if axis in (0, "x", "dx"):
        return 0
    if axis in (1, "y", "dy"):
        return 1
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def eval_local(model, x):
    """Value of ``p(x) / q(x)`` at one point (shape (2,)) or many (shape (m, 2))."""
    pts, scalar = _points(x)
    if model.is_zero:
        out = np.zeros(len(pts))
    else:
        _, _, p, q = _expansions(model, pts)
        out = p / q
    return float(out[0]) if scalar else out


def eval_local_derivative(model, x, axis):
    """Partial derivative of the local approximant along ``axis`` by the quotient rule."""
    ax = _axis(axis)
    pts, scalar = _points(x)
    if model.is_zero:
        out = np.zeros(len(pts))
    else:
        _, _, p, q, dp, dq = _expansions(model, pts, with_gradient=True, axis=ax)
        out = (dp * q - p * dq) / (q * q)
    return float(out[0]) if scalar else out


def eval_local_lagrange(model, x, values):
    """Evaluate through the q-scaled kernel instead of the quotient.

    Uses ``phi_R(x, x_j) = phi(|x - x_j|) / (q(x) q_j)`` and the matching
    interpolation matrix. Only meant as a cross-check of :func:`eval_local`.
    Returns None when some node value ``q_j`` is below the floor.
    """
    pts, scalar = _points(x)
    values = np.asarray(values, dtype=float).ravel()
    qn = model.q_values
    if np.any(np.abs(qn) < model.denominator_floor * np.abs(qn).max()):
        return None
    A = kernel_matrix(model.nodes, model.c, model.mu_used)
    A_R = A / np.outer(qn, qn)
    diff = pts[:, None, :] - model.nodes[None, :, :]
    Phi = matern_c6_value(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), model.c)
    qx = Phi @ model.beta
    _check_denominator(model, pts, qx)
    Phi_R = Phi / qn[None, :] / qx[:, None]
    out = Phi_R @ cholesky_solve(cholesky_factor(A_R), values)
    return float(out[0]) if scalar else out
