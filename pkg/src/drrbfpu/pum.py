"""Partition-of-unity assembly of local rational approximants.

The global approximant is ``S(x) = sum_l w_l(x) R_l(x)`` with Shepard weights
``w_l = psi_l / sum_j psi_j`` built from the Wendland C4 function scaled to each
patch. Derivatives are assembled directly as ``sum_l w_l(x) dR_l(x)``: only the
local approximants are differentiated, never the weights, so this module has
no weight-derivative routine at all.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, FitFailure, LocalFitError, VanishingDenominatorError
from .geometry import PatchCover, PointSet, assign_members, covering_patches
from .kernels import wendland_c4_value
from .localfit import FitConfig, LocalRationalModel, eval_local, eval_local_derivative, fit_local_rational

MODEL_HEADER = "drrbfpu-model v1"
DERIVS = ("none", "dx", "dy")


def _deriv(deriv):
    aliases = {None: "none", "none": "none", "x": "dx", "dx": "dx", "y": "dy", "dy": "dy"}
    try:
        return aliases[deriv]
    except (KeyError, TypeError):
        raise ValueError(f"deriv must be one of {DERIVS}, got {deriv!r}") from None


def _local_eval(local, pts, deriv):
    if deriv == "none":
        return eval_local(local, pts)
    return eval_local_derivative(local, pts, deriv[1])


@dataclass(frozen=True)
class ShepardWeights:
    indices: np.ndarray
    weights: np.ndarray


def shepard_weights(x, cover):
    """Shepard weights of the patches covering ``x``."""
    x = np.asarray(x, dtype=float).reshape(2)
    idx = covering_patches(x, cover)
    psi = wendland_c4_value(np.linalg.norm(cover.centers[idx] - x, axis=1) / cover.radii[idx])
    total = psi.sum()
    assert total > 0, "Wendland weight vanished strictly inside its support"
    return ShepardWeights(idx, psi / total)


def _patch_psi(cover, patch, pts):
    d = np.linalg.norm(pts - cover.centers[patch], axis=1)
    return wendland_c4_value(d / cover.radii[patch])


def _weight_totals(cover, pts):
    """Per-point sum of unnormalized weights plus the patch membership of ``pts``."""
    members = assign_members(pts, cover, min_members=0, require_all_covered=False)
    total = np.zeros(len(pts))
    for l, idx in enumerate(members):
        if len(idx):
            total[idx] += _patch_psi(cover, l, pts[idx])
    if np.any(total <= 0):
        raise CoverageError(pts[np.argmax(total <= 0)])
    return members, total


def partition_of_unity_sum(points, cover):
    """``sum_l w_l(x)`` at every point, accumulated from the normalized weights."""
    pts = points.coords if isinstance(points, PointSet) else np.asarray(points, dtype=float).reshape(-1, 2)
    members, total = _weight_totals(cover, pts)
    acc = np.zeros(len(pts))
    for l, idx in enumerate(members):
        if len(idx):
            acc[idx] += _patch_psi(cover, l, pts[idx]) / total[idx]
    return acc


@dataclass(frozen=True, eq=False)
class GlobalModel:
    """Fitted partition-of-unity model; immutable and safe to share."""

    cover: PatchCover
    locals: tuple
    config: FitConfig
    points: PointSet

    def __post_init__(self):
        if len(self.locals) != self.cover.count:
            raise ValueError(f"{len(self.locals)} local models for {self.cover.count} patches")

    def __call__(self, x, deriv="none"):
        return evaluate(self, x, deriv)


def fit_global(points, values, cover, config=FitConfig(), membership=None, workers=None):
    """Fit one local rational model per patch.

    Every patch must be fittable: patches with fewer than two points and
    failed local fits are collected and raised together as FitFailure.
    ``workers`` > 1 fits patches on a thread pool.
    """
    if not isinstance(points, PointSet):
        points = PointSet(points)
    values = np.asarray(values, dtype=float).ravel()
    if len(values) != len(points):
        raise ValueError(f"{len(values)} values for {len(points)} points")
    if membership is None:
        membership = assign_members(points, cover)
    failures = {l: f"only {len(membership[l])} member point(s)" for l in membership.underfilled}

    def fit(l):
        idx = membership[l]
        if l in failures:
            return l, None
        try:
            return l, fit_local_rational(points.coords[idx], values[idx], config, node_indices=idx)
        except LocalFitError as exc:
            return l, exc

    patches = range(cover.count)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit, patches))
    else:
        results = [fit(l) for l in patches]

    locals_ = [None] * cover.count
    for l, res in results:
        if isinstance(res, LocalFitError):
            failures[l] = str(res)
        elif res is not None:
            locals_[l] = res
    if failures:
        raise FitFailure(failures)
    return GlobalModel(cover, tuple(locals_), config, points)


def _contributions(model, pts, deriv):
    """Yield ``(patch, point indices, normalized weights, local values)`` per patch."""
    members, total = _weight_totals(model.cover, pts)
    for l, idx in enumerate(members):
        if len(idx) == 0:
            continue
        w = _patch_psi(model.cover, l, pts[idx]) / total[idx]
        try:
            vals = _local_eval(model.locals[l], pts[idx], deriv)
        except VanishingDenominatorError as exc:
            raise VanishingDenominatorError(exc.point, exc.value, patch=l) from exc
        yield l, idx, w, vals


def evaluate(model, x, deriv="none"):
    """Global approximant (``deriv='none'``) or its direct x/y derivative.

    ``x`` is one point of shape (2,) or an (m, 2) array; batch evaluation
    loops over patches, not points.
    """
    deriv = _deriv(deriv)
    if isinstance(x, PointSet):
        x = x.coords
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 2)
    out = np.zeros(len(pts))
    for _, idx, w, vals in _contributions(model, pts, deriv):
        out[idx] += w * vals
    return float(out[0]) if x.ndim == 1 else out


def eval_global(model, x, deriv="none"):
    """Evaluate at a single point, summing over its covering patches only."""
    deriv = _deriv(deriv)
    x = np.asarray(x, dtype=float).reshape(2)
    sw = shepard_weights(x, model.cover)
    total = 0.0
    for l, w in zip(sw.indices, sw.weights):
        try:
            total += w * _local_eval(model.locals[l], x, deriv)
        except VanishingDenominatorError as exc:
            raise VanishingDenominatorError(exc.point, exc.value, patch=int(l)) from exc
    return total


@dataclass(frozen=True)
class ErrorBoundReport:
    """Pointwise check that the blended error never exceeds the worst local error.

    ``global_error[i]`` is ``|D f - S|`` at point i and ``local_bound[i]`` the
    largest ``|D f - D R_l|`` over the patches covering it.
    """

    deriv: str
    global_error: np.ndarray
    local_bound: np.ndarray
    slack: np.ndarray
    violations: int
    max_violation: float

    @property
    def ok(self):
        return self.violations == 0


def error_bound_report(model, exact, eval_points, deriv="none", rtol=1e-12):
    """Compare global and worst-local errors at every evaluation point.

    ``exact`` is a vectorized callable ``exact(x, y)`` returning the matching
    derivative of the target function. A point violates the bound when
    ``global > local_max + rtol * max(1, |exact|)``.
    """
    deriv = _deriv(deriv)
    pts = eval_points.coords if isinstance(eval_points, PointSet) else np.asarray(eval_points, float).reshape(-1, 2)
    truth = np.asarray(exact(pts[:, 0], pts[:, 1]), dtype=float)
    approx = np.zeros(len(pts))
    worst = np.zeros(len(pts))
    for _, idx, w, vals in _contributions(model, pts, deriv):
        approx[idx] += w * vals
        worst[idx] = np.maximum(worst[idx], np.abs(truth[idx] - vals))
    err = np.abs(truth - approx)
    slack = rtol * np.maximum(1.0, np.abs(truth))
    excess = err - worst - slack
    return ErrorBoundReport(
        deriv=deriv,
        global_error=err,
        local_bound=worst,
        slack=slack,
        violations=int(np.count_nonzero(excess > 0)),
        max_violation=float(max(0.0, excess.max())) if len(excess) else 0.0,
    )


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def save_model(model, path):
    """Write the model in the plain-text ``drrbfpu-model v1`` format."""
    cfg = model.config
    lines = [
        MODEL_HEADER,
        f"config c={cfg.c:.17g} mu={cfg.mu:.17g} overlap={model.cover.overlap:.17g} "
        f"zero_function_threshold={cfg.zero_function_threshold:.17g} "
        f"denominator_floor={cfg.denominator_floor:.17g} duplicate_tol={cfg.duplicate_tol:.17g}",
        f"points {len(model.points)}",
    ]
    lines += [_fmt(p) for p in model.points.coords]
    lines.append(f"cover {model.cover.count}")
    lines += [_fmt((*c, r)) for c, r in zip(model.cover.centers, model.cover.radii)]
    for l, m in enumerate(model.locals):
        lines.append(
            f"patch {l} n={m.size} mu_used={m.mu_used:.17g} lambda_min={m.lambda_min:.17g} "
            f"f_norm={m.f_norm:.17g} zero={int(m.is_zero)}"
        )
        lines.append(" ".join(str(int(i)) for i in m.node_indices))
        lines += [_fmt(m.q_values), _fmt(m.alpha), _fmt(m.beta)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _keyvals(tokens):
    return dict(t.split("=", 1) for t in tokens)


def load_model(path):
    """Read a model written by :func:`save_model`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise ValueError(f"{path}: not a '{MODEL_HEADER}' file")
    it = iter(lines[1:])

    def expect(tag):
        line = next(it).split()
        if not line or line[0] != tag:
            raise ValueError(f"{path}: expected '{tag}' section, got {' '.join(line[:1])!r}")
        return line[1:]

    cfg = _keyvals(expect("config"))
    config = FitConfig(
        c=float(cfg["c"]), mu=float(cfg["mu"]),
        zero_function_threshold=float(cfg["zero_function_threshold"]),
        denominator_floor=float(cfg["denominator_floor"]),
        duplicate_tol=float(cfg["duplicate_tol"]),
    )
    n_points = int(expect("points")[0])
    coords = np.array([[float(v) for v in next(it).split()] for _ in range(n_points)]).reshape(-1, 2)
    points = PointSet(coords)
    n_c = int(expect("cover")[0])
    rows = np.array([[float(v) for v in next(it).split()] for _ in range(n_c)]).reshape(-1, 3)
    cover = PatchCover(rows[:, :2], rows[:, 2], overlap=float(cfg["overlap"]))
    locals_ = []
    for l in range(n_c):
        head = expect("patch")
        if int(head[0]) != l:
            raise ValueError(f"{path}: patch blocks out of order at {l}")
        meta = _keyvals(head[1:])
        idx = np.array([int(v) for v in next(it).split()], dtype=np.int64)
        q, alpha, beta = (np.array([float(v) for v in next(it).split()]) for _ in range(3))
        locals_.append(LocalRationalModel(
            node_indices=idx, nodes=points.coords[idx].copy(), q_values=q, alpha=alpha, beta=beta,
            lambda_min=float(meta["lambda_min"]), f_norm=float(meta["f_norm"]),
            mu_used=float(meta["mu_used"]), c=config.c,
            denominator_floor=config.denominator_floor, is_zero=bool(int(meta["zero"])),
        ))
    return GlobalModel(cover, tuple(locals_), config, points)
