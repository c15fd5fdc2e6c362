"""Benchmark functions, error metrics and the convergence study driver."""

from dataclasses import dataclass
import csv
import io
import math
import time

import numpy as np

from .errors import DRRBFError, SingularityError, StudyError
from .geometry import PointSet, build_patch_cover, build_uniform_grid
from .localfit import DEFAULT_C, DEFAULT_MU, FitConfig
from .pum import evaluate, fit_global

# ---------------------------------------------------------------- steep front

FRONT_CENTER = (1.5, 0.25)
FRONT_RADIUS = 0.92
FRONT_SLOPE = 125.0


def _front_s(x, y):
    s = np.hypot(np.asarray(x, float) - FRONT_CENTER[0], np.asarray(y, float) - FRONT_CENTER[1])
    # the front center lies outside the unit square
    assert np.all(s > 0)
    return s


def test1_value(x, y):
    return np.arctan(FRONT_SLOPE * (_front_s(x, y) - FRONT_RADIUS))


def _test1_grad_factor(x, y):
    s = _front_s(x, y)
    t = FRONT_SLOPE * (s - FRONT_RADIUS)
    return FRONT_SLOPE / (s * (1.0 + t * t))


def test1_dx(x, y):
    return _test1_grad_factor(x, y) * (np.asarray(x, float) - FRONT_CENTER[0])


def test1_dy(x, y):
    return _test1_grad_factor(x, y) * (np.asarray(y, float) - FRONT_CENTER[1])


# ---------------------------------------------------------------- tan lines

TAN_FREQ = 9.0
TAN_SCALE = math.tan(9.0) + 1.0
SINGULAR_TOL = 1e-12


def singular_offsets():
    """Offsets ``b`` of the pole lines ``y = x + b`` that cross the unit square."""
    # 9(y - x) + 1 = (k + 1/2) pi with y - x in [-1, 1]
    k_lo = math.ceil((1.0 - TAN_FREQ) / math.pi - 0.5)
    k_hi = math.floor((1.0 + TAN_FREQ) / math.pi - 0.5)
    return np.array([((k + 0.5) * math.pi - 1.0) / TAN_FREQ for k in range(k_lo, k_hi + 1)])


def distance_to_singular_lines(x, y):
    t = np.asarray(y, float) - np.asarray(x, float)
    return np.min(np.abs(t[..., None] - singular_offsets()), axis=-1) / math.sqrt(2.0)


def _tan_arg(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(distance_to_singular_lines(x, y) < SINGULAR_TOL):
        raise SingularityError("tan-lines function evaluated on a singular line")
    return TAN_FREQ * (y - x) + 1.0


def test2_value(x, y):
    return np.tan(_tan_arg(x, y)) / TAN_SCALE


def test2_dx(x, y):
    return -TAN_FREQ / (np.cos(_tan_arg(x, y)) ** 2 * TAN_SCALE)


def test2_dy(x, y):
    return TAN_FREQ / (np.cos(_tan_arg(x, y)) ** 2 * TAN_SCALE)


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # keep pytest from collecting this class

    id: str
    value: object
    d_dx: object
    d_dy: object
    singular: bool = False

    def derivative(self, deriv):
        return {"none": self.value, "dx": self.d_dx, "x": self.d_dx, "dy": self.d_dy, "y": self.d_dy}[deriv]


TEST_FUNCTIONS = {
    "steep-front": TestFunction("steep-front", test1_value, test1_dx, test1_dy),
    "tan-lines": TestFunction("tan-lines", test2_value, test2_dx, test2_dy, singular=True),
}

NUDGE_TOL = 1e-10
NUDGE = 1e-8


def nudge_off_singular_lines(coords):
    """Shift points lying within NUDGE_TOL of a pole line by NUDGE in x.

    The shift is +NUDGE unless that would leave the square.
    """
    pts = np.array(coords, dtype=float).reshape(-1, 2)
    hit = distance_to_singular_lines(pts[:, 0], pts[:, 1]) < NUDGE_TOL
    if np.any(hit):
        step = np.where(pts[hit, 0] + NUDGE <= 1.0, NUDGE, -NUDGE)
        pts[hit, 0] += step
    return pts


def sample_points(function, points):
    pts = points.coords if isinstance(points, PointSet) else np.asarray(points, float)
    if function.singular:
        pts = nudge_off_singular_lines(pts)
    return PointSet(pts) if isinstance(points, PointSet) else pts


# ---------------------------------------------------------------- metrics


def relative_l2_error(approx, exact):
    approx = np.asarray(approx, dtype=float).ravel()
    exact = np.asarray(exact, dtype=float).ravel()
    if approx.shape != exact.shape:
        raise ValueError(f"length mismatch: {approx.size} vs {exact.size}")
    denom = np.linalg.norm(exact)
    if denom == 0:
        raise ValueError("relative error undefined for a zero exact vector")
    return float(np.linalg.norm(exact - approx) / denom)


def convergence_order(e_prev, e_curr):
    """Observed order ``log2(e_prev / e_curr)`` between successive rungs."""
    if not (e_prev > 0 and e_curr > 0):
        raise ValueError(f"errors must be positive, got {e_prev!r}, {e_curr!r}")
    return math.log2(e_prev / e_curr)


# ---------------------------------------------------------------- study

DEFAULT_LADDER = (1089, 4225, 16641, 65536)


@dataclass
class ConvergenceRow:
    N: int
    e0: float
    e1: float
    order0: float | None = None
    order1: float | None = None
    fit_seconds: float = 0.0
    eval_seconds: float = 0.0


@dataclass(frozen=True)
class StudyConfig:
    function: str = "steep-front"
    ladder: tuple = DEFAULT_LADDER
    n_patches: int = 1024
    c: float = DEFAULT_C
    overlap: float = 1.0
    mu: float = DEFAULT_MU
    eval_grid: int = 100
    deriv: str = "x"
    workers: int | None = None

    def __post_init__(self):
        if self.function not in TEST_FUNCTIONS:
            raise ValueError(f"unknown function {self.function!r}; choose from {sorted(TEST_FUNCTIONS)}")
        ladder = tuple(int(n) for n in self.ladder)
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"node ladder must be nonempty and strictly increasing, got {self.ladder!r}")
        for n in ladder:
            side = math.isqrt(n)
            if side * side != n or side < 2:
                raise ValueError(f"ladder entry {n} is not a square n^2 with n >= 2")
        object.__setattr__(self, "ladder", ladder)
        if self.deriv not in ("x", "y"):
            raise ValueError(f"deriv must be 'x' or 'y', got {self.deriv!r}")
        if self.eval_grid < 2:
            raise ValueError("eval grid side must be >= 2")
        FitConfig(c=self.c, mu=self.mu)

    @property
    def fit_config(self):
        return FitConfig(c=self.c, mu=self.mu)


def eval_grid_points(config):
    fn = TEST_FUNCTIONS[config.function]
    return sample_points(fn, build_uniform_grid(config.eval_grid))


def fit_rung(config, n):
    """Fit the model for one ladder rung; returns ``(model, fit_seconds)``."""
    fn = TEST_FUNCTIONS[config.function]
    nodes = sample_points(fn, build_uniform_grid(math.isqrt(n)))
    cover = build_patch_cover(config.n_patches, config.overlap)
    t0 = time.perf_counter()
    model = fit_global(nodes, fn.value(nodes.x, nodes.y), cover, config.fit_config, workers=config.workers)
    return model, time.perf_counter() - t0


def run_convergence_study(config=StudyConfig(), log=None):
    """Fit every rung of the ladder and measure value and derivative errors."""
    fn = TEST_FUNCTIONS[config.function]
    deriv = "d" + config.deriv
    grid = eval_grid_points(config)
    exact0 = fn.value(grid.x, grid.y)
    exact1 = fn.derivative(deriv)(grid.x, grid.y)
    rows = []
    for n in config.ladder:
        try:
            model, fit_s = fit_rung(config, n)
            t0 = time.perf_counter()
            e0 = relative_l2_error(evaluate(model, grid, "none"), exact0)
            e1 = relative_l2_error(evaluate(model, grid, deriv), exact1)
            eval_s = time.perf_counter() - t0
        except (DRRBFError, ValueError) as exc:
            raise StudyError(n, exc) from exc
        row = ConvergenceRow(n, e0, e1, fit_seconds=fit_s, eval_seconds=eval_s)
        if rows:
            row.order0 = convergence_order(rows[-1].e0, e0)
            row.order1 = convergence_order(rows[-1].e1, e1)
        rows.append(row)
        if log:
            log(row)
    return rows


CSV_FIELDS = ("N", "Nc", "c", "overlap", "mu", "e0", "order0", "e1", "order1", "fit_seconds", "eval_seconds")


def study_metadata(config):
    return (
        f"# drrbfpu study function={config.function} n_patches={config.n_patches} c={config.c:g} "
        f"overlap={config.overlap:g} mu={config.mu:g} eval_grid={config.eval_grid}x{config.eval_grid} "
        f"eval_boundary=included deriv={config.deriv}"
    )


def format_study_csv(rows, config):
    buf = io.StringIO()
    buf.write(study_metadata(config) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow([
            r.N, config.n_patches, f"{config.c:g}", f"{config.overlap:g}", f"{config.mu:g}",
            f"{r.e0:.6e}", "" if r.order0 is None else f"{r.order0:.3f}",
            f"{r.e1:.6e}", "" if r.order1 is None else f"{r.order1:.3f}",
            f"{r.fit_seconds:.3f}", f"{r.eval_seconds:.3f}",
        ])
    return buf.getvalue()


def write_study_csv(path, rows, config):
    with open(path, "w") as fh:
        fh.write(format_study_csv(rows, config))


def read_study_csv(path):
    """Parse a study CSV back into rows (the metadata line is skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        opt = lambda s: float(s) if s else None  # noqa: E731
        rows.append(ConvergenceRow(
            int(rec["N"]), float(rec["e0"]), float(rec["e1"]), opt(rec["order0"]), opt(rec["order1"]),
            float(rec["fit_seconds"]), float(rec["eval_seconds"]),
        ))
    return rows


def surface_table(model, function, points, deriv="none"):
    """Columns ``x, y, approx, exact, abs_err`` for plotting a surface."""
    pts = sample_points(function, points)
    coords = pts.coords if isinstance(pts, PointSet) else pts
    approx = evaluate(model, coords, deriv)
    exact = function.derivative(deriv)(coords[:, 0], coords[:, 1])
    return np.column_stack([coords, approx, exact, np.abs(approx - exact)])


def write_surface_csv(path, table):
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header="x,y,approx,exact,abs_err", comments="")
