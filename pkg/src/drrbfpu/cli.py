"""Command-line front end: ``drrbfpu {study,fit,eval,dump-surface,verify}``."""

import argparse
from contextlib import nullcontext
import math
import sys

import numpy as np

from . import bench
from .errors import DRRBFError
from .geometry import PointSet, build_patch_cover, build_uniform_grid
from .localfit import DEFAULT_C, DEFAULT_MU, FitConfig
from .pum import error_bound_report, evaluate, fit_global, load_model, partition_of_unity_sum, save_model


class UsageError(Exception):
    pass


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _nonneg_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value >= 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text!r}")
    return value


def _overlap(text):
    value = _positive_float(text)
    if value < 1.0 / math.sqrt(2.0):
        raise argparse.ArgumentTypeError(f"must be >= 1/sqrt(2) to cover the square: {text!r}")
    return value


def _square_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    side = math.isqrt(value) if value >= 0 else 0
    if side * side != value or side < 2:
        raise argparse.ArgumentTypeError(f"must be a perfect square m^2 with m >= 2: {text!r}")
    return value


def _ladder(text):
    try:
        values = tuple(_square_int(t.strip()) for t in text.split(",") if t.strip())
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad node ladder {text!r}: {exc}") from None
    if not values or any(b <= a for a, b in zip(values, values[1:])):
        raise argparse.ArgumentTypeError(f"node ladder must be strictly increasing: {text!r}")
    return values


def _grid_side(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 2:
        raise argparse.ArgumentTypeError(f"must be >= 2: {text!r}")
    return value


def _add_model_flags(p, n_patches=1024):
    p.add_argument("--n-patches", type=_square_int, default=n_patches, help="number of patches (perfect square)")
    p.add_argument("--shape-c", type=_positive_float, default=DEFAULT_C, help="Matern shape parameter")
    p.add_argument("--overlap", type=_overlap, default=1.0, help="patch radius / center spacing")
    p.add_argument("--mdi-mu", type=_nonneg_float, default=DEFAULT_MU, help="diagonal increment")
    p.add_argument("--workers", type=int, default=None, help="threads for patch fitting")


def build_parser():
    parser = argparse.ArgumentParser(prog="drrbfpu", description="Direct rational RBF partition-of-unity approximation.")
    sub = parser.add_subparsers(dest="command", required=True)
    functions = sorted(bench.TEST_FUNCTIONS)

    p = sub.add_parser("study", help="run a convergence study and write its CSV")
    p.add_argument("--function", choices=functions, default="steep-front")
    p.add_argument("--n-ladder", type=_ladder, default=bench.DEFAULT_LADDER)
    _add_model_flags(p)
    p.add_argument("--deriv", choices=("x", "y"), default="x")
    p.add_argument("--eval-grid", type=_grid_side, default=100)
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")

    p = sub.add_parser("fit", help="fit a model from a points CSV and save it")
    p.add_argument("--points", help="CSV with header x,y[,f]")
    p.add_argument("--n-nodes", type=_square_int, help="use an n x n uniform grid instead of --points")
    p.add_argument("--function", choices=functions, help="sample this function when the CSV has no f column")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("eval", help="evaluate a saved model at points from a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True, help="CSV with header x,y")
    p.add_argument("--deriv", choices=("none", "x", "y"), default="none")
    p.add_argument("--out", default="-")

    p = sub.add_parser("dump-surface", help="write x,y,approx,exact,abs_err on the evaluation grid")
    p.add_argument("--function", choices=functions, default="steep-front")
    p.add_argument("--n-nodes", type=_square_int, default=16641)
    _add_model_flags(p)
    p.add_argument("--deriv", choices=("none", "x", "y"), default="none")
    p.add_argument("--eval-grid", type=_grid_side, default=100)
    p.add_argument("--out", default="-")

    p = sub.add_parser("verify", help="check the partition of unity and the worst-local error bound")
    p.add_argument("--function", choices=functions, default="steep-front")
    p.add_argument("--n-nodes", type=_square_int, default=4225)
    _add_model_flags(p, n_patches=64)
    p.add_argument("--eval-grid", type=_grid_side, default=100)
    return parser


def _fit_config(args):
    return FitConfig(c=args.shape_c, mu=args.mdi_mu)


def _open_out(path):
    return nullcontext(sys.stdout) if path == "-" else open(path, "w")


def _fit_function_model(args, function):
    nodes = bench.sample_points(function, build_uniform_grid(math.isqrt(args.n_nodes)))
    cover = build_patch_cover(args.n_patches, args.overlap)
    return fit_global(nodes, function.value(nodes.x, nodes.y), cover, _fit_config(args), workers=args.workers)


def cmd_study(args):
    config = bench.StudyConfig(
        function=args.function, ladder=args.n_ladder, n_patches=args.n_patches, c=args.shape_c,
        overlap=args.overlap, mu=args.mdi_mu, eval_grid=args.eval_grid, deriv=args.deriv, workers=args.workers,
    )
    rows = bench.run_convergence_study(config)
    text = bench.format_study_csv(rows, config)
    with _open_out(args.out) as fh:
        fh.write(text)
    return 0


def _read_table(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.dtype.names is None or not {"x", "y"} <= set(data.dtype.names):
        raise UsageError(f"{path}: expected a CSV header starting with x,y")
    return np.atleast_1d(data)


def cmd_fit(args):
    if (args.points is None) == (args.n_nodes is None):
        raise UsageError("fit needs exactly one of --points or --n-nodes")
    function = bench.TEST_FUNCTIONS.get(args.function)
    if args.points:
        table = _read_table(args.points)
        coords = np.column_stack([table["x"], table["y"]])
        if "f" in table.dtype.names:
            values = np.asarray(table["f"], dtype=float)
        elif function is None:
            raise UsageError("points CSV has no f column; pass --function")
        else:
            coords = bench.nudge_off_singular_lines(coords) if function.singular else coords
            values = function.value(coords[:, 0], coords[:, 1])
        points = PointSet(coords)
    else:
        if function is None:
            raise UsageError("--n-nodes requires --function")
        points = bench.sample_points(function, build_uniform_grid(math.isqrt(args.n_nodes)))
        values = function.value(points.x, points.y)
    cover = build_patch_cover(args.n_patches, args.overlap)
    model = fit_global(points, values, cover, _fit_config(args), workers=args.workers)
    save_model(model, args.out)
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    table = _read_table(args.points)
    coords = np.column_stack([table["x"], table["y"]])
    values = evaluate(model, coords, args.deriv)
    header = "x,y,value" if args.deriv == "none" else f"x,y,d{args.deriv}"
    with _open_out(args.out) as fh:
        np.savetxt(fh, np.column_stack([coords, values]), fmt="%.17g", delimiter=",", header=header, comments="")
    return 0


def cmd_dump_surface(args):
    function = bench.TEST_FUNCTIONS[args.function]
    model = _fit_function_model(args, function)
    table = bench.surface_table(model, function, build_uniform_grid(args.eval_grid), args.deriv)
    with _open_out(args.out) as fh:
        np.savetxt(fh, table, fmt="%.17g", delimiter=",", header="x,y,approx,exact,abs_err", comments="")
    return 0


def cmd_verify(args):
    function = bench.TEST_FUNCTIONS[args.function]
    model = _fit_function_model(args, function)
    grid = bench.sample_points(function, build_uniform_grid(args.eval_grid))
    pu_dev = float(np.max(np.abs(partition_of_unity_sum(grid, model.cover) - 1.0)))
    ok = pu_dev <= 1e-12
    print(f"{'PASS' if ok else 'FAIL'} partition of unity: max |sum w - 1| = {pu_dev:.3e}")
    for deriv in ("none", "dx", "dy"):
        report = error_bound_report(model, function.derivative(deriv), grid, deriv)
        ok &= report.ok
        print(
            f"{'PASS' if report.ok else 'FAIL'} error bound ({deriv}): {report.violations} violation(s), "
            f"max global error {report.global_error.max():.3e}, max violation {report.max_violation:.3e}"
        )
    return 0 if ok else 1


COMMANDS = {
    "study": cmd_study,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "dump-surface": cmd_dump_surface,
    "verify": cmd_verify,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"drrbfpu {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DRRBFError, ValueError, OSError) as exc:
        print(f"drrbfpu {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def parse_and_dispatch(argv):
    """Run the CLI on ``argv`` and return the exit status instead of exiting."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
