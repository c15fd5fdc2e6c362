"""Direct rational RBF partition-of-unity approximation of functions and their derivatives."""

from .errors import (
    CoverageError,
    DRRBFError,
    EigenSolverError,
    FitFailure,
    LocalFitError,
    NotPositiveDefiniteError,
    VanishingDenominatorError,
)
from .geometry import PatchCover, PointSet, assign_members, build_patch_cover, build_uniform_grid, covering_patches
from .localfit import FitConfig, LocalRationalModel, eval_local, eval_local_derivative, fit_local_rational
from .pum import GlobalModel, error_bound_report, eval_global, evaluate, fit_global, load_model, save_model, shepard_weights

__version__ = "0.1.0"
