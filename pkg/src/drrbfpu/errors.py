"""Exception hierarchy shared by all modules."""


class DRRBFError(Exception):
    """Base class for every error raised by this package."""


class NotPositiveDefiniteError(DRRBFError, ValueError):
    """Cholesky hit a non-positive pivot."""

    def __init__(self, pivot, value=None):
        self.pivot = pivot
        self.value = value
        msg = f"matrix is not positive definite (pivot {pivot}"
        if value is not None:
            msg += f", value {value:.3e}"
        super().__init__(msg + ")")


class EigenSolverError(DRRBFError):
    pass


class DegenerateNodesError(DRRBFError, ValueError):
    pass


class CoverageError(DRRBFError):
    """A point of the domain is not inside any patch."""

    def __init__(self, point, message=None):
        self.point = tuple(float(v) for v in point)
        super().__init__(message or f"point ({self.point[0]:.17g}, {self.point[1]:.17g}) is not covered by any patch")


class VanishingDenominatorError(DRRBFError):
    def __init__(self, point, value, patch=None):
        self.point = tuple(float(v) for v in point)
        self.value = value
        self.patch = patch
        where = f" in patch {patch}" if patch is not None else ""
        super().__init__(
            f"rational denominator {value:.3e} below floor at ({self.point[0]:.6g}, {self.point[1]:.6g}){where}"
        )


class FitFailure(DRRBFError):
    """One or more local fits failed; ``failures`` maps patch id to the reason."""

    def __init__(self, failures):
        self.failures = dict(failures)
        first = sorted(self.failures.items())[:5]
        detail = "; ".join(f"patch {k}: {v}" for k, v in first)
        more = "" if len(self.failures) <= 5 else f" (+{len(self.failures) - 5} more)"
        super().__init__(f"{len(self.failures)} local fit(s) failed: {detail}{more}")


class SingularityError(DRRBFError, ValueError):
    pass


class LocalFitError(DRRBFError):
    """A single patch could not be fitted; ``diagnostics`` holds size, mu tried and cause."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)


class StudyError(DRRBFError):
    """A convergence-study rung failed; the message names the rung."""

    def __init__(self, n, cause):
        self.n = n
        super().__init__(f"N={n}: {type(cause).__name__}: {cause}")
