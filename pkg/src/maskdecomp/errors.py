"""Exception hierarchy shared by the solvers and the CLI."""


class MaskDecompError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(MaskDecompError, ValueError):
    pass


class SingularSystemError(MaskDecompError):
    """A Gram matrix could not be solved even with the configured ridge."""

    def __init__(self, component, message=None):
        self.component = component
        super().__init__(message or f"singular Gram matrix for component {component}")


class ConvergenceError(MaskDecompError):
    """An inner linear solve missed its residual target."""

    def __init__(self, residual, target, step="w-update"):
        self.residual = residual
        self.target = target
        self.step = step
        super().__init__(
            f"{step}: linear solve reached relative residual {residual:.3e} "
            f"(target {target:.3e})"
        )


class DivergenceError(MaskDecompError):
    pass


class DegenerateMappingError(MaskDecompError):
    pass


class DegenerateFitError(MaskDecompError):
    pass


class SizeLimitError(MaskDecompError):
    pass
