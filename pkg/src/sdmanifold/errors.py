"""Exception hierarchy shared by all modules."""


class SdmError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(SdmError, ValueError):
    pass


class ModelError(SdmError):
    """Plant definition violates a structural requirement (e.g. f(0,0) != 0)."""


class DivergenceError(SdmError, FloatingPointError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class LinearSolveError(SdmError, ArithmeticError):
    pass


class RiccatiError(SdmError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class StabilizationError(RiccatiError):
    pass


class NewtonError(SdmError):
    """Newton iteration hit its iteration cap."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class GeometryError(SdmError):
    pass


class ShootingError(SdmError):
    def __init__(self, message, distances=(), stage=None):
        super().__init__(message)
        self.distances = list(distances)
        self.stage = stage


class StallError(ShootingError):
    pass


class EmptyCloudError(SdmError):
    pass


class FitError(SdmError):
    pass


class InstabilityError(SdmError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InconsistencyError(SdmError):
    pass


class UnsupportedError(SdmError):
    pass


class MissingArtifactError(SdmError, FileNotFoundError):
    pass


class SchemaError(SdmError):
    pass
