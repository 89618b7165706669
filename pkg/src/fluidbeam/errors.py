"""Exception types shared across the package."""


class FluidbeamError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FluidbeamError, ValueError):
    """A network or experiment configuration value is out of range or inconsistent."""


class InputError(FluidbeamError, ValueError):
    """An argument has the wrong domain (negative distance, empty batch, ...)."""


class ShapeError(InputError):
    """Array arguments with incompatible shapes."""


class SelectionError(InputError):
    """A port selection indexes outside the port grid or has the wrong shape."""


class SearchCapError(FluidbeamError, RuntimeError):
    """An exhaustive enumeration would exceed the configured cap."""


class ModelIOError(FluidbeamError, RuntimeError):
    """A model file is malformed, truncated, or fails its checksum."""


class TrainingDivergedError(FluidbeamError, RuntimeError):
    """Training produced a non-finite loss."""


class ZeroNormError(FluidbeamError, ArithmeticError):
    """Normalization was asked to divide by a zero Frobenius norm."""
