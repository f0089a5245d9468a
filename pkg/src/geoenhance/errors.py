"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Operands have incompatible shapes or a layer is misconfigured."""


class NumericalError(FloatingPointError):
    """A non-finite value showed up where only finite values are allowed."""


class StateError(RuntimeError):
    """Optimizer or model state is incomplete (e.g. a gradient is missing)."""


class LoadError(OSError):
    """A scene directory or checkpoint could not be read."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason
