"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid device or model parameters."""


class TopologyError(ValueError):
    """Malformed netlist or cascade graph."""


class SolverError(RuntimeError):
    """The transient solver could not produce an acceptable step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""
