class LorbundleError(Exception):
    pass


class DomainError(LorbundleError, ValueError):
    """Evaluation outside the chart domain or of a non-finite quantity."""


class ConsistencyError(LorbundleError):
    """An identity that must hold by construction failed numerically."""


class GaugeError(LorbundleError):
    """A gauge potential does not satisfy dP = 2 Psi."""


class ConfigurationError(LorbundleError, ValueError):
    pass


class ShapeError(ConfigurationError):
    """A configuration does not have the shape an operation requires."""


class SolvabilityError(LorbundleError, ValueError):
    def __init__(self, msg: str, mean: float | None = None):
        super().__init__(msg)
        self.mean = mean


class TranscriptionAlarm(ConsistencyError):
    """Closed-form and brute-force pipelines disagree."""

    def __init__(self, msg: str, index=None, discrepancy: float | None = None):
        super().__init__(msg)
        self.index = index
        self.discrepancy = discrepancy
