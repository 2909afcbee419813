__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"


class SwlabError(Exception):
    """Base class of every error raised by swlab."""


class FieldError(SwlabError, ValueError):
    """Field has the wrong shape, lives on another grid or holds non-finite values."""


class MetricError(SwlabError, ValueError):
    """Metric samples are not symmetric positive definite."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class UnsupportedConfiguration(SwlabError):
    """Operation is not available for the given configuration."""


class ConvergenceError(SwlabError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class AdmissibilityError(SwlabError, ValueError):
    """Perturbation data violates the conditions of the general equations."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class ExpressionError(SwlabError, ValueError):
    """Preset expression does not follow the trigonometric polynomial grammar."""

    def __init__(self, message, line=1, column=0):
        super().__init__("line {}, column {}: {}".format(line, column, message))
        self.line = line
        self.column = column
