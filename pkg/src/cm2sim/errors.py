"""Exception types raised by cm2sim."""


class CM2Error(Exception):
    """Base class for all cm2sim errors."""


class InvalidArgument(CM2Error, ValueError):
    """Shapes, dimensions or labels that do not fit together."""


class InvalidState(CM2Error, ValueError):
    """A matrix that should be a density operator is not one."""


class DegenerateDistribution(CM2Error):
    """Every outcome of a sampling step has negligible weight."""


class NonUniqueFixedPoint(CM2Error):
    """The unconditional channel has more than one fixed point."""


class BudgetExceeded(CM2Error):
    """Exact enumeration would need more memory than allowed."""


class MeasurementConditionError(CM2Error):
    """The measurement alters ancilla populations in the preparation eigenbasis."""


class NotIncoherent(CM2Error):
    """The model has no exact classical hidden-Markov counterpart."""
