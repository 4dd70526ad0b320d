"""Exception hierarchy shared by every module."""


class ElasticGestureError(Exception):
    """Base class for all errors raised by the package."""


class TopologyMismatchError(ElasticGestureError, ValueError):
    pass


class InvalidArgumentError(ElasticGestureError, ValueError):
    pass


class InvalidPlanError(ElasticGestureError, ValueError):
    pass


class OversizedInputError(ElasticGestureError, ValueError):
    pass


class FixedLengthRequiredError(ElasticGestureError, ValueError):
    pass


class DegenerateNormalizationError(ElasticGestureError, ValueError):
    pass


class KernelDomainError(ElasticGestureError, ValueError):
    pass


class DegenerateTrainingError(ElasticGestureError, ValueError):
    pass


class ProvenanceMismatchError(ElasticGestureError, ValueError):
    pass


class InvalidSplitError(ElasticGestureError, ValueError):
    pass


class SchemaError(ElasticGestureError, ValueError):
    """Malformed manifest, CSV header/row or config file."""


class DataError(ElasticGestureError, ValueError):
    """Well-formed input that carries unusable values (NaN, inf)."""
