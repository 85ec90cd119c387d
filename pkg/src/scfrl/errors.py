"""Exception hierarchy.

``DataError`` and ``TrainingDivergence`` subclasses map onto the CLI exit codes
2 and 3 respectively.
"""


class SCFError(Exception):
    """Base class for every error raised by the package."""


class DataError(SCFError):
    pass


class TrainingDivergence(SCFError):
    pass


# tabular data
class MissingColumn(DataError):
    pass


class DomainViolation(DataError):
    def __init__(self, row, feature, value=None):
        self.row = row
        self.feature = feature
        self.value = value
        super().__init__(f"row {row}, feature {feature!r}: value {value!r} outside domain")


class MalformedSchema(DataError):
    pass


class OutOfRange(DataError):
    pass


class EmptyPartition(DataError):
    pass


class InvalidSpec(DataError):
    pass


# neural core / classifier
class DimensionMismatch(SCFError, ValueError):
    pass


class NonFiniteLoss(TrainingDivergence):
    pass


class Diverged(TrainingDivergence):
    pass


class SingleClassData(DataError):
    pass


# environment / agent
class AlreadyTarget(SCFError):
    pass


class ImmutableFeature(SCFError):
    pass


class TerminalState(SCFError):
    pass


class NoLegalAction(SCFError):
    pass


# evaluation
class EmptyTraces(SCFError):
    pass


class NoSuccesses(SCFError):
    pass


class NoChanges(SCFError):
    pass
