"""Exception hierarchy shared across the package."""


class SmashError(Exception):
    """Base class for all errors raised by this package."""


# --- relational engine ---

class EngineError(SmashError):
    pass


class UnknownAttribute(EngineError):
    pass


class TypeMismatch(EngineError):
    pass


class EmptyAggregate(EngineError):
    """Aggregate over an empty, ungrouped input (we do not model NULL)."""


class AggregateOverNonNumeric(EngineError):
    pass


class InvalidJoinTree(EngineError):
    pass


class UndefinedIntermediate(EngineError):
    pass


# --- query frontend ---

class ParseError(SmashError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnsupportedConstruct(ParseError):
    pass


# --- features ---

class EmptySet(SmashError):
    pass


# --- augmentation ---

class NotAggregate(SmashError):
    pass


class NoJoins(SmashError):
    pass


# --- ml selector ---

class NonFinite(SmashError):
    pass


class TooFewExamples(SmashError):
    pass


class EmptyTraining(SmashError):
    pass


class LengthMismatch(SmashError):
    pass


class UntrainedModel(SmashError):
    pass


class UnseenFeatureDimension(SmashError):
    pass


# --- statistics ---

class AllDifferencesZero(SmashError):
    pass


class TooFewPairs(SmashError):
    pass


class ZeroVariance(SmashError):
    pass


# --- harness ---

class MissingStrategy(SmashError):
    pass
