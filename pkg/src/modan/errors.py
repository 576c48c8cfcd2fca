"""Exception hierarchy.

``ValidationError`` subclasses describe bad inputs (exit code 1 on the CLI);
anything else deriving from ``ModanError`` is a runtime failure (exit code 2).
"""


class ModanError(Exception):
    pass


class ValidationError(ModanError, ValueError):
    pass


class UnknownName(ValidationError):
    pass


class EmptyLabel(ValidationError):
    pass


class DegenerateBatch(ValidationError):
    pass


class BadTarget(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class StaleCache(ModanError):
    pass


class EmptyCorpus(ValidationError):
    pass


class MissingLabels(ValidationError):
    pass


class LabelCardinality(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class BadConfig(ValidationError):
    pass


class DegenerateData(ModanError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatch(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass
