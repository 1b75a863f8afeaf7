"""Exception hierarchy shared by every module of the package."""


class AteError(Exception):
    """Base class for all package errors."""


class DimensionError(AteError, ValueError):
    pass


class ContractError(AteError, ValueError):
    pass


class UnknownLeafError(AteError, KeyError):
    pass


class UnsupportedFormatError(AteError, ValueError):
    pass


class ParseError(AteError, ValueError):
    pass


class TooShortError(AteError, ValueError):
    pass


class EmptyInputError(AteError, ValueError):
    pass


class ConfigError(AteError, ValueError):
    pass


class FormatError(AteError, ValueError):
    pass


class VersionError(AteError, ValueError):
    pass


class IntegrityError(AteError, ValueError):
    pass


class ValidationError(AteError, ValueError):
    pass


class RangeError(ValidationError):
    pass


class ExistenceError(AteError, FileNotFoundError):
    pass


class SpecError(AteError, ValueError):
    pass


class DegenerateInputError(AteError, ValueError):
    pass


class FoldError(AteError, ValueError):
    pass


class DivergenceError(AteError, RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch, step, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.loss = loss


class LabelIndexError(AteError, IndexError):
    pass
