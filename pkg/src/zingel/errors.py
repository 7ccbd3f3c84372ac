"""Exception types shared across the package.

``DataError`` subclasses describe problems with user-supplied inputs and map
to CLI exit code 2; the remaining ``ZingelError`` subclasses signal internal
consistency failures and map to exit code 3.
"""


class ZingelError(Exception):
    """Base class for every error raised by this package."""


class DataError(ZingelError):
    """Invalid, inconsistent or unreadable input data."""


class MalformedLineError(DataError):
    def __init__(self, path, line_number, reason):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason


class DuplicateIdError(DataError):
    pass


class JudgmentOffGridError(DataError):
    pass


class EmptyCorpusError(DataError):
    pass


class TooFewSamplesError(DataError):
    pass


class EmptySetError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class IdMismatchError(DataError):
    pass


class DimensionMismatchError(DataError):
    def __init__(self, path, line_number, reason):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = str(path)
        self.line_number = line_number


class UnreadableFileError(DataError):
    pass


class AllMaskedError(DataError):
    """A sequence with no unmasked positions reached the attention layer."""


class ShapeMismatchError(ZingelError):
    pass


class StaleCacheError(ZingelError):
    pass


class DomainError(ZingelError):
    pass
