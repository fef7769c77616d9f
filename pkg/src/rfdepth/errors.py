"""Exception hierarchy shared by every module of the package."""


class RFDepthError(Exception):
    """Base class for data and model errors raised by rfdepth."""


class DomainError(RFDepthError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class FormatError(RFDepthError, ValueError):
    """A file does not follow the expected binary or text layout."""


class ConsistencyError(RFDepthError, ValueError):
    """Two inputs that must agree (e.g. image and label counts) do not."""


class EmptyDatasetError(RFDepthError, ValueError):
    pass


class CapacityError(RFDepthError, ValueError):
    """A request needs more items than the source can provide."""


class SingularDesignError(RFDepthError, ArithmeticError):
    """A least-squares design (with intercept) is rank deficient."""


class DegenerateSpecError(RFDepthError, ValueError):
    """A synthetic problem recipe cannot be realized, e.g. zero signal."""


class TruncatedFileError(RFDepthError, OSError):
    """A binary file ended before the bytes its header promised.

    The byte offset at which reading failed is kept in ``offset``.
    """

    def __init__(self, path, offset, needed):
        self.path = str(path)
        self.offset = offset
        self.needed = needed
        super().__init__(
            f"{self.path}: truncated at byte offset {offset} "
            f"(needed {needed} more bytes)"
        )
