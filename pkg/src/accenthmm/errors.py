"""Typed errors raised by the toolkit."""


class AccentHmmError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(AccentHmmError):
    """Feature / model dimensionality disagreement."""


class UnknownPhoneError(AccentHmmError):
    """A phone label is absent from the active model set."""

    def __init__(self, phone):
        self.phone = phone
        super().__init__(f"unknown phone label: {phone!r}")


class NoAlignmentError(AccentHmmError):
    """No state path spans the utterance."""


class NoParseError(AccentHmmError):
    """No grammar path reaches the end state."""


class InsufficientDataError(AccentHmmError):
    """Too little adaptation data for a well-posed estimate."""


class ContractError(AccentHmmError):
    """Precondition violated by the caller."""


class FormatError(AccentHmmError):
    """Malformed or truncated on-disk data."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
