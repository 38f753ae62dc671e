"""Exception hierarchy shared across the package."""


class MemeGCNError(Exception):
    """Base class for all package errors."""


class ShapeError(MemeGCNError, ValueError):
    pass


class NumericError(MemeGCNError, ArithmeticError):
    pass


class ParameterError(MemeGCNError, ValueError):
    pass


class FormatError(MemeGCNError, ValueError):
    """Malformed on-disk data. ``offset`` is a byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class LabelError(MemeGCNError, ValueError):
    """Bad label cell or a label-consistency violation. ``row`` is 1-based."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class MissingTokenError(MemeGCNError, KeyError):
    def __init__(self, tokens):
        self.tokens = list(tokens)
        super().__init__(f"tokens missing from embedding file: {', '.join(self.tokens)}")

    def __str__(self):
        return self.args[0]


class DegenerateClassError(MemeGCNError, ValueError):
    pass


class DivergenceError(NumericError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
