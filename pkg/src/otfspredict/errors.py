class FormatError(ValueError):
    """Malformed dataset or checkpoint file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class NumericalError(RuntimeError):
    """NaN or Inf encountered during training or prediction."""
