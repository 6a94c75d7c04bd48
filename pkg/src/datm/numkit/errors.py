"""Error types shared across the package."""


class DatmError(Exception):
    """Base class for all package errors."""


class NonFiniteError(DatmError):
    """Raised when an operation encounters NaN or Inf input."""


class ShapeError(DatmError):
    """Shape or layout mismatch between operands."""


class FormatError(DatmError):
    """Malformed binary file (bad magic, truncation, version)."""


class ChecksumError(FormatError):
    """CRC trailer does not match file contents."""


class ConfigError(DatmError):
    """Invalid or unknown configuration key/value."""


class DivergentUnroll(DatmError):
    """Non-finite or exploding parameters during an inner unroll."""

    def __init__(self, step: int, message: str = "divergent unroll"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class DegenerateSegment(DatmError):
    """Expert did not move between the sampled start and target epochs."""


class ClassExhausted(DatmError):
    """A class has no surviving samples after the mislabel filter."""

    def __init__(self, class_id: int):
        super().__init__(f"class exhausted by filter: class {class_id}")
        self.class_id = class_id
