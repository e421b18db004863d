"""Exception types shared across the package."""


class AigiqaError(Exception):
    """Base class for every error raised by this package."""


# --- prompt assembly / scoring network ---

class EmptyCategorySet(AigiqaError):
    """Fewer than two quality category words were supplied."""


class CategoryTooLong(AigiqaError):
    """A category word's token sequence does not fit the context window."""


class NonFiniteFeature(AigiqaError):
    """An encoder produced NaN or Inf feature entries."""


class ShapeMismatch(AigiqaError):
    """Input tensor shape differs from what the backbone expects."""


class WidthMismatch(AigiqaError):
    """Image and text feature widths disagree."""


class NonFiniteScore(AigiqaError):
    """The regression head produced a NaN or Inf score."""


class EmptyBatch(AigiqaError):
    """A loss or reduction was requested over zero elements."""


# --- zero-shot baseline ---

class ZeroVector(AigiqaError):
    """Cosine similarity is undefined for a zero-norm vector."""


# --- correlation metrics ---

class DegenerateSeries(AigiqaError):
    """A correlation is undefined because a series carries no variation."""


# --- data pipeline ---

class MissingColumn(AigiqaError):
    """A manifest CSV lacks a column required by the dataset profile."""


class OutOfRangeLabel(AigiqaError):
    """A label falls outside the dataset's declared range."""


class DuplicateRecord(AigiqaError):
    """The same image path appears more than once in a manifest."""


class UnreadableImage(AigiqaError):
    """An image path is missing or cannot be decoded."""


class EmptySplit(AigiqaError):
    """A requested split would leave one side with zero records."""


class ZeroRange(AigiqaError):
    """Label normalization is undefined when lo == hi."""


class DecodeFailure(AigiqaError):
    """An image file exists but cannot be decoded."""


# --- training ---

class EpochOutOfRange(AigiqaError):
    """Schedule queried outside [0, epochs)."""


class NonFiniteLoss(AigiqaError):
    """Training loss became NaN or Inf; carries step diagnostics."""


class CheckpointMismatch(AigiqaError):
    """A checkpoint does not match the rebuilt frozen encoder."""


# --- experiment harness ---

class InvalidVariantParams(AigiqaError):
    """An ablation variant was configured with unsupported parameters."""


class EmptyReportList(AigiqaError):
    """Report emission was requested with no reports."""


class UnwritablePath(AigiqaError):
    """An output path cannot be created or written."""
