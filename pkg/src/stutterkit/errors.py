"""Exception types shared across the package.

Most errors are ValueError subclasses so that callers written against the
plain scientific-Python stack keep working; everything also derives from
StutterkitError for blanket handling at the CLI boundary.
"""


class StutterkitError(Exception):
    """Base class for all package-specific errors."""


# --- manifest handling -------------------------------------------------

class ManifestError(StutterkitError, ValueError):
    """A dataset manifest violates its contract."""


class MissingHeader(ManifestError):
    """Manifest CSV does not start with the exact expected header row."""


class UnknownLabel(ManifestError):
    """A label string is not one of the five recognised classes."""


class DuplicateKey(ManifestError):
    """Two manifest rows share the same (clip_id, source, layer) key."""


class UnresolvablePath(ManifestError):
    """A manifest path does not resolve to a readable, matching embedding file."""


class InvalidRow(ManifestError):
    """A manifest row has a malformed field (source, layer, arity)."""


# --- embedding tensor files --------------------------------------------

class Emb1Error(StutterkitError, ValueError):
    """An embedding file violates the binary tensor format."""


class BadMagic(Emb1Error):
    """File does not start with the EMB1 magic bytes."""


class UnsupportedVersion(Emb1Error):
    """Unknown format version, dtype code, or nonzero reserved bytes."""


class TruncatedPayload(Emb1Error):
    """File size disagrees with the tensor shape declared in the header."""


class NonFiniteValue(StutterkitError, ValueError):
    """A tensor holds NaN or infinity where finite values are required."""


class IoFailure(StutterkitError, OSError):
    """Reading or writing an embedding file failed at the OS level."""


class InvalidArgument(StutterkitError, ValueError):
    """An argument is outside its documented domain."""


# --- feature construction ----------------------------------------------

class EmptyTensor(StutterkitError, ValueError):
    """An operation received a tensor with no frames or no dimensions."""


class ZeroVector(StutterkitError, ValueError):
    """Cannot normalize a vector whose Euclidean norm is ~zero."""


class RowMisalignment(StutterkitError, ValueError):
    """Feature matrices to be combined do not describe the same clips in the same order."""


# --- discriminant analysis / Gaussian back-end --------------------------

class DegenerateScatter(StutterkitError, ValueError):
    """The regularized scatter problem is numerically singular or rank-deficient."""


class MissingClass(StutterkitError, ValueError):
    """A class present in the data has too few samples to estimate statistics."""


# --- distance classifiers ----------------------------------------------

class DimensionMismatch(StutterkitError, ValueError):
    """Vector or matrix widths disagree."""


class InvalidOrder(StutterkitError, ValueError):
    """Minkowski order p must be >= 1."""


class InsufficientData(StutterkitError, ValueError):
    """Fewer training samples than the classifier requires."""


# --- neural network -----------------------------------------------------

class NoDisfluentSamples(StutterkitError, ValueError):
    """The disfluency branch has no training samples with nonzero loss weight."""


class DivergedLoss(StutterkitError, RuntimeError):
    """Training or validation loss became non-finite."""


# --- fusion -------------------------------------------------------------

class NotAProbability(StutterkitError, ValueError):
    """Input vector is not on the probability simplex (within tolerance)."""


class InvalidAlpha(StutterkitError, ValueError):
    """Fusion weight alpha must lie in [0, 1]."""


class InvalidSpec(StutterkitError, ValueError):
    """A pipeline specification is internally inconsistent."""


# --- evaluation harness --------------------------------------------------

class TooFewPodcasts(StutterkitError, ValueError):
    """Podcast-level 10-fold splitting needs at least ten podcasts."""


class LengthMismatch(StutterkitError, ValueError):
    """Prediction and truth vectors differ in length."""


class MissingLayer(StutterkitError, ValueError):
    """The manifest lacks rows for a requested source/layer stream."""
