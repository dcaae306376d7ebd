"""Exception hierarchy shared by all spoofsmith modules."""


class SpoofsmithError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SpoofsmithError):
    """Invalid or incompatible tensor/layer shapes."""


class InvalidArgumentError(SpoofsmithError):
    """An argument violates an operation's contract."""


class DegenerateBatchError(SpoofsmithError):
    """Batch statistics cannot be computed (e.g. single-element channel)."""


class OptimStateError(SpoofsmithError):
    """Optimizer state is inconsistent with the parameters/gradients."""


class InsufficientDataError(SpoofsmithError):
    """Not enough (or not diverse enough) data to run a training stage."""


class StratifyError(SpoofsmithError):
    """A stratum is too small for a stratified split."""


class ConfigError(SpoofsmithError):
    """Unknown option or malformed configuration value."""


class ManifestError(SpoofsmithError):
    """Malformed dataset manifest."""


class DecodeError(SpoofsmithError):
    """Unsupported or corrupt image file."""


class DegenerateInputError(SpoofsmithError):
    """Metric input lacks one of the two classes."""


class EmptyInputError(SpoofsmithError):
    """Metric input is empty."""


class CheckpointVersionError(SpoofsmithError):
    """Checkpoint or tensor blob with an unsupported format version."""


class CheckpointCorruptError(SpoofsmithError):
    """Truncated or otherwise corrupt checkpoint/tensor blob."""
