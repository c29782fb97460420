"""Exception types shared across the package.

Everything that reports a caller mistake derives from ValueError so that
generic ``except ValueError`` in driver code keeps working; the concrete
classes exist so tests and the CLI can tell failure modes apart.
"""


class DimensionError(ValueError):
    """Array argument has the wrong rank or an incompatible shape."""


class ParameterError(ValueError):
    """Scalar argument outside its documented range, or unknown option name."""


class EmptyInputError(ValueError):
    """Operation received zero rows / zero samples where at least one is required."""


class LabelError(ValueError):
    """Class label outside [0, n_classes) or not an integer."""


class StaleGradientError(RuntimeError):
    """Optimizer stepped twice without a fresh backward pass in between."""


class MaskExhaustionError(ValueError):
    """Every modality is masked out, leaving nothing to normalize or fuse."""


class InsufficientSignalError(ValueError):
    """Signal too short for the requested operation."""


class BoundaryError(ValueError):
    """Requested window extends past the ends of the record."""


class InsufficientComplexesError(ValueError):
    """Fewer heartbeats available than a grouping needs."""


class FormatError(ValueError):
    """Malformed input file; message carries the byte offset when known."""


class ConstructionError(ValueError):
    """Virtual-subject assembly cannot satisfy its matching constraints."""


class ConfigError(ValueError):
    """Experiment configuration is missing a field or holds an invalid value."""


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or infinite; message names the epoch."""
