"""Exception types shared across the package.

ConfigError covers anything the user can fix (bad arguments, bad config
files, missing prerequisites); everything else signals an internal failure.
"""


class ConfigError(Exception):
    """User-correctable configuration or argument problem."""


class DatasetError(Exception):
    """Episode invariant violation or corrupt/missing dataset file."""


class GenerationError(Exception):
    """Scene or episode generation failed (e.g. unsatisfiable placement)."""


class TrainingError(Exception):
    """Training diverged or produced non-finite values."""


class SamplingError(Exception):
    """The reverse-diffusion sampler produced non-finite values."""
