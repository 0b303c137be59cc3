"""Exception hierarchy shared by every module."""


class RPFError(Exception):
    """Base class for all recoverable errors raised by the package."""


class ConfigurationError(RPFError):
    """Malformed config, unknown policy kind or overlapping seed ranges."""


class ContractError(RPFError):
    """A precondition or shape contract was violated by the caller."""


class WorldGenerationError(RPFError):
    """Procedural world could not be generated within the retry budget."""


class DemonstrationSamplingError(RPFError):
    """No feasible start/goal pair was found within the retry budget."""


class LabelingError(RPFError):
    """Oracle labels are undefined for the visited state."""


class CheckpointError(RPFError):
    """Checkpoint is missing, truncated or does not match the model."""


class TrainingDivergedError(RPFError):
    """Loss became non-finite; the last good checkpoint was written."""
