"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit status without a lookup table.
"""


class WoundEnsembleError(Exception):
    exit_code = 1


class UsageError(WoundEnsembleError):
    exit_code = 2


class ConfigError(WoundEnsembleError):
    exit_code = 2


class DataError(WoundEnsembleError):
    exit_code = 3


class ManifestError(DataError):
    pass


class ValidationError(DataError):
    pass


class ImageIOError(DataError):
    pass


class StratificationError(DataError):
    pass


class FoldError(DataError):
    pass


class ExtractionError(DataError):
    pass


class InputError(DataError):
    pass


class TrainingError(WoundEnsembleError):
    exit_code = 4


class EvaluationError(WoundEnsembleError):
    exit_code = 5


class StageError(WoundEnsembleError):
    """A pipeline stage failed; wraps the cause and keeps its exit code."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
