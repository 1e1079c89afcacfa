from app.constants import EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING


class TriageError(Exception):
    exit_code = 1

    def with_stage(self, stage: str):
        """Copy of this error with the pipeline stage prefixed to the message."""
        err = type(self)(f"[{stage}] {self}")
        err.__cause__ = self
        return err


class ConfigError(TriageError, ValueError):
    exit_code = EXIT_CONFIG


class DataError(TriageError, ValueError):
    exit_code = EXIT_DATA


class SchemaError(DataError):
    pass


class TrainingError(TriageError, RuntimeError):
    exit_code = EXIT_TRAINING


class ReportError(TriageError, OSError):
    exit_code = EXIT_DATA
