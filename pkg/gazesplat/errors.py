"""
Exception hierarchy shared by every gazesplat module.

The CLI and the HTTP app translate these into exit codes and JSON error
bodies respectively.
"""

from typing import Optional


class GazeSplatError(Exception):
    """Base class for all gazesplat failures."""

    code = "runtime_failure"


class InvalidArgumentError(GazeSplatError, ValueError):
    """An input value is outside the domain of an operation."""

    code = "invalid_argument"


class InvalidConfigurationError(GazeSplatError, ValueError):
    """A component was built or called with inconsistent configuration."""

    code = "invalid_configuration"


class DegenerateCovarianceError(GazeSplatError):
    """A covariance matrix is singular or has non-positive scales."""

    code = "degenerate_covariance"


class PlyFormatError(GazeSplatError):
    """A PLY file does not describe a valid Gaussian set."""

    code = "format_error"

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)


class ContractViolationError(GazeSplatError):
    """A caller broke a documented precondition (e.g. unsorted splats)."""

    code = "contract_violation"


class EmptyMaskError(GazeSplatError):
    """The ground-truth renderer produced no head pixels."""

    code = "empty_mask"


class MissingDependencyError(GazeSplatError):
    """A required collaborator (e.g. the gaze estimator) was not supplied."""

    code = "missing_dependency"


class TrainingFailureError(GazeSplatError):
    """Training diverged or missed its quality target."""

    code = "training_failure"

    def __init__(
        self,
        message: str,
        achieved: Optional[float] = None,
        last_checkpoint: Optional[str] = None,
    ):
        self.achieved = achieved
        self.last_checkpoint = last_checkpoint
        parts = [message]
        if achieved is not None:
            parts.append(f"achieved={achieved:.4f}")
        if last_checkpoint is not None:
            parts.append(f"last good checkpoint: {last_checkpoint}")
        super().__init__("; ".join(parts))


class CheckpointError(GazeSplatError):
    """A checkpoint directory is missing, empty or from another format version."""

    code = "checkpoint_error"


class DatasetExistsError(GazeSplatError):
    """Refusing to overwrite a non-empty dataset directory."""

    code = "dataset_exists"


# Errors the CLI reports with exit code 2 instead of 3.
CONFIGURATION_ERRORS = (
    InvalidArgumentError,
    InvalidConfigurationError,
    DatasetExistsError,
)
