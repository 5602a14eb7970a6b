"""
Centralized error handling utilities for pipeline stages, the CLI and the API.
"""
import functools
import logging
import time
import uuid
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple, TypeVar

from pydantic import BaseModel, Field

from core.config import ExitCode, LlmDefaults

logger = logging.getLogger(__name__)

T = TypeVar("T")


class ErrorType(str, Enum):
    """Standardized error types for consistent error handling."""
    CONFIGURATION = "configuration_error"
    VALIDATION = "validation_error"
    FRAME_FORMAT = "frame_format_error"
    STAGE = "stage_error"
    DIVERGED = "training_diverged_error"
    EXTERNAL_SERVICE = "external_service_error"
    AUTHENTICATION = "authentication_error"
    NOT_FOUND = "not_found_error"
    PROCESSING = "processing_error"


class ErrorDetail(BaseModel):
    """Structured error details."""
    stage: Optional[str] = Field(None, description="Pipeline stage that failed")
    field: Optional[str] = Field(None, description="Offending input field or path")
    service: Optional[str] = Field(None, description="External service that caused the error")
    attempts: Optional[int] = Field(None, description="Attempts made before giving up")
    suggestion: Optional[str] = Field(None, description="Suggestion for resolving the error")
    original_error: Optional[str] = Field(None, description="Original error message")


class PipelineErrorResponse(BaseModel):
    """Standardized error body (API responses and CLI diagnostics)."""
    type: ErrorType
    message: str
    details: Optional[ErrorDetail] = None
    request_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    exit_code: int = int(ExitCode.STAGE_FAILURE)
    status_code: int = 500


class PipelineException(Exception):
    """Base exception for all pipeline errors."""
    status_code: int = 500

    def __init__(
        self,
        message: str,
        error_type: ErrorType = ErrorType.PROCESSING,
        exit_code: ExitCode = ExitCode.STAGE_FAILURE,
        details: Optional[Dict[str, Any]] = None,
        original_error: Optional[BaseException] = None
    ):
        self.message = message
        self.error_type = error_type
        self.exit_code = exit_code
        self.details = ErrorDetail(**details) if details else None
        self.original_error = original_error
        super().__init__(message)

    def to_response(self) -> PipelineErrorResponse:
        """Convert exception to a structured error body."""
        return PipelineErrorResponse(
            type=self.error_type,
            message=self.message,
            details=self.details,
            exit_code=int(self.exit_code),
            status_code=self.status_code
        )


class ConfigurationError(PipelineException):
    """Raised when a config file or flag combination is invalid."""
    status_code = 400

    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        details = {
            "field": field,
            "suggestion": "Check the configuration file and command-line flags"
        }
        super().__init__(message, ErrorType.CONFIGURATION, ExitCode.CONFIG_ERROR, details, kwargs.get("original_error"))


class ValidationError(PipelineException):
    """Raised when input data violates a documented precondition."""
    status_code = 422

    def __init__(self, message: str, field: Optional[str] = None, **kwargs):
        details = {
            "field": field,
            "suggestion": "Please check your input and try again"
        }
        super().__init__(message, ErrorType.VALIDATION, ExitCode.CONFIG_ERROR, details, kwargs.get("original_error"))


class FrameFormatError(PipelineException):
    """Raised when a frame container or frame file is malformed."""
    status_code = 422

    def __init__(self, message: str, path: Optional[str] = None, **kwargs):
        details = {"field": path, "suggestion": "Regenerate or repair the frame container"}
        super().__init__(message, ErrorType.FRAME_FORMAT, ExitCode.STAGE_FAILURE, details, kwargs.get("original_error"))


class StageError(PipelineException):
    """Raised when a pipeline stage fails; carries the stage name and cause."""

    def __init__(self, stage: str, cause: BaseException):
        details = {"stage": stage, "original_error": str(cause)}
        exit_code = cause.exit_code if isinstance(cause, PipelineException) else ExitCode.STAGE_FAILURE
        super().__init__(f"Stage '{stage}' failed: {cause}", ErrorType.STAGE, exit_code, details, cause)
        self.stage = stage


class TrainingDivergedError(PipelineException):
    """Raised when a training loss or weight vector becomes non-finite."""

    def __init__(self, message: str, epoch: Optional[int] = None, client: Optional[int] = None):
        where = f"epoch {epoch}" if epoch is not None else "unknown epoch"
        if client is not None:
            where += f", client {client}"
        details = {"stage": "training", "original_error": where,
                   "suggestion": "Lower the learning rate or check the input crops"}
        super().__init__(message, ErrorType.DIVERGED, ExitCode.STAGE_FAILURE, details)
        self.epoch = epoch
        self.client = client


class ExternalServiceError(PipelineException):
    """Raised when an external service fails."""
    status_code = 503

    def __init__(self, message: str, service: str, original_error: Optional[str] = None,
                 attempts: Optional[int] = None, error_type: ErrorType = ErrorType.EXTERNAL_SERVICE):
        details = {
            "service": service,
            "attempts": attempts,
            "original_error": original_error,
            "suggestion": "The external service is experiencing issues. Please try again later."
        }
        super().__init__(message, error_type, ExitCode.EXTERNAL_SERVICE_FAILURE, details)
        self.attempts = attempts


class LlmTransportError(ExternalServiceError):
    """Raised when the chat endpoint stays unreachable after all retries."""

    def __init__(self, message: str, attempts: int, retriable: bool = True, original_error: Optional[str] = None):
        super().__init__(message, service="llm", original_error=original_error, attempts=attempts)
        self.retriable = retriable


class LlmResponseError(ExternalServiceError):
    """Raised on malformed completion JSON or an empty completion."""

    def __init__(self, message: str, attempts: Optional[int] = None):
        super().__init__(message, service="llm", attempts=attempts)


class LlmCredentialsError(ExternalServiceError):
    """Raised when the configured API key variable is not set."""
    status_code = 401

    def __init__(self, env_var: str):
        super().__init__(f"Missing credentials: environment variable {env_var} is not set",
                         service="llm", error_type=ErrorType.AUTHENTICATION)


class FixtureMissingError(ExternalServiceError):
    """Raised in replay mode when no recorded response exists for a prompt."""
    status_code = 404

    def __init__(self, key: str, directory: str):
        super().__init__(f"No recorded fixture {key}.json in {directory}", service="llm-replay",
                         error_type=ErrorType.NOT_FOUND)


class RetryConfig(BaseModel):
    """Configuration for retry behavior."""
    max_retries: int = LlmDefaults.MAX_RETRIES
    initial_delay: float = LlmDefaults.BACKOFF_BASE_MS / 1000.0
    exponential_base: float = LlmDefaults.BACKOFF_MULTIPLIER
    max_delay: float = 60.0

    def delay_for(self, retry_number: int) -> float:
        """Delay before retry `retry_number` (1-based); non-decreasing."""
        return min(self.initial_delay * self.exponential_base ** (retry_number - 1), self.max_delay)


class RetryableError(Exception):
    """Marks a failed attempt that may be retried."""

    def __init__(self, message: str, status_code: Optional[int] = None):
        self.status_code = status_code
        super().__init__(message)


def run_with_retry(
    func: Callable[[], T],
    config: RetryConfig,
    exceptions: Tuple[type, ...] = (RetryableError,),
    sleep: Callable[[float], None] = time.sleep
) -> Tuple[T, int]:
    """
    Call `func` with exponential backoff.

    Returns:
        (result, attempts) where attempts counts the successful call.

    Raises:
        LlmTransportError once `config.max_retries` retries are exhausted.
    """
    last_exception: Optional[BaseException] = None

    for attempt in range(1, config.max_retries + 2):
        try:
            return func(), attempt
        except exceptions as e:
            last_exception = e

            if attempt == config.max_retries + 1:
                logger.error(f"Failed after {attempt} attempts: {str(e)}")
                break

            delay = config.delay_for(attempt)
            logger.warning(
                f"Attempt {attempt}/{config.max_retries + 1} failed: {str(e)}. "
                f"Retrying in {delay:.2f}s..."
            )

            sleep(delay)

    raise LlmTransportError(
        f"Exhausted {config.max_retries} retries: {last_exception}",
        attempts=config.max_retries + 1,
        original_error=str(last_exception)
    )


def stage(name: str):
    """Decorator wrapping any failure of a pipeline stage into StageError."""
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except StageError:
                raise
            except Exception as e:
                logger.error(f"❌ Stage '{name}' failed: {e}")
                raise StageError(name, e) from e
        return wrapper
    return decorator


def handle_pipeline_error(error: BaseException, stage_name: Optional[str] = None) -> PipelineException:
    """
    Convert any exception to a standardized PipelineException.

    Args:
        error: The original exception
        stage_name: Optional stage name for context

    Returns:
        Standardized PipelineException
    """
    if isinstance(error, PipelineException):
        return error

    if isinstance(error, (FileNotFoundError, PermissionError, IsADirectoryError)):
        return PipelineException(
            f"I/O failure: {error}",
            ErrorType.NOT_FOUND,
            ExitCode.STAGE_FAILURE,
            details={"stage": stage_name, "original_error": str(error)},
            original_error=error
        )

    if stage_name:
        return StageError(stage_name, error)

    return PipelineException(
        f"An unexpected error occurred: {str(error)}",
        ErrorType.PROCESSING,
        ExitCode.STAGE_FAILURE,
        details={"original_error": str(error)},
        original_error=error
    )
