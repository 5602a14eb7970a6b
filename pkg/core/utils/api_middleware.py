"""
API middleware for error handling and request logging.
"""
import logging
import time
import traceback
import uuid
from typing import Callable

from fastapi import Request, Response
from fastapi.responses import JSONResponse
from starlette.middleware.base import BaseHTTPMiddleware

from core.utils.error_handling import ErrorType, PipelineErrorResponse, PipelineException

logger = logging.getLogger(__name__)


def error_json(error: PipelineException, request_id: str) -> JSONResponse:
    """JSON body shared by the middleware and the app's exception handler."""
    body = error.to_response()
    body.request_id = request_id
    return JSONResponse(status_code=error.status_code, content={"error": body.model_dump(mode="json")},
                        headers={"X-Request-ID": request_id})


class ErrorHandlingMiddleware(BaseHTTPMiddleware):
    """
    Consistent error bodies for every endpoint.

    - Assigns a request id (echoed in the X-Request-ID header)
    - Converts PipelineException into its structured response
    - Hides unexpected exceptions behind a generic 500 body
    """

    async def dispatch(self, request: Request, call_next: Callable) -> Response:
        request_id = request.headers.get("X-Request-ID") or str(uuid.uuid4())
        request.state.request_id = request_id
        start_time = time.time()

        try:
            response = await call_next(request)
            response.headers["X-Request-ID"] = request_id
            logger.info(
                "Request completed",
                extra={
                    "request_id": request_id,
                    "method": request.method,
                    "path": request.url.path,
                    "status_code": response.status_code,
                    "duration": f"{time.time() - start_time:.3f}s"
                }
            )
            return response

        except PipelineException as e:
            logger.error(f"Pipeline error: {e.message}",
                         extra={"request_id": request_id, "error_type": e.error_type.value})
            return error_json(e, request_id)

        except Exception as e:
            error_response = PipelineErrorResponse(
                type=ErrorType.PROCESSING,
                message="An unexpected error occurred",
                request_id=request_id,
                status_code=500
            )
            logger.error(
                f"Unhandled exception: {str(e)}",
                extra={"request_id": request_id, "path": request.url.path, "traceback": traceback.format_exc()}
            )
            return JSONResponse(status_code=500, content={"error": error_response.model_dump(mode="json")},
                                headers={"X-Request-ID": request_id})


class RequestLoggingMiddleware(BaseHTTPMiddleware):
    """Log every incoming request (method and path only)."""

    async def dispatch(self, request: Request, call_next: Callable) -> Response:
        logger.info(
            f"Incoming request: {request.method} {request.url.path}",
            extra={"client": request.client.host if request.client else None}
        )
        return await call_next(request)
