import traceback
from typing import Any, Dict, Optional

from app.utils.logger import get_logger


def format_exception(exc: BaseException) -> Dict[str, Any]:
    """Extrai tipo, mensagem e stack trace de uma exceção"""
    return {
        "error_type": type(exc).__name__,
        "error_message": str(exc),
        "stack_trace": "".join(traceback.format_exception(type(exc), exc, exc.__traceback__)),
    }


def log_info(message: str, **details: Any) -> None:
    get_logger().info(message, extra=details)


def log_warning(message: str, **details: Any) -> None:
    get_logger().warning(message, extra=details)


def log_debug(message: str, **details: Any) -> None:
    get_logger().debug(message, extra=details)


def log_error(message: str, exc: Optional[BaseException] = None, **details: Any) -> None:
    """Loga um erro; se exc for informada, inclui tipo, mensagem e stack trace"""
    if exc is not None:
        details.update(format_exception(exc))
    get_logger().error(message, extra=details)
