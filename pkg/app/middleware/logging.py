import time
import uuid

from fastapi import Request

from app.utils.context import request_id_var
from app.utils.log_helpers import log_error, log_info


async def logging_middleware(request: Request, call_next):
    """
    Gera request_id, mede a duração e loga a requisição. Exceções não
    tratadas são logadas com stack trace e re-lançadas.
    """
    request_id = str(uuid.uuid4())
    token = request_id_var.set(request_id)
    started = time.perf_counter()
    context = {
        "method": request.method,
        "endpoint": request.url.path,
        "client_ip": request.client.host if request.client else None,
        "user_agent": request.headers.get("user-agent"),
    }
    try:
        response = await call_next(request)
    except Exception as exc:
        duration_ms = round((time.perf_counter() - started) * 1000, 3)
        log_error("Erro não tratado na requisição", exc=exc, status_code=500,
                  duration_ms=duration_ms, **context)
        raise
    else:
        duration_ms = round((time.perf_counter() - started) * 1000, 3)
        response.headers["X-Request-ID"] = request_id
        log_info("Requisição concluída", status_code=response.status_code,
                 duration_ms=duration_ms, **context)
        return response
    finally:
        request_id_var.reset(token)
