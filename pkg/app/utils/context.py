from contextvars import ContextVar
from typing import Optional

# Propagados para cada registro de log (ver app.utils.logger.JsonFormatter)
run_id_var: ContextVar[Optional[str]] = ContextVar('run_id', default=None)
actor_id_var: ContextVar[Optional[int]] = ContextVar('actor_id', default=None)
request_id_var: ContextVar[Optional[str]] = ContextVar('request_id', default=None)
