import json
import logging
import sys
from datetime import datetime
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Optional

from app.config import settings
from app.utils.context import actor_id_var, request_id_var, run_id_var

LOGGER_NAME = "fog_appo"
LOG_FILENAME = "app.log"

# Atributos padrão de LogRecord que não entram em "details"
_RESERVED = set(vars(logging.LogRecord("", 0, "", 0, "", None, None)).keys()) | {"message", "asctime"}


class JsonFormatter(logging.Formatter):
    """Formata cada registro como um objeto JSON em uma única linha"""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "run_id": run_id_var.get(),
            "actor_id": actor_id_var.get(),
            "request_id": request_id_var.get(),
        }
        details = {k: v for k, v in vars(record).items() if k not in _RESERVED}
        if details:
            payload["details"] = details
        if record.exc_info:
            payload["stack_trace"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str, ensure_ascii=False)


def setup_logger(logs_dir: Optional[Path] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Configura o logger da aplicação (arquivo com rotação + console).

    Idempotente: chamadas repetidas substituem os handlers anteriores.

    Args:
        logs_dir: Diretório dos arquivos de log (padrão: settings.LOGS_DIR)
        level: Nível mínimo (padrão: settings.LOG_LEVEL)

    Returns:
        logging.Logger: Logger raiz do projeto
    """
    logs_dir = Path(logs_dir or settings.LOGS_DIR)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level or settings.LOG_LEVEL)
    logger.propagate = False

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = JsonFormatter()

    file_handler = TimedRotatingFileHandler(
        logs_dir / LOG_FILENAME,
        when=settings.LOG_WHEN,
        interval=settings.LOG_INTERVAL,
        backupCount=settings.LOG_BACKUP_COUNT,
        encoding="utf-8",
    )
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Retorna o logger do projeto (ou um filho dele)"""
    if name:
        return logging.getLogger(f"{LOGGER_NAME}.{name}")
    return logging.getLogger(LOGGER_NAME)
