from datetime import datetime
from pathlib import Path
from typing import Optional

from app.config import settings
from app.services.checkpoints import list_checkpoints
from app.utils.log_helpers import log_error, log_info


def cleanup_old_logs(logs_dir: Optional[Path] = None, retention_days: Optional[int] = None) -> int:
    """Remove arquivos de log rotacionados com mais de LOG_RETENTION_DAYS dias"""
    logs_dir = Path(logs_dir or settings.LOGS_DIR)
    retention_days = settings.LOG_RETENTION_DAYS if retention_days is None else retention_days
    if not logs_dir.exists():
        return 0

    current_time = datetime.now().timestamp()
    max_age = retention_days * 24 * 3600
    deleted_count = 0

    for log_file in logs_dir.glob("app.log.*"):
        if current_time - log_file.stat().st_mtime > max_age:
            try:
                log_file.unlink()
                deleted_count += 1
            except OSError as e:
                log_error("Erro ao deletar log antigo", exc=e, path=str(log_file))

    if deleted_count > 0:
        log_info("Logs antigos removidos", count=deleted_count)
    return deleted_count


def cleanup_old_checkpoints(checkpoint_dir: Optional[Path] = None, keep: Optional[int] = None) -> int:
    """Mantém só os `keep` checkpoints de maior versão"""
    checkpoint_dir = Path(checkpoint_dir or settings.CHECKPOINT_DIR)
    keep = settings.CHECKPOINT_KEEP if keep is None else keep
    paths = list_checkpoints(checkpoint_dir)
    stale = paths[:-keep] if keep > 0 else paths

    deleted_count = 0
    for path in stale:
        try:
            path.unlink()
            deleted_count += 1
        except OSError as e:
            log_error("Erro ao deletar checkpoint", exc=e, path=str(path))

    if deleted_count > 0:
        log_info("Checkpoints antigos removidos", count=deleted_count, kept=len(paths) - deleted_count)
    return deleted_count
