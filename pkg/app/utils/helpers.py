from typing import Any, Optional
import re
import json
import hashlib
from datetime import datetime


def safe_filename(name: str) -> str:
    """
    Normaliza um nome para uso em arquivos (ids de DAG, nomes de experimento).

    Args:
        name: Nome a ser normalizado

    Returns:
        str: Nome contendo apenas A-Z, a-z, 0-9, ponto, hífen e underscore
    """
    name = re.sub(r'[^\w\s\-\.]', '', name)
    name = re.sub(r'\s+', '_', name)
    name = re.sub(r'_+', '_', name)
    name = name.strip('._')

    return name or "unnamed"


def format_duration(seconds: Optional[float]) -> str:
    """Formata duração em segundos para H:MM:SS (ou M:SS)"""
    if not seconds:
        return "0:00"

    seconds = int(seconds)
    hours = seconds // 3600
    minutes = (seconds % 3600) // 60
    secs = seconds % 60

    if hours > 0:
        return f"{hours}:{minutes:02d}:{secs:02d}"
    else:
        return f"{minutes}:{secs:02d}"


def format_bytes(bytes_size: Optional[float]) -> Optional[str]:
    """Formata bytes em unidades decimais (KB = 1e3, MB = 1e6), como no modelo de custo"""
    if bytes_size is None or bytes_size == 0:
        return None

    units = ['B', 'KB', 'MB', 'GB', 'TB']
    size = float(bytes_size)

    for unit in units:
        if size < 1000:
            if unit == 'B':
                return f"{int(size)}{unit}"
            return f"{size:.1f}{unit}"
        size /= 1000

    return f"{size:.1f}PB"


def format_ms(ms: float) -> str:
    """Formata milissegundos com pelo menos 3 algarismos significativos"""
    if ms >= 100:
        return f"{ms:.1f}"
    return f"{ms:#.3g}"


def generate_run_id(payload: Any = None) -> str:
    """Gera ID único de execução usando timestamp + hash do payload (ex.: config)"""
    timestamp = int(datetime.now().timestamp() * 1000)
    digest_source = json.dumps(payload, sort_keys=True, default=str)
    payload_hash = hashlib.md5(digest_source.encode()).hexdigest()[:8]
    return f"{timestamp}_{payload_hash}"
