import os
from pathlib import Path
from typing import Optional

class Settings:
    """Configurações da aplicação"""

    # App
    APP_TITLE: str = "Fog APPO Broker API"
    APP_DESCRIPTION: str = "API de offloading de serviços DAG em fog computing com política APPO"
    APP_VERSION: str = "1.0.0"

    # Paths
    BASE_DIR: Path = Path(__file__).parent.parent
    RUNS_DIR: Path = BASE_DIR / "runs"
    LOGS_DIR: Path = BASE_DIR / "logs"

    # Logs
    LOG_LEVEL: str = "INFO"
    LOG_WHEN: str = "midnight"  # Rotação à meia-noite
    LOG_INTERVAL: int = 1
    LOG_BACKUP_COUNT: int = 30
    LOG_RETENTION_DAYS: int = 30

    # Broker (API)
    CHECKPOINT_DIR: Path = RUNS_DIR / "latest" / "checkpoints"
    CHECKPOINT_KEEP: int = 5
    SCENARIO_PATH: Optional[Path] = None  # None = cenário padrão
    POLICY_REFRESH_MINUTES: int = 1
    CLEANUP_INTERVAL_MINUTES: int = 60

    # Oracle
    ORACLE_BUDGET: int = 10_000_000  # M^L máximo

    # Seeds
    DEFAULT_SEED: int = 42
    SEED_ENV_VAR: str = "FOG_APPO_SEED"

    def __init__(self):
        """Inicializar e criar diretórios necessários"""
        self.LOGS_DIR.mkdir(exist_ok=True)

    def resolve_seed(self, seed: Optional[int] = None) -> int:
        """Retorna a seed do ambiente (FOG_APPO_SEED) se definida, senão a seed informada"""
        override = os.environ.get(self.SEED_ENV_VAR)
        if override not in (None, ""):
            return int(override)
        return self.DEFAULT_SEED if seed is None else int(seed)

settings = Settings()
