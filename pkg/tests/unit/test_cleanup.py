import os
from dataclasses import replace
from datetime import datetime

import pytest

from app.config import settings
from app.core.appo import init_learner_state
from app.schemas.training import ApoHyper
from app.services.checkpoints import list_checkpoints, save_checkpoint
from app.services.cleanup import cleanup_old_checkpoints, cleanup_old_logs
from app.utils.rng import make_rng


def _age(path, days):
    old_time = datetime.now().timestamp() - days * 24 * 3600
    os.utime(path, (old_time, old_time))


class TestCleanupOldLogs:
    """Testes para limpeza de logs rotacionados"""

    def test_removes_logs_older_than_retention(self, tmp_path):
        """Deve remover app.log.* mais antigos que a retenção"""
        old_log = tmp_path / "app.log.2024-01-01"
        old_log.write_text("{}")
        _age(old_log, 10)

        assert cleanup_old_logs(tmp_path, retention_days=7) == 1
        assert not old_log.exists(), "Log antigo deveria ter sido deletado"

    def test_does_not_remove_recent_logs(self, tmp_path):
        """Não deve remover logs recentes"""
        recent = tmp_path / "app.log.2024-01-09"
        recent.write_text("{}")

        assert cleanup_old_logs(tmp_path, retention_days=7) == 0
        assert recent.exists(), "Log recente não deveria ser deletado"

    def test_keeps_active_log(self, tmp_path):
        """O arquivo ativo app.log nunca é removido"""
        active = tmp_path / "app.log"
        active.write_text("{}")
        _age(active, 30)

        cleanup_old_logs(tmp_path, retention_days=7)
        assert active.exists()

    def test_uses_settings_by_default(self, logs_dir):
        """Sem argumentos, usa LOGS_DIR e LOG_RETENTION_DAYS"""
        old_log = logs_dir / "app.log.old"
        old_log.write_text("{}")
        _age(old_log, settings.LOG_RETENTION_DAYS + 1)

        assert cleanup_old_logs() == 1

    def test_handles_nonexistent_dir(self, tmp_path):
        """Deve lidar corretamente com diretório que não existe"""
        assert cleanup_old_logs(tmp_path / "missing") == 0


class TestCleanupOldCheckpoints:
    """Testes para retenção de checkpoints"""

    @pytest.fixture
    def checkpoint_dir(self, tmp_path):
        hyper = ApoHyper(hidden_size=4)
        state = init_learner_state(10, 2, hyper, make_rng(0))
        directory = tmp_path / "checkpoints"
        for version in (1, 2, 3, 10):
            save_checkpoint(directory, replace(state, version=version))
        return directory

    def test_keeps_newest_versions(self, checkpoint_dir):
        """Deve manter só os `keep` checkpoints de maior versão"""
        assert cleanup_old_checkpoints(checkpoint_dir, keep=2) == 2
        assert [p.name for p in list_checkpoints(checkpoint_dir)] == ["ckpt_000003.json", "ckpt_000010.json"]

    def test_nothing_to_remove(self, checkpoint_dir):
        assert cleanup_old_checkpoints(checkpoint_dir, keep=10) == 0
        assert len(list_checkpoints(checkpoint_dir)) == 4

    def test_handles_missing_dir(self, tmp_path):
        assert cleanup_old_checkpoints(tmp_path / "missing", keep=1) == 0
