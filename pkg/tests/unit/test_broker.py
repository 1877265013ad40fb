from dataclasses import replace

import pytest

from app.core.appo import init_learner_state
from app.core.environment import state_size
from app.core.exceptions import BudgetExceeded, CycleDetected
from app.schemas.training import ApoHyper
from app.services.broker import PolicyBroker
from app.services.checkpoints import save_checkpoint
from app.utils.rng import make_rng


@pytest.fixture
def broker(tmp_path, small_scenario):
    return PolicyBroker(scenario=small_scenario, checkpoint_dir=tmp_path / "checkpoints", hidden_size=8)


def learner_state(num_servers, version, seed=0):
    hyper = ApoHyper(hidden_size=8)
    state = init_learner_state(state_size(num_servers), num_servers, hyper, make_rng(seed))
    return replace(state, version=version)


class TestPolicyBroker:
    """Testes para o broker de offloading"""

    def test_starts_with_initial_policy(self, broker):
        info = broker.info()
        assert info.version == 0
        assert info.checkpoint is None
        assert info.num_servers == 4
        assert info.state_size == state_size(4)

    def test_offload_returns_full_configuration(self, broker, diamond_dag):
        """Resposta cobre todas as tarefas, com tempos e violações"""
        response = broker.offload(diamond_dag)
        assert set(response.assignment) == {0, 1, 2, 3}
        assert [o.task_id for o in response.outcomes] == list(response.assignment)
        assert response.exec_time_s > 0
        assert 0.0 <= response.deadline_hit_rate <= 1.0
        assert response.decision_time_ms >= 0
        assert response.decision_time_label.endswith(" ms")
        assert response.policy_version == 0

    def test_initial_policy_is_uniform(self, broker, diamond_dag):
        """Versão 0 começa uniforme: o argmax empata e fica no servidor 0"""
        assert set(broker.offload(diamond_dag).assignment.values()) == {0}

    def test_offload_rejects_invalid_dag(self, broker, make_dag):
        with pytest.raises(CycleDetected):
            broker.offload(make_dag([(1, 1, 1)] * 2, [(0, 1, 1.0), (1, 0, 1.0)]))

    def test_refresh_loads_newer_checkpoint(self, broker, diamond_dag):
        save_checkpoint(broker.checkpoint_dir, learner_state(4, 5))
        assert broker.refresh_policy() is True
        assert broker.info().version == 5
        assert broker.offload(diamond_dag).policy_version == 5
        assert broker.refresh_policy() is False

    def test_refresh_ignores_incompatible_checkpoint(self, broker):
        """Checkpoint de outro M não substitui a política"""
        save_checkpoint(broker.checkpoint_dir, learner_state(6, 9))
        assert broker.refresh_policy() is False
        assert broker.version == 0

    def test_refresh_without_checkpoints(self, broker):
        assert broker.refresh_policy() is False

    def test_oracle(self, broker, chain_dag):
        result = broker.oracle(chain_dag)
        assert set(result.assignment) == {0, 1, 2}
        assert result.nodes_explored > 0

    def test_oracle_budget(self, broker, chain_dag):
        with pytest.raises(BudgetExceeded):
            broker.oracle(chain_dag, budget=10)
