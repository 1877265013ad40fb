import itertools
import json

import numpy as np
import pytest

from app.core.environment import FogEnv
from app.core.exceptions import FogAppoError
from app.core.nn import init_mlp
from app.core.oracle import greedy_step
from app.services.evaluation import (
    TraceWriter,
    evaluate_baseline,
    evaluate_policy,
    replay_assignment,
    run_policy_episode,
    summarize,
    time_decisions,
)
from app.utils.rng import make_rng


@pytest.fixture
def env(make_pool):
    return FogEnv(make_pool([1e9, 2e9, 1.5e9], bandwidth=1e7))


@pytest.fixture
def theta(env):
    return init_mlp(env.state_size, 8, env.num_servers, make_rng(0, 4))


class TestEpisodes:
    """Testes para a execução de episódios"""

    def test_replay_reproduces_assignment(self, env, diamond_dag):
        assignment = {0: 1, 1: 2, 2: 1, 3: 0}
        result = replay_assignment(env, diamond_dag, assignment)
        assert result.info.assignment == assignment
        assert len(result.steps) == 4

    def test_greedy_policy_episode_is_deterministic(self, env, theta, diamond_dag):
        a = run_policy_episode(env, diamond_dag, theta)
        b = run_policy_episode(env, diamond_dag, theta)
        assert a.info.assignment == b.info.assignment

    def test_sampled_episode_needs_rng(self, env, theta, chain_dag):
        with pytest.raises(FogAppoError):
            run_policy_episode(env, chain_dag, theta, greedy=False)


class TestSummaries:
    """Testes para as métricas agregadas"""

    def test_hit_rate_is_over_all_tasks(self, env, chain_dag, make_dag):
        """Taxa de prazos = acertos totais / tarefas totais (não média por serviço)"""
        tight = make_dag([(2e8, 1e6, 50)], dag_id="tight")
        results = [
            replay_assignment(env, chain_dag, {0: 1, 1: 1, 2: 1}),
            replay_assignment(env, tight, {0: 0}),
        ]
        summary = summarize(results)
        assert summary.deadline_hit_rate == pytest.approx(3 / 4)
        assert summary.num_services == 2
        assert summary.mean_exec_time_s == pytest.approx((0.15 + 0.2) / 2)

    def test_empty_results_raise(self):
        with pytest.raises(FogAppoError):
            summarize([])

    def test_evaluate_policy_covers_every_service(self, env, theta, chain_dag, diamond_dag):
        summary = evaluate_policy(theta, [chain_dag, diamond_dag], env)
        assert summary.num_services == 2
        assert 0.0 <= summary.deadline_hit_rate <= 1.0
        assert summary.mean_exec_time_s > 0

    def test_greedy_baseline_matches_direct_greedy(self, env, diamond_dag):
        """Avaliar greedy pelo ambiente dá o mesmo T(X) do cálculo direto"""
        summary = evaluate_baseline("greedy", [diamond_dag], env)
        assert summary.mean_exec_time_s == pytest.approx(greedy_step(diamond_dag, env.pool).objective_s, rel=1e-12)

    def test_random_baseline_is_reproducible(self, env, diamond_dag, chain_dag):
        a = evaluate_baseline("random", [diamond_dag, chain_dag], env, seed=3)
        b = evaluate_baseline("random", [diamond_dag, chain_dag], env, seed=3)
        assert a == b

    def test_unknown_baseline(self, env, chain_dag):
        with pytest.raises(FogAppoError):
            evaluate_baseline("oracle", [chain_dag], env)


class TestTimeDecisions:
    def test_uses_injected_clock(self, env, theta, chain_dag):
        """Relógio falso de 1 ms por leitura: reset + 3 decisões + 2 estados seguintes"""
        ticks = itertools.count()
        mean_ms, per_service = time_decisions(theta, [chain_dag], env, clock=lambda: next(ticks) / 1000.0)
        assert per_service == pytest.approx([6.0])
        assert mean_ms == pytest.approx(6.0)

    def test_counts_state_construction(self, env, theta, chain_dag):
        """Relógio que só avança ao montar o estado: 2 ms no reset e em cada estado seguinte"""
        now = [0.0]
        build_state = env.build_state

        def slow_build_state():
            now[0] += 0.002
            return build_state()

        env.build_state = slow_build_state
        _, per_service = time_decisions(theta, [chain_dag], env, clock=lambda: now[0])
        assert per_service == pytest.approx([3 * 2.0])

    def test_excludes_execution_simulation(self, make_pool, theta, chain_dag):
        """Tempo gasto dentro de env.step() não entra no DTO"""
        now = [0.0]

        def advance(outcome):
            now[0] += 0.005

        env = FogEnv(make_pool([1e9, 2e9, 1.5e9], bandwidth=1e7), on_step=advance)
        _, per_service = time_decisions(theta, [chain_dag], env, clock=lambda: now[0])
        assert per_service == pytest.approx([0.0])


class TestTraceWriter:
    def test_writes_one_line_per_step(self, tmp_path, make_pool, chain_dag, diamond_dag):
        path = tmp_path / "traces" / "actor-0.jsonl"
        with TraceWriter(path) as writer:
            env = FogEnv(make_pool([1e9, 2e9]), on_step=writer)
            replay_assignment(env, chain_dag, {0: 0, 1: 0, 2: 0})
            replay_assignment(env, diamond_dag, {0: 1, 1: 1, 2: 1, 3: 1})
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 7
        assert [r["episode"] for r in rows] == [0, 0, 0, 1, 1, 1, 1]
        assert rows[2]["done"] and rows[2]["total_exec_time"] == pytest.approx(0.3)
        assert np.isfinite(rows[0]["reward"])
