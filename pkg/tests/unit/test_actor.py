import queue

import numpy as np
import pytest

from app.core.actor import (
    Actor,
    PolicySnapshot,
    ServiceQueue,
    SharedSnapshotCell,
    SnapshotCell,
    actor_loop,
    sample_action,
)
from app.core.environment import FogEnv
from app.core.exceptions import FogAppoError
from app.core.nn import init_mlp, policy_forward, policy_log_probs
from app.utils.rng import make_rng


@pytest.fixture
def theta():
    return init_mlp(4, 6, 3, make_rng(0, 3))


def make_actor(pool, dags, rollout_len, seed=0, hidden=8):
    env = FogEnv(pool)
    theta = init_mlp(env.state_size, hidden, env.num_servers, make_rng(seed, 1))
    actor = Actor(0, env, ServiceQueue(dags, make_rng(seed, 2)), make_rng(seed, 3), rollout_len)
    return actor, PolicySnapshot(version=0, theta=theta)


class TestSampleAction:
    """Testes para a amostragem de ações"""

    def test_empirical_frequencies_match_policy(self, theta):
        """Frequências de 20k amostras próximas de π(·|s)"""
        state = np.array([0.2, 0.9, 0.4, 0.1])
        probs = policy_forward(theta, state)
        rng = make_rng(5)
        counts = np.zeros(3)
        for _ in range(20_000):
            action, _ = sample_action(theta, state, rng)
            counts[action] += 1
        assert np.allclose(counts / counts.sum(), probs, atol=0.015)

    def test_log_prob_is_exact(self, theta):
        """Log-prob devolvida é a da política para a ação escolhida"""
        state = np.full(4, 0.5)
        action, logp = sample_action(theta, state, make_rng(6))
        assert logp == pytest.approx(float(policy_log_probs(theta, state)[action]), rel=1e-12)

    def test_greedy_is_argmax(self, theta):
        state = np.array([0.7, 0.1, 0.3, 0.9])
        action, _ = sample_action(theta, state, greedy=True)
        assert action == int(np.argmax(policy_forward(theta, state)))

    def test_masked_action_never_sampled(self, theta):
        """Ação mascarada nunca é escolhida"""
        mask = np.array([True, False, True])
        rng = make_rng(7)
        actions = {sample_action(theta, np.zeros(4), rng, mask)[0] for _ in range(2000)}
        assert 1 not in actions

    def test_sampling_without_rng_raises(self, theta):
        with pytest.raises(FogAppoError):
            sample_action(theta, np.zeros(4))


class TestServiceQueue:
    """Testes para a fila de serviços"""

    def test_each_pass_visits_every_service(self, chain_dag, diamond_dag, make_dag):
        dags = [chain_dag, diamond_dag, make_dag([(1e8, 1e6, 50)], dag_id="single")]
        services = ServiceQueue(dags, make_rng(1))
        for _ in range(3):
            assert sorted(services.next().id for _ in range(3)) == ["chain", "diamond", "single"]

    def test_empty_queue_rejected(self):
        with pytest.raises(FogAppoError):
            ServiceQueue([], make_rng(1))


class TestActorCollect:
    """Testes para a geração de experience batches"""

    def test_batch_has_rollout_len_tuples(self, make_pool, chain_dag):
        actor, snapshot = make_actor(make_pool([1e9, 2e9]), [chain_dag], rollout_len=5)
        batch = actor.collect(snapshot)
        assert len(batch) == 5
        assert batch.policy_version == 0
        assert actor.env_steps == 5

    def test_episode_straddles_batches(self, make_pool, chain_dag):
        """Episódio de 3 passos com N=2: o segundo batch continua o episódio"""
        actor, snapshot = make_actor(make_pool([1e9, 2e9]), [chain_dag], rollout_len=2)
        first = actor.collect(snapshot)
        second = actor.collect(snapshot)
        assert [t.done for t in first.tuples] == [False, False]
        assert [t.done for t in second.tuples] == [True, False]
        assert np.array_equal(second.tuples[0].state, first.tuples[-1].next_state)
        assert len(second.episodes) == 1
        assert second.episodes[0].num_tasks == 3

    def test_behavior_log_probs_match_snapshot(self, make_pool, diamond_dag):
        """log κ(a|s) gravado coincide com a política do snapshot"""
        actor, snapshot = make_actor(make_pool([1e9, 1.5e9, 2e9]), [diamond_dag], rollout_len=8)
        batch = actor.collect(snapshot)
        for t in batch.tuples:
            expected = policy_log_probs(snapshot.theta, t.state)[t.action]
            assert t.behavior_log_prob == pytest.approx(float(expected), rel=1e-12)

    def test_same_seed_same_batch(self, make_pool, diamond_dag, chain_dag):
        """Mesmas seeds geram exatamente os mesmos tuples"""
        pool = make_pool([1e9, 2e9])
        a, snap_a = make_actor(pool, [diamond_dag, chain_dag], rollout_len=7, seed=4)
        b, snap_b = make_actor(pool, [diamond_dag, chain_dag], rollout_len=7, seed=4)
        ba, bb = a.collect(snap_a), b.collect(snap_b)
        assert [t.action for t in ba.tuples] == [t.action for t in bb.tuples]
        assert [t.reward for t in ba.tuples] == [t.reward for t in bb.tuples]


class TestSnapshotCells:
    """Testes para a publicação de políticas"""

    def test_thread_cell_publishes_newer_versions(self, theta):
        cell = SnapshotCell(PolicySnapshot(0, theta))
        cell.publish(1, theta.map(lambda a: a + 1))
        latest = cell.latest()
        assert latest.version == 1
        assert np.array_equal(latest.theta.w1, theta.w1 + 1)

    def test_thread_cell_rejects_old_version(self, theta):
        cell = SnapshotCell(PolicySnapshot(2, theta))
        with pytest.raises(FogAppoError):
            cell.publish(2, theta)

    def test_published_snapshot_is_a_copy(self, theta):
        """Alterar o array publicado depois não afeta o snapshot"""
        cell = SnapshotCell(PolicySnapshot(0, theta))
        newer = theta.copy()
        cell.publish(1, newer)
        newer.w1[:] = 0.0
        assert not np.all(cell.latest().theta.w1 == 0.0)

    def test_shared_cell_round_trips_parameters(self, theta):
        cell = SharedSnapshotCell(PolicySnapshot(0, theta))
        assert np.array_equal(cell.latest().theta.flat(), theta.flat())
        updated = theta.map(lambda a: a * 2)
        cell.publish(3, updated)
        latest = cell.latest()
        assert latest.version == 3
        assert np.array_equal(latest.theta.flat(), updated.flat())
        assert cell.latest() is latest
        with pytest.raises(FogAppoError):
            cell.publish(3, theta)


class TestActorLoop:
    def test_sends_max_batches(self, make_pool, chain_dag):
        actor, snapshot = make_actor(make_pool([1e9, 2e9]), [chain_dag], rollout_len=3)
        outbox = queue.Queue()
        sent = actor_loop(actor, SnapshotCell(snapshot), outbox, should_stop=lambda: False, max_batches=4)
        assert sent == 4
        assert outbox.qsize() == 4

    def test_stops_immediately(self, make_pool, chain_dag):
        actor, snapshot = make_actor(make_pool([1e9, 2e9]), [chain_dag], rollout_len=3)
        assert actor_loop(actor, SnapshotCell(snapshot), queue.Queue(), should_stop=lambda: True) == 0
