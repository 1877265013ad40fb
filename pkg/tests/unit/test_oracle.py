import itertools

import numpy as np
import pytest

from app.core.cost_model import check_constraints, service_exec_time, task_exec_times
from app.core.dag import plan_service
from app.core.exceptions import BudgetExceeded
from app.core.oracle import exhaustive_best, greedy_step, random_mean, random_policy, search_space
from app.core.servers import ServerPool, build_pool
from app.core.workload import assign_weights, generate_topology
from app.schemas.dag import DagEdge, ServiceDag, TaskSpec
from app.schemas.scenario import ScenarioConfig
from app.schemas.workload import TopologyParams, WeightRanges


def enumerate_all(dag, pool):
    """(objetivo, viável, alocação) de todas as M^L alocações"""
    plan = plan_service(dag, pool)
    ids = [t.id for t in dag.tasks]
    out = []
    for combo in itertools.product(range(pool.num_servers), repeat=len(ids)):
        assignment = dict(zip(ids, combo))
        times = task_exec_times(dag, assignment, pool)
        feasible = not check_constraints(dag, assignment, pool, times, order=plan.order)
        out.append((service_exec_time(dag, assignment, plan, pool), feasible, assignment))
    return out


def random_dag(num_tasks, i, ranges=None):
    params = TopologyParams(num_tasks=num_tasks, fat=0.6, density=0.6, seed=21)
    return assign_weights(generate_topology(params, stream_id=i), ranges or WeightRanges(), seed=21, stream_id=i)


def relabel(dag, perm):
    return ServiceDag(
        id=dag.id,
        tasks=[TaskSpec(id=perm[t.id], cycles=t.cycles, ram=t.ram, deadline_ms=t.deadline_ms) for t in dag.tasks],
        edges=[DagEdge(src=perm[e.src], dst=perm[e.dst], data_bytes=e.data_bytes) for e in dag.edges],
    )


def permute_pool(pool, order):
    """Pool com os mesmos servidores na ordem `order` (posição nova -> índice antigo)"""
    idx = list(order)
    return ServerPool(
        servers=tuple(pool.servers[i] for i in idx),
        bandwidth=pool.bandwidth[np.ix_(idx, idx)],
        propagation_speed=pool.propagation_speed,
    )


@pytest.fixture
def pool3():
    return build_pool(ScenarioConfig(seed=8).with_num_servers(3))


@pytest.fixture
def trap(make_dag, make_pool):
    """Greedy gasta a RAM do servidor rápido na primeira tarefa e estoura o prazo da segunda"""
    dag = make_dag([(1e8, 5e7, 150), (3e8, 5e7, 200)], [(0, 1, 1e3)], dag_id="trap")
    pool = make_pool([1e9, 2e9], ram=[1e9, 6e7])
    return dag, pool


class TestExhaustiveBest:
    """Testes para a busca exaustiva"""

    def test_dominates_every_feasible_assignment(self, pool3):
        """Ótimo ≤ qualquer alocação viável, igual ao mínimo da enumeração"""
        for i in range(12):
            dag = random_dag(2 + i % 4, i, WeightRanges(deadline_ms=(200.0, 400.0)))
            result = exhaustive_best(dag, pool3)
            feasible = [obj for obj, ok, _ in enumerate_all(dag, pool3) if ok]
            if feasible:
                assert result.feasible
                assert result.objective_s == pytest.approx(min(feasible), rel=1e-12)
            else:
                assert not result.feasible

    def test_pruning_does_not_change_result(self, pool3):
        """Com e sem poda: mesma alocação e mesmo objetivo, poda explora menos nós"""
        for i in range(8):
            dag = random_dag(4, 100 + i)
            pruned = exhaustive_best(dag, pool3, prune=True)
            full = exhaustive_best(dag, pool3, prune=False)
            assert pruned.assignment == full.assignment
            assert pruned.objective_s == full.objective_s
            assert pruned.nodes_explored <= full.nodes_explored

    def test_invariant_to_task_relabeling(self, pool3):
        """Renumerar as tarefas não muda o ótimo"""
        dag = random_dag(5, 3)
        perm = {0: 3, 1: 0, 2: 4, 3: 1, 4: 2}
        original = exhaustive_best(dag, pool3)
        relabeled = exhaustive_best(relabel(dag, perm), pool3)
        assert relabeled.objective_s == pytest.approx(original.objective_s, rel=1e-12)
        assert {perm[v]: s for v, s in original.assignment.items()} == relabeled.assignment

    def test_invariant_to_server_permutation(self):
        """Reordenar servidores (e a matriz de banda) só renomeia o ótimo"""
        pool = build_pool(ScenarioConfig(seed=8).with_num_servers(4))
        for i, order in enumerate([(3, 2, 1, 0), (1, 3, 0, 2), (2, 0, 3, 1)]):
            dag = random_dag(3 + i, 300 + i, WeightRanges(deadline_ms=(200.0, 400.0)))
            permuted = permute_pool(pool, order)
            new_index = {old: new for new, old in enumerate(order)}
            original = exhaustive_best(dag, pool)
            result = exhaustive_best(dag, permuted)
            assert result.feasible == original.feasible
            assert result.objective_s == pytest.approx(original.objective_s, rel=1e-9)
            mapped = {v: new_index[s] for v, s in original.assignment.items()}
            plan = plan_service(dag, permuted)
            assert service_exec_time(dag, mapped, plan, permuted) == pytest.approx(original.objective_s, rel=1e-9)

    def test_heavy_edge_forces_colocation(self, make_dag, make_pool):
        """Dados enormes entre pai e filho: ambos no mesmo servidor"""
        dag = make_dag([(1e8, 1e6, 1e6), (1e8, 1e6, 1e6)], [(0, 1, 1e9)])
        result = exhaustive_best(dag, make_pool([1e9, 2e9, 1.5e9]))
        assert result.assignment[0] == result.assignment[1]
        assert result.objective_s == pytest.approx(0.1, rel=1e-12)

    def test_finds_feasible_assignment_greedy_misses(self, trap):
        """Instância armadilha: greedy inviável, ótimo viável"""
        dag, pool = trap
        assert not greedy_step(dag, pool).feasible
        result = exhaustive_best(dag, pool)
        assert result.feasible
        assert result.assignment == {0: 0, 1: 1}
        assert result.objective_s == pytest.approx(0.1 + 0.15 + 1e3 / 1e7, rel=1e-12)

    def test_falls_back_to_unconstrained_minimum(self, make_dag, make_pool):
        """Sem alocação viável: menor T(X) irrestrito e feasible=False"""
        dag = make_dag([(1e8, 1e6, 1), (1e8, 1e6, 1)], [(0, 1, 1e3)])
        result = exhaustive_best(dag, make_pool([1e9, 2e9]))
        assert not result.feasible
        assert result.assignment == {0: 1, 1: 1}
        assert result.objective_s == pytest.approx(0.1, rel=1e-12)

    def test_budget_exceeded(self, make_pool):
        dag = random_dag(30, 0)
        pool = make_pool([1e9, 2e9])
        assert search_space(dag, pool) == 2 ** 30
        with pytest.raises(BudgetExceeded):
            exhaustive_best(dag, pool, budget=1_000_000)


class TestBaselines:
    """Testes para as políticas de referência"""

    def test_greedy_picks_fastest_server_for_single_task(self, make_dag, make_pool):
        result = greedy_step(make_dag([(1e8, 1e6, 100)]), make_pool([1e9, 3e9, 2e9]))
        assert result.assignment == {0: 1}
        assert result.policy == "greedy"
        assert result.feasible

    def test_greedy_never_beats_oracle_when_feasible(self, pool3):
        for i in range(10):
            dag = random_dag(4, 200 + i, WeightRanges(deadline_ms=(300.0, 500.0)))
            greedy = greedy_step(dag, pool3)
            oracle = exhaustive_best(dag, pool3)
            if greedy.feasible:
                assert oracle.objective_s <= greedy.objective_s + 1e-12

    def test_oracle_greedy_random_ordering_on_roomy_instances(self):
        """RAM e prazos folgados: ótimo ≤ greedy ≤ média aleatória em 100 instâncias (M ≤ 4, L ≤ 6)"""
        roomy = WeightRanges(ram=(1e6, 2e6), deadline_ms=(1e5, 2e5))
        pools = {m: build_pool(ScenarioConfig(seed=11).with_num_servers(m)) for m in (2, 3, 4)}
        for i in range(100):
            pool = pools[2 + i % 3]
            dag = random_dag(1 + i % 6, 400 + i, roomy)
            oracle = exhaustive_best(dag, pool)
            greedy = greedy_step(dag, pool)
            mean = random_mean(dag, pool, seed=i, draws=200)
            assert oracle.feasible and greedy.feasible
            assert oracle.objective_s <= greedy.objective_s + 1e-12
            assert greedy.objective_s <= mean + 1e-12

    def test_random_policy_is_reproducible(self, diamond_dag, pool3):
        a = random_policy(diamond_dag, pool3, seed=5)
        b = random_policy(diamond_dag, pool3, seed=5)
        assert a.assignment == b.assignment
        assert a.policy == "random"

    def test_random_mean_within_enumeration_bounds(self, diamond_dag, pool3):
        objectives = [obj for obj, _, _ in enumerate_all(diamond_dag, pool3)]
        mean = random_mean(diamond_dag, pool3, seed=1, draws=200)
        assert min(objectives) <= mean <= max(objectives)
