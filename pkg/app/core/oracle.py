"""
Políticas de referência: busca exaustiva (ótimo exato), greedy míope e
aleatória. Todas usam o mesmo modelo de custo do ambiente.
"""
import math
from typing import Dict, List, Optional

import numpy as np

from app.core.cost_model import (
    check_constraints,
    proc_time,
    service_exec_time,
    task_exec_time,
    task_exec_times,
    transfer_time,
)
from app.core.dag import RankedPlan, plan_service, predecessors
from app.core.exceptions import BudgetExceeded
from app.core.servers import ServerPool
from app.schemas.dag import ServiceDag
from app.schemas.offload import BaselineResult, OracleResult
from app.utils.rng import STREAM_BASELINE, make_rng

DEFAULT_BUDGET = 10_000_000


def search_space(dag: ServiceDag, pool: ServerPool) -> int:
    return pool.num_servers ** dag.num_tasks


class _Search:
    """DFS na ordem de execução acumulando T das tarefas do caminho crítico"""

    def __init__(self, dag: ServiceDag, pool: ServerPool, plan: RankedPlan, prune: bool):
        self.pool = pool
        self.plan = plan
        self.prune = prune
        self.order = plan.order
        self.tasks = {t.id: t for t in dag.tasks}
        self.preds = predecessors(dag)
        self.nodes = 0

    def run(self, feasible_only: bool):
        self.feasible_only = feasible_only
        self.best_cost = math.inf
        self.best: Optional[Dict[int, int]] = None
        self.assign: Dict[int, int] = {}
        self.residual = self.pool.ram_capacities.copy()
        self._dfs(0, 0.0)
        return self.best

    def _exec_time(self, v: int, s: int) -> float:
        ready = 0.0
        for u, data_bytes in self.preds[v]:
            ready = max(ready, transfer_time(data_bytes, self.assign[u], s, self.pool))
        return proc_time(self.tasks[v], self.pool.servers[s]) + ready

    def _dfs(self, k: int, cost: float) -> None:
        if k == len(self.order):
            # Só substitui se estritamente melhor: empate fica com a primeira
            # alocação em ordem lexicográfica
            if cost < self.best_cost:
                self.best_cost = cost
                self.best = dict(self.assign)
            return

        v = self.order[k]
        task = self.tasks[v]
        on_path = self.plan.cp_indicator[v]
        for s in range(self.pool.num_servers):
            self.nodes += 1
            t = self._exec_time(v, s)
            if self.feasible_only and (t > task.deadline_s or self.residual[s] < task.ram_bytes):
                continue
            new_cost = cost + t if on_path else cost
            if self.prune and new_cost >= self.best_cost:
                continue
            self.assign[v] = s
            self.residual[s] -= task.ram_bytes
            self._dfs(k + 1, new_cost)
            self.residual[s] += task.ram_bytes
            del self.assign[v]


def exhaustive_best(
    dag: ServiceDag,
    pool: ServerPool,
    plan: Optional[RankedPlan] = None,
    budget: int = DEFAULT_BUDGET,
    prune: bool = True,
) -> OracleResult:
    """
    Menor T(X) entre as alocações que satisfazem CS1..CS4; se nenhuma for
    viável, a de menor T(X) sem restrições, com feasible=False.

    Raises:
        BudgetExceeded: M^L acima do orçamento
    """
    space = search_space(dag, pool)
    if space > budget:
        raise BudgetExceeded(f"Espaço de busca {pool.num_servers}^{dag.num_tasks} = {space} > {budget}")
    plan = plan or plan_service(dag, pool)

    search = _Search(dag, pool, plan, prune)
    best = search.run(feasible_only=True)
    feasible = best is not None
    if not feasible:
        best = search.run(feasible_only=False)

    return OracleResult(
        assignment=best,
        objective_s=service_exec_time(dag, best, plan, pool),
        feasible=feasible,
        nodes_explored=search.nodes,
    )


def _baseline(policy: str, dag: ServiceDag, pool: ServerPool, plan: RankedPlan, assignment: Dict[int, int]) -> BaselineResult:
    times = task_exec_times(dag, assignment, pool)
    violations = check_constraints(dag, assignment, pool, times, order=plan.order)
    return BaselineResult(
        policy=policy,
        assignment=assignment,
        objective_s=service_exec_time(dag, assignment, plan, pool),
        feasible=not violations,
    )


def greedy_step(dag: ServiceDag, pool: ServerPool, plan: Optional[RankedPlan] = None) -> BaselineResult:
    """
    Cada tarefa, na ordem de execução, vai para o servidor de menor T dado o
    que já foi alocado, pulando servidores sem RAM livre (todos, se nenhum
    tiver). Empate pelo menor id.
    """
    plan = plan or plan_service(dag, pool)
    preds = predecessors(dag)
    tasks = {t.id: t for t in dag.tasks}
    residual = pool.ram_capacities.copy()
    assignment: Dict[int, int] = {}

    for v in plan.order:
        task = tasks[v]
        candidates: List[int] = [s for s in range(pool.num_servers) if residual[s] >= task.ram_bytes]
        if not candidates:
            candidates = list(range(pool.num_servers))
        best = min(candidates, key=lambda s: (task_exec_time(task, s, assignment, dag, pool, preds[v]), s))
        assignment[v] = best
        residual[best] -= task.ram_bytes

    return _baseline("greedy", dag, pool, plan, assignment)


def random_policy(dag: ServiceDag, pool: ServerPool, seed: int, plan: Optional[RankedPlan] = None) -> BaselineResult:
    """Servidor uniforme por tarefa (piso de avaliação)"""
    plan = plan or plan_service(dag, pool)
    rng = make_rng(seed, STREAM_BASELINE)
    choices = rng.integers(pool.num_servers, size=len(plan.order))
    assignment = {v: int(s) for v, s in zip(plan.order, choices)}
    return _baseline("random", dag, pool, plan, assignment)


def random_mean(dag: ServiceDag, pool: ServerPool, seed: int, draws: int = 1000, plan: Optional[RankedPlan] = None) -> float:
    """Média do objetivo da política aleatória sobre `draws` sorteios"""
    plan = plan or plan_service(dag, pool)
    rng = make_rng(seed, STREAM_BASELINE)
    values = []
    for _ in range(draws):
        choices = rng.integers(pool.num_servers, size=len(plan.order))
        assignment = {v: int(s) for v, s in zip(plan.order, choices)}
        values.append(service_exec_time(dag, assignment, plan, pool))
    return float(np.mean(values))
