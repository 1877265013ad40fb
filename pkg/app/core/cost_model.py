"""
Modelo de tempo de execução e restrições.

Para uma tarefa v no servidor s:
    proc(v, s)  = ciclos(v) / f(s)
    ready(v, s) = max_{u em P(v)} SS(x_u, s) * (bytes(u, v) / b(x_u, s) + l(x_u, s))
    T(v, s)     = proc(v, s) + ready(v, s)
O objetivo do serviço é a soma de T sobre as tarefas do caminho crítico.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.dag import RankedPlan, execution_order, predecessors, upward_rank
from app.core.exceptions import IncompleteAssignment, UnassignedPredecessor
from app.core.servers import Server, ServerPool
from app.schemas.dag import ServiceDag, TaskSpec

Assignment = Mapping[int, int]
Preds = Sequence[Tuple[int, float]]

# Tolerância relativa das comparações de CS2
_CS2_EPS = 1e-12


@dataclass(frozen=True)
class Violation:
    """Violação de CS1..CS4 (dado, nunca exceção)"""
    constraint: str
    task_id: Optional[int] = None
    server_id: Optional[int] = None
    value: Optional[float] = None
    limit: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def proc_time(task: TaskSpec, server: Server) -> float:
    return task.cpu_cycles / server.freq_hz


def latency(a: int, b: int, pool: ServerPool) -> float:
    """Distância euclidiana entre os servidores dividida pela velocidade de propagação"""
    return float(pool.latency[a, b])


def transfer_time(data_bytes: float, a: int, b: int, pool: ServerPool) -> float:
    """Tempo para data_bytes irem de a para b (0 no mesmo servidor)"""
    if a == b:
        return 0.0
    return data_bytes / pool.bandwidth[a, b] + pool.latency[a, b]


def _preds_of(task: TaskSpec, dag: ServiceDag, preds: Optional[Preds]) -> Preds:
    if preds is not None:
        return preds
    return predecessors(dag)[task.id]


def input_ready_time(
    task: TaskSpec,
    server_id: int,
    partial: Assignment,
    dag: ServiceDag,
    pool: ServerPool,
    preds: Optional[Preds] = None,
) -> float:
    """
    Tempo até todos os dados de entrada chegarem ao servidor candidato.

    Raises:
        UnassignedPredecessor: algum predecessor ainda não foi alocado
    """
    ready = 0.0
    for pred_id, data_bytes in _preds_of(task, dag, preds):
        if pred_id not in partial:
            raise UnassignedPredecessor(f"Tarefa {task.id}: predecessor {pred_id} não alocado")
        ready = max(ready, transfer_time(data_bytes, partial[pred_id], server_id, pool))
    return ready


def input_ready_vector(preds: Preds, partial: Assignment, pool: ServerPool) -> np.ndarray:
    """input_ready_time para cada servidor candidato de uma só vez"""
    ready = np.zeros(pool.num_servers)
    for pred_id, data_bytes in preds:
        if pred_id not in partial:
            raise UnassignedPredecessor(f"Predecessor {pred_id} não alocado")
        src = partial[pred_id]
        np.maximum(ready, data_bytes / pool.bandwidth[src] + pool.latency[src], out=ready)
    return ready


def task_exec_time(
    task: TaskSpec,
    server_id: int,
    partial: Assignment,
    dag: ServiceDag,
    pool: ServerPool,
    preds: Optional[Preds] = None,
) -> float:
    return proc_time(task, pool.servers[server_id]) + input_ready_time(task, server_id, partial, dag, pool, preds)


def _require_total(dag: ServiceDag, assignment: Assignment) -> None:
    missing = [t.id for t in dag.tasks if t.id not in assignment]
    if missing:
        raise IncompleteAssignment(f"Tarefas sem servidor: {missing}")


def task_exec_times(dag: ServiceDag, assignment: Assignment, pool: ServerPool) -> Dict[int, float]:
    """T de cada tarefa sob a alocação completa"""
    _require_total(dag, assignment)
    preds = predecessors(dag)
    return {
        t.id: task_exec_time(t, assignment[t.id], assignment, dag, pool, preds[t.id])
        for t in dag.tasks
    }


def service_exec_time(dag: ServiceDag, assignment: Assignment, plan: RankedPlan, pool: ServerPool) -> float:
    """
    Objetivo do serviço: soma de T das tarefas do caminho crítico, somadas na
    ordem de execução.

    Raises:
        IncompleteAssignment: a alocação não cobre todas as tarefas
    """
    times = task_exec_times(dag, assignment, pool)
    return sum_on_path(times, plan)


def sum_on_path(times: Mapping[int, float], plan: RankedPlan) -> float:
    total = 0.0
    for v in plan.order:
        if plan.cp_indicator[v]:
            total += times[v]
    return total


def completion_times(dag: ServiceDag, assignment: Assignment, pool: ServerPool, order: Sequence[int]) -> Dict[int, float]:
    """Término acumulado: C(v) = max_u (C(u) + transferência(u, v)) + proc(v)"""
    preds = predecessors(dag)
    tasks = {t.id: t for t in dag.tasks}
    done: Dict[int, float] = {}
    for v in order:
        task = tasks[v]
        start = 0.0
        for u, data_bytes in preds[v]:
            start = max(start, done[u] + transfer_time(data_bytes, assignment[u], assignment[v], pool))
        done[v] = start + proc_time(task, pool.servers[assignment[v]])
    return done


def check_constraints(
    dag: ServiceDag,
    assignment: Assignment,
    pool: ServerPool,
    exec_times: Mapping[int, float],
    order: Optional[Sequence[int]] = None,
) -> List[Violation]:
    """
    Verifica CS1 (uma alocação válida por tarefa), CS2 (precedência dos
    tempos acumulados), CS3 (RAM por servidor) e CS4 (prazo por tarefa).
    """
    violations: List[Violation] = []
    m = pool.num_servers

    # CS1
    task_ids = {t.id for t in dag.tasks}
    for t in dag.tasks:
        server_id = assignment.get(t.id)
        if server_id is None or not 0 <= server_id < m:
            violations.append(Violation(
                constraint="CS1", task_id=t.id, server_id=server_id,
                detail="tarefa sem servidor válido",
            ))
    for extra in sorted(set(assignment) - task_ids):
        violations.append(Violation(constraint="CS1", task_id=extra, detail="alocação de tarefa inexistente"))
    if violations:
        return violations

    # CS2
    if order is None:
        order = execution_order(dag, upward_rank(dag, pool))
    done = completion_times(dag, assignment, pool, order)
    for e in dag.edges:
        if done[e.dst] < done[e.src] * (1 - _CS2_EPS):
            violations.append(Violation(
                constraint="CS2", task_id=e.dst, value=done[e.dst], limit=done[e.src],
                detail=f"termina antes do predecessor {e.src}",
            ))

    # CS3
    used = np.zeros(m)
    for t in dag.tasks:
        used[assignment[t.id]] += t.ram_bytes
    for s in range(m):
        capacity = pool.servers[s].ram_bytes
        if used[s] > capacity:
            violations.append(Violation(
                constraint="CS3", server_id=s, value=float(used[s]), limit=capacity,
                detail=f"RAM excedida em {pool.servers[s].name}",
            ))

    # CS4
    for t in dag.tasks:
        if exec_times[t.id] > t.deadline_s:
            violations.append(Violation(
                constraint="CS4", task_id=t.id, server_id=assignment[t.id],
                value=exec_times[t.id], limit=t.deadline_s,
                detail="prazo excedido",
            ))
    return violations
