"""
DAGs de serviço: validação, upward rank, ordem de execução e caminho crítico.

O rank segue a recorrência HEFT com custos médios independentes da alocação:
    rank(v) = avg_comp(v) + max_{c in filhos(v)} (avg_comm(v, c) + rank(c))
com avg_comp(v) = média de ciclos/f sobre todos os servidores e
avg_comm(e) = média de (bytes/b + l) sobre os M^2 pares ordenados, pares
com o mesmo servidor contando 0.
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np

from app.core.exceptions import CycleDetected, DanglingEdge, DuplicateTaskId, EmptyDag, InvalidDag
from app.core.servers import ServerPool
from app.schemas.dag import ServiceDag

Edge = Tuple[int, int]


@dataclass(frozen=True)
class RankedPlan:
    """Resultado do pré-escalonamento de um serviço"""
    order: Tuple[int, ...]
    rank: Dict[int, float]
    critical_path: Tuple[int, ...]
    cp_indicator: Dict[int, int]


def validate_dag(dag: ServiceDag) -> None:
    """
    Valida a estrutura do DAG, levantando a primeira violação encontrada.

    Raises:
        EmptyDag, DuplicateTaskId, DanglingEdge, CycleDetected, InvalidDag
    """
    if not dag.tasks:
        raise EmptyDag(f"DAG {dag.id} não possui tarefas")

    ids = set()
    for task in dag.tasks:
        if task.id in ids:
            raise DuplicateTaskId(f"DAG {dag.id}: tarefa {task.id} repetida")
        ids.add(task.id)

    seen_edges = set()
    for edge in dag.edges:
        for endpoint in (edge.src, edge.dst):
            if endpoint not in ids:
                raise DanglingEdge(f"DAG {dag.id}: aresta {edge.src}->{edge.dst} referencia tarefa {endpoint} inexistente")
        if edge.src == edge.dst:
            raise CycleDetected(f"DAG {dag.id}: laço na tarefa {edge.src}")
        if (edge.src, edge.dst) in seen_edges:
            raise InvalidDag(f"DAG {dag.id}: aresta {edge.src}->{edge.dst} repetida")
        seen_edges.add((edge.src, edge.dst))

    graph = build_graph(dag)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise CycleDetected(f"DAG {dag.id}: ciclo {[u for u, _ in cycle]}")


def build_graph(dag: ServiceDag) -> nx.DiGraph:
    """DiGraph com atributos cycles/ram/deadline_s nos nós e data_bytes nas arestas"""
    graph = nx.DiGraph()
    for task in dag.tasks:
        graph.add_node(task.id, cycles=task.cpu_cycles, ram=task.ram_bytes, deadline_s=task.deadline_s)
    for edge in dag.edges:
        graph.add_edge(edge.src, edge.dst, data_bytes=edge.data_bytes)
    return graph


def predecessors(dag: ServiceDag) -> Dict[int, List[Tuple[int, float]]]:
    """Mapa tarefa -> [(predecessor, bytes)] na ordem das arestas"""
    preds: Dict[int, List[Tuple[int, float]]] = {t.id: [] for t in dag.tasks}
    for edge in dag.edges:
        preds[edge.dst].append((edge.src, edge.data_bytes))
    return preds


def successors(dag: ServiceDag) -> Dict[int, List[int]]:
    succ: Dict[int, List[int]] = {t.id: [] for t in dag.tasks}
    for edge in dag.edges:
        succ[edge.src].append(edge.dst)
    return succ


def average_costs(dag: ServiceDag, pool: ServerPool) -> Tuple[Dict[int, float], Dict[Edge, float]]:
    """Custos médios de computação por tarefa e de comunicação por aresta"""
    if pool.num_servers < 1:
        raise InvalidDag("Pool de servidores vazio")
    freqs = pool.freqs
    m = pool.num_servers
    off = ~np.eye(m, dtype=bool)
    inv_bw_sum = float((1.0 / pool.bandwidth[off]).sum())
    lat_sum = float(pool.latency[off].sum())

    avg_comp = {t.id: float(np.mean(t.cpu_cycles / freqs)) for t in dag.tasks}
    avg_comm = {
        (e.src, e.dst): (e.data_bytes * inv_bw_sum + lat_sum) / (m * m)
        for e in dag.edges
    }
    return avg_comp, avg_comm


def rank_from_costs(dag: ServiceDag, avg_comp: Dict[int, float], avg_comm: Dict[Edge, float]) -> Dict[int, float]:
    """Recorrência do upward rank sobre custos médios já calculados"""
    graph = build_graph(dag)
    rank: Dict[int, float] = {}
    for v in reversed(list(nx.topological_sort(graph))):
        tail = 0.0
        for c in sorted(graph.successors(v)):
            tail = max(tail, avg_comm[(v, c)] + rank[c])
        rank[v] = avg_comp[v] + tail
    return rank


def upward_rank(dag: ServiceDag, pool: ServerPool) -> Dict[int, float]:
    validate_dag(dag)
    avg_comp, avg_comm = average_costs(dag, pool)
    return rank_from_costs(dag, avg_comp, avg_comm)


def execution_order(dag: ServiceDag, rank: Dict[int, float]) -> List[int]:
    """Tarefas em ordem decrescente de rank; empate pelo menor id"""
    missing = [t.id for t in dag.tasks if t.id not in rank]
    if missing:
        raise InvalidDag(f"Rank ausente para as tarefas {missing}")
    return sorted((t.id for t in dag.tasks), key=lambda v: (-rank[v], v))


def critical_path(
    dag: ServiceDag,
    rank: Dict[int, float],
    avg_comm: Dict[Edge, float],
) -> Tuple[Tuple[int, ...], Dict[int, int]]:
    """
    Caminho crítico: parte da tarefa de entrada de maior rank e segue o filho
    que maximiza avg_comm + rank até uma tarefa de saída.

    Returns:
        (caminho na ordem de execução, indicador CP(v) para cada tarefa)
    """
    succ = successors(dag)
    has_parent = {e.dst for e in dag.edges}
    entries = [t.id for t in dag.tasks if t.id not in has_parent]

    current = min(entries, key=lambda v: (-rank[v], v))
    path = [current]
    while succ[current]:
        current = min(succ[current], key=lambda c: (-(avg_comm[(current, c)] + rank[c]), c))
        path.append(current)

    on_path = set(path)
    indicator = {t.id: int(t.id in on_path) for t in dag.tasks}
    return tuple(path), indicator


def path_cost(path: Sequence[int], avg_comp: Dict[int, float], avg_comm: Dict[Edge, float]) -> float:
    """Soma de avg_comp + avg_comm ao longo de um caminho"""
    total = sum(avg_comp[v] for v in path)
    total += sum(avg_comm[(u, v)] for u, v in zip(path, path[1:]))
    return total


def plan_service(dag: ServiceDag, pool: ServerPool) -> RankedPlan:
    """Pré-escalonamento: valida, calcula ranks, ordem e caminho crítico"""
    validate_dag(dag)
    avg_comp, avg_comm = average_costs(dag, pool)
    rank = rank_from_costs(dag, avg_comp, avg_comm)
    order = execution_order(dag, rank)
    path, indicator = critical_path(dag, rank, avg_comm)
    return RankedPlan(order=tuple(order), rank=rank, critical_path=path, cp_indicator=indicator)
