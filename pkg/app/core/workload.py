"""
Gerador sintético de DAGs em níveis (estilo daggen).

- níveis = round(sqrt(L) / fat), limitado a [1, L]; tarefas espalhadas entre
  os níveis o mais igualmente possível, com jitter de ±1 por nível;
- toda tarefa fora do primeiro nível recebe um pai obrigatório do nível
  anterior; cada outro par (tarefa de nível anterior -> tarefa) vira aresta
  com probabilidade `density`.

Cada DAG usa o próprio fluxo aleatório derivado de (seed, fluxo, id), então
gerar em paralelo ou em série dá o mesmo dataset.
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.core.dag import build_graph, validate_dag
from app.schemas.dag import DagEdge, ServiceDag, TaskSpec
from app.schemas.workload import DatasetSpec, TopologyParams, WeightRanges
from app.utils.log_helpers import log_warning
from app.utils.rng import STREAM_SPLIT, STREAM_TOPOLOGY, STREAM_WEIGHTS, make_rng


def clamp_params(p: TopologyParams) -> Tuple[int, float, float]:
    """Satura L >= 1, fat em (0, 1] e density em [0, 1], registrando aviso"""
    num_tasks = max(1, int(p.num_tasks))
    fat = min(max(p.fat, 1e-3), 1.0)
    density = min(max(p.density, 0.0), 1.0)
    if (num_tasks, fat, density) != (p.num_tasks, p.fat, p.density):
        log_warning("Parâmetros de topologia ajustados",
                    requested={"num_tasks": p.num_tasks, "fat": p.fat, "density": p.density},
                    used={"num_tasks": num_tasks, "fat": fat, "density": density})
    return num_tasks, fat, density


def num_levels(num_tasks: int, fat: float) -> int:
    return min(max(int(round(math.sqrt(num_tasks) / fat)), 1), num_tasks)


def level_sizes(num_tasks: int, fat: float, rng: np.random.Generator) -> List[int]:
    levels = num_levels(num_tasks, fat)
    base, extra = divmod(num_tasks, levels)
    sizes = [base + (1 if i < extra else 0) for i in range(levels)]
    if levels > 1:
        for i in range(levels):
            shift = int(rng.integers(-1, 2))
            j = (i + 1) % levels
            if shift > 0 and sizes[j] > 1:
                sizes[i] += 1
                sizes[j] -= 1
            elif shift < 0 and sizes[i] > 1:
                sizes[i] -= 1
                sizes[j] += 1
    return sizes


def generate_topology(p: TopologyParams, stream_id: int = 0, dag_id: str = "topology") -> ServiceDag:
    """Esqueleto com pesos unitários"""
    num_tasks, fat, density = clamp_params(p)
    rng = make_rng(p.seed, STREAM_TOPOLOGY, stream_id)

    levels: List[List[int]] = []
    next_id = 0
    for size in level_sizes(num_tasks, fat, rng):
        levels.append(list(range(next_id, next_id + size)))
        next_id += size

    edges = set()
    for depth in range(1, len(levels)):
        first_candidate = 0 if p.jump is None else max(0, depth - p.jump)
        candidates = [u for lvl in levels[first_candidate:depth] for u in lvl]
        for v in levels[depth]:
            parents = levels[depth - 1]
            edges.add((parents[int(rng.integers(len(parents)))], v))
            for u in candidates:
                if (u, v) not in edges and rng.random() < density:
                    edges.add((u, v))

    skeleton = ServiceDag(
        id=dag_id,
        tasks=[TaskSpec(id=i, cycles=1, ram=1, deadline_ms=1) for i in range(num_tasks)],
        edges=[DagEdge(src=u, dst=v, data_bytes=1) for u, v in sorted(edges)],
    )
    validate_dag(skeleton)
    return skeleton


def level_count(dag: ServiceDag) -> int:
    """Profundidade (número de níveis) de um DAG"""
    return nx.dag_longest_path_length(build_graph(dag)) + 1


def assign_weights(skeleton: ServiceDag, ranges: WeightRanges, seed: int, stream_id: int = 0, dag_id: Optional[str] = None) -> ServiceDag:
    """Sorteia ciclos, RAM, prazo e bytes uniformemente nas faixas; topologia intacta"""
    rng = make_rng(seed, STREAM_WEIGHTS, stream_id)
    tasks = [
        TaskSpec(
            id=t.id,
            cycles=float(rng.uniform(*ranges.cycles)),
            ram=float(rng.uniform(*ranges.ram)),
            deadline_ms=float(rng.uniform(*ranges.deadline_ms)),
        )
        for t in skeleton.tasks
    ]
    edges = [
        DagEdge(src=e.src, dst=e.dst, data_bytes=float(rng.uniform(*ranges.edge_bytes)))
        for e in skeleton.edges
    ]
    return ServiceDag(id=dag_id or skeleton.id, tasks=tasks, edges=edges)


def dag_id_for(topology: int, weighting: int) -> str:
    return f"dag-{topology:04d}-{weighting:03d}"


def generate_group(spec: DatasetSpec, topology: int, params: TopologyParams) -> List[ServiceDag]:
    """Todas as variantes de peso de uma topologia do grid"""
    skeleton = generate_topology(params, stream_id=topology, dag_id=f"topology-{topology:04d}")
    return [
        assign_weights(
            skeleton,
            spec.ranges,
            spec.seed,
            stream_id=topology * spec.weightings_per_topology + k,
            dag_id=dag_id_for(topology, k),
        )
        for k in range(spec.weightings_per_topology)
    ]


def split_ids(dags: Sequence[ServiceDag], spec: DatasetSpec) -> Dict[str, str]:
    """
    Partição treino/avaliação estratificada por L.

    Com holdout_num_tasks, o treino fica com todo L diferente e a avaliação
    só com o L retido. Grupo com 2 ou mais serviços sempre deixa ao menos
    um na avaliação.
    """
    if spec.holdout_num_tasks is not None:
        return {
            d.id: ("eval" if d.num_tasks == spec.holdout_num_tasks else "train")
            for d in dags
        }

    rng = make_rng(spec.seed, STREAM_SPLIT)
    by_size: Dict[int, List[str]] = {}
    for d in dags:
        by_size.setdefault(d.num_tasks, []).append(d.id)

    split: Dict[str, str] = {}
    for size in sorted(by_size):
        ids = sorted(by_size[size])
        n_train = int(round(spec.train_fraction * len(ids)))
        if len(ids) >= 2:
            n_train = min(n_train, len(ids) - 1)
        for rank, i in enumerate(rng.permutation(len(ids))):
            split[ids[i]] = "train" if rank < n_train else "eval"
    return split
