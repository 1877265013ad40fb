import sys
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

# Adicionar raiz do projeto ao path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import settings
from app.core.servers import Server, ServerPool
from app.schemas.dag import DagEdge, ServiceDag, TaskSpec
from app.schemas.scenario import ScenarioConfig
from app.schemas.workload import DatasetSpec


def _make_dag(tasks, edges=(), dag_id="test"):
    """
    tasks: lista de (cycles, ram, deadline_ms) ou dicts; ids = posição
    edges: lista de (src, dst, bytes)
    """
    specs = []
    for i, t in enumerate(tasks):
        if isinstance(t, dict):
            specs.append(TaskSpec(id=i, **t))
        else:
            cycles, ram, deadline_ms = t
            specs.append(TaskSpec(id=i, cycles=cycles, ram=ram, deadline_ms=deadline_ms))
    return ServiceDag(
        id=dag_id,
        tasks=specs,
        edges=[DagEdge(src=u, dst=v, data_bytes=b) for u, v, b in edges],
    )


def _make_pool(freqs, ram=None, bandwidth=1e7, positions=None, tiers=None):
    """Pool explícito; bandwidth escalar ou matriz M x M"""
    m = len(freqs)
    ram = ram if ram is not None else [4e9] * m
    positions = positions if positions is not None else [(0.0, 0.0)] * m
    tiers = tiers or (["iot"] + ["fs"] * (m - 1))
    counters = {}
    servers = []
    for tier, f, r, (x, y) in zip(tiers, freqs, ram, positions):
        idx = counters.get(tier, 0)
        counters[tier] = idx + 1
        servers.append(Server(tier=tier, index=idx, cores=4, freq_hz=f, ram_bytes=r, x=x, y=y))
    bw = np.array(bandwidth, dtype=np.float64) if np.ndim(bandwidth) == 2 else np.full((m, m), float(bandwidth))
    return ServerPool(servers=tuple(servers), bandwidth=bw)


@pytest.fixture
def make_dag():
    """Fábrica de DAGs a partir de tuplas"""
    return _make_dag


@pytest.fixture
def make_pool():
    """Fábrica de pools explícitos"""
    return _make_pool


@pytest.fixture
def small_scenario():
    """Cenário com M=4 (1 IoT, 2 FS, 1 CS)"""
    return ScenarioConfig().with_num_servers(4)


@pytest.fixture
def diamond_dag():
    """DAG losango 0 -> {1, 2} -> 3"""
    return _make_dag(
        [(1e8, 5e7, 100), (5e7, 3e7, 100), (2e8, 3e7, 100), (1e7, 2e7, 100)],
        [(0, 1, 1e6), (0, 2, 5e5), (1, 3, 2e6), (2, 3, 1e5)],
        dag_id="diamond",
    )


@pytest.fixture
def chain_dag():
    """Cadeia 0 -> 1 -> 2"""
    return _make_dag(
        [(1e8, 5e7, 80), (1e8, 5e7, 80), (1e8, 5e7, 80)],
        [(0, 1, 1e6), (1, 2, 1e6)],
        dag_id="chain",
    )


@pytest.fixture
def tiny_dataset_spec():
    """Grade pequena: L in {3, 6}, 1 fat, 1 density, 4 pesos por topologia"""
    return DatasetSpec(num_tasks=[3, 6], fat=[0.8], density=[0.5], weightings_per_topology=4, train_fraction=0.5)


@pytest.fixture
def logs_dir(tmp_path):
    """Diretório de logs temporário"""
    original = settings.LOGS_DIR
    settings.LOGS_DIR = tmp_path / "logs"
    settings.LOGS_DIR.mkdir()
    yield settings.LOGS_DIR
    settings.LOGS_DIR = original


@pytest.fixture
def client(tmp_path, small_scenario):
    """Cliente de teste com broker em cenário pequeno e sem checkpoints"""
    from main import create_app
    from app.services.broker import PolicyBroker

    broker = PolicyBroker(scenario=small_scenario, checkpoint_dir=tmp_path / "checkpoints", hidden_size=16)
    return TestClient(create_app(broker=broker))
