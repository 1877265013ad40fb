"""
Servidores e rede do ambiente de fog (IoT, FS, CS).
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import FogAppoError
from app.schemas.scenario import ScenarioConfig, ServerSpec
from app.utils.rng import STREAM_SCENARIO, make_rng

TIERS = ("iot", "fs", "cs")


@dataclass(frozen=True)
class Server:
    """Servidor m^{y,z}: camada y, índice z dentro da camada"""
    tier: str
    index: int
    cores: int
    freq_hz: float
    ram_bytes: float
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if self.tier not in TIERS:
            raise FogAppoError(f"Camada desconhecida: {self.tier}")
        if self.freq_hz <= 0 or self.cores < 1 or self.ram_bytes <= 0:
            raise FogAppoError(f"Servidor inválido: {self.name}")

    @property
    def name(self) -> str:
        return f"{self.tier}-{self.index}"


@dataclass(frozen=True, eq=False)
class ServerPool:
    """
    Conjunto de M servidores com banda e latência entre pares.

    `bandwidth[a, b]` em bytes/s; a diagonal é infinita, então um dado que
    não muda de servidor leva 0 s para chegar. `latency[a, b]` em segundos.
    """
    servers: Tuple[Server, ...]
    bandwidth: np.ndarray
    propagation_speed: float = 2e8
    latency: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = len(self.servers)
        if m < 2:
            raise FogAppoError(f"Pool precisa de pelo menos 2 servidores (M={m})")
        if self.propagation_speed <= 0:
            raise FogAppoError("Velocidade de propagação deve ser positiva")

        bw = np.array(self.bandwidth, dtype=np.float64)
        if bw.shape != (m, m):
            raise FogAppoError(f"Matriz de banda com forma {bw.shape}, esperado ({m}, {m})")
        off = ~np.eye(m, dtype=bool)
        if not np.all(bw[off] > 0) or not np.all(np.isfinite(bw[off])):
            raise FogAppoError("Banda deve ser positiva e finita entre servidores distintos")
        if not np.array_equal(bw[off], bw.T[off]):
            raise FogAppoError("Matriz de banda deve ser simétrica")
        np.fill_diagonal(bw, np.inf)
        bw.setflags(write=False)
        object.__setattr__(self, "bandwidth", bw)

        pos = self.positions
        diff = pos[:, None, :] - pos[None, :, :]
        lat = np.sqrt((diff ** 2).sum(axis=-1)) / self.propagation_speed
        lat.setflags(write=False)
        object.__setattr__(self, "latency", lat)

    def __len__(self) -> int:
        return len(self.servers)

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @property
    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.servers], dtype=np.float64)

    @property
    def freqs(self) -> np.ndarray:
        return np.array([s.freq_hz for s in self.servers], dtype=np.float64)

    @property
    def ram_capacities(self) -> np.ndarray:
        return np.array([s.ram_bytes for s in self.servers], dtype=np.float64)

    @property
    def iot_index(self) -> int:
        """Servidor de origem das requisições (primeiro IoT; 0 se não houver)"""
        for i, s in enumerate(self.servers):
            if s.tier == "iot":
                return i
        return 0

    def mean_bandwidth(self) -> np.ndarray:
        """Banda média de cada servidor para os demais"""
        m = self.num_servers
        off = ~np.eye(m, dtype=bool)
        return np.array([self.bandwidth[i][off[i]].mean() for i in range(m)])


def _sample_bandwidth(tiers: Sequence[str], cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    m = len(tiers)
    bw = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            if tiers[a] == "cs" or tiers[b] == "cs":
                lo, hi = cfg.cloud_bandwidth
            else:
                lo, hi = cfg.edge_bandwidth
            bw[a, b] = bw[b, a] = rng.uniform(lo, hi)
    return bw


def _sample_servers(cfg: ScenarioConfig, rng: np.random.Generator) -> List[Server]:
    region = cfg.region_m
    center = region / 2.0
    servers = [Server(
        tier="iot",
        index=0,
        cores=cfg.iot_cores,
        freq_hz=cfg.iot_freq_hz,
        ram_bytes=cfg.iot_ram_bytes,
        x=float(rng.uniform(0, region)),
        y=float(rng.uniform(0, region)),
    )]
    for z in range(cfg.num_fog):
        servers.append(Server(
            tier="fs",
            index=z,
            cores=cfg.fog_cores,
            freq_hz=float(rng.uniform(*cfg.fog_freq_hz)),
            ram_bytes=float(rng.uniform(*cfg.fog_ram_bytes)),
            x=float(rng.uniform(0, region)),
            y=float(rng.uniform(0, region)),
        ))
    for z in range(cfg.num_cloud):
        distance = rng.uniform(*cfg.cloud_distance_m)
        angle = rng.uniform(0, 2 * np.pi)
        servers.append(Server(
            tier="cs",
            index=z,
            cores=cfg.cloud_cores,
            freq_hz=float(rng.uniform(*cfg.cloud_freq_hz)),
            ram_bytes=float(rng.uniform(*cfg.cloud_ram_bytes)),
            x=float(center + distance * np.cos(angle)),
            y=float(center + distance * np.sin(angle)),
        ))
    return servers


def _from_specs(specs: Sequence[ServerSpec]) -> List[Server]:
    return [Server(
        tier=s.tier,
        index=s.index,
        cores=s.cores,
        freq_hz=s.freq_hz,
        ram_bytes=s.ram_bytes,
        x=s.x,
        y=s.y,
    ) for s in specs]


def build_pool(cfg: ScenarioConfig, seed: Optional[int] = None) -> ServerPool:
    """
    Constrói o ServerPool do cenário.

    Servidores explícitos são usados como estão; caso contrário cada camada é
    amostrada do fluxo STREAM_SCENARIO da seed (cfg.seed por padrão).
    """
    rng = make_rng(cfg.seed if seed is None else seed, STREAM_SCENARIO)
    if cfg.servers is not None:
        servers = _from_specs(cfg.servers)
    else:
        servers = _sample_servers(cfg, rng)

    if cfg.bandwidth is not None:
        bandwidth = np.array(cfg.bandwidth, dtype=np.float64)
    else:
        bandwidth = _sample_bandwidth([s.tier for s in servers], cfg, rng)

    return ServerPool(
        servers=tuple(servers),
        bandwidth=bandwidth,
        propagation_speed=cfg.propagation_speed,
    )
