from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

Range = Tuple[float, float]

# Composição do cenário padrão: 1 IoT + 30 FS + 20 CS = 51 servidores
DEFAULT_NUM_FOG = 30
DEFAULT_NUM_CLOUD = 20


class ServerSpec(BaseModel):
    """Servidor explícito (sobrepõe a amostragem por camada)"""
    tier: Literal["iot", "fs", "cs"]
    index: int = Field(ge=0)
    cores: int = Field(ge=1)
    freq_hz: float = Field(gt=0)
    ram_bytes: float = Field(gt=0)
    x: float = 0.0
    y: float = 0.0


class NormalizationBounds(BaseModel):
    """
    Limites fixos (min, max) de cada feature do estado.

    Os valores são escalados para [0, 1] com esses limites e saturados
    fora deles; nunca são recalculados por batch.
    """
    position: Range = (-5e5, 5e5)
    freq_hz: Range = (1e9, 3e9)
    cores: Range = (1.0, 8.0)
    server_ram: Range = (0.0, 24e9)
    bandwidth: Range = (4e6, 12e6)
    latency_s: Range = (0.0, 2.5e-3)
    cycles: Range = (0.0, 3e8)
    task_ram: Range = (0.0, 1e8)
    deadline_s: Range = (0.0, 0.1)
    input_bytes: Range = (0.0, 2e7)
    num_predecessors: Range = (0.0, 50.0)
    ready_time_s: Range = (0.0, 1.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "NormalizationBounds":
        for name, (lo, hi) in self:
            if not hi > lo:
                raise ValueError(f"Limite inválido para {name}: ({lo}, {hi})")
        return self


class ScenarioConfig(BaseModel):
    """
    Configuração do ambiente de fog simulado.

    Sem `servers`, o pool é amostrado por camada (IoT, FS, CS) com a seed do
    cenário. Unidades: Hz, bytes, bytes/s, metros, segundos.
    """
    model_config = ConfigDict(validate_assignment=True)

    num_fog: int = Field(default=DEFAULT_NUM_FOG, ge=0)
    num_cloud: int = Field(default=DEFAULT_NUM_CLOUD, ge=0)

    iot_cores: int = 1
    iot_freq_hz: float = 1e9
    iot_ram_bytes: float = 1e9

    fog_cores: int = 4
    fog_freq_hz: Range = (1.5e9, 2e9)
    fog_ram_bytes: Range = (1e9, 4e9)

    cloud_cores: int = 8
    cloud_freq_hz: Range = (2e9, 3e9)
    cloud_ram_bytes: Range = (16e9, 24e9)

    # IoT<->FS e FS<->FS
    edge_bandwidth: Range = (10e6, 12e6)
    # qualquer<->CS
    cloud_bandwidth: Range = (4e6, 8e6)

    region_m: float = Field(default=1000.0, gt=0)
    cloud_distance_m: Range = (1e5, 5e5)
    propagation_speed: float = Field(default=2e8, gt=0)

    servers: Optional[List[ServerSpec]] = None
    bandwidth: Optional[List[List[float]]] = None

    phi: float = Field(default=-1.0, lt=0)
    mask_infeasible: bool = False
    normalization: NormalizationBounds = Field(default_factory=NormalizationBounds)
    seed: int = 42

    @model_validator(mode="after")
    def _check_servers(self) -> "ScenarioConfig":
        if self.servers is not None:
            if len(self.servers) < 2:
                raise ValueError("Cenário precisa de pelo menos 2 servidores")
            if self.bandwidth is not None:
                m = len(self.servers)
                if len(self.bandwidth) != m or any(len(row) != m for row in self.bandwidth):
                    raise ValueError(f"Matriz de banda deve ser {m}x{m}")
        elif 1 + self.num_fog + self.num_cloud < 2:
            raise ValueError("Cenário precisa de pelo menos 2 servidores")
        return self

    @property
    def num_servers(self) -> int:
        if self.servers is not None:
            return len(self.servers)
        return 1 + self.num_fog + self.num_cloud

    def with_num_servers(self, num_servers: int) -> "ScenarioConfig":
        """
        Escala o cenário para M servidores mantendo 1 IoT e a proporção
        FS:CS do cenário padrão (30:20).
        """
        if num_servers < 2:
            raise ValueError("Cenário precisa de pelo menos 2 servidores")
        remote = num_servers - 1
        num_fog = int(round(remote * DEFAULT_NUM_FOG / (DEFAULT_NUM_FOG + DEFAULT_NUM_CLOUD)))
        num_fog = min(max(num_fog, 1 if remote > 1 else 0), remote)
        return self.model_copy(update={
            "num_fog": num_fog,
            "num_cloud": remote - num_fog,
            "servers": None,
            "bandwidth": None,
        })
