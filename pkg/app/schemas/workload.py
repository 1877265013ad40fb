from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, computed_field, model_validator

Range = Tuple[float, float]

MB = 1e6
KB = 1e3


class TopologyParams(BaseModel):
    """Parâmetros de forma do DAG: L tarefas, fat (largura/altura) e density (arestas)"""
    num_tasks: int
    fat: float
    density: float
    seed: int = 42
    # Pais candidatos restritos aos `jump` níveis anteriores (None = todos)
    jump: Optional[int] = Field(default=None, ge=1)


class WeightRanges(BaseModel):
    """Faixas uniformes dos pesos: ciclos, RAM (bytes), dados por aresta (bytes), prazo (ms)"""
    cycles: Range = (1e7, 3e8)
    ram: Range = (25 * MB, 100 * MB)
    edge_bytes: Range = (50 * KB, 2000 * KB)
    deadline_ms: Range = (25.0, 100.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "WeightRanges":
        for name, (lo, hi) in self:
            if lo <= 0 or lo > hi:
                raise ValueError(f"Faixa inválida para {name}: ({lo}, {hi})")
        return self


class DatasetSpec(BaseModel):
    """
    Especificação do dataset sintético.

    As topologias percorrem a grade (num_tasks x fat x density), com
    `topologies_per_grid_point` topologias por ponto e `weightings_per_topology`
    DAGs com pesos distintos por topologia.
    """
    num_tasks: List[int] = Field(default_factory=lambda: list(range(5, 55, 5)))
    fat: List[float] = Field(default_factory=lambda: [0.4, 0.5, 0.6, 0.7, 0.8])
    density: List[float] = Field(default_factory=lambda: [0.4, 0.5, 0.6, 0.7, 0.8])
    topologies_per_grid_point: int = Field(default=1, ge=1)
    weightings_per_topology: int = Field(default=100, ge=1)
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    ranges: WeightRanges = Field(default_factory=WeightRanges)
    seed: int = 42
    jump: Optional[int] = Field(default=None, ge=1)
    # Leave-one-L-out: treino sem este L, avaliação só com ele
    holdout_num_tasks: Optional[int] = None

    @model_validator(mode="after")
    def _check_grid(self) -> "DatasetSpec":
        if not self.num_tasks or not self.fat or not self.density:
            raise ValueError("A grade de topologias não pode ser vazia")
        if self.holdout_num_tasks is not None and self.holdout_num_tasks not in self.num_tasks:
            raise ValueError(f"L={self.holdout_num_tasks} não está na grade {self.num_tasks}")
        return self

    @computed_field
    @property
    def total_topologies(self) -> int:
        return len(self.num_tasks) * len(self.fat) * len(self.density) * self.topologies_per_grid_point

    @computed_field
    @property
    def total_dags(self) -> int:
        return self.total_topologies * self.weightings_per_topology

    def grid(self) -> List[TopologyParams]:
        """Topologias em ordem determinística (L, fat, density, réplica)"""
        params = []
        for num_tasks in self.num_tasks:
            for fat in self.fat:
                for density in self.density:
                    for _ in range(self.topologies_per_grid_point):
                        params.append(TopologyParams(
                            num_tasks=num_tasks,
                            fat=fat,
                            density=density,
                            seed=self.seed,
                            jump=self.jump,
                        ))
        return params


class ManifestEntry(BaseModel):
    id: str
    topology: int
    weighting: int
    num_tasks: int
    fat: float
    density: float
    num_edges: int
    split: Literal["train", "eval"]


class DatasetManifest(BaseModel):
    """Conteúdo de manifest.json: spec usada + ids e partição de cada DAG"""
    spec: DatasetSpec
    entries: List[ManifestEntry]

    def ids(self, split: Optional[str] = None) -> List[str]:
        return [e.id for e in self.entries if split is None or e.split == split]
