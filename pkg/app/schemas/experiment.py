from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field

from app.schemas.scenario import ScenarioConfig, ServerSpec
from app.schemas.training import ApoHyper, Backend
from app.schemas.workload import DatasetSpec

ExperimentKind = Literal["convergence", "system_size", "speedup", "dto", "optimality"]


def _desk_dataset() -> DatasetSpec:
    # 10 topologias (L = 5..50, fat = density = 0.8) x 10 pesos
    return DatasetSpec(fat=[0.8], density=[0.8], weightings_per_topology=10)


def _optimality_scenario() -> ScenarioConfig:
    # M=4 heterogêneo: fs-0 tem a CPU mais rápida e pouca RAM, fs-1 fica no
    # meio, cs-0 tem a maior RAM atrás dos links mais lentos
    servers = [
        ServerSpec(tier="iot", index=0, cores=1, freq_hz=1.0e9, ram_bytes=1e9, x=500.0, y=500.0),
        ServerSpec(tier="fs", index=0, cores=2, freq_hz=2.9e9, ram_bytes=1e9, x=650.0, y=420.0),
        ServerSpec(tier="fs", index=1, cores=4, freq_hz=1.8e9, ram_bytes=4e9, x=300.0, y=700.0),
        ServerSpec(tier="cs", index=0, cores=8, freq_hz=2.2e9, ram_bytes=24e9, x=500.0, y=200_500.0),
    ]
    bandwidth = [
        [0.0, 10e6, 11e6, 5e6],
        [10e6, 0.0, 12e6, 5e6],
        [11e6, 12e6, 0.0, 5e6],
        [5e6, 5e6, 5e6, 0.0],
    ]
    return ScenarioConfig(servers=servers, bandwidth=bandwidth)


class ExperimentSpec(BaseModel):
    """
    Documento de experimento (`fog-appo experiment spec.json`).

    Campos não usados por um `kind` são ignorados por ele.
    """
    kind: ExperimentKind
    name: Optional[str] = None
    seed: int = 42
    output_dir: Path = Path("runs/experiments")
    backend: Backend = "serial"

    dataset_dir: Optional[Path] = None
    dataset: DatasetSpec = Field(default_factory=_desk_dataset)
    holdout_num_tasks: Optional[int] = None

    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    hyper: ApoHyper = Field(default_factory=ApoHyper)

    # convergence / system_size / optimality
    rounds: int = Field(default=200, ge=1)
    eval_every: int = Field(default=10, ge=1)
    eval_limit: Optional[int] = Field(default=None, ge=1)
    num_actors: int = Field(default=1, ge=1)
    num_servers_grid: List[int] = Field(default_factory=lambda: [25, 50, 75, 100])

    # speedup
    actor_counts: List[int] = Field(default_factory=lambda: [1, 2, 4])
    step_budget: int = Field(default=150_000, ge=1)

    # dto
    dto_num_tasks: List[int] = Field(default_factory=lambda: [20, 40])
    dto_services: int = Field(default=100, ge=1)
    checkpoint: Optional[Path] = None

    # optimality
    # None = cenário principal reduzido a optimality_num_servers servidores
    optimality_scenario: Optional[ScenarioConfig] = Field(default_factory=_optimality_scenario)
    optimality_num_servers: int = Field(default=4, ge=2)
    optimality_max_tasks: int = Field(default=6, ge=1)
    optimality_eval_instances: int = Field(default=50, ge=1)
    optimality_train_instances: int = Field(default=200, ge=1)
    optimality_rounds: int = Field(default=50, ge=1)

    # critérios de aceitação
    max_convergence_ratio: float = 0.7
    max_optimality_gap: float = 0.05
    min_speedup_4: float = 2.5
    min_cores_for_speedup: int = 8

    gnuplot: bool = False

    @property
    def resolved_name(self) -> str:
        return self.name or self.kind


class AcceptanceCheck(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    skipped: bool = False
    detail: str = ""


class ExperimentReport(BaseModel):
    kind: ExperimentKind
    csv_path: Path
    gnuplot_path: Optional[Path] = None
    rows: List[dict] = Field(default_factory=list)
    checks: List[AcceptanceCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)
