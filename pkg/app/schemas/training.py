from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.scenario import ScenarioConfig

Backend = Literal["serial", "thread", "process"]


class ApoHyper(BaseModel):
    """Hiperparâmetros do APPO (com lr = 0.01 a camada tanh satura em estados de M=51)"""
    lr: float = Field(default=1e-3, gt=0)
    gamma: float = Field(default=0.99, gt=0, le=1)
    lam: float = Field(default=0.95, ge=0, le=1)
    clip_eps: float = Field(default=0.2, gt=0)
    rho_bar: float = Field(default=1.0, gt=0)
    c_bar: float = Field(default=1.0, gt=0)
    gradient_steps: int = Field(default=2, ge=0)
    rollout_len: int = Field(default=64, ge=1)
    train_batch_size: int = Field(default=512, ge=1)
    hidden_size: int = Field(default=128, ge=1)
    entropy_coef: float = Field(default=0.01, ge=0)
    # Padroniza Â por batch (média 0, desvio 1) antes do gradiente PPO; os
    # alvos do valor usam Â bruto
    normalize_advantages: bool = True
    # Escala da camada de saída da política na inicialização (0 = uniforme)
    policy_init_scale: float = Field(default=0.0, ge=0)
    # None = treina com qualquer batch, por mais antigo que seja
    max_version_lag: Optional[int] = Field(default=None, ge=0)
    # Capacidade do master buffer em experience batches
    buffer_capacity: int = Field(default=1024, ge=1)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    @model_validator(mode="after")
    def _check_clip(self) -> "ApoHyper":
        if self.rho_bar < self.c_bar:
            raise ValueError(f"rho_bar ({self.rho_bar}) deve ser >= c_bar ({self.c_bar})")
        return self


class RunConfig(BaseModel):
    """Configuração de uma execução de treino (A atores + 1 learner)"""
    num_actors: int = Field(default=1, ge=1)
    total_steps: int = Field(default=150_000, ge=1)
    # Limite opcional de rodadas de treino (encerra antes do orçamento de passos)
    max_rounds: Optional[int] = Field(default=None, ge=0)
    seed: int = 42
    backend: Backend = "thread"

    dataset_dir: Optional[Path] = None
    scenario_path: Optional[Path] = None
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    hyper: ApoHyper = Field(default_factory=ApoHyper)

    output_dir: Path = Path("runs/latest")
    checkpoint_dir: Optional[Path] = None
    checkpoint_every: int = Field(default=10, ge=1)
    checkpoint_keep: Optional[int] = Field(default=None, ge=1)
    eval_every: int = Field(default=10, ge=1)
    # Número máximo de serviços da partição de avaliação usados por ponto
    eval_limit: Optional[int] = Field(default=None, ge=1)
    trace_episodes: bool = False
    resume_from: Optional[Path] = None

    @model_validator(mode="after")
    def _check_budget(self) -> "RunConfig":
        if self.total_steps < self.hyper.rollout_len:
            raise ValueError(
                f"Orçamento de passos ({self.total_steps}) menor que o rollout ({self.hyper.rollout_len})"
            )
        return self

    @property
    def resolved_checkpoint_dir(self) -> Path:
        return self.checkpoint_dir or (self.output_dir / "checkpoints")

    @property
    def deterministic(self) -> bool:
        return self.backend == "serial"


class TrainingRoundLog(BaseModel):
    """Linha do log de treino (JSON-lines), uma por rodada"""
    version: int
    mean_reward: float
    mean_abs_advantage: float
    policy_loss: float
    value_loss: float
    num_transitions: int
    dropped_batches: int = 0
    wall_time: Optional[float] = None


class MetricsRow(BaseModel):
    """Ponto de avaliação (JSON-lines de métricas e linhas CSV dos experimentos)"""
    version: int
    env_steps: int
    wall_time: Optional[float] = None
    eval_mean_exec_time_s: float
    deadline_hit_rate: float
    extras: Dict[str, float] = Field(default_factory=dict)


class TrainingResult(BaseModel):
    run_id: str
    rounds: int
    env_steps: int
    wall_time: Optional[float] = None
    final_checkpoint: Optional[Path] = None
    metrics: List[MetricsRow] = Field(default_factory=list)
