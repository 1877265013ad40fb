from typing import Dict, List, Optional

from pydantic import BaseModel, computed_field

from app.utils.helpers import format_ms


class ViolationOut(BaseModel):
    """Violação de restrição (CS1..CS4)"""
    constraint: str
    task_id: Optional[int] = None
    server_id: Optional[int] = None
    value: Optional[float] = None
    limit: Optional[float] = None
    detail: str = ""


class TaskOutcome(BaseModel):
    task_id: int
    server_id: int
    server: str
    exec_time_s: float
    deadline_met: bool
    success: bool


class OracleResult(BaseModel):
    """Resultado da busca exaustiva"""
    assignment: Dict[int, int]
    objective_s: float
    feasible: bool
    nodes_explored: int


class BaselineResult(BaseModel):
    """Resultado de uma política de referência (greedy ou aleatória)"""
    policy: str
    assignment: Dict[int, int]
    objective_s: float
    feasible: bool


class OffloadResponse(BaseModel):
    """Configuração de offloading escolhida pela política para um serviço"""
    service_id: str
    policy_version: int
    assignment: Dict[int, int]
    exec_time_s: float
    deadline_hit_rate: float
    outcomes: List[TaskOutcome]
    violations: List[ViolationOut]
    decision_time_ms: float

    @computed_field
    @property
    def decision_time_label(self) -> str:
        """Tempo de decisão formatado (ms, 3 algarismos significativos)"""
        return f"{format_ms(self.decision_time_ms)} ms"


class PolicyInfo(BaseModel):
    version: int
    checkpoint: Optional[str] = None
    num_servers: int
    state_size: int
