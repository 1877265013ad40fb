from typing import List

from pydantic import BaseModel, ConfigDict, Field


class TaskSpec(BaseModel):
    """Tarefa de um serviço DAG (ciclos de CPU, RAM em bytes, prazo em ms)"""
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0)
    cycles: float = Field(gt=0)
    ram: float = Field(gt=0)
    deadline_ms: float = Field(gt=0)

    @property
    def cpu_cycles(self) -> float:
        return self.cycles

    @property
    def ram_bytes(self) -> float:
        return self.ram

    @property
    def deadline_s(self) -> float:
        return self.deadline_ms / 1000.0


class DagEdge(BaseModel):
    """Dependência src -> dst carregando data_bytes de entrada para dst"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    src: int
    dst: int
    data_bytes: float = Field(gt=0, alias="bytes")


class ServiceDag(BaseModel):
    """
    Serviço IoT modelado como DAG G=(V, E).

    Formato JSON canônico do dataset:
    {id, tasks: [{id, cycles, ram, deadline_ms}], edges: [{src, dst, bytes}]}

    A validação estrutural (ciclos, arestas órfãs, ids duplicados) fica em
    app.core.dag.validate_dag; aqui só as restrições de campo.
    """
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "id": "demo",
                "tasks": [
                    {"id": 0, "cycles": 2e8, "ram": 5e7, "deadline_ms": 100},
                    {"id": 1, "cycles": 1e7, "ram": 3e7, "deadline_ms": 50},
                ],
                "edges": [{"src": 0, "dst": 1, "bytes": 1e6}],
            }
        },
    )

    id: str
    tasks: List[TaskSpec]
    edges: List[DagEdge] = Field(default_factory=list)

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def task(self, task_id: int) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def to_json_dict(self) -> dict:
        return self.model_dump(by_alias=True)

