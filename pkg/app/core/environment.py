"""
Ambiente MDP de offloading.

Um episódio é um serviço: a cada passo a tarefa corrente (na ordem de
execução do plano) é alocada ao servidor escolhido. O estado concatena M
blocos de K_SERVER features por servidor com o bloco da tarefa corrente
(K_TASK_BASE escalares + o tempo de chegada das entradas em cada servidor),
tudo normalizado para [0, 1] com limites fixos do cenário.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from app.core.cost_model import Violation, check_constraints, input_ready_vector, sum_on_path
from app.core.dag import RankedPlan, plan_service, predecessors
from app.core.exceptions import EpisodeFinished, FogAppoError, InvalidAction
from app.core.servers import ServerPool, build_pool
from app.schemas.dag import ServiceDag
from app.schemas.scenario import NormalizationBounds, ScenarioConfig

K_SERVER = 8
K_TASK_BASE = 7
# Posição de "fração de tarefas alocadas" dentro do bloco da tarefa
FRACTION_PLACED = 6
RESIDUAL_RAM = 5

PoolSchedule = Callable[[int], ServerPool]


def state_size(num_servers: int) -> int:
    return num_servers * K_SERVER + K_TASK_BASE + num_servers


def normalize(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Min-max para [0, 1] com saturação nos limites"""
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


@dataclass
class RawState:
    """Features brutas: (M, K_SERVER) por servidor e (K_TASK_BASE + M,) da tarefa"""
    server: np.ndarray
    task: np.ndarray


def _server_bounds(b: NormalizationBounds):
    pairs = [b.position, b.position, b.freq_hz, b.cores, b.server_ram, b.server_ram, b.bandwidth, b.latency_s]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def _task_bounds(b: NormalizationBounds, num_servers: int):
    pairs = [b.cycles, b.task_ram, b.deadline_s, (0.0, 1.0), b.input_bytes, b.num_predecessors, (0.0, 1.0)]
    pairs += [b.ready_time_s] * num_servers
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def normalize_features(raw: RawState, bounds: NormalizationBounds) -> np.ndarray:
    """Normaliza e achata o estado bruto no vetor de tamanho M*K_SERVER + K_TASK_BASE + M"""
    num_servers = raw.server.shape[0]
    s_lo, s_hi = _server_bounds(bounds)
    t_lo, t_hi = _task_bounds(bounds, num_servers)
    return np.concatenate([normalize(raw.server, s_lo, s_hi).ravel(), normalize(raw.task, t_lo, t_hi)])


@dataclass
class StepInfo:
    task_id: int
    server_id: int
    exec_time: float
    deadline_met: bool
    ram_ok: bool
    violation: Optional[str] = None
    # Preenchidos apenas no último passo do episódio
    total_exec_time: Optional[float] = None
    deadline_hits: Optional[int] = None
    num_tasks: Optional[int] = None
    violations: List[Violation] = field(default_factory=list)
    assignment: Optional[Dict[int, int]] = None

    @property
    def success(self) -> bool:
        return self.deadline_met and self.ram_ok


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    done: bool
    info: StepInfo

    def to_dict(self) -> dict:
        """Linha de trace (sem o vetor de estado)"""
        info = self.info
        return {
            "task_id": info.task_id,
            "server_id": info.server_id,
            "exec_time": info.exec_time,
            "deadline_met": info.deadline_met,
            "ram_ok": info.ram_ok,
            "violation": info.violation,
            "reward": self.reward,
            "done": self.done,
            "total_exec_time": info.total_exec_time,
            "violations": [v.to_dict() for v in info.violations],
        }


class FogEnv:
    """
    Ambiente de um ator. Não é thread-safe: cada instância pertence a um
    único ator (pode mudar de thread quando ociosa).

    Args:
        pool: Servidores e rede
        phi: Penalidade de falha (prazo estourado ou RAM insuficiente)
        bounds: Limites de normalização
        mask_infeasible: Se True, action_mask() restringe a servidores com RAM livre
        pool_schedule: Gancho opcional chamado a cada reset com o número do
            episódio; pode devolver outro pool (mesmo M) para recursos variáveis
        on_step: Callback opcional chamado com cada StepOutcome (traces)
    """

    def __init__(
        self,
        pool: ServerPool,
        phi: float = -1.0,
        bounds: Optional[NormalizationBounds] = None,
        mask_infeasible: bool = False,
        pool_schedule: Optional[PoolSchedule] = None,
        on_step: Optional[Callable[[StepOutcome], None]] = None,
    ):
        if phi >= 0:
            raise FogAppoError(f"Penalidade phi deve ser negativa: {phi}")
        self.phi = float(phi)
        self.bounds = bounds or NormalizationBounds()
        self.mask_infeasible = mask_infeasible
        self.pool_schedule = pool_schedule
        self.on_step = on_step
        self.episodes = 0

        self.dag: Optional[ServiceDag] = None
        self.plan: Optional[RankedPlan] = None
        self.done = True
        self._set_pool(pool)

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig, pool: Optional[ServerPool] = None, **kwargs) -> "FogEnv":
        return cls(
            pool or build_pool(scenario),
            phi=scenario.phi,
            bounds=scenario.normalization,
            mask_infeasible=scenario.mask_infeasible,
            **kwargs,
        )

    def _set_pool(self, pool: ServerPool) -> None:
        if hasattr(self, "pool") and pool.num_servers != self.pool.num_servers:
            raise FogAppoError(
                f"pool_schedule mudou M de {self.pool.num_servers} para {pool.num_servers}"
            )
        self.pool = pool
        m = pool.num_servers
        iot = pool.iot_index
        raw = np.zeros((m, K_SERVER))
        raw[:, 0:2] = pool.positions
        raw[:, 2] = pool.freqs
        raw[:, 3] = [s.cores for s in pool.servers]
        raw[:, 4] = pool.ram_capacities
        raw[:, 5] = pool.ram_capacities
        raw[:, 6] = pool.mean_bandwidth()
        raw[:, 7] = pool.latency[iot]
        self._raw_server = raw
        self._s_lo, self._s_hi = _server_bounds(self.bounds)
        self._t_lo, self._t_hi = _task_bounds(self.bounds, m)
        self._server_norm = normalize(raw, self._s_lo, self._s_hi)
        self._freqs = pool.freqs

    @property
    def num_servers(self) -> int:
        return self.pool.num_servers

    @property
    def state_size(self) -> int:
        return state_size(self.num_servers)

    @property
    def current_task_id(self) -> int:
        return self.plan.order[self.cursor]

    def reset(self, service: ServiceDag) -> np.ndarray:
        """Pré-escalonamento do serviço e estado inicial (nenhuma tarefa alocada)"""
        if self.pool_schedule is not None:
            self._set_pool(self.pool_schedule(self.episodes))
        plan = plan_service(service, self.pool)
        self.episodes += 1

        self.dag = service
        self.plan = plan
        self._tasks = {t.id: t for t in service.tasks}
        self._preds = predecessors(service)
        self._input_bytes = {v: float(sum(b for _, b in p)) for v, p in self._preds.items()}
        self.cursor = 0
        self.placements: Dict[int, int] = {}
        self.exec_times: Dict[int, float] = {}
        self.residual = self.pool.ram_capacities.copy()
        self.done = False
        return self.build_state()

    def raw_state(self) -> RawState:
        server = self._raw_server.copy()
        server[:, RESIDUAL_RAM] = self.residual
        task = np.zeros(K_TASK_BASE + self.num_servers)
        if self.done:
            task[FRACTION_PLACED] = 1.0
            return RawState(server=server, task=task)
        v = self.current_task_id
        spec = self._tasks[v]
        self._ready = input_ready_vector(self._preds[v], self.placements, self.pool)
        task[0] = spec.cpu_cycles
        task[1] = spec.ram_bytes
        task[2] = spec.deadline_s
        task[3] = self.plan.cp_indicator[v]
        task[4] = self._input_bytes[v]
        task[5] = len(self._preds[v])
        task[FRACTION_PLACED] = self.cursor / len(self.plan.order)
        task[K_TASK_BASE:] = self._ready
        return RawState(server=server, task=task)

    def build_state(self) -> np.ndarray:
        """Estado normalizado corrente"""
        raw = self.raw_state()
        self._server_norm[:, RESIDUAL_RAM] = normalize(raw.server[:, RESIDUAL_RAM], self._s_lo[RESIDUAL_RAM], self._s_hi[RESIDUAL_RAM])
        if self.done:
            task = np.zeros_like(raw.task)
            task[FRACTION_PLACED] = 1.0
        else:
            task = normalize(raw.task, self._t_lo, self._t_hi)
        return np.concatenate([self._server_norm.ravel(), task])

    def action_mask(self) -> Optional[np.ndarray]:
        """Servidores com RAM livre para a tarefa corrente (None sem mascaramento)"""
        if not self.mask_infeasible or self.done:
            return None
        need = self._tasks[self.current_task_id].ram_bytes
        mask = self.residual >= need
        if not mask.any():
            mask[:] = True
        return mask

    def step(self, action: int) -> StepOutcome:
        """
        Aloca a tarefa corrente no servidor `action`.

        Raises:
            EpisodeFinished: episódio já encerrado
            InvalidAction: servidor fora de [0, M)
        """
        if self.done:
            raise EpisodeFinished("step() chamado após o fim do episódio")
        if not 0 <= int(action) < self.num_servers:
            raise InvalidAction(f"Servidor {action} fora de [0, {self.num_servers})")
        action = int(action)

        v = self.current_task_id
        spec = self._tasks[v]
        exec_time = spec.cpu_cycles / self._freqs[action] + self._ready[action]
        exec_time = float(exec_time)
        deadline_met = exec_time <= spec.deadline_s
        ram_ok = bool(self.residual[action] >= spec.ram_bytes)

        if deadline_met and ram_ok:
            reward = -exec_time
            self.residual[action] -= spec.ram_bytes
            violation = None
        else:
            reward = self.phi
            tags = [tag for tag, ok in (("CS3", ram_ok), ("CS4", deadline_met)) if not ok]
            violation = ",".join(tags)

        self.placements[v] = action
        self.exec_times[v] = exec_time
        self.cursor += 1
        self.done = self.cursor == len(self.plan.order)

        info = StepInfo(
            task_id=v,
            server_id=action,
            exec_time=exec_time,
            deadline_met=deadline_met,
            ram_ok=ram_ok,
            violation=violation,
        )
        if self.done:
            self._finish(info)

        outcome = StepOutcome(next_state=self.build_state(), reward=reward, done=self.done, info=info)
        if self.on_step is not None:
            self.on_step(outcome)
        return outcome

    def _finish(self, info: StepInfo) -> None:
        dag = self.dag
        info.total_exec_time = sum_on_path(self.exec_times, self.plan)
        info.deadline_hits = sum(
            1 for t in dag.tasks if self.exec_times[t.id] <= t.deadline_s
        )
        info.num_tasks = dag.num_tasks
        info.assignment = dict(self.placements)
        info.violations = check_constraints(dag, self.placements, self.pool, self.exec_times, order=self.plan.order)
        if any(v.constraint == "CS2" for v in info.violations):
            raise FogAppoError(f"Precedência violada no serviço {dag.id}: {info.violations}")
