"""
Broker de offloading: mantém a política mais recente do diretório de
checkpoints e decide a alocação de cada serviço recebido.
"""
import threading
import time
from pathlib import Path
from typing import Optional

from app.config import settings
from app.core.cost_model import Violation
from app.core.dag import plan_service, validate_dag
from app.core.environment import FogEnv, state_size
from app.core.exceptions import FogAppoError, ShapeMismatch
from app.core.nn import MlpParams, init_mlp
from app.core.oracle import exhaustive_best
from app.core.servers import ServerPool, build_pool
from app.schemas.dag import ServiceDag
from app.schemas.offload import OffloadResponse, OracleResult, PolicyInfo, TaskOutcome, ViolationOut
from app.schemas.scenario import ScenarioConfig
from app.services.checkpoints import latest_checkpoint, load_checkpoint
from app.services.dataset import load_scenario
from app.services.evaluation import run_policy_episode
from app.utils.log_helpers import log_info, log_warning
from app.utils.rng import STREAM_INIT, make_rng


def _violation_out(v: Violation) -> ViolationOut:
    return ViolationOut(**v.to_dict())


class PolicyBroker:
    """
    Política publicada + ambiente de decisão. Sem checkpoint disponível usa
    uma política inicial (versão 0) para que a API responda desde o início.

    Requisições são serializadas por um lock: o ambiente não é thread-safe.
    """

    def __init__(
        self,
        scenario: Optional[ScenarioConfig] = None,
        checkpoint_dir: Optional[Path] = None,
        pool: Optional[ServerPool] = None,
        hidden_size: int = 128,
        seed: int = 0,
    ):
        self.scenario = scenario or ScenarioConfig()
        self.checkpoint_dir = Path(checkpoint_dir or settings.CHECKPOINT_DIR)
        self.pool = pool or build_pool(self.scenario)
        self.env = FogEnv.from_scenario(self.scenario, pool=self.pool)
        self._lock = threading.Lock()
        m = self.pool.num_servers
        self.theta: MlpParams = init_mlp(state_size(m), hidden_size, m, make_rng(seed, STREAM_INIT), output_scale=0.0)
        self.version = 0
        self.checkpoint: Optional[Path] = None

    @classmethod
    def from_settings(cls) -> "PolicyBroker":
        broker = cls(
            scenario=load_scenario(settings.SCENARIO_PATH),
            checkpoint_dir=settings.CHECKPOINT_DIR,
            seed=settings.resolve_seed(),
        )
        broker.refresh_policy()
        return broker

    def refresh_policy(self) -> bool:
        """Carrega o checkpoint mais recente se a versão for maior que a atual"""
        path = latest_checkpoint(self.checkpoint_dir)
        if path is None or path == self.checkpoint:
            return False
        ckpt = load_checkpoint(path)
        if ckpt.version <= self.version and self.checkpoint is not None:
            return False
        if ckpt.state.theta.output_size != self.pool.num_servers:
            log_warning("Checkpoint incompatível com o cenário do broker", path=str(path),
                        checkpoint_servers=ckpt.num_servers, num_servers=self.pool.num_servers)
            return False
        with self._lock:
            self.theta = ckpt.state.theta
            self.version = ckpt.version
            self.checkpoint = path
        log_info("Política atualizada", version=ckpt.version, path=str(path))
        return True

    def info(self) -> PolicyInfo:
        return PolicyInfo(
            version=self.version,
            checkpoint=str(self.checkpoint) if self.checkpoint else None,
            num_servers=self.pool.num_servers,
            state_size=self.env.state_size,
        )

    def offload(self, dag: ServiceDag) -> OffloadResponse:
        """
        Alocação greedy (argmax) da política para o serviço.

        Raises:
            InvalidDag: estrutura do serviço inválida
        """
        validate_dag(dag)
        with self._lock:
            if self.theta.input_size != self.env.state_size:
                raise ShapeMismatch("Política e ambiente com tamanhos de estado diferentes")
            started = time.perf_counter()
            episode = run_policy_episode(self.env, dag, self.theta, greedy=True)
            elapsed_ms = (time.perf_counter() - started) * 1000.0
            version = self.version

        info = episode.info
        if info.total_exec_time is None:
            raise FogAppoError(f"Episódio do serviço {dag.id} não terminou")
        outcomes = [
            TaskOutcome(
                task_id=s.info.task_id,
                server_id=s.info.server_id,
                server=self.pool.servers[s.info.server_id].name,
                exec_time_s=s.info.exec_time,
                deadline_met=s.info.deadline_met,
                success=s.info.success,
            )
            for s in episode.steps
        ]
        return OffloadResponse(
            service_id=dag.id,
            policy_version=version,
            assignment=info.assignment,
            exec_time_s=info.total_exec_time,
            deadline_hit_rate=info.deadline_hits / info.num_tasks,
            outcomes=outcomes,
            violations=[_violation_out(v) for v in info.violations],
            decision_time_ms=elapsed_ms,
        )

    def oracle(self, dag: ServiceDag, budget: Optional[int] = None) -> OracleResult:
        """
        Raises:
            InvalidDag, BudgetExceeded
        """
        validate_dag(dag)
        return exhaustive_best(dag, self.pool, plan=plan_service(dag, self.pool),
                               budget=budget or settings.ORACLE_BUDGET)
