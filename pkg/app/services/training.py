"""
Orquestração do treino: A atores + 1 learner.

Backends:
- serial: um único thread intercala atores e learner (reproduzível byte a byte);
- thread: um thread por ator, learner no thread chamador;
- process: um processo por ator (spawn), snapshot em memória compartilhada.

Atores -> learner: fila ordenada de experience batches. Learner -> atores:
célula de snapshot versionada com troca atômica.
"""
import multiprocessing as mp
import queue
import threading
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

from app.core.actor import (
    Actor,
    PolicySnapshot,
    ServiceQueue,
    SharedSnapshotCell,
    SnapshotCell,
    actor_loop,
)
from app.core.appo import ExperienceBatch, Learner, LearnerState, RoundStats, init_learner_state, learner_loop
from app.core.environment import FogEnv, state_size
from app.core.exceptions import ChannelClosed, FogAppoError, ShapeMismatch, WorkerFailed
from app.core.servers import ServerPool, build_pool
from app.schemas.dag import ServiceDag
from app.schemas.scenario import ScenarioConfig
from app.schemas.training import MetricsRow, RunConfig, TrainingResult
from app.services.checkpoints import load_checkpoint, save_checkpoint
from app.services.cleanup import cleanup_old_checkpoints
from app.services.dataset import load_dataset, load_scenario
from app.services.evaluation import TraceWriter, evaluate_policy
from app.utils.context import actor_id_var, run_id_var
from app.utils.helpers import format_duration, generate_run_id
from app.utils.log_helpers import log_error, log_info, log_warning
from app.utils.logger import setup_logger
from app.utils.rng import STREAM_ACTOR, STREAM_INIT, STREAM_QUEUE, make_rng
from app.utils.validators import validate_checkpoint_path, validate_dataset_dir

METRICS_FILE = "metrics.jsonl"
TRAIN_LOG_FILE = "train_log.jsonl"
CONFIG_FILE = "run_config.json"
TRACES_DIR = "traces"

JOIN_TIMEOUT_S = 10.0


def resolve_scenario(cfg: RunConfig) -> ScenarioConfig:
    return load_scenario(cfg.scenario_path) if cfg.scenario_path else cfg.scenario


def load_training_data(cfg: RunConfig) -> Tuple[List[ServiceDag], List[ServiceDag]]:
    """Partições (treino, avaliação) do dataset da execução"""
    if cfg.dataset_dir is None:
        raise FogAppoError("RunConfig sem dataset_dir e sem serviços informados")
    if not validate_dataset_dir(cfg.dataset_dir):
        raise FogAppoError(f"{cfg.dataset_dir} não contém um dataset (manifest.json + dags/)")
    return load_dataset(cfg.dataset_dir, "train"), load_dataset(cfg.dataset_dir, "eval")


def initial_learner_state(cfg: RunConfig, num_servers: int) -> Tuple[LearnerState, int]:
    """Estado inicial do learner (novo ou retomado de checkpoint) e passos já consumidos"""
    if cfg.resume_from is not None:
        if not validate_checkpoint_path(cfg.resume_from):
            raise FileNotFoundError(f"Checkpoint não encontrado: {cfg.resume_from}")
        ckpt = load_checkpoint(cfg.resume_from)
        if ckpt.state.theta.input_size != state_size(num_servers) or ckpt.num_servers != num_servers:
            raise ShapeMismatch(
                f"Checkpoint {cfg.resume_from} é para M={ckpt.num_servers}, cenário tem M={num_servers}"
            )
        log_info("Treino retomado de checkpoint", path=str(cfg.resume_from), version=ckpt.version)
        return ckpt.state, ckpt.env_steps
    rng = make_rng(cfg.seed, STREAM_INIT)
    return init_learner_state(state_size(num_servers), num_servers, cfg.hyper, rng), 0


class TrainingSession:
    """
    Contabilidade de uma execução: passos, rodadas, pontos de avaliação,
    checkpoints e arquivos JSON-lines. Só o thread do learner a usa.
    """

    def __init__(
        self,
        cfg: RunConfig,
        learner: Learner,
        eval_env: FogEnv,
        eval_dags: Sequence[ServiceDag],
        env_steps: int = 0,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.cfg = cfg
        self.learner = learner
        self.eval_env = eval_env
        self.eval_dags = list(eval_dags)[: cfg.eval_limit] if cfg.eval_limit else list(eval_dags)
        self.env_steps = env_steps
        self.start_version = learner.version
        self.clock = clock
        self.started = clock()
        self.metrics: List[MetricsRow] = []
        self.last_checkpoint: Optional[Path] = None
        self._last_eval_version: Optional[int] = None

        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        mode = "a" if cfg.resume_from else "w"
        self._metrics_fh = (cfg.output_dir / METRICS_FILE).open(mode, encoding="utf-8")
        self._train_fh = (cfg.output_dir / TRAIN_LOG_FILE).open(mode, encoding="utf-8")
        (cfg.output_dir / CONFIG_FILE).write_text(cfg.model_dump_json(indent=2))

    def wall_time(self) -> Optional[float]:
        # Modo serial grava null para que os arquivos sejam idênticos entre execuções
        if self.cfg.deterministic:
            return None
        return self.clock() - self.started

    @property
    def rounds(self) -> int:
        return self.learner.version - self.start_version

    def rounds_exhausted(self) -> bool:
        return self.cfg.max_rounds is not None and self.rounds >= self.cfg.max_rounds

    def finished(self) -> bool:
        return self.env_steps >= self.cfg.total_steps or self.rounds_exhausted()

    def on_batch(self, batch: ExperienceBatch) -> None:
        self.env_steps += len(batch)

    def on_round(self, stats: RoundStats) -> None:
        row = stats.to_log(self.learner.dropped_batches, self.wall_time())
        self._train_fh.write(row.model_dump_json() + "\n")
        self._train_fh.flush()
        if stats.version % self.cfg.eval_every == 0:
            self.evaluate()
        if stats.version % self.cfg.checkpoint_every == 0:
            self.checkpoint()

    def evaluate(self) -> Optional[MetricsRow]:
        version = self.learner.version
        if not self.eval_dags or version == self._last_eval_version:
            return None
        summary = evaluate_policy(self.learner.state.theta, self.eval_dags, self.eval_env, greedy=True)
        row = MetricsRow(
            version=version,
            env_steps=self.env_steps,
            wall_time=self.wall_time(),
            eval_mean_exec_time_s=summary.mean_exec_time_s,
            deadline_hit_rate=summary.deadline_hit_rate,
            extras={"success_rate": summary.success_rate},
        )
        self._metrics_fh.write(row.model_dump_json() + "\n")
        self._metrics_fh.flush()
        self.metrics.append(row)
        self._last_eval_version = version
        log_info("Ponto de avaliação", version=version, env_steps=self.env_steps,
                 eval_mean_exec_time_s=summary.mean_exec_time_s,
                 deadline_hit_rate=summary.deadline_hit_rate)
        return row

    def checkpoint(self) -> Path:
        directory = self.cfg.resolved_checkpoint_dir
        self.last_checkpoint = save_checkpoint(directory, self.learner.state, self.cfg.hyper, self.env_steps)
        if self.cfg.checkpoint_keep is not None:
            cleanup_old_checkpoints(directory, self.cfg.checkpoint_keep)
        return self.last_checkpoint

    def close(self) -> None:
        self._metrics_fh.close()
        self._train_fh.close()


def build_actors(
    cfg: RunConfig,
    scenario: ScenarioConfig,
    pool: ServerPool,
    train_dags: Sequence[ServiceDag],
    traces: bool = False,
) -> List[Actor]:
    """Um ambiente, uma fila de serviços e um fluxo aleatório por ator"""
    actors = []
    for i in range(cfg.num_actors):
        on_step = TraceWriter(cfg.output_dir / TRACES_DIR / f"actor-{i}.jsonl") if traces else None
        env = FogEnv.from_scenario(scenario, pool=pool, on_step=on_step)
        services = ServiceQueue(train_dags, make_rng(cfg.seed, STREAM_QUEUE, i))
        actors.append(Actor(i, env, services, make_rng(cfg.seed, STREAM_ACTOR, i), cfg.hyper.rollout_len))
    return actors


def _run_serial(session: TrainingSession, actors: Sequence[Actor]) -> None:
    learner = session.learner
    while not session.finished():
        for actor in actors:
            snapshot = PolicySnapshot(learner.version, learner.state.theta)
            batch = actor.collect(snapshot)
            session.on_batch(batch)
            learner.receive(batch)
            while learner.ready() and not session.rounds_exhausted():
                stats = learner.train_round()
                log_info("Rodada de treino concluída", version=stats.version,
                         transitions=stats.num_transitions)
                session.on_round(stats)
            if session.finished():
                break


def _thread_actor_main(actor: Actor, cell: SnapshotCell, outbox, stop: threading.Event, run_id: str) -> None:
    run_id_var.set(run_id)
    actor_id_var.set(actor.actor_id)
    try:
        actor_loop(actor, cell, outbox, stop.is_set)
    except Exception as exc:
        log_error("Ator falhou", exc=exc)
        _report_failure(outbox, actor.actor_id, exc)


def _process_actor_main(actor: Actor, cell: SharedSnapshotCell, outbox, stop, run_id: str) -> None:
    setup_logger()
    run_id_var.set(run_id)
    actor_id_var.set(actor.actor_id)
    try:
        actor_loop(actor, cell, outbox, stop.is_set)
    except Exception as exc:
        log_error("Ator falhou", exc=exc)
        _report_failure(outbox, actor.actor_id, exc)


def _report_failure(outbox, actor_id: int, exc: BaseException) -> None:
    try:
        outbox.put(("error", actor_id, f"{type(exc).__name__}: {exc}"), timeout=1.0)
    except (queue.Full, EOFError, OSError, ValueError):
        pass


def _drain(inbox) -> None:
    try:
        while True:
            inbox.get_nowait()
    except (queue.Empty, EOFError, OSError):
        pass


def _run_learner(session: TrainingSession, inbox, publish, stop) -> None:
    def on_batch(batch: ExperienceBatch) -> None:
        session.on_batch(batch)
        if session.finished():
            stop.set()

    def on_round(stats: RoundStats) -> None:
        session.on_round(stats)
        if session.finished():
            stop.set()

    learner_loop(session.learner, inbox, publish, stop.is_set, on_batch=on_batch, on_round=on_round)


def _run_threads(session: TrainingSession, actors: Sequence[Actor], run_id: str) -> None:
    learner = session.learner
    cell = SnapshotCell(PolicySnapshot(learner.version, learner.state.theta))
    inbox: queue.Queue = queue.Queue(maxsize=4 * len(actors))
    stop = threading.Event()
    threads = [
        threading.Thread(
            target=_thread_actor_main,
            args=(actor, cell, inbox, stop, run_id),
            name=f"actor-{actor.actor_id}",
            daemon=True,
        )
        for actor in actors
    ]
    for t in threads:
        t.start()
    try:
        _run_learner(session, inbox, cell.publish, stop)
    finally:
        stop.set()
        for t in threads:
            t.join(JOIN_TIMEOUT_S)
            if t.is_alive():
                log_warning("Ator não encerrou no prazo", worker=t.name)


def _run_processes(session: TrainingSession, actors: Sequence[Actor], run_id: str) -> None:
    learner = session.learner
    ctx = mp.get_context("spawn")
    cell = SharedSnapshotCell(PolicySnapshot(learner.version, learner.state.theta), ctx=ctx)
    inbox = ctx.Queue(maxsize=4 * len(actors))
    stop = ctx.Event()
    procs = [
        ctx.Process(
            target=_process_actor_main,
            args=(actor, cell, inbox, stop, run_id),
            name=f"actor-{actor.actor_id}",
            daemon=True,
        )
        for actor in actors
    ]
    for p in procs:
        p.start()
    try:
        _run_learner(session, inbox, cell.publish, stop)
    finally:
        stop.set()
        deadline = time.monotonic() + JOIN_TIMEOUT_S
        for p in procs:
            # Processos com itens na fila só terminam depois que ela é esvaziada
            while p.is_alive() and time.monotonic() < deadline:
                _drain(inbox)
                p.join(0.1)
            if p.is_alive():
                log_warning("Ator não encerrou no prazo, terminando processo", pid=p.pid)
                p.terminate()
                p.join()
        _drain(inbox)


def run_training(
    cfg: RunConfig,
    train_dags: Optional[Sequence[ServiceDag]] = None,
    eval_dags: Optional[Sequence[ServiceDag]] = None,
    pool: Optional[ServerPool] = None,
) -> TrainingResult:
    """
    Treina até o orçamento de passos (ou max_rounds), avaliando a política
    greedy na partição de avaliação na versão inicial, a cada eval_every
    versões e no fim. Canal de experiências fechado encerra o treino
    normalmente, com avaliação e checkpoint finais.

    Raises:
        WorkerFailed: um ator falhou; a execução é abortada
    """
    if train_dags is None or eval_dags is None:
        loaded_train, loaded_eval = load_training_data(cfg)
        train_dags = loaded_train if train_dags is None else train_dags
        eval_dags = loaded_eval if eval_dags is None else eval_dags
    scenario = resolve_scenario(cfg)
    pool = pool or build_pool(scenario)

    run_id = generate_run_id(cfg.model_dump(mode="json"))
    token = run_id_var.set(run_id)
    traces = cfg.trace_episodes
    if traces and cfg.backend == "process":
        log_warning("Traces de episódio não são suportados no backend process; ignorando")
        traces = False

    state, env_steps = initial_learner_state(cfg, pool.num_servers)
    learner = Learner(state, cfg.hyper)
    actors = build_actors(cfg, scenario, pool, train_dags, traces=traces)
    session = TrainingSession(
        cfg,
        learner,
        FogEnv.from_scenario(scenario, pool=pool),
        eval_dags,
        env_steps=env_steps,
    )
    log_info("Treino iniciado", backend=cfg.backend, num_actors=cfg.num_actors,
             num_servers=pool.num_servers, total_steps=cfg.total_steps,
             train_services=len(train_dags), eval_services=len(session.eval_dags))

    try:
        session.evaluate()
        try:
            if cfg.backend == "serial":
                _run_serial(session, actors)
            elif cfg.backend == "thread":
                _run_threads(session, actors, run_id)
            else:
                _run_processes(session, actors, run_id)
        except ChannelClosed as exc:
            log_warning("Canal de experiências fechado, encerrando treino",
                        error=str(exc), version=learner.version, env_steps=session.env_steps)

        session.evaluate()
        final_checkpoint = session.checkpoint()
    except WorkerFailed as exc:
        log_error("Treino abortado por falha de ator", exc=exc)
        raise
    finally:
        session.close()
        for actor in actors:
            if isinstance(actor.env.on_step, TraceWriter):
                actor.env.on_step.close()
        run_id_var.reset(token)

    wall_time = time.perf_counter() - session.started
    log_info("Treino concluído", rounds=session.rounds, env_steps=session.env_steps,
             wall_time_s=round(wall_time, 3), duration=format_duration(wall_time),
             version=learner.version)
    return TrainingResult(
        run_id=run_id,
        rounds=session.rounds,
        env_steps=session.env_steps,
        wall_time=wall_time,
        final_checkpoint=final_checkpoint,
        metrics=session.metrics,
    )
