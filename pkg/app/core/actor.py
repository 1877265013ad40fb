"""
Lado do ator: snapshot versionado da política, fila de serviços, amostragem
de ações e geração de experience batches de N passos.
"""
import multiprocessing as mp
import queue
import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.appo import EpisodeStat, ExperienceBatch, ExperienceTuple
from app.core.environment import FogEnv
from app.core.exceptions import ChannelClosed, FogAppoError
from app.core.nn import MlpParams, num_params, policy_log_probs
from app.schemas.dag import ServiceDag


@dataclass(frozen=True)
class PolicySnapshot:
    version: int
    theta: MlpParams


class SnapshotCell:
    """Célula de snapshot compartilhada entre threads (troca atômica sob lock)"""

    def __init__(self, initial: PolicySnapshot):
        self._lock = threading.Lock()
        self._snapshot = initial

    def publish(self, version: int, theta: MlpParams) -> None:
        with self._lock:
            if version <= self._snapshot.version:
                raise FogAppoError(f"Versão {version} não é maior que {self._snapshot.version}")
            self._snapshot = PolicySnapshot(version=version, theta=theta.copy())

    def latest(self) -> PolicySnapshot:
        with self._lock:
            return self._snapshot


class SharedSnapshotCell:
    """
    Célula de snapshot entre processos: vetor de parâmetros em memória
    compartilhada + contador de versão, ambos trocados sob o mesmo lock.
    Cada processo mantém um cache e só copia quando a versão muda.
    """

    def __init__(self, initial: PolicySnapshot, ctx=None):
        ctx = ctx or mp.get_context()
        theta = initial.theta
        self._shape = (theta.input_size, theta.hidden_size, theta.output_size)
        size = num_params(*self._shape)
        self._lock = ctx.Lock()
        self._version = ctx.Value("q", initial.version, lock=False)
        self._data = ctx.Array("d", size, lock=False)
        np.frombuffer(self._data, dtype=np.float64)[:] = theta.flat()
        self._cache: Optional[PolicySnapshot] = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = None
        return state

    def publish(self, version: int, theta: MlpParams) -> None:
        with self._lock:
            if version <= self._version.value:
                raise FogAppoError(f"Versão {version} não é maior que {self._version.value}")
            np.frombuffer(self._data, dtype=np.float64)[:] = theta.flat()
            self._version.value = version

    def latest(self) -> PolicySnapshot:
        with self._lock:
            version = self._version.value
            if self._cache is not None and self._cache.version == version:
                return self._cache
            flat = np.array(np.frombuffer(self._data, dtype=np.float64))
        self._cache = PolicySnapshot(version=version, theta=MlpParams.from_flat(flat, *self._shape))
        return self._cache


class ServiceQueue:
    """Fila infinita de serviços: percorre o conjunto de treino, embaralhando a cada volta"""

    def __init__(self, services: Sequence[ServiceDag], rng: np.random.Generator):
        if not services:
            raise FogAppoError("Fila de serviços vazia")
        self._services = list(services)
        self._rng = rng
        self._order: List[int] = []

    def __len__(self) -> int:
        return len(self._services)

    def next(self) -> ServiceDag:
        if not self._order:
            self._order = list(self._rng.permutation(len(self._services)))
        return self._services[self._order.pop(0)]


def sample_action(
    theta: MlpParams,
    state: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    mask: Optional[np.ndarray] = None,
    greedy: bool = False,
) -> Tuple[int, float]:
    """
    Ação ~ π(·|s) por CDF inversa (ou argmax se greedy) e sua log-prob exata.
    """
    logp = policy_log_probs(theta, state, mask)
    if greedy:
        action = int(np.argmax(logp))
    else:
        if rng is None:
            raise FogAppoError("sample_action precisa de rng quando greedy=False")
        cdf = np.cumsum(np.exp(logp))
        u = rng.random() * cdf[-1]
        action = int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))
        # Não escolhe ação de probabilidade zero (posição mascarada)
        while not np.isfinite(logp[action]) and action > 0:
            action -= 1
    return action, float(logp[action])


class Actor:
    """
    Dono de um ambiente: gera experience batches de N passos com a política
    κ do snapshot. O episódio corrente continua no batch seguinte.
    """

    def __init__(
        self,
        actor_id: int,
        env: FogEnv,
        services: ServiceQueue,
        rng: np.random.Generator,
        rollout_len: int,
    ):
        self.actor_id = actor_id
        self.env = env
        self.services = services
        self.rng = rng
        self.rollout_len = rollout_len
        self.state: Optional[np.ndarray] = None
        self.in_episode = False
        self.env_steps = 0
        self.episodes_done = 0

    def collect(self, snapshot: PolicySnapshot) -> ExperienceBatch:
        kappa = snapshot.theta
        tuples: List[ExperienceTuple] = []
        episodes: List[EpisodeStat] = []
        successes = 0

        for _ in range(self.rollout_len):
            if not self.in_episode:
                service = self.services.next()
                self.state = self.env.reset(service)
                self.in_episode = True
                successes = 0

            mask = self.env.action_mask()
            action, log_prob = sample_action(kappa, self.state, self.rng, mask)
            outcome = self.env.step(action)
            tuples.append(ExperienceTuple(
                state=self.state,
                action=action,
                reward=outcome.reward,
                next_state=outcome.next_state,
                behavior_log_prob=log_prob,
                done=outcome.done,
                mask=mask,
            ))
            self.env_steps += 1
            successes += int(outcome.info.success)
            self.state = outcome.next_state

            if outcome.done:
                info = outcome.info
                episodes.append(EpisodeStat(
                    service_id=self.env.dag.id,
                    total_exec_time=info.total_exec_time,
                    deadline_hits=info.deadline_hits,
                    num_tasks=info.num_tasks,
                    successes=successes,
                ))
                self.episodes_done += 1
                self.in_episode = False

        return ExperienceBatch(
            actor_id=self.actor_id,
            policy_version=snapshot.version,
            tuples=tuples,
            episodes=episodes,
        )


def actor_loop(
    actor: Actor,
    cell,
    outbox,
    should_stop: Callable[[], bool],
    max_batches: Optional[int] = None,
) -> int:
    """
    Laço do ator: κ ← snapshot mais recente; N passos; envia o batch.

    Returns:
        int: número de batches enviados
    """
    sent = 0
    while not should_stop() and (max_batches is None or sent < max_batches):
        snapshot = cell.latest()
        batch = actor.collect(snapshot)
        try:
            _put(outbox, batch, should_stop)
        except ChannelClosed:
            break
        sent += 1
    return sent


def _put(outbox, item, should_stop: Callable[[], bool], timeout: float = 0.1) -> None:
    while True:
        try:
            outbox.put(item, timeout=timeout)
            return
        except queue.Full:
            if should_stop():
                raise ChannelClosed("Learner encerrou antes de consumir o batch")
        except (EOFError, OSError, ValueError) as exc:
            raise ChannelClosed("Canal de saída fechado") from exc
