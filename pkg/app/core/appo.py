"""
Learner APPO: master buffer, pesos de importance sampling, V-trace/GAE,
gradiente PPO com clipping, gradiente do valor e otimização.

Convenções:
- κ é a política de comportamento (a que gerou o tuple); sua log-prob vem
  gravada no tuple e nunca é recalculada.
- A recursão das vantagens para em fins de episódio (done) e no último
  tuple de cada experience batch, onde a cauda é truncada e V(s') segue
  como bootstrap.
"""
import queue
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Deque, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ChannelClosed, NonFiniteRatio, WorkerFailed
from app.core.nn import (
    AdamState,
    MlpParams,
    adam_step,
    backward,
    init_adam,
    init_mlp,
    policy_log_probs,
    value_forward,
)
from app.schemas.training import ApoHyper, TrainingRoundLog
from app.utils.log_helpers import log_info, log_warning


@dataclass(frozen=True)
class ExperienceTuple:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    behavior_log_prob: float
    done: bool
    # Máscara de ações usada pelo ator (None sem mascaramento)
    mask: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EpisodeStat:
    """Resumo de um serviço concluído por um ator"""
    service_id: str
    total_exec_time: float
    deadline_hits: int
    num_tasks: int
    successes: int


@dataclass
class ExperienceBatch:
    """N tuples consecutivos de um ator, marcados com a versão de κ"""
    actor_id: int
    policy_version: int
    tuples: List[ExperienceTuple]
    episodes: List[EpisodeStat] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tuples)


@dataclass(frozen=True)
class BatchSource:
    actor_id: int
    policy_version: int
    length: int


@dataclass(frozen=True)
class TrainingBatch:
    """Tuples concatenados em ordem FIFO, como arrays"""
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    behavior_log_probs: np.ndarray
    dones: np.ndarray
    # True onde a recursão das vantagens não atravessa para o tuple seguinte
    cuts: np.ndarray
    masks: Optional[np.ndarray]
    sources: Tuple[BatchSource, ...]

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    @classmethod
    def from_batches(cls, batches: Sequence[ExperienceBatch]) -> "TrainingBatch":
        tuples = [t for b in batches for t in b.tuples]
        if not tuples:
            raise ValueError("TrainingBatch vazio")
        cuts = []
        for b in batches:
            for i, t in enumerate(b.tuples):
                cuts.append(t.done or i == len(b.tuples) - 1)
        has_mask = any(t.mask is not None for t in tuples)
        masks = None
        if has_mask:
            num_actions = next(t.mask.shape[0] for t in tuples if t.mask is not None)
            masks = np.stack([
                t.mask if t.mask is not None else np.ones(num_actions, dtype=bool) for t in tuples
            ])
        return cls(
            states=np.stack([t.state for t in tuples]),
            actions=np.array([t.action for t in tuples], dtype=np.int64),
            rewards=np.array([t.reward for t in tuples], dtype=np.float64),
            next_states=np.stack([t.next_state for t in tuples]),
            behavior_log_probs=np.array([t.behavior_log_prob for t in tuples], dtype=np.float64),
            dones=np.array([t.done for t in tuples], dtype=bool),
            cuts=np.array(cuts, dtype=bool),
            masks=masks,
            sources=tuple(BatchSource(b.actor_id, b.policy_version, len(b)) for b in batches),
        )


class MasterBuffer:
    """
    Fila FIFO de experience batches com capacidade limitada; ao encher,
    descarta o batch mais antigo.
    """

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self._batches: Deque[ExperienceBatch] = deque()
        self._transitions = 0
        self.dropped = 0

    def __len__(self) -> int:
        return len(self._batches)

    @property
    def transitions(self) -> int:
        return self._transitions

    def put(self, batch: ExperienceBatch) -> None:
        if len(self._batches) >= self.capacity:
            oldest = self._batches.popleft()
            self._transitions -= len(oldest)
            self.dropped += 1
            log_warning("Master buffer cheio, batch mais antigo descartado",
                        actor_id=oldest.actor_id, policy_version=oldest.policy_version)
        self._batches.append(batch)
        self._transitions += len(batch)

    def ready(self, size: int) -> bool:
        return self._transitions >= size

    def build_train_batch(self, size: int) -> List[ExperienceBatch]:
        """Retira batches em ordem de chegada até somar >= size transições"""
        taken: List[ExperienceBatch] = []
        count = 0
        while self._batches and count < size:
            batch = self._batches.popleft()
            self._transitions -= len(batch)
            taken.append(batch)
            count += len(batch)
        return taken


def is_weights(tb: TrainingBatch, theta: MlpParams, hyper: ApoHyper) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Razões π/κ truncadas: ρ = min(ρ̄, π/κ) e c = min(c̄, π/κ).

    Returns:
        (rho, c, log_probs da política alvo nas ações tomadas)

    Raises:
        NonFiniteRatio: log κ não finito ou razão não finita
    """
    if not np.all(np.isfinite(tb.behavior_log_probs)):
        raise NonFiniteRatio("log-prob de comportamento não finita")
    logp_all = policy_log_probs(theta, tb.states, tb.masks)
    logp = logp_all[np.arange(len(tb)), tb.actions]
    ratio = np.exp(logp - tb.behavior_log_probs)
    if not np.all(np.isfinite(ratio)):
        raise NonFiniteRatio("Razão de importance sampling não finita")
    return np.minimum(hyper.rho_bar, ratio), np.minimum(hyper.c_bar, ratio), logp


def vtrace_td(tb: TrainingBatch, values: np.ndarray, next_values: np.ndarray, rho: np.ndarray, gamma: float) -> np.ndarray:
    """δ_i = ρ_i (r_i + γ V(s_{i+1}) - V(s_i)), com V(s_{i+1}) = 0 em done"""
    bootstrap = np.where(tb.dones, 0.0, next_values)
    return rho * (tb.rewards + gamma * bootstrap - values)


def vtrace_gae(delta: np.ndarray, c: np.ndarray, cuts: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """Recursão reversa Â_t = δ_t + λγ c_t Â_{t+1}, zerando a cauda nos cortes"""
    adv = np.zeros_like(delta, dtype=np.float64)
    carry = 0.0
    for t in range(len(delta) - 1, -1, -1):
        if cuts[t]:
            carry = 0.0
        carry = delta[t] + lam * gamma * c[t] * carry
        adv[t] = carry
    return adv


@dataclass(frozen=True)
class PolicyGradient:
    grads: MlpParams
    objective: float
    clip_fraction: float
    entropy: float


def ppo_policy_gradient(
    tb: TrainingBatch,
    theta: MlpParams,
    advantages: np.ndarray,
    hyper: ApoHyper,
) -> PolicyGradient:
    """
    Gradiente de J(θ) = média de min(Z·Â, clip(Z, 1-ε, 1+ε)·Â) + β·H(π).

    O gradiente passa só por Z = π/κ (Â é constante). Termos em que o ramo
    clipado é o mínimo não contribuem.
    """
    n = len(tb)
    logp_all = policy_log_probs(theta, tb.states, tb.masks)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    z = np.exp(logp_all[idx, tb.actions] - tb.behavior_log_probs)

    unclipped = z * advantages
    clipped = np.clip(z, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * advantages
    active = unclipped <= clipped
    objective = float(np.mean(np.minimum(unclipped, clipped)))

    onehot = np.zeros_like(probs)
    onehot[idx, tb.actions] = 1.0
    # d(Z·Â)/dlogits = Â·Z·(onehot - π)
    upstream = (active * advantages * z)[:, None] * (onehot - probs)

    safe_logp = np.where(probs > 0, logp_all, 0.0)
    entropy = -np.sum(probs * safe_logp, axis=1)
    if hyper.entropy_coef > 0:
        upstream += hyper.entropy_coef * (-probs * (safe_logp + entropy[:, None]))
        objective += hyper.entropy_coef * float(np.mean(entropy))

    grads = backward(theta, tb.states, upstream / n)
    return PolicyGradient(
        grads=grads,
        objective=objective,
        clip_fraction=float(np.mean(~active)),
        entropy=float(np.mean(entropy)),
    )


def standardize(adv: np.ndarray) -> np.ndarray:
    """Â com média 0 e desvio 1 no batch; batch sem variação vira zeros"""
    centered = adv - np.mean(adv)
    std = float(np.std(adv))
    if std < 1e-8:
        return np.zeros_like(centered)
    return centered / std


def value_gradient(tb: TrainingBatch, w: MlpParams, targets: np.ndarray) -> Tuple[MlpParams, float]:
    """Gradiente de L(w) = média de ½ (V_w(s) - alvo)²; retorna (grads, perda)"""
    values = value_forward(w, tb.states)
    residual = values - targets
    grads = backward(w, tb.states, residual[:, None] / len(tb))
    return grads, float(0.5 * np.mean(residual ** 2))


@dataclass(frozen=True)
class LearnerState:
    theta: MlpParams
    w: MlpParams
    adam_theta: AdamState
    adam_w: AdamState
    version: int = 0


def init_learner_state(state_size: int, num_servers: int, hyper: ApoHyper, rng: np.random.Generator) -> LearnerState:
    theta = init_mlp(state_size, hyper.hidden_size, num_servers, rng, output_scale=hyper.policy_init_scale)
    w = init_mlp(state_size, hyper.hidden_size, 1, rng)

    def adam(p):
        return init_adam(p, lr=hyper.lr, beta1=hyper.adam_beta1, beta2=hyper.adam_beta2, eps=hyper.adam_eps)

    return LearnerState(theta=theta, w=w, adam_theta=adam(theta), adam_w=adam(w), version=0)


@dataclass(frozen=True)
class RoundStats:
    version: int
    mean_reward: float
    mean_abs_advantage: float
    policy_loss: float
    value_loss: float
    num_transitions: int
    sources: Tuple[BatchSource, ...] = ()

    def to_log(self, dropped_batches: int = 0, wall_time: Optional[float] = None) -> TrainingRoundLog:
        return TrainingRoundLog(
            version=self.version,
            mean_reward=self.mean_reward,
            mean_abs_advantage=self.mean_abs_advantage,
            policy_loss=self.policy_loss,
            value_loss=self.value_loss,
            num_transitions=self.num_transitions,
            dropped_batches=dropped_batches,
            wall_time=wall_time,
        )


def optimize_model(tb: TrainingBatch, state: LearnerState, hyper: ApoHyper) -> Tuple[LearnerState, RoundStats]:
    """
    gradient_steps iterações; cada uma recalcula V, pesos IS, δ e Â com os
    parâmetros correntes e aplica Adam (subida em J, descida em L). Com
    normalize_advantages, J usa Â padronizado; os alvos de V usam Â bruto.
    A versão sobe mesmo com gradient_steps = 0.
    """
    theta, w = state.theta, state.w
    adam_theta, adam_w = state.adam_theta, state.adam_w
    policy_loss = value_loss = mean_abs_adv = 0.0

    for _ in range(hyper.gradient_steps):
        values = value_forward(w, tb.states)
        next_values = value_forward(w, tb.next_states)
        rho, c, _ = is_weights(tb, theta, hyper)
        delta = vtrace_td(tb, values, next_values, rho, hyper.gamma)
        adv = vtrace_gae(delta, c, tb.cuts, hyper.gamma, hyper.lam)
        targets = adv + values

        policy_adv = standardize(adv) if hyper.normalize_advantages else adv
        pg = ppo_policy_gradient(tb, theta, policy_adv, hyper)
        v_grads, value_loss = value_gradient(tb, w, targets)

        theta, adam_theta = adam_step(theta, pg.grads.map(np.negative), adam_theta)
        w, adam_w = adam_step(w, v_grads, adam_w)
        policy_loss = -pg.objective
        mean_abs_adv = float(np.mean(np.abs(adv)))

    new_state = replace(
        state,
        theta=theta,
        w=w,
        adam_theta=adam_theta,
        adam_w=adam_w,
        version=state.version + 1,
    )
    stats = RoundStats(
        version=new_state.version,
        mean_reward=float(np.mean(tb.rewards)),
        mean_abs_advantage=mean_abs_adv,
        policy_loss=policy_loss,
        value_loss=value_loss,
        num_transitions=len(tb),
        sources=tb.sources,
    )
    return new_state, stats


class Learner:
    """
    Dono único de (θ, w): recebe experience batches, treina quando o buffer
    tem transições suficientes e expõe a política publicada.
    """

    def __init__(self, state: LearnerState, hyper: ApoHyper):
        self.state = state
        self.hyper = hyper
        self.buffer = MasterBuffer(hyper.buffer_capacity)
        self.stale_dropped = 0

    @property
    def version(self) -> int:
        return self.state.version

    def receive(self, batch: ExperienceBatch) -> bool:
        """Enfileira o batch; False se descartado por defasagem de versão"""
        lag = self.state.version - batch.policy_version
        if self.hyper.max_version_lag is not None and lag > self.hyper.max_version_lag:
            self.stale_dropped += 1
            log_warning("Batch defasado descartado", actor_id=batch.actor_id,
                        policy_version=batch.policy_version, lag=lag)
            return False
        self.buffer.put(batch)
        return True

    def ready(self) -> bool:
        return self.buffer.ready(self.hyper.train_batch_size)

    def train_round(self) -> RoundStats:
        batches = self.buffer.build_train_batch(self.hyper.train_batch_size)
        tb = TrainingBatch.from_batches(batches)
        self.state, stats = optimize_model(tb, self.state, self.hyper)
        return stats

    @property
    def dropped_batches(self) -> int:
        return self.stale_dropped + self.buffer.dropped


# Mensagens de controle no canal atores -> learner
CLOSE = "close"


def learner_loop(
    learner: Learner,
    inbox,
    publish: Callable[[int, MlpParams], None],
    should_stop: Callable[[], bool],
    on_batch: Optional[Callable[[ExperienceBatch], None]] = None,
    on_round: Optional[Callable[[RoundStats], None]] = None,
    poll_timeout: float = 0.1,
) -> None:
    """
    Laço do learner: acumula batches no master buffer, treina com FIFO quando
    há transições suficientes e publica a nova política.

    `inbox` é qualquer fila com get(timeout=...) (queue.Queue ou
    multiprocessing.Queue). Mensagens ("error", actor_id, detalhe) viram
    WorkerFailed; CLOSE encerra o laço.

    Raises:
        WorkerFailed: um ator reportou falha
    """
    while not should_stop():
        try:
            msg = inbox.get(timeout=poll_timeout)
        except queue.Empty:
            continue
        except (EOFError, OSError) as exc:
            raise ChannelClosed("Canal de experiências fechado") from exc

        if msg == CLOSE:
            log_info("Canal de experiências encerrado")
            return
        if isinstance(msg, tuple) and msg and msg[0] == "error":
            _, actor_id, detail = msg
            raise WorkerFailed(f"Ator {actor_id} falhou: {detail}")

        if on_batch is not None:
            on_batch(msg)
        learner.receive(msg)
        while learner.ready() and not should_stop():
            started = time.perf_counter()
            stats = learner.train_round()
            publish(learner.version, learner.state.theta)
            log_info("Rodada de treino concluída", version=stats.version,
                     transitions=stats.num_transitions,
                     duration_ms=round((time.perf_counter() - started) * 1000, 3))
            if on_round is not None:
                on_round(stats)
