"""
Avaliação de políticas sobre um conjunto de serviços, sempre pelo
ambiente (mesmo modelo de custo do treino).
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.actor import sample_action
from app.core.environment import FogEnv, StepInfo, StepOutcome
from app.core.exceptions import FogAppoError
from app.core.nn import MlpParams
from app.core.oracle import greedy_step, random_policy
from app.schemas.dag import ServiceDag

BASELINES = ("greedy", "random")


@dataclass(frozen=True)
class EvalSummary:
    mean_exec_time_s: float
    deadline_hit_rate: float
    num_services: int
    success_rate: float = 0.0


@dataclass
class EpisodeResult:
    """Resultado de um serviço: info final e o trajeto passo a passo"""
    info: StepInfo
    steps: List[StepOutcome]


def run_episode(env: FogEnv, dag: ServiceDag, choose: Callable[[np.ndarray, Optional[np.ndarray]], int]) -> EpisodeResult:
    state = env.reset(dag)
    steps: List[StepOutcome] = []
    done = False
    while not done:
        outcome = env.step(choose(state, env.action_mask()))
        steps.append(outcome)
        state, done = outcome.next_state, outcome.done
    return EpisodeResult(info=steps[-1].info, steps=steps)


def run_policy_episode(
    env: FogEnv,
    dag: ServiceDag,
    theta: MlpParams,
    greedy: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> EpisodeResult:
    def choose(state, mask):
        return sample_action(theta, state, rng, mask, greedy=greedy)[0]

    return run_episode(env, dag, choose)


def replay_assignment(env: FogEnv, dag: ServiceDag, assignment: Dict[int, int]) -> EpisodeResult:
    """Executa uma alocação pronta passo a passo no ambiente"""
    def choose(state, mask):
        return assignment[env.current_task_id]

    return run_episode(env, dag, choose)


def summarize(results: Sequence[EpisodeResult]) -> EvalSummary:
    if not results:
        raise FogAppoError("Avaliação sem serviços")
    times = [r.info.total_exec_time for r in results]
    hits = sum(r.info.deadline_hits for r in results)
    tasks = sum(r.info.num_tasks for r in results)
    successes = sum(s.info.success for r in results for s in r.steps)
    return EvalSummary(
        mean_exec_time_s=float(np.mean(times)),
        deadline_hit_rate=hits / tasks,
        num_services=len(results),
        success_rate=successes / tasks,
    )


def evaluate_policy(
    theta: MlpParams,
    dags: Sequence[ServiceDag],
    env: FogEnv,
    greedy: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> EvalSummary:
    """
    Média de T(X) e taxa de prazos cumpridos da política sobre `dags`.
    Com greedy=False as ações são amostradas com `rng`.
    """
    return summarize([run_policy_episode(env, dag, theta, greedy, rng) for dag in dags])


def evaluate_baseline(policy: str, dags: Sequence[ServiceDag], env: FogEnv, seed: int = 0) -> EvalSummary:
    """Avalia greedy ou random pelo mesmo caminho do agente"""
    if policy not in BASELINES:
        raise FogAppoError(f"Política de referência desconhecida: {policy}")
    results = []
    for i, dag in enumerate(dags):
        if policy == "greedy":
            assignment = greedy_step(dag, env.pool).assignment
        else:
            assignment = random_policy(dag, env.pool, seed + i).assignment
        results.append(replay_assignment(env, dag, assignment))
    return summarize(results)


def time_decisions(theta: MlpParams, dags: Sequence[ServiceDag], env: FogEnv, clock: Callable[[], float]) -> Tuple[float, List[float]]:
    """
    Tempo de decisão por serviço em ms: pré-escalonamento + estado inicial,
    forward + argmax por tarefa e a montagem de cada estado seguinte. A
    simulação da execução em env.step() fica fora; o estado que ela devolve
    é remontado dentro da janela medida.
    """
    per_service = []
    for dag in dags:
        started = clock()
        state = env.reset(dag)
        elapsed = clock() - started
        done = False
        while not done:
            started = clock()
            action, _ = sample_action(theta, state, mask=env.action_mask(), greedy=True)
            elapsed += clock() - started
            done = env.step(action).done
            if not done:
                started = clock()
                state = env.build_state()
                elapsed += clock() - started
        per_service.append(elapsed * 1000.0)
    return float(np.mean(per_service)), per_service


class TraceWriter:
    """Grava cada StepOutcome como uma linha JSON (usado como on_step do ambiente)"""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self.episode = 0

    def __call__(self, outcome: StepOutcome) -> None:
        row = {"episode": self.episode, **outcome.to_dict()}
        self._fh.write(json.dumps(row) + "\n")
        if outcome.done:
            self.episode += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
