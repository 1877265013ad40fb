"""
Experimentos em escala de bancada: convergência, tamanho do sistema,
speedup por número de atores, tempo de decisão (DTO) e gap de otimalidade.

Cada experimento grava um CSV (esquema estável, uma linha por ponto), as
mesmas linhas em JSON-lines e, opcionalmente, um script gnuplot.
"""
import csv
import json
import os
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.core.environment import FogEnv, state_size
from app.core.exceptions import FogAppoError, NonPositiveTime
from app.core.nn import init_mlp
from app.core.oracle import exhaustive_best
from app.core.servers import build_pool
from app.core.workload import assign_weights, generate_topology
from app.schemas.dag import ServiceDag
from app.schemas.experiment import AcceptanceCheck, ExperimentReport, ExperimentSpec
from app.schemas.training import RunConfig, TrainingResult
from app.schemas.workload import DatasetSpec, TopologyParams, WeightRanges
from app.services.checkpoints import load_checkpoint
from app.services.dataset import generate_dataset, load_dataset, load_manifest
from app.services.evaluation import time_decisions
from app.services.training import run_training
from app.utils.helpers import format_ms, safe_filename
from app.utils.log_helpers import log_info, log_warning
from app.utils.rng import STREAM_EVAL, STREAM_INIT, make_rng
from app.utils.validators import validate_dataset_dir

CONVERGENCE_COLUMNS = ["version", "env_steps", "wall_time", "eval_mean_exec_time_s", "deadline_hit_rate"]
SYSTEM_SIZE_COLUMNS = [
    "num_servers", "version", "env_steps", "first_mean_exec_time_s", "eval_mean_exec_time_s",
    "first_deadline_hit_rate", "deadline_hit_rate",
]
SPEEDUP_COLUMNS = ["num_actors", "env_steps", "wall_time", "speedup"]
DTO_COLUMNS = ["num_servers", "num_tasks", "services", "dto_ms", "dto_label"]
OPTIMALITY_COLUMNS = ["version", "env_steps", "agent_mean_exec_time_s", "oracle_mean_exec_time_s", "gap"]

SMALL_FAT = (0.4, 0.8)
SMALL_DENSITY = (0.4, 0.8)


def compute_speedup(time_r: float, time_t: float) -> float:
    """
    SP = Time_R / Time_T.

    Raises:
        NonPositiveTime: algum dos tempos <= 0
    """
    if time_r <= 0 or time_t <= 0:
        raise NonPositiveTime(f"Tempos devem ser positivos: Time_R={time_r}, Time_T={time_t}")
    return time_r / time_t


def optimality_gap(agent_mean: float, oracle_mean: float) -> float:
    if oracle_mean <= 0:
        raise NonPositiveTime(f"Objetivo do oracle não positivo: {oracle_mean}")
    return (agent_mean - oracle_mean) / oracle_mean


# ---------------------------------------------------------------------------
# Saída

def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return path


def write_jsonl(path: Path, rows: Sequence[Dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def write_gnuplot(csv_path: Path, x: str, ys: Sequence[str], title: str) -> Path:
    """Script gnuplot que desenha as colunas `ys` contra `x` a partir do CSV"""
    gp_path = csv_path.with_suffix(".gp")
    png = csv_path.with_suffix(".png").name
    plots = ", \\\n     ".join(
        f'"{csv_path.name}" using "{x}":"{y}" with linespoints title "{y}"' for y in ys
    )
    gp_path.write_text(
        "set datafile separator \",\"\n"
        "set terminal pngcairo size 900,600\n"
        f"set output \"{png}\"\n"
        f"set title \"{title}\"\n"
        f"set xlabel \"{x}\"\n"
        "set grid\n"
        f"plot {plots}\n"
    )
    return gp_path


def _finish(
    spec: ExperimentSpec,
    out_dir: Path,
    columns: Sequence[str],
    rows: List[Dict],
    checks: List[AcceptanceCheck],
    x: str,
    ys: Sequence[str],
) -> ExperimentReport:
    name = safe_filename(spec.resolved_name)
    csv_path = write_csv(out_dir / f"{name}.csv", columns, rows)
    write_jsonl(out_dir / f"{name}.jsonl", rows)
    gp_path = write_gnuplot(csv_path, x, ys, spec.resolved_name) if spec.gnuplot else None
    report = ExperimentReport(kind=spec.kind, csv_path=csv_path, gnuplot_path=gp_path, rows=rows, checks=checks)
    (out_dir / f"{name}.report.json").write_text(report.model_dump_json(indent=2))
    for check in checks:
        log_info("Critério de aceitação", check=check.name, passed=check.passed,
                 skipped=check.skipped, value=check.value, threshold=check.threshold)
    return report


# ---------------------------------------------------------------------------
# Dados

def experiment_dataset(spec: ExperimentSpec) -> Tuple[List[ServiceDag], List[ServiceDag]]:
    """
    Partições (treino, avaliação) do experimento: dataset em disco se
    dataset_dir tiver manifest, senão gerado em memória a partir de spec.dataset.
    """
    if validate_dataset_dir(spec.dataset_dir):
        manifest = load_manifest(spec.dataset_dir)
        if spec.holdout_num_tasks is not None and manifest.spec.holdout_num_tasks != spec.holdout_num_tasks:
            raise FogAppoError(
                f"Dataset em {spec.dataset_dir} não foi gerado com holdout L={spec.holdout_num_tasks}"
            )
        return load_dataset(spec.dataset_dir, "train"), load_dataset(spec.dataset_dir, "eval")

    data = spec.dataset.model_dump(exclude={"total_topologies", "total_dags"})
    data["seed"] = spec.seed
    if spec.holdout_num_tasks is not None:
        data["holdout_num_tasks"] = spec.holdout_num_tasks
    dags, manifest = generate_dataset(DatasetSpec.model_validate(data))
    by_id = {d.id: d for d in dags}
    return [by_id[i] for i in manifest.ids("train")], [by_id[i] for i in manifest.ids("eval")]


def small_instances(count: int, max_tasks: int, ranges: WeightRanges, seed: int, offset: int = 0) -> List[ServiceDag]:
    """Instâncias pequenas (2..max_tasks tarefas) para comparação com o oracle"""
    dags = []
    for i in range(offset, offset + count):
        rng = make_rng(seed, STREAM_EVAL, i)
        params = TopologyParams(
            num_tasks=int(rng.integers(min(2, max_tasks), max_tasks + 1)),
            fat=float(rng.uniform(*SMALL_FAT)),
            density=float(rng.uniform(*SMALL_DENSITY)),
            seed=seed,
        )
        skeleton = generate_topology(params, stream_id=i)
        dags.append(assign_weights(skeleton, ranges, seed, stream_id=i, dag_id=f"small-{i:04d}"))
    return dags


def _run_config(spec: ExperimentSpec, out_dir: Path, rounds: int, **overrides) -> RunConfig:
    hyper = spec.hyper
    # Orçamento folgado: quem encerra é max_rounds
    total_steps = 2 * (rounds + 1) * (hyper.train_batch_size + hyper.rollout_len) * spec.num_actors
    values = dict(
        num_actors=spec.num_actors,
        total_steps=total_steps,
        max_rounds=rounds,
        seed=spec.seed,
        backend=spec.backend,
        scenario=spec.scenario,
        hyper=hyper,
        output_dir=out_dir,
        eval_every=spec.eval_every,
        eval_limit=spec.eval_limit,
    )
    values.update(overrides)
    return RunConfig(**values)


def _metric_dict(row) -> Dict:
    return {
        "version": row.version,
        "env_steps": row.env_steps,
        "wall_time": row.wall_time,
        "eval_mean_exec_time_s": row.eval_mean_exec_time_s,
        "deadline_hit_rate": row.deadline_hit_rate,
    }


# ---------------------------------------------------------------------------
# Experimentos

def convergence_checks(spec: ExperimentSpec, result: TrainingResult) -> List[AcceptanceCheck]:
    if len(result.metrics) < 2:
        return [AcceptanceCheck(name="convergence_ratio", passed=False, detail="menos de 2 pontos de avaliação")]
    first, last = result.metrics[0], result.metrics[-1]
    ratio = last.eval_mean_exec_time_s / first.eval_mean_exec_time_s if first.eval_mean_exec_time_s > 0 else float("inf")
    return [
        AcceptanceCheck(
            name="convergence_ratio",
            passed=ratio <= spec.max_convergence_ratio,
            value=ratio,
            threshold=spec.max_convergence_ratio,
            detail="T final / T da versão inicial",
        ),
        AcceptanceCheck(
            name="deadline_hit_rate_increases",
            passed=last.deadline_hit_rate > first.deadline_hit_rate,
            value=last.deadline_hit_rate - first.deadline_hit_rate,
            threshold=0.0,
        ),
    ]


def run_convergence(spec: ExperimentSpec, out_dir: Path) -> ExperimentReport:
    """Curva bruta (sem suavização) da política greedy na partição de avaliação"""
    train, evaluation = experiment_dataset(spec)
    result = run_training(_run_config(spec, out_dir / "run", spec.rounds), train, evaluation)
    rows = [_metric_dict(r) for r in result.metrics]
    return _finish(spec, out_dir, CONVERGENCE_COLUMNS, rows, convergence_checks(spec, result),
                   x="version", ys=["eval_mean_exec_time_s"])


def run_system_size(spec: ExperimentSpec, out_dir: Path) -> ExperimentReport:
    """Treino e avaliação final para cada M da grade (FS:CS proporcional)"""
    train, evaluation = experiment_dataset(spec)
    rows = []
    for m in spec.num_servers_grid:
        scenario = spec.scenario.with_num_servers(m)
        cfg = _run_config(spec, out_dir / f"m{m}", spec.rounds, scenario=scenario)
        result = run_training(cfg, train, evaluation)
        first, last = result.metrics[0], result.metrics[-1]
        rows.append({
            "num_servers": m,
            "version": last.version,
            "env_steps": last.env_steps,
            "first_mean_exec_time_s": first.eval_mean_exec_time_s,
            "eval_mean_exec_time_s": last.eval_mean_exec_time_s,
            "first_deadline_hit_rate": first.deadline_hit_rate,
            "deadline_hit_rate": last.deadline_hit_rate,
        })
        log_info("Tamanho de sistema concluído", num_servers=m, eval_mean_exec_time_s=last.eval_mean_exec_time_s)
    return _finish(spec, out_dir, SYSTEM_SIZE_COLUMNS, rows, [], x="num_servers",
                   ys=["eval_mean_exec_time_s", "first_mean_exec_time_s"])


def speedup_checks(spec: ExperimentSpec, speedups: Dict[int, float], cores: Optional[int]) -> List[AcceptanceCheck]:
    checks = []
    if 2 in speedups and 1 in speedups:
        checks.append(AcceptanceCheck(
            name="speedup_2_above_1",
            passed=speedups[2] > speedups[1],
            value=speedups[2],
            threshold=speedups[1],
        ))
    if 4 in speedups:
        enough_cores = cores is not None and cores >= spec.min_cores_for_speedup
        checks.append(AcceptanceCheck(
            name="speedup_4",
            passed=speedups[4] >= spec.min_speedup_4,
            value=speedups[4],
            threshold=spec.min_speedup_4,
            skipped=not enough_cores,
            detail="" if enough_cores else f"host com {cores} núcleos (< {spec.min_cores_for_speedup})",
        ))
    return checks


def run_speedup(spec: ExperimentSpec, out_dir: Path) -> ExperimentReport:
    """
    Tempo de parede para coletar step_budget passos com A atores; Time_R é o
    tempo com 1 ator. Sem avaliação durante a coleta.
    """
    if 1 not in spec.actor_counts:
        raise FogAppoError("actor_counts precisa incluir 1 (referência Time_R)")
    train, _ = experiment_dataset(spec)
    backend = "process" if spec.backend == "serial" else spec.backend
    times: Dict[int, float] = {}
    steps: Dict[int, int] = {}
    for a in sorted(spec.actor_counts):
        cfg = _run_config(spec, out_dir / f"a{a}", rounds=0, num_actors=a, backend=backend,
                          total_steps=spec.step_budget, max_rounds=None)
        result = run_training(cfg, train, [])
        times[a], steps[a] = result.wall_time, result.env_steps
        log_info("Coleta concluída", num_actors=a, env_steps=result.env_steps, wall_time_s=round(result.wall_time, 3))

    speedups = {a: compute_speedup(times[1], times[a]) for a in times}
    rows = [
        {"num_actors": a, "env_steps": steps[a], "wall_time": times[a], "speedup": speedups[a]}
        for a in sorted(times)
    ]
    checks = speedup_checks(spec, speedups, os.cpu_count())
    return _finish(spec, out_dir, SPEEDUP_COLUMNS, rows, checks, x="num_actors", ys=["speedup"])


def measure_dto(theta, dags: Sequence[ServiceDag], env: FogEnv) -> float:
    """Tempo médio de decisão (ms) por serviço"""
    mean_ms, _ = time_decisions(theta, dags, env, time.perf_counter)
    return mean_ms


def run_dto(spec: ExperimentSpec, out_dir: Path) -> ExperimentReport:
    """
    DTO por (M, L). Com checkpoint, M é o do checkpoint; sem checkpoint, uma
    política inicial por M da grade (o custo do forward não depende dos pesos).
    """
    if spec.checkpoint is not None:
        ckpt = load_checkpoint(spec.checkpoint)
        policies = [(ckpt.num_servers, ckpt.state.theta)]
    else:
        policies = [
            (m, init_mlp(state_size(m), spec.hyper.hidden_size, m, make_rng(spec.seed, STREAM_INIT, m)))
            for m in spec.num_servers_grid
        ]

    rows = []
    for m, theta in policies:
        env = FogEnv.from_scenario(spec.scenario.with_num_servers(m))
        for num_tasks in spec.dto_num_tasks:
            dags = _fixed_size_services(spec, num_tasks)
            dto = measure_dto(theta, dags, env)
            rows.append({
                "num_servers": m,
                "num_tasks": num_tasks,
                "services": len(dags),
                "dto_ms": dto,
                "dto_label": format_ms(dto),
            })
            log_info("DTO medido", num_servers=m, num_tasks=num_tasks, dto_ms=format_ms(dto))
    return _finish(spec, out_dir, DTO_COLUMNS, rows, [], x="num_tasks", ys=["dto_ms"])


def _fixed_size_services(spec: ExperimentSpec, num_tasks: int) -> List[ServiceDag]:
    data = spec.dataset.model_dump(exclude={"total_topologies", "total_dags"})
    per_topology = max(1, -(-spec.dto_services // (len(data["fat"]) * len(data["density"]))))
    data.update(num_tasks=[num_tasks], seed=spec.seed, holdout_num_tasks=None,
                weightings_per_topology=per_topology)
    dags, _ = generate_dataset(DatasetSpec.model_validate(data))
    return dags[: spec.dto_services]


def optimality_rows(metrics, oracle_mean: float) -> List[Dict]:
    return [
        {
            "version": r.version,
            "env_steps": r.env_steps,
            "agent_mean_exec_time_s": r.eval_mean_exec_time_s,
            "oracle_mean_exec_time_s": oracle_mean,
            "gap": optimality_gap(r.eval_mean_exec_time_s, oracle_mean),
        }
        for r in metrics
    ]


def optimality_checks(spec: ExperimentSpec, rows: Sequence[Dict], oracle_mean: float) -> List[AcceptanceCheck]:
    """Gap final abaixo do limite e menor que o gap da versão inicial"""
    first_gap, final_gap = rows[0]["gap"], rows[-1]["gap"]
    return [
        AcceptanceCheck(
            name="optimality_gap",
            passed=final_gap <= spec.max_optimality_gap,
            value=final_gap,
            threshold=spec.max_optimality_gap,
            detail=f"oracle médio {oracle_mean:.6g} s",
        ),
        AcceptanceCheck(
            name="optimality_gap_decreases",
            passed=len(rows) > 1 and final_gap < first_gap,
            value=first_gap - final_gap,
            threshold=0.0,
            detail="gap da versão inicial - gap final",
        ),
    ]


def run_optimality(spec: ExperimentSpec, out_dir: Path) -> ExperimentReport:
    """
    Treina num cenário pequeno (por padrão o pool heterogêneo de
    optimality_scenario) e compara, a cada rodada, o T médio da
    política greedy com o ótimo exato nas mesmas instâncias de avaliação.

    Raises:
        BudgetExceeded: instância acima do orçamento do oracle
    """
    scenario = spec.optimality_scenario or spec.scenario.with_num_servers(spec.optimality_num_servers)
    pool = build_pool(scenario)
    ranges = spec.dataset.ranges
    train = small_instances(spec.optimality_train_instances, spec.optimality_max_tasks, ranges, spec.seed)
    evaluation = small_instances(spec.optimality_eval_instances, spec.optimality_max_tasks, ranges, spec.seed,
                                 offset=spec.optimality_train_instances)

    oracle = [exhaustive_best(dag, pool, budget=settings.ORACLE_BUDGET) for dag in evaluation]
    oracle_mean = float(np.mean([r.objective_s for r in oracle]))
    infeasible = sum(not r.feasible for r in oracle)
    if infeasible:
        log_warning("Instâncias sem alocação viável", count=infeasible, total=len(oracle))

    cfg = _run_config(spec, out_dir / "run", spec.optimality_rounds, scenario=scenario, eval_every=1,
                      eval_limit=None)
    result = run_training(cfg, train, evaluation, pool=pool)
    rows = optimality_rows(result.metrics, oracle_mean)

    checks = optimality_checks(spec, rows, oracle_mean)
    return _finish(spec, out_dir, OPTIMALITY_COLUMNS, rows, checks, x="version",
                   ys=["agent_mean_exec_time_s", "oracle_mean_exec_time_s"])


RUNNERS = {
    "convergence": run_convergence,
    "system_size": run_system_size,
    "speedup": run_speedup,
    "dto": run_dto,
    "optimality": run_optimality,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Executa o experimento do `kind` (seed sobrescrita por FOG_APPO_SEED, se definida)"""
    spec = spec.model_copy(update={"seed": settings.resolve_seed(spec.seed)})
    out_dir = Path(spec.output_dir) / safe_filename(spec.resolved_name)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_info("Experimento iniciado", kind=spec.kind, seed=spec.seed, out_dir=str(out_dir))
    report = RUNNERS[spec.kind](spec, out_dir)
    log_info("Experimento concluído", kind=spec.kind, passed=report.passed, csv=str(report.csv_path))
    return report
