"""
CLI do projeto: `fog-appo gen|train|eval|oracle|experiment|serve`.

Erros de domínio terminam com código 2; experimentos com algum critério de
aceitação reprovado terminam com código 1.
"""
import functools
import json
import sys
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from app.config import settings
from app.core.environment import FogEnv
from app.core.exceptions import FogAppoError
from app.core.oracle import exhaustive_best
from app.core.servers import build_pool
from app.schemas.experiment import ExperimentSpec
from app.schemas.training import RunConfig
from app.schemas.workload import DatasetSpec
from app.services.checkpoints import load_checkpoint
from app.services.dataset import build_dataset, load_dag_file, load_dataset, load_scenario
from app.services.evaluation import BASELINES, evaluate_baseline, evaluate_policy
from app.services.experiments import run_experiment
from app.services.training import run_training
from app.utils.logger import setup_logger
from app.utils.rng import STREAM_EVAL, make_rng

EXIT_DOMAIN_ERROR = 2
EXIT_ACCEPTANCE_FAILED = 1


def handle_errors(fn):
    """Converte erros de domínio e de validação em mensagem + código 2"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FogAppoError, ValidationError, FileNotFoundError) as e:
            click.echo(f"Erro: {type(e).__name__}: {e}", err=True)
            sys.exit(EXIT_DOMAIN_ERROR)
    return wrapper


def _echo_json(payload) -> None:
    click.echo(json.dumps(payload, indent=2, default=str))


@click.group(name="fog-appo")
@click.option("--log-level", default=None, help="Nível de log (padrão: settings.LOG_LEVEL)")
def cli(log_level: Optional[str]):
    """Offloading de serviços DAG em fog computing com APPO"""
    setup_logger(level=log_level)


@cli.command()
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Diretório do dataset")
@click.option("--spec", "spec_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="DatasetSpec em JSON (padrão: grade completa)")
@click.option("--seed", type=int, default=None)
@click.option("--holdout", type=int, default=None, help="L reservado para avaliação (leave-one-L-out)")
@click.option("--weightings", type=int, default=None, help="Pesos por topologia")
@click.option("--workers", type=int, default=1, show_default=True)
@handle_errors
def gen(out_dir: Path, spec_path: Optional[Path], seed: Optional[int], holdout: Optional[int],
        weightings: Optional[int], workers: int):
    """Gera o dataset sintético de DAGs"""
    data = json.loads(spec_path.read_text()) if spec_path else {}
    data["seed"] = settings.resolve_seed(seed if seed is not None else data.get("seed"))
    if holdout is not None:
        data["holdout_num_tasks"] = holdout
    if weightings is not None:
        data["weightings_per_topology"] = weightings
    manifest = build_dataset(DatasetSpec.model_validate(data), out_dir, workers=workers)
    _echo_json({
        "out_dir": str(out_dir),
        "total": len(manifest.entries),
        "train": len(manifest.ids("train")),
        "eval": len(manifest.ids("eval")),
    })


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="RunConfig em JSON; flags sobrescrevem")
@click.option("--actors", type=int, default=None)
@click.option("--rollout", type=int, default=None, help="Passos por experience batch (N)")
@click.option("--steps", type=int, default=None, help="Orçamento de passos de ambiente")
@click.option("--max-rounds", type=int, default=None)
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--serial", is_flag=True, help="Modo serial reproduzível")
@click.option("--backend", type=click.Choice(["serial", "thread", "process"]), default=None)
@click.option("--checkpoint-dir", type=click.Path(path_type=Path), default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--eval-every", type=int, default=None)
@click.option("--eval-limit", type=int, default=None)
@click.option("--resume", "resume_from", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--trace", is_flag=True, help="Grava cada passo em traces/actor-<id>.jsonl")
@handle_errors
def train(config_path, actors, rollout, steps, max_rounds, dataset_dir, scenario_path, seed, serial,
          backend, checkpoint_dir, output_dir, eval_every, eval_limit, resume_from, trace):
    """Treina a política (A atores + 1 learner)"""
    data = json.loads(config_path.read_text()) if config_path else {}
    overrides = {
        "num_actors": actors,
        "total_steps": steps,
        "max_rounds": max_rounds,
        "dataset_dir": dataset_dir,
        "scenario_path": scenario_path,
        "checkpoint_dir": checkpoint_dir,
        "output_dir": output_dir,
        "eval_every": eval_every,
        "eval_limit": eval_limit,
        "resume_from": resume_from,
        "backend": "serial" if serial else backend,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if trace:
        data["trace_episodes"] = True
    if rollout is not None:
        data.setdefault("hyper", {})["rollout_len"] = rollout
    data["seed"] = settings.resolve_seed(seed if seed is not None else data.get("seed"))

    result = run_training(RunConfig.model_validate(data))
    _echo_json(result.model_dump(mode="json", exclude={"metrics"}) | {
        "final_metrics": result.metrics[-1].model_dump(mode="json") if result.metrics else None,
    })


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--policy", type=click.Choice(BASELINES), default=None, help="Política de referência")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--split", type=click.Choice(["train", "eval", "all"]), default="eval", show_default=True)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--limit", type=int, default=None)
@click.option("--sample", is_flag=True, help="Amostra ações em vez de argmax")
@click.option("--seed", type=int, default=None)
@handle_errors
def evaluate(checkpoint, policy, dataset_dir, split, scenario_path, limit, sample, seed):
    """Avalia um checkpoint ou uma política de referência"""
    if (checkpoint is None) == (policy is None):
        raise click.UsageError("Informe exatamente um entre --checkpoint e --policy")
    seed = settings.resolve_seed(seed)
    dags = load_dataset(dataset_dir, None if split == "all" else split)[:limit]
    env = FogEnv.from_scenario(load_scenario(scenario_path))

    if checkpoint is not None:
        ckpt = load_checkpoint(checkpoint)
        rng = make_rng(seed, STREAM_EVAL) if sample else None
        summary = evaluate_policy(ckpt.state.theta, dags, env, greedy=not sample, rng=rng)
        label = f"checkpoint:{ckpt.version}"
    else:
        summary = evaluate_baseline(policy, dags, env, seed=seed)
        label = policy
    _echo_json({
        "policy": label,
        "services": summary.num_services,
        "mean_exec_time_s": summary.mean_exec_time_s,
        "deadline_hit_rate": summary.deadline_hit_rate,
        "success_rate": summary.success_rate,
    })


@cli.command()
@click.argument("dag_file", type=click.Path(exists=True, path_type=Path))
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--budget", type=int, default=None, help="Máximo de M^L (padrão: ORACLE_BUDGET)")
@click.option("--no-prune", is_flag=True)
@handle_errors
def oracle(dag_file, scenario_path, budget, no_prune):
    """Alocação ótima de um DAG por busca exaustiva"""
    dag = load_dag_file(dag_file)
    pool = build_pool(load_scenario(scenario_path))
    result = exhaustive_best(dag, pool, budget=budget or settings.ORACLE_BUDGET, prune=not no_prune)
    _echo_json(result.model_dump(mode="json"))


@cli.command()
@click.argument("spec_file", type=click.Path(exists=True, path_type=Path))
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--gnuplot", is_flag=True, help="Gera script gnuplot ao lado do CSV")
@handle_errors
def experiment(spec_file, output_dir, gnuplot):
    """Executa um experimento; código 1 se algum critério de aceitação falhar"""
    data = json.loads(spec_file.read_text())
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    if gnuplot:
        data["gnuplot"] = True
    report = run_experiment(ExperimentSpec.model_validate(data))
    _echo_json({
        "kind": report.kind,
        "csv": str(report.csv_path),
        "gnuplot": str(report.gnuplot_path) if report.gnuplot_path else None,
        "passed": report.passed,
        "checks": [c.model_dump() for c in report.checks],
    })
    if not report.passed:
        sys.exit(EXIT_ACCEPTANCE_FAILED)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--checkpoint-dir", type=click.Path(path_type=Path), default=None)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, path_type=Path), default=None)
def serve(host, port, checkpoint_dir, scenario_path):
    """Sobe a API do broker"""
    import uvicorn

    if checkpoint_dir is not None:
        settings.CHECKPOINT_DIR = checkpoint_dir
    if scenario_path is not None:
        settings.SCENARIO_PATH = scenario_path
    uvicorn.run("main:app", host=host, port=port)


if __name__ == "__main__":
    cli()
