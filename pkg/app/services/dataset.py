"""
Dataset em disco: manifest.json + dags/<id>.json (formato canônico do DAG).
"""
import json
import multiprocessing as mp
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app.core.dag import validate_dag
from app.core.exceptions import DatasetWriteError, InvalidDag
from app.core.workload import generate_group, split_ids
from app.schemas.dag import ServiceDag
from app.schemas.scenario import ScenarioConfig
from app.schemas.workload import DatasetManifest, DatasetSpec, ManifestEntry, TopologyParams
from app.utils.log_helpers import log_error, log_info
from app.utils.validators import validate_scenario_path

MANIFEST = "manifest.json"
DAGS_DIR = "dags"


def _group_job(args: Tuple[DatasetSpec, int, TopologyParams]) -> List[ServiceDag]:
    spec, topology, params = args
    return generate_group(spec, topology, params)


def generate_dataset(spec: DatasetSpec, workers: int = 1) -> Tuple[List[ServiceDag], DatasetManifest]:
    """
    Gera todos os DAGs da grade e a partição treino/avaliação.

    Com workers > 1 as topologias são geradas num multiprocessing.Pool; o
    resultado é idêntico ao serial.
    """
    jobs = [(spec, i, params) for i, params in enumerate(spec.grid())]
    if workers > 1:
        with mp.Pool(workers) as pool:
            groups = pool.map(_group_job, jobs)
    else:
        groups = [_group_job(job) for job in jobs]

    dags = [d for group in groups for d in group]
    split = split_ids(dags, spec)

    entries = []
    for (_, topology, params), group in zip(jobs, groups):
        for k, dag in enumerate(group):
            entries.append(ManifestEntry(
                id=dag.id,
                topology=topology,
                weighting=k,
                num_tasks=dag.num_tasks,
                fat=params.fat,
                density=params.density,
                num_edges=len(dag.edges),
                split=split[dag.id],
            ))
    return dags, DatasetManifest(spec=spec, entries=entries)


def write_dataset(out_dir: Path, dags: Sequence[ServiceDag], manifest: DatasetManifest) -> Path:
    """
    Raises:
        DatasetWriteError: falha de escrita
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / DAGS_DIR).mkdir(parents=True, exist_ok=True)
        for dag in dags:
            (out_dir / DAGS_DIR / f"{dag.id}.json").write_text(json.dumps(dag.to_json_dict()))
        (out_dir / MANIFEST).write_text(manifest.model_dump_json(indent=2))
    except OSError as e:
        log_error("Falha ao gravar dataset", exc=e, out_dir=str(out_dir))
        raise DatasetWriteError(f"Não foi possível gravar o dataset em {out_dir}: {e}") from e
    return out_dir


def build_dataset(spec: DatasetSpec, out_dir: Path, workers: int = 1) -> DatasetManifest:
    """Gera e grava o dataset; retorna o manifest"""
    dags, manifest = generate_dataset(spec, workers=workers)
    write_dataset(out_dir, dags, manifest)
    n_train = len(manifest.ids("train"))
    log_info("Dataset gerado", out_dir=str(out_dir), total=len(dags),
             train=n_train, eval=len(dags) - n_train)
    return manifest


def load_manifest(dataset_dir: Path) -> DatasetManifest:
    return DatasetManifest.model_validate_json((Path(dataset_dir) / MANIFEST).read_text())


def load_dag_file(path: Path) -> ServiceDag:
    """
    Lê e valida um DAG no formato canônico.

    Raises:
        InvalidDag: JSON malformado ou estrutura inválida
    """
    try:
        dag = ServiceDag.model_validate_json(Path(path).read_text())
    except ValidationError as e:
        raise InvalidDag(f"{path}: {e}") from e
    validate_dag(dag)
    return dag


def load_dataset(dataset_dir: Path, split: Optional[str] = None, num_tasks: Optional[int] = None) -> List[ServiceDag]:
    """DAGs do dataset na ordem do manifest, opcionalmente filtrados por partição e L"""
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    return [
        load_dag_file(dataset_dir / DAGS_DIR / f"{e.id}.json")
        for e in manifest.entries
        if (split is None or e.split == split) and (num_tasks is None or e.num_tasks == num_tasks)
    ]


def load_splits(dataset_dir: Path) -> Dict[str, List[ServiceDag]]:
    return {
        "train": load_dataset(dataset_dir, "train"),
        "eval": load_dataset(dataset_dir, "eval"),
    }


def load_scenario(path: Optional[Path]) -> ScenarioConfig:
    """Cenário do arquivo JSON; None devolve o cenário padrão"""
    if path is None:
        return ScenarioConfig()
    if not validate_scenario_path(path):
        raise FileNotFoundError(f"Cenário não encontrado: {path}")
    return ScenarioConfig.model_validate_json(Path(path).read_text())
