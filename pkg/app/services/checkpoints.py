"""
Checkpoints do learner em JSON: política, valor, estados de Adam e versão.
O mesmo formato de parâmetros serve para sincronizar atores e para disco.
"""
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from app.core.appo import LearnerState
from app.core.nn import AdamState, MlpParams
from app.schemas.training import ApoHyper
from app.utils.helpers import format_bytes
from app.utils.log_helpers import log_info

CHECKPOINT_FORMAT = "fog-appo-checkpoint/1"
_NAME = re.compile(r"^ckpt_(\d+)\.json$")


@dataclass(frozen=True)
class Checkpoint:
    state: LearnerState
    hyper: Optional[ApoHyper] = None
    env_steps: int = 0
    num_servers: int = 0
    path: Optional[Path] = None

    @property
    def version(self) -> int:
        return self.state.version


def checkpoint_name(version: int) -> str:
    return f"ckpt_{version:06d}.json"


def save_checkpoint(
    directory: Path,
    state: LearnerState,
    hyper: Optional[ApoHyper] = None,
    env_steps: int = 0,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": state.version,
        "env_steps": env_steps,
        "num_servers": state.theta.output_size,
        "policy": state.theta.to_dict(),
        "value": state.w.to_dict(),
        "adam_policy": state.adam_theta.to_dict(),
        "adam_value": state.adam_w.to_dict(),
        "hyper": hyper.model_dump() if hyper else None,
    }
    path = directory / checkpoint_name(state.version)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload))
    tmp.replace(path)
    log_info("Checkpoint salvo", path=str(path), version=state.version, size=format_bytes(path.stat().st_size))
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    data = json.loads(path.read_text())
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"Checkpoint com formato desconhecido: {path}")
    state = LearnerState(
        theta=MlpParams.from_dict(data["policy"]),
        w=MlpParams.from_dict(data["value"]),
        adam_theta=AdamState.from_dict(data["adam_policy"]),
        adam_w=AdamState.from_dict(data["adam_value"]),
        version=int(data["version"]),
    )
    hyper = ApoHyper.model_validate(data["hyper"]) if data.get("hyper") else None
    return Checkpoint(
        state=state,
        hyper=hyper,
        env_steps=int(data.get("env_steps", 0)),
        num_servers=int(data.get("num_servers", state.theta.output_size)),
        path=path,
    )


def list_checkpoints(directory: Path) -> List[Path]:
    """Checkpoints do diretório em ordem crescente de versão"""
    directory = Path(directory)
    if not directory.exists():
        return []
    found = [(int(m.group(1)), p) for p in directory.iterdir() if (m := _NAME.match(p.name))]
    return [p for _, p in sorted(found)]


def latest_checkpoint(directory: Path) -> Optional[Path]:
    paths = list_checkpoints(directory)
    return paths[-1] if paths else None
