from pathlib import Path
from typing import Optional, Union

PathLike = Union[str, Path]


def validate_dataset_dir(path: Optional[PathLike]) -> bool:
    """Valida se o diretório contém um dataset gerado (manifest.json + dags/)"""
    if not path:
        return False
    root = Path(path)
    return (root / "manifest.json").is_file() and (root / "dags").is_dir()


def validate_checkpoint_path(path: Optional[PathLike]) -> bool:
    """Valida se é um arquivo de checkpoint JSON existente"""
    if not path:
        return False
    p = Path(path)
    return p.is_file() and p.suffix == ".json"


def validate_scenario_path(path: Optional[PathLike]) -> bool:
    """Valida se é um arquivo de cenário JSON existente"""
    if not path:
        return False
    p = Path(path)
    return p.is_file() and p.suffix == ".json"
