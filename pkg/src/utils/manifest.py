import logging
import platform
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import yaml

from .. import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.yaml"


def machine_descriptor() -> Dict[str, Any]:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def write_manifest(directory: Union[str, Path], payload: Dict[str, Any], name: str = MANIFEST_NAME) -> Path:
    """Writes payload plus the package version as YAML next to a run's outputs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    document = {"version": __version__, **payload}
    path = directory / name
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(document, f, sort_keys=False)
    logger.info(f"Manifest written to {path}")
    return path


def read_manifest(directory: Union[str, Path], name: str = MANIFEST_NAME) -> Dict[str, Any]:
    with open(Path(directory) / name, encoding="utf-8") as f:
        return yaml.safe_load(f) or {}
