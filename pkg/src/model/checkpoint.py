import logging
from pathlib import Path
from typing import Union

import numpy as np

from ..share_plan import assignment_from_dict, assignment_to_dict
from ..tensor_core.dump import dump_tensor, load_tensor
from ..tensor_core.tensor import TensorError
from ..utils.manifest import read_manifest, write_manifest
from .model_config import ModelConfig
from .transformer import Model, build_model

logger = logging.getLogger(__name__)

CHECKPOINT_MANIFEST = "checkpoint.yaml"
TENSOR_DIR = "tensors"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Model, directory: Union[str, Path], step: int = 0) -> Path:
    """
    Writes a manifest (config, seed, share plans, tensor index) and one text
    dump per parameter tensor.
    """
    directory = Path(directory)
    tensor_dir = directory / TENSOR_DIR
    tensor_dir.mkdir(parents=True, exist_ok=True)

    index = {}
    for name, tensor in model.named_parameters():
        filename = f"{name}.txt"
        dump_tensor(tensor, tensor_dir / filename)
        index[name] = {"file": filename, "shape": list(tensor.shape)}

    write_manifest(directory, {
        "step": step,
        "seed": model.seed,
        "dtype": str(model.dtype),
        "config": model.config.model_dump(mode="json"),
        "enc_assignment": assignment_to_dict(model.enc_assignment),
        "dec_assignment": assignment_to_dict(model.dec_assignment),
        "tensors": index,
    }, name=CHECKPOINT_MANIFEST)
    logger.info(f"Checkpoint with {len(index)} tensors saved to {directory}")
    return directory


def load_checkpoint(directory: Union[str, Path]) -> Model:
    """
    Rebuilds the model from the manifest and fills its tensors from the dumps.

    :raises CheckpointError: missing files, or shapes/plans that disagree with the manifest.
    """
    directory = Path(directory)
    try:
        manifest = read_manifest(directory, name=CHECKPOINT_MANIFEST)
    except FileNotFoundError as e:
        raise CheckpointError(f"No checkpoint manifest in {directory}") from e

    config = ModelConfig(**manifest["config"])
    dtype = np.dtype(manifest.get("dtype", "float32"))
    model = build_model(config, seed=int(manifest.get("seed", 0)), dtype=dtype)

    for key, built in (("enc_assignment", model.enc_assignment), ("dec_assignment", model.dec_assignment)):
        stored = assignment_from_dict(manifest[key])
        if stored.blocks != built.blocks:
            raise CheckpointError(f"{key} {list(stored.blocks)} disagrees with the config plan {list(built.blocks)}")

    index = manifest.get("tensors", {})
    params = model.store.parameters()
    if set(index) != set(params):
        missing = sorted(set(params) - set(index))
        extra = sorted(set(index) - set(params))
        raise CheckpointError(f"Checkpoint tensors do not match the model: missing {missing[:5]}, unexpected {extra[:5]}")

    for name, entry in index.items():
        tensor = params[name]
        if tuple(entry["shape"]) != tensor.shape:
            raise CheckpointError(f"{name}: manifest shape {entry['shape']} != model shape {list(tensor.shape)}")
        try:
            values = load_tensor(directory / TENSOR_DIR / entry["file"], dtype=dtype)
        except (OSError, TensorError) as e:
            raise CheckpointError(f"{name}: {e}") from e
        if values.shape != tensor.shape:
            raise CheckpointError(f"{name}: dump shape {values.shape} != model shape {tensor.shape}")
        tensor.data[...] = values

    logger.info(f"Checkpoint loaded from {directory} (step {manifest.get('step', 0)})")
    return model
