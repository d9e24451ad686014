"""
Text fixture format for tensors:

    shape: 2 3
    0.1
    ...

First line is the shape header (empty after the colon for scalars), then the
flat values in C order, one per line, in repr precision.
"""
from pathlib import Path
from typing import Union

import numpy as np

from .tensor import Tensor, TensorError


def dumps_tensor(tensor: Union[Tensor, np.ndarray]) -> str:
    data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    header = "shape: " + " ".join(str(d) for d in data.shape)
    values = "\n".join(repr(float(v)) for v in data.reshape(-1))
    return f"{header.rstrip()}\n{values}\n" if values else f"{header.rstrip()}\n"


def loads_tensor(text: str, dtype=np.float64) -> np.ndarray:
    lines = [line.strip() for line in text.strip().splitlines()]
    if not lines or not lines[0].startswith("shape:"):
        raise TensorError("Tensor dump must start with a 'shape:' header")
    try:
        shape = tuple(int(d) for d in lines[0][len("shape:"):].split())
        values = np.array([float(v) for v in lines[1:] if v], dtype=dtype)
    except ValueError as e:
        raise TensorError(f"Malformed tensor dump: {e}") from e
    expected = int(np.prod(shape)) if shape else 1
    if values.size != expected:
        raise TensorError(f"Tensor dump declares shape {shape} ({expected} values) but holds {values.size}")
    return values.reshape(shape)


def dump_tensor(tensor: Union[Tensor, np.ndarray], path: Union[str, Path]):
    Path(path).write_text(dumps_tensor(tensor), encoding="utf-8")


def load_tensor(path: Union[str, Path], dtype=np.float64) -> np.ndarray:
    return loads_tensor(Path(path).read_text(encoding="utf-8"), dtype=dtype)
