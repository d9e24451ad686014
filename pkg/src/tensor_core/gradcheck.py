import logging
from typing import Callable

import numpy as np

from .tensor import Tensor, TensorError

logger = logging.getLogger(__name__)


class NonDeterministicFunctionError(TensorError):
    """Two evaluations at the same point gave different values."""
    pass


def _evaluate(f: Callable[[Tensor], Tensor], x: Tensor) -> float:
    value = f(x)
    if value.size != 1:
        raise TensorError(f"Gradient check needs a scalar function, got shape {value.shape}")
    return float(value.data.reshape(-1)[0])


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5, floor: float = 1e-12) -> float:
    """
    Compares the tape gradient of scalar f at x with central differences.

    :param f: function of x returning a scalar Tensor; may read other tensors
              through a closure, only x is perturbed.
    :param x: leaf tensor with requires_grad=True in float64.
    :param h: central-difference step.
    :param floor: lower bound of the relative-error denominator.
    :return: max over coordinates of |analytic - cd| / max(|analytic|, |cd|, floor).
    :raises NonDeterministicFunctionError: f(x) is not reproducible.
    """
    if x.dtype != np.float64:
        raise TensorError(f"Gradient checks run in 64-bit mode, got {x.dtype}")
    if not x.requires_grad:
        raise TensorError("Gradient check target must require grad")

    saved_grad = x.grad
    x.grad = None
    out = f(x)
    first = float(out.data.reshape(-1)[0])
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = saved_grad

    second = _evaluate(f, x)
    if first != second:
        raise NonDeterministicFunctionError(f"f(x) changed between evaluations: {first!r} vs {second!r}")

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + h
        plus = _evaluate(f, x)
        flat[index] = original - h
        minus = _evaluate(f, x)
        flat[index] = original
        numeric.reshape(-1)[index] = (plus - minus) / (2.0 * h)

    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    error = float(np.max(np.abs(analytic - numeric) / denominator)) if x.size else 0.0
    logger.debug(f"Gradient check on {x.name or x.shape}: max relative error {error:.3e}")
    return error
