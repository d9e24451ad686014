import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from ..tensor_core import ShapeError, Tensor

logger = logging.getLogger(__name__)


class NonFiniteGradientError(FloatingPointError):
    """A gradient holds NaN or inf; `name` is the offending tensor."""

    def __init__(self, name: str):
        super().__init__(f"Non-finite gradient in {name}")
        self.name = name


def lr_schedule(step: int, d_model: int, warmup: int, scale: float = 1.0) -> float:
    """
    Inverse-square-root schedule with linear warmup:
    scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5). Peaks at step == warmup.
    """
    if step < 1:
        raise ValueError(f"lr_schedule is defined for step >= 1, got {step}")
    if warmup < 1:
        raise ValueError(f"warmup must be at least 1, got {warmup}")
    return scale * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.98, eps: float = 1e-9) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update, applied in place to every array in `params`.
    Every gradient is validated before any parameter moves.

    :raises ShapeError: a gradient shape differs from its parameter.
    :raises NonFiniteGradientError: a gradient holds NaN or inf.
    """
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(f"{name}: gradient shape {grad.shape} != parameter shape {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param)
            v = np.zeros_like(param)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param -= update.astype(param.dtype, copy=False)
    return params, state


def global_grad_norm(grads: Iterable[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Rescales all gradients in place so their global L2 norm is at most max_norm; returns the norm before."""
    norm = global_grad_norm(grads.values())
    if math.isfinite(norm) and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for name in grads:
            grads[name] *= grads[name].dtype.type(factor)
    return norm


class Adam:
    """
    Adam over named parameter tensors. Each distinct tensor is stepped once,
    so a block shared by several layers moves once with its accumulated
    gradient.
    """

    def __init__(self, named_parameters: Iterable[Tuple[str, Tensor]], beta1: float = 0.9, beta2: float = 0.98,
                 eps: float = 1e-9, clip_norm: Optional[float] = None):
        self._params: Dict[str, Tensor] = {}
        seen = set()
        for name, tensor in named_parameters:
            if id(tensor) in seen:
                continue
            seen.add(id(tensor))
            self._params[name] = tensor
        self._beta1 = beta1
        self._beta2 = beta2
        self._eps = eps
        self._clip_norm = clip_norm
        self.state = AdamState()
        self.last_grad_norm: Optional[float] = None

    @property
    def step_count(self) -> int:
        return self.state.step

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.grad = None

    def step(self, lr: float):
        arrays = {name: tensor.data for name, tensor in self._params.items()}
        grads = {name: (tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)).copy()
                 for name, tensor in self._params.items()}
        if self._clip_norm is not None:
            self.last_grad_norm = clip_grad_norm(grads, self._clip_norm)
        adam_step(arrays, grads, self.state, lr, self._beta1, self._beta2, self._eps)
