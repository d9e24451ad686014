"""
Primitive differentiable operations.

Broadcasting is limited to a last-axis vector (bias add, Admin scaling) and
Python scalars; every other op requires matching shapes so the tape stays
easy to audit.
"""
import hashlib
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .tensor import ShapeError, Tensor, make_result

Scalar = Union[int, float]

LAYER_NORM_EPS = 1e-5
MASK_FILL = -1e9


def _sum_to_last(grad: np.ndarray, width: int) -> np.ndarray:
    return grad.reshape(-1, width).sum(axis=0)


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        shift = b
        return make_result(a.data + shift, (a,), lambda g: (g,), "add_scalar")
    if a.shape == b.shape:
        return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if b.ndim == 1 and a.shape[-1] == b.shape[0]:
        return add_bias(a, b)
    raise ShapeError(f"add: shapes {a.shape} and {b.shape} are not compatible")


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"add_bias: bias {bias.shape} does not match last axis of {x.shape}")
    width = bias.shape[0]
    return make_result(x.data + bias.data, (x, bias), lambda g: (g, _sum_to_last(g, width)), "add_bias")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ")
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if not isinstance(b, Tensor):
        return scale(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    a_data, b_data = a.data, b.data
    return make_result(a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data), "mul")


def scale(a: Tensor, factor: Scalar) -> Tensor:
    return make_result(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def mul_last(x: Tensor, weight: Tensor) -> Tensor:
    """x * weight with `weight` broadcast along the last axis of x."""
    if weight.ndim != 1 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"mul_last: weight {weight.shape} does not match last axis of {x.shape}")
    x_data, w_data = x.data, weight.data
    width = weight.shape[0]

    def backward_fn(g):
        return g * w_data, _sum_to_last(g * x_data, width)

    return make_result(x_data * w_data, (x, weight), backward_fn, "mul_last")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    a[..., k] @ b[k, n] (weights), or a batched product of two tensors with
    identical leading dimensions: a[..., m, k] @ b[..., k, n].
    """
    a_data, b_data = a.data, b.data
    if b.ndim == 2 and a.ndim >= 1:
        if a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

        def backward_fn(g):
            grad_a = g @ b_data.T
            grad_b = a_data.reshape(-1, a_data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return grad_a, grad_b

        return make_result(a_data @ b_data, (a, b), backward_fn, "matmul")

    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def batched_backward(g):
        return g @ np.swapaxes(b_data, -1, -2), np.swapaxes(a_data, -1, -2) @ g

    return make_result(a_data @ b_data, (a, b), batched_backward, "bmm")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),), "reshape")


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return make_result(np.where(active, x.data, 0).astype(x.dtype), (x,), lambda g: (g * active,), "relu")


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax along `axis` with max-subtraction. `mask` (broadcastable boolean,
    True = keep) sends dropped entries to probability zero.
    """
    logits = x.data
    if mask is not None:
        logits = np.where(mask, logits, np.asarray(MASK_FILL, dtype=x.dtype))
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),)

    return make_result(probs, (x,), backward_fn, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Standardizes each position over the last axis, then applies gain and bias."""
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(f"layer_norm: gain {gain.shape}/bias {bias.shape} do not match width {width}")
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    gain_data = gain.data

    def backward_fn(g):
        grad_gain = _sum_to_last(g * normed, width)
        grad_bias = _sum_to_last(g, width)
        g_normed = g * gain_data
        grad_x = inv_std * (g_normed
                            - g_normed.mean(axis=-1, keepdims=True)
                            - normed * (g_normed * normed).mean(axis=-1, keepdims=True))
        return grad_x, grad_gain, grad_bias

    return make_result(normed * gain_data + bias.data, (x, gain, bias), backward_fn, "layer_norm")


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise ShapeError(f"embedding: ids must lie in [0, {vocab}), got range [{ids.min()}, {ids.max()}]")

    def backward_fn(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return make_result(table.data[ids], (table,), backward_fn, "embedding")


def site_key(seed: int, step: int, site: str) -> int:
    """128-bit Philox key for one dropout site at one step."""
    digest = hashlib.blake2b(f"{seed}:{step}:{site}".encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def dropout(x: Tensor, rate: float, key: Optional[int]) -> Tensor:
    """
    Inverted dropout. The keep-mask comes from a counter-based generator keyed
    by `key`, so the same key always drops the same units. rate == 0 or
    key None is the identity.
    """
    if rate <= 0.0 or key is None:
        return x
    generator = np.random.Generator(np.random.Philox(key=key))
    keep = generator.random(x.shape) >= rate
    factor = (keep / (1.0 - rate)).astype(x.dtype)
    return make_result(x.data * factor, (x,), lambda g: (g * factor,), "dropout")


def sum(x: Tensor) -> Tensor:
    shape = x.shape
    return make_result(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                       lambda g: (np.broadcast_to(g, shape).astype(x.dtype),), "sum")


def mean(x: Tensor) -> Tensor:
    shape, count = x.shape, x.size
    return make_result(np.asarray(x.data.mean(), dtype=x.dtype), (x,),
                       lambda g: (np.broadcast_to(g / count, shape).astype(x.dtype),), "mean")
