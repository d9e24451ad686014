import numpy as np

from .tensor import ShapeError, Tensor, TensorError, make_result


class TargetRangeError(TensorError):
    pass


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_label_smoothed(logits: Tensor, targets: np.ndarray, smoothing: float = 0.0,
                                 pad_id: int = 0) -> Tensor:
    """
    Mean over non-pad positions of the cross-entropy against the smoothed
    target distribution (1 - eps) * one_hot + eps / V.

    :param logits: [T x V] scores.
    :param targets: [T] token ids; positions equal to pad_id are ignored.
    :param smoothing: eps in [0, 1).
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be [T x V], got {logits.shape}")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"Label smoothing must lie in [0, 1), got {smoothing}")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    rows, vocab = logits.shape
    if targets.shape[0] != rows:
        raise ShapeError(f"cross_entropy: {targets.shape[0]} targets for {rows} rows")

    live = targets != pad_id
    if np.any(targets[live] < 0) or np.any(targets[live] >= vocab):
        bad = targets[live][(targets[live] < 0) | (targets[live] >= vocab)]
        raise TargetRangeError(f"Target ids {bad[:5].tolist()} outside [0, {vocab})")

    count = int(live.sum())
    dtype = logits.dtype
    if count == 0:
        return make_result(np.asarray(0.0, dtype=dtype), (logits,),
                           lambda g: (np.zeros_like(logits.data),), "cross_entropy")

    log_probs = log_softmax(logits.data)
    smooth = np.zeros_like(log_probs)
    smooth[live] = smoothing / vocab
    smooth[np.nonzero(live)[0], targets[live]] += 1.0 - smoothing
    loss = -(smooth * log_probs).sum() / count

    def backward_fn(g):
        probs = np.exp(log_probs) * live[:, None]
        return (((probs - smooth) * (g / count)).astype(dtype, copy=False),)

    return make_result(np.asarray(loss, dtype=dtype), (logits,), backward_fn, "cross_entropy")
