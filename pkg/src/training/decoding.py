import logging
from typing import List

import numpy as np

from ..model import Model
from ..tensor_core import no_grad
from .tasks import AbstractTask, SpecialIds, collate, stream_seed

logger = logging.getLogger(__name__)


def greedy_decode(model: Model, src_tokens: np.ndarray, max_len: int,
                  specials: SpecialIds = SpecialIds()) -> List[List[int]]:
    """
    Argmax decoding, one row per source. A row stops at EOS or after max_len
    tokens; returned rows exclude BOS and EOS.
    """
    src_tokens = np.asarray(src_tokens, dtype=np.int64)
    rows = src_tokens.shape[0]
    max_len = max(0, min(max_len, model.config.max_len))
    outputs: List[List[int]] = [[] for _ in range(rows)]
    if max_len == 0 or rows == 0:
        return outputs

    finished = np.zeros(rows, dtype=bool)
    prefix = np.full((rows, 1), specials.bos, dtype=np.int64)
    with no_grad():
        memory, src_mask = model.encode(src_tokens, step=None)
        for _ in range(max_len):
            logits = model.decode(memory, src_mask, prefix, step=None).data[:, -1, :]
            chosen = logits.argmax(axis=-1)
            for row in np.nonzero(~finished)[0]:
                token = int(chosen[row])
                if token == specials.eos:
                    finished[row] = True
                else:
                    outputs[row].append(token)
            if finished.all() or prefix.shape[1] >= model.config.max_len:
                break
            prefix = np.concatenate([prefix, chosen[:, None]], axis=1)
    return outputs


def sequence_accuracy(model: Model, task: AbstractTask, samples: int = 200, seed: int = 1,
                      batch_size: int = 50, extra_len: int = 2) -> float:
    """
    Fraction of `samples` held-out pairs whose greedy decode matches the
    target exactly. Held-out pairs come from the `test` stream of `seed`.
    """
    if samples < 1:
        raise ValueError(f"samples must be at least 1, got {samples}")
    test_seed = stream_seed(seed, "test")
    correct = 0
    for start in range(0, samples, batch_size):
        pairs = [task.sample(i, test_seed) for i in range(start, min(samples, start + batch_size))]
        batch = collate(pairs, task.specials)
        decoded = greedy_decode(model, batch.src, task.max_target_len + extra_len, task.specials)
        correct += sum(1 for out, (_, target) in zip(decoded, pairs) if out == list(target))
    accuracy = correct / samples
    logger.info(f"Sequence accuracy {accuracy:.3f} over {samples} held-out samples")
    return accuracy
