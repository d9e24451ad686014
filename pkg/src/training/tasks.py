import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..utils.seeds import derive_seed, generator_for

logger = logging.getLogger(__name__)

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
FIRST_CONTENT_ID = 3


@dataclass(frozen=True)
class SpecialIds:
    pad: int = PAD_ID
    bos: int = BOS_ID
    eos: int = EOS_ID


class TaskKind(str, Enum):
    COPY = "copy"
    REVERSE = "reverse"
    SORT = "sort"
    FILE = "file"


class TaskConfig(BaseModel):
    """Task section of a preset. `file` tasks read pre-tokenized data instead of generating it."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: TaskKind = TaskKind.COPY
    vocab_size: int = Field(16, ge=FIRST_CONTENT_ID + 1)
    min_len: int = Field(3, ge=1)
    max_len: int = Field(8, ge=1)
    seed: int = 7
    src_path: Optional[str] = None
    tgt_path: Optional[str] = None
    vocab_path: Optional[str] = None

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.min_len > self.max_len:
            raise ValueError(f"min_len={self.min_len} exceeds max_len={self.max_len}")
        if self.kind is TaskKind.FILE and not (self.src_path and self.tgt_path):
            raise ValueError("file tasks need src_path and tgt_path")
        return self


class AbstractTask(ABC):
    """
    Source of (source, target) token-id pairs. Pairs are a pure function of
    (seed, index), so any batch can be rebuilt from its index alone.
    """

    specials: SpecialIds = SpecialIds()

    @property
    @abstractmethod
    def vocab_size(self) -> int:
        pass

    @property
    @abstractmethod
    def max_target_len(self) -> int:
        """Longest target, EOS excluded."""
        pass

    @abstractmethod
    def sample(self, index: int, seed: Optional[int] = None) -> Tuple[List[int], List[int]]:
        pass


@dataclass(frozen=True)
class SynthTask(AbstractTask):
    """COPY, REVERSE or SORT over content ids [3, vocab_size)."""
    kind: TaskKind
    vocab: int
    min_len: int
    max_len: int
    seed: int = 7

    @property
    def vocab_size(self) -> int:
        return self.vocab

    @property
    def max_target_len(self) -> int:
        return self.max_len

    def target_for(self, source: Sequence[int]) -> List[int]:
        if self.kind is TaskKind.COPY:
            return list(source)
        if self.kind is TaskKind.REVERSE:
            return list(reversed(source))
        if self.kind is TaskKind.SORT:
            return sorted(source)
        raise ValueError(f"Synthetic task cannot be of kind {self.kind}")

    def sample(self, index: int, seed: Optional[int] = None) -> Tuple[List[int], List[int]]:
        """Pair `index` of the stream keyed by the task seed and the run's stream `seed`."""
        stream = () if seed is None else (seed,)
        rng = generator_for(self.seed, *stream, self.kind.value, index)
        length = int(rng.integers(self.min_len, self.max_len + 1))
        source = rng.integers(FIRST_CONTENT_ID, self.vocab, size=length).tolist()
        return source, self.target_for(source)


@dataclass
class Batch:
    """
    src:     [B x S] source ids followed by EOS, right-padded.
    tgt_in:  [B x T] BOS followed by the target (decoder input).
    tgt_out: [B x T] the target followed by EOS (labels).
    """
    src: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    index: int = 0

    @property
    def size(self) -> int:
        return self.src.shape[0]

    def target_tokens(self, pad_id: int = PAD_ID) -> int:
        return int((self.tgt_out != pad_id).sum())


def _pad(rows: List[List[int]], pad_id: int) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), pad_id, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, :len(row)] = row
    return out


def collate(pairs: List[Tuple[List[int], List[int]]], specials: SpecialIds = SpecialIds(), index: int = 0) -> Batch:
    """Adds EOS/BOS framing and pads every row to the longest in the batch."""
    src = [list(s) + [specials.eos] for s, _ in pairs]
    tgt_in = [[specials.bos] + list(t) for _, t in pairs]
    tgt_out = [list(t) + [specials.eos] for _, t in pairs]
    return Batch(src=_pad(src, specials.pad), tgt_in=_pad(tgt_in, specials.pad),
                 tgt_out=_pad(tgt_out, specials.pad), index=index)


def make_batch(task: AbstractTask, batch_index: int, batch_size: int, seed: int) -> Batch:
    pairs = [task.sample(batch_index * batch_size + j, seed) for j in range(batch_size)]
    return collate(pairs, task.specials, index=batch_index)


def make_batches(task: AbstractTask, count: int, batch_size: int, seed: int) -> List[Batch]:
    """
    `count` batches of `batch_size` pairs; batch b holds samples
    b*batch_size .. (b+1)*batch_size-1 of the stream keyed by `seed`.
    """
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    return [make_batch(task, b, batch_size, seed) for b in range(count)]


def build_task(config: TaskConfig, base_dir: Optional[str] = None) -> AbstractTask:
    if config.kind is TaskKind.FILE:
        from .data_files import FileTask
        return FileTask.from_config(config, base_dir)
    return SynthTask(kind=config.kind, vocab=config.vocab_size, min_len=config.min_len,
                     max_len=config.max_len, seed=config.seed)


def stream_seed(root: int, stream: str) -> int:
    """Seeds of the train/valid/test sample streams."""
    return derive_seed(root, "stream", stream)
