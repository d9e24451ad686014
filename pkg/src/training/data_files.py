"""
Pre-tokenized data: one sequence per line as space-separated integer ids,
with parallel source/target files, plus a vocabulary metadata file of
`NAME id` lines that must define PAD, BOS and EOS.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from ..utils.seeds import generator_for
from .tasks import AbstractTask, SpecialIds, TaskConfig

logger = logging.getLogger(__name__)

REQUIRED_SPECIALS = ("PAD", "BOS", "EOS")


class DataFileError(ValueError):
    pass


def read_sequences(path: Union[str, Path]) -> List[List[int]]:
    sequences = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            try:
                sequences.append([int(tok) for tok in line.split()])
            except ValueError as e:
                raise DataFileError(f"{path}:{line_no}: {e}") from e
    return sequences


def write_sequences(path: Union[str, Path], sequences: List[List[int]]):
    with open(path, "w", encoding="utf-8") as f:
        for seq in sequences:
            f.write(" ".join(str(t) for t in seq) + "\n")


def read_vocab_metadata(path: Union[str, Path]) -> Dict[str, int]:
    names: Dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataFileError(f"{path}:{line_no}: expected 'NAME id', got {line!r}")
            try:
                names[parts[0].upper()] = int(parts[1])
            except ValueError as e:
                raise DataFileError(f"{path}:{line_no}: {e}") from e
    missing = [name for name in REQUIRED_SPECIALS if name not in names]
    if missing:
        raise DataFileError(f"{path}: vocabulary metadata lacks {', '.join(missing)}")
    return names


@dataclass
class FileTask(AbstractTask):
    sources: List[List[int]]
    targets: List[List[int]]
    vocab: int
    specials: SpecialIds = SpecialIds()

    def __post_init__(self):
        if len(self.sources) != len(self.targets):
            raise DataFileError(f"{len(self.sources)} source lines but {len(self.targets)} target lines")
        if not self.sources:
            raise DataFileError("Data files are empty")
        largest = max(max((max(s) for s in self.sources if s), default=0),
                      max((max(t) for t in self.targets if t), default=0))
        if largest >= self.vocab:
            raise DataFileError(f"Token id {largest} does not fit a vocabulary of {self.vocab}")
        outside = {name: value for name, value in vars(self.specials).items() if not 0 <= value < self.vocab}
        if outside:
            raise DataFileError(f"Special ids {outside} fall outside a vocabulary of {self.vocab}")

    @property
    def vocab_size(self) -> int:
        return self.vocab

    @property
    def max_target_len(self) -> int:
        return max(len(t) for t in self.targets)

    def sample(self, index: int, seed: Optional[int] = None) -> Tuple[List[int], List[int]]:
        """Draws a line uniformly; the choice is a function of (seed, index)."""
        rng = generator_for(0 if seed is None else seed, "file", index)
        line = int(rng.integers(len(self.sources)))
        return self.sources[line], self.targets[line]

    @classmethod
    def from_config(cls, config: TaskConfig, base_dir: Optional[str] = None) -> "FileTask":
        root = Path(base_dir) if base_dir else Path(".")
        specials = SpecialIds()
        if config.vocab_path:
            names = read_vocab_metadata(root / config.vocab_path)
            specials = SpecialIds(pad=names["PAD"], bos=names["BOS"], eos=names["EOS"])
        task = cls(sources=read_sequences(root / config.src_path), targets=read_sequences(root / config.tgt_path),
                   vocab=config.vocab_size, specials=specials)
        logger.info(f"Loaded {len(task.sources)} sequence pairs from {config.src_path} / {config.tgt_path}")
        return task
