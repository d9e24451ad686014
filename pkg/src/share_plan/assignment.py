import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

logger = logging.getLogger(__name__)


class SharePlanError(ValueError):
    """Base error for invalid (N, M, strategy) combinations."""
    pass


class BlockCountError(SharePlanError):
    """M is outside [1, N]."""
    pass


class IndivisibleSequencePlanError(SharePlanError):
    """SEQUENCE was requested with an M that does not divide N."""
    pass


class ShareStrategy(str, Enum):
    SEQUENCE = "sequence"
    CYCLE = "cycle"
    CYCLE_REV = "cycle_rev"

    @classmethod
    def parse(cls, text: str) -> "ShareStrategy":
        """
        Accepts 'sequence', 'cycle', 'cycle_rev', 'cycle-rev' and 'cycle (rev)',
        case-insensitively.
        """
        if isinstance(text, ShareStrategy):
            return text
        key = str(text).strip().lower().replace("(", "").replace(")", "")
        key = "_".join(key.replace("-", " ").split())
        for strategy in cls:
            if strategy.value == key or strategy.name.lower() == key:
                return strategy
        raise SharePlanError(f"Unknown sharing strategy: {text!r}. "
                             f"Expected one of: {', '.join(s.value for s in cls)}")


@dataclass(frozen=True)
class LayerAssignment:
    """
    Layer position -> parameter block map for one stack (encoder or decoder).

    `blocks[i]` is the 1-based block index used by layer i + 1.
    """
    total_layers: int
    independent_layers: int
    strategy: ShareStrategy
    blocks: Tuple[int, ...]

    def __post_init__(self):
        if len(self.blocks) != self.total_layers:
            raise SharePlanError(f"Assignment has {len(self.blocks)} entries for {self.total_layers} layers")
        if self.blocks and self.blocks[0] != 1:
            raise SharePlanError("Layer 1 must use block 1")
        if set(self.blocks) != set(range(1, self.independent_layers + 1)):
            raise SharePlanError(f"Assignment {list(self.blocks)} does not use exactly blocks 1..{self.independent_layers}")

    def block_of(self, layer: int) -> int:
        """Block index (1-based) used by `layer` (1-based)."""
        return self.blocks[layer - 1]

    def layers_of(self, block: int) -> List[int]:
        """All 1-based layer positions that execute with `block`."""
        return [i + 1 for i, b in enumerate(self.blocks) if b == block]


def _check_bounds(total_layers: int, independent_layers: int, strategy: ShareStrategy):
    if total_layers < 1:
        raise BlockCountError(f"Number of layers must be positive, got N={total_layers}")
    if independent_layers < 1:
        raise BlockCountError(f"Number of independent blocks must be positive, got M={independent_layers}")
    if independent_layers > total_layers:
        raise BlockCountError(f"M={independent_layers} blocks cannot exceed N={total_layers} layers")
    if strategy is ShareStrategy.SEQUENCE and total_layers % independent_layers != 0:
        raise IndivisibleSequencePlanError(
            f"Indivisible sequence plan: M={independent_layers} does not divide N={total_layers}. "
            f"Runs of floor(N/M)={total_layers // independent_layers} layers would open "
            f"{-(-total_layers // (total_layers // independent_layers))} blocks instead of {independent_layers}."
        )


def trace_pseudocode(total_layers: int, independent_layers: int, strategy: ShareStrategy) -> List[int]:
    """
    Literal layer-by-layer construction: a new block is created whenever the
    procedure says so, otherwise an earlier layer's block is reused.

    No budget check is done here; for SEQUENCE with M not dividing N this opens
    more than M blocks.
    """
    strategy = ShareStrategy.parse(strategy)
    n, m = total_layers, independent_layers
    if not 1 <= m <= n:
        raise BlockCountError(f"Cannot trace M={m}, N={n}")
    layers: List[int] = []
    created = 0
    for i in range(1, n + 1):
        if i == 1:
            created += 1
            layers.append(created)
        elif strategy is ShareStrategy.SEQUENCE:
            if (i - 1) % (n // m) == 0:
                created += 1
                layers.append(created)
            else:
                layers.append(layers[i - 2])
        elif strategy is ShareStrategy.CYCLE:
            if i <= m:
                created += 1
                layers.append(created)
            else:
                layers.append(layers[((i - 1) % m)])
        else:
            if i <= m:
                created += 1
                layers.append(created)
            elif i <= m * (-(-n // m) - 1):
                layers.append(layers[((i - 1) % m)])
            else:
                layers.append(layers[m - ((i - 1) % m) - 1])
    return layers


def build_assignment(total_layers: int, independent_layers: int, strategy: ShareStrategy) -> LayerAssignment:
    """
    Assigns each of N layer positions one of M parameter blocks.

    :param total_layers: N, the depth of the stack.
    :param independent_layers: M, the number of parameter blocks.
    :param strategy: SEQUENCE, CYCLE or CYCLE_REV.
    :raises BlockCountError: M < 1 or M > N.
    :raises IndivisibleSequencePlanError: SEQUENCE with M not dividing N.
    """
    strategy = ShareStrategy.parse(strategy)
    _check_bounds(total_layers, independent_layers, strategy)

    n, m = total_layers, independent_layers
    if strategy is ShareStrategy.SEQUENCE:
        run = n // m
        blocks = [(i // run) + 1 for i in range(n)]
    elif strategy is ShareStrategy.CYCLE:
        blocks = [(i % m) + 1 for i in range(n)]
    else:
        boundary = m * (-(-n // m) - 1)
        blocks = [(i % m) + 1 if i < max(boundary, m) else m - (i % m) for i in range(n)]

    return LayerAssignment(total_layers=n, independent_layers=m, strategy=strategy, blocks=tuple(blocks))


def block_usage_counts(assignment: LayerAssignment) -> Dict[int, int]:
    """How many layer positions each block serves; values sum to N."""
    counts = Counter(assignment.blocks)
    return {block: counts[block] for block in sorted(counts)}
