import json
import re
from typing import Any, Dict

from .assignment import LayerAssignment, SharePlanError, ShareStrategy

_LINE_RE = re.compile(r"^layer\s+(\d+)\s+→\s+block\s+(\d+)$")


def render_plan(assignment: LayerAssignment) -> str:
    """One line per layer: 'layer i → block b' (both 1-based)."""
    return "\n".join(f"layer {i} → block {b}" for i, b in enumerate(assignment.blocks, start=1))


def parse_plan(text: str, strategy: ShareStrategy = ShareStrategy.CYCLE) -> LayerAssignment:
    """
    Inverse of render_plan. The rendered text does not carry the strategy, so
    the caller supplies it.
    """
    blocks = []
    for line_no, line in enumerate(text.strip().splitlines(), start=1):
        match = _LINE_RE.match(line.strip())
        if not match:
            raise SharePlanError(f"Line {line_no}: cannot parse plan line {line!r}")
        layer, block = int(match.group(1)), int(match.group(2))
        if layer != line_no:
            raise SharePlanError(f"Line {line_no}: expected layer {line_no}, got layer {layer}")
        blocks.append(block)
    if not blocks:
        raise SharePlanError("Empty plan")
    return LayerAssignment(
        total_layers=len(blocks),
        independent_layers=max(blocks),
        strategy=ShareStrategy.parse(strategy),
        blocks=tuple(blocks),
    )


def assignment_to_dict(assignment: LayerAssignment) -> Dict[str, Any]:
    return {
        "N": assignment.total_layers,
        "M": assignment.independent_layers,
        "strategy": assignment.strategy.value,
        "blocks": list(assignment.blocks),
    }


def assignment_from_dict(data: Dict[str, Any]) -> LayerAssignment:
    try:
        return LayerAssignment(
            total_layers=int(data["N"]),
            independent_layers=int(data["M"]),
            strategy=ShareStrategy.parse(data["strategy"]),
            blocks=tuple(int(b) for b in data["blocks"]),
        )
    except (KeyError, TypeError) as e:
        raise SharePlanError(f"Invalid plan data: {e}") from e


def assignment_to_json(assignment: LayerAssignment) -> str:
    return json.dumps(assignment_to_dict(assignment))


def assignment_from_json(text: str) -> LayerAssignment:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SharePlanError(f"Invalid plan JSON: {e}") from e
    return assignment_from_dict(data)
