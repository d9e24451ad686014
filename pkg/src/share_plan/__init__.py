from .assignment import (
    BlockCountError,
    IndivisibleSequencePlanError,
    LayerAssignment,
    SharePlanError,
    ShareStrategy,
    block_usage_counts,
    build_assignment,
    trace_pseudocode,
)
from .plan_io import (
    assignment_from_dict,
    assignment_from_json,
    assignment_to_dict,
    assignment_to_json,
    parse_plan,
    render_plan,
)
