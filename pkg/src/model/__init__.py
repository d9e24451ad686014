from .model_config import LNPlacement, ModelConfig, ModelConfigError
from .param_count import param_breakdown, param_count
from .parameter_store import ParameterStore
from .transformer import (
    Model,
    SequenceLengthError,
    TokenRangeError,
    build_model,
    clone_untied,
    forward,
    per_block_gradient_sums,
    probe_layer_outputs,
)
from .admin import AdminError, admin_profile_init
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
