"""
Simplified Admin initialization for Post-LN stacks.

Each residual branch is rescaled, x + w * f(x). One profiling pass measures
the output variance of every branch; layer i of a stack then gets
w = 1 / sqrt(1 + sum of the branch variances of layers 1..i-1), filled into a
d_model vector. The first layer of each stack keeps w = 1.
"""
import logging
from typing import Dict, Tuple

import numpy as np

from ..tensor_core import no_grad
from .parameter_store import DECODER_BRANCHES, ENCODER_BRANCHES, admin_scale_name
from .transformer import Model

logger = logging.getLogger(__name__)


class AdminError(ValueError):
    pass


def _stack_scales(variances: Dict[str, float], stack: str, layers: int, branches: Tuple[str, ...]) -> Dict[str, float]:
    scales = {}
    accumulated = 0.0
    for layer in range(1, layers + 1):
        value = 1.0 / np.sqrt(1.0 + accumulated)
        for branch in branches:
            scales[admin_scale_name(stack, layer, branch)] = value
        accumulated += sum(variances[admin_scale_name(stack, layer, branch)] for branch in branches)
    return scales


def admin_profile_init(model: Model, src_tokens: np.ndarray, tgt_tokens: np.ndarray) -> Dict[str, float]:
    """
    Sets every Admin scale from one dropout-free pass over the profiling batch.

    :return: the scalar written to each branch, by parameter name.
    :raises AdminError: the model was built with admin off.
    """
    if not model.config.admin:
        raise AdminError("admin_profile_init needs a model built with admin=true")

    for tensor in model.store.admin_scales.values():
        tensor.data[...] = 1.0

    model._profile = {}
    try:
        with no_grad():
            model.forward(src_tokens, tgt_tokens, step=None)
        variances = model._profile
    finally:
        model._profile = None

    scales = {}
    scales.update(_stack_scales(variances, "enc", model.config.enc_layers, ENCODER_BRANCHES))
    scales.update(_stack_scales(variances, "dec", model.config.dec_layers, DECODER_BRANCHES))

    for name, value in scales.items():
        if not np.isfinite(value) or value <= 0.0:
            raise AdminError(f"Profiling produced an invalid scale {value} for {name}")
        model.store.admin_scales[name].data[...] = value

    logger.info(f"Admin scales set, range {min(scales.values()):.4f}..{max(scales.values()):.4f}")
    return scales
