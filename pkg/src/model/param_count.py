from typing import Dict

from .model_config import LNPlacement, ModelConfig


def attention_params(d: int) -> int:
    return 4 * (d * d + d)


def feed_forward_params(d: int, d_ff: int) -> int:
    return d * d_ff + d_ff + d_ff * d + d


def encoder_block_params(d: int, d_ff: int) -> int:
    return attention_params(d) + feed_forward_params(d, d_ff) + 2 * (2 * d)


def decoder_block_params(d: int, d_ff: int) -> int:
    return 2 * attention_params(d) + feed_forward_params(d, d_ff) + 3 * (2 * d)


def param_breakdown(config: ModelConfig) -> Dict[str, int]:
    """Closed-form trainable parameter count per component."""
    d, d_ff, vocab = config.d_model, config.d_ff, config.vocab_size
    tables = 1 if config.tie_embeddings else 3
    return {
        "embeddings": tables * vocab * d,
        "output_bias": 0 if config.tie_embeddings else vocab,
        "encoder_blocks": config.enc_blocks * encoder_block_params(d, d_ff),
        "decoder_blocks": config.dec_blocks * decoder_block_params(d, d_ff),
        "final_layer_norms": 2 * (2 * d) if config.ln_placement is LNPlacement.PRE else 0,
        "admin_scales": d * (2 * config.enc_layers + 3 * config.dec_layers) if config.admin else 0,
    }


def param_count(config: ModelConfig) -> int:
    """
    Exact number of trainable scalars. With admin off this does not depend on
    enc_layers/dec_layers, only on the block counts.
    """
    return sum(param_breakdown(config).values())
