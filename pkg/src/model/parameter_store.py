import copy
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..tensor_core import Tensor
from ..utils.seeds import generator_for
from .model_config import LNPlacement, ModelConfig

logger = logging.getLogger(__name__)

ENCODER_BRANCHES = ("self_attn", "ffn")
DECODER_BRANCHES = ("self_attn", "cross_attn", "ffn")


class ParamGroup:
    """Dataclass mixin: walks Tensor fields and nested groups in declaration order."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for f in fields(self):
            value = getattr(self, f.name)
            name = f"{prefix}{f.name}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, ParamGroup):
                yield from value.named_parameters(f"{name}.")


@dataclass
class AttentionParams(ParamGroup):
    q_weight: Tensor
    q_bias: Tensor
    k_weight: Tensor
    k_bias: Tensor
    v_weight: Tensor
    v_bias: Tensor
    o_weight: Tensor
    o_bias: Tensor


@dataclass
class FeedForwardParams(ParamGroup):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class LayerNormParams(ParamGroup):
    gain: Tensor
    bias: Tensor


@dataclass
class EncoderBlock(ParamGroup):
    self_attn: AttentionParams
    ffn: FeedForwardParams
    ln_self_attn: LayerNormParams
    ln_ffn: LayerNormParams


@dataclass
class DecoderBlock(ParamGroup):
    self_attn: AttentionParams
    cross_attn: AttentionParams
    ffn: FeedForwardParams
    ln_self_attn: LayerNormParams
    ln_cross_attn: LayerNormParams
    ln_ffn: LayerNormParams


@dataclass
class ParameterStore:
    """
    Every trainable tensor of a model, each held exactly once: the M_enc
    encoder blocks, the M_dec decoder blocks, embeddings, optional final
    layer norms and per-position Admin scales.
    """
    enc_blocks: List[EncoderBlock]
    dec_blocks: List[DecoderBlock]
    embedding: Tensor
    tgt_embedding: Optional[Tensor] = None
    output_projection: Optional[Tensor] = None
    output_bias: Optional[Tensor] = None
    enc_final_ln: Optional[LayerNormParams] = None
    dec_final_ln: Optional[LayerNormParams] = None
    admin_scales: Dict[str, Tensor] = field(default_factory=dict)

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield "embedding", self.embedding
        for name in ("tgt_embedding", "output_projection", "output_bias"):
            tensor = getattr(self, name)
            if tensor is not None:
                yield name, tensor
        for index, block in enumerate(self.enc_blocks, start=1):
            yield from block.named_parameters(f"enc.block{index}.")
        for index, block in enumerate(self.dec_blocks, start=1):
            yield from block.named_parameters(f"dec.block{index}.")
        if self.enc_final_ln is not None:
            yield from self.enc_final_ln.named_parameters("enc.final_ln.")
        if self.dec_final_ln is not None:
            yield from self.dec_final_ln.named_parameters("dec.final_ln.")
        for name in sorted(self.admin_scales):
            yield name, self.admin_scales[name]

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def count(self) -> int:
        return sum(t.size for _, t in self.named_parameters())

    def zero_grad(self):
        for _, tensor in self.named_parameters():
            tensor.zero_grad()

    def copy(self) -> "ParameterStore":
        return copy.deepcopy(self)


def admin_scale_name(stack: str, layer: int, branch: str) -> str:
    return f"admin.{stack}.layer{layer}.{branch}"


class ParameterFactory:
    """
    Creates named parameters, each from its own seed stream so that a tensor's
    initial value depends only on (seed, name).
    """

    def __init__(self, seed: int, dtype):
        self._seed = seed
        self._dtype = dtype

    def _param(self, name: str, data: np.ndarray) -> Tensor:
        return Tensor(data.astype(self._dtype), requires_grad=True, name=name)

    def xavier(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        rng = generator_for(self._seed, "init", name)
        return self._param(name, rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    def normal(self, name: str, shape: Tuple[int, ...], std: float) -> Tensor:
        rng = generator_for(self._seed, "init", name)
        return self._param(name, rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, width: int) -> Tensor:
        return self._param(name, np.zeros(width))

    def ones(self, name: str, width: int) -> Tensor:
        return self._param(name, np.ones(width))

    def attention(self, prefix: str, d: int) -> AttentionParams:
        return AttentionParams(**{
            part: (self.xavier(f"{prefix}{part}", d, d) if part.endswith("weight") else self.zeros(f"{prefix}{part}", d))
            for part in ("q_weight", "q_bias", "k_weight", "k_bias", "v_weight", "v_bias", "o_weight", "o_bias")
        })

    def feed_forward(self, prefix: str, d: int, d_ff: int) -> FeedForwardParams:
        return FeedForwardParams(
            w1=self.xavier(f"{prefix}w1", d, d_ff),
            b1=self.zeros(f"{prefix}b1", d_ff),
            w2=self.xavier(f"{prefix}w2", d_ff, d),
            b2=self.zeros(f"{prefix}b2", d),
        )

    def layer_norm(self, prefix: str, d: int) -> LayerNormParams:
        return LayerNormParams(gain=self.ones(f"{prefix}gain", d), bias=self.zeros(f"{prefix}bias", d))

    def encoder_block(self, prefix: str, d: int, d_ff: int) -> EncoderBlock:
        return EncoderBlock(
            self_attn=self.attention(f"{prefix}self_attn.", d),
            ffn=self.feed_forward(f"{prefix}ffn.", d, d_ff),
            ln_self_attn=self.layer_norm(f"{prefix}ln_self_attn.", d),
            ln_ffn=self.layer_norm(f"{prefix}ln_ffn.", d),
        )

    def decoder_block(self, prefix: str, d: int, d_ff: int) -> DecoderBlock:
        return DecoderBlock(
            self_attn=self.attention(f"{prefix}self_attn.", d),
            cross_attn=self.attention(f"{prefix}cross_attn.", d),
            ffn=self.feed_forward(f"{prefix}ffn.", d, d_ff),
            ln_self_attn=self.layer_norm(f"{prefix}ln_self_attn.", d),
            ln_cross_attn=self.layer_norm(f"{prefix}ln_cross_attn.", d),
            ln_ffn=self.layer_norm(f"{prefix}ln_ffn.", d),
        )


def init_store(config: ModelConfig, seed: int, dtype=np.float32) -> ParameterStore:
    """
    Allocates M_enc + M_dec blocks plus embeddings. Weight matrices are
    Glorot-uniform, biases zero, LN gains one, embeddings N(0, d^-1/2).
    """
    d, d_ff, vocab = config.d_model, config.d_ff, config.vocab_size
    factory = ParameterFactory(seed, dtype)
    std = d ** -0.5

    store = ParameterStore(
        enc_blocks=[factory.encoder_block(f"enc.block{b}.", d, d_ff) for b in range(1, config.enc_blocks + 1)],
        dec_blocks=[factory.decoder_block(f"dec.block{b}.", d, d_ff) for b in range(1, config.dec_blocks + 1)],
        embedding=factory.normal("embedding", (vocab, d), std),
    )
    if not config.tie_embeddings:
        store.tgt_embedding = factory.normal("tgt_embedding", (vocab, d), std)
        store.output_projection = factory.normal("output_projection", (vocab, d), std)
        store.output_bias = factory.zeros("output_bias", vocab)
    if config.ln_placement is LNPlacement.PRE:
        store.enc_final_ln = factory.layer_norm("enc.final_ln.", d)
        store.dec_final_ln = factory.layer_norm("dec.final_ln.", d)
    if config.admin:
        for layer in range(1, config.enc_layers + 1):
            for branch in ENCODER_BRANCHES:
                name = admin_scale_name("enc", layer, branch)
                store.admin_scales[name] = factory.ones(name, d)
        for layer in range(1, config.dec_layers + 1):
            for branch in DECODER_BRANCHES:
                name = admin_scale_name("dec", layer, branch)
                store.admin_scales[name] = factory.ones(name, d)

    logger.info(f"Initialized {config.enc_blocks} encoder and {config.dec_blocks} decoder blocks "
                f"({store.count()} parameters)")
    return store
