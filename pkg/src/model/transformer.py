import copy
import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..share_plan import LayerAssignment
from ..tensor_core import Tensor, ops
from ..utils.seeds import derive_seed
from .model_config import LNPlacement, ModelConfig
from .parameter_store import (
    AttentionParams,
    FeedForwardParams,
    LayerNormParams,
    ParameterStore,
    admin_scale_name,
    init_store,
)

logger = logging.getLogger(__name__)


class TokenRangeError(ValueError):
    pass


class SequenceLengthError(ValueError):
    pass


def sinusoidal_positions(length: int, d_model: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d_model, 2) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: d_model // 2])
    return table


class Model:
    """
    Encoder-decoder whose layer i runs with block `assignment.blocks[i]` of
    its stack. Layers hold no weights of their own; they are views onto the
    store through the assignment.
    """

    def __init__(self, config: ModelConfig, store: ParameterStore,
                 enc_assignment: LayerAssignment, dec_assignment: LayerAssignment,
                 seed: int = 0):
        self.config = config
        self.store = store
        self.enc_assignment = enc_assignment
        self.dec_assignment = dec_assignment
        self.seed = seed
        self._dropout_seed = derive_seed(seed, "dropout")
        self._positions = sinusoidal_positions(config.max_len, config.d_model)
        self._profile: Optional[Dict[str, float]] = None

    @property
    def dtype(self):
        return self.store.embedding.dtype

    def named_parameters(self):
        return self.store.named_parameters()

    def parameter_count(self) -> int:
        return self.store.count()

    def zero_grad(self):
        self.store.zero_grad()

    def encoder_layer_block(self, layer: int):
        return self.store.enc_blocks[self.enc_assignment.block_of(layer) - 1]

    def decoder_layer_block(self, layer: int):
        return self.store.dec_blocks[self.dec_assignment.block_of(layer) - 1]

    # --- building blocks ---

    def _dropout(self, x: Tensor, site: str, step: Optional[int]) -> Tensor:
        if step is None or self.config.dropout <= 0.0:
            return x
        return ops.dropout(x, self.config.dropout, ops.site_key(self._dropout_seed, step, site))

    def _check_tokens(self, tokens: np.ndarray, role: str) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 2:
            raise TokenRangeError(f"{role} tokens must be a [batch x length] array, got shape {tokens.shape}")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.config.vocab_size):
            raise TokenRangeError(f"{role} token ids must lie in [0, {self.config.vocab_size})")
        if tokens.shape[1] > self.config.max_len:
            raise SequenceLengthError(f"{role} length {tokens.shape[1]} exceeds max_len={self.config.max_len}")
        return tokens

    def _embed(self, table: Tensor, tokens: np.ndarray, site: str, step: Optional[int]) -> Tensor:
        batch, length = tokens.shape
        scaled = ops.scale(ops.embedding(table, tokens), math.sqrt(self.config.d_model))
        positions = np.broadcast_to(self._positions[:length], (batch, length, self.config.d_model))
        x = ops.add(scaled, Tensor(positions.astype(self.dtype)))
        return self._dropout(x, site, step)

    def _attention(self, params: AttentionParams, query_in: Tensor, memory: Tensor, mask: np.ndarray,
                   site: str, step: Optional[int]) -> Tensor:
        batch, q_len, d = query_in.shape
        k_len = memory.shape[1]
        heads, head_dim = self.config.n_heads, self.config.head_dim

        def split_heads(x: Tensor, length: int) -> Tensor:
            return ops.transpose(ops.reshape(x, (batch, length, heads, head_dim)), (0, 2, 1, 3))

        q = split_heads(ops.add_bias(ops.matmul(query_in, params.q_weight), params.q_bias), q_len)
        k = split_heads(ops.add_bias(ops.matmul(memory, params.k_weight), params.k_bias), k_len)
        v = split_heads(ops.add_bias(ops.matmul(memory, params.v_weight), params.v_bias), k_len)

        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
        probs = self._dropout(ops.softmax(scores, axis=-1, mask=mask), f"{site}.probs", step)
        context = ops.reshape(ops.transpose(ops.matmul(probs, v), (0, 2, 1, 3)), (batch, q_len, d))
        return ops.add_bias(ops.matmul(context, params.o_weight), params.o_bias)

    def _feed_forward(self, params: FeedForwardParams, x: Tensor, site: str, step: Optional[int]) -> Tensor:
        hidden = ops.relu(ops.add_bias(ops.matmul(x, params.w1), params.b1))
        hidden = self._dropout(hidden, f"{site}.hidden", step)
        return ops.add_bias(ops.matmul(hidden, params.w2), params.b2)

    def _residual(self, x: Tensor, branch: Callable[[Tensor], Tensor], ln: LayerNormParams,
                  admin_name: str, site: str, step: Optional[int]) -> Tensor:
        """
        Post-LN: LN(x + w * f(x)).  Pre-LN: x + w * f(LN(x)).
        w is the position's Admin scale, absent when admin is off.
        """
        pre = self.config.ln_placement is LNPlacement.PRE
        out = branch(ops.layer_norm(x, ln.gain, ln.bias) if pre else x)
        if self._profile is not None:
            self._profile[admin_name] = float(np.var(out.data))
        out = self._dropout(out, site, step)
        if self.config.admin:
            out = ops.mul_last(out, self.store.admin_scales[admin_name])
        summed = ops.add(x, out)
        return summed if pre else ops.layer_norm(summed, ln.gain, ln.bias)

    # --- stacks ---

    def encode(self, src_tokens: np.ndarray, step: Optional[int] = None) -> Tuple[Tensor, np.ndarray]:
        """Returns the encoder output and the source key mask [B x 1 x 1 x S]."""
        src_tokens = self._check_tokens(src_tokens, "source")
        src_mask = (src_tokens != self.config.pad_id)[:, None, None, :]
        x = self._embed(self.store.embedding, src_tokens, "enc.embed", step)

        for layer in range(1, self.config.enc_layers + 1):
            block = self.encoder_layer_block(layer)
            site = f"enc.layer{layer}"
            x = self._residual(
                x, lambda h: self._attention(block.self_attn, h, h, src_mask, f"{site}.self_attn", step),
                block.ln_self_attn, admin_scale_name("enc", layer, "self_attn"), f"{site}.self_attn.out", step)
            x = self._residual(
                x, lambda h: self._feed_forward(block.ffn, h, f"{site}.ffn", step),
                block.ln_ffn, admin_scale_name("enc", layer, "ffn"), f"{site}.ffn.out", step)

        if self.store.enc_final_ln is not None:
            x = ops.layer_norm(x, self.store.enc_final_ln.gain, self.store.enc_final_ln.bias)
        return x, src_mask

    def decode(self, memory: Tensor, src_mask: np.ndarray, tgt_tokens: np.ndarray,
               step: Optional[int] = None) -> Tensor:
        """Logits [B x T x V] for teacher-forced decoder input `tgt_tokens`."""
        tgt_tokens = self._check_tokens(tgt_tokens, "target")
        length = tgt_tokens.shape[1]
        causal = np.tril(np.ones((length, length), dtype=bool))[None, None, :, :]
        self_mask = causal & (tgt_tokens != self.config.pad_id)[:, None, None, :]
        table = self.store.tgt_embedding if self.store.tgt_embedding is not None else self.store.embedding
        x = self._embed(table, tgt_tokens, "dec.embed", step)

        for layer in range(1, self.config.dec_layers + 1):
            block = self.decoder_layer_block(layer)
            site = f"dec.layer{layer}"
            x = self._residual(
                x, lambda h: self._attention(block.self_attn, h, h, self_mask, f"{site}.self_attn", step),
                block.ln_self_attn, admin_scale_name("dec", layer, "self_attn"), f"{site}.self_attn.out", step)
            x = self._residual(
                x, lambda h: self._attention(block.cross_attn, h, memory, src_mask, f"{site}.cross_attn", step),
                block.ln_cross_attn, admin_scale_name("dec", layer, "cross_attn"), f"{site}.cross_attn.out", step)
            x = self._residual(
                x, lambda h: self._feed_forward(block.ffn, h, f"{site}.ffn", step),
                block.ln_ffn, admin_scale_name("dec", layer, "ffn"), f"{site}.ffn.out", step)

        if self.store.dec_final_ln is not None:
            x = ops.layer_norm(x, self.store.dec_final_ln.gain, self.store.dec_final_ln.bias)

        if self.store.output_projection is None:
            return ops.matmul(x, ops.transpose(self.store.embedding))
        return ops.add_bias(ops.matmul(x, ops.transpose(self.store.output_projection)), self.store.output_bias)

    def forward(self, src_tokens: np.ndarray, tgt_tokens: np.ndarray, step: Optional[int] = None) -> Tensor:
        """
        :param step: training step keying the dropout masks; None disables dropout.
        """
        memory, src_mask = self.encode(src_tokens, step)
        return self.decode(memory, src_mask, tgt_tokens, step)

    __call__ = forward


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """
    Allocates exactly M_enc + M_dec blocks and wires N_enc + N_dec layers onto
    them through the share plans.

    :raises SharePlanError: invalid (N, M, strategy) for a stack.
    :raises ModelConfigError: d_model not divisible by n_heads.
    """
    config.check()
    enc_assignment = config.encoder_assignment()
    dec_assignment = config.decoder_assignment()
    store = init_store(config, seed, dtype)
    logger.info(f"Built model: encoder plan {list(enc_assignment.blocks)}, decoder plan {list(dec_assignment.blocks)}")
    return Model(config, store, enc_assignment, dec_assignment, seed=seed)


def forward(model: Model, src_tokens: np.ndarray, tgt_tokens: np.ndarray, step: Optional[int] = None) -> Tensor:
    return model.forward(src_tokens, tgt_tokens, step)


def _renamed_copy(group, prefix: str):
    clone = copy.deepcopy(group)
    for name, tensor in clone.named_parameters(prefix):
        tensor.name = name
        tensor.grad = None
    return clone


def clone_untied(model: Model) -> Model:
    """
    Value copy with one block per layer position: layer i of the clone holds
    the weights of the block layer i uses in `model`. Forward outputs are
    identical; the clone's per-layer gradients sum to the tied gradients.
    """
    config = model.config.untied_variant()
    source = model.store
    store = ParameterStore(
        enc_blocks=[_renamed_copy(model.encoder_layer_block(layer), f"enc.block{layer}.")
                    for layer in range(1, config.enc_layers + 1)],
        dec_blocks=[_renamed_copy(model.decoder_layer_block(layer), f"dec.block{layer}.")
                    for layer in range(1, config.dec_layers + 1)],
        embedding=copy.deepcopy(source.embedding),
        tgt_embedding=copy.deepcopy(source.tgt_embedding),
        output_projection=copy.deepcopy(source.output_projection),
        output_bias=copy.deepcopy(source.output_bias),
        enc_final_ln=copy.deepcopy(source.enc_final_ln),
        dec_final_ln=copy.deepcopy(source.dec_final_ln),
        admin_scales={name: copy.deepcopy(t) for name, t in source.admin_scales.items()},
    )
    for _, tensor in store.named_parameters():
        tensor.grad = None
    return Model(config, store, config.encoder_assignment(), config.decoder_assignment(), seed=model.seed)


def per_block_gradient_sums(model: Model, clone: Model) -> Dict[str, np.ndarray]:
    """
    For every block parameter of `model`, the sum of the clone's gradients at
    the layer positions that use that block. Keys match model parameter names.
    """
    sums: Dict[str, np.ndarray] = {}
    for stack, assignment, blocks in (("enc", model.enc_assignment, clone.store.enc_blocks),
                                      ("dec", model.dec_assignment, clone.store.dec_blocks)):
        for layer, block_index in enumerate(assignment.blocks, start=1):
            for name, tensor in blocks[layer - 1].named_parameters(f"{stack}.block{block_index}."):
                grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
                sums[name] = sums[name] + grad if name in sums else grad.copy()
    return sums


def probe_layer_outputs(model: Model, x: np.ndarray, stack: str = "enc") -> List[np.ndarray]:
    """
    Applies each layer of one stack to the same input `x` [B x L x d] with no
    masking, returning per-layer outputs. Layers that share a block return
    identical arrays.
    """
    inputs = Tensor(np.asarray(x, dtype=model.dtype))
    keep = np.ones((x.shape[0], 1, 1, x.shape[1]), dtype=bool)
    outputs = []
    layers = model.config.enc_layers if stack == "enc" else model.config.dec_layers
    for layer in range(1, layers + 1):
        if stack == "enc":
            block = model.encoder_layer_block(layer)
            h = model._residual(inputs, lambda t: model._attention(block.self_attn, t, t, keep, "probe", None),
                                block.ln_self_attn, admin_scale_name("enc", layer, "self_attn"), "probe", None)
            h = model._residual(h, lambda t: model._feed_forward(block.ffn, t, "probe", None),
                                block.ln_ffn, admin_scale_name("enc", layer, "ffn"), "probe", None)
        else:
            block = model.decoder_layer_block(layer)
            h = model._residual(inputs, lambda t: model._attention(block.self_attn, t, t, keep, "probe", None),
                                block.ln_self_attn, admin_scale_name("dec", layer, "self_attn"), "probe", None)
            h = model._residual(h, lambda t: model._attention(block.cross_attn, t, inputs, keep, "probe", None),
                                block.ln_cross_attn, admin_scale_name("dec", layer, "cross_attn"), "probe", None)
            h = model._residual(h, lambda t: model._feed_forward(block.ffn, t, "probe", None),
                                block.ln_ffn, admin_scale_name("dec", layer, "ffn"), "probe", None)
        outputs.append(h.data)
    return outputs
