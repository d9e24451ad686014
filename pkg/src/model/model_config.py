from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..share_plan import LayerAssignment, ShareStrategy, build_assignment


class ModelConfigError(ValueError):
    pass


class LNPlacement(str, Enum):
    POST = "post"
    PRE = "pre"


class ModelConfig(BaseModel):
    """
    Architecture hyperparameters. enc_blocks/dec_blocks are M for each stack,
    enc_layers/dec_layers are N.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    d_model: int = Field(512, ge=1)
    n_heads: int = Field(8, ge=1)
    d_ff: int = Field(2048, ge=1)
    vocab_size: int = Field(33000, ge=4)
    enc_layers: int = Field(6, ge=1)
    dec_layers: int = Field(6, ge=1)
    enc_blocks: int = Field(6, ge=1)
    dec_blocks: int = Field(6, ge=1)
    strategy: ShareStrategy = ShareStrategy.CYCLE
    ln_placement: LNPlacement = LNPlacement.POST
    admin: bool = False
    tie_embeddings: bool = True
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    max_len: int = Field(256, ge=1)
    pad_id: int = Field(0, ge=0)

    @field_validator("strategy", mode="before")
    @classmethod
    def _parse_strategy(cls, value):
        return ShareStrategy.parse(value)

    @field_validator("ln_placement", mode="before")
    @classmethod
    def _parse_placement(cls, value):
        return LNPlacement(str(value).strip().lower()) if not isinstance(value, LNPlacement) else value

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def check(self):
        """
        Cross-field validation: head split and both share plans.

        :raises ModelConfigError: d_model not divisible by n_heads, pad id outside the vocabulary.
        :raises SharePlanError: invalid (N, M, strategy) for either stack.
        """
        if self.d_model % self.n_heads != 0:
            raise ModelConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.pad_id >= self.vocab_size:
            raise ModelConfigError(f"pad_id={self.pad_id} is outside the vocabulary of {self.vocab_size}")
        self.encoder_assignment()
        self.decoder_assignment()

    def encoder_assignment(self) -> LayerAssignment:
        return build_assignment(self.enc_layers, self.enc_blocks, self.strategy)

    def decoder_assignment(self) -> LayerAssignment:
        return build_assignment(self.dec_layers, self.dec_blocks, self.strategy)

    def untied_variant(self) -> "ModelConfig":
        """Same architecture with one block per layer position."""
        return self.model_copy(update={"enc_blocks": self.enc_layers, "dec_blocks": self.dec_layers})
