from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class Precision(str, Enum):
    FLOAT32 = "float32"
    FLOAT64 = "float64"

    @property
    def dtype(self):
        return np.float32 if self is Precision.FLOAT32 else np.float64


class TrainConfig(BaseModel):
    """
    Optimization hyperparameters. Defaults follow the base Transformer recipe:
    Adam(0.9, 0.98, 1e-9), label smoothing 0.1, inverse-square-root warmup.
    batch_size counts sequence pairs per step.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr_scale: float = Field(1.0, gt=0.0)
    warmup_steps: int = Field(4000, ge=1)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.98, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-9, gt=0.0)
    label_smoothing: float = Field(0.1, ge=0.0, lt=1.0)
    batch_size: int = Field(32, ge=1)
    max_steps: int = Field(1000, ge=1)
    eval_interval: int = Field(100, ge=1)
    valid_batches: int = Field(4, ge=1)
    seed: int = 1
    precision: Precision = Precision.FLOAT32
    deterministic: bool = True
    clip_norm: Optional[float] = Field(None, gt=0.0)

    @field_validator("precision", mode="before")
    @classmethod
    def _parse_precision(cls, value):
        if isinstance(value, Precision):
            return value
        text = str(value).strip().lower()
        return {"32": Precision.FLOAT32, "64": Precision.FLOAT64}.get(text, text)

    @field_validator("clip_norm", mode="before")
    @classmethod
    def _parse_clip(cls, value):
        if value is None or str(value).strip().lower() in ("", "none", "off", "0"):
            return None
        return value
