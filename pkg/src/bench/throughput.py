import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..model import Model
from ..tensor_core.kernels import kernel_mode
from ..training import AbstractTask, TrainConfig, Trainer, TrainingDiverged, make_batches, stream_seed
from ..utils.manifest import machine_descriptor

logger = logging.getLogger(__name__)

MIN_TRIAL_BATCHES = 10


class TrialAborted(RuntimeError):
    """Every trial of a measurement diverged."""
    pass


class BenchConfig(BaseModel):
    """`[bench]` section of a preset."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    presets: List[str] = Field(default_factory=list)
    baseline: str = ""
    trial_batches: int = Field(10, ge=MIN_TRIAL_BATCHES)
    trials: int = Field(3, ge=1)
    warmup_batches: int = Field(2, ge=0)
    chart: bool = False
    train_steps: int = Field(200, ge=1)

    @field_validator("presets", mode="before")
    @classmethod
    def _split_presets(cls, value):
        if isinstance(value, str):
            return [name.strip() for name in value.split(",") if name.strip()]
        return value


@dataclass
class BenchResult:
    name: str
    strategy: str
    blocks: int
    layers: int
    params: int
    tokens_per_s: float
    relative_speed: float = 1.0
    trials: int = 0
    aborted_trials: int = 0
    warmup_batches: int = 0
    trial_rates: List[float] = field(default_factory=list)
    machine: Dict[str, Any] = field(default_factory=dict)


def measure_throughput(model: Model, tc: TrainConfig, task: AbstractTask, trial_batches: int = MIN_TRIAL_BATCHES,
                       trials: int = 3, warmup_batches: int = 2, name: str = "",
                       kernel_threads: Optional[int] = None) -> BenchResult:
    """
    Tokens per second over full training steps (forward, backward, Adam
    update). Batches are built before timing starts; `warmup_batches` steps
    run untimed first. The reported rate is the median over trials.

    :raises ValueError: trial_batches below the minimum.
    :raises TrialAborted: every trial diverged.
    """
    if trial_batches < MIN_TRIAL_BATCHES:
        raise ValueError(f"trial_batches must be at least {MIN_TRIAL_BATCHES}, got {trial_batches}")

    trainer = Trainer(model, task, tc, name=name)
    trainer.prepare()
    total = warmup_batches + trials * trial_batches
    batches = make_batches(task, total, tc.batch_size, stream_seed(tc.seed, "bench"))
    pad_id = model.config.pad_id
    rates: List[float] = []
    aborted = 0
    step = 0

    with kernel_mode(tc.deterministic, kernel_threads):
        for batch in batches[:warmup_batches]:
            step += 1
            try:
                trainer.train_step(batch, step)
            except TrainingDiverged as e:
                logger.warning(f"{name}: {e} during warmup")
                break

        for trial in range(trials):
            chunk = batches[warmup_batches + trial * trial_batches: warmup_batches + (trial + 1) * trial_batches]
            tokens = 0
            started = time.perf_counter()
            try:
                for batch in chunk:
                    step += 1
                    trainer.train_step(batch, step)
                    tokens += batch.target_tokens(pad_id)
            except TrainingDiverged as e:
                aborted += 1
                logger.warning(f"{name}: trial {trial + 1} aborted, {e}")
                continue
            rates.append(tokens / (time.perf_counter() - started))

    if not rates:
        raise TrialAborted(f"{name}: all {trials} trials diverged")

    result = BenchResult(
        name=name,
        strategy=model.config.strategy.value,
        blocks=model.config.enc_blocks,
        layers=model.config.enc_layers,
        params=model.parameter_count(),
        tokens_per_s=statistics.median(rates),
        trials=trials,
        aborted_trials=aborted,
        warmup_batches=warmup_batches,
        trial_rates=rates,
        machine=machine_descriptor(),
    )
    logger.info(f"{name}: {result.tokens_per_s:.0f} tokens/s (median of {len(rates)} trials)")
    return result
