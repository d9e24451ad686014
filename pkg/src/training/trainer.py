import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

from ..model import Model, ModelConfig, admin_profile_init
from ..tensor_core import Tensor, backward, cross_entropy_label_smoothed, no_grad, ops
from ..tensor_core.kernels import kernel_mode
from .optimizer import Adam, NonFiniteGradientError, lr_schedule
from .prefetch import BatchPrefetcher
from .tasks import AbstractTask, Batch, make_batch, make_batches, stream_seed
from .train_config import TrainConfig

logger = logging.getLogger(__name__)

CSV_HEADER = ["step", "wallclock_s", "train_loss", "valid_nll", "tokens_per_s"]


class TaskMismatchError(ValueError):
    pass


def check_task_fits(config: ModelConfig, task: AbstractTask, name: str = "model"):
    """:raises TaskMismatchError: vocabulary size or pad id differ."""
    if task.vocab_size != config.vocab_size:
        raise TaskMismatchError(f"{name}: task vocabulary {task.vocab_size} != model vocabulary {config.vocab_size}")
    if task.specials.pad != config.pad_id:
        raise TaskMismatchError(f"{name}: task pad id {task.specials.pad} != model pad_id {config.pad_id}")


class TrainingDiverged(Exception):
    """Raised inside a run when the loss or a gradient turns non-finite."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"Training diverged at step {step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass
class ReportRow:
    step: int
    wallclock_s: float
    train_loss: float
    valid_nll: float
    tokens_per_s: float


def _fmt(value: float) -> str:
    return f"{value:.6g}"


@dataclass
class RunReport:
    """
    NLL-vs-wallclock record of one run. `step_losses` holds every training
    loss at full precision; rows are written at each evaluation.
    A run that diverged ends with a row whose losses are NaN.
    """
    name: str = ""
    rows: List[ReportRow] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    diverged_at: Optional[int] = None

    def append(self, row: ReportRow):
        if self.rows:
            last = self.rows[-1]
            if row.step <= last.step:
                raise ValueError(f"Report steps must increase: {row.step} after {last.step}")
            if row.wallclock_s < last.wallclock_s:
                raise ValueError(f"Report wallclock went backwards at step {row.step}")
        self.rows.append(row)

    @property
    def final_valid_nll(self) -> float:
        finite = [r.valid_nll for r in self.rows if math.isfinite(r.valid_nll)]
        return finite[-1] if finite else float("nan")

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([row.step, _fmt(row.wallclock_s), _fmt(row.train_loss),
                             _fmt(row.valid_nll), _fmt(row.tokens_per_s)])
        text = buffer.getvalue()
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, source: Union[str, Path], name: str = "") -> "RunReport":
        """Reads a report from a path or from CSV text."""
        text = str(source)
        if "\n" not in text:
            path = Path(text)
            text = path.read_text(encoding="utf-8")
            name = name or path.stem
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"Unexpected report header {reader.fieldnames}")
        report = cls(name=name)
        for record in reader:
            report.append(ReportRow(step=int(record["step"]), wallclock_s=float(record["wallclock_s"]),
                                    train_loss=float(record["train_loss"]), valid_nll=float(record["valid_nll"]),
                                    tokens_per_s=float(record["tokens_per_s"])))
        if report.rows and math.isnan(report.rows[-1].train_loss):
            report.diverged_at = report.rows[-1].step
        return report


def batch_loss(model: Model, batch: Batch, smoothing: float, step: Optional[int]) -> Tensor:
    """Label-smoothed cross-entropy over the non-pad target positions of a batch."""
    logits = model.forward(batch.src, batch.tgt_in, step=step)
    rows, length, vocab = logits.shape
    flat = ops.reshape(logits, (rows * length, vocab))
    return cross_entropy_label_smoothed(flat, batch.tgt_out.reshape(-1), smoothing, pad_id=model.config.pad_id)


def evaluate_nll(model: Model, batches: Sequence[Batch]) -> float:
    """Per-token NLL (no smoothing, no dropout) averaged over every non-pad target in `batches`."""
    total, tokens = 0.0, 0
    with no_grad():
        for batch in batches:
            count = batch.target_tokens(model.config.pad_id)
            if count == 0:
                continue
            total += float(batch_loss(model, batch, 0.0, step=None).item()) * count
            tokens += count
    return total / tokens if tokens else float("nan")


class Trainer:
    """
    Owns the model and optimizer for one run. Batches come from a producer
    thread; batch b of the training stream is a pure function of (seed, b),
    so the order and content never depend on queue timing.
    """

    def __init__(self, model: Model, task: AbstractTask, config: TrainConfig, name: str = "",
                 prefetch_depth: int = 4, kernel_threads: Optional[int] = None):
        check_task_fits(model.config, task, name or "model")
        self.model = model
        self.task = task
        self.config = config
        self.name = name
        self._prefetch_depth = prefetch_depth
        self._kernel_threads = kernel_threads
        self._optimizer = Adam(model.named_parameters(), config.beta1, config.beta2, config.adam_eps,
                               clip_norm=config.clip_norm)
        self._train_seed = stream_seed(config.seed, "train")
        self._valid_batches = make_batches(task, config.valid_batches, config.batch_size,
                                           stream_seed(config.seed, "valid"))

    @property
    def optimizer(self) -> Adam:
        return self._optimizer

    def _produce(self, index: int) -> Batch:
        return make_batch(self.task, index, self.config.batch_size, self._train_seed)

    def train_step(self, batch: Batch, step: int) -> float:
        """
        :raises TrainingDiverged: non-finite loss or gradient.
        """
        self._optimizer.zero_grad()
        loss = batch_loss(self.model, batch, self.config.label_smoothing, step=step)
        value = float(loss.item())
        if not math.isfinite(value):
            raise TrainingDiverged(step, f"loss is {value}")
        backward(loss)
        lr = lr_schedule(step, self.model.config.d_model, self.config.warmup_steps, self.config.lr_scale)
        try:
            self._optimizer.step(lr)
        except NonFiniteGradientError as e:
            raise TrainingDiverged(step, str(e)) from e
        return value

    def run(self) -> RunReport:
        tc = self.config
        report = RunReport(name=self.name)
        self.prepare()

        logger.info(f"Training {self.name or 'run'}: {tc.max_steps} steps, batch {tc.batch_size}, "
                    f"{self.model.parameter_count()} parameters")
        elapsed = 0.0
        window_loss, window_steps, window_tokens, window_time = 0.0, 0, 0, 0.0

        with kernel_mode(tc.deterministic, self._kernel_threads), \
                BatchPrefetcher(self._produce, tc.max_steps, self._prefetch_depth) as batches:
            for step, batch in enumerate(batches, start=1):
                started = time.perf_counter()
                try:
                    value = self.train_step(batch, step)
                except TrainingDiverged as e:
                    elapsed += time.perf_counter() - started
                    logger.warning(f"{e}; recording divergence and stopping")
                    rate = window_tokens / window_time if window_time > 0 else float("nan")
                    report.append(ReportRow(step, elapsed, float("nan"), float("nan"), rate))
                    report.step_losses.append(float("nan"))
                    report.diverged_at = step
                    return report
                spent = time.perf_counter() - started
                elapsed += spent
                window_time += spent
                window_loss += value
                window_steps += 1
                window_tokens += batch.target_tokens(self.model.config.pad_id)
                report.step_losses.append(value)

                if step % tc.eval_interval == 0 or step == tc.max_steps:
                    valid_nll = evaluate_nll(self.model, self._valid_batches)
                    rate = window_tokens / window_time if window_time > 0 else 0.0
                    report.append(ReportRow(step, elapsed, window_loss / window_steps, valid_nll, rate))
                    logger.info(f"step {step}: train_loss={window_loss / window_steps:.4f} "
                                f"valid_nll={valid_nll:.4f} tokens/s={rate:.0f}")
                    window_loss, window_steps, window_tokens, window_time = 0.0, 0, 0, 0.0
        return report

    def prepare(self):
        """Sets the Admin scales from a profiling batch; no-op for models without them."""
        if self.model.config.admin:
            admin_profile_init(self.model, *self._profile_tokens())

    def _profile_tokens(self):
        batch = make_batch(self.task, 0, self.config.batch_size, stream_seed(self.config.seed, "admin"))
        return batch.src, batch.tgt_in


def train_run(model: Model, task: AbstractTask, tc: TrainConfig, name: str = "", prefetch_depth: int = 4,
              kernel_threads: Optional[int] = None) -> RunReport:
    """
    Trains for tc.max_steps and evaluates validation NLL every tc.eval_interval
    steps with dropout off. Divergence ends the run early with a NaN row; it
    is not raised.
    """
    return Trainer(model, task, tc, name=name, prefetch_depth=prefetch_depth, kernel_threads=kernel_threads).run()
