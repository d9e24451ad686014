"""
Wiring between a resolved preset and the objects each command runs.
Everything random in a run derives from preset.train.seed, which the
command line may override.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from . import config
from .bench import BenchResult, compare_configs, results_to_csv
from .model import Model, build_model, load_checkpoint, save_checkpoint
from .share_plan import assignment_to_dict
from .training import (
    AbstractTask,
    RunReport,
    build_task,
    evaluate_nll,
    make_batches,
    sequence_accuracy,
    stream_seed,
    train_run,
)
from .utils.manifest import machine_descriptor, write_manifest
from .utils.presets import Preset, load_preset

logger = logging.getLogger(__name__)

REPORT_FILE = "report.csv"
CHECKPOINT_DIR = "checkpoint"
BENCH_FILE = "bench.csv"
CHART_FILE = "nll_chart.svg"


def load_run_preset(name: Union[str, Path], seed: Optional[int] = None,
                    deterministic: Optional[bool] = None) -> Preset:
    """Loads a preset from LAB_PRESETS_DIR and applies command-line overrides."""
    preset = load_preset(name, config.LAB_PRESETS_DIR, default_seed=config.LAB_DEFAULT_SEED)
    updates: Dict[str, Any] = {}
    if seed is not None:
        updates["seed"] = seed
    if deterministic is not None:
        updates["deterministic"] = deterministic
    if updates:
        preset.train = preset.train.model_copy(update=updates)
    return preset


def make_model(preset: Preset) -> Model:
    return build_model(preset.model, seed=preset.train.seed, dtype=preset.train.precision.dtype)


def make_task(preset: Preset) -> AbstractTask:
    """File paths inside [task] are relative to the preset file."""
    return build_task(preset.task, base_dir=str(Path(preset.path).parent))


def default_out_dir(preset: Preset, command: str) -> Path:
    return Path(config.LAB_OUT_DIR) / f"{preset.name}-{command}-seed{preset.train.seed}"


def run_manifest(preset: Preset, command: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Resolved config plus everything needed to repeat the run bit for bit."""
    payload = {
        "command": command,
        "seed": preset.train.seed,
        "deterministic": preset.train.deterministic,
        "config": preset.resolved(),
        "enc_assignment": assignment_to_dict(preset.model.encoder_assignment()),
        "dec_assignment": assignment_to_dict(preset.model.decoder_assignment()),
        "machine": machine_descriptor(),
    }
    payload.update(extra or {})
    return payload


@dataclass
class TrainOutcome:
    report: RunReport
    model: Model
    out_dir: Path


def train_preset(preset: Preset, out_dir: Path) -> TrainOutcome:
    """Trains, then writes the report CSV, the final checkpoint and the manifest."""
    model = make_model(preset)
    task = make_task(preset)
    report = train_run(model, task, preset.train, name=preset.name,
                       prefetch_depth=config.LAB_PREFETCH_DEPTH,
                       kernel_threads=config.LAB_BENCH_THREADS or None)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / REPORT_FILE)
    save_checkpoint(model, out_dir / CHECKPOINT_DIR, step=len(report.step_losses))
    write_manifest(out_dir, run_manifest(preset, "train", {
        "report": REPORT_FILE,
        "checkpoint": CHECKPOINT_DIR,
        "diverged_at": report.diverged_at,
        "final_valid_nll": report.final_valid_nll,
    }))
    return TrainOutcome(report=report, model=model, out_dir=out_dir)


@dataclass
class EvalSummary:
    accuracy: float
    valid_nll: float
    samples: int

    def line(self) -> str:
        return f"accuracy={self.accuracy:.4f} valid_nll={self.valid_nll:.6g} samples={self.samples}"


def evaluate_checkpoint(preset: Preset, checkpoint_dir: Union[str, Path],
                        samples: Optional[int] = None) -> Tuple[EvalSummary, Model]:
    """Held-out sequence accuracy and validation NLL of a saved model on the preset's task."""
    model = load_checkpoint(checkpoint_dir)
    task = make_task(preset)
    samples = samples or config.LAB_EVAL_SAMPLES
    valid = make_batches(task, preset.train.valid_batches, preset.train.batch_size,
                         stream_seed(preset.train.seed, "valid"))
    summary = EvalSummary(accuracy=sequence_accuracy(model, task, samples, seed=preset.train.seed),
                          valid_nll=evaluate_nll(model, valid), samples=samples)
    return summary, model


@dataclass
class BenchOutcome:
    results: List[BenchResult]
    csv_text: str
    reports: List[RunReport] = field(default_factory=list)


def bench_preset(preset: Preset, out_dir: Path) -> BenchOutcome:
    """
    Throughput comparison of every preset named in [bench] presets, measured
    with this preset's [train] and [task] settings. With `chart = true` each
    config is also trained for `train_steps` steps and the NLL curves are
    drawn into one SVG.
    """
    bench = preset.bench
    configs = [(name, load_preset(name, config.LAB_PRESETS_DIR).model) for name in bench.presets]
    task = make_task(preset)
    results = compare_configs(configs, bench.baseline, preset.train, task, bench.trial_batches, bench.trials,
                              bench.warmup_batches, kernel_threads=config.LAB_BENCH_THREADS or None)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_text = results_to_csv(results, out_dir / BENCH_FILE)
    outcome = BenchOutcome(results=results, csv_text=csv_text)

    if bench.chart:
        from .bench.chart import render_nll_chart
        curve_tc = preset.train.model_copy(update={"max_steps": bench.train_steps})
        for name, model_config in configs:
            model = build_model(model_config, seed=curve_tc.seed, dtype=curve_tc.precision.dtype)
            report = train_run(model, task, curve_tc, name=name, prefetch_depth=config.LAB_PREFETCH_DEPTH)
            report.to_csv(out_dir / f"{name}.{REPORT_FILE}")
            outcome.reports.append(report)
        render_nll_chart(outcome.reports, out_dir / CHART_FILE)

    write_manifest(out_dir, run_manifest(preset, "bench", {
        "compared": {name: model_config.model_dump(mode="json") for name, model_config in configs},
        "results": BENCH_FILE,
        "chart": CHART_FILE if bench.chart else None,
    }))
    return outcome
