import csv
import io
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..model import ModelConfig, build_model
from ..training import AbstractTask, RunReport, TrainConfig, check_task_fits, train_run
from .throughput import MIN_TRIAL_BATCHES, BenchResult, measure_throughput

logger = logging.getLogger(__name__)

CSV_HEADER = ["name", "strategy", "M", "N", "params", "tokens_per_s", "relative_speed"]

NamedConfig = Tuple[str, ModelConfig]


class UnknownBaselineError(KeyError):
    def __init__(self, baseline: str, names: Sequence[str]):
        super().__init__(f"Baseline {baseline!r} is not among the compared configs {list(names)}")
        self.baseline = baseline

    def __str__(self):
        return self.args[0]


def _check_task(configs: Sequence[NamedConfig], task: AbstractTask):
    for name, config in configs:
        check_task_fits(config, task, name)


def compare_configs(configs: Sequence[NamedConfig], baseline: str, tc: TrainConfig, task: AbstractTask,
                    trial_batches: int = MIN_TRIAL_BATCHES, trials: int = 3, warmup_batches: int = 2,
                    kernel_threads: Optional[int] = None) -> List[BenchResult]:
    """
    Measures every config in the given order, one at a time, then sets each
    relative_speed against the baseline's tokens/s.

    :raises UnknownBaselineError: baseline is not one of the config names.
    """
    names = [name for name, _ in configs]
    if baseline not in names:
        raise UnknownBaselineError(baseline, names)
    _check_task(configs, task)

    results = []
    for name, config in configs:
        model = build_model(config, seed=tc.seed, dtype=tc.precision.dtype)
        results.append(measure_throughput(model, tc, task, trial_batches, trials, warmup_batches, name=name,
                                          kernel_threads=kernel_threads))

    reference = results[names.index(baseline)].tokens_per_s
    for result in results:
        result.relative_speed = 1.0 if result.name == baseline else result.tokens_per_s / reference
    return results


def results_to_csv(results: Sequence[BenchResult], path: Optional[Union[str, Path]] = None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        writer.writerow([r.name, r.strategy, r.blocks, r.layers, r.params, f"{r.tokens_per_s:.6g}",
                         f"{r.relative_speed:.6g}"])
    text = buffer.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text


def time_to_nll(report: RunReport, target: float) -> Optional[float]:
    """First wallclock at which the report's valid NLL is at or below target; None if never."""
    for row in report.rows:
        if row.valid_nll <= target:
            return row.wallclock_s
    return None


@dataclass
class RaceResult:
    """
    Median wallclock, over seeds, for each config to reach the final valid NLL
    of the target config. None when a config missed the target in most seeds.
    """
    target: str
    target_nll: Dict[int, float] = field(default_factory=dict)
    times: Dict[str, Optional[float]] = field(default_factory=dict)
    reports: Dict[str, List[RunReport]] = field(default_factory=dict)


def efficiency_race(configs: Sequence[NamedConfig], target: str, task: AbstractTask, tc: TrainConfig,
                    seeds: Sequence[int] = (1, 2, 3), prefetch_depth: int = 4) -> RaceResult:
    names = [name for name, _ in configs]
    if target not in names:
        raise UnknownBaselineError(target, names)
    _check_task(configs, task)

    race = RaceResult(target=target, reports={name: [] for name in names})
    per_seed: Dict[str, List[Optional[float]]] = {name: [] for name in names}
    for seed in seeds:
        run_tc = tc.model_copy(update={"seed": seed})
        reports = {}
        for name, config in configs:
            model = build_model(config, seed=seed, dtype=run_tc.precision.dtype)
            reports[name] = train_run(model, task, run_tc, name=f"{name}-seed{seed}", prefetch_depth=prefetch_depth)
            race.reports[name].append(reports[name])
        goal = reports[target].final_valid_nll
        race.target_nll[seed] = goal
        for name in names:
            per_seed[name].append(time_to_nll(reports[name], goal))

    for name, times in per_seed.items():
        middle = statistics.median(math.inf if t is None else t for t in times)
        race.times[name] = None if math.isinf(middle) else middle
        logger.info(f"{name}: median time to target NLL {race.times[name]}")
    return race
