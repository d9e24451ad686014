from dotenv import load_dotenv
import functools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click

load_dotenv()

from src import config, services
from src.bench import TrialAborted, UnknownBaselineError
from src.model import CheckpointError, ModelConfigError, param_breakdown, param_count
from src.share_plan import SharePlanError, ShareStrategy, assignment_to_json, build_assignment, render_plan
from src.training import DataFileError, TaskMismatchError
from src.utils.manifest import read_manifest, write_manifest
from src.utils.presets import PresetError, preset_from_resolved

if config.APP_ENV == 'prod':
    log_level = logging.WARNING
    log_level_name = 'WARNING'
else:
    # dev
    log_level = logging.INFO
    log_level_name = 'INFO'

logging.basicConfig(level=log_level, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 2
EXIT_DIVERGED = 3

CONFIG_ERRORS = (PresetError, SharePlanError, ModelConfigError, CheckpointError, UnknownBaselineError,
                 DataFileError, TaskMismatchError, FileNotFoundError)


@dataclass
class RunOptions:
    config_path: Optional[str]
    seed: Optional[int]
    out: Optional[str]
    deterministic: Optional[bool]

    def preset(self):
        if not self.config_path:
            raise click.UsageError("this command needs --config")
        return services.load_run_preset(self.config_path, self.seed, self.deterministic)

    def out_dir(self, preset, command: str) -> Path:
        return Path(self.out) if self.out else services.default_out_dir(preset, command)


def exit_codes(command):
    """Maps configuration-type failures to exit code 2."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except CONFIG_ERRORS as e:
            click.echo(f"error: {e}", err=True)
            raise click.exceptions.Exit(EXIT_CONFIG_ERROR)
    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Preset name (looked up in LAB_PRESETS_DIR) or path.")
@click.option("--seed", type=int, default=None, help="Root seed; overrides [train] seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--deterministic/--no-deterministic", default=None,
              help="Single-threaded kernels and bitwise-repeatable runs.")
@click.pass_context
def cli(ctx, config_path, seed, out, deterministic):
    """Layer-sharing Transformer lab: share plans, parameter counts, training and benchmarks."""
    logger.info(f"Logging level set to {log_level_name} based on APP_ENV='{config.APP_ENV}'")
    ctx.obj = RunOptions(config_path=config_path, seed=seed, out=out, deterministic=deterministic)


@cli.command()
@click.option("--layers", "-n", type=int, required=True, help="Total layers N.")
@click.option("--blocks", "-m", type=int, required=True, help="Independent blocks M.")
@click.option("--strategy", "-s", type=str, required=True, help="sequence, cycle or cycle_rev.")
@click.option("--json", "json_only", is_flag=True, help="Print only the JSON export.")
@exit_codes
def plan(layers, blocks, strategy, json_only):
    """Print the layer-to-block plan for N layers over M blocks."""
    assignment = build_assignment(layers, blocks, ShareStrategy.parse(strategy))
    if not json_only:
        click.echo(render_plan(assignment))
    click.echo(assignment_to_json(assignment))


@cli.command()
@click.pass_obj
@exit_codes
def params(options: RunOptions):
    """Print the parameter breakdown of the --config preset."""
    preset = options.preset()
    preset.model.check()
    breakdown = param_breakdown(preset.model)
    total = param_count(preset.model)
    width = max(len(name) for name in breakdown)
    model = preset.model
    click.echo(f"preset {preset.name}: d_model={model.d_model} d_ff={model.d_ff} vocab={model.vocab_size} "
               f"strategy={model.strategy.value} encoder M={model.enc_blocks} N={model.enc_layers} "
               f"decoder M={model.dec_blocks} N={model.dec_layers}")
    for name, value in breakdown.items():
        click.echo(f"{name:<{width}}  {value:>14,d}")
    click.echo(f"{'total':<{width}}  {total:>14,d}")


@cli.command()
@click.option("--strict", is_flag=True, help="Exit with code 3 when the run diverges.")
@click.pass_obj
@exit_codes
def train(options: RunOptions, strict):
    """Train the --config preset; writes report.csv, checkpoint/ and manifest.yaml."""
    preset = options.preset()
    preset.model.check()
    outcome = services.train_preset(preset, options.out_dir(preset, "train"))
    report = outcome.report
    if report.diverged:
        click.echo(f"diverged at step {report.diverged_at}; report in {outcome.out_dir}", err=True)
        if strict:
            raise click.exceptions.Exit(EXIT_DIVERGED)
        return
    click.echo(f"steps={len(report.step_losses)} final_valid_nll={report.final_valid_nll:.6g} "
               f"out={outcome.out_dir}")


@cli.command(name="eval")
@click.option("--checkpoint", "checkpoint_dir", type=click.Path(file_okay=False), required=True,
              help="Checkpoint directory written by train.")
@click.option("--samples", type=int, default=None, help="Held-out samples (default LAB_EVAL_SAMPLES).")
@click.pass_obj
@exit_codes
def evaluate(options: RunOptions, checkpoint_dir, samples):
    """Greedy-decode accuracy and validation NLL of a checkpoint."""
    checkpoint_dir = Path(checkpoint_dir)
    if options.config_path:
        preset = options.preset()
    else:
        preset = _preset_from_run(checkpoint_dir, options)
    summary, _ = services.evaluate_checkpoint(preset, checkpoint_dir, samples)
    click.echo(summary.line())
    if options.out:
        write_manifest(Path(options.out), services.run_manifest(preset, "eval", {
            "checkpoint": str(checkpoint_dir),
            "accuracy": summary.accuracy,
            "valid_nll": None if math.isnan(summary.valid_nll) else summary.valid_nll,
            "samples": summary.samples,
        }))


def _preset_from_run(checkpoint_dir: Path, options: RunOptions):
    """Rebuilds the preset recorded in the manifest of the run that wrote the checkpoint."""
    try:
        manifest = read_manifest(checkpoint_dir.parent)
    except FileNotFoundError:
        raise click.UsageError(f"no run manifest next to {checkpoint_dir}; pass --config")
    resolved = manifest["config"]
    preset = preset_from_resolved(resolved, resolved.get("preset_path") or str(checkpoint_dir.parent))
    if options.seed is not None:
        preset.train = preset.train.model_copy(update={"seed": options.seed})
    return preset


@cli.command()
@click.pass_obj
@exit_codes
def bench(options: RunOptions):
    """Throughput comparison of the presets listed in [bench]; writes bench.csv (and nll_chart.svg)."""
    preset = options.preset()
    out_dir = options.out_dir(preset, "bench")
    try:
        outcome = services.bench_preset(preset, out_dir)
    except TrialAborted as e:
        logger.error(f"Benchmark aborted: {e}", exc_info=True)
        raise click.exceptions.Exit(EXIT_DIVERGED)
    click.echo(outcome.csv_text, nl=False)


if __name__ == "__main__":
    cli()
