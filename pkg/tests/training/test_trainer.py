import math

import numpy as np
import pytest

from src.model import build_model
from src.training import (
    FileTask,
    RunReport,
    SpecialIds,
    SynthTask,
    TaskKind,
    TaskMismatchError,
    TrainConfig,
    Trainer,
    evaluate_nll,
    make_batches,
    train_run,
)
from src.training.trainer import CSV_HEADER, ReportRow


def _task(vocab=11):
    return SynthTask(kind=TaskKind.COPY, vocab=vocab, min_len=2, max_len=5, seed=3)


def _train_config(**overrides):
    values = dict(lr_scale=0.5, warmup_steps=10, batch_size=4, max_steps=6, eval_interval=3, valid_batches=2,
                  seed=2, precision="float64", deterministic=True)
    values.update(overrides)
    return TrainConfig(**values)


def _run(micro_config, train_config=None, **model_overrides):
    tc = train_config or _train_config()
    model = build_model(micro_config(**model_overrides), seed=tc.seed, dtype=tc.precision.dtype)
    return train_run(model, _task(), tc, name="test"), model


def test_report_rows_at_each_evaluation(micro_config):
    report, _ = _run(micro_config)
    assert [row.step for row in report.rows] == [3, 6]
    assert len(report.step_losses) == 6
    assert not report.diverged
    assert report.rows[0].wallclock_s <= report.rows[1].wallclock_s
    assert all(math.isfinite(row.valid_nll) and row.tokens_per_s > 0 for row in report.rows)
    assert report.final_valid_nll == report.rows[-1].valid_nll


def test_final_step_is_always_evaluated(micro_config):
    report, _ = _run(micro_config, _train_config(max_steps=5, eval_interval=3))
    assert [row.step for row in report.rows] == [3, 5]


def test_deterministic_runs_repeat_exactly(micro_config):
    first, first_model = _run(micro_config, dropout=0.1)
    second, second_model = _run(micro_config, dropout=0.1)
    assert first.step_losses == second.step_losses
    for (name, a), (_, b) in zip(first_model.named_parameters(), second_model.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_seed_changes_the_run(micro_config):
    first, _ = _run(micro_config)
    second, _ = _run(micro_config, _train_config(seed=3))
    assert first.step_losses != second.step_losses


@pytest.mark.parametrize("strategy", ["sequence", "cycle_rev"])
def test_identity_plans_train_identically(micro_config, strategy):
    reference, _ = _run(micro_config, strategy="cycle", enc_blocks=4, dec_blocks=4)
    report, _ = _run(micro_config, strategy=strategy, enc_blocks=4, dec_blocks=4)
    assert report.step_losses == reference.step_losses


def test_divergence_is_recorded_not_raised(micro_config):
    tc = _train_config()
    model = build_model(micro_config(), seed=tc.seed, dtype=np.float64)
    model.store.embedding.data[4, 0] = np.nan
    report = train_run(model, _task(), tc)
    assert report.diverged_at == 1
    assert math.isnan(report.rows[-1].train_loss)
    assert math.isnan(report.step_losses[-1])
    assert RunReport.from_csv(report.to_csv()).diverged_at == 1


def test_admin_scales_are_profiled_before_training(micro_config):
    report, model = _run(micro_config, admin=True)
    assert not report.diverged
    assert model.store.admin_scales["admin.enc.layer4.ffn"].data[0] < 1.0
    assert model.store.admin_scales["admin.dec.layer4.ffn"].data[0] < 1.0


def test_evaluation_leaves_the_model_untouched(micro_config):
    model = build_model(micro_config(dropout=0.2), seed=1, dtype=np.float64)
    batches = make_batches(_task(), 2, 4, seed=9)
    before = {name: t.data.copy() for name, t in model.named_parameters()}
    first = evaluate_nll(model, batches)
    assert evaluate_nll(model, batches) == first
    for name, tensor in model.named_parameters():
        np.testing.assert_array_equal(tensor.data, before[name])
        assert tensor.grad is None
    assert 0.0 < first < 2 * math.log(11)


def test_train_step_returns_loss(micro_config):
    tc = _train_config()
    model = build_model(micro_config(), seed=1, dtype=np.float64)
    trainer = Trainer(model, _task(), tc)
    batch = make_batches(_task(), 1, 4, seed=1)[0]
    loss = trainer.train_step(batch, step=1)
    assert math.isfinite(loss)
    assert trainer.optimizer.step_count == 1


def test_task_vocabulary_must_match(micro_config):
    model = build_model(micro_config(), seed=1)
    with pytest.raises(TaskMismatchError):
        Trainer(model, _task(vocab=12), _train_config())


def test_report_csv_round_trip(tmp_path):
    report = RunReport(name="run")
    report.append(ReportRow(10, 1.5, 2.25, 2.0, 1200.0))
    report.append(ReportRow(20, 3.0, 1.75, 1.5, 1250.0))
    text = report.to_csv(tmp_path / "report.csv")
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert text.splitlines()[1] == "10,1.5,2.25,2,1200"
    loaded = RunReport.from_csv(tmp_path / "report.csv")
    assert loaded.name == "report"
    assert [row.step for row in loaded.rows] == [10, 20]
    assert loaded.final_valid_nll == 1.5
    assert not loaded.diverged


def test_report_rejects_steps_out_of_order():
    report = RunReport()
    report.append(ReportRow(10, 1.0, 2.0, 2.0, 100.0))
    with pytest.raises(ValueError):
        report.append(ReportRow(10, 2.0, 2.0, 2.0, 100.0))
    with pytest.raises(ValueError):
        report.append(ReportRow(20, 0.5, 2.0, 2.0, 100.0))


def test_clip_norm_parsing():
    assert _train_config(clip_norm="none").clip_norm is None
    assert _train_config(clip_norm="1.5").clip_norm == 1.5
    assert _train_config(precision="32").precision.dtype is np.float32


def test_task_pad_id_must_match_model(micro_config):
    task = FileTask(sources=[[6, 7, 8]], targets=[[8, 7, 6]], vocab=11, specials=SpecialIds(pad=5, bos=1, eos=2))
    with pytest.raises(TaskMismatchError, match="pad"):
        Trainer(build_model(micro_config(), seed=1), task, _train_config())
    Trainer(build_model(micro_config(pad_id=5), seed=1), task, _train_config())
