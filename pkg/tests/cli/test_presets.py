import pytest

from src.model import LNPlacement
from src.share_plan import ShareStrategy
from src.training import Precision, TaskKind
from src.utils.presets import PresetError, load_preset, parse_preset, preset_from_resolved

MINIMAL = """
# comment line
[model]
d_model = 8
n_heads = 2
d_ff = 16
vocab_size = 11
enc_layers = 6
enc_blocks = 3
strategy = cycle_rev   # trailing comment

[train]
max_steps = 5
precision = float64

[task]
kind = reverse
"""


def test_parse_minimal_preset():
    preset = parse_preset(MINIMAL, "minimal")
    assert preset.model.strategy is ShareStrategy.CYCLE_REV
    assert preset.model.encoder_assignment().blocks == (1, 2, 3, 3, 2, 1)
    assert preset.model.ln_placement is LNPlacement.POST
    assert preset.train.precision is Precision.FLOAT64
    assert preset.task.kind is TaskKind.REVERSE
    assert preset.task.vocab_size == 11
    assert preset.bench.presets == []


@pytest.mark.parametrize("text, line, fragment", [
    ("[model]\nd_model = 8\n[optim]\n", 3, "unknown section"),
    ("[model]\nd_model 8\n", 2, "key = value"),
    ("d_model = 8\n", 1, "before any section"),
    ("[model]\nd_model = 8\nd_model = 16\n", 3, "already set"),
    ("[model]\nd_model = 8\ndepth = 3\n", 3, "depth"),
    ("[model]\n\nd_model = eight\n", 3, "d_model"),
    ("[train]\nlr_scale = -1\n", 2, "lr_scale"),
    ("[model]\nstrategy = spiral\n", 2, "strategy"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(PresetError) as info:
        parse_preset(text, "bad.preset")
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"bad.preset:{line}:")


def test_extends_inherits_and_overrides(presets_dir):
    preset = load_preset("micro-cycle-12", presets_dir)
    assert preset.name == "micro-cycle-12"
    assert preset.model.enc_layers == 12
    assert preset.model.enc_blocks == 6
    assert preset.model.d_ff == 128
    assert preset.model.d_model == 32
    assert preset.train.lr_scale == 0.4


def test_extends_chain_and_cycles(tmp_path):
    (tmp_path / "a.preset").write_text("extends = b\n[model]\nd_model = 8\nn_heads = 2\n")
    (tmp_path / "b.preset").write_text("extends = a\n[model]\nd_ff = 16\n")
    with pytest.raises(PresetError, match="extends itself"):
        load_preset("a", tmp_path)


def test_missing_parent(tmp_path):
    (tmp_path / "child.preset").write_text("extends = ghost\n")
    with pytest.raises(PresetError) as info:
        load_preset("child", tmp_path)
    assert info.value.line == 1


def test_missing_preset(tmp_path):
    with pytest.raises(PresetError):
        load_preset("nothing-here", tmp_path)


def test_default_seed_applies_only_when_unset(presets_dir):
    assert load_preset("tiny", presets_dir, default_seed=9).train.seed == 9
    assert load_preset("micro-copy", presets_dir, default_seed=9).train.seed == 1


def test_resolved_values_rebuild_the_preset(presets_dir):
    preset = load_preset("bench-demo", presets_dir)
    rebuilt = preset_from_resolved(preset.resolved(), preset.path)
    assert rebuilt.model == preset.model
    assert rebuilt.train == preset.train
    assert rebuilt.bench.presets == ["micro-vanilla", "micro-cycle-12", "micro-universal"]


def test_every_shipped_preset_is_valid(presets_dir):
    for path in sorted(presets_dir.glob("*.preset")):
        preset = load_preset(path.stem, presets_dir)
        preset.model.check()
        assert preset.task.vocab_size == preset.model.vocab_size
