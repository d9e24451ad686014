"""
Run presets: plain `key = value` text grouped under [model], [train], [task]
and [bench] sections, `#` comments. A top-level `extends = <preset>` line
inherits every value of another preset before applying this file's own.

    extends = micro-copy

    [model]
    d_model = 16
    strategy = cycle_rev
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ValidationError

from ..bench.throughput import BenchConfig
from ..model import ModelConfig
from ..training import TaskConfig, TrainConfig

logger = logging.getLogger(__name__)

PRESET_SUFFIX = ".preset"
SECTIONS = ("model", "train", "task", "bench")


class PresetError(ValueError):
    """Malformed or invalid preset; `path` and `line` locate the offending text."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


@dataclass
class PresetValue:
    text: str
    path: str
    line: int


@dataclass
class RawPreset:
    path: str
    extends: Optional[PresetValue] = None
    sections: Dict[str, Dict[str, PresetValue]] = field(default_factory=lambda: {s: {} for s in SECTIONS})
    section_lines: Dict[str, int] = field(default_factory=dict)


def _unquote(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def parse_preset_text(text: str, path: str = "<preset>") -> RawPreset:
    raw = RawPreset(path=path)
    section: Optional[str] = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise PresetError(path, line_no, f"unterminated section header {line!r}")
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise PresetError(path, line_no, f"unknown section [{section}], expected one of {list(SECTIONS)}")
            raw.section_lines.setdefault(section, line_no)
            continue
        if "=" not in line:
            raise PresetError(path, line_no, f"expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if not key:
            raise PresetError(path, line_no, "empty key")
        entry = PresetValue(_unquote(value), path, line_no)
        if section is None:
            if key != "extends":
                raise PresetError(path, line_no, f"{key!r} appears before any section")
            raw.extends = entry
            continue
        if key in raw.sections[section]:
            first = raw.sections[section][key].line
            raise PresetError(path, line_no, f"{key!r} already set on line {first}")
        raw.sections[section][key] = entry
    return raw


def resolve_preset_path(name: Union[str, Path], presets_dir: Union[str, Path]) -> Path:
    """A preset is named by a path, or by a bare name looked up in presets_dir."""
    candidate = Path(name)
    if candidate.is_file():
        return candidate
    for option in (Path(presets_dir) / candidate, Path(presets_dir) / f"{name}{PRESET_SUFFIX}"):
        if option.is_file():
            return option
    raise PresetError(str(name), 0, f"no preset file {name!r} (searched {presets_dir})")


def _load_raw(path: Path, presets_dir: Path, chain: List[str]) -> RawPreset:
    key = str(path.resolve())
    if key in chain:
        raise PresetError(str(path), 0, "preset extends itself through " + " -> ".join(chain + [key]))
    raw = parse_preset_text(path.read_text(encoding="utf-8"), str(path))
    if raw.extends is None:
        return raw
    try:
        parent_path = resolve_preset_path(raw.extends.text, path.parent)
    except PresetError:
        try:
            parent_path = resolve_preset_path(raw.extends.text, presets_dir)
        except PresetError:
            raise PresetError(raw.extends.path, raw.extends.line, f"cannot find preset {raw.extends.text!r}")
    parent = _load_raw(parent_path, presets_dir, chain + [key])
    for section in SECTIONS:
        merged = dict(parent.sections[section])
        merged.update(raw.sections[section])
        raw.sections[section] = merged
        if section not in raw.section_lines and section in parent.section_lines:
            raw.section_lines[section] = parent.section_lines[section]
    return raw


def _validate(model_cls, raw: RawPreset, section: str, extra: Optional[Dict[str, Any]] = None) -> BaseModel:
    values = raw.sections[section]
    payload: Dict[str, Any] = dict(extra or {})
    payload.update({key: entry.text for key, entry in values.items()})
    try:
        return model_cls(**payload)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else ""
        if key in values:
            where = values[key]
            raise PresetError(where.path, where.line, f"[{section}] {key}: {error['msg']}") from e
        line = raw.section_lines.get(section, 0)
        label = f"[{section}] {key}: " if key else f"[{section}] "
        raise PresetError(raw.path, line, f"{label}{error['msg']}") from e


@dataclass
class Preset:
    name: str
    path: str
    model: ModelConfig
    train: TrainConfig
    task: TaskConfig
    bench: BenchConfig

    def resolved(self) -> Dict[str, Any]:
        """Every validated value, for run manifests."""
        return {
            "preset": self.name,
            "preset_path": str(self.path),
            "model": self.model.model_dump(mode="json"),
            "train": self.train.model_dump(mode="json"),
            "task": self.task.model_dump(mode="json"),
            "bench": self.bench.model_dump(mode="json"),
        }


def preset_from_raw(raw: RawPreset, name: str, default_seed: Optional[int] = None) -> Preset:
    model = _validate(ModelConfig, raw, "model")
    train = _validate(TrainConfig, raw, "train", extra=None if default_seed is None else {"seed": default_seed})
    # The task vocabulary follows the model unless the preset sets it.
    task = _validate(TaskConfig, raw, "task", extra={"vocab_size": model.vocab_size})
    bench = _validate(BenchConfig, raw, "bench")
    return Preset(name=name, path=raw.path, model=model, train=train, task=task, bench=bench)


def parse_preset(text: str, name: str = "<preset>") -> Preset:
    """Parses and validates preset text without `extends` resolution."""
    raw = parse_preset_text(text, name)
    if raw.extends is not None:
        raise PresetError(name, raw.extends.line, "extends needs a preset file on disk")
    return preset_from_raw(raw, name)


def load_preset(name: Union[str, Path], presets_dir: Union[str, Path] = "presets",
                default_seed: Optional[int] = None) -> Preset:
    """
    :param default_seed: [train] seed used when the preset does not set one.
    :raises PresetError: missing file, bad syntax, unknown key or invalid value.
    """
    path = resolve_preset_path(name, presets_dir)
    raw = _load_raw(path, Path(presets_dir), [])
    preset = preset_from_raw(raw, path.stem if path.suffix == PRESET_SUFFIX else path.name, default_seed)
    logger.info(f"Loaded preset {preset.name} from {path}")
    return preset


def preset_from_resolved(resolved: Dict[str, Any], path: str) -> Preset:
    """Rebuilds a preset from the `config` block of a run manifest."""
    return Preset(name=resolved.get("preset", "run"), path=path,
                  model=ModelConfig(**resolved["model"]), train=TrainConfig(**resolved["train"]),
                  task=TaskConfig(**resolved["task"]), bench=BenchConfig(**resolved["bench"]))
