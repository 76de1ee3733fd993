"""Run configuration: one section per stage, loaded from YAML with dotted overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import yaml

from .clique import CliqueParams
from .clustering import DcvcParams
from .consistency import G_TRIM, MODES, TrimThresholds
from .correspondence import CorrespondenceParams
from .descriptors import FeatureParams
from .io import LabelConfig
from .pose import GncConfig


@dataclass(frozen=True)
class IcpParams:
    enabled: bool = False
    max_iterations: int = 30
    tolerance: float = 1e-6
    gate: float = 1.0  # max closest-point distance, meters

    def validate(self) -> None:
        if self.max_iterations < 1 or self.tolerance <= 0 or self.gate <= 0:
            raise ValueError("icp: max_iterations >= 1, tolerance > 0 and gate > 0 required")


@dataclass(frozen=True)
class EvaluationParams:
    buckets: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"easy": (3.0, 5.0), "medium": (8.0, 10.0), "hard": (10.0, 15.0)}
    )
    min_index_gap: int = 50
    yaw_step_deg: float = 15.0
    deteriorate_rates: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    repetitions: int = 10
    seed: int = 0

    def validate(self) -> None:
        for name, (r1, r2) in self.buckets.items():
            if not 0 <= r1 < r2:
                raise ValueError(f"evaluation: bucket {name!r} needs 0 <= r1 < r2")
        if self.min_index_gap < 1 or self.yaw_step_deg <= 0 or self.repetitions < 1:
            raise ValueError("evaluation: min_index_gap >= 1, yaw_step_deg > 0, repetitions >= 1 required")
        if any(not 0 <= r <= 1 for r in self.deteriorate_rates):
            raise ValueError("evaluation: deteriorate_rates must lie in [0, 1]")


@dataclass(frozen=True)
class ConsistencyParams:
    mode: str = G_TRIM
    noise_bound: float = 0.2
    shape_slack: float = 0.1
    g_trim_bound: float | None = None

    def thresholds(self) -> TrimThresholds:
        return TrimThresholds(self.noise_bound, self.shape_slack, self.g_trim_bound)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"consistency: mode must be one of {MODES}")
        self.thresholds().validate()


@dataclass(frozen=True)
class RunConfig:
    labels: LabelConfig = field(default_factory=LabelConfig)
    clustering: DcvcParams = field(default_factory=DcvcParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    correspondence: CorrespondenceParams = field(default_factory=CorrespondenceParams)
    consistency: ConsistencyParams = field(default_factory=ConsistencyParams)
    clique: CliqueParams = field(default_factory=CliqueParams)
    gnc: GncConfig = field(default_factory=GncConfig)
    icp: IcpParams = field(default_factory=IcpParams)
    evaluation: EvaluationParams = field(default_factory=EvaluationParams)

    def validate(self) -> RunConfig:
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            if hasattr(section, "validate"):
                section.validate()
        return self

    def replace(self, **sections) -> RunConfig:
        """Copy with some section fields swapped: ``cfg.replace(consistency={"mode": "l_trim"})``."""
        return from_dict(deep_update(to_dict(self), sections))


def _plain(value: Any) -> Any:
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(cfg: RunConfig) -> dict[str, dict[str, Any]]:
    return {
        f.name: {g.name: _plain(getattr(getattr(cfg, f.name), g.name)) for g in dataclasses.fields(getattr(cfg, f.name))}
        for f in dataclasses.fields(cfg)
    }


def _coerce(section: str, key: str, default: Any, value: Any) -> Any:
    where = f"{section}.{key}"
    if value is None:
        return None
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ValueError(f"{where}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or (default is None and isinstance(value, (int, float))):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, (set, frozenset)):
        if not isinstance(value, (list, tuple, set)):
            raise ValueError(f"{where}: expected a list, got {value!r}")
        return frozenset(int(v) for v in value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValueError(f"{where}: expected a list, got {value!r}")
        return tuple(type(default[0])(v) for v in value) if default else tuple(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ValueError(f"{where}: expected a mapping, got {value!r}")
        if section == "evaluation" and key == "buckets":
            return {str(k): (float(v[0]), float(v[1])) for k, v in value.items()}
        return {int(k): int(v) for k, v in value.items()}
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def from_dict(data: dict[str, Any] | None) -> RunConfig:
    """Build and validate a config; unknown sections or keys are errors."""
    data = data or {}
    base = RunConfig()
    section_names = {f.name for f in dataclasses.fields(base)}
    unknown = set(data) - section_names
    if unknown:
        raise ValueError(f"unknown config section(s): {sorted(unknown)}")
    sections = {}
    for name in section_names:
        current = getattr(base, name)
        given = data.get(name) or {}
        if not isinstance(given, dict):
            raise ValueError(f"config section {name!r} must be a mapping")
        keys = {g.name for g in dataclasses.fields(current)}
        bad = set(given) - keys
        if bad:
            raise ValueError(f"unknown key(s) in section {name!r}: {sorted(bad)}")
        values = {k: _coerce(name, k, getattr(current, k), v) for k, v in given.items()}
        sections[name] = dataclasses.replace(current, **values)
    return RunConfig(**sections).validate()


def deep_update(base: dict, updates: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in updates.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k in {f.name for f in dataclasses.fields(RunConfig)}:
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[str, str, Any]:
    """``section.key=value`` with a YAML-parsed value; ``1,2,3`` is read as a list."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form section.key=value")
    dotted, raw = text.split("=", 1)
    if dotted.count(".") != 1:
        raise ValueError(f"override key {dotted!r} must be section.key")
    section, key = dotted.split(".")
    value = yaml.safe_load(raw) if raw.strip() else None
    if isinstance(value, str) and "," in value:
        value = [yaml.safe_load(v) for v in value.split(",")]
    return section, key, value


def load_config(path=None, overrides=()) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a mapping of sections")
    data = {k: dict(v or {}) for k, v in data.items()}
    for item in overrides:
        section, key, value = parse_override(item)
        data.setdefault(section, {})[key] = value
    return from_dict(data)


def flat_defaults() -> list[tuple[str, Any]]:
    """Every ``section.key`` with its default, in declaration order."""
    return [(f"{s}.{k}", v) for s, keys in to_dict(RunConfig()).items() for k, v in keys.items()]
