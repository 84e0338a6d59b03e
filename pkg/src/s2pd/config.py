"""Run configuration: nested dataclasses, serialized as flat ``section.key`` JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .data import N_FEATURES, SplitSpec
from .distill import DistillConfig, TrainConfig
from .student import StudentConfig
from .teacher import TeacherConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    L: int = 360
    H: int = 15
    stride: int = 1
    time_features: bool = False
    max_gap: int = 5
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15


@dataclass
class TeacherSection:
    d_m: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128


@dataclass
class StudentSection:
    d_h: int = 64
    d_z: int = 16


@dataclass
class DistillSection:
    lam: float = 0.1
    gamma: float = 0.8
    use_logit: bool = True
    cache_teacher: bool = True


@dataclass
class TrainSection:
    epochs: int = 50
    batch_size: int = 64
    patience: int = 10
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "cosine"


@dataclass
class SynthSection:
    n_minutes: int = 20000
    n_regimes: int = 3
    noise_std: float = 15.0


@dataclass
class BenchSection:
    batch: int = 1
    warmup: int = 50
    iters: int = 1000


@dataclass
class RunConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    teacher: TeacherSection = field(default_factory=TeacherSection)
    student: StudentSection = field(default_factory=StudentSection)
    distill: DistillSection = field(default_factory=DistillSection)
    train: TrainSection = field(default_factory=TrainSection)
    synth: SynthSection = field(default_factory=SynthSection)
    bench: BenchSection = field(default_factory=BenchSection)

    # derived module configs ---------------------------------------------------

    @property
    def d_u(self) -> int:
        return 1 + N_FEATURES + (2 if self.data.time_features else 0)

    def split_spec(self) -> SplitSpec:
        d = self.data
        return SplitSpec(d.train_frac, d.val_frac, d.test_frac)

    def teacher_config(self) -> TeacherConfig:
        t = self.teacher
        return TeacherConfig(L=self.data.L, H=self.data.H, d_u=self.d_u, d_m=t.d_m, n_layers=t.n_layers,
                             n_heads=t.n_heads, d_ff=t.d_ff)

    def student_config(self) -> StudentConfig:
        return StudentConfig(d_u=self.d_u, d_h=self.student.d_h, d_z=self.student.d_z)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(t.epochs, t.batch_size, t.patience, t.lr, t.weight_decay, t.beta1, t.beta2, t.eps,
                           self.seed, t.schedule)

    def distill_config(self) -> DistillConfig:
        d = self.distill
        return DistillConfig(lam=d.lam, gamma=d.gamma, use_logit=d.use_logit, cache_teacher=d.cache_teacher,
                             train=self.train_config())

    # validation and (de)serialization ----------------------------------------

    def validate(self) -> RunConfig:
        """Build every derived config once so errors surface before any work starts."""
        checks = {
            "data": self.split_spec,
            "teacher": self.teacher_config,
            "student": self.student_config,
            "train": self.train_config,
            "distill": self.distill_config,
        }
        for section, build in checks.items():
            try:
                build()
            except ValueError as exc:
                raise ConfigError(f"{section}: {exc}") from exc
        d = self.data
        if d.stride < 1 or d.max_gap < 1:
            raise ConfigError("data.stride and data.max_gap must be >= 1")
        if self.synth.n_minutes < d.L + d.H + 1:
            raise ConfigError(f"synth.n_minutes must be >= data.L + data.H + 1 = {d.L + d.H + 1}")
        if self.bench.iters < 100 or self.bench.batch < 1 or self.bench.warmup < 0:
            raise ConfigError("bench.iters must be >= 100, bench.batch >= 1, bench.warmup >= 0")
        return self

    def to_flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if is_dataclass(value):
                for sub in fields(value):
                    out[f"{f.name}.{sub.name}"] = getattr(value, sub.name)
            else:
                out[f.name] = value
        return out

    def with_overrides(self, flat: dict[str, Any]) -> RunConfig:
        cfg = replace(self, **{f.name: replace(getattr(self, f.name)) for f in fields(self)
                               if is_dataclass(getattr(self, f.name))})
        known = cfg.to_flat()
        for key, value in flat.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            value = _coerce(key, value, type(known[key]))
            if "." in key:
                section, name = key.split(".", 1)
                setattr(getattr(cfg, section), name, value)
            else:
                setattr(cfg, key, value)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        try:
            flat = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(flat, dict):
            raise ConfigError(f"{path}: expected a JSON object of flat keys")
        return cls().with_overrides(flat)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_flat(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _coerce(key: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
            return value.lower() in ("true", "1")
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from exc
    if kind is float:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: expected a number, got {value!r}") from exc
    return value
