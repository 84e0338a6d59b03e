"""Synthetic benchmark protocol: per seed, generate telemetry, train a teacher,
then train a distilled student and a ground-truth-only student from the same
initialization, and score all three on the held-out test split."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import data as dp
from . import distill as ds
from . import evaluation as ev
from . import student as st
from . import teacher as tc
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    n_minutes: int = 20000
    L: int = 60
    H: int = 15
    teacher: tc.TeacherConfig = field(default_factory=lambda: tc.TeacherConfig(L=60, H=15))
    student: st.StudentConfig = field(default_factory=st.StudentConfig)
    # a higher teacher rate than the default 1e-4 so the teacher converges inside the CPU budget
    teacher_train: ds.TrainConfig = field(default_factory=lambda: ds.TrainConfig(epochs=20, lr=1e-3))
    student_train: ds.TrainConfig = field(default_factory=ds.TrainConfig)
    teacher_stride: int = 2  # every other training window; the students see all of them
    lam: float = 0.1
    gamma: float = 0.8

    def __post_init__(self):
        if (self.teacher.L, self.teacher.H) != (self.L, self.H):
            raise ValueError("teacher config must use the benchmark L and H")
        if self.teacher_stride < 1:
            raise ValueError("teacher_stride must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SeedResult:
    seed: int
    teacher_one_step: float
    teacher_trajectory: float
    persistence_one_step: float
    kd_one_step: float
    plain_one_step: float
    kd_rmse: float
    plain_rmse: float
    teacher_epochs: int
    kd_best_epoch: int
    plain_best_epoch: int
    seconds: float
    digests: dict[str, str]

    def to_dict(self) -> dict:
        return asdict(self)


def _digest(model) -> str:
    return hashlib.sha256(ckpt.to_bytes(model)).hexdigest()[:16]


def _with_seed(cfg: ds.TrainConfig, seed: int) -> ds.TrainConfig:
    return ds.TrainConfig(**{**asdict(cfg), "seed": seed})


def prepare_seed(seed: int, cfg: BenchmarkConfig) -> dp.PreparedData:
    records = generate(SynthConfig(seed=seed, n_minutes=cfg.n_minutes))
    return dp.prepare(records, cfg.L, cfg.H)


def run_seed(seed: int, cfg: BenchmarkConfig, keep_models: dict | None = None) -> SeedResult:
    t0 = time.perf_counter()
    prep = prepare_seed(seed, cfg)
    test = prep.test
    teacher_windows = prep.train.subset(np.arange(0, len(prep.train), cfg.teacher_stride))
    teacher = ds.train_teacher(teacher_windows, prep.val, cfg.teacher, _with_seed(cfg.teacher_train, seed))
    log.info("seed %d teacher done after %.0fs", seed, time.perf_counter() - t0)

    scfg = _with_seed(cfg.student_train, seed)
    kd = ds.distill_student(prep.train, prep.val, teacher.model, cfg.student,
                            ds.DistillConfig(lam=cfg.lam, gamma=cfg.gamma, train=scfg))
    plain = ds.distill_student(prep.train, prep.val, None, cfg.student,
                               ds.DistillConfig(lam=0.0, use_logit=False, train=scfg))

    kd_rep = ev.eval_one_step(kd.model, test)
    plain_rep = ev.eval_one_step(plain.model, test)
    persist = ev.report_from_errors(test.anchors.astype(np.float64) - test.targets[:, 0], "one-step")
    if keep_models is not None:
        keep_models.update(teacher=teacher.model, kd=kd.model, plain=plain.model)
    return SeedResult(
        seed=seed,
        teacher_one_step=ev.eval_one_step(teacher.model, test).mae_pct,
        teacher_trajectory=ev.eval_trajectory(teacher.model, test).mae_pct,
        persistence_one_step=persist.mae_pct,
        kd_one_step=kd_rep.mae_pct,
        plain_one_step=plain_rep.mae_pct,
        kd_rmse=kd_rep.rmse_pct,
        plain_rmse=plain_rep.rmse_pct,
        teacher_epochs=len(teacher.history),
        kd_best_epoch=kd.best_epoch,
        plain_best_epoch=plain.best_epoch,
        seconds=time.perf_counter() - t0,
        digests={"teacher": _digest(teacher.model), "kd": _digest(kd.model), "plain": _digest(plain.model)},
    )


@dataclass
class BenchmarkSummary:
    results: list[SeedResult]

    @property
    def kd_mean(self) -> float:
        return float(np.mean([r.kd_one_step for r in self.results]))

    @property
    def plain_mean(self) -> float:
        return float(np.mean([r.plain_one_step for r in self.results]))

    @property
    def relative_improvement(self) -> float:
        """(plain - kd) / plain; positive when distillation helps."""
        return (self.plain_mean - self.kd_mean) / self.plain_mean

    def to_dict(self) -> dict:
        return {
            "results": [r.to_dict() for r in self.results],
            "kd_mean_mae_pct": self.kd_mean,
            "plain_mean_mae_pct": self.plain_mean,
            "relative_improvement": self.relative_improvement,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        head = f"{'seed':>4} {'persist':>8} {'teacher':>8} {'traj':>8} {'no-KD':>8} {'KD':>8} {'sec':>6}"
        rows = [f"{r.seed:>4} {r.persistence_one_step:>8.3f} {r.teacher_one_step:>8.3f} "
                f"{r.teacher_trajectory:>8.3f} {r.plain_one_step:>8.3f} {r.kd_one_step:>8.3f} {r.seconds:>6.0f}"
                for r in self.results]
        tail = (f"mean no-KD {self.plain_mean:.3f}  KD {self.kd_mean:.3f}  "
                f"relative improvement {100 * self.relative_improvement:+.1f}%")
        return "\n".join([head, *rows, tail])


def run_benchmark(cfg: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkSummary:
    return BenchmarkSummary([run_seed(s, cfg) for s in cfg.seeds])


def gamma_sweep(seed: int, gammas, cfg: BenchmarkConfig = BenchmarkConfig()) -> dict:
    """One teacher, then a distilled student per gamma; test one-step MAE% for each."""
    prep = prepare_seed(seed, cfg)
    teacher_windows = prep.train.subset(np.arange(0, len(prep.train), cfg.teacher_stride))
    teacher = ds.train_teacher(teacher_windows, prep.val, cfg.teacher, _with_seed(cfg.teacher_train, seed)).model
    scfg = _with_seed(cfg.student_train, seed)
    out = {"teacher": ev.eval_one_step(teacher, prep.test).mae_pct}
    plain = ds.distill_student(prep.train, prep.val, None, cfg.student,
                               ds.DistillConfig(lam=0.0, use_logit=False, train=scfg))
    out["no-KD"] = ev.eval_one_step(plain.model, prep.test).mae_pct
    for g in gammas:
        kd = ds.distill_student(prep.train, prep.val, teacher, cfg.student,
                                ds.DistillConfig(lam=cfg.lam, gamma=g, train=scfg))
        out[f"gamma={g}"] = ev.eval_one_step(kd.model, prep.test).mae_pct
    return out
