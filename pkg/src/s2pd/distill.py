"""Teacher training and sequence-to-point distillation of the student.

The student objective per sample is

    (P_hat_S - P_{t+1})^2 + (P_hat_S - sum_h w_h P_hat_T,h)^2 + lam * ||z_S - (c_T W_t + b_t)||^2

with the teacher frozen; its soft targets use absolute (anchored) forecasts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from . import student as st
from . import teacher as tc
from .data import WindowSet
from .numerics import AdamW, AdamWConfig, Module, Tensor, TrainingError

log = logging.getLogger(__name__)


SCHEDULES = ("cosine", "constant")


def scheduled_lr(base: float, step: int, total: int, schedule: str) -> float:
    """Learning rate for 0-based ``step`` out of ``total``; cosine decays from base toward 0."""
    if schedule == "constant" or total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    patience: int = 10
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    schedule: str = "cosine"  # or "constant"

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be >= 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")

    def optimizer(self) -> AdamWConfig:
        return AdamWConfig(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)


@dataclass
class DistillConfig:
    lam: float = 0.1
    gamma: float = 0.8
    weights: tuple[float, ...] | None = None  # explicit w_h; default is the gamma decay
    use_logit: bool = True
    cache_teacher: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.weights is not None:
            check_weights(np.asarray(self.weights, dtype=np.float64))

    def horizon_weights(self, H: int) -> np.ndarray:
        if self.weights is None:
            return default_weights(H, self.gamma)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.size != H:
            raise ValueError(f"{w.size} projection weights for a horizon of {H}")
        return w


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float


@dataclass
class TrainResult:
    model: Module  # best-validation weights
    final_state: dict[str, np.ndarray]
    history: list[EpochRecord]
    best_epoch: int
    projection: Module | None = None


# projection weights and losses -------------------------------------------------


def check_weights(w: np.ndarray) -> None:
    if w.ndim != 1 or w.size == 0:
        raise ValueError("projection weights must be a non-empty vector")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("projection weights must be non-negative and sum to 1")


def default_weights(H: int, gamma: float = 0.8) -> np.ndarray:
    """w_h proportional to gamma^(h-1), normalized; uniform at gamma=1."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if H < 1:
        raise ValueError("H must be >= 1")
    w = gamma ** np.arange(H, dtype=np.float64)
    return w / w.sum()


def convex_project(traj, w) -> np.ndarray | float:
    """sum_h w_h * traj_h over the last axis; accepts a TrajectoryForecast."""
    if isinstance(traj, tc.TrajectoryForecast):
        traj = traj.absolute
    traj = np.asarray(traj, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if traj.shape[-1] != w.size:
        raise ValueError(f"trajectory horizon {traj.shape[-1]} vs {w.size} weights")
    check_weights(w)
    # left-to-right over h so the result is independent of BLAS reduction order
    out = traj[..., 0] * w[0]
    for h in range(1, w.size):
        out = out + traj[..., h] * w[h]
    return float(out) if np.ndim(out) == 0 else out


def logit_loss(forecast: Tensor, soft_target) -> Tensor:
    return nx.square(forecast - soft_target).mean()


def mse_loss(forecast: Tensor, truth) -> Tensor:
    return nx.square(forecast - truth).mean()


def feature_loss(z_s: Tensor, c_t, W_t: Tensor, b_t: Tensor) -> Tensor:
    """||z_S - (c_T W_t + b_t)||^2 summed over the embedding, averaged over the batch."""
    c = nx.as_tensor(c_t, dtype=W_t.dtype)
    diff = z_s - (c @ W_t + b_t)
    sq = nx.square(diff).sum(axis=-1)
    return sq.mean() if sq.ndim else sq


def composite_loss(mse, logit, feat, lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    return mse + logit + lam * feat


class Projection(Module):
    """Linear map from the teacher context into the student embedding space."""

    def __init__(self, d_m: int, d_z: int, seed: int = 0):
        rng = nx.make_rng(seed)
        self.params = {
            "W": nx.parameter(nx.uniform_init(rng, d_m, (d_m, d_z)), "proj.W"),
            "b": nx.parameter(np.zeros(d_z), "proj.b"),
        }


def student_loss_terms(student: st.StudentModel, proj: Projection, points, truth, soft, ctx,
                       lam: float, use_logit: bool = True) -> dict[str, Tensor]:
    out = st.student_forward(student, points, with_embedding=lam > 0)
    dt = student.params["s1.W"].dtype
    terms = {"mse": mse_loss(out.forecast, np.asarray(truth, dtype=dt))}
    zero = Tensor(np.zeros((), dtype=dt))
    terms["logit"] = logit_loss(out.forecast, np.asarray(soft, dtype=dt)) if use_logit else zero
    if lam > 0:
        terms["feat"] = feature_loss(out.embedding, ctx, proj.params["W"], proj.params["b"])
    else:
        terms["feat"] = zero
    terms["total"] = composite_loss(terms["mse"], terms["logit"], terms["feat"], lam)
    return terms


# training loops ------------------------------------------------------------------


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _check_finite(value: float, what: str, epoch: int, batch: int) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"{what} became {value} at epoch {epoch}, batch {batch}")


def _errors(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    err = np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return 100.0 * float(np.mean(np.abs(err))), 100.0 * float(np.sqrt(np.mean(err * err)))


def teacher_val_metrics(model: tc.TeacherModel, val: WindowSet, chunk: int = 256) -> tuple[float, float]:
    preds = [tc.predict_batch(model, val.tokens[i:i + chunk])[0] for i in range(0, len(val), chunk)]
    return _errors(np.concatenate(preds), val.targets)


def _fit(model: Module, extra: Module | None, cfg: TrainConfig, n_train: int, step_loss, val_metrics,
         label: str) -> TrainResult:
    params = model.parameters() + (extra.parameters() if extra is not None else [])
    opt = AdamW(params, cfg.optimizer())
    rng = nx.make_rng(cfg.seed + 1)
    history: list[EpochRecord] = []
    best = (math.inf, 0, model.state(), extra.state() if extra is not None else None)
    stale = 0
    total_steps = cfg.epochs * math.ceil(n_train / cfg.batch_size)
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for b, idx in enumerate(_batches(n_train, cfg.batch_size, rng)):
            opt.lr = scheduled_lr(cfg.lr, opt.state.step, total_steps, cfg.schedule)
            opt.zero_grad()
            loss = step_loss(idx)
            value = loss.item()
            _check_finite(value, f"{label} loss", epoch, b)
            loss.backward()
            opt.step()
            total += value * len(idx)
        mae, rmse = val_metrics()
        rec = EpochRecord(epoch, total / n_train, mae, rmse)
        history.append(rec)
        log.info("%s epoch %d train_loss=%.6g val_mae=%.4f val_rmse=%.4f", label, epoch, rec.train_loss, mae, rmse)
        if mae < best[0]:
            best = (mae, epoch, model.state(), extra.state() if extra is not None else None)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    final_state = model.state()
    model.load_state(best[2])
    if extra is not None:
        extra.load_state(best[3])
    return TrainResult(model, final_state, history, best[1], extra)


def train_teacher(train: WindowSet, val: WindowSet, config: tc.TeacherConfig, cfg: TrainConfig) -> TrainResult:
    """Minimize the trajectory squared error; keeps the best validation-MAE weights."""
    if len(train) == 0:
        raise ValueError("no training windows")
    if train.tokens.shape[1] != config.L or train.targets.shape[1] != config.H:
        raise ValueError(f"windows are L={train.tokens.shape[1]}, H={train.targets.shape[1]}; "
                         f"config wants L={config.L}, H={config.H}")
    model = tc.TeacherModel(config, seed=cfg.seed)

    def step_loss(idx):
        out = tc.forward(model, train.tokens[idx])
        return tc.teacher_loss(out.residuals, train.anchors[idx], train.targets[idx])

    def val_metrics():
        return teacher_val_metrics(model, val) if len(val) else (math.nan, math.nan)

    return _fit(model, None, cfg, len(train), step_loss, val_metrics, "teacher")


def teacher_targets(teacher: tc.TeacherModel, windows: WindowSet, w: np.ndarray,
                    chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Soft targets [N] and teacher contexts [N, d_m] from one frozen forward pass."""
    soft, ctx = [], []
    for i in range(0, len(windows), chunk):
        traj, c = tc.predict_batch(teacher, windows.tokens[i:i + chunk])
        soft.append(convex_project(traj, w))
        ctx.append(c)
    d_m = teacher.config.d_m
    if not soft:
        return np.zeros(0), np.zeros((0, d_m), np.float32)
    return np.concatenate(soft).astype(np.float32), np.concatenate(ctx)


def distill_student(train: WindowSet, val: WindowSet, teacher: tc.TeacherModel | None,
                    config: st.StudentConfig, dcfg: DistillConfig) -> TrainResult:
    """Train the student against truth plus the frozen teacher.

    With ``use_logit=False`` and ``lam=0`` this is plain supervised training
    (the no-distillation ablation) and ``teacher`` may be None.
    """
    if len(train) == 0:
        raise ValueError("no training windows")
    cfg = dcfg.train
    needs_teacher = dcfg.use_logit or dcfg.lam > 0
    student = st.StudentModel(config, seed=cfg.seed, with_embedding=True)
    truth = train.targets[:, 0]
    points = train.points
    if points.shape[1] != config.d_u:
        raise ValueError(f"windows carry d_u={points.shape[1]}, student config wants {config.d_u}")

    if needs_teacher:
        if teacher is None:
            raise ValueError("distillation needs a teacher")
        H = teacher.config.H
        w = dcfg.horizon_weights(H)
        proj = Projection(teacher.config.d_m, config.d_z, seed=cfg.seed + 2)
        if dcfg.cache_teacher:
            soft_all, ctx_all = teacher_targets(teacher, train, w)

            def targets(idx):
                return soft_all[idx], ctx_all[idx]
        else:
            def targets(idx):
                return teacher_targets(teacher, train.subset(idx), w)
        return _distill_loop(student, proj, train, val, truth, points, targets, dcfg)

    proj = Projection(1, config.d_z, seed=cfg.seed + 2)

    def no_targets(idx):
        return np.zeros(len(idx), np.float32), np.zeros((len(idx), 1), np.float32)

    return _distill_loop(student, proj, train, val, truth, points, no_targets, dcfg)


def _distill_loop(student, proj, train, val, truth, points, targets, dcfg: DistillConfig) -> TrainResult:
    use_proj = dcfg.lam > 0

    def step_loss(idx):
        soft, ctx = targets(idx)
        terms = student_loss_terms(student, proj, points[idx], truth[idx], soft, ctx, dcfg.lam, dcfg.use_logit)
        return terms["total"]

    def val_metrics():
        if not len(val):
            return math.nan, math.nan
        return _errors(st.predict(student, val.points), val.targets[:, 0])

    return _fit(student, proj if use_proj else None, dcfg.train, len(train), step_loss, val_metrics, "student")


def config_dict(obj) -> dict:
    return asdict(obj)
