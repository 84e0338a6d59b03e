"""Accuracy metrics on normalized targets and forecast trace export.

MAE and RMSE are reported as percentages: errors on the min-max normalized
load scale multiplied by 100.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import student as st
from . import teacher as tc
from .data import SplitSeries, WindowSet


@dataclass(frozen=True)
class EvalReport:
    mae_pct: float
    rmse_pct: float
    n_samples: int
    mode: str

    def __post_init__(self):
        # RMS of |e| bounds its mean from above
        if self.rmse_pct < self.mae_pct or self.mae_pct < 0:
            raise AssertionError(f"inconsistent report: MAE {self.mae_pct} vs RMSE {self.rmse_pct}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def table(self) -> str:
        return (f"{'mode':<12} {'n':>8} {'MAE [%]':>9} {'RMSE [%]':>9}\n"
                f"{self.mode:<12} {self.n_samples:>8d} {self.mae_pct:>9.4f} {self.rmse_pct:>9.4f}")


def report_from_errors(errors, mode: str) -> EvalReport:
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise ValueError("no test samples to evaluate")
    # fixed-order pairwise sums; independent of how batches were formed
    e = np.sort(np.abs(e))
    mae = 100.0 * float(np.sum(e) / e.size)
    rmse = 100.0 * float(np.sqrt(np.sum(e * e) / e.size))
    # equal when all |e| coincide; rounding can otherwise leave RMSE one ulp below MAE
    rmse = max(rmse, mae)
    return EvalReport(mae, rmse, int(e.size), mode)


def one_step_predictions(model, windows: WindowSet, chunk: int = 256) -> np.ndarray:
    """P_hat_{t+1} per window: the teacher's first trajectory step or the student's forecast."""
    if isinstance(model, tc.TeacherModel):
        out = [tc.predict_batch(model, windows.tokens[i:i + chunk])[0][:, 0] for i in range(0, len(windows), chunk)]
        return np.concatenate(out) if out else np.zeros(0, np.float32)
    if isinstance(model, st.StudentModel):
        return st.predict(model, windows.points)
    if callable(model):
        return np.asarray(model(windows))
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def eval_one_step(model, windows: WindowSet) -> EvalReport:
    if len(windows) == 0:
        raise ValueError("empty test set")
    pred = one_step_predictions(model, windows)
    return report_from_errors(pred.astype(np.float64) - windows.targets[:, 0], "one-step")


def trajectory_predictions(teacher: tc.TeacherModel, windows: WindowSet, chunk: int = 256) -> np.ndarray:
    out = [tc.predict_batch(teacher, windows.tokens[i:i + chunk])[0] for i in range(0, len(windows), chunk)]
    return np.concatenate(out)


def eval_trajectory(teacher, windows: WindowSet) -> EvalReport:
    """Errors pooled over every horizon step of every window."""
    if len(windows) == 0:
        raise ValueError("empty test set")
    pred = trajectory_predictions(teacher, windows) if isinstance(teacher, tc.TeacherModel) else np.asarray(teacher(windows))
    return report_from_errors(pred.astype(np.float64) - windows.targets, "trajectory")


def eval_recursive(student: st.StudentModel, windows: WindowSet, steps: int | None = None) -> EvalReport:
    """Student rolled forward on its own forecasts from each window's anchor, pooled over steps."""
    if len(windows) == 0:
        raise ValueError("empty test set")
    steps = steps or windows.targets.shape[1]
    v = windows.points.astype(np.float32).copy()
    preds = np.empty((len(windows), steps), dtype=np.float32)
    for i in range(steps):
        preds[:, i] = st.predict(student, v)
        v[:, 0] = preds[:, i]
    return report_from_errors(preds.astype(np.float64) - windows.targets[:, :steps], "recursive")


def export_trace(model, segment: SplitSeries, n_steps: int, L: int, path: str | Path | None = None,
                 recursive: bool = False) -> list[tuple[int, float, float]]:
    """Rows (t, truth, pred) for targets t = L .. L+n_steps-1 of a test segment.

    Predictions are one step ahead and re-anchored on the observed load at
    every step. With ``recursive=True`` the student instead feeds back its own
    forecasts from t = L-1 onward, holding features at their observed values.
    """
    vals = np.asarray(segment.values, dtype=np.float32)
    if len(vals) < L + n_steps:
        raise ValueError(f"segment of {len(vals)} rows is shorter than L + n_steps = {L + n_steps}")
    targets = np.arange(L, L + n_steps)
    truth = vals[targets, 0]
    if isinstance(model, tc.TeacherModel):
        hist = (targets - 1)[:, None] + np.arange(-model.config.L + 1, 1)[None, :]
        if hist.min() < 0:
            raise ValueError("teacher trace needs L rows of history before the first target")
        pred = np.concatenate([tc.predict_batch(model, vals[hist[i:i + 256]])[0][:, 0]
                               for i in range(0, n_steps, 256)])
    elif isinstance(model, st.StudentModel):
        if recursive:
            v = vals[L - 1].copy()
            pred = np.empty(n_steps, dtype=np.float32)
            for i, t in enumerate(targets):
                v[1:] = vals[t - 1, 1:]
                pred[i] = st.predict(model, v)
                v[0] = pred[i]
        else:
            pred = st.predict(model, vals[targets - 1])
    else:
        raise TypeError(f"cannot trace {type(model).__name__}")
    rows = [(int(t), float(a), float(b)) for t, a, b in zip(targets, truth, pred)]
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "truth", "pred"])
            for t, a, b in rows:
                w.writerow([t, repr(a), repr(b)])
    return rows
