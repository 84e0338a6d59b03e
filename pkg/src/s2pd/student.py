"""Point-wise MLP student: two ReLU layers, a one-step residual head and an
embedding head used only while distilling."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .data import N_FEATURES
from .numerics import Module, Tensor

EMBED_PREFIX = "embed."


@dataclass(frozen=True)
class StudentConfig:
    d_u: int = 1 + N_FEATURES
    d_h: int = 64
    d_z: int = 16

    def __post_init__(self):
        for name in ("d_u", "d_h", "d_z"):
            if getattr(self, name) < 1:
                raise ValueError(f"StudentConfig.{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def expected_params(self, with_embedding: bool = True) -> int:
        d_u, d_h, d_z = self.d_u, self.d_h, self.d_z
        n = (d_u * d_h + d_h) + (d_h * d_h + d_h) + (d_h + 1)
        return n + (d_h * d_z + d_z if with_embedding else 0)


class StudentModel(Module):
    def __init__(self, config: StudentConfig, seed: int = 0, with_embedding: bool = True):
        self.config = config
        rng = nx.make_rng(seed)
        c = config
        self.params = {
            "s1.W": nx.parameter(nx.uniform_init(rng, c.d_u, (c.d_u, c.d_h)), "s1.W"),
            "s1.b": nx.parameter(np.zeros(c.d_h), "s1.b"),
            "s2.W": nx.parameter(nx.uniform_init(rng, c.d_h, (c.d_h, c.d_h)), "s2.W"),
            "s2.b": nx.parameter(np.zeros(c.d_h), "s2.b"),
            # zero residual head: an untrained student forecasts persistence
            "head.w": nx.parameter(np.zeros(c.d_h), "head.w"),
            "head.b": nx.parameter(np.zeros(()), "head.b"),
        }
        # drawn regardless so the backbone init does not depend on the flag
        W_z = nx.uniform_init(rng, c.d_h, (c.d_h, c.d_z))
        if with_embedding:
            self.params["embed.W"] = nx.parameter(W_z, "embed.W")
            self.params["embed.b"] = nx.parameter(np.zeros(c.d_z), "embed.b")

    @property
    def has_embedding(self) -> bool:
        return "embed.W" in self.params


@dataclass
class StudentOutput:
    residual: Tensor  # [B]
    forecast: Tensor  # [B], anchor + residual
    embedding: Tensor | None  # [B, d_z]


def student_forward(model: StudentModel, v, with_embedding: bool = True) -> StudentOutput:
    """v_t = [P_t; x_t] of shape [d_u] or [B, d_u]; column 0 is the anchor load."""
    p = model.params
    x = nx.as_tensor(v, dtype=p["s1.W"].dtype)
    if x.shape[-1] != model.config.d_u:
        raise nx.DimensionError(f"input dim {x.shape[-1]} vs configured d_u={model.config.d_u}")
    h = nx.relu(x @ p["s1.W"] + p["s1.b"])
    r = nx.relu(h @ p["s2.W"] + p["s2.b"])
    residual = r @ p["head.w"] + p["head.b"]
    forecast = residual + x.data[..., 0]
    z = None
    if with_embedding and model.has_embedding:
        z = r @ p["embed.W"] + p["embed.b"]
    return StudentOutput(residual, forecast, z)


def predict(model: StudentModel, v: np.ndarray) -> np.ndarray:
    """Graph-free one-step absolute forecasts."""
    with nx.no_grad():
        return student_forward(model, v, with_embedding=False).forecast.data


def rolling_forecast(model: StudentModel, seed_point: np.ndarray, steps: int) -> np.ndarray:
    """Recursive multi-step forecast from one point input.

    Step i+1 feeds the step-i forecast back as its load; the exogenous
    features stay at their seed values.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    v = np.array(seed_point, dtype=model.params["s1.W"].dtype, copy=True)
    out = np.empty(steps, dtype=v.dtype)
    for i in range(steps):
        nxt = predict(model, v)
        out[i] = nxt
        v[0] = nxt
    return out


def count_params(model: StudentModel, with_embedding: bool = True) -> int:
    return model.count_params(None if with_embedding else EMBED_PREFIX)


def fp32_bytes(model: StudentModel, with_embedding: bool = True) -> int:
    return 4 * count_params(model, with_embedding)
