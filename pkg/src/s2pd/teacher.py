"""Encoder-only attention teacher that forecasts an H-step residual trajectory.

Row-vector convention throughout: a linear map is ``x @ W + b`` with
``W`` stored as [fan_in, fan_out].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .data import N_FEATURES, Window
from .numerics import Module, Tensor


@dataclass(frozen=True)
class TeacherConfig:
    L: int = 360
    H: int = 15
    d_u: int = 1 + N_FEATURES
    d_m: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128

    def __post_init__(self):
        for name in ("L", "H", "d_u", "d_m", "n_layers", "n_heads", "d_ff"):
            if getattr(self, name) < 1:
                raise ValueError(f"TeacherConfig.{name} must be >= 1")
        if self.d_m % self.n_heads:
            raise ValueError(f"d_m={self.d_m} is not divisible by n_heads={self.n_heads}")

    @property
    def d_k(self) -> int:
        return self.d_m // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    def expected_params(self) -> int:
        d_u, d_m, d_ff, H = self.d_u, self.d_m, self.d_ff, self.H
        per_layer = 4 * d_m * d_m + 2 * 2 * d_m + (d_m * d_ff + d_ff) + (d_ff * d_m + d_m)
        return (d_u * d_m + d_m) + self.n_layers * per_layer + d_m + (d_m * H + H)


def sinusoidal_positions(L: int, d_m: int) -> np.ndarray:
    """Fixed sin/cos position table [L, d_m]; even columns sin, odd columns cos."""
    pos = np.arange(L, dtype=np.float64)[:, None]
    i = np.arange(0, d_m, 2, dtype=np.float64)
    freq = np.exp(-math.log(10000.0) * i / d_m)
    table = np.zeros((L, d_m))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d_m // 2])
    return table.astype(np.float32)


class TeacherModel(Module):
    def __init__(self, config: TeacherConfig, seed: int = 0):
        self.config = config
        rng = nx.make_rng(seed)
        c = config
        p: dict[str, Tensor] = {}

        def linear(name, fan_in, fan_out, bias=True):
            p[f"{name}.W"] = nx.parameter(nx.uniform_init(rng, fan_in, (fan_in, fan_out)), f"{name}.W")
            if bias:
                p[f"{name}.b"] = nx.parameter(np.zeros(fan_out), f"{name}.b")

        def norm(name):
            p[f"{name}.gain"] = nx.parameter(np.ones(c.d_m), f"{name}.gain")
            p[f"{name}.bias"] = nx.parameter(np.zeros(c.d_m), f"{name}.bias")

        linear("embed", c.d_u, c.d_m)
        for layer in range(c.n_layers):
            pre = f"layers.{layer}"
            for proj in ("q", "k", "v", "o"):
                linear(f"{pre}.attn.{proj}", c.d_m, c.d_m, bias=False)
            norm(f"{pre}.ln1")
            linear(f"{pre}.ffn1", c.d_m, c.d_ff)
            linear(f"{pre}.ffn2", c.d_ff, c.d_m)
            norm(f"{pre}.ln2")
        p["pool.w"] = nx.parameter(nx.uniform_init(rng, c.d_m, (c.d_m,)), "pool.w")
        # zero head: an untrained teacher forecasts persistence
        p["head.W"] = nx.parameter(np.zeros((c.d_m, c.H)), "head.W")
        p["head.b"] = nx.parameter(np.zeros(c.H), "head.b")
        self.params = p
        self.positions = sinusoidal_positions(c.L, c.d_m)

    def astype(self, dtype) -> None:
        super().astype(dtype)
        self.positions = self.positions.astype(dtype)


@dataclass
class TeacherOutput:
    residuals: Tensor  # [B, H]
    context: Tensor  # [B, d_m]
    pool_weights: Tensor  # [B, L]
    attention: list[np.ndarray]  # per layer [B, K, L, L]


@dataclass
class TrajectoryForecast:
    residuals: np.ndarray
    absolute: np.ndarray
    context: np.ndarray
    pool_weights: np.ndarray
    anchor: float


def build_tokens(window: Window) -> np.ndarray:
    """u_tau = [P_tau; x_tau] for every history step, shape [L, 1 + d_x]."""
    return np.concatenate([np.asarray(window.history_load)[:, None], np.asarray(window.history_feat)], axis=1)


def embed(model: TeacherModel, tokens: Tensor) -> Tensor:
    p = model.params
    L = tokens.shape[-2]
    if L > model.positions.shape[0]:
        raise nx.DimensionError(f"sequence length {L} exceeds configured L={model.config.L}")
    pos = Tensor(model.positions[:L])
    return tokens @ p["embed.W"] + p["embed.b"] + pos


def multi_head_attention(model: TeacherModel, h: Tensor, layer: int, attn_out: list | None = None) -> Tensor:
    p = model.params
    c = model.config
    pre = f"layers.{layer}.attn"
    B, L, _ = h.shape

    def heads(x: Tensor) -> Tensor:
        return x.reshape(B, L, c.n_heads, c.d_k).transpose(0, 2, 1, 3)

    q = heads(h @ p[f"{pre}.q.W"])
    k = heads(h @ p[f"{pre}.k.W"])
    v = heads(h @ p[f"{pre}.v.W"])
    scores = (q @ nx.swap_last(k)) * (1.0 / math.sqrt(c.d_k))
    attn = nx.softmax(scores, axis=-1)
    if attn_out is not None:
        attn_out.append(attn.data)
    mixed = (attn @ v).transpose(0, 2, 1, 3).reshape(B, L, c.d_m)
    return mixed @ p[f"{pre}.o.W"]


def encoder_forward(model: TeacherModel, h: Tensor, attn_out: list | None = None) -> Tensor:
    """Post-norm blocks: LN(H + MHA(H)) then LN(H~ + FFN(H~)); full bidirectional attention."""
    p = model.params
    squeeze = h.ndim == 2
    if squeeze:
        h = h.reshape(1, *h.shape)
    for layer in range(model.config.n_layers):
        pre = f"layers.{layer}"
        a = multi_head_attention(model, h, layer, attn_out)
        h = nx.layer_norm(h + a, p[f"{pre}.ln1.gain"], p[f"{pre}.ln1.bias"])
        f = nx.gelu(h @ p[f"{pre}.ffn1.W"] + p[f"{pre}.ffn1.b"]) @ p[f"{pre}.ffn2.W"] + p[f"{pre}.ffn2.b"]
        h = nx.layer_norm(h + f, p[f"{pre}.ln2.gain"], p[f"{pre}.ln2.bias"])
    if squeeze:
        h = h.reshape(h.shape[1:])
    return h


def attention_pool(model: TeacherModel, h: Tensor) -> tuple[Tensor, Tensor]:
    """alpha = softmax_tau(w_p . h_tau); c = sum_tau alpha_tau h_tau."""
    alpha = nx.softmax(h @ model.params["pool.w"], axis=-1)  # [..., L]
    squeeze = alpha.ndim == 1
    a = alpha.reshape(1, 1, -1) if squeeze else alpha.reshape(alpha.shape[0], 1, alpha.shape[1])
    hh = h.reshape(1, *h.shape) if squeeze else h
    ctx = (a @ hh).reshape(-1, h.shape[-1])
    if squeeze:
        ctx = ctx.reshape(h.shape[-1])
    return ctx, alpha


def forward(model: TeacherModel, tokens) -> TeacherOutput:
    """Batched teacher pass over tokens [B, L, d_u]."""
    x = nx.as_tensor(tokens, dtype=model.params["embed.W"].dtype)
    if x.ndim == 2:
        x = x.reshape(1, *x.shape)
    if x.shape[-1] != model.config.d_u:
        raise nx.DimensionError(f"token dim {x.shape[-1]} vs configured d_u={model.config.d_u}")
    attn: list[np.ndarray] = []
    h = encoder_forward(model, embed(model, x), attn)
    ctx, alpha = attention_pool(model, h)
    residuals = ctx @ model.params["head.W"] + model.params["head.b"]
    return TeacherOutput(residuals, ctx, alpha, attn)


def predict_batch(model: TeacherModel, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Graph-free inference: (absolute trajectories [B, H], contexts [B, d_m])."""
    with nx.no_grad():
        out = forward(model, tokens)
    anchors = np.asarray(tokens)[:, -1, 0].astype(out.residuals.dtype)
    return anchors[:, None] + out.residuals.data, out.context.data


def predict_trajectory(model: TeacherModel, window: Window) -> TrajectoryForecast:
    tokens = build_tokens(window)
    with nx.no_grad():
        out = forward(model, tokens[None].astype(np.float32))
    res = out.residuals.data[0]
    anchor = np.float32(window.anchor)
    return TrajectoryForecast(res, anchor + res, out.context.data[0], out.pool_weights.data[0], float(anchor))


def teacher_loss(residuals: Tensor, anchors, targets) -> Tensor:
    """Mean over batch and horizon of (P_t + dP_hat - P_{t+h})^2."""
    anchors = np.asarray(anchors, dtype=residuals.dtype)
    targets = np.asarray(targets, dtype=residuals.dtype)
    if residuals.ndim == 1:
        err = residuals + (anchors - targets)
    else:
        err = residuals + (anchors[..., None] - targets)
    return nx.square(err).mean()
