"""Regime-switching GPU-node telemetry generator.

A latent Markov chain moves between power regimes (idle/ramp/burst by
default) with geometric dwell times. Each regime episode draws its own
level jitter and ramp rate; power ramps toward the episode level at that
bounded rate. Telemetry features switch together with the regime, one
minute before power starts moving, so they act as leading indicators.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import TelemetryRecord
from .numerics import make_rng


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_minutes: int = 20000
    n_regimes: int = 3
    levels: tuple[float, ...] = (200.0, 600.0, 1000.0)  # watts
    dwell_means: tuple[float, ...] = (30.0, 10.0, 20.0)  # minutes, geometric
    ramp_min: float = 40.0  # W/min
    ramp_max: float = 250.0
    level_jitter: float = 0.08  # relative, per episode
    noise_std: float = 15.0  # W
    util_noise: float = 0.03
    temp_ambient: float = 30.0
    temp_per_watt: float = 0.04
    temp_tau: float = 8.0  # minutes
    job_counts: tuple[int, ...] = (1, 3, 6)
    gpu_counts: tuple[int, ...] = (1, 2, 4)
    start_timestamp: int = 1_700_000_040  # minute aligned

    def __post_init__(self):
        if self.n_minutes < 2:
            raise ValueError("n_minutes must be >= 2")
        if not 1 <= self.n_regimes <= len(self.levels):
            raise ValueError(f"n_regimes must be in [1, {len(self.levels)}]")
        for name in ("dwell_means", "job_counts", "gpu_counts"):
            if len(getattr(self, name)) < self.n_regimes:
                raise ValueError(f"{name} needs one entry per regime")
        if any(v <= 0 for v in self.levels[: self.n_regimes]):
            raise ValueError("power levels must be positive")
        if any(d < 1 for d in self.dwell_means[: self.n_regimes]):
            raise ValueError("dwell means must be >= 1 minute")
        if not 0 < self.ramp_min <= self.ramp_max:
            raise ValueError("need 0 < ramp_min <= ramp_max")
        if self.noise_std < 0 or self.util_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if self.start_timestamp % 60:
            raise ValueError("start_timestamp must be minute aligned")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthTrace:
    records: list[TelemetryRecord]
    regimes: np.ndarray  # latent regime per minute
    transitions: int = field(default=0)


def simulate(cfg: SynthConfig) -> SynthTrace:
    rng = make_rng(cfg.seed)
    n, k = cfg.n_minutes, cfg.n_regimes
    levels = np.asarray(cfg.levels[:k], dtype=np.float64)
    peak = levels.max()

    regime = np.empty(n, dtype=np.int64)
    ep_level = np.empty(n)
    ep_rate = np.empty(n)
    ep_jobs = np.empty(n, dtype=np.int64)
    ep_gpus = np.empty(n, dtype=np.int64)
    switch = np.zeros(n, dtype=np.int64)

    t = 0
    r = int(rng.integers(k))
    transitions = 0
    while t < n:
        # a single regime is one episode: nothing to switch to
        dwell = int(rng.geometric(1.0 / cfg.dwell_means[r])) if k > 1 else n
        end = min(n, t + dwell)
        regime[t:end] = r
        ep_level[t:end] = levels[r] * (1.0 + cfg.level_jitter * rng.uniform(-1.0, 1.0))
        ep_rate[t:end] = rng.uniform(cfg.ramp_min, cfg.ramp_max)
        ep_jobs[t:end] = max(0, cfg.job_counts[r] + int(rng.integers(-1, 2)))
        ep_gpus[t:end] = cfg.gpu_counts[r]
        if t > 0:
            switch[t] = 1
            transitions += 1
        t = end
        if k > 1:
            # uniform jump to any other regime
            r = int((r + 1 + rng.integers(k - 1)) % k)

    # power reacts one minute after the switch
    latent = np.empty(n)
    latent[0] = ep_level[0]
    for i in range(1, n):
        step = np.clip(ep_level[i - 1] - latent[i - 1], -ep_rate[i - 1], ep_rate[i - 1])
        latent[i] = latent[i - 1] + step
    power = np.maximum(latent + cfg.noise_std * rng.standard_normal(n), 0.0)

    frac = ep_level / peak
    gpu_util = np.clip(0.05 + 0.9 * frac + cfg.util_noise * rng.standard_normal(n), 0.0, 1.0)
    mem_util = np.clip(0.2 + 0.6 * frac + cfg.util_noise * rng.standard_normal(n), 0.0, 1.0)
    temp = np.empty(n)
    temp[0] = cfg.temp_ambient + cfg.temp_per_watt * latent[0]
    target = cfg.temp_ambient + cfg.temp_per_watt * latent
    for i in range(1, n):
        temp[i] = temp[i - 1] + (target[i] - temp[i - 1]) / cfg.temp_tau
    temp = temp + 0.2 * (cfg.noise_std > 0) * rng.standard_normal(n)

    ts = cfg.start_timestamp + 60 * np.arange(n, dtype=np.int64)
    records = [
        TelemetryRecord(int(ts[i]), float(power[i]), float(gpu_util[i]), float(mem_util[i]), float(temp[i]),
                        int(ep_jobs[i]), int(switch[i]), int(ep_gpus[i]))
        for i in range(n)
    ]
    return SynthTrace(records, regime, transitions)


def generate(cfg: SynthConfig) -> list[TelemetryRecord]:
    return simulate(cfg).records
