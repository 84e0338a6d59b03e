"""Deployment metrics: parameter count, FP32 memory, on-disk size and
single-threaded CPU latency (mean and nearest-rank p95)."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

from . import checkpoint as ckpt
from . import student as st
from . import teacher as tc
from .numerics import make_rng


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchReport:
    model_kind: str
    params: int
    fp32_mem_kb: float
    on_disk_kb: float
    latency_mean_ms: float
    latency_p95_ms: float
    latency_min_ms: float
    batch_size: int
    warmup: int
    iters: int
    threads: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def nearest_rank(samples, q: float) -> float:
    """q-quantile by nearest rank: the ceil(q*n)-th smallest sample, no interpolation."""
    xs = sorted(samples)
    if not xs:
        raise ValueError("no samples")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    return float(xs[max(1, math.ceil(q * len(xs))) - 1])


def _single_thread_guard():
    limiter = threadpool_limits(limits=1)
    busy = [p for p in threadpool_info() if p.get("num_threads", 1) != 1]
    if busy:
        limiter.restore_original_limits()
        names = ", ".join(f"{p.get('internal_api')}={p.get('num_threads')}" for p in busy)
        raise BenchError(f"could not pin thread pools to one thread: {names}")
    return limiter


def _pin_cpu() -> str:
    if not hasattr(os, "sched_getaffinity"):
        return "BLAS/OpenMP pools limited to 1 thread"
    cpus = sorted(os.sched_getaffinity(0))
    try:
        os.sched_setaffinity(0, {cpus[0]})
    except OSError:
        return "BLAS/OpenMP pools limited to 1 thread; affinity unchanged"
    return f"BLAS/OpenMP pools limited to 1 thread; pinned to cpu {cpus[0]}"


def bench_model(model, batch_size: int = 1, warmup: int = 50, iters: int = 1000, seed: int = 0,
                on_disk_bytes: int = 0) -> BenchReport:
    if iters < 100:
        raise ValueError("need at least 100 measured iterations")
    if batch_size < 1 or warmup < 0:
        raise ValueError("batch_size must be >= 1 and warmup >= 0")
    rng = make_rng(seed)
    if isinstance(model, tc.TeacherModel):
        kind = "teacher"
        x = rng.uniform(size=(batch_size, model.config.L, model.config.d_u)).astype(np.float32)

        def call():
            return tc.predict_batch(model, x)
    elif isinstance(model, st.StudentModel):
        kind = "student"
        x = rng.uniform(size=(batch_size, model.config.d_u)).astype(np.float32)

        def call():
            return st.predict(model, x)
    else:
        raise TypeError(f"cannot benchmark {type(model).__name__}")

    affinity = None
    if hasattr(os, "sched_getaffinity"):
        affinity = os.sched_getaffinity(0)
    limiter = _single_thread_guard()
    try:
        note = _pin_cpu()
        for _ in range(warmup):
            call()
        samples = np.empty(iters)
        clock = time.perf_counter_ns
        for i in range(iters):
            t0 = clock()
            call()
            samples[i] = clock() - t0
    finally:
        limiter.restore_original_limits()
        if affinity is not None:
            os.sched_setaffinity(0, affinity)
    ms = samples / 1e6
    n = model.count_params()
    return BenchReport(
        model_kind=kind,
        params=n,
        fp32_mem_kb=4 * n / 1024,
        on_disk_kb=on_disk_bytes / 1024,
        latency_mean_ms=float(ms.mean()),
        latency_p95_ms=nearest_rank(ms, 0.95),
        latency_min_ms=float(ms.min()),
        batch_size=batch_size,
        warmup=warmup,
        iters=iters,
        threads=note,
    )


def bench_latency(path: str | Path, batch_size: int = 1, warmup: int = 50, iters: int = 1000,
                  seed: int = 0, skip_embedding: bool = True) -> BenchReport:
    """Load a checkpoint and time its forward pass.

    Students are timed on the residual-head path only; ``skip_embedding``
    decides whether the embedding head is loaded and counted at all.
    """
    model = ckpt.load(path, skip_embedding=skip_embedding)
    return bench_model(model, batch_size, warmup, iters, seed, on_disk_bytes=ckpt.measure_disk(path))
