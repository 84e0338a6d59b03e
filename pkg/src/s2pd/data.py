"""Telemetry ingestion, 1-minute resampling, min-max scaling, chronological
splitting and sliding-window construction."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = ("timestamp", "power", "gpu_util", "mem_util", "temp", "job_count", "job_switch", "gpu_count")
# normalized channel order: load first, then the six telemetry features
CHANNELS = ("power", "gpu_util", "mem_util", "temperature", "job_count", "job_switch", "gpu_count")
N_FEATURES = len(CHANNELS) - 1
MAX_GAP_MIN = 5


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TelemetryRecord:
    timestamp: int
    power: float
    gpu_util: float
    mem_util: float
    temperature: float
    job_count: int
    job_switch: int
    gpu_count: int

    def values(self) -> tuple[float, ...]:
        return (self.power, self.gpu_util, self.mem_util, self.temperature,
                float(self.job_count), float(self.job_switch), float(self.gpu_count))


# CSV -------------------------------------------------------------------------


def read_csv(path: str | Path) -> list[TelemetryRecord]:
    """Parse a telemetry CSV. Every malformed row is reported with its line number."""
    records: list[TelemetryRecord] = []
    problems: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise CsvFormatError(f"line 1: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(_parse_row(row))
            except ValueError as exc:
                problems.append(f"line {lineno}: {exc}")
    if problems:
        shown = "; ".join(problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise CsvFormatError(f"{len(problems)} malformed row(s): {shown}{more}")
    return records


def _parse_row(row: list[str]) -> TelemetryRecord:
    if len(row) != len(CSV_HEADER):
        raise ValueError(f"expected {len(CSV_HEADER)} fields, got {len(row)}")
    ts, power, gpu, mem, temp, jobs, switch, gpus = (c.strip() for c in row)
    rec = TelemetryRecord(
        timestamp=int(ts),
        power=_finite(power, "power"),
        gpu_util=_finite(gpu, "gpu_util"),
        mem_util=_finite(mem, "mem_util"),
        temperature=_finite(temp, "temp"),
        job_count=int(jobs),
        job_switch=int(switch),
        gpu_count=int(gpus),
    )
    if rec.power < 0:
        raise ValueError("power must be non-negative")
    if rec.job_switch not in (0, 1):
        raise ValueError("job_switch must be 0 or 1")
    if rec.job_count < 0 or rec.gpu_count < 0:
        raise ValueError("counts must be non-negative")
    return rec


def _finite(text: str, name: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"{name} is not finite")
    return v


def write_csv(path: str | Path, records: list[TelemetryRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.timestamp, repr(r.power), repr(r.gpu_util), repr(r.mem_util), repr(r.temperature),
                        r.job_count, r.job_switch, r.gpu_count])


# resampling --------------------------------------------------------------------


def resample_1min(records: list[TelemetryRecord], max_gap: int = MAX_GAP_MIN) -> list[TelemetryRecord]:
    """Aggregate to one record per minute bucket.

    Continuous channels are averaged, ``job_switch`` is OR-ed, the counts keep
    their last value. A jump of at most ``max_gap`` minutes between buckets is
    forward-filled (filled rows carry ``job_switch=0``); longer jumps are kept
    as timestamp discontinuities, which :func:`segments` splits on.
    """
    if not records:
        return []
    for a, b in zip(records, records[1:]):
        if b.timestamp < a.timestamp:
            raise ValueError(f"records not sorted by timestamp ({a.timestamp} then {b.timestamp})")

    buckets: list[TelemetryRecord] = []
    i = 0
    n = len(records)
    while i < n:
        minute = records[i].timestamp // 60
        j = i
        while j < n and records[j].timestamp // 60 == minute:
            j += 1
        group = records[i:j]
        k = len(group)
        buckets.append(TelemetryRecord(
            timestamp=minute * 60,
            power=sum(r.power for r in group) / k,
            gpu_util=sum(r.gpu_util for r in group) / k,
            mem_util=sum(r.mem_util for r in group) / k,
            temperature=sum(r.temperature for r in group) / k,
            job_count=group[-1].job_count,
            job_switch=int(any(r.job_switch for r in group)),
            gpu_count=group[-1].gpu_count,
        ))
        i = j

    out = [buckets[0]]
    for b in buckets[1:]:
        prev = out[-1]
        gap = (b.timestamp - prev.timestamp) // 60
        if 1 < gap <= max_gap:
            for step in range(1, gap):
                out.append(TelemetryRecord(prev.timestamp + 60 * step, prev.power, prev.gpu_util, prev.mem_util,
                                           prev.temperature, prev.job_count, 0, prev.gpu_count))
        out.append(b)
    return out


def segments(timestamps: np.ndarray, step: int = 60) -> list[tuple[int, int]]:
    """Half-open index ranges of runs with exactly ``step`` seconds between rows."""
    ts = np.asarray(timestamps)
    if ts.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(ts) != step) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [ts.size]])
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def records_to_array(records: list[TelemetryRecord]) -> tuple[np.ndarray, np.ndarray]:
    """(timestamps int64 [N], values float64 [N, 7]) in :data:`CHANNELS` order."""
    ts = np.array([r.timestamp for r in records], dtype=np.int64)
    vals = np.array([r.values() for r in records], dtype=np.float64).reshape(len(records), len(CHANNELS))
    return ts, vals


def time_encoding(timestamps: np.ndarray) -> np.ndarray:
    """sin/cos of minute-of-day, shape [N, 2]."""
    minute = (np.asarray(timestamps) // 60) % 1440
    angle = 2.0 * np.pi * minute / 1440.0
    return np.stack([np.sin(angle), np.cos(angle)], axis=1)


# scaling -----------------------------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    lo: np.ndarray
    hi: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(values, dtype=np.float64) - self.lo) / safe
        return np.where(span > 0, out, 0.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        return np.asarray(scaled, dtype=np.float64) * span + self.lo

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.lo, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.hi, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"channels": list(CHANNELS), "min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Scaler:
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_scaler(train) -> Scaler:
    """Per-channel min/max over the training split (records or a [N, C] array)."""
    values = records_to_array(train)[1] if isinstance(train, list) else np.asarray(train, dtype=np.float64)
    if values.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training split")
    return Scaler(values.min(axis=0), values.max(axis=0))


def apply_scaler(scaler: Scaler, records) -> np.ndarray:
    """Normalized [N, C] float64 rows. Constant channels map to 0; out-of-range values pass through."""
    values = records_to_array(records)[1] if isinstance(records, list) else records
    return scaler.transform(values)


# splitting ---------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {fr}")

    def sizes(self, n: int) -> tuple[int, int, int]:
        # floor train and val; test takes the remainder
        n_train = int(math.floor(n * self.train_frac + 1e-9))
        n_val = int(math.floor(n * self.val_frac + 1e-9))
        return n_train, n_val, n - n_train - n_val


def chronological_split(records, spec: SplitSpec = SplitSpec(), min_len: int = 1):
    """Contiguous train/val/test partitions in time order.

    Train and validation sizes are floored and the test split takes the
    remainder, so 10 rows at 0.7/0.15/0.15 become 7/1/2. Raises if any part
    would hold fewer than ``min_len`` rows.
    """
    n = len(records)
    a, b, c = spec.sizes(n)
    if min(a, b, c) < min_len:
        raise ValueError(f"{n} records give split sizes {a}/{b}/{c}; each part needs at least {min_len}")
    return records[:a], records[a:a + b], records[a + b:]


# windows -----------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    history_load: np.ndarray  # [L]
    history_feat: np.ndarray  # [L, d_x]
    anchor: float
    future_load: np.ndarray  # [H]


def window_anchors(n: int, L: int, H: int, stride: int = 1, timestamps: np.ndarray | None = None) -> np.ndarray:
    """Anchor indices t with t-L+1 >= start and t+H < end inside each contiguous run."""
    if L < 1 or H < 1 or stride < 1:
        raise ValueError("L, H and stride must be >= 1")
    runs = segments(timestamps) if timestamps is not None else [(0, n)]
    out = []
    for s, e in runs:
        if e - s >= L + H:
            out.append(np.arange(s + L - 1, e - H, stride))
    if not out:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(out).astype(np.int64)


def make_windows(values: np.ndarray, L: int, H: int, stride: int = 1,
                 timestamps: np.ndarray | None = None) -> list[Window]:
    """Slice normalized rows (load in column 0) into supervised windows.

    A series shorter than L+H yields no windows. With ``timestamps`` given,
    no window crosses a timestamp discontinuity.
    """
    values = np.asarray(values)
    windows = []
    for t in window_anchors(len(values), L, H, stride, timestamps):
        hist = values[t - L + 1:t + 1]
        windows.append(Window(hist[:, 0], hist[:, 1:], float(values[t, 0]), values[t + 1:t + H + 1, 0]))
    return windows


@dataclass
class WindowSet:
    """Stacked windows ready for batched models."""

    tokens: np.ndarray  # [N, L, d_u] float32, column 0 is load
    targets: np.ndarray  # [N, H] float32
    anchor_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def anchors(self) -> np.ndarray:
        return self.tokens[:, -1, 0]

    @property
    def points(self) -> np.ndarray:
        """Point-wise student inputs v_t = [P_t; x_t], shape [N, d_u]."""
        return self.tokens[:, -1, :]

    def subset(self, idx) -> WindowSet:
        return WindowSet(self.tokens[idx], self.targets[idx], self.anchor_index[idx])

    @classmethod
    def from_windows(cls, windows: list[Window]) -> WindowSet:
        tokens = np.stack([np.concatenate([w.history_load[:, None], w.history_feat], axis=1) for w in windows])
        targets = np.stack([w.future_load for w in windows])
        return cls(tokens.astype(np.float32), targets.astype(np.float32), np.arange(len(windows)))


def build_window_set(values: np.ndarray, L: int, H: int, stride: int = 1,
                     timestamps: np.ndarray | None = None) -> WindowSet:
    """Vectorized equivalent of ``WindowSet.from_windows(make_windows(...))``."""
    values = np.asarray(values, dtype=np.float32)
    anchors = window_anchors(len(values), L, H, stride, timestamps)
    C = values.shape[1]
    if anchors.size == 0:
        return WindowSet(np.zeros((0, L, C), np.float32), np.zeros((0, H), np.float32), anchors)
    hist_idx = anchors[:, None] + np.arange(-L + 1, 1)[None, :]
    fut_idx = anchors[:, None] + np.arange(1, H + 1)[None, :]
    return WindowSet(values[hist_idx], values[fut_idx, 0], anchors)


# full preparation --------------------------------------------------------------


@dataclass
class SplitSeries:
    timestamps: np.ndarray
    values: np.ndarray  # normalized [N, d_u]


@dataclass
class PreparedData:
    scaler: Scaler
    train: WindowSet
    val: WindowSet
    test: WindowSet
    series: dict[str, SplitSeries]

    @property
    def d_u(self) -> int:
        return self.train.tokens.shape[2]


def prepare(records: list[TelemetryRecord], L: int, H: int, split: SplitSpec = SplitSpec(), stride: int = 1,
            time_features: bool = False, max_gap: int = MAX_GAP_MIN) -> PreparedData:
    """Resample, split in time order, fit the scaler on train only, then window each split."""
    rows = resample_1min(records, max_gap=max_gap)
    ts, raw = records_to_array(rows)
    n_train, n_val, _ = split.sizes(len(rows))
    chronological_split(rows, split, min_len=L + H)
    scaler = fit_scaler(raw[:n_train])
    norm = scaler.transform(raw)
    if time_features:
        norm = np.concatenate([norm, time_encoding(ts)], axis=1)
    bounds = {"train": (0, n_train), "val": (n_train, n_train + n_val), "test": (n_train + n_val, len(rows))}
    series = {k: SplitSeries(ts[a:b], norm[a:b]) for k, (a, b) in bounds.items()}
    sets = {k: build_window_set(s.values, L, H, stride if k == "train" else 1, s.timestamps)
            for k, s in series.items()}
    return PreparedData(scaler, sets["train"], sets["val"], sets["test"], series)
