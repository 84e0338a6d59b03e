import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from s2pd import data
from s2pd.data import TelemetryRecord as R


def rec(ts, power=100.0, switch=0, jobs=1, gpus=1):
    return R(ts, power, 0.5, 0.4, 40.0, jobs, switch, gpus)


def series(n, start=600):
    return [rec(start + 60 * i, power=float(i)) for i in range(n)]


# resampling --------------------------------------------------------------------


def test_resample_mean_within_minute():
    out = data.resample_1min([rec(600, 100.0), rec(630, 200.0)])
    assert len(out) == 1 and out[0].power == 150.0 and out[0].timestamp == 600


def test_resample_or_switch_and_last_counts():
    out = data.resample_1min([rec(600, switch=1, jobs=2), rec(610, switch=0, jobs=5, gpus=3)])
    assert out[0].job_switch == 1 and out[0].job_count == 5 and out[0].gpu_count == 3


def test_resample_idempotent_on_minute_grid():
    recs = series(20)
    assert data.resample_1min(recs) == recs


def test_resample_fills_short_gap():
    out = data.resample_1min([rec(600, 10.0, switch=1), rec(780, 20.0)], max_gap=5)
    assert [r.timestamp for r in out] == [600, 660, 720, 780]
    assert [r.power for r in out] == [10.0, 10.0, 10.0, 20.0]
    assert [r.job_switch for r in out] == [1, 0, 0, 0]


def test_resample_keeps_long_gap_as_break():
    out = data.resample_1min([rec(600), rec(600 + 60 * 7)], max_gap=5)
    assert len(out) == 2
    ts, _ = data.records_to_array(out)
    assert data.segments(ts) == [(0, 1), (1, 2)]


def test_resample_empty_and_unsorted():
    assert data.resample_1min([]) == []
    with pytest.raises(ValueError):
        data.resample_1min([rec(660), rec(600)])


# scaler --------------------------------------------------------------------------


def test_scaler_examples():
    s = data.fit_scaler(np.array([[2.0, 5.0], [4.0, 5.0]]))
    np.testing.assert_array_equal(s.lo, [2.0, 5.0])
    np.testing.assert_array_equal(s.hi, [4.0, 5.0])
    np.testing.assert_array_equal(s.transform(np.array([[3.0, 5.0], [6.0, 7.0]])), [[0.5, 0.0], [2.0, 0.0]])


def test_scaler_empty_train():
    with pytest.raises(ValueError):
        data.fit_scaler(np.zeros((0, 3)))


def test_scaler_dict_round_trip():
    s = data.fit_scaler(np.array([[1.0, 2.0], [3.0, 9.0]]))
    t = data.Scaler.from_dict(s.to_dict())
    assert t.fingerprint() == s.fingerprint()


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 5)),
                  elements=st.floats(-1e4, 1e4)))
def test_scaler_round_trip_and_unit_range(x):
    s = data.fit_scaler(x)
    y = s.transform(x)
    assert y.min() >= 0.0 and y.max() <= 1.0
    live = s.hi > s.lo
    np.testing.assert_allclose(s.inverse(y)[:, live], x[:, live], atol=1e-6 * max(1.0, np.abs(x).max()))
    assert np.all(y[:, ~live] == 0.0)


def test_scaler_fit_on_train_only():
    recs = [rec(600 + 60 * i, power=float(i % 50) + (1000.0 if i > 150 else 0.0)) for i in range(200)]
    prep = data.prepare(recs, L=5, H=2)
    train_only = data.fit_scaler(recs[:140])
    assert prep.scaler.fingerprint() == train_only.fingerprint()
    assert data.fit_scaler(recs).fingerprint() != prep.scaler.fingerprint()
    assert prep.series["test"].values[:, 0].max() > 1.0


# splitting -------------------------------------------------------------------------


def test_split_100():
    parts = data.chronological_split(series(100))
    assert [len(p) for p in parts] == [70, 15, 15]


def test_split_10_rounding_rule():
    parts = data.chronological_split(series(10))
    assert [len(p) for p in parts] == [7, 1, 2]


def test_split_invalid_fractions():
    with pytest.raises(ValueError):
        data.SplitSpec(0.5, 0.5, 0.5)


def test_split_too_short():
    with pytest.raises(ValueError):
        data.chronological_split(series(10), min_len=3)


@settings(max_examples=50, deadline=None)
@given(st.integers(20, 400))
def test_split_ordered_and_sized(n):
    tr, va, te = data.chronological_split(series(n))
    assert len(tr) + len(va) + len(te) == n
    assert tr[-1].timestamp < va[0].timestamp <= va[-1].timestamp < te[0].timestamp
    for part, frac in zip((tr, va, te), (0.7, 0.15, 0.15)):
        assert abs(len(part) - frac * n) < 2


# windows --------------------------------------------------------------------------------


def values(n, c=3):
    v = np.arange(n * c, dtype=np.float64).reshape(n, c)
    v[:, 0] = np.arange(n)
    return v


def test_window_counts():
    L, H = 6, 3
    assert len(data.make_windows(values(L + H), L, H)) == 1
    assert len(data.make_windows(values(L + H + 4), L, H)) == 5
    assert len(data.make_windows(values(L + H + 4), L, H, stride=2)) == 3
    assert data.make_windows(values(L + H - 1), L, H) == []


def test_window_alignment():
    v = values(20)
    for w in data.make_windows(v, 5, 3):
        assert w.anchor == w.history_load[-1]
        assert w.future_load[0] == w.anchor + 1
        assert w.history_feat.shape == (5, 2)


def test_windows_respect_breaks():
    ts = np.concatenate([np.arange(10) * 60, 6000 + np.arange(10) * 60])
    ws = data.make_windows(values(20), 4, 2, timestamps=ts)
    assert len(ws) == 2 * (10 - 6 + 1)
    for w in ws:
        assert np.all(np.diff(np.concatenate([w.history_load, w.future_load])) == 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 5), st.integers(1, 3), st.integers(0, 30))
def test_vectorized_windows_match_list(L, H, stride, extra):
    v = values(L + H + extra)
    a = data.build_window_set(v, L, H, stride)
    ws = data.make_windows(v, L, H, stride)
    assert len(a) == len(ws) == (extra // stride + 1)
    if ws:
        b = data.WindowSet.from_windows(ws)
        np.testing.assert_array_equal(a.tokens, b.tokens)
        np.testing.assert_array_equal(a.targets, b.targets)
        np.testing.assert_array_equal(a.targets[:, 0], a.anchors + 1)


def test_prepare_no_window_spans_split():
    recs = series(300)
    prep = data.prepare(recs, L=8, H=4)
    for name in ("train", "val", "test"):
        s = prep.series[name]
        ws = getattr(prep, name)
        assert len(ws) == len(s.values) - 8 - 4 + 1
    assert prep.d_u == 7


def test_prepare_time_features():
    prep = data.prepare(series(300), L=8, H=4, time_features=True)
    assert prep.d_u == 9


# CSV ------------------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    recs = [R(600 + 60 * i, 100.5 + i, 0.25, 0.5, 41.0, 2, i % 2, 4) for i in range(5)]
    p = tmp_path / "t.csv"
    data.write_csv(p, recs)
    assert data.read_csv(p) == recs


def test_csv_reports_bad_lines(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(",".join(data.CSV_HEADER) + "\n"
                 "600,100,0.5,0.5,40,1,0,1\n"
                 "660,abc,0.5,0.5,40,1,0,1\n"
                 "720,100,0.5,0.5,40,1,2,1\n"
                 "780,100,0.5\n")
    with pytest.raises(data.CsvFormatError) as info:
        data.read_csv(p)
    msg = str(info.value)
    assert "line 3" in msg and "line 4" in msg and "line 5" in msg and "line 2" not in msg


def test_csv_bad_header(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(data.CsvFormatError):
        data.read_csv(p)
