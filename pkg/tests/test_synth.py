import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2pd import data
from s2pd.synth import SynthConfig, generate, simulate


def power(recs):
    return np.array([r.power for r in recs])


def test_single_regime_no_noise_is_constant():
    recs = generate(SynthConfig(n_minutes=500, n_regimes=1, noise_std=0.0, level_jitter=0.0))
    assert np.all(power(recs) == 200.0)
    assert sum(r.job_switch for r in recs) == 0


def test_same_seed_bit_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    data.write_csv(a, generate(SynthConfig(seed=7, n_minutes=2000)))
    data.write_csv(b, generate(SynthConfig(seed=7, n_minutes=2000)))
    assert a.read_bytes() == b.read_bytes()
    assert generate(SynthConfig(seed=8, n_minutes=2000)) != generate(SynthConfig(seed=7, n_minutes=2000))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(100, 3000))
def test_switch_count_equals_transitions(seed, k, n):
    tr = simulate(SynthConfig(seed=seed, n_regimes=k, n_minutes=n))
    switches = np.array([r.job_switch for r in tr.records])
    assert switches.sum() == tr.transitions
    # every flagged minute starts a new episode
    assert np.all(switches[1:][np.diff(tr.regimes) != 0] == 1)
    assert all(r.power >= 0 for r in tr.records)


def test_persistence_error_positive():
    recs = generate(SynthConfig(seed=1, n_minutes=5000))
    p = power(recs)
    assert np.mean(np.abs(np.diff(p))) > 0


def test_job_count_informs_next_power_change():
    recs = generate(SynthConfig(seed=0, n_minutes=10_000))
    jobs = np.array([r.job_count for r in recs], dtype=float)
    dp = np.diff(power(recs))
    assert abs(np.corrcoef(jobs[:-1], dp)[0, 1]) > 0.1


def test_minute_grid_and_valid_csv(tmp_path):
    recs = generate(SynthConfig(n_minutes=300))
    ts = np.array([r.timestamp for r in recs])
    assert np.all(np.diff(ts) == 60) and ts[0] % 60 == 0
    assert data.resample_1min(recs) == recs
    path = tmp_path / "s.csv"
    data.write_csv(path, recs)
    assert data.read_csv(path) == recs


def test_invalid_configs():
    with pytest.raises(ValueError):
        SynthConfig(levels=(-1.0, 600.0, 1000.0))
    with pytest.raises(ValueError):
        SynthConfig(n_regimes=5)
    with pytest.raises(ValueError):
        SynthConfig(ramp_min=0.0)
