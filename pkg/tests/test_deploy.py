import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import nearest_rank_oracle
from s2pd import bench
from s2pd import checkpoint as ckpt
from s2pd import student as sm
from s2pd import teacher as tc

TCFG = tc.TeacherConfig(L=6, H=3, d_u=3, d_m=8, n_layers=1, n_heads=2, d_ff=8)
SCFG = sm.StudentConfig(d_u=3, d_h=8, d_z=4)


def trained_like(model, seed=0):
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data = rng.normal(size=p.shape).astype(np.float32)
    return model


# checkpoints -----------------------------------------------------------------------


def test_teacher_round_trip_bit_identical(tmp_path):
    m = trained_like(tc.TeacherModel(TCFG))
    path = tmp_path / "t.ckpt"
    n = ckpt.save(m, path)
    assert n == ckpt.measure_disk(path)
    back = ckpt.load(path)
    x = np.random.default_rng(1).uniform(size=(4, 6, 3)).astype(np.float32)
    a, ca = tc.predict_batch(m, x)
    b, cb = tc.predict_batch(back, x)
    assert a.tobytes() == b.tobytes() and ca.tobytes() == cb.tobytes()
    assert ckpt.to_bytes(back) == ckpt.to_bytes(m)


def test_student_round_trip_and_skip_embedding(tmp_path):
    m = trained_like(sm.StudentModel(SCFG))
    path = tmp_path / "s.ckpt"
    ckpt.save(m, path)
    full = ckpt.load(path)
    lean = ckpt.load(path, skip_embedding=True)
    assert full.has_embedding and not lean.has_embedding
    x = np.random.default_rng(2).uniform(size=(5, 3)).astype(np.float32)
    assert sm.predict(full, x).tobytes() == sm.predict(m, x).tobytes() == sm.predict(lean, x).tobytes()


def test_deploy_checkpoint_is_smaller(tmp_path):
    m = sm.StudentModel(sm.StudentConfig())
    full = ckpt.save(m, tmp_path / "a.ckpt")
    lean = ckpt.save(m, tmp_path / "b.ckpt", skip_embedding=True)
    assert full - lean == 4 * (64 * 16 + 16) + (2 + 7 + 4 + 8) + (2 + 7 + 4 + 4)
    assert not ckpt.load(tmp_path / "b.ckpt").has_embedding


def test_payload_dominates_size():
    m = tc.TeacherModel(tc.TeacherConfig())
    blob = ckpt.to_bytes(m)
    assert 4 * m.count_params() < len(blob) < 4 * m.count_params() + 2048


def test_save_is_deterministic(tmp_path):
    a = ckpt.save(tc.TeacherModel(TCFG, seed=3), tmp_path / "a")
    b = ckpt.save(tc.TeacherModel(TCFG, seed=3), tmp_path / "b")
    assert a == b and (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_corrupt_checkpoints():
    blob = ckpt.to_bytes(sm.StudentModel(SCFG))
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(blob[:-3])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(blob + b"\0")
    bad_version = blob[:4] + (9).to_bytes(2, "little") + blob[6:]
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(bad_version)


# bench -----------------------------------------------------------------------------


def test_nearest_rank_examples():
    assert bench.nearest_rank(range(1, 101), 0.95) == 95
    assert bench.nearest_rank([5.0], 0.95) == 5.0
    assert bench.nearest_rank([3, 1, 2], 0.5) == 2
    with pytest.raises(ValueError):
        bench.nearest_rank([], 0.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=300), st.floats(0.01, 1.0))
def test_nearest_rank_matches_oracle(xs, q):
    assert bench.nearest_rank(xs, q) == nearest_rank_oracle(xs, q)
    assert bench.nearest_rank(xs, q) in xs


def test_bench_student_report(tmp_path):
    m = sm.StudentModel(sm.StudentConfig())
    path = tmp_path / "s.ckpt"
    ckpt.save(m, path)
    r = bench.bench_latency(path, warmup=5, iters=100)
    assert r.model_kind == "student" and r.params == 4737
    assert r.fp32_mem_kb == pytest.approx(4 * 4737 / 1024)
    assert r.on_disk_kb == pytest.approx(ckpt.measure_disk(path) / 1024)
    assert 0 < r.latency_min_ms <= r.latency_mean_ms and r.latency_min_ms <= r.latency_p95_ms
    assert math.isfinite(r.latency_p95_ms)


def test_bench_needs_100_iters():
    with pytest.raises(ValueError):
        bench.bench_model(sm.StudentModel(SCFG), iters=99)


def test_bench_teacher_batch():
    r = bench.bench_model(tc.TeacherModel(TCFG), batch_size=4, warmup=2, iters=100)
    assert r.model_kind == "teacher" and r.batch_size == 4 and r.params == TCFG.expected_params()
