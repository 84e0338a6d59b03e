import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from s2pd import distill as ds
from s2pd import numerics as nx
from s2pd import student as sm
from s2pd import teacher as tc
from s2pd.data import build_window_set
from s2pd.numerics import Tensor

# projection weights ------------------------------------------------------------------


def test_convex_project_hand_arithmetic():
    assert ds.convex_project([1.0, 2.0, 3.0], [0.5, 0.3, 0.2]) == 1.0 * 0.5 + 2.0 * 0.3 + 3.0 * 0.2
    assert ds.convex_project([1.0, 2.0, 3.0], [0.5, 0.3, 0.2]) == pytest.approx(1.7, abs=1e-15)
    assert ds.convex_project([4.0, 9.0], [1.0, 0.0]) == 4.0


def test_convex_project_rejects_bad_weights():
    with pytest.raises(ValueError):
        ds.convex_project([1.0, 2.0], [0.6, 0.6])
    with pytest.raises(ValueError):
        ds.convex_project([1.0, 2.0], [1.5, -0.5])
    with pytest.raises(ValueError):
        ds.convex_project([1.0, 2.0, 3.0], [0.5, 0.5])


def test_default_weights():
    np.testing.assert_allclose(ds.default_weights(4, 1.0), [0.25] * 4)
    np.testing.assert_allclose(ds.default_weights(2, 0.5), [2 / 3, 1 / 3])
    with pytest.raises(ValueError):
        ds.default_weights(3, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(0.01, 1.0))
def test_default_weights_convex_and_monotone(H, gamma):
    w = ds.default_weights(H, gamma)
    assert abs(w.sum() - 1.0) < 1e-9 and np.all(w >= 0)
    assert np.all(np.diff(w) <= 1e-15)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)), st.floats(0.05, 1.0))
def test_convex_project_bounded(traj, gamma):
    y = ds.convex_project(traj, ds.default_weights(traj.size, gamma))
    span = 1e-9 * max(1.0, np.abs(traj).max())
    assert traj.min() - span <= y <= traj.max() + span


# losses -----------------------------------------------------------------------------------


def test_logit_and_mse_examples():
    assert ds.logit_loss(Tensor([0.5]), [0.3]).item() == pytest.approx(0.04)
    assert ds.mse_loss(Tensor([0.5]), [0.4]).item() == pytest.approx(0.01)


def test_composite_example():
    assert ds.composite_loss(0.01, 0.04, 0.09, 0.1) == pytest.approx(0.059)
    with pytest.raises(ValueError):
        ds.composite_loss(0.01, 0.04, 0.09, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 5))
def test_composite_monotone(m, l, f, lam, d):
    base = ds.composite_loss(m, l, f, lam)
    assert ds.composite_loss(m + d, l, f, lam) >= base
    assert ds.composite_loss(m, l + d, f, lam) >= base
    assert ds.composite_loss(m, l, f + d, lam) >= base


def test_feature_loss_zero_when_matched():
    c = np.array([[1.0, 2.0]])
    W = Tensor(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    b = Tensor(np.zeros(3))
    assert ds.feature_loss(Tensor([[1.0, 2.0, 3.0]]), c, W, b).item() == 0.0
    assert ds.feature_loss(Tensor([[1.0, 2.0, 4.0]]), c, W, b).item() == 1.0


def small_pair(seed=0):
    s = sm.StudentModel(sm.StudentConfig(d_u=3, d_h=8, d_z=4), seed=seed)
    s.astype(np.float64)
    rng = np.random.default_rng(seed + 10)
    s.params["head.w"].data = rng.normal(scale=0.3, size=8)
    s.params["s1.b"].data = rng.normal(scale=0.3, size=8)
    s.params["s2.b"].data = rng.normal(scale=0.3, size=8)
    p = ds.Projection(8, 4, seed=seed + 1)
    p.astype(np.float64)
    return s, p


def test_composite_student_loss_gradient_fd():
    s, p = small_pair()
    rng = np.random.default_rng(3)
    pts = rng.uniform(size=(5, 3))
    truth, soft, ctx = rng.uniform(size=5), rng.uniform(size=5), rng.normal(size=(5, 8))

    def loss():
        return ds.student_loss_terms(s, p, pts, truth, soft, ctx, lam=0.1)["total"]

    s.zero_grad()
    p.zero_grad()
    loss().backward()
    for q in s.parameters() + p.parameters():
        def f():
            with nx.no_grad():
                return loss().item()
        assert nx.relative_error(q.grad, nx.numeric_grad(f, q.data)) < 1e-3, q.name


def test_one_hot_logit_blends_truth_and_teacher():
    s, p = small_pair()
    rng = np.random.default_rng(4)
    pts = rng.uniform(size=(6, 3))
    truth, traj = rng.uniform(size=6), rng.uniform(size=(6, 3))
    soft = ds.convex_project(traj, [1.0, 0.0, 0.0])
    terms = ds.student_loss_terms(s, p, pts, truth, soft, None, lam=0.0)
    pred = sm.predict(s, pts)
    mid = (truth + traj[:, 0]) / 2
    # a + b = 2 * mean((pred - mid)^2) + const, so the minimizer is the blend
    expected = 2 * np.mean((pred - mid) ** 2) + np.mean((truth - traj[:, 0]) ** 2) / 2
    assert terms["total"].item() == pytest.approx(expected, rel=1e-10)
    assert terms["feat"].item() == 0.0


# training loops ---------------------------------------------------------------------------


def toy_sets(n=400, L=6, H=3, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    load = 0.5 + 0.3 * np.sin(t / 9.0) + 0.02 * rng.normal(size=n)
    feats = np.stack([np.cos(t / 9.0), rng.uniform(size=n)], axis=1)
    vals = np.concatenate([load[:, None], feats], axis=1)
    cut = int(0.8 * n)
    return build_window_set(vals[:cut], L, H), build_window_set(vals[cut:], L, H)


TCFG = tc.TeacherConfig(L=6, H=3, d_u=3, d_m=8, n_layers=1, n_heads=2, d_ff=8)
SCFG = sm.StudentConfig(d_u=3, d_h=8, d_z=4)


def test_teacher_training_loss_decreases():
    tr, va = toy_sets()
    res = ds.train_teacher(tr, va, TCFG, ds.TrainConfig(epochs=5, lr=3e-3, patience=10))
    losses = [h.train_loss for h in res.history]
    assert losses[-1] < losses[0]


def test_lr_zero_keeps_history_constant():
    tr, va = toy_sets()
    res = ds.distill_student(tr, va, None, SCFG,
                             ds.DistillConfig(lam=0.0, use_logit=False, train=ds.TrainConfig(epochs=3, lr=0.0)))
    # per-epoch sums differ only by the shuffled summation order
    assert max(h.train_loss for h in res.history) == pytest.approx(min(h.train_loss for h in res.history), rel=1e-6)
    assert len({h.val_mae for h in res.history}) == 1


@pytest.fixture(scope="module")
def toy_teacher():
    tr, va = toy_sets()
    return ds.train_teacher(tr, va, TCFG, ds.TrainConfig(epochs=2, lr=3e-3)).model


def test_teacher_frozen_during_distillation(toy_teacher):
    tr, va = toy_sets()
    toy_teacher.zero_grad()
    before = {k: v.data.tobytes() for k, v in toy_teacher.params.items()}
    for cache in (True, False):
        ds.distill_student(tr, va, toy_teacher, SCFG,
                           ds.DistillConfig(cache_teacher=cache, train=ds.TrainConfig(epochs=1)))
    assert {k: v.data.tobytes() for k, v in toy_teacher.params.items()} == before
    assert all(p.grad is None for p in toy_teacher.parameters())


def test_cached_targets_match_on_the_fly(toy_teacher):
    tr, va = toy_sets()
    runs = [ds.distill_student(tr, va, toy_teacher, SCFG,
                               ds.DistillConfig(cache_teacher=c, train=ds.TrainConfig(epochs=2)))
            for c in (True, False)]
    for k in runs[0].model.params:
        np.testing.assert_allclose(runs[0].model.params[k].data, runs[1].model.params[k].data, atol=1e-6)


def test_distillation_deterministic(toy_teacher):
    tr, va = toy_sets()
    cfg = ds.DistillConfig(train=ds.TrainConfig(epochs=2, seed=5))
    a = ds.distill_student(tr, va, toy_teacher, SCFG, cfg)
    b = ds.distill_student(tr, va, toy_teacher, SCFG, cfg)
    for k in a.model.params:
        assert a.model.params[k].data.tobytes() == b.model.params[k].data.tobytes()
    assert a.history == b.history


def test_distill_needs_teacher():
    tr, va = toy_sets()
    with pytest.raises(ValueError):
        ds.distill_student(tr, va, None, SCFG, ds.DistillConfig())


def test_horizon_mismatch(toy_teacher):
    tr, va = toy_sets()
    with pytest.raises(ValueError):
        ds.distill_student(tr, va, toy_teacher, SCFG, ds.DistillConfig(weights=(0.5, 0.5)))


def test_early_stopping_restores_best():
    tr, va = toy_sets()
    res = ds.distill_student(tr, va, None, SCFG, ds.DistillConfig(
        lam=0.0, use_logit=False, train=ds.TrainConfig(epochs=30, lr=5e-2, patience=2)))
    best = min(h.val_mae for h in res.history)
    assert res.history[res.best_epoch - 1].val_mae == best
    pred = sm.predict(res.model, va.points)
    assert 100 * np.mean(np.abs(pred - va.targets[:, 0])) == pytest.approx(best, rel=1e-5)


def test_nan_loss_raises():
    tr, va = toy_sets()
    tr.tokens[3, -1, 1] = np.nan
    with pytest.raises(nx.TrainingError):
        ds.distill_student(tr, va, None, SCFG, ds.DistillConfig(lam=0.0, use_logit=False,
                                                                 train=ds.TrainConfig(epochs=1)))
