import numpy as np
import pytest

from gstam.errors import ConfigError, DimensionError, TrainingError
from gstam.inference import infer_trajectories, infer_trajectory, segment_windows
from gstam.synthdata import SynthConfig, VideoSample, generate_dataset
from gstam.trainer import (AdamState, TrainConfig, adam_step, build_model, fit, format_log_csv, sample_segment,
                           usable_videos)


def small_data(n=40, seed=0, **kw):
    cfg = SynthConfig(n_videos=n, dim_per_part=4, **kw)
    return cfg, generate_dataset(cfg, seed)


def tiny_cfg(**kw):
    base = dict(epochs=3, batch=8, eval_every=1, hidden=4)
    base.update(kw)
    return TrainConfig.desk(**base)


# -- Adam --------------------------------------------------------------------------

def test_adam_zero_grad_keeps_params():
    theta = {"w": np.array([1.0, -2.0])}
    out = adam_step(theta, {"w": np.zeros(2)}, AdamState(), lr=1e-3)
    np.testing.assert_array_equal(out["w"], theta["w"])


def test_adam_first_step_hand_evaluated():
    out = adam_step({"w": np.zeros(1)}, {"w": np.ones(1)}, AdamState(), lr=1e-3)
    # m_hat = 1, v_hat = 1 at t = 1
    assert out["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-15)
    assert out["w"][0] == pytest.approx(-1e-3, rel=1e-7)


def test_adam_weight_decay_enters_gradient():
    state = AdamState()
    out = adam_step({"w": np.array([2.0])}, {"w": np.zeros(1)}, state, lr=0.1, weight_decay=0.5)
    assert out["w"][0] == pytest.approx(2.0 - 0.1 / (1 + 1e-8), rel=1e-14)
    assert state.m["w"][0] == pytest.approx(0.1 * 1.0)


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=1e-3)


def test_adam_matches_reference_recurrence():
    rng = np.random.default_rng(0)
    theta = rng.normal(size=3)
    grads = rng.normal(size=(5, 3))
    state, cur = AdamState(), {"w": theta.copy()}
    m = v = np.zeros(3)
    ref = theta.copy()
    for t, g in enumerate(grads, 1):
        cur = adam_step(cur, {"w": g}, state, 0.01, 0.1)
        g = g + 0.1 * ref
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(cur["w"], ref, rtol=1e-14)
    assert state.step == 5


# -- schedule and config --------------------------------------------------------------

def test_full_schedule_exact_values():
    cfg = TrainConfig()
    assert [cfg.lr_at(e) for e in (0, 50, 99)] == [3e-4] * 3
    assert [cfg.lr_at(e) for e in (100, 150, 199)] == [9e-5] * 3


def test_desk_schedule():
    cfg = TrainConfig.desk()
    assert (cfg.batch, cfg.epochs, cfg.decay_epoch) == (16, 60, 30)
    assert cfg.lr_at(29) == 3e-3 and cfg.lr_at(30) == 9e-4


def test_config_validation():
    for bad in (dict(T=0), dict(batch=0), dict(lam=-1.0), dict(regularizer="l1"), dict(variant="lstm")):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


# -- segments and windows -------------------------------------------------------------------

def _video(L, d=2):
    return VideoSample(0, np.arange(d * L, dtype=float).reshape(d, L), np.zeros(1, dtype=np.int64),
                       np.zeros((1, L), dtype=bool))


def test_segment_whole_video_when_length_is_T():
    F, _, start = sample_segment(_video(6), 6, np.random.default_rng(0))
    assert start == 0 and F.shape == (2, 6)


def test_segment_windows_of_long_trajectory():
    rng = np.random.default_rng(0)
    starts = {sample_segment(_video(169), 6, rng)[2] for _ in range(5000)}
    assert starts == set(range(164))


def test_segment_reproducible_and_short_excluded():
    a = sample_segment(_video(20), 6, np.random.default_rng(3))[2]
    b = sample_segment(_video(20), 6, np.random.default_rng(3))[2]
    assert a == b
    assert sample_segment(_video(5), 6, np.random.default_rng(0)) is None
    assert len(usable_videos([_video(5), _video(6), _video(3)], 6)) == 1


def test_inference_windows():
    assert segment_windows(12, 6) == [(0, 6), (6, 12)]
    assert segment_windows(14, 6) == [(0, 6), (6, 12), (8, 14)]
    assert segment_windows(6, 6) == [(0, 6)]
    assert segment_windows(5, 6) == []


def test_trajectory_average_and_simplex():
    cfg, vids = small_data(6, T_total=14)
    model = build_model(*cfg.specs(), cfg.d, tiny_cfg())
    probs = infer_trajectory(model, vids[0].frames, 6)
    from gstam.branches import predict_proba
    segs = [predict_proba(model, vids[0].frames[:, s:e]) for s, e in [(0, 6), (6, 12), (8, 14)]]
    for i, p in enumerate(probs):
        np.testing.assert_allclose(p, np.mean([s[i] for s in segs], axis=0), atol=1e-14)
        assert abs(p.sum() - 1) <= 1e-9


def test_identical_segments_average_to_one_segment():
    cfg, _ = small_data(1)
    model = build_model(*cfg.specs(), cfg.d, tiny_cfg())
    seg = np.random.default_rng(0).normal(size=(cfg.d, 6))
    probs = infer_trajectory(model, np.concatenate([seg, seg], axis=1), 6)
    from gstam.branches import predict_proba
    for p, q in zip(probs, predict_proba(model, seg)):
        np.testing.assert_allclose(p, q, atol=1e-15)


def test_short_trajectories_are_excluded_from_inference():
    cfg, vids = small_data(3)
    model = build_model(*cfg.specs(), cfg.d, tiny_cfg())
    out = infer_trajectories(model, [vids[0].frames[:, :4], vids[1].frames], 6)
    assert out[0] is None and out[1] is not None


# -- fit ---------------------------------------------------------------------------------

def test_fit_is_deterministic():
    cfg, vids = small_data()
    tc = tiny_cfg()
    logs, params = [], []
    for _ in range(2):
        m = build_model(*cfg.specs(), cfg.d, tc)
        r = fit(m, vids, tc, val=vids[:10])
        logs.append(format_log_csv(r.log))
        params.append({k: t.data.copy() for k, t in m.parameters().items()})
    assert logs[0] == logs[1]
    for k in params[0]:
        assert np.array_equal(params[0][k], params[1][k])


def test_lambda_zero_matches_no_regularizer():
    cfg, vids = small_data()
    runs = []
    for reg, lam in (("none", 0.02), ("group", 0.0)):
        tc = tiny_cfg(regularizer=reg, lam=lam)
        runs.append([row["loss_class"] for row in fit(build_model(*cfg.specs(), cfg.d, tc), vids, tc).log])
    assert runs[0] == runs[1]


def test_loss_decreases_on_toy_set():
    cfg, vids = small_data(10)
    tc = TrainConfig.desk(epochs=50, batch=5, hidden=4)
    log = fit(build_model(*cfg.specs(), cfg.d, tc), vids, tc).log
    assert log[-1]["loss_class"] < 0.5 * log[0]["loss_class"]


def test_log_columns_and_eval_cadence():
    cfg, vids = small_data()
    tc = tiny_cfg(epochs=5, eval_every=2)
    r = fit(build_model(*cfg.specs(), cfg.d, tc), vids, tc, val=vids[:10])
    evaluated = [row["epoch"] for row in r.log if row["val_avg_f1"] is not None]
    assert evaluated == [2, 4, 5]
    assert r.best_epoch in evaluated
    head = format_log_csv(r.log).splitlines()[0]
    assert head == "epoch,lr,loss_class,loss_reg,val_avg_acc,val_avg_f1"


def test_best_epoch_parameters_restored():
    cfg, vids = small_data()
    tc = tiny_cfg(epochs=4, eval_every=1)
    m = build_model(*cfg.specs(), cfg.d, tc)
    r = fit(m, vids, tc, val=vids[:10])
    from gstam.metrics import evaluate
    best = max(row["val_avg_f1"] for row in r.log)
    assert evaluate(m, vids[:10], "all", 6).avg_f1 == best


def test_non_finite_input_aborts_with_batch_diagnostic():
    cfg, vids = small_data(12)
    bad = vids[3]
    bad.frames[0, 2] = np.nan
    tc = tiny_cfg(epochs=1)
    with pytest.raises(TrainingError, match=r"epoch 1, batch \d+ \(videos \[.*\b3\b"):
        fit(build_model(*cfg.specs(), cfg.d, tc), vids, tc)


def test_no_usable_videos():
    cfg, vids = small_data(3, T_total=4)
    tc = tiny_cfg()
    with pytest.raises(ConfigError):
        fit(build_model(*cfg.specs(), cfg.d, tc), vids, tc)
