import math

import numpy as np
import pytest

from graphfuse.errors import CheckpointError, NumericError, ShapeError
from graphfuse.net import NetworkConfig, init_params
from graphfuse.synth import scene_pair
from graphfuse.train import (OptimizerState, TrainConfig, adam_step, clip_global_norm,
                             epoch_order, load_checkpoint, lr_at, read_history, save_checkpoint,
                             train, write_history)

TINY = NetworkConfig(feature_dim=4, intra_blocks=2, inter_blocks=2)


def tiny_data(n=4, size=8):
    return [scene_pair(size, size, seed=s) for s in range(n)]


def test_adam_first_step_by_hand():
    params = {"t": np.array([0.0])}
    state = OptimizerState.zeros_like(params)
    new, state = adam_step(params, {"t": np.array([1.0])}, state, 0.1)
    # m_hat = v_hat = 1 at t=1, so the step is lr * 1 / (1 + eps)
    assert abs(new["t"][0] - (-0.1 / (1 + 1e-8))) < 1e-15
    assert state.t == 1


def test_adam_three_steps_closed_form():
    grads = [0.5, -1.0, 2.0]
    params = {"t": np.array([0.25])}
    state = OptimizerState.zeros_like(params)
    m = v = 0.0
    theta = 0.25
    for t, g in enumerate(grads, 1):
        params, state = adam_step(params, {"t": np.array([g])}, state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert abs(params["t"][0] - theta) < 1e-15 and state.t == t


def test_adam_monotone_for_constant_gradient():
    params = {"t": np.array([0.0])}
    state = OptimizerState.zeros_like(params)
    values = []
    for _ in range(3):
        params, state = adam_step(params, {"t": np.array([1.0])}, state, 0.1)
        values.append(params["t"][0])
    assert values[0] > values[1] > values[2]


def test_adam_zero_gradient_and_errors():
    params = {"a": np.arange(3.0)}
    state = OptimizerState.zeros_like(params)
    new, state = adam_step(params, {"a": np.zeros(3)}, state, 0.1)
    assert np.array_equal(new["a"], params["a"]) and state.t == 1
    with pytest.raises(NumericError):
        adam_step(params, {"a": np.array([0.0, np.nan, 0.0])}, state, 0.1)
    with pytest.raises(ShapeError):
        adam_step(params, {"a": np.zeros(4)}, state, 0.1)


def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 1e-4
    assert f"{lr_at(10, cfg):.4g}" == "5.987e-05"
    assert abs(lr_at(10, cfg) - 1e-4 * math.pow(0.95, 10)) < 1e-18
    flat = TrainConfig(decay=1.0)
    assert lr_at(0, flat) == lr_at(37, flat)


@pytest.mark.parametrize("kwargs", [{"lr0": 0}, {"decay": 0}, {"decay": 1.5}, {"batch": 0},
                                    {"dtype": "int8"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 0) is g
    clipped = clip_global_norm(g, 1.0)
    assert math.isclose(math.hypot(clipped["a"][0], clipped["b"][0]), 1.0)


def test_epoch_order_is_seeded_permutation():
    a = epoch_order(10, 3, 2)
    assert sorted(a) == list(range(10))
    assert np.array_equal(a, epoch_order(10, 3, 2))
    assert not np.array_equal(a, epoch_order(10, 3, 3))


def test_history_bit_identical():
    cfg = TrainConfig(batch=2, epochs=2, lr0=1e-3, seed=7)
    a = train(tiny_data(), TINY, cfg)
    b = train(tiny_data(), TINY, cfg)
    assert a.history == b.history and a.step == 4
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_max_steps_is_exact():
    r = train(tiny_data(2), TINY, TrainConfig(batch=1, max_steps=7, lr0=1e-3))
    assert r.step == 7 and [h["epoch"] for h in r.history] == [0, 0, 1, 1, 2, 2, 3]
    assert r.history[2]["lr"] == lr_at(1, TrainConfig(lr0=1e-3))


def test_identical_pair_loss_falls():
    ir, _ = scene_pair(8, 8, seed=2)
    cfg = TrainConfig(batch=1, max_steps=60, lr0=3e-3, decay=1.0)
    hist = train([(ir, ir)], TINY, cfg).history
    totals = [h["total"] for h in hist]
    assert np.mean(totals[-10:]) < 0.25 * np.mean(totals[:10])


def test_resume_replays_unbroken_run(tmp_path):
    data = tiny_data(3)
    full_cfg = TrainConfig(batch=2, max_steps=6, lr0=1e-3, seed=1)
    full = train(data, TINY, full_cfg)
    first = train(data, TINY, TrainConfig(batch=2, max_steps=3, lr0=1e-3, seed=1), out_dir=tmp_path)
    ckpt = load_checkpoint(tmp_path / "checkpoint.gfc")
    assert ckpt.step == 3 and ckpt.state.t == 3
    rest = train(data, ckpt.net_cfg, full_cfg, params=ckpt.params, state=ckpt.state,
                 start_step=ckpt.step)
    assert first.history + rest.history == full.history
    for k in full.params:
        assert np.array_equal(rest.params[k], full.params[k])


def test_checkpoint_round_trip_bytes(tmp_path):
    r = train(tiny_data(2), TINY, TrainConfig(batch=2, max_steps=2, lr0=1e-3))
    a, b = tmp_path / "a.gfc", tmp_path / "b.gfc"
    save_checkpoint(a, r.params, TINY, r.state, TrainConfig(), r.step)
    ck = load_checkpoint(a)
    save_checkpoint(b, ck.params, ck.net_cfg, ck.state, ck.train_cfg, ck.step)
    assert a.read_bytes() == b.read_bytes()
    assert ck.net_cfg == TINY and ck.train_cfg == TrainConfig()


def test_checkpoint_shape_mismatch(tmp_path):
    save_checkpoint(tmp_path / "c.gfc", init_params(TINY), TINY)
    other = NetworkConfig(feature_dim=6, intra_blocks=2, inter_blocks=2)
    with pytest.raises(ShapeError):
        load_checkpoint(tmp_path / "c.gfc", other)
    assert load_checkpoint(tmp_path / "c.gfc").state is None


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "c.gfc"
    save_checkpoint(path, init_params(TINY), TINY)
    raw = path.read_bytes()
    path.write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(raw[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(raw[:8] + (99).to_bytes(4, "little") + raw[12:])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.gfc")


def test_nan_batch_is_dumped(tmp_path):
    ir, vis = scene_pair(8, 8)
    bad = ir.copy()
    bad[0, 0] = np.nan
    with pytest.raises(NumericError):
        train([(bad, vis)], TINY, TrainConfig(batch=1, max_steps=1), out_dir=tmp_path)
    dump = np.load(tmp_path / "nan_batch.npz")
    assert np.isnan(dump["ir_0"][0, 0])


def test_history_csv_round_trip(tmp_path):
    r = train(tiny_data(2), TINY, TrainConfig(batch=1, max_steps=3, lr0=1e-3))
    write_history(r.history, tmp_path / "h.csv")
    back = read_history(tmp_path / "h.csv")
    assert [row["step"] for row in back] == [0, 1, 2]
    assert all(math.isclose(a["total"], b["total"], rel_tol=1e-12)
               for a, b in zip(back, r.history))


def test_float32_training_keeps_dtype():
    r = train(tiny_data(2), TINY, TrainConfig(batch=2, max_steps=2, dtype="float32"))
    assert all(p.dtype == np.float32 for p in r.params.values())
