import numpy as np
import pytest

from disagg import min_segment_ok
from disagg.errors import ValidationError
from disagg.synth import DeviceSpec, ScenarioSpec, generate


def spec(**kw):
    defaults = dict(
        devices=tuple(DeviceSpec() for _ in range(3)),
        horizon=500,
        num_changes=8,
        noise_sigma=1.0,
        seed=0,
    )
    defaults.update(kw)
    return ScenarioSpec(**defaults)


def test_zero_changes_is_noise_only():
    s = generate(spec(num_changes=0, seed=3))
    assert np.array_equal(s.aggregate, s.noise)
    assert s.true_delta.changepoints == ()


def test_default_scenario_well_formed():
    s = generate(spec())
    assert len(s.library) == 3
    assert all(m.order == 5 for m in s.library.models)
    assert all(70.0 <= m.dc_gain <= 1800.0 for m in s.library.models)
    assert s.aggregate.shape == (501,)
    assert s.device_signals.shape == (3, 501)
    assert s.true_delta.num_changes == 8


def test_same_seed_reproduces():
    a = generate(spec(seed=42))
    b = generate(spec(seed=42))
    assert np.array_equal(a.aggregate, b.aggregate)
    assert np.array_equal(a.true_inputs, b.true_inputs)
    assert a.true_delta == b.true_delta
    for ma, mb in zip(a.library.models, b.library.models):
        assert np.array_equal(ma.coeffs, mb.coeffs)


def test_different_seeds_differ():
    a = generate(spec(seed=1))
    b = generate(spec(seed=2))
    assert not np.array_equal(a.aggregate, b.aggregate)


def test_conservation_identity_exact():
    s = generate(spec(seed=7))
    assert np.array_equal(s.aggregate - s.device_signals.sum(axis=0), s.noise)


def test_true_delta_respects_min_segment():
    s = generate(spec(seed=5))
    assert min_segment_ok(s.true_delta, s.library.max_order)
    cps = s.true_delta.changepoints
    assert cps[0] >= s.spec.resolved_min_segment
    diffs = np.diff(cps)
    assert np.all(diffs >= s.spec.resolved_min_segment)


def test_change_marks_where_inputs_change():
    s = generate(spec(seed=9))
    moved = np.zeros(s.aggregate.size, dtype=int)
    prev = np.zeros(len(s.library))
    for t in range(s.aggregate.size):
        if not np.array_equal(s.true_inputs[:, t], prev):
            moved[t] = 1
        prev = s.true_inputs[:, t]
    assert tuple(moved) == s.true_delta.delta


def test_horizon_too_short_rejected():
    with pytest.raises(ValidationError, match="too short"):
        generate(spec(horizon=20, num_changes=10, devices=(DeviceSpec(order=5),)))


def test_explicit_coeffs_are_used():
    dev = DeviceSpec(name="pinned", order=2, coeffs=(2.0, 1.0, 0.5))
    s = generate(spec(devices=(dev,), num_changes=2, horizon=50))
    assert np.array_equal(s.library.models[0].coeffs, [2.0, 1.0, 0.5])
    assert s.library.models[0].device_name == "pinned"


def test_overshoot_inflates_first_coefficient():
    dev = DeviceSpec(order=4, overshoot=2.0, dc_gain_range=(100.0, 100.0))
    s = generate(spec(devices=(dev,), num_changes=0, horizon=30))
    coeffs = s.library.models[0].coeffs
    assert coeffs[0] > coeffs[1:].max()
    assert coeffs.sum() == pytest.approx(100.0)


def test_instant_off_devices_drop_clean():
    dev = DeviceSpec(order=3, instant_off=True, dc_gain_range=(50.0, 50.0))
    s = generate(spec(devices=(dev,), num_changes=2, horizon=60, noise_sigma=0.0))
    cps = s.true_delta.changepoints
    # second change turns the single device off: signal hits the level immediately
    off = cps[1]
    assert s.device_signals[0, off] == pytest.approx(0.0)


def test_min_segment_below_order_rejected():
    with pytest.raises(ValidationError, match="min_segment"):
        generate(spec(min_segment=2, devices=(DeviceSpec(order=5),))).spec.resolved_min_segment


def test_multi_level_inputs():
    dev = DeviceSpec(order=1, levels=(0.0, 1.0, 2.0), dc_gain_range=(10.0, 10.0))
    s = generate(spec(devices=(dev,), num_changes=6, horizon=100, noise_sigma=0.0, seed=0))
    seen = set(np.unique(s.true_inputs))
    assert seen <= {0.0, 1.0, 2.0}
    assert len(seen) == 3
    assert s.library.models[0].input_max == 2.0
