import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssvae.metrics import (MetricsReport, config_hash, detect_events, feature_power, frame_accuracy,
                           lowpass, mean_std, normalize_signed, pearson, rpe, speech_hit_rate,
                           tolerant_hit_rate)


def test_rpe_perfect_prediction():
    o = np.random.default_rng(0).standard_normal((20, 4))
    assert rpe(o, o) == 0.0


def test_rpe_zero_prediction_is_one():
    o = np.random.default_rng(1).standard_normal((20, 4))
    assert rpe(np.zeros_like(o), o) == 1.0


def test_rpe_single_channel_example():
    assert rpe(np.array([[3.0], [0.0]]), np.array([[3.0], [4.0]])) == 0.8


def test_rpe_rejects_silent_channel_and_shape_mismatch():
    o = np.ones((5, 3))
    o[:, 1] = 0
    with pytest.raises(ValueError, match=r"\[1\]"):
        rpe(np.zeros_like(o), o)
    with pytest.raises(ValueError, match="shape"):
        rpe(np.zeros((5, 2)), np.ones((5, 3)))


_block = arrays(np.float64, (12, 3), elements=st.floats(-10, 10, allow_subnormal=False))
_scale = st.floats(1e-3, 1e3).flatmap(lambda x: st.sampled_from([x, -x]))


@settings(max_examples=1000, deadline=None)
@given(_block, _block, _scale)
def test_rpe_homogeneity(pred, obs, c):
    obs = obs + 0.1  # keep every channel away from all-zero
    np.testing.assert_allclose(rpe(c * pred, c * obs), rpe(pred, obs), rtol=1e-9, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(_block, _block, st.permutations(range(3)))
def test_rpe_channel_permutation(pred, obs, perm):
    obs = obs + 0.1
    assert rpe(pred[:, perm], obs[:, perm]) == pytest.approx(rpe(pred, obs), rel=1e-12)


def test_feature_power_examples():
    assert feature_power(np.array([[0.0, 0.0]]))[0] == 0
    assert feature_power(np.array([[3.0, 4.0]]))[0] == 25
    u = np.random.default_rng(0).standard_normal((7, 3))
    np.testing.assert_allclose(feature_power(2.5 * u), 6.25 * feature_power(u))


def test_lowpass_examples():
    x = np.random.default_rng(0).standard_normal(11)
    np.testing.assert_array_equal(lowpass(x, 1), x)
    np.testing.assert_allclose(lowpass(np.full(11, 2.0), 5), 2.0)
    impulse = np.zeros(9)
    impulse[4] = 1
    out = lowpass(impulse, 3)
    np.testing.assert_allclose(out[3:6], 1 / 3)
    np.testing.assert_allclose(out[[0, 1, 2, 6, 7, 8]], 0.0)
    with pytest.raises(ValueError, match="odd"):
        lowpass(x, 4)


def test_lowpass_exact_on_ramps():
    ramp = 3.0 + 0.25 * np.arange(50)
    np.testing.assert_allclose(lowpass(ramp, 49), ramp, atol=1e-12)


def test_normalize_signed_examples():
    np.testing.assert_array_equal(normalize_signed(np.array([0.0, 5.0, 10.0])), [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(normalize_signed(np.array([-1.0, 1.0])), [-1.0, 1.0])
    out = normalize_signed(np.random.default_rng(0).random(100) * 7 + 0.3)
    assert out.min() == -1.0 and out.max() == 1.0
    with pytest.raises(ValueError, match="constant"):
        normalize_signed(np.ones(4))


def test_detect_window_one_example():
    u = np.sqrt(np.array([[0.0], [10.0], [0.0]]))
    np.testing.assert_array_equal(detect_events(u, 1), [0, 1, 0])


def test_detect_sustained_burst():
    rng = np.random.default_rng(0)
    u = np.zeros((400, 3))
    u[180:240] = rng.standard_normal((60, 3))
    detected = detect_events(u, 49)
    assert detected[200:220].all()
    assert not detected[:120].any() and not detected[300:].any()


@settings(max_examples=1000, deadline=None)
@given(arrays(np.float64, (40, 2), elements=st.floats(-5, 5, allow_subnormal=False)),
       st.floats(1e-3, 1e3), st.sampled_from([1, 3, 9]))
def test_detection_scale_invariance(u, c, window):
    power = feature_power(u)
    if np.ptp(lowpass(power, window)) < 1e-6 * (1 + power.max()):
        return
    np.testing.assert_array_equal(detect_events(c * u, window), detect_events(u, window))


def test_hit_rate_examples():
    labels = np.array([1, 1, 0, 0])
    assert speech_hit_rate(labels, labels) == 1.0
    assert speech_hit_rate(np.zeros(4), labels) == 0.0
    assert speech_hit_rate(np.array([1, 0, 1, 0]), labels) == 0.5
    with pytest.raises(ValueError, match="no positive"):
        speech_hit_rate(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError, match="length"):
        speech_hit_rate(np.ones(3), labels)


def test_tolerant_hit_rate_and_accuracy():
    labels = np.array([0, 0, 1, 1, 0, 0, 0])
    detected = np.array([0, 0, 0, 0, 0, 1, 0])
    assert tolerant_hit_rate(detected, labels, 0) == 0.0
    assert tolerant_hit_rate(detected, labels, 2) == 0.5
    assert tolerant_hit_rate(detected, labels, 3) == 1.0
    assert frame_accuracy(detected, labels) == pytest.approx(4 / 7)


def test_pearson():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert pearson(x, np.ones(10)) == 0.0


def test_mean_std_format():
    assert mean_std([0.4, 0.62]) == "0.51 ± 0.11"


def test_config_hash_is_key_order_free():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16


def test_report_validation_and_summary():
    report = MetricsReport("m", "h", [1, 2], [0.4, 0.62], [], [0.5, 1.0])
    s = report.summary()
    assert s["rpe"] == "0.51 ± 0.11" and s["shr_mean"] == 0.75
    with pytest.raises(ValueError):
        MetricsReport("m", "h", [1], [-0.1])
    with pytest.raises(ValueError):
        MetricsReport("m", "h", [1], [0.1], [], [1.5])
