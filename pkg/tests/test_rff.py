import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssimpc.rff import (
    FeatureSet,
    KernelSpec,
    ParamEstimate,
    evaluate_features,
    feature_jacobian,
    kernel_value,
    predict,
    sample_features,
)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(2, bandwidth_sigma=0.0)
    with pytest.raises(ValueError):
        KernelSpec(0)
    with pytest.raises(ValueError):
        KernelSpec(2, kind="laplace")


def test_sample_shapes_and_phase_range():
    fs = sample_features(KernelSpec(4, 1.0), 75, seed=7)
    assert fs.frequencies.shape == (75, 4)
    assert fs.phases.shape == (75,) and fs.count == 75
    assert np.all(fs.phases >= 0) and np.all(fs.phases < 2 * np.pi)


def test_sample_rejects_zero_count():
    with pytest.raises(ValueError):
        sample_features(KernelSpec(2), 0, seed=1)


def test_frequency_std_follows_bandwidth():
    fs = sample_features(KernelSpec(14, 100.0), 50, seed=1)
    assert fs.frequencies.shape == (50, 14)
    # 700 draws; std of the sample std is about 0.01 / sqrt(1400)
    assert abs(fs.frequencies.std() - 0.01) < 0.001
    big = sample_features(KernelSpec(3, 2.0), 20000, seed=3)
    assert abs(big.frequencies.std() - 0.5) < 0.01
    assert abs(big.phases.mean() - np.pi) < 0.05


def test_sampling_is_deterministic():
    a = sample_features(KernelSpec(4), 75, seed=7)
    b = sample_features(KernelSpec(4), 75, seed=7)
    c = sample_features(KernelSpec(4), 75, seed=8)
    assert np.array_equal(a.frequencies, b.frequencies) and np.array_equal(a.phases, b.phases)
    assert not np.array_equal(a.frequencies, c.frequencies)


def test_feature_arrays_are_read_only():
    fs = sample_features(KernelSpec(2), 5, seed=0)
    with pytest.raises(ValueError):
        fs.frequencies[0, 0] = 1.0


def _fixed(W, b, dz):
    return FeatureSet(np.array(W, float), np.array(b, float), KernelSpec(dz), 0)


def test_zero_frequency_gives_one():
    fs = _fixed([[0.0, 0.0]], [0.0], 2)
    assert evaluate_features(fs, [3.0, -2.0])[0] == 1.0
    assert np.all(feature_jacobian(fs, [3.0, -2.0]) == 0.0)


def test_jacobian_zero_at_extremum():
    fs = _fixed([[1.0, 2.0]], [0.5], 2)
    z = np.array([-0.5, 0.0])  # w.z + b = 0
    assert np.allclose(feature_jacobian(fs, z), 0.0, atol=1e-15)


def test_single_feature_prediction():
    fs = _fixed([[1.0]], [0.0], 1)
    z = np.array([np.pi / 3])  # cos = 0.5
    out = predict(fs, ParamEstimate(np.array([[2.0]])), z)
    assert out == pytest.approx([1.0], abs=1e-15)


def test_zero_params_predict_zero(rng):
    fs = sample_features(KernelSpec(3), 10, seed=2)
    out = predict(fs, ParamEstimate.zeros(2, 10), rng.normal(size=3))
    assert np.array_equal(out, np.zeros(2))


def test_dimension_errors():
    fs = sample_features(KernelSpec(3), 10, seed=2)
    with pytest.raises(ValueError):
        evaluate_features(fs, np.zeros(4))
    with pytest.raises(ValueError):
        predict(fs, ParamEstimate.zeros(2, 11), np.zeros(3))
    with pytest.raises(ValueError):
        feature_jacobian(fs, np.zeros(2))
    with pytest.raises(ValueError):
        kernel_value(KernelSpec(3), np.zeros(3), np.zeros(2))


def test_kernel_value_closed_form():
    k = KernelSpec(2, 1.0)
    assert kernel_value(k, [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert kernel_value(k, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(0.36787944117144233, rel=1e-14)


def test_evaluation_is_pure(rng):
    fs = sample_features(KernelSpec(5), 40, seed=9)
    z = rng.normal(size=5)
    assert np.array_equal(evaluate_features(fs, z), evaluate_features(fs, z))


def test_features_bounded_over_random_inputs(rng):
    fs = sample_features(KernelSpec(4, 0.3), 64, seed=4)
    phi = evaluate_features(fs, rng.normal(scale=50.0, size=(1000, 4)))
    assert np.all(np.abs(phi) <= 1.0)


def test_batch_matches_single(rng):
    fs = sample_features(KernelSpec(3), 16, seed=5)
    Z = rng.normal(size=(7, 3))
    batch = evaluate_features(fs, Z)
    for i in range(7):
        assert np.array_equal(batch[i], evaluate_features(fs, Z[i]))


def test_prediction_bound_over_many_inputs(rng):
    fs = sample_features(KernelSpec(3), 30, seed=6)
    params = ParamEstimate(rng.uniform(-10, 10, size=(4, 30)), 10.0)
    Z = rng.normal(scale=3.0, size=(10_000, 3))
    out = evaluate_features(fs, Z) @ params.blocks.T / fs.count
    assert np.max(np.abs(out)) <= 10.0
    # independent bound: |mean(phi * a)| <= max |a|
    assert np.max(np.abs(out)) <= params.max_abs()


@given(
    seed=st.integers(0, 2**32 - 1),
    dz=st.integers(1, 6),
    sigma=st.floats(0.3, 5.0),
    zs=st.lists(st.floats(-3, 3), min_size=6, max_size=6),
)
def test_jacobian_matches_central_differences(seed, dz, sigma, zs):
    fs = sample_features(KernelSpec(dz, sigma), 12, seed)
    z = np.array(zs[:dz])
    J = feature_jacobian(fs, z)
    h = 1e-5
    fd = np.empty_like(J)
    for j in range(dz):
        e = np.zeros(dz)
        e[j] = h
        fd[:, j] = (evaluate_features(fs, z + e) - evaluate_features(fs, z - e)) / (2 * h)
    assert np.max(np.abs(J - fd)) < 1e-6


@given(seed=st.integers(0, 2**32 - 1), zs=st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_features_in_unit_interval(seed, zs):
    fs = sample_features(KernelSpec(3, 0.5), 20, seed)
    phi = evaluate_features(fs, np.array(zs))
    assert np.all(phi >= -1.0) and np.all(phi <= 1.0)


@given(
    seed=st.integers(0, 2**32 - 1),
    coeffs=st.lists(st.floats(-10, 10), min_size=16, max_size=16),
    zs=st.lists(st.floats(-10, 10), min_size=2, max_size=2),
)
def test_prediction_within_radius(seed, coeffs, zs):
    fs = sample_features(KernelSpec(2), 8, seed)
    params = ParamEstimate(np.array(coeffs).reshape(2, 8), 10.0)
    assert np.max(np.abs(predict(fs, params, np.array(zs)))) <= 10.0


def test_kernel_monte_carlo_within_tolerance(rng):
    k = KernelSpec(3, 1.0)
    M = 4096
    fs = sample_features(k, M, seed=11)
    z1 = rng.normal(size=(50, 3))
    z2 = rng.normal(size=(50, 3))
    mc = 2.0 / M * np.sum(evaluate_features(fs, z1) * evaluate_features(fs, z2), axis=1)
    assert np.max(np.abs(mc - kernel_value(k, z1, z2))) <= 4 / np.sqrt(M)
