import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dnsspp.errors import DimensionError
from dnsspp.features import (FeatureMap, SpectralLayer, backward, forward_with_cache,
                             init_map, kernel_eval, layer_forward, map_forward,
                             trig_pair_features)

from conftest import random_layer


def loop_layer(layer, x):
    """Term-by-term evaluation of one layer."""
    R = layer.width
    out = np.zeros(R)
    for r in range(R):
        a = sum(layer.omega1[r, k] * x[k] for k in range(len(x))) + layer.b1[r]
        b = sum(layer.omega2[r, k] * x[k] for k in range(len(x))) + layer.b2[r]
        out[r] = layer.sigma / np.sqrt(2 * R) * (np.cos(a) + np.cos(b))
    return out


def four_term_sum(layer, x1, x2):
    """Real part of the four-exponential Monte Carlo kernel sum."""
    total = 0.0
    for r in range(layer.width):
        for wi in (layer.omega1[r], layer.omega2[r]):
            for wj in (layer.omega1[r], layer.omega2[r]):
                total += np.exp(1j * (wi @ x1 - wj @ x2)).real
    return layer.sigma**2 / (4 * layer.width) * total


def test_zero_frequency_constant():
    layer = SpectralLayer([[0.0]], [[0.0]], [0.0], [0.0])
    for x in (-3.0, 0.0, 11.0):
        np.testing.assert_allclose(layer_forward(layer, [x]), [np.sqrt(2.0)], rtol=1e-15)


def test_opposite_phase_cancels(rng):
    w = rng.normal(size=(4, 2))
    layer = SpectralLayer(w, w, np.zeros(4), np.full(4, np.pi))
    X = rng.normal(size=(20, 2)) * 5
    assert np.max(np.abs(layer_forward(layer, X))) < 1e-15


def test_layer_matches_loop(rng):
    for d in (1, 2, 5):
        layer = random_layer(rng, 7, d)
        x = rng.normal(size=d) * 3
        np.testing.assert_allclose(layer_forward(layer, x), loop_layer(layer, x), atol=1e-14)


def test_layer_bounds(rng):
    layer = random_layer(rng, 9, 2)
    out = layer_forward(layer, rng.normal(size=(200, 2)) * 10)
    assert np.all(np.abs(out) <= layer.sigma * np.sqrt(2 / 9) + 1e-15)


def test_dimension_mismatch(rng):
    layer = random_layer(rng, 3, 2)
    with pytest.raises(DimensionError):
        layer_forward(layer, [1.0, 2.0, 3.0])


def test_single_layer_map_equals_layer(rng):
    layer = random_layer(rng, 5, 1)
    X = rng.normal(size=(10, 1))
    np.testing.assert_array_equal(map_forward(FeatureMap((layer,)), X), layer_forward(layer, X))


def test_constant_second_layer(rng):
    first = random_layer(rng, 6, 1)
    second = SpectralLayer(np.zeros((4, 6)), np.zeros((4, 6)), rng.uniform(0, 6, 4),
                           rng.uniform(0, 6, 4))
    out = map_forward(FeatureMap((first, second)), rng.normal(size=(30, 1)) * 4)
    np.testing.assert_allclose(out, np.broadcast_to(out[0], out.shape), atol=1e-15)


def test_composition_manual(rng):
    l1, l2 = random_layer(rng, 8, 2), random_layer(rng, 3, 8)
    x = rng.normal(size=2)
    np.testing.assert_allclose(map_forward(FeatureMap((l1, l2)), x),
                               loop_layer(l2, loop_layer(l1, x)), atol=1e-14)


def test_map_rejects_mismatched_widths(rng):
    with pytest.raises(DimensionError):
        FeatureMap((random_layer(rng, 4, 1), random_layer(rng, 3, 5)))


def test_kernel_symmetric_and_nonnegative(rng):
    fmap = init_map([10, 5], 2, seed=3)
    x1, x2 = rng.normal(size=2), rng.normal(size=2)
    assert kernel_eval(fmap, x1, x2) == kernel_eval(fmap, x2, x1)
    assert kernel_eval(fmap, x1, x1) >= 0
    np.testing.assert_allclose(kernel_eval(fmap, x1, x1), np.sum(map_forward(fmap, x1)**2))


def test_tied_layer_approximates_gaussian():
    fmap = init_map([100_000], 1, seed=7, tie=True)
    x0 = np.array([0.4])
    for delta in np.linspace(0.0, 3.0, 7):
        k = kernel_eval(fmap, x0, x0 + delta)
        assert abs(k - np.exp(-0.5 * delta**2)) < 0.01


def test_trig_pair_zero_frequency():
    layer = SpectralLayer(np.zeros((4, 1)), np.zeros((4, 1)), np.ones(4), np.ones(4), sigma=3.0)
    out = trig_pair_features(layer, [2.5])
    np.testing.assert_allclose(out[:4], 3.0 / 2.0)
    np.testing.assert_array_equal(out[4:], 0.0)


def test_trig_pair_origin_sine_block(rng):
    out = trig_pair_features(random_layer(rng, 6, 2), np.zeros(2))
    np.testing.assert_array_equal(out[6:], 0.0)


def test_trig_pair_matches_four_term_sum(rng):
    for d in (1, 2):
        layer = random_layer(rng, 11, d, scale=2.0)
        x1, x2 = rng.normal(size=d) * 3, rng.normal(size=d) * 3
        inner = trig_pair_features(layer, x1) @ trig_pair_features(layer, x2)
        assert abs(inner - four_term_sum(layer, x1, x2)) < 1e-12


def test_tied_zero_bias_complex_exponential(rng):
    w = rng.normal(size=(25, 2))
    layer = SpectralLayer(w, w, np.zeros(25), np.zeros(25), sigma=1.0, tie=True)
    x1, x2 = rng.normal(size=2), rng.normal(size=2)
    ref = np.mean(np.exp(1j * (w @ (x1 - x2)))).real
    inner = trig_pair_features(layer, x1) @ trig_pair_features(layer, x2)
    assert abs(inner - ref) < 1e-12


def phase_average(o1, o2, x1, x2, draws, rng, shared):
    R = o1.shape[0]
    vals = np.empty(draws)
    for k in range(draws):
        b1 = rng.uniform(0, 2 * np.pi, R)
        b2 = b1 if shared else rng.uniform(0, 2 * np.pi, R)
        vals[k] = kernel_eval(FeatureMap((SpectralLayer(o1, o2, b1, b2),)), x1, x2)
    return vals.mean(), vals.std(ddof=1) / np.sqrt(draws)


def test_phase_average_shared_phase_recovers_four_term_sum(rng):
    o1, o2 = rng.normal(size=(3, 1)), rng.normal(size=(3, 1))
    x1, x2 = np.array([0.7]), np.array([-1.3])
    mean, se = phase_average(o1, o2, x1, x2, 10_000, rng, shared=True)
    ref = four_term_sum(SpectralLayer(o1, o2, np.zeros(3), np.zeros(3)), x1, x2)
    assert abs(mean - ref) < 3 * se


def test_phase_average_independent_phases_keeps_diagonal_terms(rng):
    # independent phases average the i != j products to zero
    o1, o2 = rng.normal(size=(3, 1)), rng.normal(size=(3, 1))
    x1, x2 = np.array([0.7]), np.array([-1.3])
    mean, se = phase_average(o1, o2, x1, x2, 10_000, rng, shared=False)
    ref = np.sum(np.cos(o1 @ (x1 - x2)) + np.cos(o2 @ (x1 - x2))) / (4 * 3)
    assert abs(mean - ref) < 3 * se


def test_tied_phase_average_is_stationary(rng):
    w = rng.normal(size=(5, 1))
    delta = np.array([0.8])
    means, ses = [], []
    for x in (-2.0, 0.3, 4.1):
        vals = np.empty(10_000)
        for k in range(vals.size):
            b = rng.uniform(0, 2 * np.pi, 5)
            fmap = FeatureMap((SpectralLayer(w, w, b, b, tie=True),))
            vals[k] = kernel_eval(fmap, [x], [x] + delta)
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / 100)
    se = np.sqrt(2) * max(ses)
    assert max(means) - min(means) < 3 * se


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3))
def test_cauchy_schwarz(seed, depth):
    rng = np.random.default_rng(seed)
    fmap = init_map([6] * depth, 2, seed=seed)
    x1, x2 = rng.normal(size=2) * 3, rng.normal(size=2) * 3
    k12 = kernel_eval(fmap, x1, x2)
    bound = np.sqrt(kernel_eval(fmap, x1, x1) * kernel_eval(fmap, x2, x2))
    assert abs(k12) <= bound * (1 + 1e-12) + 1e-15


def test_init_deterministic():
    a = init_map([50, 30], 1, seed=11)
    b = init_map([50, 30], 1, seed=11)
    for la, lb in zip(a.layers, b.layers):
        for key in ("omega1", "omega2", "b1", "b2"):
            assert getattr(la, key).tobytes() == getattr(lb, key).tobytes()


def test_init_shapes():
    fmap = init_map([50, 30], 1, seed=0)
    assert fmap.widths == [50, 30]
    assert fmap.layers[1].input_dim == 50
    assert all(layer.sigma == 1.0 for layer in fmap.layers)


def test_init_tie_flags():
    fmap = init_map([4, 3], 2, seed=0, tie=[True, False])
    assert fmap.layers[0].tie and np.array_equal(fmap.layers[0].omega1, fmap.layers[0].omega2)
    assert not fmap.layers[1].tie


def test_init_bias_uniform_ks():
    fmap = init_map([100_000], 1, seed=5)
    b = fmap.layers[0].b1
    assert stats.kstest(b, "uniform", args=(0, 2 * np.pi)).pvalue > 0.01


def test_init_frequency_normal_ks():
    w = init_map([20_000], 1, seed=6).layers[0].omega2.ravel()
    assert stats.kstest(w, "norm").pvalue > 0.01


def test_tie_requires_equal_blocks(rng):
    with pytest.raises(ValueError):
        SpectralLayer(rng.normal(size=(2, 1)), rng.normal(size=(2, 1)), [0, 0], [0, 0], tie=True)


@pytest.mark.parametrize("sigma", [0.0, -1.0, np.inf])
def test_sigma_must_be_positive(sigma):
    with pytest.raises(ValueError):
        SpectralLayer([[1.0]], [[1.0]], [0.0], [0.0], sigma=sigma)


def test_serialization_round_trip():
    fmap = init_map([7, 3], 2, seed=9, tie=[False, True])
    back = FeatureMap.from_dict(fmap.to_dict())
    for la, lb in zip(fmap.layers, back.layers):
        for key in ("omega1", "omega2", "b1", "b2"):
            assert getattr(la, key).tobytes() == getattr(lb, key).tobytes()
        assert la.sigma == lb.sigma and la.tie == lb.tie


def test_backward_matches_finite_differences(rng):
    fmap = init_map([5, 4], 2, seed=2)
    X = rng.normal(size=(6, 2))
    G = rng.normal(size=(6, 4))
    _, cache = forward_with_cache(fmap, X)
    grads = backward(fmap, cache, G)

    def objective(layers):
        return float(np.sum(map_forward(FeatureMap(tuple(layers)), X) * G))

    h = 1e-6
    for l, layer in enumerate(fmap.layers):
        for key in ("omega1", "b2"):
            base = getattr(layer, key)
            idx = (0,) * base.ndim
            vals = []
            for sign in (1, -1):
                arr = base.copy()
                arr[idx] += sign * h
                fields = {k: getattr(layer, k) for k in ("omega1", "omega2", "b1", "b2")}
                fields[key] = arr
                layers = list(fmap.layers)
                layers[l] = SpectralLayer(sigma=layer.sigma, **fields)
                vals.append(objective(layers))
            fd = (vals[0] - vals[1]) / (2 * h)
            np.testing.assert_allclose(grads[l][key][idx], fd, rtol=1e-6, atol=1e-9)
        layers = list(fmap.layers)
        vals = []
        for sign in (1, -1):
            layers[l] = SpectralLayer(layer.omega1, layer.omega2, layer.b1, layer.b2,
                                      sigma=layer.sigma * np.exp(sign * h))
            vals.append(objective(layers))
        np.testing.assert_allclose(grads[l]["log_sigma"], (vals[0] - vals[1]) / (2 * h),
                                   rtol=1e-6, atol=1e-9)
