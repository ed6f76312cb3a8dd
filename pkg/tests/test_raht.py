"""Tests for the hierarchical transform and scalar quantization."""

import math

import numpy as np
import pytest

from splatcodec.raht import (
    RahtPlan,
    dequantize,
    quantize,
    raht_forward,
    raht_inverse,
)


def _random_coords(rng, n, depth):
    span = 1 << depth
    picks = rng.choice(span ** 3, size=n, replace=False)
    return np.stack(
        [picks // (span * span), (picks // span) % span, picks % span],
        axis=1,
    ).astype(np.int64)


def test_single_point_is_its_own_dc():
    out = raht_forward(np.array([[3, 1, 2]]), 2, np.array([7.0]))
    assert out.values.tolist() == [7.0]
    assert out.weights.tolist() == [1]


def test_sibling_pair_constant_signal():
    coords = np.array([[0, 0, 0], [1, 0, 0]])
    out = raht_forward(coords, 1, np.array([1.0, 1.0]))
    assert out.values[0] == pytest.approx(math.sqrt(2.0))
    assert out.values[1] == pytest.approx(0.0, abs=1e-12)


def test_sibling_pair_butterfly():
    coords = np.array([[0, 0, 0], [1, 0, 0]])
    out = raht_forward(coords, 1, np.array([3.0, 1.0]))
    assert out.values[0] == pytest.approx(2.0 * math.sqrt(2.0))
    assert out.values[1] == pytest.approx(-math.sqrt(2.0))
    assert np.sum(out.values ** 2) == pytest.approx(10.0)
    assert out.weights.tolist() == [2, 2]


def test_constant_input_collapses_to_dc():
    rng = np.random.default_rng(0)
    coords = _random_coords(rng, 200, 4)
    out = raht_forward(coords, 4, np.full(200, 2.5))
    assert out.values[0] == pytest.approx(2.5 * math.sqrt(200))
    assert np.abs(out.values[1:]).max() < 1e-9
    assert out.weights[0] == 200


def test_parseval_and_round_trip():
    rng = np.random.default_rng(1)
    for n, depth in ((1, 1), (2, 1), (100, 3), (5000, 6)):
        coords = _random_coords(rng, n, depth)
        vals = rng.normal(size=n)
        plan = RahtPlan(coords, depth)
        coeffs = plan.forward(vals)
        energy_in = np.sum(vals ** 2)
        assert np.sum(coeffs ** 2) == pytest.approx(energy_in, rel=1e-9)
        back = plan.inverse(coeffs)
        assert np.abs(back - vals).max() < 1e-9


def test_variable_depth_leaves_round_trip():
    # center representatives at mixed depths, as the adaptive path emits
    coords = np.array(
        [[2, 2, 2], [2, 2, 10], [9, 1, 4], [12, 12, 12], [13, 12, 12]]
    )
    vals = np.array([1.0, -2.0, 0.5, 3.0, 4.0])
    plan = RahtPlan(coords, 4)
    coeffs = plan.forward(vals)
    assert np.sum(coeffs ** 2) == pytest.approx(np.sum(vals ** 2), rel=1e-12)
    assert np.abs(plan.inverse(coeffs) - vals).max() < 1e-12


def test_channel_stack_matches_per_channel():
    rng = np.random.default_rng(2)
    coords = _random_coords(rng, 300, 4)
    vals = rng.normal(size=(300, 3))
    plan = RahtPlan(coords, 4)
    stacked = plan.forward(vals)
    for c in range(3):
        single = plan.forward(vals[:, c])
        assert np.array_equal(stacked[:, c], single)
    assert np.abs(plan.inverse(stacked) - vals).max() < 1e-9


def test_weights_are_geometry_only():
    rng = np.random.default_rng(3)
    coords = _random_coords(rng, 64, 3)
    a = raht_forward(coords, 3, rng.normal(size=64))
    b = raht_forward(coords, 3, rng.normal(size=64))
    assert np.array_equal(a.weights, b.weights)
    assert a.weights[0] == 64
    assert np.all(a.weights >= 1)


def test_serialization_puts_coarse_levels_first():
    # deeper-level ACs must not precede shallower ones
    rng = np.random.default_rng(4)
    coords = _random_coords(rng, 500, 4)
    plan = RahtPlan(coords, 4)
    w = plan.weights
    # DC carries the full count; weights trend downward level by level
    assert w[0] == 500
    assert w[0] >= w[1:].max()


def test_duplicate_coords_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        RahtPlan(np.array([[1, 1, 1], [1, 1, 1]]), 2)
    with pytest.raises(ValueError, match="grid"):
        RahtPlan(np.array([[4, 0, 0]]), 2)


def test_inverse_of_tweaked_coefficients():
    # quantize-then-inverse must stay close for small steps
    rng = np.random.default_rng(5)
    coords = _random_coords(rng, 400, 4)
    vals = rng.normal(size=400)
    plan = RahtPlan(coords, 4)
    coeffs = plan.forward(vals)
    back = plan.inverse(dequantize(quantize(coeffs, 1e-4), 1e-4))
    assert np.abs(back - vals).max() < 1e-3


def test_quantize_examples():
    assert quantize(np.array([3.7]), 1.0).tolist() == [4]
    assert quantize(np.array([3.7]), 2.0).tolist() == [2]
    assert dequantize(np.array([2]), 2.0).tolist() == [4.0]
    assert quantize(np.array([0.5, -0.5, 1.5]), 1.0).tolist() == [1, -1, 2]
    assert quantize(np.array([-3.7]), 1.0).tolist() == [-4]


def test_quantize_small_step_bound():
    rng = np.random.default_rng(6)
    c = rng.normal(size=1000)
    q = quantize(c, 1e-6)
    assert np.abs(dequantize(q, 1e-6) - c).max() <= 5e-7


def test_quantize_infinite_step_drops_band():
    c = np.array([1.0, -5.0, 100.0])
    q = quantize(c, math.inf)
    assert q.tolist() == [0, 0, 0]
    assert dequantize(q, math.inf).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        quantize(c, 0.0)
    with pytest.raises(ValueError):
        quantize(c, -1.0)


def test_one_shot_wrappers():
    rng = np.random.default_rng(7)
    coords = _random_coords(rng, 50, 3)
    vals = rng.normal(size=50)
    out = raht_forward(coords, 3, vals)
    back = raht_inverse(out, coords, 3)
    assert np.abs(back - vals).max() < 1e-10
