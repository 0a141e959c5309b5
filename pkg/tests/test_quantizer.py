import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlsed.quantizer import (
    QuantizedObservation,
    QuantizerSpec,
    design_full_scale,
    make_quantizer,
    parse_bit_depth,
    quantize_complex,
    random_signed_thresholds,
    signed_measurements,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_thresholds_uniform():
    q = make_quantizer(2, 2.0)
    np.testing.assert_allclose(q.thresholds, [-np.inf, -1.0, 0.0, 1.0, np.inf])
    np.testing.assert_allclose(q.output_levels, [-1.5, -0.5, 0.5, 1.5])


@pytest.mark.parametrize("bad", [0, -1, 1.5, "x"])
def test_invalid_bit_depth(bad):
    with pytest.raises((ValueError, TypeError)):
        QuantizerSpec(bad, 1.0)


def test_invalid_full_scale():
    with pytest.raises(ValueError):
        QuantizerSpec(2, 0.0)


def test_parse_bit_depth_inf():
    assert parse_bit_depth("inf") == math.inf
    assert parse_bit_depth(3) == 3


def test_codes_on_threshold_go_up():
    q = make_quantizer(2, 2.0)
    assert list(q.code([-1.0, 0.0, 1.0])) == [1, 2, 3]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.floats(0.1, 10), finite)
def test_sample_lies_in_its_cell(bits, gamma, x):
    q = make_quantizer(bits, gamma)
    obs = quantize_complex(np.array([x + 0.5j * x]), q)
    assert obs.lower[0, 0] <= x < obs.upper[0, 0]
    assert obs.lower[1, 0] <= 0.5 * x < obs.upper[1, 0]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.floats(0.1, 10), finite, finite)
def test_quantizer_monotone(bits, gamma, x, y):
    q = make_quantizer(bits, gamma)
    lo, hi = min(x, y), max(x, y)
    assert q.code(lo) <= q.code(hi)
    assert q.quantize(lo) <= q.quantize(hi)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.floats(0.5, 5))
def test_quantize_idempotent_on_levels(bits, gamma):
    q = make_quantizer(bits, gamma)
    lv = q.output_levels
    np.testing.assert_array_equal(q.quantize(lv), lv)


def test_unquantized_round_trip(rng):
    y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    obs = quantize_complex(y, make_quantizer(math.inf, 1.0))
    assert obs.exact
    np.testing.assert_array_equal(obs.values(), y)


def test_observation_is_read_only(rng):
    obs = quantize_complex(rng.standard_normal(4) + 0j, make_quantizer(1, 1.0))
    with pytest.raises(ValueError):
        obs.lower[0, 0] = 3.0


def test_observation_rejects_inverted_interval():
    with pytest.raises(ValueError):
        QuantizedObservation(np.ones((2, 3)), np.zeros((2, 3)))


def test_non_finite_signal_rejected():
    with pytest.raises(ValueError):
        quantize_complex(np.array([np.nan + 0j]), make_quantizer(1, 1.0))


def test_reconstruction_midpoints():
    q = make_quantizer(2, 2.0)
    obs = quantize_complex(np.array([0.4 - 0.6j, 5.0 - 5.0j]), q)
    rec = obs.reconstruction()
    assert rec[0] == pytest.approx(0.5 - 0.5j)
    # saturated cells sit half a cell beyond the outer threshold
    assert rec[1] == pytest.approx(1.5 - 1.5j)


def test_one_bit_info_at_zero():
    q = make_quantizer(1, 1.0)
    assert q.info(0.0, math.sqrt(2.0)) == pytest.approx(2.0 / math.pi, rel=1e-12)


def test_info_tends_to_one_with_bits():
    sigma = math.sqrt(2.0)
    vals = [make_quantizer(b, 6.0).info(0.3, sigma) for b in (1, 2, 3, 6, 10)]
    assert all(np.diff(vals) > 0)
    assert vals[-1] == pytest.approx(1.0, abs=1e-4)
    assert make_quantizer(math.inf, 3.0).info(0.3, sigma) == 1.0


def test_signed_measurements():
    rng = np.random.default_rng(0)
    spec = random_signed_thresholds(64, rng)
    levels = np.linspace(-1, 1, 8)
    assert np.all(np.isin(spec.thresholds.real, levels))
    assert np.all(np.isin(spec.thresholds.imag, levels))
    y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    obs = signed_measurements(y, spec)
    assert np.all(obs.lower[0] <= y.real) and np.all(y.real < obs.upper[0])
    assert np.all(obs.codes == (np.stack([y.real, y.imag]) >= np.stack([spec.thresholds.real, spec.thresholds.imag])))


def test_design_full_scale():
    assert design_full_scale([0.1, 0.2j], 1.0) == pytest.approx(3 / math.sqrt(2))
    assert design_full_scale([4.0, 1j], 1.0) == pytest.approx(4.0)
