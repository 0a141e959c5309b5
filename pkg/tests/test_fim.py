import math

import numpy as np
import pytest

from qlsed.fim import (
    crb_frequency_unquantized,
    fim_amplitude,
    fim_general,
    h_one_bit_approx,
    snr_loss,
    snr_loss_1bit_approx,
    snr_loss_1bit_large_threshold_bound,
)
from qlsed.likelihood import Manifold, SinusoidComponent, atom, full_gradient_hessian, synthesize
from qlsed.quantizer import make_quantizer, quantize_complex


@pytest.mark.parametrize("bits", [1, 2, 3, math.inf])
def test_amplitude_fim_is_general_fim_restricted(bits):
    n = 48
    zeta = 1.5 * atom(0.6, n)
    comp = SinusoidComponent(2.0, 0.4 - 0.9j)
    model = make_quantizer(bits, 2.0)
    small = fim_amplitude(comp.omega, comp.amp, zeta, 1.0, model, n)
    full = fim_general([comp], 1.0, model, n, zeta=zeta, params=("re", "im"))
    np.testing.assert_allclose(small.matrix, full.matrix, rtol=1e-12)
    np.testing.assert_allclose(small.crb, full.crb, rtol=1e-10)


def test_unquantized_frequency_crb_closed_form():
    n, x, sigma = 64, 0.8 + 0.6j, 0.7
    fim = fim_general([SinusoidComponent(1.3, x)], sigma, make_quantizer(math.inf, 1.0), n)
    assert fim.crb_of("omega") == pytest.approx(crb_frequency_unquantized(x, sigma, n), rel=1e-9)


def test_one_bit_fim_scales_by_two_over_pi():
    n = 32
    comp = SinusoidComponent(0.7, 1e-9)
    f1 = fim_general([comp], 1.0, make_quantizer(1, 1.0), n, params=("re", "im")).matrix
    finf = fim_general([comp], 1.0, make_quantizer(math.inf, 1.0), n, params=("re", "im")).matrix
    np.testing.assert_allclose(f1, 2 / math.pi * finf, rtol=1e-9, atol=1e-12)


def test_singular_fim_is_flagged():
    comps = [SinusoidComponent(0.5, 1.0), SinusoidComponent(0.5, 1.0)]
    res = fim_general(comps, 1.0, make_quantizer(3, 2.0), 16)
    assert res.singular and res.crb is None and math.isinf(res.crb_trace)


def test_fim_matches_monte_carlo_score_covariance():
    """Empirical covariance of the score at the truth against the FIM."""
    rng = np.random.default_rng(7)
    n, trials, sigma = 24, 4000, 1.0
    comp = SinusoidComponent(1.0, 0.9 - 0.4j)
    zeta = 0.8 * atom(2.3, n)
    model = make_quantizer(2, 1.8)
    man = Manifold(n)
    clean = zeta + synthesize([comp], man)
    scores = np.empty((trials, 3))
    for t in range(trials):
        y = clean + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        obs = quantize_complex(y, model)
        scores[t], _ = full_gradient_hessian(obs, zeta, [comp.omega], [comp.amp], sigma, man)
    fim = fim_general([comp], sigma, model, man, zeta=zeta).matrix
    se_mean = scores.std(axis=0) / math.sqrt(trials)
    assert np.all(np.abs(scores.mean(axis=0)) <= 3 * se_mean)
    prod = scores[:, :, None] * scores[:, None, :]
    emp = prod.mean(axis=0)
    se = prod.std(axis=0) / math.sqrt(trials)
    assert np.all(np.abs(emp - fim) <= 3 * se), (emp, fim, se)


def test_snr_loss_zero_offset():
    n = 128
    assert snr_loss(1.0, np.zeros(n), 1.0, make_quantizer(1, 1.0), n) == pytest.approx(
        10 * math.log10(math.pi / 2), abs=1e-9)
    assert snr_loss(1.0, np.zeros(n), 1.0, make_quantizer(math.inf, 1.0), n) == 0.0
    assert snr_loss_1bit_approx(np.zeros(n), 1.0) == pytest.approx(10 * math.log10(math.pi / 2))


def test_snr_loss_grows_with_offset():
    n = 256
    losses = [snr_loss(1.0, c * atom(0.2, n), 1.0, make_quantizer(1, 1.0), n) for c in (0, 0.5, 1, 2)]
    assert np.all(np.diff(losses) > 0)


def test_one_bit_approx_tracks_exact_loss():
    n = 1024
    zeta = 2.0 * atom(math.pi / 2, n)
    exact = snr_loss(2.34, zeta, 1.0, make_quantizer(1, 1.0), n)
    assert snr_loss_1bit_approx(zeta, 1.0) == pytest.approx(exact, abs=0.6)


def test_one_bit_density_branches():
    # small offsets follow (2/pi) exp(-x^2/sigma^2); large ones the Mills-ratio tail
    exact = lambda x: make_quantizer(1, 1.0).info(x, 1.0)
    assert h_one_bit_approx(0.0, 1.0) == pytest.approx(2 / math.pi)
    assert h_one_bit_approx(0.1, 1.0) == pytest.approx(exact(0.1), rel=0.01)
    assert h_one_bit_approx(5.0, 1.0) == pytest.approx(exact(5.0), rel=0.03)
    # the split sits at sqrt(8/pi) sigma; the branches do not meet there
    s = math.sqrt(8 / math.pi)
    assert h_one_bit_approx(s * (1 + 1e-9), 1.0) / h_one_bit_approx(s * (1 - 1e-9), 1.0) == pytest.approx(
        math.sqrt(2), rel=1e-6)


def test_large_threshold_bound():
    n = 64
    zeta = (3.0 + 3.0j) * np.ones(n)
    bound = snr_loss_1bit_large_threshold_bound(zeta, 1.0)
    exact = snr_loss(0.4, zeta, 1.0, make_quantizer(1, 1.0), n)
    assert bound == pytest.approx(exact, abs=1.0)
