import math

import numpy as np
import pytest
from scipy import stats

from qlsed.likelihood import (
    CompressiveManifold,
    Manifold,
    SinusoidComponent,
    amp_gradient_hessian,
    atom,
    freq_derivatives,
    full_gradient_hessian,
    h_info,
    log_likelihood,
    log_likelihood_mean,
    pseudo_measurements,
    solve_amplitude,
    solve_joint_amplitudes,
    synthesize,
)
from qlsed.quantizer import make_quantizer, quantize_complex, random_signed_thresholds, signed_measurements

N = 64
SIGMA = 1.0


def _obs(rng, bits, n=N, amp=0.8 - 0.3j, omega=1.1, zeta=None, manifold=None):
    manifold = manifold or Manifold(n)
    zeta = np.zeros(manifold.m, dtype=complex) if zeta is None else zeta
    y = zeta + manifold.atom(omega) * amp + SIGMA * (rng.standard_normal(manifold.m)
                                                      + 1j * rng.standard_normal(manifold.m)) / math.sqrt(2)
    model = make_quantizer(bits, 2.5)
    return quantize_complex(y, model), model, y


def _ll_amp(obs, zeta, omega, theta, manifold=None):
    return log_likelihood(obs, zeta, [SinusoidComponent(omega, complex(*theta))], SIGMA, manifold)


def test_atom_and_manifold():
    a = atom(0.3, 5)
    np.testing.assert_allclose(a, np.exp(1j * 0.3 * np.arange(5)))
    m = Manifold(5)
    A = m.atoms([0.3, 1.0])
    np.testing.assert_allclose(A[:, 0], a)
    a0, da, d2a = m.atom_derivs(0.3)
    h = 1e-6
    np.testing.assert_allclose(da, (m.atom(0.3 + h) - m.atom(0.3 - h)) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(d2a, (m.atom(0.3 + h) - 2 * a0 + m.atom(0.3 - h)) / h ** 2, atol=1e-3)


def test_component_wraps_frequency():
    assert SinusoidComponent(2 * math.pi + 0.5, 1).omega == pytest.approx(0.5)


def test_unquantized_likelihood_is_gaussian(rng):
    obs, _, y = _obs(rng, math.inf)
    mu = 0.1 * np.ones(N, dtype=complex)
    s = SIGMA / math.sqrt(2)
    want = stats.norm.logpdf(y.real, 0.1, s).sum() + stats.norm.logpdf(y.imag, 0.0, s).sum()
    assert log_likelihood_mean(obs, mu, SIGMA) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("bits", [1, 2, 3, math.inf])
def test_amplitude_gradient_matches_finite_differences(bits, rng):
    zeta = 0.7 * atom(0.4, N)
    obs, _, _ = _obs(rng, bits, zeta=zeta)
    omega, theta = 1.1, np.array([0.5, -0.2])
    g, H = amp_gradient_hessian(obs, zeta, omega, complex(*theta), SIGMA)
    h = 1e-5
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (_ll_amp(obs, zeta, omega, theta + e) - _ll_amp(obs, zeta, omega, theta - e)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)
        gp, _ = amp_gradient_hessian(obs, zeta, omega, complex(*(theta + e)), SIGMA)
        gm, _ = amp_gradient_hessian(obs, zeta, omega, complex(*(theta - e)), SIGMA)
        np.testing.assert_allclose(H[:, i], (gp - gm) / (2 * h), rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("bits", [1, 3, math.inf])
def test_gradient_at_zero_is_pseudo_measurement_projection(bits, rng):
    zeta = 1.2 * atom(2.0, N)
    obs, _, _ = _obs(rng, bits, zeta=zeta)
    a = atom(0.9, N)
    g, _ = amp_gradient_hessian(obs, zeta, 0.9, 0j, SIGMA)
    z = np.vdot(a, pseudo_measurements(obs, zeta, SIGMA))
    np.testing.assert_allclose(g, math.sqrt(2) / SIGMA * np.array([z.real, z.imag]), rtol=1e-12)


@pytest.mark.parametrize("bits", [1, 2, math.inf])
def test_frequency_derivatives_match_finite_differences(bits, rng):
    obs, _, _ = _obs(rng, bits)
    x = 0.7 - 0.4j

    def f(w):
        return log_likelihood(obs, None, [SinusoidComponent(w, x)], SIGMA)

    w0, h = 1.13, 1e-5
    d1, d2 = freq_derivatives(obs, None, w0, x, SIGMA)
    fd1 = (f(w0 + h) - f(w0 - h)) / (2 * h)
    assert d1 == pytest.approx(fd1, rel=1e-4, abs=1e-4)
    h2 = 1e-4
    fd2 = (f(w0 + h2) - 2 * f(w0) + f(w0 - h2)) / h2 ** 2
    assert d2 == pytest.approx(fd2, rel=1e-4)


def test_full_hessian_matches_finite_differences(rng):
    obs, _, _ = _obs(rng, 2)
    omegas, amps = np.array([1.1, 2.0]), np.array([0.7 - 0.4j, 0.3 + 0.2j])

    def pack(w, x):
        return np.ravel(np.column_stack([w, x.real, x.imag]))

    def unpack(t):
        t = t.reshape(-1, 3)
        return t[:, 0], t[:, 1] + 1j * t[:, 2]

    def f(t):
        w, x = unpack(t)
        return log_likelihood(obs, None, [SinusoidComponent(a, b) for a, b in zip(w, x)], SIGMA)

    t0 = pack(omegas, amps)
    g, H = full_gradient_hessian(obs, None, omegas, amps, SIGMA)
    h = 1e-5
    for i in range(t0.size):
        e = np.zeros_like(t0)
        e[i] = h
        assert g[i] == pytest.approx((f(t0 + e) - f(t0 - e)) / (2 * h), rel=1e-4, abs=1e-4)
        gp, _ = full_gradient_hessian(obs, None, *unpack(t0 + e), SIGMA)
        gm, _ = full_gradient_hessian(obs, None, *unpack(t0 - e), SIGMA)
        np.testing.assert_allclose(H[:, i], (gp - gm) / (2 * h), rtol=1e-4, atol=1e-3)


def test_solve_amplitude_unquantized_is_least_squares(rng):
    zeta = 0.5 * atom(0.2, N)
    obs, _, y = _obs(rng, math.inf, zeta=zeta)
    a = atom(1.1, N)
    want = np.vdot(a, y - zeta) / N
    assert solve_amplitude(obs, zeta, 1.1, SIGMA) == pytest.approx(want, rel=1e-9, abs=1e-10)


@pytest.mark.parametrize("bits", [1, 3])
def test_solve_amplitude_is_stationary(bits, rng):
    obs, _, _ = _obs(rng, bits, amp=1.0 + 0.5j)
    x, ok, ll = solve_amplitude(obs, None, 1.1, SIGMA, full_output=True)
    g, H = amp_gradient_hessian(obs, None, 1.1, x, SIGMA)
    assert ok
    assert np.linalg.norm(g) < 1e-6 * N
    assert np.all(np.linalg.eigvalsh(H) < 0)
    assert ll == pytest.approx(log_likelihood(obs, None, [SinusoidComponent(1.1, x)], SIGMA))


def test_joint_amplitudes_unquantized_is_least_squares(rng):
    m = Manifold(N)
    comps = [SinusoidComponent(0.5, 1 + 1j), SinusoidComponent(0.7, -0.5)]
    y = synthesize(comps, m) + 0.3 * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
    obs = quantize_complex(y, make_quantizer(math.inf, 1.0))
    A = m.atoms([0.5, 0.7])
    want = np.linalg.lstsq(A, y, rcond=None)[0]
    got, ok, _ = solve_joint_amplitudes(obs, None, [0.5, 0.7], SIGMA, np.zeros(2))
    assert ok
    np.testing.assert_allclose(got, want, rtol=1e-8)


def test_signed_threshold_gradient(rng):
    spec = random_signed_thresholds(N, rng)
    y = atom(0.8, N) * 0.6 + (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / math.sqrt(2)
    obs = signed_measurements(y, spec)
    g, _ = amp_gradient_hessian(obs, None, 0.8, 0.2 + 0.1j, SIGMA)
    h = 1e-6
    fd = (_ll_amp(obs, None, 0.8, [0.2 + h, 0.1]) - _ll_amp(obs, None, 0.8, [0.2 - h, 0.1])) / (2 * h)
    assert g[0] == pytest.approx(fd, rel=1e-5)


def test_compressive_identity_reduces_to_uniform(rng):
    obs, _, _ = _obs(rng, 2)
    ident = CompressiveManifold(np.eye(N))
    comps = [SinusoidComponent(1.1, 0.5 + 0.1j)]
    assert log_likelihood(obs, None, comps, SIGMA, ident) == pytest.approx(
        log_likelihood(obs, None, comps, SIGMA), rel=1e-12)
    np.testing.assert_allclose(ident.grid_atoms(4 * N), Manifold(N).atoms(2 * np.pi * np.arange(4 * N) / (4 * N)),
                               atol=1e-10)


def test_information_density():
    assert h_info(0.0, math.sqrt(2.0), make_quantizer(1, 1.0)) == pytest.approx(2 / math.pi)
    assert h_info(0.3, 1.0, make_quantizer(math.inf, 1.0)) == 1.0


def test_sigma_must_be_positive(rng):
    obs, _, _ = _obs(rng, 1)
    with pytest.raises(ValueError):
        log_likelihood_mean(obs, np.zeros(N), 0.0)


def test_length_mismatch(rng):
    obs, _, _ = _obs(rng, 1)
    with pytest.raises(ValueError):
        log_likelihood(obs, None, [], SIGMA, Manifold(N + 1))
