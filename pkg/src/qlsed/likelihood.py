"""Log-likelihood of quantized sinusoid mixtures and its derivatives.

The observation model is ``y = Q(zeta + sum_k a(omega_k) x_k + noise)`` with
circular complex Gaussian noise of total variance ``sigma**2``, so each real
channel has standard deviation ``sigma / sqrt(2)``.  ``zeta`` is a known
complex offset (the synthesized interference of other sinusoids).

All functions take an optional ``manifold``; by default atoms are
``a(omega)_n = exp(1j * n * omega)``.  A :class:`CompressiveManifold`
replaces them by ``Phi @ a(omega)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi

# number of cells clamped at LOG_FLOOR seen by log_likelihood in this process
DIAGNOSTICS = {"clamped_cells": 0}


@dataclass(frozen=True)
class SinusoidComponent:
    """A single sinusoid: frequency in radians/sample and complex amplitude."""

    omega: float
    amp: complex

    def __post_init__(self):
        object.__setattr__(self, "omega", float(self.omega) % TWO_PI)
        object.__setattr__(self, "amp", complex(self.amp))


@dataclass(frozen=True)
class MixtureModel:
    components: tuple = ()
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def k(self):
        return len(self.components)

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)


class Manifold:
    """Uniformly sampled complex exponentials of length ``n``."""

    sensing = None

    def __init__(self, n):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = int(n)
        self.idx = np.arange(self.n, dtype=float)

    @property
    def m(self):
        """Length of the observation vector."""
        return self.n

    def atom(self, omega):
        return np.exp(1j * self.idx * omega)

    def atoms(self, omegas):
        """Matrix whose columns are ``a(omega_k)``; shape ``(m, K)``."""
        omegas = np.asarray(omegas, dtype=float)
        return np.exp(1j * np.outer(self.idx, omegas))

    def atom_derivs(self, omega):
        """``a``, ``da/domega`` and ``d2a/domega2``."""
        a = np.exp(1j * self.idx * omega)
        return a, 1j * self.idx * a, -(self.idx ** 2) * a

    def back_project(self, v):
        """Map an observation-domain vector onto the signal domain (``Phi^H v``)."""
        return v

    def __eq__(self, other):
        return type(other) is Manifold and other.n == self.n

    def __hash__(self):
        return hash(("uniform", self.n))


class CompressiveManifold(Manifold):
    """Atoms ``Phi @ a(omega)`` for a complex ``(M, N)`` sensing matrix ``Phi``."""

    def __init__(self, sensing):
        phi = np.array(sensing, dtype=complex)
        if phi.ndim != 2:
            raise ValueError("sensing matrix must be 2-D")
        super().__init__(phi.shape[1])
        phi.setflags(write=False)
        self.sensing = phi
        self._grid_cache = {}

    @property
    def m(self):
        return self.sensing.shape[0]

    def atom(self, omega):
        return self.sensing @ super().atom(omega)

    def atoms(self, omegas):
        return self.sensing @ super().atoms(omegas)

    def atom_derivs(self, omega):
        a, da, d2a = super().atom_derivs(omega)
        return self.sensing @ a, self.sensing @ da, self.sensing @ d2a

    def back_project(self, v):
        return self.sensing.conj().T @ v

    def grid_atoms(self, size):
        """``Phi @ a(2 pi g / size)`` for all ``g``; shape ``(M, size)``, cached."""
        if size not in self._grid_cache:
            if size < self.n:
                mat = self.atoms(TWO_PI * np.arange(size) / size)
            else:
                mat = size * np.fft.ifft(self.sensing, n=size, axis=1)
            mat.setflags(write=False)
            self._grid_cache[size] = mat
        return self._grid_cache[size]

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return id(self)


def atom(omega, n_samples):
    """``a(omega)_n = exp(1j n omega)`` for ``n = 0..n_samples-1``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return np.exp(1j * np.arange(n_samples) * omega)


def default_manifold(obs, manifold=None):
    if manifold is None:
        return Manifold(obs.n)
    if manifold.m != obs.n:
        raise ValueError(f"manifold produces {manifold.m} samples, observation has {obs.n}")
    return manifold


def synthesize(components, manifold):
    """``sum_k a(omega_k) x_k``; ``manifold`` may be an int (uniform length)."""
    if not isinstance(manifold, Manifold):
        manifold = Manifold(manifold)
    comps = list(components)
    if not comps:
        return np.zeros(manifold.m, dtype=complex)
    omegas = np.array([c.omega for c in comps])
    amps = np.array([c.amp for c in comps])
    return manifold.atoms(omegas) @ amps


def _zeta_array(zeta, m):
    if zeta is None:
        return np.zeros(m, dtype=complex)
    z = np.asarray(zeta, dtype=complex)
    if z.shape == ():
        return np.full(m, complex(z))
    if z.shape != (m,):
        raise ValueError(f"zeta has shape {z.shape}, expected ({m},)")
    return z


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError("sigma must be positive")


def channel_terms(obs, mu, sigma):
    """Per-channel ``(log P, dlogP/dmu, d2logP/dmu2)``, each shaped ``(2, N)``."""
    _check_sigma(sigma)
    s = sigma / _kernels.SQRT2
    mu = np.asarray(mu, dtype=complex)
    mflat = np.concatenate([mu.real, mu.imag])
    lp, d1, d2 = _kernels.cell_terms(obs._lo_flat, obs._hi_flat, mflat, s)
    n = obs.n
    return lp.reshape(2, n), d1.reshape(2, n), d2.reshape(2, n)


def log_likelihood_mean(obs, mu, sigma):
    """Log-likelihood for an arbitrary complex mean vector ``mu``."""
    _check_sigma(sigma)
    mu = np.asarray(mu, dtype=complex)
    if mu.shape != (obs.n,):
        raise ValueError("mean and observation lengths differ")
    s = sigma / _kernels.SQRT2
    total, clamped = _kernels.log_prob_sum(
        obs._lo_flat, obs._hi_flat, np.concatenate([mu.real, mu.imag]), s)
    if clamped:
        DIAGNOSTICS["clamped_cells"] += clamped
    return total


def log_likelihood(obs, zeta, components, sigma, manifold=None):
    """Sum of per-channel log cell probabilities under mean ``zeta + sum a x``.

    Exact (unquantized) channels contribute the Gaussian log-density instead.
    """
    manifold = default_manifold(obs, manifold)
    mu = _zeta_array(zeta, obs.n) + synthesize(components, manifold)
    return log_likelihood_mean(obs, mu, sigma)


def pseudo_measurements(obs, zeta, sigma):
    """Normalized scores ``phi_B`` of every sample at mean ``zeta``.

    Per channel this is ``-(phi(b) - phi(a)) / (Phi(b) - Phi(a))`` with the
    cell edges ``a, b`` standardized by ``sigma / sqrt(2)``; for exact samples
    it is ``(y - zeta) / (sigma / sqrt(2))``.
    """
    zeta = _zeta_array(zeta, obs.n)
    _, d1, _ = channel_terms(obs, zeta, sigma)
    s = sigma / _kernels.SQRT2
    return s * (d1[0] + 1j * d1[1])


def channel_info(zeta, sigma, spec):
    """``h_B`` of the real and imaginary channel means, shape ``(2, N)``."""
    _check_sigma(sigma)
    z = np.asarray(zeta, dtype=complex)
    return np.asarray(spec.info(np.stack([z.real, z.imag]), sigma), dtype=float)


def h_info(x, sigma, spec):
    """Information density ``h_B(x, sigma^2)`` of one real channel.

    Equals 1 without quantization and ``2/pi`` for one bit at ``x = 0``.
    """
    _check_sigma(sigma)
    return spec.info(np.asarray(x, dtype=float), sigma)


def h_plus_minus(zeta, sigma, spec):
    """``h_+ = (h(Re zeta) + h(Im zeta))/2`` and ``h_- = (h(Re zeta) - h(Im zeta))/2``."""
    h = channel_info(zeta, sigma, spec)
    return 0.5 * (h[0] + h[1]), 0.5 * (h[0] - h[1])


def _grad_hess(d1, d2, jac):
    """Gradient and Hessian of the log-likelihood for a complex mean Jacobian.

    ``jac`` has shape ``(N, P)``; column ``p`` is ``dmu/dtheta_p``.  Terms from
    the curvature of the mean itself are added by the caller.
    """
    jr, ji = jac.real, jac.imag
    grad = d1[0] @ jr + d1[1] @ ji
    hess = (jr.T * d2[0]) @ jr + (ji.T * d2[1]) @ ji
    return grad, 0.5 * (hess + hess.T)


def amp_gradient_hessian(obs, zeta, omega, x, sigma, manifold=None):
    """Gradient and Hessian of the log-likelihood in ``[Re x, Im x]``.

    At ``x = 0`` the gradient is ``(sqrt(2)/sigma) [Re a^H phi, Im a^H phi]``.
    """
    manifold = default_manifold(obs, manifold)
    a = manifold.atom(omega)
    mu = _zeta_array(zeta, obs.n) + a * complex(x)
    _, d1, d2 = channel_terms(obs, mu, sigma)
    return _grad_hess(d1, d2, np.stack([a, 1j * a], axis=1))


def joint_amp_gradient_hessian(obs, zeta, omegas, amps, sigma, manifold=None):
    """Gradient/Hessian in ``[Re x_1, Im x_1, ..., Re x_K, Im x_K]``."""
    manifold = default_manifold(obs, manifold)
    A = manifold.atoms(omegas)
    amps = np.asarray(amps, dtype=complex)
    mu = _zeta_array(zeta, obs.n) + A @ amps
    _, d1, d2 = channel_terms(obs, mu, sigma)
    jac = np.empty((obs.n, 2 * A.shape[1]), dtype=complex)
    jac[:, 0::2] = A
    jac[:, 1::2] = 1j * A
    return _grad_hess(d1, d2, jac)


def freq_derivatives(obs, zeta, omega, x, sigma, manifold=None):
    """First and second derivative of the log-likelihood in ``omega``."""
    manifold = default_manifold(obs, manifold)
    a, da, d2a = manifold.atom_derivs(omega)
    x = complex(x)
    mu = _zeta_array(zeta, obs.n) + a * x
    _, d1, d2 = channel_terms(obs, mu, sigma)
    g1 = da * x
    g2 = d2a * x
    first = d1[0] @ g1.real + d1[1] @ g1.imag
    second = (d2[0] @ (g1.real ** 2) + d2[1] @ (g1.imag ** 2)
              + d1[0] @ g2.real + d1[1] @ g2.imag)
    return float(first), float(second)


def full_gradient_hessian(obs, zeta, omegas, amps, sigma, manifold=None):
    """Gradient/Hessian in ``[omega_k, Re x_k, Im x_k]`` for every component."""
    manifold = default_manifold(obs, manifold)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    amps = np.atleast_1d(np.asarray(amps, dtype=complex))
    k = omegas.size
    jac = np.empty((obs.n, 3 * k), dtype=complex)
    curv = []
    mu = _zeta_array(zeta, obs.n).copy()
    for i in range(k):
        a, da, d2a = manifold.atom_derivs(omegas[i])
        mu += a * amps[i]
        jac[:, 3 * i] = da * amps[i]
        jac[:, 3 * i + 1] = a
        jac[:, 3 * i + 2] = 1j * a
        curv.append((da, d2a))
    _, d1, d2 = channel_terms(obs, mu, sigma)
    grad, hess = _grad_hess(d1, d2, jac)
    # mean curvature: d2mu/domega2 and d2mu/(domega dx)
    for i, (da, d2a) in enumerate(curv):
        w = 3 * i
        g2 = d2a * amps[i]
        hess[w, w] += d1[0] @ g2.real + d1[1] @ g2.imag
        cross_r = d1[0] @ da.real + d1[1] @ da.imag
        cross_i = d1[0] @ (1j * da).real + d1[1] @ (1j * da).imag
        hess[w, w + 1] += cross_r
        hess[w + 1, w] += cross_r
        hess[w, w + 2] += cross_i
        hess[w + 2, w] += cross_i
    return grad, hess


def _newton_direction(grad, hess):
    """Ascent direction ``-H^{-1} g``; falls back to scaled gradient."""
    try:
        step = -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        step = None
    if step is None or not np.all(np.isfinite(step)) or step @ grad <= 0:
        scale = np.max(np.abs(np.diag(hess)))
        step = grad / scale if scale > 0 else grad
    return step


def _damped_newton(f_and_derivs, value_fn, theta, tol, max_iter, max_halvings=20):
    """Maximize a concave function from ``theta`` by halving Newton steps.

    Returns ``(theta, value, converged, n_iter, values)``.
    """
    value = value_fn(theta)
    values = [value]
    for it in range(max_iter):
        grad, hess = f_and_derivs(theta)
        if np.linalg.norm(grad) <= tol:
            return theta, value, True, it, values
        step = _newton_direction(grad, hess)
        t = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + t * step
            cval = value_fn(cand)
            if cval >= value:
                break
            t *= 0.5
        else:
            # no improving step even after all halvings
            return theta, value, False, it, values
        stalled = cval == value
        theta, value = cand, cval
        values.append(value)
        if stalled:
            # at floating-point resolution of the objective
            break
    grad, _ = f_and_derivs(theta)
    return theta, value, bool(np.linalg.norm(grad) <= tol), max_iter, values


def solve_amplitude(obs, zeta, omega, sigma, init=0j, manifold=None, tol=None,
                    max_iter=50, full_output=False):
    """Maximum-likelihood amplitude at a fixed frequency by damped Newton ascent.

    Parameters
    ----------
    tol : float, optional
        Gradient-norm tolerance, default ``1e-8 * N``.
    full_output : bool
        If true, return ``(x, converged, log_likelihood)``.
    """
    manifold = default_manifold(obs, manifold)
    zeta = _zeta_array(zeta, obs.n)
    a = manifold.atom(omega)
    jac = np.stack([a, 1j * a], axis=1)
    tol = 1e-8 * obs.n if tol is None else tol

    def derivs(theta):
        mu = zeta + a * (theta[0] + 1j * theta[1])
        _, d1, d2 = channel_terms(obs, mu, sigma)
        return _grad_hess(d1, d2, jac)

    def value(theta):
        return log_likelihood_mean(obs, zeta + a * (theta[0] + 1j * theta[1]), sigma)

    init = complex(init)
    theta, ll, ok, _, _ = _damped_newton(derivs, value, np.array([init.real, init.imag]), tol, max_iter)
    x = complex(theta[0], theta[1])
    return (x, ok, ll) if full_output else x


def solve_joint_amplitudes(obs, zeta, omegas, sigma, init, manifold=None, tol=None, max_iter=50):
    """Jointly re-estimate all amplitudes at fixed frequencies.

    Returns ``(amps, converged, log_likelihood)``.
    """
    manifold = default_manifold(obs, manifold)
    zeta = _zeta_array(zeta, obs.n)
    A = manifold.atoms(omegas)
    k = A.shape[1]
    if k == 0:
        return np.zeros(0, dtype=complex), True, log_likelihood_mean(obs, zeta, sigma)
    jac = np.empty((obs.n, 2 * k), dtype=complex)
    jac[:, 0::2] = A
    jac[:, 1::2] = 1j * A
    tol = 1e-8 * obs.n if tol is None else tol

    def amps_of(theta):
        return theta[0::2] + 1j * theta[1::2]

    def derivs(theta):
        _, d1, d2 = channel_terms(obs, zeta + A @ amps_of(theta), sigma)
        return _grad_hess(d1, d2, jac)

    def value(theta):
        return log_likelihood_mean(obs, zeta + A @ amps_of(theta), sigma)

    init = np.asarray(init, dtype=complex)
    theta0 = np.empty(2 * k)
    theta0[0::2] = init.real
    theta0[1::2] = init.imag
    theta, ll, ok, _, _ = _damped_newton(derivs, value, theta0, tol, max_iter)
    return amps_of(theta), ok, ll
