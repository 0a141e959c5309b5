"""Rao tests for a sinusoid in quantized noise with a known offset ``zeta``.

The score at ``x = 0`` is summarized by ``Z = a^H phi`` with ``phi`` the
pseudo-measurements; the statistic combines it with
``d_+ = a^H diag(h_+) a`` and ``c = a^T diag(h_-) a``::

    T = (d_+ |Z|^2 - Re(c Z^2)) / (d_+^2 - |c|^2)

Under the null it is asymptotically chi-squared with two degrees of freedom.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import Manifold, TWO_PI, _zeta_array, h_plus_minus, synthesize
from .special import marcum_q1

_EPS = np.finfo(float).eps


def to_db(value):
    """Statistic in dB, ``20 log10``; zero maps to ``-inf``."""
    value = np.asarray(value, dtype=float)
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(value)
    return out if out.shape else float(out)


def from_db(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 20.0)


@dataclass(frozen=True, eq=False)
class RaoGridResult:
    """Rao statistic on an evenly spaced frequency grid."""

    omegas: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    index: int = 0
    degenerate: int = 0

    @property
    def omega(self):
        return float(self.omegas[self.index])

    @property
    def max(self):
        return float(self.values[self.index])

    @property
    def max_db(self):
        return to_db(self.max)


@dataclass(frozen=True)
class DetectionPrediction:
    tau_th: float
    lam: float
    p_fa: float
    p_d: float


def _check_pfa(p_fa):
    if not 0.0 < p_fa < 1.0:
        raise ValueError("p_fa must lie in (0, 1)")


def threshold_unknown_freq(p_fa, n):
    """``-2 ln(1 - (1 - p_fa)^(1/n))`` for the maximum over ``n`` bins."""
    _check_pfa(p_fa)
    if n < 1:
        raise ValueError("n must be >= 1")
    # 1 - (1-p)^(1/n) without cancellation
    tail = -math.expm1(math.log1p(-p_fa) / n)
    return -2.0 * math.log(tail)


def threshold_known_freq(p_fa):
    _check_pfa(p_fa)
    return -2.0 * math.log(p_fa)


def _as_manifold(manifold, m):
    if manifold is None:
        return Manifold(m)
    if not isinstance(manifold, Manifold):
        return Manifold(int(manifold))
    return manifold


def _combine(z, dplus, c):
    """Full statistic from the three quadratic forms; flags degenerate cases."""
    den = dplus * dplus - np.abs(c) ** 2
    num = dplus * np.abs(z) ** 2 - np.real(c * z * z)
    bad = den <= 1e3 * _EPS * dplus * dplus
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(bad, 0.0, num / np.where(bad, 1.0, den))
    return np.maximum(t, 0.0), bad


def quadratic_forms(phi, zeta, omega, sigma, spec, manifold=None):
    """``Z = a^H phi``, ``d_+`` and ``c`` at a single frequency."""
    phi = np.asarray(phi, dtype=complex)
    manifold = _as_manifold(manifold, phi.size)
    a = manifold.atom(omega)
    if a.shape != phi.shape:
        raise ValueError("phi and manifold lengths differ")
    hp, hm = h_plus_minus(_zeta_array(zeta, phi.size), sigma, spec)
    z = complex(np.vdot(a, phi))
    dplus = float(np.real(np.vdot(a, hp * a)))
    c = complex(np.sum(hm * a * a))
    return z, dplus, c


def rao_statistic(phi, zeta, omega, sigma, spec, manifold=None):
    """Rao statistic at a known frequency, including the ``h_-`` term.

    Raises
    ------
    FloatingPointError
        When ``d_+^2 - |c|^2`` vanishes (every channel saturated).
    """
    z, dplus, c = quadratic_forms(phi, zeta, omega, sigma, spec, manifold)
    t, bad = _combine(np.array(z), np.array(dplus), np.array(c))
    if bad:
        raise FloatingPointError("degenerate Rao denominator")
    return float(t)


def rao_statistic_simplified(phi, zeta, omega, sigma, spec, manifold=None):
    """``|a^H phi|^2 / (a^H diag(h_+) a)``, the statistic with ``h_-`` dropped."""
    z, dplus, _ = quadratic_forms(phi, zeta, omega, sigma, spec, manifold)
    if not dplus > 0:
        raise FloatingPointError("degenerate Rao denominator")
    return abs(z) ** 2 / dplus


def grid_forms(phi, zeta, sigma, spec, oversample=1, manifold=None, hpm=None):
    """``Z``, ``d_+`` and ``c`` on the grid ``2 pi g / (oversample * N)``.

    ``Z`` is one zero-padded FFT; for uniform sampling ``c`` is read from a
    second zero-padded inverse FFT of ``h_-`` at index ``2g mod G``.
    """
    phi = np.asarray(phi, dtype=complex)
    manifold = _as_manifold(manifold, phi.size)
    if int(oversample) != oversample or oversample < 1:
        raise ValueError("oversample must be a positive integer")
    size = int(oversample) * manifold.n
    hp, hm = hpm if hpm is not None else h_plus_minus(_zeta_array(zeta, phi.size), sigma, spec)
    if manifold.sensing is None:
        z = np.fft.fft(phi, size)
        dplus = np.full(size, float(np.sum(hp)))
        hm_t = size * np.fft.ifft(hm, size)
        c = hm_t[(2 * np.arange(size)) % size]
    else:
        grid = manifold.grid_atoms(size)
        z = np.fft.fft(manifold.back_project(phi), size)
        dplus = hp @ (np.abs(grid) ** 2)
        c = hm @ (grid * grid)
    return z, dplus, c


def rao_grid(phi, zeta, sigma, spec, oversample=1, manifold=None, simplified=False, hpm=None):
    """Rao statistic on ``Omega_os``; the argmax takes the lowest index on ties."""
    z, dplus, c = grid_forms(phi, zeta, sigma, spec, oversample, manifold, hpm)
    if simplified:
        bad = ~(dplus > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(bad, 0.0, np.abs(z) ** 2 / np.where(bad, 1.0, dplus))
    else:
        t, bad = _combine(z, dplus, c)
    omegas = TWO_PI * np.arange(t.size) / t.size
    return RaoGridResult(omegas, t, int(np.argmax(t)), int(np.count_nonzero(bad)))


def beta(omega, omega_g, n):
    """Dirichlet mismatch factor ``|sin(N d/2) / (N sin(d/2))|^2``, ``d = omega - omega_g``."""
    d = np.asarray(omega, dtype=float) - np.asarray(omega_g, dtype=float)
    d = (d + math.pi) % TWO_PI - math.pi
    small = np.abs(d) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sin(n * d / 2.0) / (n * np.sin(d / 2.0))
    series = 1.0 - (n * n - 1.0) * d * d / 24.0
    out = np.where(small, series, ratio) ** 2
    return out if out.shape else float(out)


def nearest_dft_bin(omega, n):
    """Frequency of the DFT bin closest to ``omega`` in wrap-around distance."""
    g = int(np.round((omega % TWO_PI) / TWO_PI * n)) % n
    return TWO_PI * g / n


def noncentrality(omega, x, zeta, sigma, spec, manifold=None, grid_freq=None):
    """``(2/sigma^2) (d_+ |x|^2 + Re(c x^2))``, times ``beta_g`` for a grid bin.

    ``grid_freq="nearest"`` uses the closest DFT bin.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    zeta_arr = np.asarray(zeta, dtype=complex)
    m = manifold.m if isinstance(manifold, Manifold) else (int(manifold) if manifold is not None else zeta_arr.size)
    manifold = _as_manifold(manifold, m)
    a = manifold.atom(omega)
    hp, hm = h_plus_minus(_zeta_array(zeta, m), sigma, spec)
    dplus = float(np.real(np.vdot(a, hp * a)))
    c = complex(np.sum(hm * a * a))
    x = complex(x)
    lam = max(0.0, (2.0 / sigma ** 2) * (dplus * abs(x) ** 2 + (c * x * x).real))
    if grid_freq is not None:
        if isinstance(grid_freq, str) and grid_freq == "nearest":
            grid_freq = nearest_dft_bin(omega, manifold.n)
        lam *= beta(omega, grid_freq, manifold.n)
    return lam


def predict_pd(lam, p_fa, n=None, known_freq=False):
    """Asymptotic detection probability ``Q_1(sqrt(lam), sqrt(threshold))``."""
    if lam < 0:
        raise ValueError("noncentrality must be nonnegative")
    tau = threshold_known_freq(p_fa) if known_freq else threshold_unknown_freq(p_fa, n)
    return float(marcum_q1(math.sqrt(lam), math.sqrt(tau)))


def predict_detection(omega, x, zeta, sigma, spec, p_fa, manifold=None, known_freq=False):
    """:class:`DetectionPrediction` for one target with oracle ``zeta``."""
    zeta_arr = np.asarray(zeta, dtype=complex)
    manifold = _as_manifold(manifold, zeta_arr.size)
    grid = None if known_freq else "nearest"
    lam = noncentrality(omega, x, zeta, sigma, spec, manifold, grid_freq=grid)
    n = manifold.n
    tau = threshold_known_freq(p_fa) if known_freq else threshold_unknown_freq(p_fa, n)
    return DetectionPrediction(tau, lam, p_fa, predict_pd(lam, p_fa, n, known_freq))


def predict_pd_targets(components, sigma, spec, p_fa, manifold):
    """Per-target oracle predictions with ``zeta`` the sum of the other targets.

    Returns ``(per_target, product)``; the product bounds the probability
    that every target is detected.
    """
    manifold = _as_manifold(manifold, None)
    comps = list(components)
    total = synthesize(comps, manifold)
    out = []
    for comp in comps:
        others = total - manifold.atom(comp.omega) * comp.amp
        out.append(predict_detection(comp.omega, comp.amp, others, sigma, spec, p_fa, manifold).p_d)
    return np.array(out), float(np.prod(out)) if out else 1.0
