"""Fisher information, Cramér-Rao bounds and SNR loss for quantized samples."""

import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import Manifold, _zeta_array, channel_info, h_plus_minus, synthesize

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class FimResult:
    """A Fisher information matrix with its inverse.

    ``crb`` is ``None`` (and ``singular`` true) when the smallest eigenvalue
    is below ``1e3 * eps * ||I||``.
    """

    matrix: np.ndarray = field(repr=False)
    labels: tuple = ()
    crb: object = field(default=None, repr=False)
    singular: bool = False

    @property
    def crb_trace(self):
        return float(np.trace(self.crb)) if self.crb is not None else math.inf

    def crb_of(self, prefix):
        """Sum of CRB diagonal entries whose label starts with ``prefix``."""
        if self.crb is None:
            return math.inf
        idx = [i for i, lab in enumerate(self.labels) if lab.startswith(prefix)]
        return float(np.sum(np.diag(self.crb)[idx]))


def _as_manifold(manifold):
    return manifold if isinstance(manifold, Manifold) else Manifold(int(manifold))


def _invert(mat):
    mat = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(mat)
    norm = np.max(np.abs(w)) if w.size else 0.0
    if w.size == 0 or w.min() <= 1e3 * _EPS * norm:
        return None, True
    return (v / w) @ v.T, False


def _amp_quadratic_forms(a, hp, hm):
    dplus = float(np.real(np.vdot(a, hp * a)))
    c = complex(np.sum(hm * a * a))
    return dplus, c


def fim_amplitude(omega, x, zeta, sigma, spec, manifold):
    """2x2 FIM of ``[Re x, Im x]`` at a known frequency.

    Assembled from ``d_+ = a^H diag(h_+) a`` and ``c = a^T diag(h_-) a``
    evaluated at ``eta = zeta + a x``, and inverted in closed form.

    Parameters
    ----------
    manifold : Manifold or int
        Atom generator, or the number of samples for uniform sampling.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    manifold = _as_manifold(manifold)
    a = manifold.atom(omega)
    eta = _zeta_array(zeta, manifold.m) + a * complex(x)
    hp, hm = h_plus_minus(eta, sigma, spec)
    dplus, c = _amp_quadratic_forms(a, hp, hm)
    k = 2.0 / sigma ** 2
    mat = k * np.array([[dplus + c.real, -c.imag], [-c.imag, dplus - c.real]])
    det = dplus ** 2 - abs(c) ** 2
    norm = abs(k) * (dplus + abs(c))
    if det * k * k <= 1e3 * _EPS * norm ** 2:
        return FimResult(mat, ("re", "im"), None, True)
    inv = np.array([[dplus - c.real, c.imag], [c.imag, dplus + c.real]]) / (k * det)
    return FimResult(mat, ("re", "im"), inv, False)


def mean_jacobian(components, manifold, params=("omega", "re", "im")):
    """Complex Jacobian ``d eta / d kappa`` and its labels.

    ``params`` selects which of ``omega``, ``re``, ``im`` are unknown for
    every component.
    """
    manifold = _as_manifold(manifold)
    cols, labels = [], []
    for k, comp in enumerate(components):
        a, da, _ = manifold.atom_derivs(comp.omega)
        for p in params:
            if p == "omega":
                cols.append(da * comp.amp)
            elif p == "re":
                cols.append(a)
            elif p == "im":
                cols.append(1j * a)
            else:
                raise ValueError(f"unknown parameter {p!r}")
            labels.append(f"{p}_{k}")
    jac = np.stack(cols, axis=1) if cols else np.zeros((manifold.m, 0), dtype=complex)
    return jac, tuple(labels)


def fim_general(components, sigma, spec, manifold, zeta=None, params=("omega", "re", "im")):
    """FIM ``(2/sigma^2) J^T Lambda J`` for stacked real/imaginary means.

    ``Lambda`` holds ``h_B`` of every real and imaginary mean; it is the
    identity without quantization.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    manifold = _as_manifold(manifold)
    comps = list(components)
    eta = _zeta_array(zeta, manifold.m) + synthesize(comps, manifold)
    h = channel_info(eta, sigma, spec)
    jac, labels = mean_jacobian(comps, manifold, params)
    jr, ji = jac.real, jac.imag
    mat = (2.0 / sigma ** 2) * ((jr.T * h[0]) @ jr + (ji.T * h[1]) @ ji)
    mat = 0.5 * (mat + mat.T)
    inv, singular = _invert(mat)
    return FimResult(mat, labels, inv, singular)


def crb_frequency_unquantized(amp, sigma, n):
    """Classical single-tone frequency CRB ``6 sigma^2 / (|x|^2 N (N^2 - 1))``."""
    return 6.0 * sigma ** 2 / (abs(amp) ** 2 * n * (n * n - 1.0))


def snr_loss_linear(omega, zeta, sigma, spec, manifold):
    manifold = _as_manifold(manifold)
    a = manifold.atom(omega)
    hp, _ = h_plus_minus(_zeta_array(zeta, manifold.m), sigma, spec)
    return float(np.real(np.vdot(a, a)) / np.real(np.vdot(a, hp * a)))


def snr_loss(omega, zeta, sigma, spec, manifold):
    """SNR loss in dB: ``10 log10(||a||^2 / a^H diag(h_+(zeta)) a)``."""
    return 10.0 * math.log10(snr_loss_linear(omega, zeta, sigma, spec, manifold))


def h_one_bit_approx(x, sigma):
    """Two-branch approximation of the one-bit information density.

    ``(2/pi) exp(-x^2/sigma^2)`` for ``|x| <= sqrt(8/pi) sigma``, otherwise
    ``|x|/(sqrt(pi) sigma) exp(-x^2/sigma^2)``.
    """
    x = np.abs(np.asarray(x, dtype=float))
    g = np.exp(-(x / sigma) ** 2)
    return np.where(x <= math.sqrt(8.0 / math.pi) * sigma, (2.0 / math.pi) * g,
                    x / (math.sqrt(math.pi) * sigma) * g)


def snr_loss_1bit_approx(zeta, sigma):
    """Approximate one-bit SNR loss (dB) from the two-branch density."""
    z = np.asarray(zeta, dtype=complex)
    total = np.sum(h_one_bit_approx(z.real, sigma)) + np.sum(h_one_bit_approx(z.imag, sigma))
    return 10.0 * math.log10(2.0 * z.size / total)


def snr_loss_1bit_large_threshold_bound(zeta, sigma):
    """Lower bound ``(sigma/zeta_min) sqrt(pi) exp(zeta_min^2/sigma^2)`` in dB,
    valid when every channel of ``zeta`` exceeds ``sqrt(8/pi) sigma``."""
    z = np.asarray(zeta, dtype=complex)
    zmin = float(np.min(np.abs(np.concatenate([z.real, z.imag]))))
    if zmin <= 0:
        return 0.0
    return 10.0 * (math.log10(sigma / zmin * math.sqrt(math.pi)) + (zmin / sigma) ** 2 / math.log(10.0))
