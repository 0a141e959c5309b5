"""Uniform few-bit complex quantizer and sign measurements with per-sample
thresholds.

Both measurement models produce a :class:`QuantizedObservation`, which stores
the interval ``[lower, upper)`` that each real and imaginary channel fell
into.  Everything downstream consumes those intervals only.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

INF = math.inf


def _is_inf_depth(bit_depth):
    return bit_depth is None or (isinstance(bit_depth, float) and math.isinf(bit_depth))


def parse_bit_depth(value):
    """Accept ints, ``inf``/``"inf"``/``"infinite"``; return int or ``math.inf``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinite", "infinity", "unquantized"):
            return INF
        value = int(value)
    if _is_inf_depth(value):
        return INF
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"bit depth must be an integer, got {value}")
        value = int(value)
    return int(value)


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform mid-rise quantizer with ``2**bit_depth`` cells on ``[-full_scale, full_scale]``.

    ``bit_depth = math.inf`` is the identity map.
    """

    bit_depth: object
    full_scale: float

    def __post_init__(self):
        depth = parse_bit_depth(self.bit_depth)
        if depth != INF and depth < 1:
            raise ValueError("bit_depth must be >= 1 or infinite")
        if not self.full_scale > 0:
            raise ValueError("full_scale must be positive")
        object.__setattr__(self, "bit_depth", depth)
        object.__setattr__(self, "full_scale", float(self.full_scale))

    @property
    def unquantized(self):
        return self.bit_depth == INF

    @property
    def levels(self):
        return INF if self.unquantized else 2 ** self.bit_depth

    @property
    def step(self):
        return 2.0 * self.full_scale / self.levels

    @property
    def thresholds(self):
        """``tau_0 .. tau_b`` with infinite outer thresholds."""
        if self.unquantized:
            raise ValueError("an unquantized spec has no thresholds")
        b = self.levels
        d = np.arange(1, b)
        return np.concatenate(([-INF], d * self.step - self.full_scale, [INF]))

    @property
    def output_levels(self):
        b = self.levels
        return -self.full_scale + self.step * (np.arange(b) + 0.5)

    def code(self, x):
        """Cell index of each real sample, so that ``tau_d <= x < tau_{d+1}``."""
        interior = self.thresholds[1:-1]
        return np.searchsorted(interior, np.asarray(x, dtype=float), side="right")

    def quantize(self, x):
        """Real-valued quantizer output ``Q(x)``."""
        x = np.asarray(x, dtype=float)
        if self.unquantized:
            return x.copy()
        return self.output_levels[self.code(x)]

    def info(self, mean, sigma):
        """Fisher information density ``h_B(mean, sigma^2)`` per real channel."""
        mean = np.asarray(mean, dtype=float)
        if self.unquantized:
            return np.ones_like(mean)
        s = sigma / _kernels.SQRT2
        if self.bit_depth == 1:
            return _kernels.info_sign(mean.ravel(), s).reshape(mean.shape)
        return _kernels.info_uniform(mean.ravel(), s, self.full_scale, self.levels).reshape(mean.shape)

    def observe(self, signal):
        return quantize_complex(signal, self)


@dataclass(frozen=True, eq=False)
class SignedThresholdSpec:
    """Sign measurements ``sign(Re/Im(x - h))`` against known per-sample thresholds ``h``."""

    thresholds: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.asarray(self.thresholds, dtype=complex)
        if h.ndim != 1:
            raise ValueError("thresholds must be a 1-D complex vector")
        h.setflags(write=False)
        object.__setattr__(self, "thresholds", h)

    bit_depth = 1
    unquantized = False

    def info(self, mean, sigma):
        """Fisher information density of each channel; ``mean`` has shape ``(2, N)``."""
        mean = np.asarray(mean, dtype=float)
        shifted = mean - np.stack([self.thresholds.real, self.thresholds.imag])
        s = sigma / _kernels.SQRT2
        return _kernels.info_sign(shifted.ravel(), s).reshape(mean.shape)

    def observe(self, signal):
        return signed_measurements(signal, self)


@dataclass(frozen=True, eq=False)
class QuantizedObservation:
    """Interval bounds of every channel.

    ``lower`` and ``upper`` have shape ``(2, N)``: row 0 is the real channel,
    row 1 the imaginary one.  ``codes`` holds the cell index (or the sign bit
    for signed measurements); it is ``None`` for exact samples, where
    ``lower == upper`` is the sample value.
    """

    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    codes: object = field(default=None, repr=False)
    model: object = None

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[0] != 2:
            raise ValueError("lower/upper must both have shape (2, N)")
        if np.any(lo > hi):
            raise ValueError("every interval needs lower <= upper")
        for arr in (lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        # flattened [re..., im...] views used by the kernels
        object.__setattr__(self, "_lo_flat", lo.ravel())
        object.__setattr__(self, "_hi_flat", hi.ravel())

    @property
    def n(self):
        return self.lower.shape[1]

    def __len__(self):
        return self.n

    @property
    def exact(self):
        return bool(np.all(self.lower == self.upper))

    def values(self):
        """Exact samples as a complex vector (only for unquantized observations)."""
        if not self.exact:
            raise ValueError("observation is quantized; no exact values")
        return self.lower[0] + 1j * self.lower[1]

    def reconstruction(self):
        """A point value per channel: the sample itself, the cell midpoint, or
        the finite bound nudged outward by one cell width for saturated cells."""
        lo, hi = self.lower, self.upper
        width = np.where(np.isfinite(lo) & np.isfinite(hi), hi - lo, np.nan)
        fill = np.nanmedian(width) if np.any(np.isfinite(width)) else 1.0
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
        mid = np.where(np.isneginf(lo) & np.isfinite(hi), hi - 0.5 * fill, mid)
        mid = np.where(np.isposinf(hi) & np.isfinite(lo), lo + 0.5 * fill, mid)
        return mid[0] + 1j * mid[1]


def make_quantizer(bit_depth, full_scale):
    return QuantizerSpec(bit_depth, full_scale)


def quantize_complex(signal, spec):
    """Apply ``spec`` independently to the real and imaginary parts of ``signal``."""
    z = np.asarray(signal, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("signal must be finite")
    parts = np.stack([z.real, z.imag])
    if spec.unquantized:
        return QuantizedObservation(parts, parts, None, spec)
    codes = spec.code(parts)
    tau = spec.thresholds
    return QuantizedObservation(tau[codes], tau[codes + 1], codes, spec)


def signed_measurements(signal, spec):
    """One-bit comparisons of ``signal`` against the thresholds in ``spec``."""
    z = np.asarray(signal, dtype=complex)
    h = spec.thresholds
    if z.shape != h.shape:
        raise ValueError("signal and thresholds must have the same length")
    parts = np.stack([z.real, z.imag])
    thr = np.stack([h.real, h.imag])
    bits = (parts >= thr).astype(np.int64)
    lower = np.where(bits == 1, thr, -INF)
    upper = np.where(bits == 1, INF, thr)
    return QuantizedObservation(lower, upper, bits, spec)


def random_signed_thresholds(n, rng, levels=8, low=-1.0, high=1.0):
    """Per-sample complex thresholds drawn uniformly from ``levels`` evenly
    spaced values on ``[low, high]``, independently for each channel."""
    grid = np.linspace(low, high, levels)
    return SignedThresholdSpec(rng.choice(grid, n) + 1j * rng.choice(grid, n))


def design_full_scale(amplitudes, sigma):
    """Full-scale rule ``max(|x_1|, ..., |x_K|, 3 sigma / sqrt(2))``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    amps = [abs(complex(a)) for a in amplitudes]
    return max(amps + [3.0 * sigma / math.sqrt(2.0)])
