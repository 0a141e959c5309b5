"""FMCW radar captures: raw IQ ingestion, noise level, quantization and ranging.

A dechirped FMCW return from a target at range ``r`` is a complex tone at
beat frequency ``f_b = 2 mu r / c``; sampled at ``f_s`` it has digital
frequency ``omega = 2 pi f_b / f_s``.
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import speed_of_light

from . import config as cfg
from .gnomp import GnompConfig, component_statistics, extract_spectrum
from .likelihood import TWO_PI, Manifold, SinusoidComponent, synthesize
from .quantizer import QuantizerSpec, make_quantizer, quantize_complex

DEFAULT_FULL_SCALE = 60.0
OPERATING_SIGMA2 = 250.0


@dataclass(frozen=True)
class RadarParams:
    """Chirp and sampling parameters of an FMCW capture.

    Defaults describe a 77 GHz automotive front end with a 29.982 MHz/us
    slope over a 60 us sweep (1798.92 MHz swept bandwidth), 10 MHz complex
    sampling and 256 fast-time samples per chirp.
    """

    carrier_hz: float = 77e9
    slope_hz_per_s: float = 29.982e12
    sweep_s: float = 60e-6
    pri_s: float = 160e-6
    bandwidth_hz: float = 1798.92e6
    sample_rate_hz: float = 10e6
    pulses: int = 128
    samples: int = 256
    receivers: int = 4

    def __post_init__(self):
        if not self.slope_hz_per_s > 0:
            raise ValueError("FM slope must be positive")
        if not (self.sample_rate_hz > 0 and self.sweep_s > 0 and self.pri_s > 0):
            raise ValueError("sample rate, sweep time and PRI must be positive")
        if self.samples < 1 or self.pulses < 1 or self.receivers < 1:
            raise ValueError("samples, pulses and receivers must be >= 1")
        if self.samples / self.sample_rate_hz > self.sweep_s * (1 + 1e-9):
            raise ValueError("fast-time record is longer than the sweep")
        if not math.isclose(self.bandwidth_hz, self.slope_hz_per_s * self.sweep_s, rel_tol=1e-2):
            raise ValueError("bandwidth is inconsistent with slope * sweep time")

    @property
    def range_resolution(self):
        """Range spanned by one DFT bin, ``c f_s / (2 mu N)``."""
        return speed_of_light * self.sample_rate_hz / (2.0 * self.slope_hz_per_s * self.samples)

    def omega_to_range(self, omega):
        """``r = c (omega f_s / 2 pi) / (2 mu)``.

        Complex sampling gives signed beat frequencies, so ``omega`` is first
        wrapped to ``[-pi, pi)``; a tone just below ``2 pi`` is a small
        negative range (for example leakage), not a far target.
        """
        w = (np.asarray(omega, dtype=float) + math.pi) % TWO_PI - math.pi
        fb = w * self.sample_rate_hz / TWO_PI
        r = speed_of_light * fb / (2.0 * self.slope_hz_per_s)
        return r if r.shape else float(r)

    def range_to_omega(self, r):
        fb = 2.0 * self.slope_hz_per_s * np.asarray(r, dtype=float) / speed_of_light
        w = TWO_PI * fb / self.sample_rate_hz
        return w if w.shape else float(w)


def load_params(path):
    """:class:`RadarParams` from a TOML file whose keys mirror the fields."""
    data = cfg.load_toml(path)
    known = set(RadarParams.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown radar parameter keys: {sorted(unknown)}")
    return RadarParams(**data)


@dataclass(frozen=True, eq=False)
class IQFrame:
    """One fast-time record of one receiver channel."""

    samples: np.ndarray = field(repr=False)
    frame_index: int = 0
    channel: int = 0

    def __post_init__(self):
        z = np.array(self.samples, dtype=complex)
        if z.ndim != 1:
            raise ValueError("frame samples must be 1-D")
        if not np.all(np.isfinite(z)):
            raise ValueError("frame samples must be finite")
        z.setflags(write=False)
        object.__setattr__(self, "samples", z)

    @property
    def n(self):
        return self.samples.size


_ORDERS = ("iq", "qi")
_LAYOUTS = ("frame", "sample")


@dataclass(frozen=True)
class IQFormat:
    """Binary layout of a capture.

    ``dtype`` is the numpy type of each real word (``int16`` by default,
    little-endian).  ``order`` says whether I or Q comes first.  With
    ``channels > 1`` the ``layout`` is ``"frame"`` (each channel writes a
    whole frame in turn) or ``"sample"`` (channels interleave per sample).
    """

    dtype: str = "<i2"
    order: str = "iq"
    frame_length: int = 256
    channels: int = 1
    layout: str = "frame"

    def __post_init__(self):
        object.__setattr__(self, "dtype", np.dtype(self.dtype).str)
        if self.order not in _ORDERS:
            raise ValueError(f"order must be one of {_ORDERS}")
        if self.layout not in _LAYOUTS:
            raise ValueError(f"layout must be one of {_LAYOUTS}")
        if self.frame_length < 1 or self.channels < 1:
            raise ValueError("frame_length and channels must be >= 1")

    @property
    def width(self):
        return np.dtype(self.dtype).itemsize

    @property
    def frame_words(self):
        """Real words in one frame of every channel."""
        return 2 * self.frame_length * self.channels

    @classmethod
    def parse(cls, text):
        """Build from ``"key=value,..."``, e.g. ``"dtype=int16,n=256,channels=4"``."""
        kwargs = {}
        aliases = {"n": "frame_length", "width": "dtype"}
        for item in filter(None, (p.strip() for p in (text or "").split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"malformed format item {item!r}")
            key = aliases.get(key.strip(), key.strip())
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown format key {key!r}")
            value = value.strip()
            kwargs[key] = int(value) if key in ("frame_length", "channels") else value
        return cls(**kwargs)

    def describe(self):
        return {"dtype": self.dtype, "order": self.order, "frame_length": self.frame_length,
                "channels": self.channels, "layout": self.layout}


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_iq(path, fmt=None):
    """Read a capture as a list of :class:`IQFrame` in capture order.

    Frames are ordered by frame index, then channel.  A partial trailing
    frame is dropped with a warning.  When a ``<file>.json`` sidecar exists
    its layout must match ``fmt``.

    Raises
    ------
    OSError
        Unreadable file.
    ValueError
        Descriptor and file disagree.
    """
    fmt = fmt or IQFormat()
    if isinstance(fmt, str):
        fmt = IQFormat.parse(fmt)
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        declared = fmt.describe()
        bad = {k: (meta[k], declared[k]) for k in declared if k in meta and meta[k] != declared[k]}
        if bad:
            raise ValueError(f"format descriptor does not match the capture: {bad}")
    raw = Path(path).read_bytes()
    if len(raw) % (2 * fmt.width):
        raise ValueError(f"file size {len(raw)} is not a whole number of {fmt.dtype} I/Q pairs")
    words = np.frombuffer(raw, dtype=fmt.dtype)
    n_frames, rest = divmod(words.size, fmt.frame_words)
    if rest:
        warnings.warn(f"dropping a partial trailing frame ({rest} words)", stacklevel=2)
    words = words[: n_frames * fmt.frame_words].astype(float)
    first, second = words[0::2], words[1::2]
    i_part, q_part = (first, second) if fmt.order == "iq" else (second, first)
    z = i_part + 1j * q_part
    if fmt.layout == "frame":
        z = z.reshape(n_frames, fmt.channels, fmt.frame_length)
    else:
        z = z.reshape(n_frames, fmt.frame_length, fmt.channels).transpose(0, 2, 1)
    return [IQFrame(z[f, ch], f, ch) for f in range(n_frames) for ch in range(fmt.channels)]


def write_iq(path, frames, fmt=None):
    """Write frames (complex arrays or :class:`IQFrame`) in ``fmt``.

    ``frames`` is a sequence of frames, each holding ``fmt.channels``
    channel records (a 2-D array ``(channels, N)`` or, for one channel, a
    1-D array).  Samples are rounded to the integer word type; a
    ``<file>.json`` sidecar records the layout.
    """
    fmt = fmt or IQFormat()
    if isinstance(fmt, str):
        fmt = IQFormat.parse(fmt)
    frames = list(frames)
    if frames and all(isinstance(f, IQFrame) for f in frames):
        # flat per-channel list as returned by load_iq
        frames = sorted(frames, key=lambda f: (f.frame_index, f.channel))
        if len(frames) % fmt.channels:
            raise ValueError("frame list does not hold whole multi-channel frames")
        frames = [np.stack([f.samples for f in frames[i:i + fmt.channels]])
                  for i in range(0, len(frames), fmt.channels)]
    blocks = []
    for fr in frames:
        z = np.asarray(fr, dtype=complex).reshape(fmt.channels, fmt.frame_length)
        if fmt.layout == "sample":
            z = z.T
        pair = (z.real, z.imag) if fmt.order == "iq" else (z.imag, z.real)
        blocks.append(np.stack(pair, axis=-1).ravel())
    words = np.concatenate(blocks) if blocks else np.zeros(0)
    dtype = np.dtype(fmt.dtype)
    if dtype.kind == "i":
        info = np.iinfo(dtype)
        words = np.clip(np.rint(words), info.min, info.max)
    Path(path).write_bytes(words.astype(dtype).tobytes())
    _sidecar(path).write_text(json.dumps(fmt.describe()))


def _frame_samples(frame):
    return frame.samples if isinstance(frame, IQFrame) else np.asarray(frame, dtype=complex)


def estimate_noise_variance(frame):
    """Noise variance from the median periodogram bin.

    For complex white Gaussian noise of variance ``sigma^2`` each bin of
    ``|FFT|^2 / N`` is exponential with mean ``sigma^2`` and median
    ``sigma^2 ln 2``, so the estimate is ``median / ln 2``.  The median
    ignores the few bins occupied by sinusoids near bin centres; the
    sidelobes of strong off-grid tones raise every bin and bias the
    estimate upward.
    """
    z = _frame_samples(frame)
    if z.size < 32:
        raise ValueError("need at least 32 samples")
    if not np.any(z):
        raise ValueError("all-zero frame")
    power = np.abs(np.fft.fft(z)) ** 2 / z.size
    return float(np.median(power)) / math.log(2.0)


@dataclass(frozen=True)
class RangeDetection:
    range_m: float
    amp: complex
    statistic_db: float
    omega: float
    frame_index: int = 0
    channel: int = 0


def _quantizer_for(spec, full_scale):
    if isinstance(spec, QuantizerSpec):
        return spec
    return make_quantizer(spec, full_scale)


def range_profile(frames, params, spec=math.inf, config=None, full_scale=DEFAULT_FULL_SCALE,
                  sigma2=None):
    """Detect targets in every frame and report their ranges.

    Parameters
    ----------
    frames : iterable of IQFrame or complex arrays
    params : RadarParams
    spec : QuantizerSpec or bit depth
        A bare bit depth builds a uniform quantizer with ``full_scale``.
    sigma2 : float, optional
        Noise variance; estimated per frame from the raw samples when omitted.

    Returns
    -------
    list of RangeDetection
        Sorted by frame, channel and range.  The leakage tone near zero
        range is reported like any other detection.
    """
    if not isinstance(params, RadarParams):
        raise TypeError("params must be RadarParams")
    model = _quantizer_for(spec, full_scale)
    config = config or GnompConfig()
    out = []
    for k, frame in enumerate(frames):
        z = _frame_samples(frame)
        fi = frame.frame_index if isinstance(frame, IQFrame) else k
        ch = frame.channel if isinstance(frame, IQFrame) else 0
        var = sigma2 if sigma2 is not None else estimate_noise_variance(z)
        sigma = math.sqrt(var)
        obs = quantize_complex(z, model)
        manifold = Manifold(z.size)
        res = extract_spectrum(obs, sigma, model, config, manifold)
        stats = component_statistics(res.components, obs, sigma, model, manifold)
        dets = [RangeDetection(params.omega_to_range(c.omega), c.amp, st, c.omega, fi, ch)
                for c, st in zip(res.components, stats)]
        out.extend(sorted(dets, key=lambda d: d.range_m))
    return out


def synthetic_frames(params, ranges, amps, sigma2, n_frames=1, rng=None, leakage=0.0):
    """Dechirped frames with targets at ``ranges`` (m) plus complex noise.

    ``leakage`` adds a zero-frequency tone of that amplitude, standing in
    for transmit-to-receive coupling.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    n = params.samples
    comps = [SinusoidComponent(params.range_to_omega(r), a) for r, a in zip(ranges, amps)]
    if leakage:
        comps.append(SinusoidComponent(0.0, leakage))
    clean = synthesize(comps, n)
    scale = math.sqrt(sigma2 / 2.0)
    return [clean + scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            for _ in range(n_frames)]
