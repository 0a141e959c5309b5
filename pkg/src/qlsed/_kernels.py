"""Per-sample kernels for interval-censored Gaussian observations.

Every observation channel is a real sample known to lie in ``[lo, hi)``
(``lo == hi`` marks an exact, unquantized sample).  The kernels return the
log cell probability and its first two derivatives with respect to the
channel mean, and the Fisher information density of a threshold set.

The numba path is used when numba imports; set ``QLSED_DISABLE_NUMBA=1`` to
force the pure-numpy path (same algorithms, vectorized with ``np.where``).
"""

import math
import os

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# smallest log of a positive double; impossible cells are clamped here
LOG_FLOOR = -745.0
# cells narrower than this (in noise standard deviations) use a Taylor
# expansion of the integral about the midpoint instead of a CDF difference
NARROW = 1e-3


def _numba_requested():
    flag = os.environ.get("QLSED_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _numba_requested()


# ---------------------------------------------------------------------------
# numba implementation
# ---------------------------------------------------------------------------

if numba is not None:

    @numba.njit(cache=True)
    def _log_ndtr_nb(x):
        if x == -np.inf:
            return -np.inf
        if x > 6.0:
            return math.log1p(-0.5 * math.erfc(x / SQRT2))
        if x > -35.0:
            return math.log(0.5 * math.erfc(-x / SQRT2))
        # asymptotic Mills-ratio series, truncation error < 1e-14 for x < -35
        z = 1.0 / (x * x)
        acc = 1.0
        term = 1.0
        for k in range(1, 8):
            term *= -(2.0 * k - 1.0) * z
            acc += term
        return -0.5 * x * x - math.log(-x) - LOG_SQRT_2PI + math.log(acc)

    @numba.njit(cache=True)
    def _log_cell_nb(a, b):
        # log(Phi(b) - Phi(a)) for a < b, reflected into the lower tail
        w = b - a
        if w < NARROW:
            m = 0.5 * (a + b)
            m2 = m * m
            w2 = w * w
            corr = 1.0 + (m2 - 1.0) * w2 / 24.0 + (m2 * m2 - 6.0 * m2 + 3.0) * w2 * w2 / 1920.0
            return -0.5 * m2 - LOG_SQRT_2PI + math.log(w) + math.log(corr)
        if a >= 0.0:
            t = a
            a = -b
            b = -t
        if b <= 0.0:
            lb = _log_ndtr_nb(b)
            la = _log_ndtr_nb(a)
            if la == -np.inf:
                return lb
            d = la - lb
            if d >= 0.0:
                return -np.inf
            return lb + math.log(-math.expm1(d))
        return math.log(0.5 * (math.erf(b / SQRT2) - math.erf(a / SQRT2)))

    @numba.njit(cache=True)
    def _cell_nb(lo, hi, mu, s):
        if lo == hi:
            r = (lo - mu) / s
            return -0.5 * r * r - math.log(s) - LOG_SQRT_2PI, r / s, -1.0 / (s * s)
        if not lo < hi:
            return LOG_FLOOR, 0.0, 0.0
        a = (lo - mu) / s
        b = (hi - mu) / s
        lp = _log_cell_nb(a, b)
        if lp == -np.inf:
            return LOG_FLOOR, 0.0, 0.0
        if b - a < NARROW:
            # phi(b) - phi(a) and b phi(b) - a phi(a) about the midpoint
            m = 0.5 * (a + b)
            h = 0.5 * (b - a)
            base = math.exp(-0.5 * m * m - 0.5 * h * h - LOG_SQRT_2PI - lp)
            sh = math.sinh(m * h)
            g = -2.0 * base * sh
            q = base * (2.0 * h * math.cosh(m * h) - 2.0 * m * sh)
            return lp, -g / s, -(q + g * g) / (s * s)
        ra = 0.0
        aa = 0.0
        if a != -np.inf:
            ra = math.exp(-0.5 * a * a - LOG_SQRT_2PI - lp)
            aa = a * ra
        rb = 0.0
        bb = 0.0
        if b != np.inf:
            rb = math.exp(-0.5 * b * b - LOG_SQRT_2PI - lp)
            bb = b * rb
        g = rb - ra
        return lp, -g / s, -(bb - aa + g * g) / (s * s)

    @numba.njit(cache=True)
    def _cell_terms_nb(lo, hi, mu, s):
        n = lo.shape[0]
        lp = np.empty(n)
        d1 = np.empty(n)
        d2 = np.empty(n)
        for i in range(n):
            lp[i], d1[i], d2[i] = _cell_nb(lo[i], hi[i], mu[i], s)
        return lp, d1, d2

    @numba.njit(cache=True)
    def _log_prob_sum_nb(lo, hi, mu, s):
        acc = 0.0
        clamped = 0
        for i in range(lo.shape[0]):
            lp, _, _ = _cell_nb(lo[i], hi[i], mu[i], s)
            if lp == LOG_FLOOR:
                clamped += 1
            acc += lp
        return acc, clamped

    @numba.njit(cache=True)
    def _info_uniform_nb(x, s, gamma, b):
        # h_B(x) = sum_d P_d * G_d^2 over cells within +-38 s of x
        n = x.shape[0]
        out = np.empty(n)
        step = 2.0 * gamma / b
        for i in range(n):
            xi = x[i]
            d_lo = int(math.floor((xi - 38.0 * s + gamma) / step))
            d_hi = int(math.floor((xi + 38.0 * s + gamma) / step))
            if d_lo < 0:
                d_lo = 0
            if d_hi > b - 1:
                d_hi = b - 1
            acc = 0.0
            for d in range(d_lo, d_hi + 1):
                lo = -np.inf if d == 0 else d * step - gamma
                hi = np.inf if d == b - 1 else (d + 1) * step - gamma
                a = (lo - xi) / s
                bb = (hi - xi) / s
                lp = _log_cell_nb(a, bb)
                if lp == -np.inf:
                    continue
                ra = 0.0 if a == -np.inf else math.exp(-0.5 * a * a - LOG_SQRT_2PI - lp)
                rb = 0.0 if bb == np.inf else math.exp(-0.5 * bb * bb - LOG_SQRT_2PI - lp)
                g = rb - ra
                acc += math.exp(lp) * g * g
            out[i] = acc
        return out

    @numba.njit(cache=True)
    def _info_sign_nb(x, s):
        # one-bit cell pair (-inf, 0), [0, inf) around mean x
        n = x.shape[0]
        out = np.empty(n)
        for i in range(n):
            t = x[i] / s
            lpos = _log_ndtr_nb(t)
            lneg = _log_ndtr_nb(-t)
            out[i] = math.exp(-t * t - 2.0 * LOG_SQRT_2PI - lpos - lneg)
        return out


# ---------------------------------------------------------------------------
# numpy implementation
# ---------------------------------------------------------------------------


def _log_cell_np(a, b):
    with np.errstate(invalid="ignore"):
        w = b - a
        narrow = w < NARROW
    m = np.where(narrow, 0.5 * (a + b), 0.0)
    wn = np.where(narrow, w, 1.0)
    m2, w2 = m * m, wn * wn
    corr = 1.0 + (m2 - 1.0) * w2 / 24.0 + (m2 * m2 - 6.0 * m2 + 3.0) * w2 * w2 / 1920.0
    taylor = -0.5 * m2 - LOG_SQRT_2PI + np.log(wn) + np.log(corr)
    return np.where(narrow, taylor, _log_cell_wide_np(a, b))


def _log_cell_wide_np(a, b):
    flip = a >= 0.0
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        lb = special.log_ndtr(b2)
        la = special.log_ndtr(a2)
        d = la - lb
        tail = np.where(np.isneginf(la), lb, lb + np.log(-np.expm1(np.minimum(d, 0.0))))
        tail = np.where(d >= 0.0, -np.inf, tail)
        straddle = np.log(0.5 * (special.erf(b2 / SQRT2) - special.erf(a2 / SQRT2)))
    return np.where(b2 <= 0.0, tail, straddle)


def _ratio_np(z, lp):
    with np.errstate(invalid="ignore", over="ignore"):
        r = np.exp(-0.5 * z * z - LOG_SQRT_2PI - lp)
        zr = z * r
    finite = np.isfinite(z)
    return np.where(finite, r, 0.0), np.where(finite, zr, 0.0)


def _cell_terms_np(lo, hi, mu, s):
    exact = lo == hi
    valid = lo < hi
    with np.errstate(invalid="ignore"):
        a = (lo - mu) / s
        b = (hi - mu) / s
    safe_a = np.where(valid, a, -1.0)
    safe_b = np.where(valid, b, 1.0)
    lp = _log_cell_np(safe_a, safe_b)
    bad = ~valid | np.isneginf(lp)
    lp = np.where(bad, LOG_FLOOR, lp)
    ra, aa = _ratio_np(safe_a, lp)
    rb, bb = _ratio_np(safe_b, lp)
    with np.errstate(invalid="ignore"):
        g = rb - ra
        q = bb - aa
    with np.errstate(invalid="ignore"):
        narrow = valid & (safe_b - safe_a < NARROW)
    if np.any(narrow):
        # phi(b) - phi(a) and b phi(b) - a phi(a) about the midpoint
        m = 0.5 * (safe_a[narrow] + safe_b[narrow])
        h = 0.5 * (safe_b[narrow] - safe_a[narrow])
        base = np.exp(-0.5 * m * m - 0.5 * h * h - LOG_SQRT_2PI - lp[narrow])
        sh = np.sinh(m * h)
        g[narrow] = -2.0 * base * sh
        q[narrow] = base * (2.0 * h * np.cosh(m * h) - 2.0 * m * sh)
    d1 = np.where(bad, 0.0, -g / s)
    d2 = np.where(bad, 0.0, -(q + g * g) / (s * s))
    r = (lo - mu) / s
    with np.errstate(invalid="ignore"):
        lp = np.where(exact, -0.5 * r * r - math.log(s) - LOG_SQRT_2PI, lp)
        d1 = np.where(exact, r / s, d1)
    d2 = np.where(exact, -1.0 / (s * s), d2)
    return lp, d1, d2


def _log_prob_sum_np(lo, hi, mu, s):
    lp = _cell_terms_np(lo, hi, mu, s)[0]
    return float(np.sum(lp)), int(np.count_nonzero(lp == LOG_FLOOR))


def _info_uniform_np(x, s, gamma, b):
    step = 2.0 * gamma / b
    d = np.arange(b)
    lo = np.where(d == 0, -np.inf, d * step - gamma)
    hi = np.where(d == b - 1, np.inf, (d + 1) * step - gamma)
    out = np.zeros(x.shape[0])
    # chunk over samples to bound memory for large b
    chunk = max(1, 2_000_000 // b)
    for start in range(0, x.shape[0], chunk):
        xs = x[start:start + chunk, None]
        a = (lo[None, :] - xs) / s
        bb = (hi[None, :] - xs) / s
        lp = _log_cell_np(a, bb)
        ra, _ = _ratio_np(a, lp)
        rb, _ = _ratio_np(bb, lp)
        g = rb - ra
        with np.errstate(invalid="ignore"):
            term = np.where(np.isneginf(lp), 0.0, np.exp(lp) * g * g)
        out[start:start + chunk] = np.sum(term, axis=1)
    return out


def _info_sign_np(x, s):
    t = x / s
    return np.exp(-t * t - 2.0 * LOG_SQRT_2PI - special.log_ndtr(t) - special.log_ndtr(-t))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _as_f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def cell_terms(lo, hi, mu, s, backend=None):
    """Return ``(log P, dlogP/dmu, d2logP/dmu2)`` per channel."""
    lo, hi, mu = _as_f64(lo), _as_f64(hi), _as_f64(mu)
    if _use_numba(backend):
        return _cell_terms_nb(lo, hi, mu, float(s))
    return _cell_terms_np(lo, hi, mu, float(s))


def log_prob_sum(lo, hi, mu, s, backend=None):
    """Return ``(sum of log P, number of cells clamped at LOG_FLOOR)``."""
    lo, hi, mu = _as_f64(lo), _as_f64(hi), _as_f64(mu)
    if _use_numba(backend):
        acc, clamped = _log_prob_sum_nb(lo, hi, mu, float(s))
        return float(acc), int(clamped)
    return _log_prob_sum_np(lo, hi, mu, float(s))


def info_uniform(x, s, gamma, levels, backend=None):
    """Fisher information density of a uniform quantizer at means ``x``."""
    x = _as_f64(x)
    if _use_numba(backend):
        return _info_uniform_nb(x, float(s), float(gamma), int(levels))
    return _info_uniform_np(x, float(s), float(gamma), int(levels))


def info_sign(x, s, backend=None):
    """Fisher information density of a sign quantizer with threshold 0."""
    x = _as_f64(x)
    if _use_numba(backend):
        return _info_sign_nb(x, float(s))
    return _info_sign_np(x, float(s))


def _use_numba(backend):
    if backend is None:
        return USE_NUMBA
    if backend == "numba":
        if numba is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
