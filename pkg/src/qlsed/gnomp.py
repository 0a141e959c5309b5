"""Greedy CFAR-gated sinusoid extraction from quantized samples.

Each outer iteration tests the residual for one more sinusoid with the grid
Rao statistic, identifies it on an oversampled grid, refines it by Newton
steps in frequency and amplitude, cyclically refines every earlier
component against the others, re-estimates all amplitudes jointly and
optionally drops a weak earlier pick that a later, stronger one explains.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .likelihood import (
    Manifold,
    SinusoidComponent,
    TWO_PI,
    _zeta_array,
    default_manifold,
    full_gradient_hessian,
    h_plus_minus,
    log_likelihood_mean,
    pseudo_measurements,
    solve_amplitude,
    solve_joint_amplitudes,
)
from .quantizer import QuantizerSpec
from .rao import grid_forms, rao_grid, rao_statistic, threshold_unknown_freq, to_db


@dataclass(frozen=True)
class GnompConfig:
    """Algorithm settings.

    ``r_c = None`` picks 3 cyclic rounds with known noise and 4 otherwise;
    ``max_components = None`` means ``N // 4``.  ``stopping`` is ``"cfar"``
    or ``"bic"``.
    """

    p_fa: float = 0.01
    tau_th: object = None
    oversample: int = 4
    r_s: int = 1
    r_c: object = None
    spurious_ratio: float = 0.5
    max_components: object = None
    stopping: str = "cfar"
    bic_patience: int = 2
    max_iter: object = None
    simplified: bool = False

    def __post_init__(self):
        if self.tau_th is None and not 0.0 < self.p_fa < 1.0:
            raise ValueError("p_fa must lie in (0, 1)")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise ValueError("oversample must be a positive integer")
        if self.r_s < 0 or (self.r_c is not None and self.r_c < 0):
            raise ValueError("refinement rounds must be >= 0")
        if self.stopping not in ("cfar", "bic"):
            raise ValueError("stopping must be 'cfar' or 'bic'")

    def cyclic_rounds(self, sigma_known):
        if self.r_c is not None:
            return int(self.r_c)
        return 3 if sigma_known else 4

    def threshold(self, n):
        return float(self.tau_th) if self.tau_th is not None else threshold_unknown_freq(self.p_fa, n)


@dataclass
class IterationRecord:
    iteration: int
    statistic: float
    tau_th: float
    detected: bool
    omega_init: float = math.nan
    n_components: int = 0
    suppressed: list = field(default_factory=list)
    sigma: float = math.nan
    spectrum: object = field(default=None, repr=False)

    @property
    def statistic_db(self):
        return to_db(self.statistic)

    @property
    def tau_db(self):
        return to_db(self.tau_th)


@dataclass
class GnompResult:
    """Detected components and a trace of the run.

    ``ll_trace`` lists ``(event, log_likelihood)`` after every accepted step;
    it never decreases except right after a ``"suppress"`` event.
    """

    components: list
    zeta: np.ndarray = field(repr=False)
    sigma: float = math.nan
    tau_th: float = math.nan
    trace: list = field(default_factory=list, repr=False)
    ll_trace: list = field(default_factory=list, repr=False)
    stop_reason: str = ""
    log_likelihood: float = math.nan
    bic_history: list = field(default_factory=list, repr=False)

    @property
    def k(self):
        return len(self.components)

    @property
    def omegas(self):
        return np.array([c.omega for c in self.components])

    @property
    def amps(self):
        return np.array([c.amp for c in self.components], dtype=complex)


class _State:
    """Mutable working set of one extraction run."""

    def __init__(self, obs, spec, sigma, manifold, config):
        self.obs = obs
        self.spec = spec
        self.sigma = sigma
        self.manifold = manifold
        self.config = config
        self.omegas = []
        self.amps = []
        self.ll_trace = []
        self.delta_os = TWO_PI / (config.oversample * manifold.n)

    def zeta(self):
        if not self.omegas:
            return np.zeros(self.manifold.m, dtype=complex)
        return self.manifold.atoms(np.array(self.omegas)) @ np.array(self.amps)

    def loglik(self, zeta=None):
        return log_likelihood_mean(self.obs, self.zeta() if zeta is None else zeta, self.sigma)

    def log(self, event):
        self.ll_trace.append((event, self.loglik()))

    def components(self):
        return [SinusoidComponent(w, x) for w, x in zip(self.omegas, self.amps)]


def _initial_amplitude(z, dplus, c, sigma):
    """One Fisher-scoring step from ``x = 0`` given ``Z``, ``d_+`` and ``c``."""
    det = dplus * dplus - abs(c) ** 2
    if not det > 0:
        return 0j
    zr, zi = z.real, z.imag
    re = ((dplus - c.real) * zr + c.imag * zi) / det
    im = (c.imag * zr + (dplus + c.real) * zi) / det
    return (sigma / math.sqrt(2.0)) * complex(re, im)


def identify(obs, zeta, sigma, spec, oversample=4, manifold=None, simplified=False):
    """Coarse frequency on the oversampled grid and the amplitude MLE there.

    Returns ``(omega, x, grid)`` with ``grid`` the :class:`RaoGridResult`.
    """
    manifold = default_manifold(obs, manifold)
    zeta = _zeta_array(zeta, obs.n)
    phi = pseudo_measurements(obs, zeta, sigma)
    hpm = h_plus_minus(zeta, sigma, spec)
    grid = rao_grid(phi, zeta, sigma, spec, oversample, manifold, simplified, hpm)
    omega = grid.omega
    z, dplus, c = grid_forms(phi, zeta, sigma, spec, oversample, manifold, hpm)
    g = grid.index
    x0 = _initial_amplitude(complex(z[g]), float(dplus[g]), complex(c[g]), sigma)
    x = solve_amplitude(obs, zeta, omega, sigma, init=x0, manifold=manifold)
    # keep the scoring start from losing to x = 0 on pathological data
    a = manifold.atom(omega)
    if log_likelihood_mean(obs, zeta + a * x, sigma) < log_likelihood_mean(obs, zeta, sigma):
        x = solve_amplitude(obs, zeta, omega, sigma, init=0j, manifold=manifold)
    return omega, x, grid


def _refine_one(obs, zeta, omega, x, sigma, manifold, delta_os):
    """One frequency step with the amplitude re-solved; kept only if the
    likelihood improves.

    The step is the frequency part of the joint Newton step in
    ``(omega, Re x, Im x)``, i.e. a Newton step on the likelihood profiled
    over the amplitude.  A fixed-amplitude step would undershoot because
    frequency and amplitude phase are strongly coupled.  Without negative
    curvature a quarter grid cell is tried uphill.
    """
    a = manifold.atom(omega)
    ll0 = log_likelihood_mean(obs, zeta + a * x, sigma)
    grad, hess = full_gradient_hessian(obs, zeta, [omega], [x], sigma, manifold)
    x_start = x
    if np.all(np.isfinite(hess)) and np.linalg.eigvalsh(hess).max() < 0:
        delta = -np.linalg.solve(hess, grad)
        step = float(delta[0])
        x_start = x + complex(delta[1], delta[2])
    else:
        step = math.copysign(delta_os / 4.0, grad[0])
    # a step larger than half a grid cell leaves the basin the grid found
    if abs(step) > delta_os / 2.0:
        step = math.copysign(delta_os / 2.0, step)
        x_start = x
    for t in (1.0, 0.5):
        cand = (omega + t * step) % TWO_PI
        init = x_start if t == 1.0 else x
        xc, _, llc = solve_amplitude(obs, zeta, cand, sigma, init=init, manifold=manifold, full_output=True)
        if llc > ll0:
            return cand, xc, True
    xc, _, llc = solve_amplitude(obs, zeta, omega, sigma, init=x, manifold=manifold, full_output=True)
    if llc > ll0:
        return omega, xc, True
    return omega, x, False


def _single_refinement(state, zeta_other, omega, x, rounds):
    for _ in range(rounds):
        omega, x, _ = _refine_one(state.obs, zeta_other, omega, x, state.sigma,
                                  state.manifold, state.delta_os)
    return omega, x


def _cyclic_refinement(state, rounds):
    if not state.omegas:
        return
    for _ in range(rounds):
        for i in range(len(state.omegas)):
            total = state.zeta()
            own = state.manifold.atom(state.omegas[i]) * state.amps[i]
            w, x = _single_refinement(state, total - own, state.omegas[i], state.amps[i],
                                      max(1, state.config.r_s))
            state.omegas[i], state.amps[i] = w, x
        state.log("cyclic")


def _update_amplitudes(state):
    if not state.omegas:
        return
    before = state.loglik()
    amps, _, ll = solve_joint_amplitudes(state.obs, None, np.array(state.omegas), state.sigma,
                                         np.array(state.amps), manifold=state.manifold)
    if ll >= before:
        state.amps = list(amps)
    state.log("update")


def _spurious_suppression(state, tau_th, ratio):
    """Re-test the second-newest component against the leave-one-out offset."""
    removed = []
    if len(state.omegas) <= 2:
        return removed
    if not abs(state.amps[-2]) < ratio * abs(state.amps[-1]):
        return removed
    i = len(state.omegas) - 2
    total = state.zeta()
    zeta_r = total - state.manifold.atom(state.omegas[i]) * state.amps[i]
    phi = pseudo_measurements(state.obs, zeta_r, state.sigma)
    try:
        stat = rao_statistic(phi, zeta_r, state.omegas[i], state.sigma, state.spec, state.manifold)
    except FloatingPointError:
        stat = 0.0
    if stat <= tau_th:
        removed.append(SinusoidComponent(state.omegas[i], state.amps[i]))
        del state.omegas[i]
        del state.amps[i]
        state.log("suppress")
    return removed


def spurious_suppression(components, obs, sigma, spec, tau_th, ratio=0.5, manifold=None, r_c=3):
    """Drop the second-newest component if it fails its leave-one-out re-test.

    After a removal the remaining components get ``r_c`` cyclic rounds and a
    joint amplitude update.  Returns the new component list.
    """
    manifold = default_manifold(obs, manifold)
    state = _State(obs, spec, sigma, manifold, GnompConfig())
    state.omegas = [c.omega for c in components]
    state.amps = [c.amp for c in components]
    if _spurious_suppression(state, tau_th, ratio):
        _cyclic_refinement(state, r_c)
        _update_amplitudes(state)
    return state.components()


def component_statistics(components, obs, sigma, spec, manifold=None):
    """Rao statistic of every component at its own frequency, tested
    against the synthesis of all the others."""
    manifold = default_manifold(obs, manifold)
    comps = list(components)
    if not comps:
        return []
    atoms = manifold.atoms(np.array([c.omega for c in comps]))
    amps = np.array([c.amp for c in comps])
    total = atoms @ amps
    out = []
    for i, c in enumerate(comps):
        zeta = total - atoms[:, i] * amps[i]
        phi = pseudo_measurements(obs, zeta, sigma)
        try:
            out.append(float(rao_statistic(phi, zeta, c.omega, sigma, spec, manifold)))
        except FloatingPointError:
            out.append(0.0)
    return [to_db(v) for v in out]


def bic_cost(log_likelihood, k, n):
    """``-2 ln p + 5 K ln N``."""
    return -2.0 * log_likelihood + 5.0 * k * math.log(n)


def bic_order_select(history, n):
    """Model order minimizing the BIC cost.

    ``history`` holds ``(k, log_likelihood)`` pairs, one or more per order;
    ties go to the smaller order.
    """
    if not history:
        return 0
    best = min(history, key=lambda item: (bic_cost(item[1], item[0], n), item[0]))
    return int(best[0])


def _estimate_sigma(state, bounds_factor=8.0):
    """Maximize the likelihood over ``sigma`` with everything else fixed."""
    zeta = state.zeta()
    s0 = state.sigma

    def negll(logs):
        return -log_likelihood_mean(state.obs, zeta, math.exp(logs))

    res = minimize_scalar(negll, bounds=(math.log(s0 / bounds_factor), math.log(s0 * bounds_factor)),
                          method="bounded", options={"xatol": 1e-6})
    if res.success and -res.fun >= -negll(math.log(s0)):
        state.sigma = math.exp(res.x)
    state.log("sigma")


def initial_sigma(obs, manifold=None):
    """Noise level from the median periodogram bin of the code-midpoint
    reconstruction, ``sigma^2 = median / ln 2``."""
    manifold = default_manifold(obs, manifold)
    recon = obs.reconstruction()
    if manifold.sensing is not None:
        recon = manifold.back_project(recon) / math.sqrt(manifold.m)
    spec = np.abs(np.fft.fft(recon)) ** 2 / recon.size
    var = float(np.median(spec)) / math.log(2.0)
    if not var > 0:
        var = float(np.mean(np.abs(recon) ** 2)) or 1.0
    return math.sqrt(var)


def extract_spectrum(obs, sigma, spec, config=None, manifold=None, record_spectra=False):
    """Detect and estimate sinusoids in a quantized observation.

    Parameters
    ----------
    sigma : float or None
        Noise standard deviation (complex total); ``None`` estimates it.
    spec : QuantizerSpec or SignedThresholdSpec
        Measurement model, used for information densities.
    manifold : Manifold, optional
        Compressive atoms when a sensing matrix is in play.
    record_spectra : bool
        Keep the oversampled Rao spectrum of every iteration in the trace.
    """
    config = config or GnompConfig()
    manifold = default_manifold(obs, manifold)
    known = sigma is not None
    if not known:
        _check_sigma_identifiable(spec)
        sigma = initial_sigma(obs, manifold)
    elif not sigma > 0:
        raise ValueError("sigma must be positive")
    n = manifold.n
    tau = config.threshold(n)
    r_c = config.cyclic_rounds(known)
    max_comp = config.max_components if config.max_components is not None else max(1, n // 4)
    max_iter = config.max_iter if config.max_iter is not None else 2 * max_comp + 10
    use_bic = config.stopping == "bic"

    state = _State(obs, spec, sigma, manifold, config)
    state.log("start")
    trace = []
    bic_hist = [(0, state.loglik())]
    snapshots = {0: ([], [], sigma, bic_hist[0][1])}
    best_cost = bic_cost(bic_hist[0][1], 0, n)
    stale = 0
    stop = "max_iter"

    for it in range(1, max_iter + 1):
        zeta = state.zeta()
        phi = pseudo_measurements(obs, zeta, state.sigma)
        hpm = h_plus_minus(zeta, state.sigma, spec)
        det = rao_grid(phi, zeta, state.sigma, spec, 1, manifold, config.simplified, hpm)
        rec = IterationRecord(it, det.max, tau, det.max > tau, sigma=state.sigma,
                              n_components=len(state.omegas))
        trace.append(rec)
        if record_spectra:
            rec.spectrum = rao_grid(phi, zeta, state.sigma, spec, config.oversample, manifold,
                                    config.simplified, hpm)
        if not use_bic and det.max <= tau:
            stop = "cfar"
            break
        if len(state.omegas) >= max_comp:
            rec.detected = False
            stop = "max_components"
            break

        omega, x, _ = identify(obs, zeta, state.sigma, spec, config.oversample, manifold, config.simplified)
        rec.omega_init = omega
        state.omegas.append(omega)
        state.amps.append(x)
        state.log("identify")
        omega, x = _single_refinement(state, zeta, omega, x, config.r_s)
        state.omegas[-1], state.amps[-1] = omega, x
        state.log("single")
        _cyclic_refinement(state, r_c)
        _update_amplitudes(state)
        if not known:
            _estimate_sigma(state)
        removed = _spurious_suppression(state, tau, config.spurious_ratio)
        if removed:
            rec.suppressed = removed
            _cyclic_refinement(state, r_c)
            _update_amplitudes(state)
            if not known:
                _estimate_sigma(state)
        rec.n_components = len(state.omegas)

        if use_bic:
            k = len(state.omegas)
            ll = state.loglik()
            bic_hist.append((k, ll))
            cost = bic_cost(ll, k, n)
            if k not in snapshots or cost < bic_cost(snapshots[k][3], k, n):
                snapshots[k] = (list(state.omegas), list(state.amps), state.sigma, ll)
            if cost < best_cost:
                best_cost, stale = cost, 0
            else:
                stale += 1
                if stale >= config.bic_patience:
                    stop = "bic"
                    break

    if use_bic:
        k_best = bic_order_select(bic_hist, n)
        snap = snapshots[k_best]
        state.omegas, state.amps, state.sigma = list(snap[0]), list(snap[1]), snap[2]
        if stop != "bic":
            stop = "bic:" + stop

    final_zeta = state.zeta()
    return GnompResult(
        components=state.components(),
        zeta=final_zeta,
        sigma=state.sigma,
        tau_th=tau,
        trace=trace,
        ll_trace=state.ll_trace,
        stop_reason=stop,
        log_likelihood=state.loglik(final_zeta),
        bic_history=bic_hist,
    )


def _check_sigma_identifiable(spec):
    if isinstance(spec, QuantizerSpec) and spec.bit_depth == 1:
        raise ValueError("noise level is not identifiable from one-bit signs at a zero threshold")


def sigma_unknown_wrapper(obs, spec, config=None, manifold=None):
    """Run :func:`extract_spectrum` with the noise level estimated alongside."""
    _check_sigma_identifiable(spec)
    return extract_spectrum(obs, None, spec, config, manifold)
