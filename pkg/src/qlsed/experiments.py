"""Seeded Monte Carlo harness for detection and estimation studies.

Every trial draws its randomness from ``SeedSequence([seed, trial])`` so a
trial's outcome does not depend on which worker runs it or in what order.
Trials share their noise draw across all cells (bit depth, SNR, P_FA) of an
experiment, which keeps swept curves smooth.
"""

import csv
import dataclasses
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from . import config as cfg
from .fim import fim_general, snr_loss
from .gnomp import GnompConfig, extract_spectrum
from .likelihood import (
    CompressiveManifold,
    Manifold,
    SinusoidComponent,
    TWO_PI,
    h_plus_minus,
    synthesize,
)
from .quantizer import (
    design_full_scale,
    make_quantizer,
    parse_bit_depth,
    quantize_complex,
    random_signed_thresholds,
    signed_measurements,
)
from .rao import (
    grid_forms,
    nearest_dft_bin,
    predict_detection,
    rao_grid,
    threshold_unknown_freq,
    to_db,
)


@dataclass
class ExperimentSpec:
    """Description of a Monte Carlo study.

    ``scenario`` is ``"gnomp"`` (full estimator) or ``"single_detection"``
    (grid Rao detection of one target against a known offset).  SNRs are
    integrated, ``10 log10(N |x|^2 / sigma^2)``.  With ``strong_snr_db`` set,
    the first ``K - 1`` targets sit at that SNR and the last one follows the
    sweep; with ``dr_db`` set, the first target follows the sweep and the
    others sit ``dr`` dB below it.
    """

    name: str = "experiment"
    scenario: str = "gnomp"
    n: int = 512
    k: int = 8
    frequencies: object = None
    min_separation: float = 2.5
    phases: object = None
    snr_db: list = field(default_factory=lambda: [20.0])
    strong_snr_db: object = None
    dr_db: object = None
    bit_depths: list = field(default_factory=lambda: [1])
    p_fa: list = field(default_factory=lambda: [0.01])
    trials: int = 100
    seed: int = 0
    sigma2: float = 1.0
    full_scale: object = "paper_max_rule"
    mode: str = "uniform"
    m: object = None
    signed_levels: int = 8
    signed_range: float = 1.0
    sigma_known: bool = True
    oversample: int = 4
    r_s: int = 1
    r_c: object = None
    stopping: str = "cfar"
    # single_detection geometry
    interference_omega: float = math.pi / 2
    interference_amp: complex = 2.0
    target_omega: float = 2.34
    target_phase: float = float(np.angle(-0.27 + 0.29j))
    trace_trials: int = 1

    def __post_init__(self):
        if self.scenario not in ("gnomp", "single_detection"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.mode not in ("uniform", "signed", "compressive"):
            raise ValueError(f"unknown measurement mode {self.mode!r}")
        if self.n < 1 or self.k < 0 or self.trials < 0:
            raise ValueError("n >= 1, k >= 0 and trials >= 0 are required")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.mode == "compressive" and not self.m:
            raise ValueError("compressive mode needs m (number of measurements)")
        if self.frequencies is not None and len(self.frequencies) != self.k:
            raise ValueError("frequencies must list k values")
        if self.phases is not None and len(self.phases) != self.k:
            raise ValueError("phases must list k values")
        self.snr_db = [float(s) for s in np.atleast_1d(self.snr_db)]
        self.bit_depths = [parse_bit_depth(b) for b in np.atleast_1d(np.asarray(self.bit_depths, dtype=object))]
        self.p_fa = [float(p) for p in np.atleast_1d(self.p_fa)]
        if self.dr_db is not None:
            self.dr_db = [float(d) for d in np.atleast_1d(self.dr_db)]
        self.interference_amp = complex(self.interference_amp)

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    def cells(self):
        """``(bit_depth, snr, dr, p_fa)`` tuples in output order."""
        drs = self.dr_db if self.dr_db is not None else [None]
        out = []
        for b in self.bit_depths:
            for s in self.snr_db:
                for d in drs:
                    for p in self.p_fa:
                        out.append((b, s, d, p))
        return out

    def target_snrs(self, snr, dr):
        if self.k == 0:
            return np.zeros(0)
        if dr is not None:
            out = np.full(self.k, snr - dr)
            out[0] = snr
            return out
        if self.strong_snr_db is not None:
            out = np.full(self.k, float(self.strong_snr_db))
            out[-1] = snr
            return out
        return np.full(self.k, snr)


def load_spec(path, **overrides):
    """Read an :class:`ExperimentSpec` from a TOML file."""
    data = cfg.load_toml(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    for alias, name in (("bit_depth", "bit_depths"), ("full_scale_rule", "full_scale")):
        if alias in data:
            if name in data:
                raise ValueError(f"give either {alias} or {name}, not both")
            data[name] = data.pop(alias)
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
    if "interference_amp" in data:
        data["interference_amp"] = cfg.parse_complex(data["interference_amp"])
    return ExperimentSpec(**data)


# ---------------------------------------------------------------------------
# trial generation
# ---------------------------------------------------------------------------


def trial_rng(seed, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def wrap_distance(a, b):
    d = np.abs((np.asarray(a) - np.asarray(b)) % TWO_PI)
    return np.minimum(d, TWO_PI - d)


def sample_frequencies(rng, k, n, min_separation, max_tries=10000):
    """Uniform frequencies on ``[0, 2 pi)`` with pairwise wrap-around distance
    at least ``min_separation * 2 pi / n``, by rejection."""
    sep = min_separation * TWO_PI / n
    if k * sep > TWO_PI:
        raise ValueError("minimum separation cannot be met")
    for _ in range(max_tries):
        w = rng.uniform(0.0, TWO_PI, k)
        if k < 2:
            return w
        d = wrap_distance(w[:, None], w[None, :])
        if np.all(d[np.triu_indices(k, 1)] >= sep):
            return w
    raise RuntimeError("could not draw separated frequencies")


@dataclass
class _TrialDraw:
    omegas: np.ndarray
    phases: np.ndarray
    noise: np.ndarray
    sensing: object = None
    thresholds: object = None


def _draw_trial(spec, trial):
    rng = trial_rng(spec.seed, trial)
    if spec.frequencies is not None:
        omegas = np.asarray(spec.frequencies, dtype=float) % TWO_PI
    else:
        omegas = sample_frequencies(rng, spec.k, spec.n, spec.min_separation)
    if spec.phases is not None:
        phases = np.asarray(spec.phases, dtype=float)
    else:
        phases = rng.uniform(0.0, TWO_PI, spec.k)
    m = spec.m if spec.mode == "compressive" else spec.n
    noise = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
    sensing = thresholds = None
    if spec.mode == "compressive":
        sensing = rng.standard_normal((spec.m, spec.n)) + 1j * rng.standard_normal((spec.m, spec.n))
    elif spec.mode == "signed":
        thresholds = random_signed_thresholds(spec.n, rng, spec.signed_levels,
                                              -spec.signed_range, spec.signed_range)
    return _TrialDraw(omegas, phases, noise, sensing, thresholds)


def amplitude_for_snr(snr_db, n, sigma2):
    """Magnitude giving integrated SNR ``snr_db``."""
    return math.sqrt(sigma2 * 10.0 ** (snr_db / 10.0) / n)


def _measurement(spec, bit_depth, amps, manifold, clean, noise, draw):
    """Quantized observation and its measurement model for one cell."""
    y = clean + spec.sigma * noise
    if spec.mode == "signed":
        model = draw.thresholds
        return signed_measurements(y, model), model
    if spec.full_scale == "paper_max_rule":
        gamma = design_full_scale(list(amps), spec.sigma)
    else:
        gamma = float(spec.full_scale)
    model = make_quantizer(bit_depth, gamma)
    return quantize_complex(y, model), model


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def match_estimates(true_omegas, est_omegas, n):
    """Associate estimates with truths within ``pi / n`` wrap-around distance.

    Returns ``(assignment, false_alarms)``: ``assignment[k]`` is the index of
    the estimate closest to target ``k`` (or -1), ``false_alarms`` counts
    estimates farther than ``pi / n`` from every truth.
    """
    true_omegas = np.asarray(true_omegas, dtype=float)
    est_omegas = np.asarray(est_omegas, dtype=float)
    tol = math.pi / n
    assign = np.full(true_omegas.size, -1)
    if est_omegas.size == 0:
        return assign, 0
    d = wrap_distance(true_omegas[:, None], est_omegas[None, :])
    for k in range(true_omegas.size):
        j = int(np.argmin(d[k]))
        if d[k, j] <= tol:
            assign[k] = j
    false_alarms = int(np.sum(np.min(d, axis=0) > tol)) if true_omegas.size else est_omegas.size
    return assign, false_alarms


@dataclass
class TrialRecord:
    trial: int
    bit_depth: object
    snr_db: float
    dr_db: object
    p_fa: float
    k_hat: int
    detected: tuple
    false_alarms: int
    overestimated: bool
    freq_sq_err: float
    amp_sq_err: float
    crb_freq: float
    pd_pred: tuple
    snr_loss_db: tuple
    runtime: float = 0.0

    @property
    def all_detected(self):
        return all(self.detected)


def _theory(spec, model, comps, manifold, p_fa):
    """Per-target oracle P_D, SNR loss and the mean frequency CRB."""
    total = synthesize(comps, manifold)
    pd, loss = [], []
    for c in comps:
        others = total - manifold.atom(c.omega) * c.amp
        pd.append(predict_detection(c.omega, c.amp, others, spec.sigma, model, p_fa, manifold).p_d)
        loss.append(snr_loss(c.omega, others, spec.sigma, model, manifold))
    crb = math.nan
    if comps:
        fim = fim_general(comps, spec.sigma, model, manifold)
        crb = fim.crb_of("omega") / len(comps)
    return tuple(pd), tuple(loss), crb


def _run_gnomp_trial(spec, trial, cells, want_trace):
    draw = _draw_trial(spec, trial)
    if spec.mode == "compressive":
        manifold = CompressiveManifold(draw.sensing)
    else:
        manifold = Manifold(spec.n)
    records, traces = [], []
    theory_cache = {}
    for cell in cells:
        b, snr, dr, p_fa = cell
        mags = np.array([amplitude_for_snr(s, spec.n, spec.sigma2) for s in spec.target_snrs(snr, dr)])
        amps = mags * np.exp(1j * draw.phases)
        comps = [SinusoidComponent(w, x) for w, x in zip(draw.omegas, amps)]
        clean = synthesize(comps, manifold)
        obs, model = _measurement(spec, b, amps, manifold, clean, draw.noise, draw)
        gcfg = GnompConfig(p_fa=p_fa, oversample=spec.oversample, r_s=spec.r_s, r_c=spec.r_c,
                           stopping=spec.stopping)
        t0 = time.perf_counter()
        res = extract_spectrum(obs, spec.sigma if spec.sigma_known else None, model, gcfg, manifold)
        runtime = time.perf_counter() - t0
        assign, fa = match_estimates(draw.omegas, res.omegas, spec.n)
        detected = tuple(bool(a >= 0) for a in assign)
        ferr = [wrap_distance(draw.omegas[k], res.omegas[j]) ** 2 for k, j in enumerate(assign) if j >= 0]
        aerr = [abs(amps[k] - res.amps[j]) ** 2 for k, j in enumerate(assign) if j >= 0]
        key = (b, snr, dr, p_fa)
        if key not in theory_cache:
            theory_cache[key] = _theory(spec, model, comps, manifold, p_fa)
        pd, loss, crb = theory_cache[key]
        records.append(TrialRecord(
            trial=trial, bit_depth=b, snr_db=snr, dr_db=dr, p_fa=p_fa, k_hat=res.k,
            detected=detected, false_alarms=fa, overestimated=res.k > spec.k,
            freq_sq_err=float(np.mean(ferr)) if ferr else math.nan,
            amp_sq_err=float(np.mean(aerr)) if aerr else math.nan,
            crb_freq=crb, pd_pred=pd, snr_loss_db=loss, runtime=runtime))
        if want_trace:
            traces.append((cell, format_trace(res)))
    return records, traces


def _batch_phi(y, zeta, sigma, model):
    """Pseudo-measurements of a ``(T, N)`` stack of unquantized samples."""
    parts = np.stack([y.real, y.imag], axis=1)
    if model.unquantized:
        lo = hi = parts
    else:
        codes = model.code(parts)
        tau = model.thresholds
        lo, hi = tau[codes], tau[codes + 1]
    s = sigma / math.sqrt(2.0)
    mu = np.broadcast_to(np.stack([zeta.real, zeta.imag]), parts.shape)
    _, d1, _ = _kernels.cell_terms(lo.ravel(), hi.ravel(), np.ascontiguousarray(mu).ravel(), s)
    d1 = d1.reshape(parts.shape)
    return s * (d1[:, 0] + 1j * d1[:, 1])


def _detection_batch(spec, cells, trials, chunk=2000):
    """Vectorized single-target grid detection against a known offset.

    A detection is the statistic in the DFT bin nearest the target exceeding
    the threshold, the event the noncentral chi-squared prediction describes.
    A false alarm is any other bin exceeding it.
    """
    n = spec.n
    manifold = Manifold(n)
    zeta = spec.interference_amp * manifold.atom(spec.interference_omega)
    target_bin = int(round(nearest_dft_bin(spec.target_omega, n) / TWO_PI * n)) % n
    noise = np.stack([_draw_trial(spec, t).noise for t in trials]) if trials else np.zeros((0, n))
    a = manifold.atom(spec.target_omega)
    records = []
    for b, snr, dr, p_fa in cells:
        mag = amplitude_for_snr(snr, n, spec.sigma2)
        x = mag * np.exp(1j * spec.target_phase)
        if spec.full_scale == "paper_max_rule":
            gamma = design_full_scale([spec.interference_amp], spec.sigma)
        else:
            gamma = float(spec.full_scale)
        model = make_quantizer(b, gamma)
        tau = threshold_unknown_freq(p_fa, n)
        pred = predict_detection(spec.target_omega, x, zeta, spec.sigma, model, p_fa, manifold)
        loss = snr_loss(spec.target_omega, zeta, spec.sigma, model, manifold)
        hpm = h_plus_minus(zeta, spec.sigma, model)
        # the grid forms that do not depend on the data
        _, dplus, c = grid_forms(np.zeros(n, dtype=complex), zeta, spec.sigma, model, 1, manifold, hpm)
        den = dplus * dplus - np.abs(c) ** 2
        for lo in range(0, len(trials), chunk):
            y = zeta + a * x + spec.sigma * noise[lo:lo + chunk]
            z = np.fft.fft(_batch_phi(y, zeta, spec.sigma, model), axis=1)
            stat = (dplus * np.abs(z) ** 2 - np.real(c * z * z)) / den
            hits = stat[:, target_bin] > tau
            stat[:, target_bin] = 0.0
            others = np.max(stat, axis=1) > tau
            for i in range(hits.size):
                records.append(TrialRecord(
                    trial=trials[lo + i], bit_depth=b, snr_db=snr, dr_db=dr, p_fa=p_fa,
                    k_hat=int(hits[i]) + int(others[i]), detected=(bool(hits[i]),),
                    false_alarms=int(others[i]),
                    overestimated=False, freq_sq_err=math.nan, amp_sq_err=math.nan,
                    crb_freq=math.nan, pd_pred=(pred.p_d,), snr_loss_db=(loss,)))
    return records


# ---------------------------------------------------------------------------
# aggregation and output
# ---------------------------------------------------------------------------

AGG_FIELDS = [
    "bit_depth", "snr_db", "dr_db", "p_fa", "trials", "p_fa_measured", "p_oe",
    "pd_all", "pd_last", "pd_targets", "freq_mse", "amp_mse", "crb_freq",
    "pd_pred_last", "pd_pred_all", "snr_loss_last_db", "mean_k_hat",
]

TRIAL_FIELDS = [
    "trial", "bit_depth", "snr_db", "dr_db", "p_fa", "k_hat", "detected",
    "false_alarms", "overestimated", "freq_sq_err", "amp_sq_err",
]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _fsum_mean(values):
    values = [v for v in values if not (isinstance(v, float) and math.isnan(v))]
    return math.fsum(values) / len(values) if values else math.nan


def aggregate(records, cells):
    """One row per cell; sums are exact (``math.fsum``) so trial order does
    not change the result."""
    by_cell = {c: [] for c in cells}
    for r in records:
        by_cell[(r.bit_depth, r.snr_db, r.dr_db, r.p_fa)].append(r)
    rows = []
    for cell in cells:
        recs = sorted(by_cell[cell], key=lambda r: r.trial)
        t = len(recs)
        if t == 0:
            continue
        k = len(recs[0].detected)
        det = np.array([r.detected for r in recs], dtype=bool).reshape(t, k)
        all_det = [r for r in recs if r.all_detected]
        pd_pred = [r.pd_pred for r in recs]
        rows.append({
            "bit_depth": cell[0], "snr_db": cell[1], "dr_db": cell[2], "p_fa": cell[3],
            "trials": t,
            "p_fa_measured": sum(r.false_alarms > 0 for r in recs) / t,
            "p_oe": sum(r.overestimated for r in recs) / t,
            "pd_all": len(all_det) / t,
            "pd_last": float(det[:, -1].mean()) if k else math.nan,
            "pd_targets": tuple(float(v) for v in det.mean(axis=0)),
            "freq_mse": _fsum_mean([r.freq_sq_err for r in all_det]),
            "amp_mse": _fsum_mean([r.amp_sq_err for r in all_det]),
            "crb_freq": _fsum_mean([r.crb_freq for r in recs]),
            "pd_pred_last": _fsum_mean([p[-1] for p in pd_pred]) if k else math.nan,
            "pd_pred_all": _fsum_mean([float(np.prod(p)) for p in pd_pred]),
            "snr_loss_last_db": _fsum_mean([r.snr_loss_db[-1] for r in recs]) if k else math.nan,
            "mean_k_hat": math.fsum(r.k_hat for r in recs) / t,
        })
    return rows


def _csv_text(fields, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(row.get(f)) for f in fields])
    return buf.getvalue()


def trial_rows(records):
    return [{f: getattr(r, f) for f in TRIAL_FIELDS} for r in records]


def format_trace(result):
    """Plain-text log of a GNOMP run."""
    lines = [f"tau_th {result.tau_th!r} ({to_db(result.tau_th):.3f} dB)",
             f"stop {result.stop_reason}"]
    for rec in result.trace:
        lines.append(
            f"iter {rec.iteration} stat {rec.statistic!r} ({rec.statistic_db:.3f} dB) "
            f"detected {int(rec.detected)} omega_init {rec.omega_init!r} "
            f"k {rec.n_components} sigma {rec.sigma!r} suppressed {len(rec.suppressed)}")
    for event, ll in result.ll_trace:
        lines.append(f"ll {event} {ll!r}")
    for c in result.components:
        lines.append(f"component omega {c.omega!r} amp {c.amp.real!r} {c.amp.imag!r}")
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentOutput:
    aggregate: list
    trials: list
    traces: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)

    def aggregate_csv(self):
        return _csv_text(AGG_FIELDS, self.aggregate)

    def trials_csv(self):
        return _csv_text(TRIAL_FIELDS, trial_rows(self.trials))

    def write(self, out_dir):
        out = Path(out_dir)
        (out / "trace").mkdir(parents=True, exist_ok=True)
        (out / "aggregate.csv").write_text(self.aggregate_csv())
        (out / "trials.csv").write_text(self.trials_csv())
        # wall-clock times vary run to run, so they stay out of trials.csv
        timing = [{"trial": r.trial, "bit_depth": r.bit_depth, "snr_db": r.snr_db,
                   "dr_db": r.dr_db, "p_fa": r.p_fa, "runtime_s": r.runtime} for r in self.trials]
        (out / "timing.csv").write_text(
            _csv_text(["trial", "bit_depth", "snr_db", "dr_db", "p_fa", "runtime_s"], timing))
        for name, text in self.traces:
            (out / "trace" / f"{name}.log").write_text(text)


def _trace_name(trial, cell):
    b, snr, dr, p = cell
    parts = [f"trial{trial}", f"B{b}", f"snr{snr:g}"]
    if dr is not None:
        parts.append(f"dr{dr:g}")
    parts.append(f"pfa{p:g}")
    return "_".join(parts)


def _gnomp_worker(args):
    spec, trial, cells = args
    records, traces = _run_gnomp_trial(spec, trial, cells, trial < spec.trace_trials)
    return records, [(_trace_name(trial, cell), text) for cell, text in traces]


def run_experiment(spec, out_dir=None, threads=1, cells=None):
    """Run every trial of ``spec`` and aggregate per cell.

    Parameters
    ----------
    threads : int
        Worker processes; results are identical for any value.
    cells : list, optional
        Subset of ``spec.cells()`` to evaluate.
    """
    cells = list(cells) if cells is not None else spec.cells()
    trials = list(range(spec.trials))
    records, traces = [], []
    if spec.scenario == "single_detection":
        records = _detection_batch(spec, cells, trials)
    elif threads and threads > 1 and len(trials) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for recs, tr in pool.map(_gnomp_worker, [(spec, t, cells) for t in trials], chunksize=4):
                records.extend(recs)
                traces.extend(tr)
    else:
        for t in trials:
            recs, tr = _gnomp_worker((spec, t, cells))
            records.extend(recs)
            traces.extend(tr)
    order = {c: i for i, c in enumerate(cells)}
    records.sort(key=lambda r: (order[(r.bit_depth, r.snr_db, r.dr_db, r.p_fa)], r.trial))
    out = ExperimentOutput(aggregate(records, cells), records, sorted(traces))
    if out_dir is not None:
        out.write(out_dir)
    return out


# ---------------------------------------------------------------------------
# fixed instances
# ---------------------------------------------------------------------------

DEMO_OMEGAS = (2.2, 2.4)
DEMO_AMPS = (-1.505 - 0.497j, -0.164 - 0.609j)
DEMO_N = 128
DEMO_SIGMA2 = 1.0
DEMO_SEED = 0


def demo_instance(seed=DEMO_SEED, n=DEMO_N):
    """Two-tone demo signal plus a seeded noise draw (noise variance 1)."""
    comps = [SinusoidComponent(w, x) for w, x in zip(DEMO_OMEGAS, DEMO_AMPS)]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    return comps, synthesize(comps, n) + math.sqrt(DEMO_SIGMA2) * noise


def _pairwise_losses(comps, sigma, model, manifold):
    total = synthesize(comps, manifold)
    return [snr_loss(c.omega, total - manifold.atom(c.omega) * c.amp, sigma, model, manifold)
            for c in comps]


def run_demo(out_dir=None, seed=DEMO_SEED, bit_depths=(1, 2), config=None):
    """Run the two-tone demo and collect per-iteration spectra and decisions.

    Returns a dict keyed by bit depth with the GNOMP result, the SNR loss of
    each target at the true and at the estimated parameters, and the Rao
    spectrum (dB) seen at every iteration.
    """
    config = config or GnompConfig(p_fa=0.01)
    comps, y = demo_instance(seed)
    sigma = math.sqrt(DEMO_SIGMA2)
    manifold = Manifold(DEMO_N)
    out = {}
    for b in bit_depths:
        model = make_quantizer(b, design_full_scale(DEMO_AMPS, sigma))
        obs = quantize_complex(y, model)
        res = extract_spectrum(obs, sigma, model, config, manifold, record_spectra=True)
        spectra = [(r.spectrum.omegas, to_db(np.maximum(r.spectrum.values, 1e-300))) for r in res.trace]
        out[b] = {
            "result": res,
            "loss_true_db": _pairwise_losses(comps, sigma, model, manifold),
            "loss_est_db": _pairwise_losses(res.components, sigma, model, manifold) if res.k else [],
            "spectra": spectra,
        }
    if out_dir is not None:
        _write_demo(out, Path(out_dir))
    return out


def _write_demo(out, out_dir):
    (out_dir / "trace").mkdir(parents=True, exist_ok=True)
    rows = []
    for b, item in out.items():
        res = item["result"]
        for rec in res.trace:
            rows.append({"bit_depth": b, "iteration": rec.iteration, "statistic_db": rec.statistic_db,
                         "tau_db": rec.tau_db, "detected": rec.detected, "omega_init": rec.omega_init})
        (out_dir / "trace" / f"demo_B{b}.log").write_text(format_trace(res))
        spec_rows = []
        for m, (w, db) in enumerate(item["spectra"], start=1):
            spec_rows.extend({"iteration": m, "omega": float(wi), "statistic_db": float(v)}
                             for wi, v in zip(w, db))
        (out_dir / f"demo_spectra_B{b}.csv").write_text(
            _csv_text(["iteration", "omega", "statistic_db"], spec_rows))
    (out_dir / "demo_trace.csv").write_text(
        _csv_text(["bit_depth", "iteration", "statistic_db", "tau_db", "detected", "omega_init"], rows))
    comp_rows = []
    for b, item in out.items():
        for i, c in enumerate(item["result"].components):
            loss = item["loss_est_db"][i] if i < len(item["loss_est_db"]) else math.nan
            comp_rows.append({"bit_depth": b, "omega": c.omega, "amp_re": c.amp.real,
                              "amp_im": c.amp.imag, "snr_loss_est_db": loss})
    (out_dir / "demo_components.csv").write_text(
        _csv_text(["bit_depth", "omega", "amp_re", "amp_im", "snr_loss_est_db"], comp_rows))


def run_signed(spec, out_dir=None, threads=1):
    """Run ``spec`` with signed measurements against random per-sample thresholds."""
    spec = dataclasses.replace(spec, mode="signed", bit_depths=[1])
    return run_experiment(spec, out_dir, threads)


COMPRESSIVE_OMEGAS = (1.5, 3.2)
COMPRESSIVE_N = 128


def compressive_instance(m, seed=0, n=COMPRESSIVE_N, snr_time_db=0.0, sigma2=1.0):
    """Two tones seen through a complex Gaussian ``(m, n)`` sensing matrix.

    Returns ``(components, manifold, noisy measurements)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(m)]))
    sensing = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    mag = math.sqrt(sigma2 * 10.0 ** (snr_time_db / 10.0))
    phases = rng.uniform(0.0, TWO_PI, len(COMPRESSIVE_OMEGAS))
    comps = [SinusoidComponent(w, mag * np.exp(1j * p)) for w, p in zip(COMPRESSIVE_OMEGAS, phases)]
    manifold = CompressiveManifold(sensing)
    noise = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * math.sqrt(sigma2 / 2.0)
    return comps, manifold, synthesize(comps, manifold) + noise


def run_compressive(m_values=(200, 100), seed=0, bit_depth=1, out_dir=None, config=None):
    """GNOMP on the compressive two-tone instances; returns results keyed by ``m``."""
    config = config or GnompConfig(p_fa=0.01)
    out = {}
    for m in m_values:
        comps, manifold, y = compressive_instance(m, seed)
        model = make_quantizer(bit_depth, design_full_scale([c.amp for c in comps], 1.0))
        obs = quantize_complex(y, model)
        out[m] = {"truth": comps, "result": extract_spectrum(obs, 1.0, model, config, manifold)}
    if out_dir is not None:
        od = Path(out_dir)
        (od / "trace").mkdir(parents=True, exist_ok=True)
        rows = []
        for m, item in out.items():
            (od / "trace" / f"compressive_M{m}.log").write_text(format_trace(item["result"]))
            for c in item["result"].components:
                rows.append({"m": m, "omega": c.omega, "amp_re": c.amp.real, "amp_im": c.amp.imag})
        (od / "compressive.csv").write_text(_csv_text(["m", "omega", "amp_re", "amp_im"], rows))
    return out


def default_threads():
    return max(1, (os.cpu_count() or 1))
