"""Command-line entry point ``qlsed``."""

import argparse
import csv
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from .experiments import (
    format_trace,
    load_spec,
    run_compressive,
    run_demo,
    run_experiment,
)
from .fim import crb_frequency_unquantized, fim_general, snr_loss
from .gnomp import GnompConfig, component_statistics, extract_spectrum
from .likelihood import Manifold, SinusoidComponent, atom, pseudo_measurements
from .quantizer import QuantizedObservation, make_quantizer, parse_bit_depth, quantize_complex
from .rao import rao_grid, to_db


def _bits_list(text):
    return [parse_bit_depth(t.strip()) for t in text.split(",") if t.strip()]


def _range(text):
    """``start:stop:step`` (inclusive stop) or a comma list."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return [float(v) for v in text.split(",") if v.strip()]


def _write_csv(path, header, rows):
    handle = open(path, "w", newline="") if path and path != "-" else sys.stdout
    try:
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if handle is not sys.stdout:
            handle.close()


def read_observation(path, bits, full_scale):
    """Observation CSV: columns ``re,im`` of raw samples, quantized here, or
    ``code_re,code_im`` of cell indices of an existing quantizer."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("observation file is empty")
    model = make_quantizer(bits, full_scale)
    cols = set(rows[0])
    if {"re", "im"} <= cols:
        y = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
        return quantize_complex(y, model), model
    if {"code_re", "code_im"} <= cols:
        if model.unquantized:
            raise ValueError("cell codes need a finite bit depth")
        codes = np.array([[int(r["code_re"]) for r in rows], [int(r["code_im"]) for r in rows]])
        if codes.min() < 0 or codes.max() >= model.levels:
            raise ValueError("cell code out of range for this bit depth")
        tau = model.thresholds
        return QuantizedObservation(tau[codes], tau[codes + 1], codes, model), model
    raise ValueError("observation CSV needs re,im or code_re,code_im columns")


def write_observation(path, samples):
    _write_csv(path, ["re", "im"], [(float(z.real), float(z.imag)) for z in np.asarray(samples)])


def _gnomp_config(path, **overrides):
    data = cfg.load_toml(path) if path else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(GnompConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown GNOMP config keys: {sorted(unknown)}")
    return GnompConfig(**data)


def cmd_run(args):
    spec = load_spec(args.spec, seed=args.seed)
    out = run_experiment(spec, args.out, threads=args.threads)
    print(f"{len(out.aggregate)} cells, {len(out.trials)} trial rows written to {args.out}")


def cmd_demo(args):
    out = run_demo(args.out, seed=args.seed)
    for b, item in out.items():
        res = item["result"]
        stats = ", ".join(f"{r.statistic_db:.1f}" for r in res.trace)
        print(f"B={b}: omegas {np.round(res.omegas, 4).tolist()} statistics [{stats}] dB")


def cmd_compressive(args):
    out = run_compressive(seed=args.seed, bit_depth=parse_bit_depth(args.bits), out_dir=args.out)
    for m, item in out.items():
        print(f"M={m}: omegas {np.round(item['result'].omegas, 4).tolist()}")


def cmd_crb(args):
    """CRB and SNR loss of one tone against an optional known interferer."""
    n = args.n
    man = Manifold(n)
    zeta = args.zeta_amp * atom(args.zeta_omega, n) if args.zeta_amp else np.zeros(n, dtype=complex)
    rows = []
    for b in _bits_list(args.bits):
        for snr in _range(args.snr):
            mag = math.sqrt(args.sigma2 * 10 ** (snr / 10) / n)
            comp = SinusoidComponent(args.omega, mag * np.exp(1j * args.phase))
            gamma = args.full_scale or max(abs(args.zeta_amp), mag, 3 * math.sqrt(args.sigma2 / 2))
            model = make_quantizer(b, gamma)
            sigma = math.sqrt(args.sigma2)
            fim = fim_general([comp], sigma, model, man, zeta=zeta)
            rows.append((str(b), snr, fim.crb_of("omega"), fim.crb_of("re") + fim.crb_of("im"),
                         crb_frequency_unquantized(comp.amp, sigma, n),
                         snr_loss(args.omega, zeta, sigma, model, man)))
    _write_csv(args.out, ["bit_depth", "snr_db", "crb_omega", "crb_amp", "crb_omega_unquantized",
                          "snr_loss_db"], rows)


def cmd_rao(args):
    obs, model = read_observation(args.obs, parse_bit_depth(args.bits), args.full_scale)
    phi = pseudo_measurements(obs, None, math.sqrt(args.sigma2))
    grid = rao_grid(phi, None, math.sqrt(args.sigma2), model, args.oversample)
    db = to_db(np.maximum(grid.values, 1e-300))
    _write_csv(args.out, ["frequency", "statistic_dB"],
               [(float(w), float(v)) for w, v in zip(grid.omegas, db)])


def cmd_gnomp(args):
    obs, model = read_observation(args.obs, parse_bit_depth(args.bits), args.full_scale)
    conf = _gnomp_config(args.config, p_fa=args.pfa)
    sigma = math.sqrt(args.sigma2) if args.sigma2 is not None else None
    res = extract_spectrum(obs, sigma, model, conf)
    stats = component_statistics(res.components, obs, res.sigma, model)
    _write_csv(args.out, ["omega", "re_amp", "im_amp", "statistic_dB"],
               [(c.omega, c.amp.real, c.amp.imag, s) for c, s in zip(res.components, stats)])
    if args.trace:
        Path(args.trace).write_text(format_trace(res))


def cmd_radar(args):
    from .radar import IQFormat, RadarParams, load_iq, load_params, range_profile

    params = load_params(args.params) if args.params else RadarParams()
    fmt = IQFormat.parse(args.format) if args.format else IQFormat(frame_length=params.samples)
    frames = load_iq(args.input, fmt)
    conf = _gnomp_config(args.config, p_fa=args.pfa)
    dets = range_profile(frames, params, parse_bit_depth(args.bits), conf,
                         full_scale=args.full_scale, sigma2=args.sigma2)
    _write_csv(args.out, ["frame", "channel", "range_m", "amp_re", "amp_im", "statistic_dB"],
               [(d.frame_index, d.channel, d.range_m, d.amp.real, d.amp.imag, d.statistic_db)
                for d in dets])


def build_parser():
    p = argparse.ArgumentParser(prog="qlsed", description="Line spectra from few-bit samples.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte Carlo experiment from a TOML spec")
    r.add_argument("spec")
    r.add_argument("--out", required=True)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("demo", help="two-tone demo traces")
    d.add_argument("--out")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_demo)

    c = sub.add_parser("compressive", help="compressive two-tone instances")
    c.add_argument("--out")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--bits", default="1")
    c.set_defaults(func=cmd_compressive)

    b = sub.add_parser("crb", help="CRB and SNR-loss sweep as CSV")
    b.add_argument("--n", type=int, default=128)
    b.add_argument("--bits", default="1,2,3,inf")
    b.add_argument("--snr", default="0:30:2", help="integrated SNR, start:stop:step or list")
    b.add_argument("--omega", type=float, default=2.34)
    b.add_argument("--phase", type=float, default=0.0)
    b.add_argument("--sigma2", type=float, default=1.0)
    b.add_argument("--zeta-omega", type=float, default=math.pi / 2)
    b.add_argument("--zeta-amp", type=float, default=0.0)
    b.add_argument("--full-scale", type=float)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_crb)

    for name, func, helptext in (("rao", cmd_rao, "Rao spectrum of an observation"),
                                 ("gnomp", cmd_gnomp, "detect and estimate sinusoids")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--obs", required=True, help="CSV with re,im or code_re,code_im")
        q.add_argument("--bits", default="1")
        q.add_argument("--full-scale", type=float, required=True)
        q.add_argument("--out", default="-")
        if name == "rao":
            q.add_argument("--sigma2", type=float, default=1.0)
            q.add_argument("--oversample", type=int, default=1)
        else:
            q.add_argument("--sigma2", type=float, help="omit to estimate the noise level")
            q.add_argument("--config", help="TOML with GNOMP settings")
            q.add_argument("--pfa", type=float)
            q.add_argument("--trace")
        q.set_defaults(func=func)

    rd = sub.add_parser("radar", help="range detections from an FMCW IQ capture")
    rd.add_argument("--in", dest="input", required=True)
    rd.add_argument("--format", help='e.g. "dtype=int16,order=iq,n=256,channels=4,layout=frame"')
    rd.add_argument("--params", help="TOML radar parameters (defaults otherwise)")
    rd.add_argument("--bits", default="1")
    rd.add_argument("--pfa", type=float, default=0.01)
    rd.add_argument("--full-scale", type=float, required=True,
                    help="quantizer full scale in capture units")
    rd.add_argument("--sigma2", type=float, help="noise variance; estimated per frame if omitted")
    rd.add_argument("--config", help="TOML with GNOMP settings")
    rd.add_argument("--out", default="-")
    rd.set_defaults(func=cmd_radar)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"qlsed: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
