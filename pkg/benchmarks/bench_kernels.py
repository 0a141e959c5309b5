"""Compare the numba kernels with the pure-numpy fallback.

Run ``python benchmarks/bench_kernels.py``.  Kernel timings call both
backends in one process; the end-to-end GNOMP timing starts a child process
per backend because ``QLSED_DISABLE_NUMBA`` is read at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qlsed import _kernels
from qlsed.quantizer import make_quantizer, quantize_complex

END_TO_END = """
import time, numpy as np
from qlsed.experiments import ExperimentSpec, run_experiment
spec = ExperimentSpec(k=4, n=256, snr_db=[20], bit_depths=[2], trials=3)
run_experiment(ExperimentSpec(k=1, n=64, snr_db=[20], bit_depths=[2], trials=1))
t = time.perf_counter(); run_experiment(spec); print(time.perf_counter() - t)
"""


def _inputs(n, bits, rng):
    model = make_quantizer(bits, 1.5)
    y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    obs = quantize_complex(y, model)
    mu = 0.3 * rng.standard_normal(2 * n)
    return obs._lo_flat, obs._hi_flat, mu, model


def bench_kernels(n, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for bits in (1, 3):
        lo, hi, mu, model = _inputs(n, bits, rng)
        s = 1.0 / np.sqrt(2.0)
        cases = {
            "cell_terms": lambda b: _kernels.cell_terms(lo, hi, mu, s, backend=b),
            "log_prob_sum": lambda b: _kernels.log_prob_sum(lo, hi, mu, s, backend=b),
            "info": (lambda b: _kernels.info_sign(mu, s, backend=b)) if bits == 1 else
                    (lambda b: _kernels.info_uniform(mu, s, model.full_scale, model.levels, backend=b)),
        }
        for name, fn in cases.items():
            times = {}
            for backend in ("numba", "numpy"):
                fn(backend)  # compile / warm up
                times[backend] = min(timeit.repeat(lambda: fn(backend), number=10, repeat=repeat)) / 10
            rows.append((name, bits, times["numba"], times["numpy"]))
    return rows


def bench_end_to_end():
    out = {}
    for backend, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, QLSED_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                             text=True, check=True)
        out[backend] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=4096, help="complex samples per call")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)
    print(f"{'kernel':14s} {'B':>2s} {'numba us':>10s} {'numpy us':>10s} {'speedup':>8s}")
    for name, bits, t_nb, t_np in bench_kernels(args.n, args.repeat):
        print(f"{name:14s} {bits:2d} {t_nb * 1e6:10.1f} {t_np * 1e6:10.1f} {t_np / t_nb:8.2f}")
    if not args.skip_end_to_end:
        e2e = bench_end_to_end()
        print(f"GNOMP 3 trials K=4 N=256 B=2: numba {e2e['numba']:.2f} s, numpy {e2e['numpy']:.2f} s")


if __name__ == "__main__":
    main()
