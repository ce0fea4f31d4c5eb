"""Compiled vs pure-Python kernels, alone and inside a two-month decomposition + fit.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time
from datetime import datetime

import numpy as np

from epe import kernels
from epe.decomposition import decompose
from epe.engine import discretize
from epe.estimation import fit_linear, fit_nonlinear
from epe.synthetic import HOT_DRY, real_audit_pair, synthesize_measurements, synthetic_weather


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--hours", type=int, default=61 * 24)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n = args.hours * 4
    flow = rng.standard_normal(n)
    m = 40
    A = rng.standard_normal((m, m)) * 0.05
    W = rng.standard_normal((n, m))
    x0 = np.zeros(m)

    real, audit = real_audit_pair()
    weather = synthetic_weather(datetime(2021, 5, 1), args.hours, HOT_DRY, seed=1)
    data = synthesize_measurements(real, weather)
    system = discretize(audit)

    def pipeline():
        flows = decompose(audit, data, system=system)
        lin, _ = fit_linear(flows, data.q_hc_measured)
        fit_nonlinear(flows, data.q_hc_measured, active_tfs=("q_in", "q_sun"), init=lin)

    cases = {
        f"lti_propagate ({n} x {m})": lambda: kernels.lti_propagate(A, W, x0),
        f"tf_filter ({n})": lambda: kernels.tf_filter(flow, 0.9, 0.3),
        f"tf_filter_sens ({n})": lambda: kernels.tf_filter_sens(flow, 0.9, 0.3),
        f"decompose + fits ({args.hours} h)": pipeline,
    }
    backends = sorted(kernels.available_backends())
    print(f"{'case':40s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases.items():
        row = {}
        for b in backends:
            with kernels.use_backend(b):
                row[b] = best_of(fn, args.repeat if "decompose" not in name else max(1, args.repeat // 2))
        speed = row["python"] / row["cython"] if "cython" in row else float("nan")
        print(f"{name:40s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends) + f"{speed:9.1f}x")


if __name__ == "__main__":
    main()
