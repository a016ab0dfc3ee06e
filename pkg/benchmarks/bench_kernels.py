"""Compare the compiled and numpy kernel backends on certification-sized batches.

    python benchmarks/bench_kernels.py [--starts 4096] [--taus 256] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from subelliptic import kernels
from subelliptic.certify import run_pipeline
from subelliptic.distgeo import point_at
from subelliptic.symbols import builtin


def batch(name, n, q, seed=0):
    sym = builtin(name)
    _, cert = run_pipeline(sym)
    plan = max(cert.plans, key=lambda p: p.pieces)
    rng = np.random.default_rng(seed)
    th = plan.sector.theta_at(rng.uniform(0.01, 0.99, n))
    t0, s0 = point_at(th, rng.uniform(0.1, 1.0, n) * plan.omega_radius, sym.ell)
    taus = np.ascontiguousarray(np.broadcast_to(np.linspace(0, 1, q), (n, q)))
    args = (np.ascontiguousarray(t0, dtype=float), np.ascontiguousarray(s0, dtype=float),
            *plan.arrays(), float(sym.ell), taus)
    return sym, plan, args


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--starts", type=int, default=4096)
    ap.add_argument("--taus", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    backends = kernels.backends()
    print(f"backends: {', '.join(backends)}; selected: {kernels.BACKEND}")
    print(f"{'symbol':22s} {'pieces':>6s} {'kernel':>10s} " + " ".join(f"{b:>10s}" for b in backends)
          + "   speedup")
    for name in ("quasielliptic-l2-m4", "maire-l2", "jt-q8"):
        sym, plan, args = batch(name, opts.starts, opts.taus)
        T = args[-1] * 0.3
        S = args[-1] * -0.2
        js, ks, cs = zip(*sym.monomials)
        for kernel, call in (("trace", lambda k: k.trace(*args)),
                             ("poly_eval", lambda k: k.poly_eval(T, S, js, ks, cs))):
            times = {b: min(timeit.repeat(lambda: call(k), number=1, repeat=opts.repeat))
                     for b, k in backends.items()}
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:22s} {plan.pieces:6d} {kernel:>10s} "
                  + " ".join(f"{1e3 * t:8.2f}ms" for t in times.values()) + f"   {speed:6.1f}x")


if __name__ == "__main__":
    main()
