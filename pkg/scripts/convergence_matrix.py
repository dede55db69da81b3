"""Epsilon sweeps for p in {1.5, 2, 3} and alpha in {0.5, 1, 2} on the comb profile.

Writes one output directory per (p, alpha) and prints, for each sweep, whether
lp_error and corrector_error decrease strictly and the lp_error reduction.
"""
import argparse
import time
from dataclasses import replace
from pathlib import Path

from thinhom.geometry import BoundaryProfile
from thinhom.sweep import ForcingSpec, RunConfig, emit_outputs, run_sweep

EPS = (0.1, 0.05, 0.025, 0.0125)


def strictly_decreasing(xs):
    return all(b < a for a, b in zip(xs, xs[1:]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/matrix")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--p", type=float, nargs="*", default=[1.5, 2.0, 3.0])
    ap.add_argument("--alpha", type=float, nargs="*", default=[0.5, 1.0, 2.0])
    args = ap.parse_args()
    base = RunConfig(BoundaryProfile.comb(1.0, 2.0), 2.0, 1.0, EPS, ForcingSpec("cosine"))
    t_all = time.perf_counter()
    for p in args.p:
        for alpha in args.alpha:
            cfg = replace(base, p=p, alpha=alpha)
            t0 = time.perf_counter()
            rep = run_sweep(cfg, threads=args.threads)
            emit_outputs(rep, Path(args.out) / f"p{p:g}_alpha{alpha:g}")
            lp, ce = rep.column("lp_error"), rep.column("corrector_error")
            line = (f"p={p:g} alpha={alpha:g} q={rep.q:.6f} ok={rep.ok} "
                    f"lp_dec={strictly_decreasing(lp)} corr_dec={strictly_decreasing(ce)} "
                    f"lp_ratio={lp[-1] / lp[0]:.3f}")
            if rep.regime == "strong":
                line += f" rplus_dec={strictly_decreasing(rep.column('grad_rplus_norm'))}"
            w = rep.column("w1p_norm")
            line += f" w1p_spread={max(w) / min(w):.3f} [{time.perf_counter() - t0:.1f}s]"
            print(line, flush=True)
            print("   lp:", " ".join(f"{v:.3e}" for v in lp), "| corr:", " ".join(f"{v:.3e}" for v in ce), flush=True)
    print(f"total {time.perf_counter() - t_all:.1f}s")


if __name__ == "__main__":
    main()
