"""Unfolding and rescaling identity checks over profiles, alpha and eps."""
import argparse

from thinhom.geometry import BoundaryProfile, ThinDomainSpec
from thinhom.unfolding import property_suite

PROFILES = {"comb": BoundaryProfile.comb(), "cosine": BoundaryProfile.cosine(2.0, 0.5),
            "constant": BoundaryProfile.constant(1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, nargs="*", default=[0.1, 0.05])
    args = ap.parse_args()
    n_fail = 0
    for name, pr in PROFILES.items():
        for alpha in (0.5, 1.0, 2.0):
            for eps in args.eps:
                for r in property_suite(ThinDomainSpec(eps, alpha, pr), args.p, seed=args.seed):
                    n_fail += not r.passed
                    print(f"{name:<9} alpha={alpha:<4g} eps={eps:<6g} {r.name:<28} "
                          f"{r.value:.2e}  {'PASS' if r.passed else 'FAIL'}")
    print(f"{n_fail} failures")
    raise SystemExit(1 if n_fail else 0)


if __name__ == "__main__":
    main()
