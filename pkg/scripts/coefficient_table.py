"""Effective coefficient q for several profiles, exponents and regimes."""
import argparse

from thinhom.geometry import BoundaryProfile, PLaplaceExponent
from thinhom.homogenization import q_resonant, q_strong, q_weak

PROFILES = {
    "comb(1,2)": BoundaryProfile.comb(),
    "comb(0.5,3)": BoundaryProfile.comb(0.5, 3.0, 1.0),
    "cosine(2,0.8)": BoundaryProfile.cosine(2.0, 0.8, 1.0),
    "ramp(1,3)": BoundaryProfile("piecewise_linear", 1.0, (0.0, 0.4), (1.0, 3.0)),
    "constant(1)": BoundaryProfile.constant(1.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="*", default=[1.5, 2.0, 3.0])
    ap.add_argument("--cell-k", type=int, default=32, help="cell mesh size h = L/k")
    args = ap.parse_args()
    print(f"{'profile':<15}{'p':>5}{'q_weak':>12}{'q_resonant':>12}{'q_strong':>12}{'g0/g1':>9}")
    for name, pr in PROFILES.items():
        for p in args.p:
            E = PLaplaceExponent(p)
            qr = q_resonant(pr, E, pr.period / args.cell_k).q
            print(f"{name:<15}{p:>5g}{q_weak(pr, E):>12.6f}{qr:>12.6f}{q_strong(pr):>12.6f}"
                  f"{pr.g0 / pr.g1:>9.4f}")


if __name__ == "__main__":
    main()
