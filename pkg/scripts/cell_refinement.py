"""Cell coefficient q under refinement h = L/k, with a Richardson estimate of the limit.

Prints q, the energy-form q and their difference for each h, the observed
order from the last three levels and the extrapolated value.
"""
import argparse
import math
import time

from thinhom.geometry import BoundaryProfile, PLaplaceExponent
from thinhom.homogenization import q_resonant


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="*", default=[1.5, 2.0, 3.0])
    ap.add_argument("--levels", type=int, nargs="*", default=[16, 32, 64, 128])
    args = ap.parse_args()
    comb = BoundaryProfile.comb()
    for p in args.p:
        E = PLaplaceExponent(p)
        qs = []
        for k in args.levels:
            t0 = time.perf_counter()
            cell = q_resonant(comb, E, comb.period / k)
            qs.append(cell.q)
            print(f"p={p:g} h=L/{k:<4d} q={cell.q:.12f} q_energy={cell.q_energy_form:.12f} "
                  f"diff={abs(cell.q - cell.q_energy_form):.1e} [{time.perf_counter() - t0:.1f}s]")
        if len(qs) >= 3:
            q1, q2, q3 = qs[-3:]
            ratio = (q1 - q2) / (q2 - q3)
            q_ext = q3 - (q2 - q3) / (ratio - 1)
            print(f"p={p:g} observed order {math.log2(abs(ratio)):.2f}  extrapolated q={q_ext:.10f}  "
                  f"estimate {abs(q_ext - q3):.1e}")


if __name__ == "__main__":
    main()
