"""Command-line front end: coeff, cell, solve, sweep and unfold-check."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .homogenization import closed_form_q, effective_coefficient, q_resonant
from .mesh import mesh_thin_domain, write_mesh
from .plaplace import solve_neumann
from .sweep import ConfigParseError, ConfigValidationError, emit_outputs, parse_config, run_sweep
from .unfolding import property_suite


def _write_nodal(path: Path, nodes, values, name: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"x,y,{name}\n")
        for (x, y), v in zip(nodes, values):
            fh.write(f"{x:.15e},{y:.15e},{v:.15e}\n")


def cmd_coeff(cfg, args) -> int:
    q, cell = effective_coefficient(cfg.profile, cfg.exponent, cfg.alpha, cfg.cell_h, cfg.settings)
    print(f"regime: {cfg.regime}")
    print(f"q: {q:.15g}")
    if cell is not None:
        print(f"q_energy_form: {cell.q_energy_form:.15g}")
        print(f"cell_dofs: {cell.mesh.n_nodes}")
        print(f"converged: {str(cell.report.converged).lower()}")
        return 0 if cell.report.converged else 1
    closed = closed_form_q(cfg.profile, cfg.exponent, cfg.alpha)
    print(f"q_closed_form: {closed:.15g}")
    return 0


def cmd_cell(cfg, args) -> int:
    h = cfg.cell_h if cfg.cell_h is not None else cfg.profile.period / 32
    cell = q_resonant(cfg.profile, cfg.exponent, h, cfg.settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(cell.mesh, out / "cell_mesh.txt")
    _write_nodal(out / "cell_v.csv", cell.mesh.nodes, cell.v.values, "v")
    print(f"q: {cell.q:.15g}")
    print(f"q_energy_form: {cell.q_energy_form:.15g}")
    print(f"mean(v - y1): {cell.mean_w():.3e}")
    print(f"newton iterations per delta: {cell.report.iterations}")
    return 0 if cell.report.converged else 1


def cmd_solve(cfg, args) -> int:
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon_list[0]
    spec = cfg.spec(eps)
    mesh = mesh_thin_domain(spec, cfg.mesh_h(eps))
    u, rep = solve_neumann(mesh, cfg.exponent, cfg.forcing, cfg.settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, out / "mesh.txt")
    _write_nodal(out / "solution.csv", mesh.nodes, u.values, "u")
    print(f"epsilon: {eps:.12g}  dofs: {mesh.n_nodes}")
    print(f"newton iterations per delta: {rep.iterations}")
    print(f"final residual: {rep.residual:.3e}  energy: {rep.energy:.12e}")
    print(f"converged: {str(rep.converged).lower()}")
    return 0 if rep.converged else 1


def cmd_sweep(cfg, args) -> int:
    report = run_sweep(cfg, threads=args.threads)
    files = emit_outputs(report, args.out)
    for f in files:
        print(f"wrote {f}")
    for r in report.rows:
        state = "ok" if r.converged and not r.error else f"FAILED: {r.error}"
        print(f"eps={r.epsilon:.6g} lp_error={r.lp_error} corrector_error={r.corrector_error} {state}")
    return 0 if report.ok else 1


def cmd_unfold_check(cfg, args) -> int:
    ok = True
    for eps in cfg.epsilon_list:
        for res in property_suite(cfg.spec(eps), cfg.p, args.seed):
            flag = "PASS" if res.passed else "FAIL"
            ok &= res.passed
            print(f"{flag} eps={eps:.6g} {res.name}: {res.value:.3e} (tol {res.tol:.0e})")
    return 0 if ok else 1


COMMANDS = {"coeff": cmd_coeff, "cell": cmd_cell, "solve": cmd_solve,
            "sweep": cmd_sweep, "unfold-check": cmd_unfold_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thinhom", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--out", default=None, help="output directory (default: output.dir)")
        sp.add_argument("--threads", type=int, default=None, help="worker processes for sweeps")
        sp.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
        if name == "solve":
            sp.add_argument("--epsilon", type=float, default=None,
                            help="epsilon to solve for (default: first in the list)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except (ConfigParseError, ConfigValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    args.seed = cfg.seed
    if args.threads is None:
        args.threads = cfg.threads
    if args.out is None:
        args.out = cfg.out_dir
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
