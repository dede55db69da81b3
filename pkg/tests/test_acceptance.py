"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
The terminal summary lists ``criterion N [title]: PASS|FAIL``.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from thinhom.correctors import corrector, error_metrics
from thinhom.geometry import BoundaryProfile, PLaplaceExponent, ThinDomainSpec
from thinhom.homogenization import effective_coefficient, q_resonant, q_strong, q_weak
from thinhom.mesh import mesh_thin_domain, rectangle_mesh
from thinhom.plaplace import (P1Functional, assemble_jacobian, assemble_residual, energy,
                              solve_cell, solve_limit_1d, solve_neumann, FemFunction)
from thinhom.quadrature import RULE6, nodal_at_points, rule_points, rule_weights
from thinhom.sweep import ForcingSpec, RunConfig, run_sweep
from thinhom.unfolding import (derivative_exchange_check, layer_mask, matched_quadrature,
                               rescale_pi, rescaled_norm, unfold, unfold_integral_check,
                               unfold_norm_check)

from test_plaplace import linear_oracle

P_SET = (1.5, 2.0, 3.0)
ALPHA_SET = (0.5, 1.0, 2.0)
EPS = (0.1, 0.05, 0.025, 0.0125)

# 1 / (1.5 ((1 + 2^{-1/2}) / 2)^2): q_weak of the comb for p = 3
Q_WEAK_COMB_P3 = 0.9150553346869861461


def _decreasing(xs):
    return all(b < a for a, b in zip(xs, xs[1:]))


@pytest.mark.criterion(1, "constant-data exactness")
def test_constant_data_exactness():
    t0 = time.perf_counter()
    comb = BoundaryProfile.comb()
    bad = []
    for p in P_SET:
        E = PLaplaceExponent(p)
        exact = 2.0 ** (1 / (p - 1))
        for alpha in ALPHA_SET:
            spec = ThinDomainSpec(0.1, alpha, comb)
            mesh = mesh_thin_domain(spec, 0.1 ** alpha * comb.period / 8)
            q, cell = effective_coefficient(comb, E, alpha, h=comb.period / 8)
            u_eps, rep = solve_neumann(mesh, E, 2.0)
            u, rep1 = solve_limit_1d(q, E, 2.0, 256)
            m = error_metrics(spec, u_eps, u, corrector(spec.regime, u, cell, spec, E), p)
            worst = {"u_eps": np.max(np.abs(u_eps.values - exact)),
                     "u": np.max(np.abs(u.values - exact))}
            worst.update({k: v for k, v in m.as_dict().items() if v is not None and k != "w1p_norm"})
            for k, v in worst.items():
                if not v < 1e-8:
                    bad.append(f"p={p} alpha={alpha} {k}={v:.2e}")
            if not (rep.converged and rep1.converged):
                bad.append(f"p={p} alpha={alpha} not converged")
    elapsed = time.perf_counter() - t0
    assert not bad, "; ".join(bad)
    assert elapsed < 30, f"runtime {elapsed:.1f}s"


@pytest.mark.criterion(2, "closed-form coefficients")
def test_closed_form_coefficients():
    comb = BoundaryProfile.comb()
    assert abs(q_weak(comb, PLaplaceExponent(2.0)) - 8 / 9) < 1e-12
    assert abs(q_strong(comb) - 2 / 3) < 1e-12
    assert abs(q_weak(comb, PLaplaceExponent(3.0)) - Q_WEAK_COMB_P3) < 1e-12
    const = BoundaryProfile.constant(1.7, 1.0)
    for p in P_SET:
        E = PLaplaceExponent(p)
        assert abs(q_weak(const, E) - 1) < 1e-12
        assert abs(q_strong(const) - 1) < 1e-12
        assert abs(q_resonant(const, E).q - 1) < 1e-8


@pytest.mark.criterion(3, "cell problem")
def test_cell_problem():
    t0 = time.perf_counter()
    for p in P_SET:
        E = PLaplaceExponent(p)
        const = q_resonant(BoundaryProfile.constant(1.0, 1.0), E, 1 / 32)
        assert abs(const.q - 1) < 1e-8, f"p={p} constant q={const.q}"
        comb = BoundaryProfile.comb()
        qs = []
        for k in (32, 64, 128):
            cell = q_resonant(comb, E, comb.period / k)
            assert cell.report.converged
            assert cell.q > 0
            assert abs(cell.q - cell.q_energy_form) < 1e-8, f"p={p} h=L/{k}"
            qs.append(cell.q)
        assert abs(qs[2] - qs[1]) < abs(qs[1] - qs[0]), f"p={p} q={qs}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120, f"runtime {elapsed:.1f}s"


@pytest.mark.criterion(4, "strong-regime bounds")
def test_strong_bounds():
    profiles = [BoundaryProfile.comb(),
                BoundaryProfile.comb(0.5, 3.0, 1.0),
                BoundaryProfile.cosine(2.0, 0.8, 1.0),
                BoundaryProfile("piecewise_linear", 1.0, (0.0, 0.4), (1.0, 3.0)),
                BoundaryProfile("tabulated", 2.0, (0.0, 0.5, 1.2), (1.0, 1.5, 0.7))]
    for pr in profiles:
        q = q_strong(pr)
        assert pr.g0 / pr.g1 <= q < 1.0, (pr.kind, q)


@pytest.fixture(scope="module")
def sweeps():
    base = RunConfig(BoundaryProfile.comb(1.0, 2.0), 2.0, 1.0, EPS, ForcingSpec("cosine"))
    t0 = time.perf_counter()
    reports = {(p, a): run_sweep(replace(base, p=p, alpha=a), threads=1)
               for p in P_SET for a in ALPHA_SET}
    return reports, time.perf_counter() - t0


@pytest.mark.criterion(5, "convergence sweeps")
def test_convergence_sweeps(sweeps):
    reports, elapsed = sweeps
    bad = []
    for (p, a), rep in reports.items():
        tag = f"p={p:g} alpha={a:g}"
        if not rep.ok:
            bad.append(f"{tag} failed rows")
            continue
        lp = rep.column("lp_error")
        if not _decreasing(lp):
            bad.append(f"{tag} lp_error not decreasing " + "/".join(f"{v:.2e}" for v in lp))
        if not _decreasing(rep.column("corrector_error")):
            bad.append(f"{tag} corrector_error not decreasing")
        if not lp[-1] / lp[0] <= 0.5:
            bad.append(f"{tag} lp_error ratio {lp[-1] / lp[0]:.3f}")
        if a > 1 and not _decreasing(rep.column("grad_rplus_norm")):
            bad.append(f"{tag} grad_rplus_norm not decreasing")
    if elapsed > 900:
        bad.append(f"runtime {elapsed:.0f}s")
    assert not bad, "; ".join(bad)


@pytest.mark.criterion(6, "unfolding identities")
def test_unfolding_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    f = lambda x, y: np.sin(5 * x) + y
    g = lambda x, y: np.exp(x) - y
    for alpha in ALPHA_SET:
        for eps in (0.1, 0.05):
            spec = ThinDomainSpec(eps, alpha, BoundaryProfile.comb())
            mesh = mesh_thin_domain(spec, eps ** alpha * 2 / 8)
            quad = matched_quadrature(spec, mesh.h)
            a = FemFunction(mesh, rng.standard_normal(mesh.n_nodes))
            b = FemFunction(mesh, rng.standard_normal(mesh.n_nodes))
            Ta, Tb = unfold(spec, a, quad).values, unfold(spec, b, quad).values
            Tab = unfold(spec, FemFunction(mesh, 2 * a.values - 3 * b.values), quad).values
            assert np.max(np.abs(Tab - (2 * Ta - 3 * Tb))) < 1e-13 * np.max(np.abs(Tab))
            Tfg = unfold(spec, lambda x, y: f(x, y) * g(x, y), quad).values
            prod = unfold(spec, f, quad).values * unfold(spec, g, quad).values
            assert np.max(np.abs(Tfg - prod)) < 1e-13
            phi = lambda x, y: np.exp(x) * (1 + y / eps) + np.cos(np.pi * x)
            assert unfold_integral_check(spec, phi, mesh)[2] < 1e-8
            for p in P_SET:
                assert unfold_norm_check(spec, phi, mesh, p)[2] < 1e-8
                R = rescale_pi(spec, a)
                assert R.exact
                rhs = rescaled_norm(spec, a, p, layer_mask(spec, mesh))
                assert abs(R.lp_norm(p) - rhs) / rhs < 1e-12
            dphi = (lambda x, y: np.exp(x) * (1 + y / eps) - np.pi * np.sin(np.pi * x),
                    lambda x, y: np.exp(x) / eps)
            assert derivative_exchange_check(spec, phi, *dphi) < 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 30, f"runtime {elapsed:.1f}s"


def _l2_2d(u, exact):
    vals = nodal_at_points(u.mesh, u.values, RULE6)
    pts = rule_points(u.mesh, RULE6)
    return math.sqrt(np.sum(rule_weights(u.mesh, RULE6) * (vals - exact(pts[..., 0], pts[..., 1])) ** 2))


@pytest.mark.criterion(7, "solver correctness")
def test_solver_correctness():
    rng = np.random.default_rng(7)
    spec = ThinDomainSpec(0.25, 1.0, BoundaryProfile.comb())
    mesh = mesh_thin_domain(spec, 0.5 / 4)
    # residual against a finite-difference gradient of the energy
    for p in (1.5, 2.0, 3.0, 4.0):
        F = P1Functional(mesh, PLaplaceExponent(p), lambda x, y: np.cos(3 * x) + y)
        u = rng.standard_normal(mesh.n_nodes)
        r = F.residual(u, 1e-3)
        h = 1e-6 * (1 + np.max(np.abs(u)))
        idx = rng.choice(mesh.n_nodes, 20, replace=False)
        fd = np.array([(F.energy(u + h * e, 1e-3) - F.energy(u - h * e, 1e-3)) / (2 * h)
                       for e in np.eye(mesh.n_nodes)[idx]])
        assert np.linalg.norm(fd - r[idx]) / np.linalg.norm(r[idx]) < 1e-5, f"p={p}"
    # p = 2 against an independent linear assembly
    sq = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 6, 5)
    E2 = PLaplaceExponent(2.0)
    fl = lambda x: 1.0 + 2.0 * x
    K, M, load = linear_oracle(sq, fl(sq.nodes[:, 0]))
    u = FemFunction(sq, rng.standard_normal(sq.n_nodes))
    ref = (K + M) @ u.values - load
    assert np.max(np.abs(assemble_residual(sq, E2, 0.0, fl, u) - ref)) < 1e-12 * max(1, np.max(np.abs(ref)))
    assert np.max(np.abs(assemble_jacobian(sq, E2, 0.0, u).toarray() - (K + M))) < 1e-12
    e_ref = 0.5 * u.values @ (K + M) @ u.values - load @ u.values
    assert abs(energy(sq, E2, 0.0, fl, u) - e_ref) < 1e-12 * max(1, abs(e_ref))
    # uniqueness from two starting guesses
    f = lambda x: np.cos(np.pi * x)
    for p in (1.5, 3.0):
        E = PLaplaceExponent(p)
        a, _ = solve_neumann(mesh, E, f)
        b, _ = solve_neumann(mesh, E, f, u0=3 * rng.standard_normal(mesh.n_nodes))
        assert np.max(np.abs(a.values - b.values)) < 1e-8, f"p={p}"
        cm = q_resonant(BoundaryProfile.comb(), E, 2 / 8).mesh
        c1 = solve_cell(cm, E)
        c2 = solve_cell(cm, E, w0=rng.standard_normal(cm.n_nodes - len(cm.periodic_pairs)))
        assert abs(c1.q - c2.q) < 1e-8
    # manufactured solution cos(pi x): L2 rates in 1D and 2D
    fm = lambda x: (1 + np.pi ** 2) * np.cos(np.pi * x)
    errs2 = []
    for n in (8, 16, 32):
        uh, _ = solve_neumann(rectangle_mesh(0.0, 1.0, 0.0, 1.0, n, n), E2, fm)
        errs2.append(_l2_2d(uh, lambda x, y: np.cos(np.pi * x)))
    g, w = np.polynomial.legendre.leggauss(5)
    errs1 = []
    for n in (16, 32, 64, 128):
        uh, _ = solve_limit_1d(1.0, E2, fm, n)
        x = uh.mesh.nodes
        xq = (x[:-1, None] + x[1:, None]) / 2 + np.diff(x)[:, None] / 2 * g
        wq = np.diff(x)[:, None] / 2 * w
        errs1.append(math.sqrt(np.sum(wq * (uh(xq) - np.cos(np.pi * xq)) ** 2)))
    for errs in (errs1, errs2):
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates >= 1.9), rates


@pytest.mark.criterion(8, "W1p stability over eps")
def test_w1p_stability(sweeps):
    reports, _ = sweeps
    bad = []
    for (p, a), rep in reports.items():
        w = rep.column("w1p_norm")
        if not max(w) / min(w) < 2.0:
            bad.append(f"p={p:g} alpha={a:g} spread {max(w) / min(w):.2f}")
    assert not bad, "; ".join(bad)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
