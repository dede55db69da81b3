import numpy as np
import pytest
from hypothesis import given
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from thinhom.correctors import MissingCellSolution, average_V, corrector, error_metrics
from thinhom.geometry import BoundaryProfile, PLaplaceExponent, ThinDomainSpec, eval_profile, mean_over_period
from thinhom.homogenization import q_resonant
from thinhom.mesh import mesh_interval, mesh_thin_domain
from thinhom.plaplace import FemFunction, IntervalFunction, solve_limit_1d, solve_neumann


def _u(values_fn, n=64):
    m = mesh_interval(n)
    return IntervalFunction(m, values_fn(m.nodes))


def _mesh(spec, k=8):
    return mesh_thin_domain(spec, spec.period_length / k)


def test_resonant_constant_profile_gives_plain_derivative():
    prof = BoundaryProfile.constant(1.0, 1.0)
    spec = ThinDomainSpec(0.1, 1.0, prof)
    cell = q_resonant(prof, PLaplaceExponent(2.0), 1 / 16)
    u = _u(lambda x: np.sin(2 * x))
    W = corrector("resonant", u, cell, spec)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 1, 500), rng.uniform(0, 0.1, 500)
    out = W(x, y)
    assert np.allclose(out[:, 0], u.derivative(x), atol=1e-9)
    assert np.allclose(out[:, 1], 0.0, atol=1e-9)


def test_weak_comb_p2_closed_form(comb):
    spec = ThinDomainSpec(0.1, 0.5, comb)
    u = _u(lambda x: np.cos(np.pi * x))
    W = corrector("weak", u, None, spec, PLaplaceExponent(2.0))
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, 1000)
    y = rng.uniform(0, 0.1, 1000)
    g = eval_profile(comb, x / spec.epsilon ** 0.5)
    expect = np.where(g == 1.0, u.derivative(x) / 0.75, u.derivative(x) / 1.5)
    out = W(x, y)
    assert np.max(np.abs(out[:, 0] - expect)) < 1e-14
    assert np.all(out[:, 1] == 0.0)


@given(p=st.floats(1.2, 5.0), seed=st.integers(0, 1000))
def test_weak_formula_audit(p, seed):
    prof = BoundaryProfile("piecewise_linear", 1.0, (0.0, 0.3), (1.0, 2.5))
    spec = ThinDomainSpec(0.2, 0.5, prof)
    u = _u(lambda x: x ** 2 - np.sin(x))
    E = PLaplaceExponent(p)
    W = corrector("weak", u, None, spec, E)
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, 1, 1000), rng.uniform(0, 0.2, 1000)
    e = E.p_conj - 1
    mean = mean_over_period(prof, lambda t: t ** (-e))
    g = eval_profile(prof, x / spec.epsilon ** 0.5)
    assert np.allclose(W(x, y)[:, 0], u.derivative(x) / (g ** e * mean), rtol=1e-12)


def test_strong_corrector(comb):
    spec = ThinDomainSpec(0.1, 2.0, comb)
    u = _u(lambda x: np.cos(np.pi * x))
    W = corrector("strong", u, None, spec)
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, 1000)
    y = rng.uniform(0, 0.2, 1000)
    out = W(x, y)
    below = y <= 0.1
    assert np.allclose(out[below, 0], u.derivative(x[below]))
    assert np.all(out[~below] == 0.0)
    assert np.all(out[:, 1] == 0.0)


def test_resonant_audit_against_cell_gradient(comb):
    spec = ThinDomainSpec(0.05, 1.0, comb)
    cell = q_resonant(comb, PLaplaceExponent(3.0), 2 / 16)
    u = _u(lambda x: np.exp(x))
    W = corrector("resonant", u, cell, spec)
    rng = np.random.default_rng(3)
    # points at centroids of cell elements mapped into random periods
    k = rng.integers(0, 10, 300)
    e = rng.integers(0, cell.mesh.n_elements, 300)
    c = cell.mesh.centroids[e]
    x = spec.epsilon * (k * comb.period + c[:, 0])
    y = spec.epsilon * c[:, 1]
    expect = u.derivative(x)[:, None] * cell.grad_v()[e]
    assert np.allclose(W(x, y), expect, rtol=1e-10, atol=1e-12)


def test_missing_cell(comb):
    spec = ThinDomainSpec(0.1, 1.0, comb)
    with pytest.raises(MissingCellSolution):
        corrector("resonant", _u(np.cos), None, spec)
    with pytest.raises(ValueError):
        corrector("other", _u(np.cos), None, spec)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_average_V_examples(alpha, comb):
    spec = ThinDomainSpec(0.1, alpha, comb)
    mesh = _mesh(spec)
    x = np.linspace(0, 1, 301)
    V = average_V(spec, FemFunction(mesh, np.full(mesh.n_nodes, 4.0)))
    assert np.allclose(V(x), 4.0, atol=1e-13)
    V = average_V(spec, FemFunction.interpolate(mesh, lambda x, y: x))
    assert np.allclose(V(x), x, atol=1e-13)
    V = average_V(spec, FemFunction.interpolate(mesh, lambda x, y: y))
    assert np.allclose(V(x), 0.1 * 1.0 / 2, atol=1e-14)
    # random P1 data against dense vertical sampling
    rng = np.random.default_rng(4)
    phi = FemFunction(mesh, rng.standard_normal(mesh.n_nodes))
    V = average_V(spec, phi)
    xs = rng.uniform(0.01, 0.99, 5)
    ys = np.linspace(0, 0.1, 20001)
    for xi in xs:
        dense = trapezoid(phi(np.full_like(ys, xi), ys), ys) / 0.1
        assert abs(V(xi) - dense) < 1e-6


def test_metrics_vanish_for_exact_data(comb):
    spec = ThinDomainSpec(0.1, 2.0, comb)
    mesh = _mesh(spec)
    u = _u(lambda x: np.full_like(x, 1.7))
    uf = FemFunction(mesh, np.full(mesh.n_nodes, 1.7))
    m = error_metrics(spec, uf, u, corrector("strong", u, None, spec), 2.0)
    for v in (m.lp_error, m.corrector_error, m.v_average_error, m.grad_rminus_error, m.grad_rplus_norm):
        assert v < 1e-13
    # forced u_eps = u for a linear u, represented exactly on both meshes
    u = _u(lambda x: 2 * x - 1)
    uf = FemFunction.interpolate(mesh, lambda x, y: 2 * x - 1)
    m = error_metrics(spec, uf, u, corrector("strong", u, None, spec), 2.0)
    assert m.lp_error < 1e-14 and m.v_average_error < 1e-13
    # and for a smooth u up to the interpolation difference
    ufn = lambda x: np.cos(np.pi * x)
    n = 4096
    u = _u(ufn, n)
    uf = FemFunction(mesh, np.interp(mesh.nodes[:, 0], u.mesh.nodes, u.values))
    m = error_metrics(spec, uf, u, corrector("strong", u, None, spec), 2.0)
    assert m.lp_error < 1e-4 and m.v_average_error < 1e-4
    assert all(v >= 0 for v in m.as_dict().values() if v is not None)


@pytest.mark.parametrize("p", [1.5, 3.0])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_constant_forcing_all_metrics_zero(p, alpha, comb):
    spec = ThinDomainSpec(0.1, alpha, comb)
    mesh = _mesh(spec)
    E = PLaplaceExponent(p)
    uf, rep = solve_neumann(mesh, E, 2.0)
    u, _ = solve_limit_1d(1.0, E, 2.0, 64)
    cell = q_resonant(comb, E, 2 / 8) if alpha == 1.0 else None
    W = corrector(spec.regime, u, cell, spec, E)
    m = error_metrics(spec, uf, u, W, p)
    for k, v in m.as_dict().items():
        if v is not None and k != "w1p_norm":
            assert v < 1e-8, k


def test_corrector_error_decreases_constant_profile():
    prof = BoundaryProfile.constant(1.0, 1.0)
    E = PLaplaceExponent(2.0)
    cell = q_resonant(prof, E, 1 / 8)
    f = lambda x: np.cos(np.pi * x)
    u, _ = solve_limit_1d(cell.q, E, f, 4096)
    errs = []
    for eps in (0.1, 0.05, 0.025):
        spec = ThinDomainSpec(eps, 1.0, prof)
        uf, _ = solve_neumann(_mesh(spec), E, f)
        errs.append(error_metrics(spec, uf, u, corrector("resonant", u, cell, spec), 2.0).corrector_error)
    assert errs[0] > errs[1] > errs[2]
