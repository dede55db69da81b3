"""P1 finite elements for the regularized Neumann p-Laplacian.

The discrete problems minimize

    E(u) = sum_T |T| Phi(grad u + shift) + m * int Psi(u) - int f u,

with Phi(s) = (delta^2 + |s|^2)^(p/2) / p and
Psi(u) = ((delta^2 + u^2)^(p/2) - delta^p) / p, so that the residual is
the Euler-Lagrange form of the variational problem with the regularized
flux (delta^2 + |s|^2)^((p-2)/2) s.  Gradient terms are exact for P1, the
zeroth-order and load terms use the 3-point interior rule per triangle.
"""
from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import PLaplaceExponent
from .mesh import IntervalMesh, TriangleMesh, mesh_interval
from .quadrature import RULE3

QUAD_BARY = RULE3.bary
QUAD_WEIGHTS = RULE3.weights
# outer products of the basis values at each quadrature point, (3, 9)
_OUTER = np.einsum("qi,qj->qij", QUAD_BARY, QUAD_BARY).reshape(3, 9)

# 2-point Gauss rule on the reference interval [0, 1]
_G2 = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])
_G2W = np.array([0.5, 0.5])


class SingularFlux(ValueError):
    pass


class SingularJacobian(RuntimeError):
    pass


@dataclass
class SolverSettings:
    delta_schedule: tuple = tuple(10.0 ** -k for k in range(1, 11))
    newton_rtol: float = 1e-10
    newton_atol: float = 1e-12
    max_newton: int = 50
    backtrack: float = 0.5
    armijo: float = 1e-4
    # tolerance used on all but the last delta stage
    stage_rtol: float = 1e-6

    def __post_init__(self):
        d = np.asarray(self.delta_schedule, dtype=float)
        if len(d) == 0 or np.any(d <= 0) or np.any(np.diff(d) >= 0):
            raise ValueError("delta_schedule must be strictly decreasing and positive")
        self.delta_schedule = tuple(float(x) for x in d)


@dataclass
class NonlinearReport:
    iterations: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    residual: float = math.inf
    energy: float = math.nan
    converged: bool = False
    # final stage stopped because the Newton step fell to roundoff in u
    roundoff_floor: bool = False

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))


# --------------------------------------------------------------------------
# pointwise flux algebra

def flux(exponent: PLaplaceExponent, delta: float, s):
    """(delta^2 + |s|^2)^((p-2)/2) s for one vector or an (..., 2) array."""
    s = np.asarray(s, dtype=float)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    r2 = delta ** 2 + np.sum(s * s, axis=-1)
    if delta == 0 and exponent.p < 2 and np.any(r2 == 0):
        raise SingularFlux("a_p(0) is singular for p < 2")
    return _flux_factor(r2, exponent.p)[..., None] * s


def a_p(s, p: float):
    """|s|^(p-2) s (componentwise for scalars, Euclidean norm for vectors)."""
    s = np.asarray(s, dtype=float)
    if s.ndim and s.shape[-1] == 2:
        return _flux_factor(np.sum(s * s, axis=-1), p)[..., None] * s
    return _flux_factor(s * s, p) * s


def _flux_factor(r2, p):
    # continuous extension r2^((p-2)/2) * s -> 0 at s = 0 (also for p < 2)
    r2 = np.asarray(r2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r2 > 0, r2 ** ((p - 2) / 2), 1.0 if p == 2 else 0.0)
    return out


def _flux_jacobian_factors(r2, p):
    """Return (c1, c2) with d flux/ds = c1 I + c2 s s^T."""
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.where(r2 > 0, r2 ** ((p - 2) / 2), 1.0 if p == 2 else (0.0 if p > 2 else np.inf))
        c2 = np.where(r2 > 0, (p - 2) * r2 ** ((p - 4) / 2), 0.0)
    return c1, c2


# --------------------------------------------------------------------------
# discrete functions

class DofMap:
    """Node -> degree of freedom map folding periodic pairs into one unknown."""

    def __init__(self, mesh: TriangleMesh):
        n = mesh.n_nodes
        target = np.arange(n)
        pairs = mesh.periodic_pairs
        if len(pairs):
            target[pairs[:, 1]] = pairs[:, 0]
        uniq, node_to_dof = np.unique(target, return_inverse=True)
        self.node_to_dof = node_to_dof
        self.n_dofs = len(uniq)

    def fold(self, nodal):
        return np.bincount(self.node_to_dof, weights=nodal, minlength=self.n_dofs)


class FemFunction:
    """Continuous P1 field on a triangle mesh (nodal values)."""

    def __init__(self, mesh: TriangleMesh, values):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (mesh.n_nodes,):
            raise ValueError("one value per mesh node expected")

    def gradients(self) -> np.ndarray:
        """Constant element gradients, shape (M, 2)."""
        return np.einsum("eia,ei->ea", self.mesh.basis_gradients,
                         self.values[self.mesh.elements])

    def at_quadrature(self) -> np.ndarray:
        """Values at the 3 interior quadrature points of every element, shape (M, 3)."""
        return self.values[self.mesh.elements] @ QUAD_BARY.T

    def __call__(self, x, y):
        pts = np.column_stack([np.ravel(x), np.ravel(y)])
        e, lam = self.mesh.locator.locate(pts)
        vals = np.sum(lam * self.values[self.mesh.elements[e]], axis=1)
        return vals.reshape(np.shape(x)) if np.ndim(x) else float(vals[0])

    @classmethod
    def interpolate(cls, mesh: TriangleMesh, fn) -> "FemFunction":
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        return cls(mesh, np.broadcast_to(_call_xy(fn, x, y), x.shape).copy())


def quadrature_points(mesh: TriangleMesh) -> np.ndarray:
    """Physical coordinates of the 3-point rule, shape (M, 3, 2)."""
    return np.einsum("qi,eia->eqa", QUAD_BARY, mesh.nodes[mesh.elements])


def _takes_y(fn) -> bool:
    try:
        params = [p for p in inspect.signature(fn).parameters.values()
                  if p.default is inspect.Parameter.empty
                  and p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
    except (TypeError, ValueError):
        return False
    return len(params) >= 2


def _call_xy(fn, x, y):
    if _takes_y(fn):
        return np.asarray(fn(x, y), dtype=float)
    return np.asarray(fn(x), dtype=float)


def forcing_at_quadrature(mesh: TriangleMesh, f) -> np.ndarray:
    """Evaluate a forcing (None, scalar, FemFunction, f(x) or f(x, y)) at quadrature points."""
    shape = (mesh.n_elements, 3)
    if f is None:
        return np.zeros(shape)
    if isinstance(f, FemFunction):
        if f.mesh is mesh:
            return f.at_quadrature()
        q = quadrature_points(mesh)
        return f(q[..., 0], q[..., 1])
    if np.isscalar(f):
        return np.full(shape, float(f))
    q = quadrature_points(mesh)
    return np.broadcast_to(_call_xy(f, q[..., 0], q[..., 1]), shape).astype(float)


# --------------------------------------------------------------------------
# assembly

class P1Functional:
    """Energy, residual and Jacobian of the regularized p-Laplace functional on a mesh."""

    def __init__(self, mesh: TriangleMesh, exponent: PLaplaceExponent, f=None,
                 mass: float = 1.0, shift=(0.0, 0.0), periodic: bool = False):
        self.mesh = mesh
        self.p = exponent.p
        self.exponent = exponent
        self.mass = mass
        self.shift = np.asarray(shift, dtype=float)
        self.dofs = DofMap(mesh) if periodic else None
        self.n = self.dofs.n_dofs if periodic else mesh.n_nodes
        self.edofs = mesh.elements if not periodic else self.dofs.node_to_dof[mesh.elements]
        self.area = mesh.signed_areas
        self.G = mesh.basis_gradients
        fq = forcing_at_quadrature(mesh, f)
        self.load = self._scatter((self.area[:, None] * (fq * QUAD_WEIGHTS) @ QUAD_BARY))
        self._pattern = None
        # element stiffness |T| G G^T, fixed for the mesh
        self._stiff = self.area[:, None, None] * np.einsum("eia,eja->eij", self.G, self.G)

    # nodal <-> dof
    def to_nodal(self, u):
        return u if self.dofs is None else u[self.dofs.node_to_dof]

    def _scatter(self, local):
        return np.bincount(self.edofs.ravel(), weights=local.ravel(), minlength=self.n)

    def _grad(self, u):
        return np.einsum("eia,ei->ea", self.G, u[self.edofs]) + self.shift

    def _quad(self, u):
        return u[self.edofs] @ QUAD_BARY.T

    def energy(self, u, delta):
        p = self.p
        s = self._grad(u)
        grad_term = np.dot(self.area, (delta ** 2 + np.sum(s * s, axis=1)) ** (p / 2)) / p
        total = grad_term - np.dot(self.load, u)
        if self.mass:
            uq = self._quad(u)
            psi = ((delta ** 2 + uq * uq) ** (p / 2) - delta ** p) / p
            total += self.mass * np.dot(self.area, psi @ QUAD_WEIGHTS)
        return float(total)

    def residual(self, u, delta):
        s = self._grad(u)
        fl = _flux_factor(delta ** 2 + np.sum(s * s, axis=1), self.p)[:, None] * s
        local = self.area[:, None] * np.einsum("eia,ea->ei", self.G, fl)
        if self.mass:
            uq = self._quad(u)
            m = _flux_factor(delta ** 2 + uq * uq, self.p) * uq
            local += self.mass * self.area[:, None] * ((m * QUAD_WEIGHTS) @ QUAD_BARY)
        return self._scatter(local) - self.load

    def jacobian(self, u, delta):
        if delta == 0 and self.p < 2:
            raise SingularJacobian("the Jacobian needs delta > 0 when p < 2")
        s = self._grad(u)
        r2 = delta ** 2 + np.sum(s * s, axis=1)
        c1, c2 = _flux_jacobian_factors(r2, self.p)
        Gs = np.einsum("eia,ea->ei", self.G, s)
        local = c1[:, None, None] * self._stiff
        local += (c2 * self.area)[:, None, None] * Gs[:, :, None] * Gs[:, None, :]
        if self.mass:
            uq = self._quad(u)
            u2 = uq * uq
            with np.errstate(divide="ignore", invalid="ignore"):
                d2 = delta ** 2 + u2
                dm = np.where(d2 > 0, d2 ** ((self.p - 4) / 2) * (delta ** 2 + (self.p - 1) * u2),
                              1.0 if self.p == 2 else 0.0)
            w = self.mass * self.area[:, None] * dm * QUAD_WEIGHTS
            local += (w @ _OUTER).reshape(-1, 3, 3)
        return self._assemble_matrix(local)

    def _assemble_matrix(self, local):
        if self._pattern is None:
            rows = np.repeat(self.edofs, 3, axis=1).ravel()
            cols = np.tile(self.edofs, (1, 3)).ravel()
            keys = rows * self.n + cols
            uniq, inv = np.unique(keys, return_inverse=True)
            r, c = uniq // self.n, uniq % self.n
            indptr = np.searchsorted(r, np.arange(self.n + 1))
            self._pattern = (inv, c.astype(np.int32), indptr.astype(np.int32), len(uniq))
        inv, indices, indptr, nnz = self._pattern
        data = np.bincount(inv, weights=local.ravel(), minlength=nnz)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n, self.n))

    def mean_functional(self):
        """Vector B with B.u = integral of u."""
        return self._scatter(np.repeat(self.area[:, None] / 3, 3, axis=1))


def energy(mesh, exponent, delta, f, u: FemFunction) -> float:
    return P1Functional(mesh, exponent, f).energy(u.values, delta)


def assemble_residual(mesh, exponent, delta, f, u: FemFunction) -> np.ndarray:
    return P1Functional(mesh, exponent, f).residual(u.values, delta)


def assemble_jacobian(mesh, exponent, delta, u: FemFunction) -> sp.csr_matrix:
    return P1Functional(mesh, exponent).jacobian(u.values, delta)


# --------------------------------------------------------------------------
# Newton with delta-continuation

def _factor_solve(J, rhs):
    try:
        lu = spla.splu(J.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularJacobian(str(exc)) from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularJacobian("non-finite Newton step")
    return x


_EPS = np.finfo(float).eps


def newton_continuation(problem, u0, settings: SolverSettings, solve=None):
    """Minimize ``problem.energy`` along the delta schedule by damped Newton.

    ``problem`` exposes energy(u, d), residual(u, d), jacobian(u, d).
    ``solve(J, r, u)`` returns the Newton step; defaults to a sparse LU solve
    of J step = -r.
    """
    if solve is None:
        solve = lambda J, r, u: _factor_solve(J, -r)
    report = NonlinearReport()
    u = np.array(u0, dtype=float)
    sched = settings.delta_schedule
    # tolerance reference independent of the starting guess
    ref = max(np.linalg.norm(problem.load) if hasattr(problem, "load") else 0.0,
              np.linalg.norm(problem.residual(np.zeros_like(u), sched[0])))
    nr = math.inf
    for stage, d in enumerate(sched):
        last = stage == len(sched) - 1
        tol = (settings.newton_rtol if last else settings.stage_rtol) * ref + settings.newton_atol
        its = 0
        floor = False
        energies = [problem.energy(u, d)]
        r = problem.residual(u, d)
        nr = np.linalg.norm(r)
        while nr > tol and its < settings.max_newton:
            step = solve(problem.jacobian(u, d), r, u)
            if np.max(np.abs(step)) <= 8 * _EPS * max(1.0, np.max(np.abs(u))):
                floor = True
                break
            E0 = energies[-1]
            slope = float(np.dot(r, step))
            t = 1.0
            accepted = False
            while t > 1e-12:
                un = u + t * step
                En = problem.energy(un, d)
                if En <= E0 + settings.armijo * t * slope + 1e-13 * abs(E0):
                    accepted = True
                    break
                t *= settings.backtrack
            if not accepted:
                break
            # the energy is convex along the step: keep shrinking while it still
            # decreases (Newton overshoots badly where the flux degenerates, p < 2)
            while t > 1e-12:
                Et = problem.energy(u + t * settings.backtrack * step, d)
                if not Et < En - 1e-13 * abs(En):
                    break
                t *= settings.backtrack
                un, En = u + t * step, Et
            u = un
            energies.append(En)
            its += 1
            r = problem.residual(u, d)
            nr = np.linalg.norm(r)
        report.iterations.append(its)
        report.energies.append(energies)
    report.residual = float(nr)
    report.energy = float(report.energies[-1][-1])
    report.roundoff_floor = floor
    report.converged = bool(nr <= settings.newton_rtol * ref + settings.newton_atol or floor)
    return u, report


def solve_neumann(mesh: TriangleMesh, exponent: PLaplaceExponent, f,
                  settings: Optional[SolverSettings] = None, u0=None):
    """Solve the Neumann p-Laplace problem -div a(grad u) + |u|^{p-2} u = f."""
    settings = settings or SolverSettings()
    prob = P1Functional(mesh, exponent, f)
    start = np.zeros(mesh.n_nodes) if u0 is None else np.asarray(
        u0.values if isinstance(u0, FemFunction) else u0, dtype=float)
    u, report = newton_continuation(prob, start, settings)
    return FemFunction(mesh, u), report


# --------------------------------------------------------------------------
# periodic cell problem

@dataclass
class CellSolution:
    """Cell corrector v = y1 + w on Y* and the resonant coefficient q."""
    w: FemFunction
    q: float
    q_energy_form: float
    area: float
    exponent: PLaplaceExponent
    report: NonlinearReport

    @property
    def mesh(self) -> TriangleMesh:
        return self.w.mesh

    @property
    def v(self) -> FemFunction:
        return FemFunction(self.mesh, self.w.values + self.mesh.nodes[:, 0])

    def grad_v(self) -> np.ndarray:
        return self.w.gradients() + np.array([1.0, 0.0])

    def mean_w(self) -> float:
        return float(np.dot(self.mesh.signed_areas, self.w.at_quadrature() @ QUAD_WEIGHTS)
                     / self.area)


def solve_cell(mesh: TriangleMesh, exponent: PLaplaceExponent,
               settings: Optional[SolverSettings] = None, w0=None) -> CellSolution:
    """Periodic zero-average cell problem for w = v - y1 on a periodic Y* mesh."""
    if not len(mesh.periodic_pairs):
        raise ValueError("the cell problem needs a mesh with periodic pairs")
    settings = settings or SolverSettings()
    prob = P1Functional(mesh, exponent, None, mass=0.0, shift=(1.0, 0.0), periodic=True)
    B = prob.mean_functional()
    area = mesh.area
    if w0 is None:
        start = np.zeros(prob.n)
    else:
        start = np.asarray(w0, dtype=float)
        start = start - np.dot(B, start) / area

    def saddle(J, r, u):
        K = sp.bmat([[J, sp.csr_matrix(B[:, None])], [sp.csr_matrix(B[None, :]), None]],
                     format="csc")
        rhs = np.concatenate([-r, [-np.dot(B, u)]])
        return _factor_solve(K, rhs)[:-1]

    w, report = newton_continuation(prob, start, settings, solve=saddle)
    wf = FemFunction(mesh, prob.to_nodal(w))
    grad_v = wf.gradients() + np.array([1.0, 0.0])
    A = mesh.signed_areas
    q = float(np.dot(A, a_p(grad_v, exponent.p)[:, 0]) / area)
    q_energy = float(np.dot(A, np.sum(grad_v ** 2, axis=1) ** (exponent.p / 2)) / area)
    return CellSolution(wf, q, q_energy, area, exponent, report)


# --------------------------------------------------------------------------
# one-dimensional limit problem

class IntervalFunction:
    """Continuous P1 function on an interval mesh of [0, 1]."""

    def __init__(self, mesh: IntervalMesh, values):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.values)

    def derivative(self, x=None):
        """Elementwise-constant derivative (per element, or evaluated at ``x``)."""
        slopes = np.diff(self.values) / np.diff(self.mesh.nodes)
        if x is None:
            return slopes
        idx = np.clip(np.searchsorted(self.mesh.nodes, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]


class _Functional1D:
    def __init__(self, mesh: IntervalMesh, q: float, exponent, fbar):
        self.x = mesh.nodes
        self.hs = np.diff(self.x)
        self.q = q
        self.p = exponent.p
        n = len(self.x)
        # 3-point Gauss for the load
        g3 = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
        w3 = np.array([5, 8, 5]) / 18
        xq = self.x[:-1, None] + self.hs[:, None] * g3
        if fbar is None:
            fq = np.zeros_like(xq)
        elif np.isscalar(fbar):
            fq = np.full_like(xq, float(fbar))
        else:
            fq = np.broadcast_to(np.asarray(fbar(xq), dtype=float), xq.shape)
        wf = self.hs[:, None] * w3 * fq
        self.load = np.zeros(n)
        np.add.at(self.load, np.arange(n - 1), wf @ (1 - g3))
        np.add.at(self.load, np.arange(1, n), wf @ g3)
        self.B = np.stack([1 - _G2, _G2], axis=1)  # basis at Gauss points (2, 2)

    def _parts(self, u):
        du = np.diff(u) / self.hs
        uq = u[:-1, None] * self.B[:, 0] + u[1:, None] * self.B[:, 1]
        return du, uq

    def energy(self, u, d):
        p = self.p
        du, uq = self._parts(u)
        e = self.q * np.dot(self.hs, (d * d + du * du) ** (p / 2)) / p
        psi = ((d * d + uq * uq) ** (p / 2) - d ** p) / p
        e += np.dot(self.hs, psi @ _G2W)
        return float(e - np.dot(self.load, u))

    def residual(self, u, d):
        du, uq = self._parts(u)
        fl = self.q * _flux_factor(d * d + du * du, self.p) * du
        m = _flux_factor(d * d + uq * uq, self.p) * uq
        mw = self.hs[:, None] * m * _G2W
        r = np.zeros_like(u)
        r[:-1] += -fl + mw @ self.B[:, 0]
        r[1:] += fl + mw @ self.B[:, 1]
        return r - self.load

    def jacobian(self, u, d):
        p = self.p
        du, uq = self._parts(u)
        r2 = d * d + du * du
        c1, c2 = _flux_jacobian_factors(r2, p)
        k = self.q * (c1 + c2 * du * du) / self.hs
        u2 = uq * uq
        with np.errstate(divide="ignore", invalid="ignore"):
            dm = np.where(d * d + u2 > 0, (d * d + u2) ** ((p - 4) / 2) * (d * d + (p - 1) * u2),
                          1.0 if p == 2 else 0.0)
        w = self.hs[:, None] * dm * _G2W
        m00 = w @ (self.B[:, 0] ** 2)
        m11 = w @ (self.B[:, 1] ** 2)
        m01 = w @ (self.B[:, 0] * self.B[:, 1])
        n = len(u)
        diag = np.zeros(n)
        diag[:-1] += k + m00
        diag[1:] += k + m11
        off = -k + m01
        return diag, off


def _solve_tridiag(J, r, u):
    diag, off = J
    ab = np.zeros((2, len(diag)))
    ab[0, 1:] = off
    ab[1] = diag
    try:
        return scipy.linalg.solveh_banded(ab, -r)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc


def solve_limit_1d(q: float, exponent: PLaplaceExponent, fbar, n: int,
                   settings: Optional[SolverSettings] = None, u0=None):
    """Solve -q (|u'|^{p-2} u')' + |u|^{p-2} u = fbar on (0, 1) with natural BCs."""
    if not q > 0:
        raise ValueError("q must be positive")
    settings = settings or SolverSettings()
    mesh = mesh_interval(n)
    prob = _Functional1D(mesh, q, exponent, fbar)
    start = np.zeros(n + 1) if u0 is None else np.asarray(u0, dtype=float)
    u, report = newton_continuation(prob, start, settings, solve=_solve_tridiag)
    return IntervalFunction(mesh, u), report
