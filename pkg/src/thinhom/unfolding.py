"""Sampled unfolding operator, the layer rescaling and rescaled Lebesgue norms.

The unfolding of phi on R^eps is constant in x on every full period cell
[k L eps^a, (k+1) L eps^a) and vanishes on the leftover piece Lambda_eps, so
it is stored as one Y*-quadrature sample vector per cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .geometry import CellGeometry, ThinDomainSpec, partition
from .mesh import TriangleMesh, grading, mesh_cell, mesh_thin_domain, rectangle_mesh
from .plaplace import FemFunction, _call_xy
from .quadrature import RULE3, RULE6, TriangleRule, rule_points, rule_weights, nodal_at_points


@dataclass(frozen=True)
class CellQuadrature:
    """Quadrature on Y*: points (nq, 2) and weights (nq,) summing to |Y*|."""
    points: np.ndarray
    weights: np.ndarray

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


def cell_quadrature(profile, h: float, rule: TriangleRule = RULE3,
                    grade_hmin: Optional[float] = None) -> CellQuadrature:
    """Per-triangle rule on a mesh of Y* with size ``h`` (cell units)."""
    mesh = mesh_cell(CellGeometry("Y*", profile), h, periodic=False, grade_hmin=grade_hmin)
    return CellQuadrature(rule_points(mesh, rule).reshape(-1, 2), rule_weights(mesh, rule).ravel())


def matched_quadrature(spec: ThinDomainSpec, h: float, rule: TriangleRule = RULE3) -> CellQuadrature:
    """Y* rule whose image in every cell coincides with the rule on ``mesh_thin_domain(spec, h)``."""
    return cell_quadrature(spec.profile, h / spec.epsilon ** spec.alpha, rule, grading(spec, h))


@dataclass
class UnfoldedField:
    """Samples of the unfolded function: ``values[k, j]`` at cell k and Y* point j."""
    spec: ThinDomainSpec
    quad: CellQuadrature
    values: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    def integral(self) -> float:
        """Integral over (0, 1) x Y* (Lambda_eps contributes nothing)."""
        cell = self.spec.period_length
        return float(cell * np.sum(self.values @ self.quad.weights))

    def lp_norm(self, p: float) -> float:
        cell = self.spec.period_length
        return float((cell * np.sum(np.abs(self.values) ** p @ self.quad.weights)) ** (1 / p))

    def lp_distance(self, other: Callable, p: float) -> float:
        """L^p((0,1) x Y*) distance to a function psi(y1, y2) independent of x.

        Over Lambda_eps the unfolding is 0, so |psi|^p is integrated there.
        """
        part = partition(self.spec)
        target = np.asarray(other(self.quad.points[:, 0], self.quad.points[:, 1]), dtype=float)
        diff = np.abs(self.values - target[None, :]) ** p @ self.quad.weights
        total = self.spec.period_length * np.sum(diff)
        total += (1.0 - part.lambda_start) * np.dot(np.abs(target) ** p, self.quad.weights)
        return float(total ** (1 / p))


def sample_points(spec: ThinDomainSpec, quad: CellQuadrature) -> np.ndarray:
    """Physical points (eps^a (k L + y1), eps y2), shape (n_cells, nq, 2)."""
    part = partition(spec)
    ea = spec.epsilon ** spec.alpha
    x = part.cell_origins[:, None] + ea * quad.points[None, :, 0]
    y = np.broadcast_to(spec.epsilon * quad.points[None, :, 1], x.shape)
    return np.stack([x, y], axis=-1)


def unfold(spec: ThinDomainSpec, phi: Union[FemFunction, Callable],
           quad: Optional[CellQuadrature] = None) -> UnfoldedField:
    """Sample phi(eps^a k L + eps^a y1, eps y2) on every full cell."""
    if quad is None:
        quad = cell_quadrature(spec.profile, spec.profile.period / 16)
    pts = sample_points(spec, quad)
    x, y = pts[..., 0], pts[..., 1]
    if isinstance(phi, FemFunction):
        vals = phi(x, y)
    else:
        vals = np.broadcast_to(_call_xy(phi, x, y), x.shape)
    return UnfoldedField(spec, quad, np.array(vals, dtype=float))


def _cell_mask(spec: ThinDomainSpec, mesh: TriangleMesh) -> np.ndarray:
    """Elements of R_0^eps, the part of R^eps over the full cells."""
    part = partition(spec)
    return mesh.centroids[:, 0] < part.lambda_start


def mesh_integral(mesh: TriangleMesh, phi, mask=None, rule: TriangleRule = RULE3,
                  power: Optional[float] = None) -> float:
    """Integral of phi (or |phi|^power) over the masked elements."""
    if isinstance(phi, FemFunction):
        vals = nodal_at_points(mesh, phi.values, rule)
    else:
        pts = rule_points(mesh, rule)
        vals = np.broadcast_to(_call_xy(phi, pts[..., 0], pts[..., 1]), pts.shape[:2])
    if power is not None:
        vals = np.abs(vals) ** power
    w = rule_weights(mesh, rule)
    if mask is not None:
        w = w[mask]
        vals = vals[mask]
    return float(np.sum(w * vals))


def unfold_integral_check(spec: ThinDomainSpec, phi, mesh: TriangleMesh,
                          quad: Optional[CellQuadrature] = None, rule: TriangleRule = RULE3):
    """Return (lhs, rhs, |lhs - rhs|) for (1/L) int T phi versus (1/eps) int_{R_0} phi."""
    if quad is None:
        quad = matched_quadrature(spec, mesh.h, rule)
    lhs = unfold(spec, phi, quad).integral() / spec.profile.period
    rhs = mesh_integral(mesh, phi, _cell_mask(spec, mesh), rule) / spec.epsilon
    return lhs, rhs, abs(lhs - rhs)


def unfold_norm_check(spec: ThinDomainSpec, phi, mesh: TriangleMesh, p: float,
                      quad: Optional[CellQuadrature] = None, rule: TriangleRule = RULE6):
    """Return (||T phi||_p, (L/eps)^{1/p} ||phi||_{L^p(R_0)}, relative defect)."""
    if quad is None:
        quad = matched_quadrature(spec, mesh.h, rule)
    lhs = unfold(spec, phi, quad).lp_norm(p)
    rhs = (spec.profile.period / spec.epsilon) ** (1 / p) * mesh_integral(
        mesh, phi, _cell_mask(spec, mesh), rule, power=p) ** (1 / p)
    return lhs, rhs, abs(lhs - rhs) / max(abs(rhs), 1e-300)


def derivative_exchange_check(spec: ThinDomainSpec, phi: Callable, dphi_dx: Callable,
                              dphi_dy: Callable, quad: Optional[CellQuadrature] = None,
                              step: float = 1e-30) -> float:
    """Max relative defect of d/dy1 T phi = eps^a T(phi_x) and d/dy2 T phi = eps T(phi_y).

    The left sides are complex-step derivatives of y -> phi(eps^a (kL + y1), eps y2),
    so ``phi`` must accept complex input.
    """
    if quad is None:
        quad = cell_quadrature(spec.profile, spec.profile.period / 8)
    pts = sample_points(spec, quad)
    x, y = pts[..., 0], pts[..., 1]
    ea, eps = spec.epsilon ** spec.alpha, spec.epsilon
    d1 = np.imag(phi(x + 1j * step * ea, y + 0j)) / step
    d2 = np.imag(phi(x + 0j, y + 1j * step * eps)) / step
    r1 = ea * np.asarray(dphi_dx(x, y), dtype=float)
    r2 = eps * np.asarray(dphi_dy(x, y), dtype=float)
    scale = max(np.max(np.abs(r1)), np.max(np.abs(r2)), 1e-300)
    return float(max(np.max(np.abs(d1 - r1)), np.max(np.abs(d2 - r2))) / scale)


def convergence_witness(spec: ThinDomainSpec, psi: Callable, p: float,
                        quad: Optional[CellQuadrature] = None) -> float:
    """||T phi^eps - psi||_{L^p((0,1) x Y*)} for phi^eps(x, y) = psi(x / eps^a, y / eps)."""
    ea, eps = spec.epsilon ** spec.alpha, spec.epsilon
    phi = lambda x, y: psi(x / ea, y / eps)
    if quad is None:
        quad = cell_quadrature(spec.profile, spec.profile.period / 16)
    return unfold(spec, phi, quad).lp_distance(psi, p)


# --------------------------------------------------------------------------
# rescaling of the flat layer

@dataclass
class RescaledField:
    """Pi_eps phi on R_- = (0,1) x (0, g0), stored as a P1 field."""
    fem: FemFunction
    epsilon: float
    exact: bool

    def __call__(self, x, y):
        return self.fem(x, y)

    def lp_norm(self, p: float, rule: TriangleRule = RULE6) -> float:
        return mesh_integral(self.fem.mesh, self.fem, None, rule, power=p) ** (1 / p)


def layer_mask(spec: ThinDomainSpec, mesh: TriangleMesh) -> np.ndarray:
    """Elements of R_-^eps (below y = eps g0)."""
    if mesh.element_tags is not None:
        return mesh.element_tags == 0
    return mesh.centroids[:, 1] < spec.epsilon * spec.profile.g0


def _layer_is_meshed(spec: ThinDomainSpec, mesh: TriangleMesh, mask) -> bool:
    top = spec.epsilon * spec.profile.g0
    ys = mesh.nodes[mesh.elements[mask], 1]
    area = math.fsum(mesh.signed_areas[mask])
    return bool(np.all(ys <= top * (1 + 1e-12)) and abs(area - top) <= 1e-12 * top)


def rescale_pi(spec: ThinDomainSpec, phi: FemFunction) -> RescaledField:
    """(Pi_eps phi)(x, y) = phi(x, eps y) on (0,1) x (0, g0).

    When y = eps g0 is a mesh line the layer elements are mapped exactly;
    otherwise phi is interpolated onto a rectangle mesh of R_-.
    """
    mesh = phi.mesh
    eps = spec.epsilon
    mask = layer_mask(spec, mesh)
    if mask.any() and _layer_is_meshed(spec, mesh, mask):
        elems = mesh.elements[mask]
        used, inv = np.unique(elems, return_inverse=True)
        nodes = mesh.nodes[used] / np.array([1.0, eps])
        sub = TriangleMesh(nodes, inv.reshape(elems.shape), np.empty((0, 2), dtype=np.int64),
                           np.empty(0, dtype=object), h=mesh.h)
        return RescaledField(FemFunction(sub, phi.values[used]), eps, True)
    g0 = spec.profile.g0
    nx = max(4, int(np.ceil(1.0 / mesh.h)))
    ny = max(4, int(np.ceil(g0 / (mesh.h / eps))))
    rect = rectangle_mesh(0.0, 1.0, 0.0, g0, nx, ny)
    vals = phi(rect.nodes[:, 0], np.minimum(eps * rect.nodes[:, 1], eps * g0))
    return RescaledField(FemFunction(rect, vals), eps, False)


def rescaled_norm(spec: ThinDomainSpec, phi, p: float, mask=None,
                  rule: TriangleRule = RULE6, mesh: Optional[TriangleMesh] = None) -> float:
    """eps^{-1/p} ||phi||_{L^p} over the mesh (or the masked elements)."""
    if not p >= 1:
        raise ValueError("p must be at least 1")
    if mesh is None:
        if not isinstance(phi, FemFunction):
            raise ValueError("a mesh is required for callable phi")
        mesh = phi.mesh
    return (mesh_integral(mesh, phi, mask, rule, power=p) / spec.epsilon) ** (1 / p)


# --------------------------------------------------------------------------
# property suite

@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.tol)


def property_suite(spec: ThinDomainSpec, p: float, seed: int = 0,
                   h: Optional[float] = None) -> list:
    """Run the unfolding and rescaling identities on a mesh of R^eps."""
    rng = np.random.default_rng(seed)
    h = spec.period_length / 8 if h is None else h
    mesh = mesh_thin_domain(spec, h)
    quad = matched_quadrature(spec, h)
    eps = spec.epsilon
    out = []

    phi = FemFunction(mesh, rng.standard_normal(mesh.n_nodes))
    psi = FemFunction(mesh, rng.standard_normal(mesh.n_nodes))
    a, b = rng.standard_normal(2)
    lhs = unfold(spec, FemFunction(mesh, a * phi.values + b * psi.values), quad).values
    rhs = a * unfold(spec, phi, quad).values + b * unfold(spec, psi, quad).values
    out.append(CheckResult("linearity", float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))), 1e-13))

    k1, k2 = rng.uniform(1, 4, 2)
    f1 = lambda x, y: np.sin(k1 * x) + y / eps
    f2 = lambda x, y: np.exp(-k2 * x) * np.cos(y / eps)
    t12 = unfold(spec, lambda x, y: f1(x, y) * f2(x, y), quad).values
    t1t2 = unfold(spec, f1, quad).values * unfold(spec, f2, quad).values
    out.append(CheckResult("product rule", float(np.max(np.abs(t12 - t1t2)) / np.max(np.abs(t1t2))), 1e-13))

    const = float(rng.uniform(-3, 3))
    tc = unfold(spec, lambda x, y: np.full_like(x, const), quad).values
    out.append(CheckResult("constants", float(np.max(np.abs(tc - const))), 1e-13))

    smooth = lambda x, y: np.exp(x) * (1.0 + y / eps) + np.cos(np.pi * x)
    _, _, defect = unfold_integral_check(spec, smooth, mesh, quad)
    out.append(CheckResult("integral identity", defect, 1e-8))

    _, _, rel = unfold_norm_check(spec, smooth, mesh, p)
    out.append(CheckResult("norm identity", rel, 1e-8))

    cplx = lambda x, y: np.exp(k1 * x) * np.sin(k2 * y / eps + x)
    dx = lambda x, y: np.exp(k1 * x) * (k1 * np.sin(k2 * y / eps + x) + np.cos(k2 * y / eps + x))
    dy = lambda x, y: np.exp(k1 * x) * np.cos(k2 * y / eps + x) * k2 / eps
    out.append(CheckResult("derivative exchange", derivative_exchange_check(spec, cplx, dx, dy), 1e-10))

    pi = rescale_pi(spec, phi)
    if pi.exact:
        lhs, rhs = pi.lp_norm(p), rescaled_norm(spec, phi, p, layer_mask(spec, mesh))
        out.append(CheckResult("rescaling norm identity", abs(lhs - rhs) / rhs, 1e-12))
    else:
        # y = eps g0 is not a mesh line: compare against a smooth field instead
        top = eps * spec.profile.g0
        sm = FemFunction.interpolate(mesh, lambda x, y: np.cos(np.pi * x) + y / eps)
        lhs = rescale_pi(spec, sm).lp_norm(p)
        rhs = rescaled_norm(spec, lambda x, y: np.cos(np.pi * x) + y / eps, p, None,
                            mesh=rectangle_mesh(0.0, 1.0, 0.0, top, 400, 40))
        out.append(CheckResult("rescaling norm identity (interpolated layer)", abs(lhs - rhs) / rhs, 1e-3))
    return out
