"""Corrector fields, the layer average V and the error functionals on R^eps."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .geometry import PLaplaceExponent, ThinDomainSpec, eval_profile, mean_over_period
from .mesh import TriangleMesh
from .plaplace import CellSolution, FemFunction, IntervalFunction
from .quadrature import RULE6, TriangleRule, nodal_at_points, rule_points, rule_weights


class MissingCellSolution(ValueError):
    pass


class CorrectorField:
    """W_eps(x, y) for the regime of ``spec``; call with arrays x, y to get (..., 2)."""

    def __init__(self, regime: str, u: IntervalFunction, cell: Optional[CellSolution],
                 spec: ThinDomainSpec, exponent: Optional[PLaplaceExponent] = None):
        if regime not in ("weak", "resonant", "strong"):
            raise ValueError(f"unknown regime {regime!r}")
        if regime == "resonant" and cell is None:
            raise MissingCellSolution("the resonant corrector needs the cell solution v")
        if regime == "weak" and exponent is None:
            if cell is None:
                raise ValueError("the weak corrector needs the exponent p")
            exponent = cell.exponent
        self.regime = regime
        self.u = u
        self.cell = cell
        self.spec = spec
        self.exponent = exponent if exponent is not None else (cell.exponent if cell else None)
        if regime == "weak":
            e = self.exponent.p_conj - 1.0
            self._weak_mean = mean_over_period(spec.profile, lambda t: t ** (-e))
        if regime == "resonant":
            self._grad_v = cell.grad_v()

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        du = self.u.derivative(x)
        out = np.zeros(x.shape + (2,))
        spec = self.spec
        if self.regime == "weak":
            e = self.exponent.p_conj - 1.0
            g = eval_profile(spec.profile, x / spec.epsilon ** spec.alpha)
            out[..., 0] = du / (g ** e * self._weak_mean)
        elif self.regime == "strong":
            out[..., 0] = np.where(y <= spec.epsilon * spec.profile.g0, du, 0.0)
        else:
            eps = spec.epsilon
            L = spec.profile.period
            t = np.mod(x / eps, L)
            pts = np.column_stack([t.ravel(), (y / eps).ravel()])
            elem, _ = self.cell.mesh.locator.locate(pts)
            out[...] = (du.ravel()[:, None] * self._grad_v[elem]).reshape(out.shape)
        return out


def corrector(regime: str, u: IntervalFunction, cell: Optional[CellSolution], spec: ThinDomainSpec,
              exponent: Optional[PLaplaceExponent] = None) -> CorrectorField:
    return CorrectorField(regime, u, cell, spec, exponent)


# --------------------------------------------------------------------------
# average over the flat layer

class LayerAverage:
    """V(x) = (1 / (eps g0)) int_0^{eps g0} u_eps(x, s) ds.

    Every column between consecutive node abscissae is sampled at three
    interior points by exact chord integration; V is quadratic in x on such a
    column whenever y = eps g0 is a mesh line, so the stored interpolant is
    exact there.
    """

    def __init__(self, columns: np.ndarray, samples: np.ndarray):
        self.columns = columns
        self.samples = samples  # (n_columns, 3) at fractions _FRACS

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.clip(np.searchsorted(self.columns, x, side="right") - 1, 0, len(self.columns) - 2)
        a, b = self.columns[c], self.columns[c + 1]
        t = (x - a) / (b - a)
        f = _FRACS
        v = self.samples[c]
        # Lagrange basis on the three sample fractions
        l0 = (t - f[1]) * (t - f[2]) / ((f[0] - f[1]) * (f[0] - f[2]))
        l1 = (t - f[0]) * (t - f[2]) / ((f[1] - f[0]) * (f[1] - f[2]))
        l2 = (t - f[0]) * (t - f[1]) / ((f[2] - f[0]) * (f[2] - f[1]))
        return v[..., 0] * l0 + v[..., 1] * l1 + v[..., 2] * l2


_FRACS = np.array([0.25, 0.5, 0.75])


def vertical_integrals(mesh: TriangleMesh, values, x0: np.ndarray, elems: np.ndarray,
                       top: float) -> np.ndarray:
    """int_0^top u(x0, s) ds restricted to each given element (x0 strictly inside its x-range)."""
    P = mesh.nodes[mesh.elements[elems]]          # (K, 3, 2)
    U = np.asarray(values)[mesh.elements[elems]]  # (K, 3)
    ys, us = [], []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        xi, xj = P[:, i, 0], P[:, j, 0]
        cross = (xi - x0) * (xj - x0) < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(cross, (x0 - xi) / (xj - xi), np.nan)
        ys.append(P[:, i, 1] + t * (P[:, j, 1] - P[:, i, 1]))
        us.append(U[:, i] + t * (U[:, j] - U[:, i]))
    ys, us = np.array(ys).T, np.array(us).T   # (K, 3), NaN where no crossing
    order = np.argsort(np.where(np.isnan(ys), np.inf, ys), axis=1)
    ys = np.take_along_axis(ys, order, axis=1)[:, :2]
    us = np.take_along_axis(us, order, axis=1)[:, :2]
    lo, hi = ys[:, 0], ys[:, 1]
    a, b = np.clip(lo, 0.0, top), np.clip(hi, 0.0, top)
    span = np.where(hi > lo, hi - lo, 1.0)
    ua = us[:, 0] + (a - lo) / span * (us[:, 1] - us[:, 0])
    ub = us[:, 0] + (b - lo) / span * (us[:, 1] - us[:, 0])
    out = 0.5 * (b - a) * (ua + ub)
    return np.where(np.isfinite(out), out, 0.0)


def average_V(spec: ThinDomainSpec, u_eps: FemFunction) -> LayerAverage:
    mesh = u_eps.mesh
    top = spec.epsilon * spec.profile.g0
    columns = np.unique(mesh.nodes[:, 0])
    ex = mesh.nodes[mesh.elements, 0]
    ey = mesh.nodes[mesh.elements, 1]
    keep = np.nonzero(ey.min(axis=1) < top)[0]
    c0 = np.searchsorted(columns, ex[keep].min(axis=1))
    c1 = np.searchsorted(columns, ex[keep].max(axis=1))
    counts = c1 - c0
    elems = np.repeat(keep, counts)
    cols = np.repeat(c0, counts) + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
    samples = np.zeros((len(columns) - 1, 3))
    for j, fr in enumerate(_FRACS):
        x0 = columns[cols] + fr * (columns[cols + 1] - columns[cols])
        vals = vertical_integrals(mesh, u_eps.values, x0, elems, top)
        samples[:, j] = np.bincount(cols, weights=vals, minlength=len(columns) - 1)
    return LayerAverage(columns, samples / top)


# --------------------------------------------------------------------------
# error functionals

@dataclass
class ErrorMetrics:
    lp_error: float
    corrector_error: float
    v_average_error: float
    grad_rminus_error: Optional[float] = None
    grad_rplus_norm: Optional[float] = None
    w1p_norm: float = math.nan

    def as_dict(self) -> dict:
        return asdict(self)


def error_metrics(spec: ThinDomainSpec, u_eps: FemFunction, u: IntervalFunction,
                  W: CorrectorField, p: float, V: Optional[LayerAverage] = None,
                  rule: TriangleRule = RULE6) -> ErrorMetrics:
    """Rescaled L^p errors eps^{-1/p} ||.||_{L^p} of u_eps against the limit data."""
    mesh = u_eps.mesh
    eps = spec.epsilon
    pts = rule_points(mesh, rule)
    w = rule_weights(mesh, rule)
    x, y = pts[..., 0], pts[..., 1]
    ue = nodal_at_points(mesh, u_eps.values, rule)
    grad = u_eps.gradients()[:, None, :]
    ux = u(x)

    def rnorm(vals, mask=None):
        ww = w if mask is None else np.where(mask, w, 0.0)
        return float((np.sum(ww * vals) / eps) ** (1 / p))

    lp = rnorm(np.abs(ue - ux) ** p)
    Wv = W(x, y)
    corr = rnorm(np.sum((grad - Wv) ** 2, axis=-1) ** (p / 2))
    V = average_V(spec, u_eps) if V is None else V
    vavg = rnorm(np.abs(ue - V(x)) ** p)
    w1p = rnorm(np.abs(ue) ** p + np.sum(grad ** 2, axis=-1) ** (p / 2) * np.ones_like(ue))
    out = ErrorMetrics(lp, corr, vavg, w1p_norm=w1p)
    if spec.regime == "strong":
        below = y <= eps * spec.profile.g0
        du = u.derivative(x)
        gm = np.sum((grad - np.stack([du, np.zeros_like(du)], axis=-1)) ** 2, axis=-1) ** (p / 2)
        out.grad_rminus_error = rnorm(gm, below)
        gp = np.sum(grad ** 2, axis=-1) ** (p / 2) * np.ones_like(ue)
        out.grad_rplus_norm = rnorm(gp, ~below)
    return out
