"""Effective coefficients, limit forcing and the one-dimensional limit problem."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import (BoundaryProfile, CellGeometry, PLaplaceExponent, eval_profile,
                       mean_over_period, regime_of)
from .mesh import mesh_cell
from .plaplace import (CellSolution, SolverSettings, _takes_y, solve_cell,
                       solve_limit_1d)


class ForcingNotReducible(ValueError):
    pass


def q_weak(profile: BoundaryProfile, exponent: PLaplaceExponent) -> float:
    """1 / (<g> <g^{-(p'-1)}>^{p-1}), the coefficient for alpha < 1."""
    p, pc = exponent.p, exponent.p_conj
    mg = mean_over_period(profile)
    minv = mean_over_period(profile, lambda t: t ** (-(pc - 1.0)))
    return 1.0 / (mg * minv ** (p - 1.0))


def q_strong(profile: BoundaryProfile) -> float:
    """g0 / <g>, the coefficient for alpha > 1 (independent of p)."""
    return profile.g0 / mean_over_period(profile)


def q_resonant(profile: BoundaryProfile, exponent: PLaplaceExponent, h: Optional[float] = None,
               settings: Optional[SolverSettings] = None, w0=None) -> CellSolution:
    """Solve the periodic cell problem on Y* with mesh size ``h`` (default L/32)."""
    h = profile.period / 32 if h is None else h
    mesh = mesh_cell(CellGeometry("Y*", profile), h, periodic=True)
    return solve_cell(mesh, exponent, settings, w0=w0)


def effective_coefficient(profile: BoundaryProfile, exponent: PLaplaceExponent, alpha: float,
                          h: Optional[float] = None, settings: Optional[SolverSettings] = None):
    """Return (q, cell solution or None) for the regime selected by ``alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    regime = regime_of(alpha)
    if regime == "weak":
        return q_weak(profile, exponent), None
    if regime == "strong":
        return q_strong(profile), None
    cell = q_resonant(profile, exponent, h, settings)
    return cell.q, cell


def closed_form_q(profile: BoundaryProfile, exponent: PLaplaceExponent, alpha: float):
    """Closed-form coefficient, or None in the resonant regime."""
    regime = regime_of(alpha)
    if regime == "weak":
        return q_weak(profile, exponent)
    if regime == "strong":
        return q_strong(profile)
    return 1.0 if profile.is_constant else None


# --------------------------------------------------------------------------
# forcing

@dataclass(frozen=True)
class LimitForcing:
    """Reduction of an x-only forcing f^eps(x, y) = f(x) to the limit source term.

    ``fhat`` is the intermediate object the limit passes through: the unfolded
    limit f(x) on (0,1) x Y* when alpha <= 1, and the weak limit f(x) <g> of
    f(x) g(x / eps^alpha) when alpha > 1.  In every regime fbar = f.
    """
    f: Callable
    profile: BoundaryProfile
    alpha: float

    @property
    def regime(self) -> str:
        return regime_of(self.alpha)

    def fbar(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    __call__ = fbar

    def fhat(self, x, y1=None, y2=None):
        x = np.asarray(x, dtype=float)
        if self.regime == "strong":
            return self.fbar(x) * mean_over_period(self.profile)
        return np.broadcast_to(self.fbar(x), np.broadcast_shapes(
            x.shape, np.shape(y1) if y1 is not None else (), np.shape(y2) if y2 is not None else ()))

    def fhat_eps(self, x, epsilon: float):
        """f(x) g(x / eps^alpha): the vertically integrated forcing per unit thickness."""
        x = np.asarray(x, dtype=float)
        return self.fbar(x) * eval_profile(self.profile, x / epsilon ** self.alpha)


def _as_callable(f) -> Callable:
    if f is None:
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if np.isscalar(f):
        c = float(f)
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if callable(f):
        if _takes_y(f):
            raise ForcingNotReducible("the limit source term is only available for x-only forcing")
        return f
    raise ForcingNotReducible(f"cannot reduce forcing of type {type(f).__name__}")


def limit_forcing(f, profile: BoundaryProfile, alpha: float) -> LimitForcing:
    return LimitForcing(_as_callable(f), profile, alpha)


def _profile_cuts(profile: BoundaryProfile, epsilon: float, alpha: float) -> np.ndarray:
    """Points of (0, 1) where g(x / eps^alpha) may be non-smooth, plus period ends."""
    ea = epsilon ** alpha
    L = profile.period
    kinks = np.unique(np.append(profile.kinks(), [0.0, L / 2]))
    n = int(math.ceil(1.0 / (ea * L))) + 1
    pts = (np.arange(n)[:, None] * L + kinks[None, :]).ravel() * ea
    return np.unique(np.concatenate([[0.0, 1.0], pts[(pts > 0) & (pts < 1)]]))


def weak_limit_defect(forcing: LimitForcing, epsilon: float,
                      tests: Sequence[Callable], order: int = 8) -> np.ndarray:
    """|int_0^1 f(x) g(x/eps^alpha) phi dx - <g> int_0^1 f phi dx| for each test phi."""
    cuts = _profile_cuts(forcing.profile, epsilon, forcing.alpha)
    t, w = np.polynomial.legendre.leggauss(order)
    a, b = cuts[:-1, None], cuts[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * t
    wx = 0.5 * (b - a) * w
    mg = mean_over_period(forcing.profile)
    fe = forcing.fhat_eps(x, epsilon)
    f0 = forcing.fbar(x) * mg
    out = []
    for phi in tests:
        ph = np.asarray(phi(x), dtype=float)
        out.append(abs(np.sum(wx * (fe - f0) * ph)))
    return np.array(out)


# --------------------------------------------------------------------------
# limit problem

@dataclass(frozen=True)
class LimitProblem:
    q: float
    fbar: Callable
    exponent: PLaplaceExponent
    regime: str

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")
        if self.regime not in ("weak", "resonant", "strong"):
            raise ValueError(f"unknown regime {self.regime!r}")


def solve_limit(problem: LimitProblem, n: int, settings: Optional[SolverSettings] = None, u0=None):
    return solve_limit_1d(problem.q, problem.exponent, problem.fbar, n, settings, u0)
