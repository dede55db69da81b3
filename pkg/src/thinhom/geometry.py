"""Periodic boundary profiles, thin-domain parameters and the cell partition of (0, 1)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

PROFILE_KINDS = ("constant", "piecewise_constant", "piecewise_linear", "cosine", "tabulated")
DOMAIN_KINDS = ("Y*", "Y*+", "R-", "R+")

# relative slack used when deciding whether a cell fits exactly into (0, 1)
_FIT_TOL = 1e-12


class ProfileError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryProfile:
    """An L-periodic, strictly positive, lower semicontinuous profile g.

    ``breakpoints`` and ``values`` are interpreted according to ``kind``:

    * ``constant``: ``values = (c,)``.
    * ``piecewise_constant``: ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``;
      at a jump the smaller one-sided limit is taken.
    * ``piecewise_linear`` / ``tabulated``: nodal values at the breakpoints,
      linear in between and wrapped periodically (continuous).
    * ``cosine``: ``values = (mean, amplitude)``, g = mean + amplitude cos(2 pi y / L).
    """

    kind: str
    period: float
    breakpoints: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ProfileError("profile period must be positive")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        bp, vals = self.breakpoints, self.values
        if self.kind == "constant":
            if len(vals) != 1:
                raise ProfileError("constant profile takes exactly one value")
            object.__setattr__(self, "breakpoints", (0.0,))
        elif self.kind == "cosine":
            if len(vals) != 2:
                raise ProfileError("cosine profile takes (mean, amplitude)")
            if vals[0] - abs(vals[1]) <= 0:
                raise ProfileError("cosine profile must stay strictly positive")
        else:
            if len(bp) == 0 or len(bp) != len(vals):
                raise ProfileError("breakpoints and values must have the same nonzero length")
            if bp[0] != 0.0:
                raise ProfileError("first breakpoint must be 0")
            if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])) or bp[-1] >= self.period:
                raise ProfileError("breakpoints must be strictly increasing in [0, L)")
        if self.kind != "cosine" and min(vals) <= 0:
            raise ProfileError("profile values must be strictly positive")

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, value: float, period: float = 1.0) -> "BoundaryProfile":
        return cls("constant", period, (0.0,), (value,))

    @classmethod
    def comb(cls, low: float = 1.0, high: float = 2.0, period: float = 2.0,
             split: Optional[float] = None) -> "BoundaryProfile":
        """Comb-like profile: ``low`` on [0, split), ``high`` on [split, L)."""
        split = period / 2 if split is None else split
        return cls("piecewise_constant", period, (0.0, split), (low, high))

    @classmethod
    def cosine(cls, mean: float, amplitude: float, period: float = 1.0) -> "BoundaryProfile":
        return cls("cosine", period, (), (mean, amplitude))

    @classmethod
    def tabulated(cls, y: Sequence[float], g: Sequence[float], period: float) -> "BoundaryProfile":
        return cls("tabulated", period, tuple(y), tuple(g))

    # -- basic data ---------------------------------------------------
    @property
    def g0(self) -> float:
        if self.kind == "cosine":
            return self.values[0] - abs(self.values[1])
        return min(self.values)

    @property
    def g1(self) -> float:
        if self.kind == "cosine":
            return self.values[0] + abs(self.values[1])
        return max(self.values)

    @property
    def is_constant(self) -> bool:
        return self.g0 == self.g1

    @property
    def has_jumps(self) -> bool:
        return self.kind == "piecewise_constant" and len(set(self.values)) > 1

    @property
    def is_piecewise_constant(self) -> bool:
        return self.kind in ("constant", "piecewise_constant")

    def jump_points(self) -> np.ndarray:
        """Breakpoints in [0, L) where g is discontinuous."""
        if not self.has_jumps:
            return np.empty(0)
        v = np.asarray(self.values)
        left = np.roll(v, 1)
        return np.asarray(self.breakpoints)[v != left]

    def kinks(self) -> np.ndarray:
        """Points in [0, L) at which the mesh must place a vertical line."""
        if self.kind in ("piecewise_constant", "piecewise_linear", "tabulated"):
            return np.asarray(self.breakpoints)
        return np.zeros(1)

    def __call__(self, y1):
        return eval_profile(self, y1)

    def digest(self) -> str:
        bp = ",".join(f"{b:.12g}" for b in self.breakpoints)
        vals = ",".join(f"{v:.12g}" for v in self.values)
        return f"{self.kind}(L={self.period:.12g};bp=[{bp}];values=[{vals}])"


def eval_profile(profile: BoundaryProfile, y1):
    """Evaluate g at ``y1`` (scalar or array), honouring periodicity and lower semicontinuity."""
    scalar = np.ndim(y1) == 0
    L = profile.period
    t = np.mod(np.asarray(y1, dtype=float), L)
    t = np.where(t >= L, 0.0, t)  # np.mod can round up to L
    vals = np.asarray(profile.values)
    if profile.kind == "constant":
        out = np.full_like(t, vals[0])
    elif profile.kind == "cosine":
        out = vals[0] + vals[1] * np.cos(2 * np.pi * t / L)
    elif profile.kind == "piecewise_constant":
        bp = np.asarray(profile.breakpoints)
        idx = np.searchsorted(bp, t, side="right") - 1
        out = vals[idx]
        at_bp = t == bp[idx]
        out = np.where(at_bp, np.minimum(vals[idx], vals[idx - 1]), out)
    else:
        bp = np.append(profile.breakpoints, L)
        v = np.append(vals, vals[0])
        out = np.interp(t, bp, v)
    return float(out) if scalar else out


def mean_over_period(profile: BoundaryProfile,
                     transform: Optional[Callable] = None) -> float:
    """(1/L) * integral over one period of transform(g(y1))."""
    if transform is None:
        transform = _identity
    L = profile.period
    vals = np.asarray(profile.values)
    if profile.kind == "constant":
        return float(transform(vals[0]))
    if profile.kind == "piecewise_constant":
        bp = np.append(profile.breakpoints, L)
        widths = np.diff(bp)
        tv = np.array([transform(v) for v in vals], dtype=float)
        return float(np.dot(widths, tv) / L)
    if profile.kind == "cosine":
        pieces = [(0.0, L / 2), (L / 2, L)]
    else:
        bp = np.append(profile.breakpoints, L)
        pieces = list(zip(bp[:-1], bp[1:]))
    total = 0.0
    for a, b in pieces:
        val, err = integrate.quad(lambda s: transform(eval_profile(profile, s)), a, b,
                                  epsabs=0.0, epsrel=1e-13, limit=200)
        if err > 1e-12 * max(abs(val), 1e-300) and err > 1e-14 * (b - a):
            raise QuadratureError(f"period average did not converge on [{a}, {b}] (err={err:.3e})")
        total += val
    return total / L


def _identity(t):
    return t


@dataclass(frozen=True)
class PLaplaceExponent:
    p: float

    def __post_init__(self):
        if not (1.0 < self.p < math.inf):
            raise ValueError("p must lie in (1, ∞)")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class ThinDomainSpec:
    epsilon: float
    alpha: float
    profile: BoundaryProfile

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def regime(self) -> str:
        return regime_of(self.alpha)

    @property
    def period_length(self) -> float:
        """Physical length eps^alpha * L of one oscillation period."""
        return self.epsilon ** self.alpha * self.profile.period

    def top(self, x):
        """Height eps * g(x / eps^alpha) of the thin domain."""
        return self.epsilon * eval_profile(self.profile, np.asarray(x) / self.epsilon ** self.alpha)


def regime_of(alpha: float) -> str:
    if alpha < 1:
        return "weak"
    if alpha == 1:
        return "resonant"
    return "strong"


@dataclass(frozen=True)
class DomainPartition:
    n_cells: int
    cell_length: float
    lambda_start: float
    lambda_empty: bool
    cell_origins: np.ndarray = field(repr=False)

    @property
    def N_eps(self) -> int:
        return self.n_cells - 1


def partition(spec: ThinDomainSpec) -> DomainPartition:
    """Split (0, 1) into the full cells of I_eps and the remainder Lambda_eps."""
    cell = spec.period_length
    n = int(math.floor((1.0 + _FIT_TOL) / cell))
    start = n * cell
    empty = abs(1.0 - start) <= _FIT_TOL
    if empty:
        start = 1.0
    origins = np.arange(n) * cell
    return DomainPartition(n, cell, start, empty, origins)


@dataclass(frozen=True)
class CellGeometry:
    domain: str
    profile: BoundaryProfile

    def __post_init__(self):
        if self.domain not in DOMAIN_KINDS:
            raise ValueError(f"unknown cell domain {self.domain!r}")

    @property
    def area(self) -> float:
        pr = self.profile
        if self.domain == "Y*":
            return pr.period * mean_over_period(pr)
        if self.domain == "Y*+":
            return pr.period * (mean_over_period(pr) - pr.g0)
        if self.domain == "R-":
            return pr.g0
        return pr.g1 - pr.g0
