import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinhom.geometry import (BoundaryProfile, CellGeometry, PLaplaceExponent, ProfileError,
                              ThinDomainSpec, eval_profile, mean_over_period, partition, regime_of)

from strategies import profiles


def test_eval_profile_examples(comb):
    assert eval_profile(BoundaryProfile.constant(2.0), 0.37) == 2.0
    assert eval_profile(comb, 2.5) == 1.0
    # jump point takes the smaller one-sided value
    assert eval_profile(comb, 1.0) == 1.0
    assert eval_profile(comb, 0.0) == 1.0
    assert eval_profile(comb, 1.5) == 2.0


def test_mean_over_period_examples(comb):
    assert mean_over_period(comb) == pytest.approx(1.5, abs=1e-15)
    cos = BoundaryProfile.cosine(2.0, 1.0, period=3.0)
    assert mean_over_period(cos) == pytest.approx(2.0, abs=1e-12)
    val = mean_over_period(comb, lambda t: t ** -0.5)
    assert val == pytest.approx((1 + 2 ** -0.5) / 2, abs=1e-15)
    assert val == pytest.approx(0.8535533906, abs=1e-10)


def test_mean_over_period_piecewise_linear_exact():
    # trapezoid average of a periodic hat
    pr = BoundaryProfile("piecewise_linear", 2.0, (0.0, 1.0), (1.0, 3.0))
    assert mean_over_period(pr) == pytest.approx(2.0, abs=1e-13)
    # <g^2> for linear 1 -> 3 -> 1 is (1 + 3 + 9) / 3
    assert mean_over_period(pr, lambda t: t * t) == pytest.approx(13 / 3, rel=1e-12)


def test_partition_examples():
    comb = BoundaryProfile.comb()
    unit = BoundaryProfile.constant(1.0, 1.0)
    p = partition(ThinDomainSpec(0.1, 1.0, unit))
    assert (p.N_eps, p.lambda_empty) == (9, True)
    p = partition(ThinDomainSpec(0.15, 1.0, unit))
    assert p.N_eps == 5 and not p.lambda_empty
    assert p.lambda_start == pytest.approx(0.9, abs=1e-15)
    p = partition(ThinDomainSpec(0.25, 2.0, comb))
    assert ThinDomainSpec(0.25, 2.0, comb).period_length == 0.125
    assert (p.N_eps, p.lambda_empty) == (7, True)


@given(eps=st.floats(0.01, 0.9), alpha=st.floats(0.3, 2.5), L=st.sampled_from([0.5, 1.0, 2.0]))
def test_partition_invariants(eps, alpha, L):
    spec = ThinDomainSpec(eps, alpha, BoundaryProfile.constant(1.0, L))
    part = partition(spec)
    cell = spec.period_length
    if part.n_cells:
        assert cell * part.n_cells <= 1 + 1e-12
    assert cell * (part.n_cells + 1) > 1 - 1e-12
    covered = part.n_cells * cell + (1.0 - part.lambda_start)
    assert abs(covered - 1.0) < 1e-14 or part.lambda_empty
    assert np.allclose(part.cell_origins, np.arange(part.n_cells) * cell)


@given(pr=profiles(), seed=st.integers(0, 2 ** 31))
def test_profile_bounds_and_periodicity(pr, seed):
    y = np.random.default_rng(seed).uniform(-10, 10, 1000)
    g = eval_profile(pr, y)
    assert np.all(g >= pr.g0 - 1e-14) and np.all(g <= pr.g1 + 1e-14)
    if pr.kind != "cosine":
        assert np.all(eval_profile(pr, np.asarray(pr.breakpoints)) >= pr.g0)
    shifted = eval_profile(pr, y + pr.period)
    assert np.allclose(shifted, g, rtol=1e-12, atol=1e-12)


@given(pr=profiles())
def test_lower_semicontinuity_at_jumps(pr):
    if pr.kind != "piecewise_constant":
        return
    vals = np.asarray(pr.values)
    for i, b in enumerate(pr.breakpoints):
        assert eval_profile(pr, b) == min(vals[i], vals[i - 1])


@given(c=st.floats(0.1, 10.0), L=st.floats(0.1, 5.0))
def test_mean_of_constant_is_exact(c, L):
    assert mean_over_period(BoundaryProfile.constant(c, L)) == c


@given(p=st.floats(1.01, 20.0))
def test_conjugate_exponent(p):
    e = PLaplaceExponent(p)
    assert 1 / p + 1 / e.p_conj == pytest.approx(1.0, abs=1e-14)
    assert (e.p_conj - 1) * (p - 1) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p", [1.0, 0.5, math.inf, -2.0])
def test_exponent_rejects_out_of_range(p):
    with pytest.raises(ValueError, match="p must lie in"):
        PLaplaceExponent(p)


def test_regimes():
    assert [regime_of(a) for a in (0.5, 1.0, 2.0)] == ["weak", "resonant", "strong"]
    with pytest.raises(ValueError):
        ThinDomainSpec(1.0, 1.0, BoundaryProfile.comb())


def test_cell_areas(comb):
    assert CellGeometry("Y*", comb).area == 3.0
    assert CellGeometry("Y*+", comb).area == 1.0
    assert CellGeometry("R-", comb).area == 1.0
    assert CellGeometry("R+", comb).area == 1.0


def test_exact_comb_average_by_fractions():
    # widths 1 and 1 over period 2, values 1 and 2
    assert Fraction(1, 2) * (1 + 2) == Fraction(3, 2)
    assert mean_over_period(BoundaryProfile.comb()) == float(Fraction(3, 2))


@pytest.mark.parametrize("kwargs", [
    dict(kind="piecewise_constant", period=1.0, breakpoints=(0.0, 0.5), values=(1.0, -1.0)),
    dict(kind="piecewise_constant", period=1.0, breakpoints=(0.1,), values=(1.0,)),
    dict(kind="piecewise_linear", period=1.0, breakpoints=(0.0, 1.0), values=(1.0, 2.0)),
    dict(kind="cosine", period=1.0, values=(1.0, 1.0)),
    dict(kind="spline", period=1.0, values=(1.0,)),
])
def test_invalid_profiles(kwargs):
    with pytest.raises(ProfileError):
        BoundaryProfile(**kwargs)
