from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crimetaxis.errors import DomainError, SingularityError
from crimetaxis.model import (Parameters, bound_constants, cutoff_eta, homogeneous_fixed_point,
                              reaction_u, reaction_v, taxis_coefficient)


@pytest.mark.parametrize("eps,s,expected", [(0.5, 0.0, 1.0), (0.5, 2.0, 0.0), (0.1, 9.5, 0.5),
                                            (0.0, 1e6, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0)])
def test_cutoff_values(eps, s, expected):
    assert cutoff_eta(eps, s) == pytest.approx(expected, abs=1e-15)


def test_cutoff_plateau_is_exactly_one():
    s = np.linspace(0.0, 1.5, 101)
    assert np.all(cutoff_eta(0.4, s) == 1.0)


def test_cutoff_rejects_negative_argument():
    with pytest.raises(DomainError):
        cutoff_eta(0.5, -0.1)
    with pytest.raises(DomainError):
        cutoff_eta(0.5, np.array([1.0, -1.0]))


@given(st.floats(0.01, 1.0), st.floats(0.0, 200.0), st.floats(0.0, 200.0))
def test_cutoff_monotone_and_bounded(eps, a, b):
    lo, hi = min(a, b), max(a, b)
    ea, eb = cutoff_eta(eps, lo), cutoff_eta(eps, hi)
    assert 0.0 <= eb <= ea <= 1.0


@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_cutoff_odd_symmetry_about_midpoint(eps, z):
    # 1 - eta is an odd-symmetric step: eta(edge + z) + eta(edge + 1 - z) = 1
    edge = 1.0 / eps - 1.0
    assert cutoff_eta(eps, edge + z) + cutoff_eta(eps, edge + 1.0 - z) == pytest.approx(1.0, abs=1e-9)


def test_cutoff_is_c2_at_the_joins():
    eps = 0.25
    edge = 1.0 / eps - 1.0
    for x0, plateau in ((edge, 1.0), (edge + 1.0, 0.0)):
        d = 1e-3
        inside = cutoff_eta(eps, x0 + d) if plateau == 1.0 else cutoff_eta(eps, x0 - d)
        # quintic smoothstep: deviation from the plateau is O(d^3)
        assert abs(inside - plateau) < 20 * d**3


@pytest.mark.parametrize("u,v,p,expected", [
    (1.0, 1.0, Parameters(rho=2, mu=1, gamma=0), 0.0),
    (0.0, 5.0, Parameters(rho=3, mu=2, gamma=1), 0.0),
    (2.0, 1.0, Parameters(rho=0, mu=1, gamma=1), -10.0),
])
def test_reaction_u(u, v, p, expected):
    assert reaction_u(u, v, p) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("u,v,expected", [(1.0, 3.0, 0.0), (0.0, 2.0, -2.0), (3.0, 0.5, 1.0)])
def test_reaction_v(u, v, expected):
    assert reaction_v(u, v) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("u,v,p,expected", [
    (0.0, 1.0, Parameters(chi=2, eps=0.5), 0.0),
    (1.0, 2.0, Parameters(chi=2, eps=0.0), 1.0),
    (4.0, 1.0, Parameters(chi=2, eps=0.5), 0.0),
])
def test_taxis_coefficient(u, v, p, expected):
    assert taxis_coefficient(u, v, p) == pytest.approx(expected, abs=1e-14)


def test_taxis_coefficient_singular():
    with pytest.raises(SingularityError):
        taxis_coefficient(1.0, 0.0, Parameters())


def test_fixed_points():
    assert homogeneous_fixed_point(Parameters(rho=2, mu=1)) == (1.0, 1.0)
    assert homogeneous_fixed_point(Parameters(rho=1, mu=1)) is None
    assert homogeneous_fixed_point(Parameters(rho=3, mu=1, gamma=2)) == (1.0, 2.0)


@given(st.floats(0.1, 10), st.floats(0.1, 5), st.floats(0, 3))
def test_fixed_point_annihilates_reactions(rho, mu, gamma):
    p = Parameters(rho=rho, mu=mu, gamma=gamma)
    fp = homogeneous_fixed_point(p)
    if fp is None:
        assert rho <= mu
        return
    u, v = fp
    assert v > 0
    assert reaction_u(u, v, p) == pytest.approx(0.0, abs=1e-12 * (1 + rho))
    assert reaction_v(u, v) == 0.0


@pytest.mark.parametrize("bad", [dict(mu=0), dict(mu=-1), dict(chi=0), dict(gamma=-0.1),
                                 dict(eps=1.5), dict(rho=math.nan)])
def test_parameter_validation(bad):
    with pytest.raises(DomainError):
        Parameters(**bad)


def test_bound_constants_examples():
    p = Parameters(rho=1, mu=1)
    assert bound_constants(p, 1.0, 0.5).c1 == 1.0
    assert bound_constants(p, 1.0, 2.0).c1 == 2.0
    bc = bound_constants(Parameters(rho=1, mu=1, gamma=1), 1.0, 0.0)
    assert bc.k1_weak == pytest.approx(16.0 / 27.0, rel=1e-15)


@pytest.mark.parametrize("rho,mu,gamma,sup", [
    # sup_y ((1+|rho|) y - mu y^(2+gamma)), bounded scalar maximisation
    (1.0, 1.0, 1.0, 1.0886621079036347),
    (2.0, 0.5, 0.5, 3.226611417521159),
    (-1.0, 1.0, 2.0, 1.1905507889761497),
])
def test_sharp_weak_constant(rho, mu, gamma, sup):
    bc = bound_constants(Parameters(rho=rho, mu=mu, gamma=gamma), 1.0, 0.0)
    assert bc.k1_weak_sharp == pytest.approx(sup, rel=1e-9)
    assert bc.l1_ceiling == pytest.approx(sup, rel=1e-9)


@given(st.floats(-5, 5), st.floats(0.1, 5))
def test_sharp_constant_matches_c1_when_gamma_zero(rho, mu):
    bc = bound_constants(Parameters(rho=rho, mu=mu), 2.0, 0.0)
    assert bc.k1_weak_sharp == pytest.approx(bc.c1, rel=1e-12)
    assert bc.k1_weak == pytest.approx(bc.c1, rel=1e-12)


def test_time_integral_ceilings():
    bc = bound_constants(Parameters(rho=2, mu=1), 1.0, 2.0)
    assert bc.c1 == 2.25
    assert bc.c2_of_T(3.0) == pytest.approx(2.0 + 3.0 * 2.0 * 2.25)
    g = bound_constants(Parameters(rho=2, mu=1, gamma=1), 1.0, 2.0)
    assert g.c2g_of_T(3.0) == pytest.approx(2.0 + 3.0 * 2.0 * g.c1_weak)
    # Hölder: (|Ω| T)^(1/3) * c2g^(2/3)
    assert g.c2_of_T(3.0) == pytest.approx(3.0 ** (1 / 3) * g.c2g_of_T(3.0) ** (2 / 3))
    assert g.c2_of_T(0.0) == 0.0


def test_bound_constants_validation():
    with pytest.raises(DomainError):
        bound_constants(Parameters(), 0.0, 1.0)
    with pytest.raises(DomainError):
        bound_constants(Parameters(), 1.0, -1.0)
