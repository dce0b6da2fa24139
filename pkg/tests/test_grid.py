from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from crimetaxis.errors import DomainError, SingularityError, UsageError
from crimetaxis.grid import (Grid, dirichlet_form, face_gradients, grad_power_integral,
                             gradient_centered, integrate, laplacian_neumann, lp_norm,
                             read_snapshot, taxis_divergence, taxis_outflow_rate, taxis_terms,
                             write_snapshot)
from crimetaxis.model import Parameters

G8 = Grid(8, 6, 1.0, 0.75)


def fields(grid, lo=0.0, hi=10.0):
    return arrays(np.float64, grid.shape, elements=st.floats(lo, hi, allow_nan=False))


def test_grid_geometry():
    g = Grid(4, 2, 2.0, 1.0)
    assert (g.dx, g.dy, g.shape, g.area, g.cell_area) == (0.5, 0.5, (2, 4), 2.0, 0.25)
    X, Y = g.centers()
    assert X[0].tolist() == [0.25, 0.75, 1.25, 1.75]
    assert Y[:, 0].tolist() == [0.25, 0.75]


@pytest.mark.parametrize("args", [(1, 4), (4, 1), (4, 4, 0.0, 1.0), (4, 4, 1.0, -1.0)])
def test_grid_validation(args):
    with pytest.raises(DomainError):
        Grid(*args)


def test_shape_mismatch():
    with pytest.raises(UsageError):
        laplacian_neumann(np.zeros((3, 3)), G8)


def test_laplacian_constant_is_zero():
    assert np.all(laplacian_neumann(np.full(G8.shape, 3.7), G8) == 0.0)


@pytest.mark.parametrize("n,lx", [(16, 1.0), (33, 2.5)])
def test_laplacian_cosine_eigenvector(n, lx):
    g = Grid(n, 5, lx, 1.0)
    X, _ = g.centers()
    f = np.cos(np.pi * X / lx)
    lam = (2.0 / g.dx**2) * (1.0 - math.cos(math.pi * g.dx / lx))
    np.testing.assert_allclose(laplacian_neumann(f, g), -lam * f, atol=1e-10 * lam)


def test_laplacian_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid(n, n)
        X, Y = g.centers()
        f = np.cos(np.pi * X) * np.cos(2 * np.pi * Y)
        exact = -5 * np.pi**2 * f
        errs.append(np.max(np.abs(laplacian_neumann(f, g) - exact)))
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(rates) >= 1.9


@given(fields(G8, -5, 5))
def test_laplacian_conserves(f):
    assert abs(integrate(laplacian_neumann(f, G8), G8)) <= 1e-10 * (1 + np.max(np.abs(f))) / G8.dx**2


@given(fields(G8, -5, 5), fields(G8, -5, 5))
def test_laplacian_symmetric_and_dirichlet_form(f, g):
    a = integrate(g * laplacian_neumann(f, G8), G8)
    b = integrate(f * laplacian_neumann(g, G8), G8)
    scale = 1e-10 * (1 + np.max(np.abs(f))) * (1 + np.max(np.abs(g))) / G8.dx**2
    assert abs(a - b) <= scale
    assert abs(dirichlet_form(f, g, G8) + a) <= scale
    assert dirichlet_form(f, f, G8) >= 0


def test_gradient_linear_and_walls():
    g = Grid(6, 5)
    X, Y = g.centers()
    gx, gy = gradient_centered(X, g)
    np.testing.assert_allclose(gx[:, 1:-1], 1.0, rtol=1e-12)
    assert np.all(gy == 0.0)
    assert np.all(gx[:, 0] == 0.0) and np.all(gx[:, -1] == 0.0)
    gx, gy = gradient_centered(np.full(g.shape, 2.0), g)
    assert not gx.any() and not gy.any()
    fx, fy = face_gradients(2 * Y, g)
    assert fx.shape == (5, 5) and fy.shape == (4, 6)
    np.testing.assert_allclose(fy, 2.0, rtol=1e-12)


def test_taxis_trivial_cases():
    g = Grid(8, 8)
    p = Parameters(chi=3.0)
    u = np.random.default_rng(1).uniform(0, 2, g.shape)
    assert not taxis_divergence(u, np.full(g.shape, 2.0), p, g).any()
    v = 1 + np.random.default_rng(2).uniform(0, 1, g.shape)
    assert not taxis_divergence(np.zeros(g.shape), v, p, g).any()


@given(fields(G8, 0, 5), fields(G8, 0.1, 5), st.floats(0.0, 1.0))
def test_taxis_conserves(u, v, eps):
    p = Parameters(chi=4.0, eps=eps)
    div = taxis_divergence(u, v, p, G8)
    assert abs(integrate(div, G8)) <= 1e-9 * (1 + np.max(np.abs(div)))


@given(fields(G8, 0, 5), fields(G8, 0.1, 5))
def test_taxis_outflow_bounds_drain(u, v):
    # cells lose mass to taxis at most at rate outflow * u
    p = Parameters(chi=2.0)
    div = taxis_divergence(u, v, p, G8)
    rate = taxis_outflow_rate(u, v, p, G8)
    assert np.all(rate >= 0)
    assert np.all(div <= rate * u + 1e-9 * (1 + rate * u))


def test_taxis_moves_mass_up_the_gradient():
    g = Grid(2, 2)
    u = np.ones(g.shape)
    v = np.array([[1.0, 2.0], [1.0, 2.0]])
    div = taxis_divergence(u, v, Parameters(chi=1.0), g)
    # face flux chi*u*dv/(v_face*dx) = 1/(1.5*0.5); divergence divides by dx once more
    np.testing.assert_allclose(div, [[8 / 3, -8 / 3], [8 / 3, -8 / 3]], rtol=1e-14)
    rate = taxis_outflow_rate(u, v, Parameters(chi=1.0), g)
    np.testing.assert_allclose(rate, [[8 / 3, 0.0], [8 / 3, 0.0]], rtol=1e-14)


def test_taxis_singular():
    with pytest.raises(SingularityError):
        taxis_divergence(np.ones(G8.shape), np.zeros(G8.shape), Parameters(), G8)


def test_integrate_examples():
    g = Grid(64, 64)
    X, _ = g.centers()
    assert integrate(np.full(g.shape, 3.0), g) == pytest.approx(3.0, rel=1e-15)
    assert integrate(X, g) == pytest.approx(0.5, rel=1e-14)
    one = np.zeros(g.shape)
    one[3, 7] = 1.0
    assert integrate(one, g) == g.cell_area


def test_lp_norm_examples():
    g = Grid(4, 4)
    assert lp_norm(np.full(g.shape, 2.0), g, 2) == pytest.approx(2.0)
    assert lp_norm(np.zeros(g.shape), g, 3.5) == 0.0
    two = Grid(2, 1 + 1, 1.0, 1.0)
    f = np.array([[1.5, -2.0], [0.0, 0.0]])
    assert lp_norm(f, two, 3) == pytest.approx(((1.5**3 + 2.0**3) * 0.25) ** (1 / 3))
    with pytest.raises(DomainError):
        lp_norm(f, two, 0.5)


def test_grad_power_integral_hand_values():
    g = Grid(4, 4)
    X, _ = g.centers()
    v = 1.0 + X
    assert grad_power_integral(np.full(g.shape, 1.3), g, 3) == 0.0
    assert grad_power_integral(v, g, 2) == pytest.approx(0.5, rel=1e-14)
    assert grad_power_integral(v, g, 4) == pytest.approx(4.53125, rel=1e-14)
    with pytest.raises(DomainError):
        grad_power_integral(-v, g, 2)


def test_snapshot_roundtrip(tmp_path):
    g = Grid(5, 3, 1.5, 0.7)
    f = np.random.default_rng(7).normal(size=g.shape) * 1e3
    write_snapshot(tmp_path / "s.txt", f, g, 0.1 + 0.2)
    g2, t, f2 = read_snapshot(tmp_path / "s.txt")
    assert g2 == g and t == 0.1 + 0.2
    assert np.array_equal(f, f2)


def test_snapshot_truncated(tmp_path):
    (tmp_path / "s.txt").write_text("3 3 1.0 1.0 0.0\n1.0\n")
    with pytest.raises(UsageError):
        read_snapshot(tmp_path / "s.txt")


@given(fields(G8, 0, 5), fields(G8, 0.1, 5))
def test_taxis_terms_match_separate_calls(u, v):
    p = Parameters(chi=3.0, eps=0.3)
    div, rate = taxis_terms(u, v, p, G8)
    assert np.array_equal(div, taxis_divergence(u, v, p, G8))
    assert np.array_equal(rate, taxis_outflow_rate(u, v, p, G8))
