import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numba import njit

from neqfe.model import (AnsatzBasis, ControlField, ExampleOne, ExampleTwo, GeometryError, ModelError,
                         angle_coordinate, build_projection, cell_basis, eval_potential, gaussian_basis,
                         linear_protocol, potential_from_energy, reaction_coordinate_with_fd)

EX1 = ExampleOne()
M1 = EX1.model()
EX2 = ExampleTwo(kappa=0.6)
M2 = EX2.model()
RC = angle_coordinate()


def test_example_one_values():
    V, gx, gl = eval_potential(M1, -1.0, 0.0)
    assert V == 0.0
    assert gx[0] == 0.0
    # V(x,1) - V(x,0) at x = -1 is 0 + 0.4 - 0
    assert gl[0] == pytest.approx(0.4, abs=1e-15)
    assert M1.value(1.0, 1.0) == pytest.approx(-0.4)


@given(st.floats(-3, 3), st.floats(0, 1))
def test_example_one_gradients_match_differences(x, lam):
    h = 1e-6
    fd_x = (M1.value(x + h, lam) - M1.value(x - h, lam)) / (2 * h)
    lp, lm = min(lam + h, 1.0), max(lam - h, 0.0)
    fd_l = (M1.value(x, lp) - M1.value(x, lm)) / (lp - lm)
    assert M1.gradient_x(x, lam)[0] == pytest.approx(fd_x, rel=1e-6, abs=1e-6)
    assert M1.gradient_lambda(x, lam)[0] == pytest.approx(fd_l, rel=1e-6, abs=1e-6)


@given(st.floats(3.5, 7), st.floats(0.3, 1.9), st.floats(3.5, 6.5))
def test_example_two_gradient_matches_differences(r, theta, y3):
    y = EX2.embed(r, y3, theta)
    g = M2.gradient_x(y, [])
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (M2.value(y + e, []) - M2.value(y - e, [])) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-5)


def test_example_two_energy_matches_polar_form():
    y = EX2.embed(5.3, 4.8, 1.1)
    assert M2.value(y, []) == pytest.approx(float(EX2.energy_polar(5.3, 4.8, 1.1)), rel=1e-13)


def test_example_two_work_integrand_is_theta_derivative():
    # (-y2, y1, 0) . grad V equals dV/dtheta at fixed r and y3
    r, y3, th = 5.4, 5.1, 0.9
    y = EX2.embed(r, y3, th)
    g = M2.gradient_x(y, [])
    lhs = -y[1] * g[0] + y[0] * g[1]
    h = 1e-6
    rhs = (EX2.energy_polar(r, y3, th + h) - EX2.energy_polar(r, y3, th - h)) / (2 * h)
    assert lhs == pytest.approx(rhs, rel=1e-6)


@given(st.floats(1.0, 8.0), st.floats(-3.0, 3.0), st.floats(-6, 6))
def test_projection_identities(r, theta, y3):
    y = np.array([r * math.cos(theta), r * math.sin(theta), y3])
    pr = build_projection(RC, y)
    assert np.max(np.abs(pr.P @ pr.P - pr.P)) < 1e-10
    assert np.max(np.abs(pr.P.T @ pr.grad_xi)) < 1e-10
    assert pr.Psi[0, 0] == pytest.approx(1 / r ** 2, rel=1e-12)


def test_divergences_match_finite_differences():
    fd = reaction_coordinate_with_fd(RC.xi, RC.grad_xi, 3, 1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        r, th, y3 = rng.uniform(2, 7), rng.uniform(-3, 3), rng.uniform(-5, 5)
        y = np.array([r * math.cos(th), r * math.sin(th), y3])
        a, b = build_projection(RC, y), build_projection(fd, y)
        np.testing.assert_allclose(a.div_p, b.div_p, atol=1e-6)
        np.testing.assert_allclose(a.div_g, b.div_g, atol=1e-6)


def test_angle_is_continuous_through_the_y2_axis():
    # the protocol ends at theta = pi/2 where y1 = 0
    for th in (math.pi / 2 - 1e-9, math.pi / 2, math.pi / 2 + 1e-9, 2.0):
        assert RC.value(EX2.embed(5.0, 5.0, th))[0] == pytest.approx(th, abs=1e-12)


def test_singular_geometry_is_reported():
    with pytest.raises(GeometryError, match="y="):
        RC.value([0.0, 0.0, 1.0])
    with pytest.raises(GeometryError):
        build_projection(RC, [0.0, 0.0, 1.0])


def test_non_finite_energy_is_reported():
    @njit
    def bad(x, lam):
        return math.log(x[0])

    m = potential_from_energy(bad, 1, 1)
    with pytest.raises(ModelError, match="non-finite"):
        m.value(-1.0, 0.0)


def test_fd_fallback_gradients():
    @njit
    def energy(x, lam):
        return 0.5 * (x[0] - lam[0]) ** 2 + 0.1 * x[0] ** 4

    m = potential_from_energy(energy, 1, 1)
    assert m.gradient_x(0.7, 0.2)[0] == pytest.approx(0.5 + 0.4 * 0.343, rel=1e-7)
    assert m.gradient_lambda(0.7, 0.2)[0] == pytest.approx(-0.5, rel=1e-7)


def test_protocol_and_reversal():
    p = EX1.protocol()
    assert p.lam(0.25)[0] == 0.25 and p.f(0.25)[0] == 1.0
    r = p.reversed()
    assert r.lam(0.25)[0] == 0.75 and r.f(0.25)[0] == -1.0
    assert p.reversed() is r
    assert linear_protocol(0.0, 1.0) is linear_protocol(0.0, 1.0)


def test_cell_basis():
    b = cell_basis()
    assert b.k == 30
    v = b.evaluate(-1.3, 0.0)
    assert v[0, 0] == 1.0 and v.sum() == 1.0
    assert b.evaluate(1.3, 0.0).sum() == 0.0
    assert b.evaluate(0.01, 0.25)[15, 0] == 0.75
    assert b.evaluate(2.0, 0.0).sum() == 0.0
    assert b.evaluate(0.0, 1.0).sum() == 0.0


def test_gaussian_basis():
    b = gaussian_basis()
    assert b.evaluate(0.0, 0.0)[0, 0] == 0.0
    x = 0.4
    h = 1e-6
    bump = lambda x: math.exp(-(x - 1.2) ** 2 / 4.5)
    assert b.evaluate(x, 0.5)[1, 0] == pytest.approx(0.5 * (bump(x + h) - bump(x - h)) / (2 * h), rel=1e-7)


def test_control_field_checks_size():
    with pytest.raises(ModelError):
        ControlField(gaussian_basis(), [1.0, 2.0, 3.0])
    u = ControlField(gaussian_basis(), [1.0, -1.0])
    assert u.evaluate(0.5, 0.0).shape == (1,)
