import math

import numpy as np
import pytest
from numba import njit
from scipy import integrate, stats
from scipy.special import ndtr

from neqfe import oracle
from neqfe.model import ExampleOne, ExampleTwo, potential_from_energy

EX1 = ExampleOne()
M1 = EX1.model()


def _z_quad(lam, beta=5.0):
    f = lambda x: math.exp(-beta * M1.value(x, lam))
    return integrate.quad(f, -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=200, points=None)[0]


def test_example_one_free_energy_against_adaptive_quadrature():
    ref = -math.log(_z_quad(1.0) / _z_quad(0.0)) / 5.0
    assert oracle.free_energy(M1, 0.0, 1.0, 5.0) == pytest.approx(ref, abs=1e-9)


def test_example_one_free_energy_matches_reference_value():
    assert oracle.free_energy(M1, 0.0, 1.0, 5.0) == pytest.approx(-0.344, abs=1e-3)


def test_initial_partition_function_is_gaussian():
    assert oracle.z_of_lambda(M1, 0.0, 5.0) == pytest.approx(math.sqrt(2 * math.pi / 5.0), rel=1e-12)


def test_refinement_changes_little():
    cfg = oracle.QuadratureConfig()
    for lam in (0.3, 1.0):
        a = oracle.log_z_of_lambda(M1, lam, 5.0, cfg)
        b = oracle.log_z_of_lambda(M1, lam, 5.0, cfg.refined())
        assert abs(a - b) < 1e-6 * abs(a) + 1e-12


def test_ti_closure():
    lams = np.linspace(0, 1, 2001)
    g = [oracle.mean_grad_lambda(M1, l, 5.0)[0] for l in lams]
    assert integrate.trapezoid(g, lams) == pytest.approx(oracle.free_energy(M1, 0, 1, 5.0), abs=1e-4)


def test_delta_f_curve_starts_at_zero():
    c = oracle.delta_f_curve(M1, EX1.protocol(), 5.0, [0.0, 0.5, 1.0])
    assert c[0] == 0.0
    assert c[-1] == pytest.approx(oracle.free_energy(M1, 0, 1, 5.0), abs=1e-14)


def test_decay_check():
    @njit
    def flat(x, lam):
        return 0.01 * x[0] ** 2

    with pytest.raises(oracle.QuadratureError, match="enlarge"):
        oracle.z_of_lambda(potential_from_energy(flat, 1, 1), 0.0, 5.0)


def test_equilibrium_sampler_matches_gaussian():
    law = oracle.equilibrium_sampler_1d(M1, 0.0, 5.0)
    s = law.sample(np.random.default_rng(0).random(20000))[:, 0]
    assert stats.kstest(s, stats.norm(-1, math.sqrt(0.2)).cdf).pvalue > 0.01


def _closed_form(spec: ExampleTwo, theta):
    """-beta F(theta) up to a constant: Gaussian r-integral with Jacobian r; y3 factor cancels."""
    a = spec.beta / (2 * spec.eps)
    L = spec.bond_length(theta)
    radial = L * math.sqrt(math.pi / a) * ndtr(L * math.sqrt(2 * a)) + math.exp(-a * L * L) / (2 * a)
    return math.log(radial) - spec.beta * spec.angle_energy(theta)


@pytest.mark.parametrize("kappa", [0.3, 0.6])
def test_three_atom_free_energy_against_closed_form(kappa):
    spec = ExampleTwo(kappa=kappa)
    ref = -(_closed_form(spec, spec.theta_end) - _closed_form(spec, spec.theta_start)) / spec.beta
    assert oracle.delta_f_theta(spec, spec.theta_end) == pytest.approx(ref, abs=1e-9)


def test_three_atom_kappa_03_matches_reference_value():
    spec = ExampleTwo(kappa=0.3)
    assert oracle.delta_f_theta(spec, spec.theta_end) == pytest.approx(-0.342, abs=2e-3)


def test_three_atom_refinement_and_mean_force():
    spec = ExampleTwo(kappa=0.6)
    cfg = oracle.QuadratureConfig()
    a = oracle.delta_f_theta(spec, spec.theta_end, cfg=cfg)
    b = oracle.delta_f_theta(spec, spec.theta_end, cfg=cfg.refined())
    assert abs(a - b) < 1e-6 * abs(a)
    th = np.linspace(spec.theta_start, spec.theta_end, 101)
    mf = [oracle.mean_force_theta(spec, t) for t in th]
    assert integrate.simpson(mf, x=th) == pytest.approx(a, abs=1e-7)


def test_narrow_r_range_fails_decay_check_for_large_kappa():
    cfg = oracle.QuadratureConfig(r_range=(3.0, 7.0), n_r=1001)
    spec = ExampleTwo(kappa=0.6)
    with pytest.raises(oracle.QuadratureError):
        oracle.delta_f_theta(spec, spec.theta_end, cfg=cfg)


def test_level_set_law():
    spec = ExampleTwo(kappa=0.3)
    law = oracle.level_set_law(spec, spec.theta_start)
    y = law.sample(np.random.default_rng(3).random((20000, 2)))
    theta = np.arctan2(y[:, 1], y[:, 0])
    np.testing.assert_allclose(theta, spec.theta_start, atol=1e-12)
    r = np.hypot(y[:, 0], y[:, 1])
    sd = math.sqrt(spec.eps / spec.beta)
    assert r.mean() == pytest.approx(spec.bond_length(spec.theta_start), abs=4 * sd / math.sqrt(r.size) + 1e-3)
    assert y[:, 2].std() == pytest.approx(sd, rel=0.03)
    r_grid, y3_grid, p = oracle.rc_level_density(spec, spec.theta_start)
    assert integrate.simpson(integrate.simpson(p, x=y3_grid, axis=1), x=r_grid) == pytest.approx(1.0, abs=1e-12)
