import math

import numpy as np
import pytest
from numba import njit
from scipy import stats
from scipy.integrate import solve_ivp

from neqfe import sde
from neqfe.laws import GaussianLaw
from neqfe.model import (AnsatzBasis, ControlField, ExampleOne, ExampleTwo, PotentialModel, gaussian_basis,
                         linear_protocol, schedule_protocol)
from neqfe.noise import THREADS_ENV
from neqfe.sde import EscortField, IntegratorConfig, escort_with_fd

EX1 = ExampleOne()
M1 = EX1.model()
P1 = EX1.protocol()
MU0 = GaussianLaw(-1.0, 0.2)


@njit
def _h_energy(x, lam):
    return 0.5 * (x[0] - lam[0]) ** 2


@njit
def _h_grad(x, lam, out):
    out[0] = x[0] - lam[0]


@njit
def _h_glam(x, lam, out):
    out[0] = -(x[0] - lam[0])


HARMONIC = PotentialModel(1, 1, _h_energy, _h_grad, _h_glam, "moving-trap")


@njit
def _unit_flow(x, lam, out):
    out[0] = 1.0


@njit
def _half_flow(x, lam, out):
    out[0] = 0.5


@njit
def _zero_div(x, lam):
    return 0.0


def test_zero_noise_matches_ode_solver():
    cfg = IntegratorConfig(1e-5, noise_scale=0.0)
    res = sde.simulate_alchemical(M1, P1, np.array([[-1.0]]), cfg, beta=5.0)

    def rhs(t, z):
        x = z[0]
        return [-M1.gradient_x(x, t)[0], M1.gradient_lambda(x, t)[0]]

    sol = solve_ivp(rhs, (0, 1), [-1.0, 0.0], rtol=1e-11, atol=1e-12)
    assert res.x_final[0, 0] == pytest.approx(sol.y[0, -1], abs=1e-4)
    assert res.work[0] == pytest.approx(sol.y[1, -1], abs=1e-4)


def test_zero_noise_matches_hand_euler_loop():
    dt = 1e-3
    res = sde.simulate_alchemical(M1, P1, np.array([[0.3]]), IntegratorConfig(dt, noise_scale=0.0), beta=5.0)
    x, W = 0.3, 0.0
    for k in range(1000):
        t = k * dt
        W += M1.gradient_lambda(x, t)[0] * dt
        x -= M1.gradient_x(x, t)[0] * dt
    assert res.x_final[0, 0] == pytest.approx(x, rel=1e-12)
    assert res.work[0] == pytest.approx(W, rel=1e-12)


def test_explicit_noise_reproduces_euler_maruyama():
    rng = np.random.default_rng(5)
    dt, beta = 0.01, 5.0
    xi = rng.standard_normal((1, 100, 1))
    res = sde.simulate_alchemical(M1, P1, np.array([[-1.0]]), IntegratorConfig(dt), beta=beta, noise=xi)
    x, W = -1.0, 0.0
    for k in range(100):
        t = k * dt
        W += M1.gradient_lambda(x, t)[0] * dt
        x += -M1.gradient_x(x, t)[0] * dt + math.sqrt(2 * dt / beta) * xi[0, k, 0]
    assert res.x_final[0, 0] == pytest.approx(x, rel=1e-12)
    assert res.work[0] == pytest.approx(W, rel=1e-12)


def test_last_step_is_shortened():
    cfg = IntegratorConfig(0.3, noise_scale=0.0)
    assert cfg.n_steps(1.0) == 4
    res = sde.simulate_alchemical(HARMONIC, P1, np.array([[0.0]]), cfg, beta=1.0)
    x, W = 0.0, 0.0
    for t, h in ((0.0, 0.3), (0.3, 0.3), (0.6, 0.3), (0.9, 0.1)):
        W += -(x - t) * h
        x -= (x - t) * h
    assert res.x_final[0, 0] == pytest.approx(x, rel=1e-14)
    assert res.work[0] == pytest.approx(W, rel=1e-14)


def test_three_atom_zero_noise_angle_follows_drive():
    e2 = ExampleTwo()
    y0 = e2.embed(e2.bond_length(e2.theta_start), e2.l_eq, e2.theta_start)[None, :]
    errs = []
    for dt in (2e-4, 1e-4):
        res = sde.simulate_rc(e2.reaction_coordinate(), e2.model(), e2.drive(), y0,
                              IntegratorConfig(dt, noise_scale=0.0), beta=5.0)
        y = res.x_final[0]
        errs.append(abs(math.atan2(y[1], y[0]) - math.pi / 2))
        assert res.max_constraint_violation[0] < 1e-4
    # no projection step: the angle drifts off the drive at first order in dt
    assert errs[1] < 2e-5
    assert 1.6 < errs[0] / errs[1] < 2.4


def test_three_atom_off_level_set_start_is_rejected():
    e2 = ExampleTwo()
    y0 = e2.embed(5.0, 5.0, 1.0)[None, :]
    with pytest.raises(ValueError, match="off the level set"):
        sde.simulate_rc(e2.reaction_coordinate(), e2.model(), e2.drive(), y0, IntegratorConfig(1e-3), beta=5.0)


def test_constraint_drift_stays_below_tolerance():
    e2 = ExampleTwo(kappa=0.6)
    from neqfe.oracle import level_set_law
    law = level_set_law(e2, e2.theta_start)
    res = sde.simulate_rc(e2.reaction_coordinate(), e2.model(), e2.drive(), law, IntegratorConfig(1e-4, seed=3),
                          beta=5.0, tau=0.3, n_traj=200)
    assert res.n_diverged == 0
    assert res.max_constraint_violation.max() <= 1e-3


def test_perfect_escort_gives_zero_work():
    esc = EscortField(_unit_flow, _zero_div)
    res = sde.simulate_escorted(HARMONIC, P1, esc, GaussianLaw(0.0, 1.0), IntegratorConfig(1e-3, seed=1),
                                beta=1.0, n_traj=500)
    np.testing.assert_allclose(res.work, 0.0, atol=1e-12)


def test_partial_escort_satisfies_jarzynski():
    esc = escort_with_fd(_half_flow, 1)
    res = sde.simulate_escorted(HARMONIC, P1, esc, GaussianLaw(0.0, 1.0), IntegratorConfig(1e-3, seed=2),
                                beta=1.0, n_traj=20000)
    t = np.exp(-res.work)
    assert abs(t.mean() - 1.0) < 3 * t.std() / math.sqrt(t.size) + 2e-3
    # escorting lowers dissipation relative to the bare protocol
    bare = sde.simulate_alchemical(HARMONIC, P1, GaussianLaw(0.0, 1.0), IntegratorConfig(1e-3, seed=2),
                                   beta=1.0, n_traj=20000)
    assert res.work.mean() < bare.work.mean()


def test_girsanov_weight_has_unit_mean():
    ctrl = ControlField(gaussian_basis(), [-3.0, 7.0])
    res = sde.simulate_alchemical(M1, P1, MU0, IntegratorConfig(1e-3, seed=11), beta=5.0, n_traj=100000,
                                  control=ctrl, reference=MU0)
    r = np.exp(res.log_weight)
    assert abs(r.mean() - 1.0) < 3 * r.std() / math.sqrt(r.size)
    assert r.std() > 0.05


def test_initial_reweighting_has_unit_mean():
    shifted = GaussianLaw(-0.8, 0.25)
    res = sde.simulate_alchemical(M1, P1, shifted, IntegratorConfig(0.05, seed=4), beta=5.0, n_traj=50000,
                                  reference=MU0)
    r = np.exp(res.log_weight)
    expected = np.exp(MU0.log_density(res.x_initial[:, 0]) - shifted.log_density(res.x_initial[:, 0]))
    np.testing.assert_allclose(r, expected, rtol=1e-12)
    assert abs(r.mean() - 1.0) < 3 * r.std() / math.sqrt(r.size)


def test_time_scale_leaves_girsanov_weight_unbiased():
    ctrl = ControlField(gaussian_basis(), [-2.0, 4.0])
    res = sde.simulate_alchemical(M1, P1, MU0, IntegratorConfig(1e-3, seed=12), beta=5.0, n_traj=50000,
                                  control=ctrl, tau=0.5)
    r = np.exp(res.log_weight)
    assert abs(r.mean() - 1.0) < 3 * r.std() / math.sqrt(r.size)


@njit
def _sym_schedule(t):
    return math.sin(math.pi * t)


@njit
def _sym_rate(t):
    return math.pi * math.cos(math.pi * t)


def test_symmetric_protocol_reversal_has_same_work_law():
    p = schedule_protocol(_sym_schedule, _sym_rate)
    cfg_f = IntegratorConfig(1e-3, seed=21, stream=0)
    cfg_r = IntegratorConfig(1e-3, seed=21, stream=1)
    f = sde.simulate_alchemical(M1, p, MU0, cfg_f, beta=5.0, n_traj=10000)
    r = sde.simulate_reversed(M1, p, MU0, cfg_r, beta=5.0, n_traj=10000)
    assert stats.ks_2samp(f.work, r.work).pvalue > 0.01


def test_weak_order_by_coupled_refinement():
    # half-step noise pairs sum to the coarse increment, so both levels share a path
    n, n_fine = 20000, 400
    rng = np.random.default_rng(8)
    x0 = MU0.sample(rng.random((n, 1)))
    fine = rng.standard_normal((n, n_fine, 1))
    coarse = (fine[:, 0::2] + fine[:, 1::2]) / math.sqrt(2)
    a = sde.simulate_alchemical(M1, P1, x0, IntegratorConfig(1 / n_fine), beta=5.0, noise=fine)
    b = sde.simulate_alchemical(M1, P1, x0, IntegratorConfig(2 / n_fine), beta=5.0, noise=coarse)
    ta, tb = np.exp(-5 * a.work), np.exp(-5 * b.work)
    diff = tb - ta
    se = ta.std() / math.sqrt(n)
    # the O(dt) bias between levels is far below the Monte Carlo error
    assert abs(diff.mean()) < se
    # mean work converges at first order: halving dt again halves the gap
    c = sde.simulate_alchemical(M1, P1, x0, IntegratorConfig(4 / n_fine), beta=5.0,
                                noise=(coarse[:, 0::2] + coarse[:, 1::2]) / math.sqrt(2))
    g1 = abs(c.work.mean() - b.work.mean())
    g2 = abs(b.work.mean() - a.work.mean())
    assert 1.4 < g1 / g2 < 2.9


def test_results_do_not_depend_on_threads_or_blocks(monkeypatch):
    ctrl = ControlField(gaussian_basis(), [-3.0, 7.0])
    kw = dict(beta=5.0, n_traj=1500, control=ctrl, reference=MU0, checkpoints=10)
    cfg = IntegratorConfig(1e-2, seed=9)
    monkeypatch.setenv(THREADS_ENV, "1")
    a = sde.simulate_alchemical(M1, P1, GaussianLaw(0.5, 0.2), cfg, **kw)
    monkeypatch.setenv(THREADS_ENV, "4")
    monkeypatch.setattr(sde, "BLOCK", 100)
    monkeypatch.setattr(sde, "CHUNK_FLOATS", 5000)
    b = sde.simulate_alchemical(M1, P1, GaussianLaw(0.5, 0.2), cfg, **kw)
    for name in ("x_initial", "x_final", "work", "log_weight", "work_checkpoints", "logw_checkpoints"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_index_offset_selects_the_same_streams():
    cfg = IntegratorConfig(1e-2, seed=3)
    whole = sde.simulate_alchemical(M1, P1, MU0, cfg, beta=5.0, n_traj=300)
    tail = sde.simulate_alchemical(M1, P1, MU0, cfg, beta=5.0, n_traj=100, index_offset=200)
    np.testing.assert_array_equal(whole.work[200:], tail.work)


def test_checkpoints_end_at_final_values():
    res = sde.simulate_alchemical(M1, P1, MU0, IntegratorConfig(1e-3, seed=1), beta=5.0, n_traj=50, checkpoints=20)
    np.testing.assert_allclose(res.checkpoint_times, np.linspace(0, 1, 21), atol=1e-12)
    np.testing.assert_array_equal(res.work_checkpoints[:, -1], res.work)
    np.testing.assert_array_equal(res.work_checkpoints[:, 0], 0.0)
    with pytest.raises(ValueError, match="divide"):
        sde.simulate_alchemical(M1, P1, MU0, IntegratorConfig(1e-3), beta=5.0, n_traj=5, checkpoints=7)


def test_divergence_is_flagged():
    res = sde.simulate_alchemical(M1, P1, np.array([[40.0], [-1.0]]), IntegratorConfig(0.05, noise_scale=0.0),
                                  beta=5.0)
    assert res.diverged.tolist() == [True, False]


@njit
def _phi_const(x, t, data, out):
    out[0, 0] = data[0]


def test_ce_statistics_for_constant_basis():
    c, dt, beta = 0.7, 0.01, 5.0
    basis = AnsatzBasis(1, 1, _phi_const, np.array([c]))
    xi = np.random.default_rng(2).standard_normal((1, 100, 1))
    res = sde.simulate_alchemical(M1, P1, np.array([[-1.0]]), IntegratorConfig(dt), beta=beta, noise=xi,
                                  ce_basis=basis)
    assert res.ce_phiphi[0, 0, 0] == pytest.approx(c * c * 1.0, rel=1e-12)
    assert res.ce_phidw[0, 0] == pytest.approx(c * math.sqrt(2 / beta) * math.sqrt(dt) * xi.sum(), rel=1e-10)


def test_bad_inputs():
    with pytest.raises(ValueError):
        IntegratorConfig(0.0)
    with pytest.raises(ValueError):
        sde.simulate_alchemical(M1, P1, MU0, IntegratorConfig(1e-2), beta=5.0)
    with pytest.raises(ValueError):
        sde.simulate_alchemical(M1, P1, np.zeros((3, 2)), IntegratorConfig(1e-2), beta=5.0)
    with pytest.raises(ValueError, match="noise"):
        sde.simulate_alchemical(M1, P1, np.zeros((2, 1)), IntegratorConfig(0.5), beta=5.0, noise=np.zeros((2, 3, 1)))
    with pytest.raises(ValueError):
        sde.simulate_alchemical(M1, linear_protocol([0.0, 0.0], [1.0, 1.0]), MU0, IntegratorConfig(1e-2), beta=5.0,
                                n_traj=3)


def test_burn_in_sampler_matches_exact_level_set_law():
    from neqfe.oracle import level_set_law
    e2 = ExampleTwo()
    rc, m = e2.reaction_coordinate(), e2.model()
    seed_point = e2.embed(e2.bond_length(e2.theta_start), e2.l_eq, e2.theta_start)
    y = sde.sample_initial_rc(rc, m, e2.theta_start, seed_point, IntegratorConfig(1e-3, seed=13), beta=5.0,
                              n=1000, burn_in=2.0)
    assert y.shape == (1000, 3)
    exact = level_set_law(e2, e2.theta_start).sample(np.random.default_rng(1).random((20000, 2)))
    assert stats.ks_2samp(np.hypot(y[:, 0], y[:, 1]), np.hypot(exact[:, 0], exact[:, 1])).pvalue > 0.01
    assert stats.ks_2samp(y[:, 2], exact[:, 2]).pvalue > 0.01
    np.testing.assert_allclose(np.arctan2(y[:, 1], y[:, 0]), e2.theta_start, atol=1e-3)
