"""Deterministic quadrature references for free energies and equilibrium laws.

One-dimensional alchemical models are integrated on a uniform grid with
Simpson's rule.  The three-atom model is reduced to the level-set coordinates
(r_BC, y3): by the co-area formula the equilibrium law on the set theta = z has
density proportional to exp(-beta V) r dr dy3, and its normalizer Q(theta)
gives the reaction-coordinate free energy F(theta) = -log Q(theta) / beta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .laws import GridLaw, ProductLaw
from .model import ExampleTwo, PotentialModel, Protocol


class QuadratureError(ValueError):
    """The integrand has not decayed at the edge of the quadrature domain."""


@dataclass(frozen=True)
class QuadratureConfig:
    n_nodes: int = 20001
    domain: tuple = (-5.0, 5.0)
    r_range: tuple = (2.5, 9.5)
    y3_range: tuple = (3.0, 7.0)
    n_r: int = 1751
    n_y3: int = 1001
    decay_tol: float = 1e-12

    def __post_init__(self):
        for n in (self.n_nodes, self.n_r, self.n_y3):
            if n < 3 or n % 2 == 0:
                raise ValueError("node counts must be odd and at least 3 for Simpson's rule")

    def refined(self) -> "QuadratureConfig":
        return QuadratureConfig(2 * self.n_nodes - 1, self.domain, self.r_range, self.y3_range,
                                2 * self.n_r - 1, 2 * self.n_y3 - 1, self.decay_tol)


def _nodes(cfg: QuadratureConfig) -> np.ndarray:
    return np.linspace(cfg.domain[0], cfg.domain[1], cfg.n_nodes)


def _check_decay(logf: np.ndarray, what: str, tol: float):
    top = logf.max()
    edge = max(logf[0], logf[-1]) if logf.ndim == 1 else max(logf[0].max(), logf[-1].max(),
                                                               logf[:, 0].max(), logf[:, -1].max())
    if edge - top > math.log(tol):
        raise QuadratureError(f"{what}: integrand at the domain edge is {math.exp(edge - top):.3g} "
                              f"of its maximum (tolerance {tol:g}); enlarge the domain")


def log_z_of_lambda(model: PotentialModel, lam, beta: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """log of Z(lambda) = int exp(-beta V(x, lambda)) dx for a one-dimensional model."""
    if model.dim != 1:
        raise ValueError("grid quadrature is implemented for one-dimensional models")
    x = _nodes(cfg)
    logf = -beta * model.energies(x, lam)
    if not np.all(np.isfinite(logf)):
        raise QuadratureError("non-finite potential on the quadrature grid")
    _check_decay(logf, f"Z(lambda={np.ravel(lam).tolist()})", cfg.decay_tol)
    m = logf.max()
    return float(m + math.log(simpson(np.exp(logf - m), x=x)))


def z_of_lambda(model, lam, beta, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    return math.exp(log_z_of_lambda(model, lam, beta, cfg))


def free_energy(model, lam0, lam1, beta, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """F(lam1) - F(lam0) = -log(Z(lam1) / Z(lam0)) / beta."""
    return -(log_z_of_lambda(model, lam1, beta, cfg) - log_z_of_lambda(model, lam0, beta, cfg)) / beta


def delta_f_curve(model, protocol: Protocol, beta, times, cfg: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Delta F(t) = F(lambda(t)) - F(lambda(0)) at each time in ``times``."""
    l0 = log_z_of_lambda(model, protocol.lam(0.0), beta, cfg)
    return np.array([-(log_z_of_lambda(model, protocol.lam(t), beta, cfg) - l0) / beta for t in times])


def mean_grad_lambda(model, lam, beta, cfg: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """E[grad_lambda V] under the equilibrium law at lambda (one-dimensional models)."""
    x = _nodes(cfg)
    logf = -beta * model.energies(x, lam)
    _check_decay(logf, "mean_grad_lambda", cfg.decay_tol)
    w = np.exp(logf - logf.max())
    g = model.lambda_gradients(x, lam)
    z = simpson(w, x=x)
    return np.array([simpson(w * g[:, j], x=x) / z for j in range(g.shape[1])])


def equilibrium_sampler_1d(model, lam, beta, cfg: QuadratureConfig = QuadratureConfig()) -> GridLaw:
    """Inverse-CDF sampler of exp(-beta V(., lambda)) on the quadrature grid."""
    x = _nodes(cfg)
    logf = -beta * model.energies(x, lam)
    _check_decay(logf, "equilibrium_sampler_1d", cfg.decay_tol)
    return GridLaw(x, np.exp(logf - logf.max()))


# ------------------------------------------------------- three-atom model

def _polar_grid(cfg: QuadratureConfig):
    r = np.linspace(cfg.r_range[0], cfg.r_range[1], cfg.n_r)
    y3 = np.linspace(cfg.y3_range[0], cfg.y3_range[1], cfg.n_y3)
    return r, y3


def _log_level_integrand(spec: ExampleTwo, theta: float, cfg: QuadratureConfig):
    r, y3 = _polar_grid(cfg)
    if r[0] <= 0:
        raise ValueError("r range must be positive")
    V = spec.energy_polar(r[:, None], y3[None, :], theta)
    logf = -spec.beta * V + np.log(r)[:, None]
    _check_decay(logf, f"Q(theta={theta:.6g})", cfg.decay_tol)
    return r, y3, logf


def log_q_of_theta(spec: ExampleTwo, theta: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """log Q(theta), Q(theta) = int int exp(-beta V) r dr dy3 on the level set theta."""
    r, y3, logf = _log_level_integrand(spec, theta, cfg)
    m = logf.max()
    inner = simpson(np.exp(logf - m), x=y3, axis=1)
    return float(m + math.log(simpson(inner, x=r)))


def q_of_theta(spec, theta, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    return math.exp(log_q_of_theta(spec, theta, cfg))


def delta_f_theta(spec: ExampleTwo, theta1: float, theta0: float | None = None,
                  cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """F(theta1) - F(theta0) for the angle coordinate (theta0 defaults to the drive's start)."""
    if theta0 is None:
        theta0 = spec.theta_start
    return -(log_q_of_theta(spec, theta1, cfg) - log_q_of_theta(spec, theta0, cfg)) / spec.beta


def delta_f_theta_curve(spec: ExampleTwo, thetas, cfg: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    l0 = log_q_of_theta(spec, spec.theta_start, cfg)
    return np.array([-(log_q_of_theta(spec, th, cfg) - l0) / spec.beta for th in thetas])


def rc_level_density(spec: ExampleTwo, theta: float, cfg: QuadratureConfig = QuadratureConfig()):
    """Normalized density of (r_BC, y3) under the level-set equilibrium at theta.

    Returns (r, y3, p) with p[i, j] the density at (r[i], y3[j]).
    """
    r, y3, logf = _log_level_integrand(spec, theta, cfg)
    p = np.exp(logf - logf.max())
    p /= simpson(simpson(p, x=y3, axis=1), x=r)
    return r, y3, p


def level_set_law(spec: ExampleTwo, theta: float, cfg: QuadratureConfig = QuadratureConfig()) -> ProductLaw:
    """Exact sampler of the level-set equilibrium at theta.

    The potential separates into a part in (r_BC, theta) and a part in y3, so
    the level-set law is the product of its two marginals.
    """
    r, y3, p = rc_level_density(spec, theta, cfg)
    law_r = GridLaw(r, simpson(p, x=y3, axis=1))
    law_y3 = GridLaw(y3, simpson(p, x=r, axis=0))
    return ProductLaw(law_r, law_y3, lambda a, b: spec.embed(a, b, theta), 3)


def mean_force_theta(spec: ExampleTwo, theta: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """E[dV/dtheta at fixed (r_BC, y3)] under the level-set law, which equals dF/dtheta."""
    r, y3, p = rc_level_density(spec, theta, cfg)
    L = spec.bond_length(theta)
    dL = spec.kappa * spec.l_eq * math.cos(theta)
    d = theta - spec.theta0
    dv3 = 2 * spec.k_theta * (d * d - spec.dtheta ** 2) * d - spec.k_theta1
    force = -(r - L) / spec.eps * dL + dv3
    pr = simpson(p, x=y3, axis=1)
    return float(simpson(pr * force, x=r))

