"""Potentials, protocols, reaction coordinates and control ansatz bases.

Every callable stored on these objects is a numba ``njit`` function so that the
integrators in :mod:`neqfe.sde` can call them from compiled loops.  The calling
conventions are

* ``energy(x, lam) -> float``
* ``grad_x(x, lam, out)`` and ``grad_lambda(x, lam, out)``
* ``lambda_of_t(t, out)`` and ``rate(lam, t, out)``
* ``xi(y, out)``, ``grad_xi(y, out)`` with ``out`` of shape (n, d),
  ``div_p(y, out)`` and ``div_g(y, out)``
* ``phi(x, t, data, out)`` with ``out`` of shape (k, n)

``x``, ``lam`` and ``y`` are 1-d float64 arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numba import njit


class ModelError(ValueError):
    """Raised for non-finite potential values or malformed model definitions."""


class GeometryError(ValueError):
    """Raised when the reaction-coordinate geometry is singular at a state."""


@dataclass(frozen=True)
class PotentialModel:
    """A potential V(x, lambda) on R^n with its gradients."""
    dim: int
    n_lambda: int
    energy: Callable
    grad_x: Callable
    grad_lambda: Callable
    name: str = "potential"

    def value(self, x, lam) -> float:
        x, lam = _as_vec(x, self.dim), _as_vec(lam, self.n_lambda)
        v = float(self.energy(x, lam))
        if not math.isfinite(v):
            raise ModelError(f"{self.name}: non-finite energy at x={x.tolist()}, lambda={lam.tolist()}")
        return v

    def gradient_x(self, x, lam) -> np.ndarray:
        x, lam = _as_vec(x, self.dim), _as_vec(lam, self.n_lambda)
        out = np.empty(self.dim)
        self.grad_x(x, lam, out)
        if not np.all(np.isfinite(out)):
            raise ModelError(f"{self.name}: non-finite gradient at x={x.tolist()}")
        return out

    def gradient_lambda(self, x, lam) -> np.ndarray:
        x, lam = _as_vec(x, self.dim), _as_vec(lam, self.n_lambda)
        out = np.empty(self.n_lambda)
        self.grad_lambda(x, lam, out)
        if not np.all(np.isfinite(out)):
            raise ModelError(f"{self.name}: non-finite lambda-gradient at x={x.tolist()}")
        return out

    def energies(self, xs, lam) -> np.ndarray:
        """Energy at each row of ``xs`` (shape (N, dim) or (N,) when dim is 1)."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        return _energy_batch(self.energy, np.ascontiguousarray(xs), _as_vec(lam, self.n_lambda))

    def gradients_x(self, xs, lam) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        out = np.empty((xs.shape[0], self.dim))
        _grad_batch(self.grad_x, np.ascontiguousarray(xs), _as_vec(lam, self.n_lambda), out)
        return out

    def lambda_gradients(self, xs, lam) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        out = np.empty((xs.shape[0], self.n_lambda))
        _grad_batch(self.grad_lambda, np.ascontiguousarray(xs), _as_vec(lam, self.n_lambda), out)
        return out


def eval_potential(model: PotentialModel, x, lam) -> tuple[float, np.ndarray, np.ndarray]:
    """Return (V, grad_x V, grad_lambda V) at a single point."""
    return model.value(x, lam), model.gradient_x(x, lam), model.gradient_lambda(x, lam)


def _as_vec(v, n: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if a.shape[0] != n:
        raise ModelError(f"expected a vector of length {n}, got shape {np.shape(v)}")
    return np.ascontiguousarray(a)


@njit(cache=True)
def _energy_batch(energy, xs, lam):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = energy(xs[i], lam)
    return out


@njit(cache=True)
def _grad_batch(grad, xs, lam, out):
    for i in range(xs.shape[0]):
        grad(xs[i], lam, out[i])


def potential_from_energy(energy: Callable, dim: int, n_lambda: int, *,
                          grad_x: Callable | None = None, grad_lambda: Callable | None = None,
                          h: float = 1e-6, name: str = "potential") -> PotentialModel:
    """Build a model from a jitted energy, filling missing gradients with central differences."""
    if grad_x is None:
        grad_x = _fd_first_arg(energy, h)
    if grad_lambda is None:
        grad_lambda = _fd_second_arg(energy, h)
    return PotentialModel(dim, n_lambda, energy, grad_x, grad_lambda, name)


def _fd_first_arg(energy, h):
    @njit
    def grad(x, lam, out):
        xp = x.copy()
        for i in range(x.shape[0]):
            xp[i] = x[i] + h
            ep = energy(xp, lam)
            xp[i] = x[i] - h
            em = energy(xp, lam)
            xp[i] = x[i]
            out[i] = (ep - em) / (2.0 * h)
    return grad


def _fd_second_arg(energy, h):
    @njit
    def grad(x, lam, out):
        lp = lam.copy()
        for i in range(lam.shape[0]):
            lp[i] = lam[i] + h
            ep = energy(x, lp)
            lp[i] = lam[i] - h
            em = energy(x, lp)
            lp[i] = lam[i]
            out[i] = (ep - em) / (2.0 * h)
    return grad


# ---------------------------------------------------------------- protocols

@dataclass(frozen=True)
class Protocol:
    """A driving schedule: lambda(t) on [0, horizon] together with d lambda/dt = f(lambda, t).

    The same object describes the reaction-coordinate drive z(t) for constrained
    dynamics, in which case ``n_lambda`` is the reaction-coordinate dimension.
    """
    n_lambda: int
    lambda_of_t: Callable
    rate: Callable
    horizon: float = 1.0
    name: str = "protocol"

    def lam(self, t: float) -> np.ndarray:
        out = np.empty(self.n_lambda)
        self.lambda_of_t(float(t), out)
        return out

    def f(self, t: float) -> np.ndarray:
        out = np.empty(self.n_lambda)
        self.rate(self.lam(t), float(t), out)
        return out

    @cached_property
    def _reversed(self) -> "Protocol":
        return Protocol(self.n_lambda, _reverse_schedule(self.lambda_of_t, self.horizon),
                        _reverse_rate(self.rate, self.horizon), self.horizon, self.name + "-reversed")

    def reversed(self) -> "Protocol":
        """lambda_R(s) = lambda(T - s) with rate f_R(lambda, s) = -f(lambda, T - s)."""
        return self._reversed


def _reverse_schedule(fn, T):
    @njit
    def lam_r(t, out):
        fn(T - t, out)
    return lam_r


def _reverse_rate(fn, T):
    @njit
    def rate_r(lam, t, out):
        fn(lam, T - t, out)
        for i in range(out.shape[0]):
            out[i] = -out[i]
    return rate_r


_PROTOCOL_CACHE: dict = {}


def linear_protocol(start, end, horizon: float = 1.0, name: str = "linear") -> Protocol:
    """Constant-speed path from ``start`` to ``end`` over [0, horizon].

    Instances are memoized so repeated construction does not trigger recompilation.
    """
    a = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    b = np.atleast_1d(np.asarray(end, dtype=float)).copy()
    if a.shape != b.shape:
        raise ModelError("protocol endpoints differ in shape")
    key = (tuple(a), tuple(b), float(horizon), name)
    if key not in _PROTOCOL_CACHE:
        _PROTOCOL_CACHE[key] = _linear_protocol(a, b, horizon, name)
    return _PROTOCOL_CACHE[key]


def _linear_protocol(a, b, horizon, name):
    speed = (b - a) / horizon
    n = a.shape[0]
    T = float(horizon)

    @njit
    def lam_of_t(t, out):
        s = min(max(t, 0.0), T)
        for i in range(n):
            out[i] = a[i] + speed[i] * s

    @njit
    def rate(lam, t, out):
        for i in range(n):
            out[i] = speed[i]

    return Protocol(n, lam_of_t, rate, T, name)


def schedule_protocol(schedule: Callable, derivative: Callable, horizon: float = 1.0,
                      name: str = "schedule") -> Protocol:
    """Scalar protocol from jitted ``schedule(t) -> float`` and ``derivative(t) -> float``."""
    @njit
    def lam_of_t(t, out):
        out[0] = schedule(t)

    @njit
    def rate(lam, t, out):
        out[0] = derivative(t)

    return Protocol(1, lam_of_t, rate, float(horizon), name)


# ----------------------------------------------------- reaction coordinates

@dataclass(frozen=True)
class ReactionCoordinate:
    """xi: R^n -> R^d with its Jacobian and the two divergences used by the dynamics.

    ``div_p`` is the row-wise divergence of P = I - grad_xi Psi^-1 grad_xi^T and
    ``div_g`` the divergence of each column of grad_xi Psi^-1, with
    Psi = grad_xi^T grad_xi.  Only the identity diffusion matrix is supported.
    """
    dim: int
    d: int
    xi: Callable
    grad_xi: Callable
    div_p: Callable
    div_g: Callable
    name: str = "reaction-coordinate"

    def value(self, y) -> np.ndarray:
        y = _as_vec(y, self.dim)
        out = np.empty(self.d)
        self.xi(y, out)
        if not np.all(np.isfinite(out)):
            raise GeometryError(f"{self.name}: reaction coordinate undefined at y={y.tolist()}")
        return out


@dataclass(frozen=True)
class Projection:
    P: np.ndarray
    Psi: np.ndarray
    grad_xi: np.ndarray
    div_p: np.ndarray
    div_g: np.ndarray


def build_projection(rc: ReactionCoordinate, y, cond_cap: float = 1e12) -> Projection:
    """Projection onto the tangent space of the level set of xi through ``y``."""
    y = _as_vec(y, rc.dim)
    J = np.empty((rc.dim, rc.d))
    try:
        rc.grad_xi(y, J)
    except ZeroDivisionError:
        J[:] = np.nan
    if not np.all(np.isfinite(J)):
        raise GeometryError(f"{rc.name}: grad xi not finite at y={y.tolist()}")
    Psi = J.T @ J
    if not np.isfinite(np.linalg.cond(Psi)) or np.linalg.cond(Psi) > cond_cap or np.linalg.det(Psi) <= 0:
        raise GeometryError(f"{rc.name}: Psi singular at y={y.tolist()}")
    P = np.eye(rc.dim) - J @ np.linalg.solve(Psi, J.T)
    dp = np.empty(rc.dim)
    dg = np.empty(rc.d)
    rc.div_p(y, dp)
    rc.div_g(y, dg)
    return Projection(P, Psi, J, dp, dg)


def reaction_coordinate_with_fd(xi: Callable, grad_xi: Callable, dim: int, d: int,
                                h: float = 1e-5, name: str = "reaction-coordinate") -> ReactionCoordinate:
    """Reaction coordinate whose divergence terms come from central differences of P and G."""
    @njit
    def _geom(y, P, G):
        J = np.empty((dim, d))
        grad_xi(y, J)
        Psi = J.T @ J
        Pinv = np.linalg.inv(Psi)
        G[:, :] = J @ Pinv
        P[:, :] = -G @ J.T
        for i in range(dim):
            P[i, i] += 1.0

    @njit
    def div_p(y, out):
        yp = y.copy()
        Pp = np.empty((dim, dim))
        Pm = np.empty((dim, dim))
        Gt = np.empty((dim, d))
        out[:] = 0.0
        for j in range(dim):
            yp[j] = y[j] + h
            _geom(yp, Pp, Gt)
            yp[j] = y[j] - h
            _geom(yp, Pm, Gt)
            yp[j] = y[j]
            for i in range(dim):
                out[i] += (Pp[i, j] - Pm[i, j]) / (2.0 * h)

    @njit
    def div_g(y, out):
        yp = y.copy()
        Gp = np.empty((dim, d))
        Gm = np.empty((dim, d))
        Pt = np.empty((dim, dim))
        out[:] = 0.0
        for j in range(dim):
            yp[j] = y[j] + h
            _geom(yp, Pt, Gp)
            yp[j] = y[j] - h
            _geom(yp, Pt, Gm)
            yp[j] = y[j]
            for g in range(d):
                out[g] += (Gp[j, g] - Gm[j, g]) / (2.0 * h)

    return ReactionCoordinate(dim, d, xi, grad_xi, div_p, div_g, name)


# ------------------------------------------------------------ ansatz bases

@dataclass(frozen=True)
class AnsatzBasis:
    """k vector fields phi_l(x, t) on R^n evaluated together by ``phi(x, t, data, out)``."""
    k: int
    dim: int
    phi: Callable
    data: np.ndarray = field(default_factory=lambda: np.zeros(1))
    labels: tuple = ()

    def evaluate(self, x, t: float) -> np.ndarray:
        out = np.empty((self.k, self.dim))
        self.phi(_as_vec(x, self.dim), float(t), self.data, out)
        return out


@dataclass(frozen=True)
class ControlField:
    """The control u(x, t) = sum_l omega_l phi_l(x, t)."""
    basis: AnsatzBasis
    omega: np.ndarray

    def __post_init__(self):
        om = np.ascontiguousarray(np.asarray(self.omega, dtype=float).ravel())
        if om.shape[0] != self.basis.k:
            raise ModelError(f"omega has {om.shape[0]} entries for a basis of size {self.basis.k}")
        object.__setattr__(self, "omega", om)

    def evaluate(self, x, t: float) -> np.ndarray:
        return self.omega @ self.basis.evaluate(x, t)


@njit(cache=True)
def _phi_cells(x, t, data, out):
    # data = [lo, hi, k]; indicator of cell l scaled by (1 - t)
    lo = data[0]
    hi = data[1]
    k = out.shape[0]
    out[:, 0] = 0.0
    if x[0] >= lo and x[0] < hi:
        j = int((x[0] - lo) / (hi - lo) * k)
        if j > k - 1:
            j = k - 1
        out[j, 0] = 1.0 - t


@njit(cache=True)
def _phi_gaussian(x, t, data, out):
    # data = [c_1, w_1, c_2, w_2, ...]; phi_l = d/dx (1 - t) exp(-(x - c_l)^2 / w_l)
    s = 1.0 - t
    for l in range(out.shape[0]):
        c = data[2 * l]
        w = data[2 * l + 1]
        d = x[0] - c
        out[l, 0] = -s * 2.0 * d / w * math.exp(-d * d / w)


def cell_basis(k: int = 30, lo: float = -1.3, hi: float = 1.3) -> AnsatzBasis:
    """Indicators of k equal cells of [lo, hi], damped by (1 - t); zero outside the interval."""
    labels = tuple(f"cell[{lo + (hi - lo) * i / k:.4f},{lo + (hi - lo) * (i + 1) / k:.4f})" for i in range(k))
    return AnsatzBasis(k, 1, _phi_cells, np.array([lo, hi, float(k)]), labels)


def gaussian_basis(centers=(0.0, 1.2), widths=(2.0, 4.5)) -> AnsatzBasis:
    """x-derivatives of the bumps (1 - t) exp(-(x - c)^2 / w)."""
    data = np.array([v for cw in zip(centers, widths) for v in cw], dtype=float)
    labels = tuple(f"gauss(c={c},w={w})" for c, w in zip(centers, widths))
    return AnsatzBasis(len(centers), 1, _phi_gaussian, data, labels)


# ----------------------------------------------------------------- examples

@dataclass(frozen=True)
class ExampleOne:
    """Interpolation from the harmonic well (x+1)^2/2 to the tilted double well."""
    beta: float = 5.0
    tilt: float = 0.4
    horizon: float = 1.0
    domain: tuple = (-5.0, 5.0)

    def model(self) -> PotentialModel:
        return _example_one_model(self.tilt)

    def protocol(self) -> Protocol:
        return linear_protocol(0.0, 1.0, self.horizon, "lambda=t")

    def initial_mean(self) -> float:
        """mu_0 is exactly N(-1, 1/beta)."""
        return -1.0

    def end_potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.25 * (x * x - 1.0) ** 2 - self.tilt * x


_EX1_CACHE: dict = {}


def _example_one_model(tilt: float) -> PotentialModel:
    if tilt in _EX1_CACHE:
        return _EX1_CACHE[tilt]
    a = float(tilt)

    @njit
    def energy(x, lam):
        v0 = 0.5 * (x[0] + 1.0) ** 2
        v1 = 0.25 * (x[0] * x[0] - 1.0) ** 2 - a * x[0]
        return (1.0 - lam[0]) * v0 + lam[0] * v1

    @njit
    def grad_x(x, lam, out):
        out[0] = (1.0 - lam[0]) * (x[0] + 1.0) + lam[0] * (x[0] * (x[0] * x[0] - 1.0) - a)

    @njit
    def grad_lambda(x, lam, out):
        out[0] = 0.25 * (x[0] * x[0] - 1.0) ** 2 - a * x[0] - 0.5 * (x[0] + 1.0) ** 2

    m = PotentialModel(1, 1, energy, grad_x, grad_lambda, "harmonic-to-double-well")
    _EX1_CACHE[tilt] = m
    return m


@dataclass(frozen=True)
class ExampleTwo:
    """Three-atom model: bond lengths r_BC, r_AB and the angle theta, driven along theta."""
    kappa: float = 0.3
    beta: float = 5.0
    eps: float = 0.1
    k_theta: float = 20.0
    k_theta1: float = 0.3
    l_eq: float = 5.0
    theta0: float = math.pi / 3
    dtheta: float = math.pi / 6
    theta_start: float = math.pi / 6
    theta_end: float = math.pi / 2
    horizon: float = 1.0

    def bond_length(self, theta):
        return (1.0 + self.kappa * (np.sin(theta) - 0.5)) * self.l_eq

    def angle_energy(self, theta):
        d = np.asarray(theta, dtype=float) - self.theta0
        return 0.5 * self.k_theta * (d * d - self.dtheta ** 2) ** 2 - self.k_theta1 * d

    def energy_polar(self, r, y3, theta):
        """V written in (r_BC, y3, theta); broadcasts."""
        L = self.bond_length(theta)
        return ((r - L) ** 2 + (np.abs(y3) - self.l_eq) ** 2) / (2 * self.eps) + self.angle_energy(theta)

    def embed(self, r, y3, theta) -> np.ndarray:
        """Cartesian state y for given (r_BC, y3) on the level set theta."""
        r, y3 = np.broadcast_arrays(np.asarray(r, float), np.asarray(y3, float))
        return np.stack([r * math.cos(theta), r * math.sin(theta), y3], axis=-1)

    def model(self) -> PotentialModel:
        return _example_two_model(self._key())

    def reaction_coordinate(self) -> ReactionCoordinate:
        return _ANGLE_RC

    def drive(self) -> Protocol:
        return linear_protocol(self.theta_start, self.theta_end, self.horizon, "theta")

    def _key(self):
        return (self.kappa, self.eps, self.k_theta, self.k_theta1, self.l_eq, self.theta0, self.dtheta)


_EX2_CACHE: dict = {}


def _example_two_model(key) -> PotentialModel:
    if key in _EX2_CACHE:
        return _EX2_CACHE[key]
    kappa, eps, kt, kt1, leq, th0, dth = (float(v) for v in key)
    inv_eps = 1.0 / eps

    @njit
    def _parts(y):
        r = math.sqrt(y[0] * y[0] + y[1] * y[1])
        th = math.atan2(y[1], y[0])
        return r, th

    @njit
    def energy(y, lam):
        r, th = _parts(y)
        L = (1.0 + kappa * (math.sin(th) - 0.5)) * leq
        d = th - th0
        v3 = 0.5 * kt * (d * d - dth * dth) ** 2 - kt1 * d
        a = abs(y[2]) - leq
        return 0.5 * inv_eps * ((r - L) ** 2 + a * a) + v3

    @njit
    def grad_x(y, lam, out):
        r, th = _parts(y)
        L = (1.0 + kappa * (math.sin(th) - 0.5)) * leq
        dL = kappa * leq * math.cos(th)
        d = th - th0
        dv3 = 2.0 * kt * (d * d - dth * dth) * d - kt1
        dr = (r - L) * inv_eps
        dth_v = -(r - L) * inv_eps * dL + dv3
        r2 = r * r
        out[0] = dr * y[0] / r - dth_v * y[1] / r2
        out[1] = dr * y[1] / r + dth_v * y[0] / r2
        s = 1.0 if y[2] >= 0.0 else -1.0
        out[2] = (abs(y[2]) - leq) * inv_eps * s

    @njit
    def grad_lambda(y, lam, out):
        pass

    m = PotentialModel(3, 0, energy, grad_x, grad_lambda, f"three-atom(kappa={kappa})")
    _EX2_CACHE[key] = m
    return m


@njit(cache=True)
def _angle_xi(y, out):
    r2 = y[0] * y[0] + y[1] * y[1]
    if r2 < 1e-16:
        out[0] = np.nan
    else:
        out[0] = math.atan2(y[1], y[0])


@njit(cache=True)
def _angle_grad(y, out):
    r2 = y[0] * y[0] + y[1] * y[1]
    out[0, 0] = -y[1] / r2
    out[1, 0] = y[0] / r2
    out[2, 0] = 0.0


@njit(cache=True)
def _angle_div_p(y, out):
    r2 = y[0] * y[0] + y[1] * y[1]
    out[0] = y[0] / r2
    out[1] = y[1] / r2
    out[2] = 0.0


@njit(cache=True)
def _angle_div_g(y, out):
    # grad_xi / Psi = (-y2, y1, 0) is divergence free
    out[0] = 0.0


_ANGLE_RC = ReactionCoordinate(3, 1, _angle_xi, _angle_grad, _angle_div_p, _angle_div_g, "bond-angle")


def angle_coordinate() -> ReactionCoordinate:
    """theta = atan2(y2, y1), the angle of (y1, y2) measured from the y1 axis."""
    return _ANGLE_RC
