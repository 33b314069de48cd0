"""Zero-variance control for one-dimensional alchemical models from a backward PDE.

g(x, t) = E[exp(-beta (W_T - W_t)) | x_t = x] solves

    d_t g - V_x g_x + g_xx / beta - beta (grad_lambda V . f) g = 0,   g(., T) = 1.

The control u* = 2 g_x / (beta g) and the initial law proportional to
exp(-beta V(., lambda(0))) g(., 0) make exp(-beta W) r constant along paths.
The solver marches backwards in time with reflecting (zero-flux) ends and
stores log g.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from .laws import GridLaw
from .model import AnsatzBasis, ControlField, PotentialModel, Protocol


@dataclass
class GridSolution:
    """log g on the (t, x) grid: ``log_g[n, i]`` at (t[n], x[i])."""
    x: np.ndarray
    t: np.ndarray
    log_g: np.ndarray
    beta: float
    euler_steps: int = 0   # BDF2 steps replaced by implicit Euler to keep g positive

    @property
    def U(self) -> np.ndarray:
        """Optimal control potential U = -log(g) / beta."""
        return -self.log_g / self.beta

    def control_table(self) -> np.ndarray:
        """u*(x, t) = 2 d_x log g / beta on the grid."""
        return 2.0 / self.beta * np.gradient(self.log_g, self.x, axis=1)

    def save(self, path):
        np.savez(path, x=self.x, t=self.t, log_g=self.log_g, beta=self.beta, euler_steps=self.euler_steps)

    @classmethod
    def load(cls, path) -> "GridSolution":
        with np.load(path) as d:
            return cls(d["x"], d["t"], d["log_g"], float(d["beta"]), int(d["euler_steps"]) if "euler_steps" in d else 0)


def solve_g(model: PotentialModel, protocol: Protocol, beta: float, nx: int = 2001, nt: int = 2000,
            domain=(-5.0, 5.0)) -> GridSolution:
    """March the backward equation for g from t = T to t = 0.

    BDF2 in time (the first step from T is implicit Euler) and central
    differences for the drift wherever the cell Peclet number |b| dx beta / 2
    is at most one, first-order upwinding elsewhere, so the spatial operator
    stays an M-matrix.  A BDF2 step that would make g nonpositive is redone
    as implicit Euler; the count is kept in ``euler_steps``.
    """
    if model.dim != 1:
        raise ValueError("the PDE solver handles one-dimensional models")
    if nx < 3 or nt < 1:
        raise ValueError("grid too small")
    x = np.linspace(domain[0], domain[1], nx)
    dx = x[1] - x[0]
    T = protocol.horizon
    t = np.linspace(0.0, T, nt + 1)
    ht = T / nt
    D = 1.0 / (beta * dx * dx)
    log_g = np.zeros((nt + 1, nx))
    g = np.ones(nx)
    g_prev = None
    log_scale = 0.0
    ab = np.empty((3, nx))
    fallback = 0
    for n in range(nt - 1, -1, -1):
        lam = protocol.lam(t[n])
        b = -model.gradients_x(x, lam)[:, 0]
        c = beta * (model.lambda_gradients(x, lam) @ protocol.f(t[n]))
        central = np.abs(b) <= 2.0 * D * dx
        bp = np.maximum(b, 0.0) / dx
        bm = np.maximum(-b, 0.0) / dx
        lower = np.where(central, D - 0.5 * b / dx, D + bm)   # coefficient of g[i-1]
        upper = np.where(central, D + 0.5 * b / dx, D + bp)   # coefficient of g[i+1]
        diag = -(lower + upper) - c
        # zero-flux ends: the ghost node copies its neighbour
        diag[0] += lower[0]
        diag[-1] += upper[-1]
        g_new = None
        if g_prev is not None:
            g_new = _implicit_step(ab, lower, diag, upper, 2.0 * ht / 3.0, (4.0 * g - g_prev) / 3.0)
        if g_new is None or np.any(g_new <= 0):
            # BDF2 is not positivity preserving for the stiff far-field decay; an
            # implicit Euler step (an M-matrix solve) always is
            g_new = _implicit_step(ab, lower, diag, upper, ht, g)
            fallback += g_prev is not None
        if not np.all(np.isfinite(g_new)) or np.any(g_new <= 0):
            raise FloatingPointError(f"PDE solution lost positivity at t={t[n]:.4g}; refine the grid")
        s = g_new.max()
        g_prev = g / s
        g = g_new / s
        log_scale += math.log(s)
        log_g[n] = np.log(g) + log_scale
    return GridSolution(x, t, log_g, beta, fallback)


def _implicit_step(ab, lower, diag, upper, a, rhs):
    # (I - a L) g_new = rhs with L tridiagonal
    ab[0, 0] = 0.0
    ab[0, 1:] = -a * upper[:-1]
    ab[1] = 1.0 - a * diag
    ab[2, :-1] = -a * lower[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def delta_f_from_g(sol: GridSolution, model: PotentialModel, protocol: Protocol) -> float:
    """-log E_{mu_lambda(0)}[g(., 0)] / beta by Simpson on the PDE grid."""
    lam0 = protocol.lam(0.0)
    logp = -sol.beta * model.energies(sol.x, lam0)
    m = logp.max()
    p = np.exp(logp - m)
    a = sol.log_g[0]
    ma = a.max()
    num = simpson(p * np.exp(a - ma), x=sol.x)
    return -(math.log(num / simpson(p, x=sol.x)) + ma) / sol.beta


def conservation_quantity(sol: GridSolution, model: PotentialModel, protocol: Protocol) -> np.ndarray:
    """log Q(t), Q(t) = int exp(-beta V(x, lambda(t))) g(x, t) dx, which is constant in t."""
    out = np.empty(sol.t.shape[0])
    for n, tn in enumerate(sol.t):
        a = -sol.beta * model.energies(sol.x, protocol.lam(tn)) + sol.log_g[n]
        m = a.max()
        out[n] = m + math.log(simpson(np.exp(a - m), x=sol.x))
    return out


@njit(cache=True)
def _phi_table(x, t, data, out):
    # data = [x0, dx, nx, t0, dt, nt, values (nt x nx row-major)]
    x0 = data[0]
    dx = data[1]
    nx = int(data[2])
    t0 = data[3]
    dt = data[4]
    nt = int(data[5])
    fx = (x[0] - x0) / dx
    if fx <= 0.0:
        i, a = 0, 0.0
    elif fx >= nx - 1:
        i, a = nx - 2, 1.0
    else:
        i = int(fx)
        a = fx - i
    ft = (t - t0) / dt
    if ft <= 0.0:
        n, b = 0, 0.0
    elif ft >= nt - 1:
        n, b = nt - 2, 1.0
    else:
        n = int(ft)
        b = ft - n
    base = 6
    v00 = data[base + n * nx + i]
    v01 = data[base + n * nx + i + 1]
    v10 = data[base + (n + 1) * nx + i]
    v11 = data[base + (n + 1) * nx + i + 1]
    out[0, 0] = (1 - b) * ((1 - a) * v00 + a * v01) + b * ((1 - a) * v10 + a * v11)


def tabulated_control(x, t, table) -> ControlField:
    """Bilinear interpolation of ``table[n, i]`` = u(x[i], t[n]); constant beyond the grid."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    table = np.asarray(table, dtype=float)
    if table.shape != (t.size, x.size) or x.size < 2 or t.size < 2:
        raise ValueError("table must have shape (len(t), len(x)) with at least two nodes each")
    data = np.concatenate([[x[0], x[1] - x[0], x.size, t[0], t[1] - t[0], t.size], table.ravel()])
    basis = AnsatzBasis(1, 1, _phi_table, data, ("tabulated",))
    return ControlField(basis, np.ones(1))


def optimal_control(sol: GridSolution) -> ControlField:
    return tabulated_control(sol.x, sol.t, sol.control_table())


def optimal_initial(sol: GridSolution, model: PotentialModel, protocol: Protocol,
                    n_nodes: int = 20001) -> GridLaw:
    """Law proportional to exp(-beta V(x, lambda(0))) g(x, 0), with log g interpolated onto a fine grid."""
    xf = np.linspace(sol.x[0], sol.x[-1], n_nodes)
    a = -sol.beta * model.energies(xf, protocol.lam(0.0)) + np.interp(xf, sol.x, sol.log_g[0])
    return GridLaw(xf, np.exp(a - a.max()))
