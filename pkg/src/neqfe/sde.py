"""Euler-Maruyama integrators for alchemical and reaction-coordinate driven dynamics.

Both integrators accumulate the nonequilibrium work with left-endpoint
quadrature and, when a control is supplied, the Girsanov log-likelihood ratio
of the uncontrolled path measure with respect to the simulated one.  With time
rescaling tau the dynamics read

    dx = (-grad V / tau + u) dt + c dW,   c = sqrt(2 / (beta tau)),

and the log-weight increment is -(u . dW) / c - |u|^2 dt / (2 c^2).  If the
final step would overshoot the horizon it is shortened to land on it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .model import (AnsatzBasis, ControlField, GeometryError, PotentialModel, Protocol,
                    ReactionCoordinate, linear_protocol)
from .noise import generators, thread_count

BLOCK = 512
CHUNK_FLOATS = 1 << 20


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    seed: int = 0
    stream: int = 0
    constraint_tol: float = 1e-3
    noise_scale: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")

    def n_steps(self, horizon: float) -> int:
        return max(1, int(math.ceil(horizon / self.dt - 1e-9)))


@dataclass(frozen=True)
class EscortField:
    """A deterministic flow u(x, lambda) added to the drift, with its divergence."""
    u: Callable
    div_u: Callable

    def negated(self) -> "EscortField":
        return EscortField(_negate_field(self.u), _negate_scalar(self.div_u))


def escort_with_fd(u: Callable, dim: int, h: float = 1e-6) -> EscortField:
    """Escort field whose divergence is taken by central differences."""
    @njit
    def div_u(x, lam):
        xp = x.copy()
        up = np.empty(dim)
        um = np.empty(dim)
        s = 0.0
        for i in range(dim):
            xp[i] = x[i] + h
            u(xp, lam, up)
            xp[i] = x[i] - h
            u(xp, lam, um)
            xp[i] = x[i]
            s += (up[i] - um[i]) / (2.0 * h)
        return s
    return EscortField(u, div_u)


def _negate_field(u):
    @njit
    def neg(x, lam, out):
        u(x, lam, out)
        for i in range(out.shape[0]):
            out[i] = -out[i]
    return neg


def _negate_scalar(f):
    @njit
    def neg(x, lam):
        return -f(x, lam)
    return neg


@njit(cache=True)
def _no_phi(x, t, data, out):
    pass


@njit(cache=True)
def _no_escort(x, lam, out):
    pass


@njit(cache=True)
def _no_div(x, lam):
    return 0.0


@dataclass
class TrajectoryResult:
    """Per-trajectory outputs of one simulation.

    ``work_checkpoints[:, j]`` and ``logw_checkpoints[:, j]`` hold W and the
    log-weight at ``checkpoint_times[j]``.  ``ce_phiphi`` and ``ce_phidw`` are
    the path integrals of phi phi^T ds and phi . (u ds + c dW) used by the
    cross-entropy assembly.
    """
    x_initial: np.ndarray
    x_final: np.ndarray
    work: np.ndarray
    log_weight: np.ndarray
    diverged: np.ndarray
    max_constraint_violation: np.ndarray
    beta: float
    tau: float = 1.0
    checkpoint_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    work_checkpoints: np.ndarray | None = None
    logw_checkpoints: np.ndarray | None = None
    ce_phiphi: np.ndarray | None = None
    ce_phidw: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.work.shape[0]

    @property
    def n_diverged(self) -> int:
        return int(np.count_nonzero(self.diverged))

    def valid(self) -> np.ndarray:
        return ~self.diverged


def _resolve_initial(initial, n_traj, dim):
    """Return (fixed states or None, law or None, n_traj)."""
    if hasattr(initial, "sample"):
        if n_traj is None:
            raise ValueError("n_traj is required when sampling the initial state from a law")
        if initial.dim != dim:
            raise ValueError(f"initial law has dimension {initial.dim}, model has {dim}")
        return None, initial, int(n_traj)
    x0 = np.asarray(initial, dtype=float)
    if x0.ndim == 1 or (x0.ndim == 0 and dim == 1):
        x0 = x0.reshape(1, dim)
        if n_traj is None:
            n_traj = 1
        x0 = np.repeat(x0, int(n_traj), axis=0)
    if x0.ndim != 2 or x0.shape[1] != dim:
        raise ValueError(f"initial states must have shape (N, {dim}), got {x0.shape}")
    if n_traj is not None and x0.shape[0] != n_traj:
        raise ValueError(f"{x0.shape[0]} initial states for n_traj={n_traj}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial states must be finite")
    return np.ascontiguousarray(x0), None, x0.shape[0]


def _run_blocks(n_traj, dim, n_steps, cfg, index_offset, law, fixed, noise, init_block, step_block):
    """Draw per-trajectory noise block by block and hand it to ``step_block``."""
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (n_traj, n_steps, dim):
            raise ValueError(f"noise must have shape {(n_traj, n_steps, dim)}, got {noise.shape}")

    def work(bounds):
        s, e = bounds
        gens = generators(cfg.seed, cfg.stream, index_offset + s, index_offset + e)
        if law is not None:
            u = np.stack([g.random(law.n_uniform) for g in gens])
            x0 = law.sample(u)
        else:
            x0 = fixed[s:e]
        init_block(s, e, x0)
        m = max(1, CHUNK_FLOATS // ((e - s) * dim))
        for k0 in range(0, n_steps, m):
            mm = min(m, n_steps - k0)
            if noise is None:
                xi = np.stack([g.standard_normal((mm, dim)) for g in gens])
            else:
                xi = np.ascontiguousarray(noise[s:e, k0:k0 + mm])
            step_block(s, e, xi, k0)

    blocks = [(s, min(s + BLOCK, n_traj)) for s in range(0, n_traj, BLOCK)]
    nt = min(thread_count(), len(blocks))
    if nt <= 1:
        for b in blocks:
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            for _ in ex.map(work, blocks):
                pass


def _checkpoint_every(n_steps, checkpoints):
    if checkpoints <= 0:
        return 0
    if n_steps % checkpoints:
        raise ValueError(f"checkpoints={checkpoints} must divide the step count {n_steps}")
    return n_steps // checkpoints


def _checkpoint_times(n_steps, every, dt, T):
    if every == 0:
        return np.zeros(0)
    ks = np.arange(0, n_steps + 1, every)
    return np.minimum(ks * dt, T)


# ----------------------------------------------------------- alchemical

@njit(nogil=True)
def _alchemical_kernel(grad_x, grad_lam, lam_of_t, rate, phi, phi_data, omega, use_control,
                       escort, escort_div, use_escort, record_ce, n_lambda,
                       x, W, logw, diverged, noise, k0, dt, T, beta, tau, noise_scale,
                       ck_every, ck_W, ck_logw, ce_AA, ce_R):
    B, m, n = noise.shape
    kb = omega.shape[0]
    lam = np.empty(n_lambda)
    f = np.empty(n_lambda)
    gl = np.empty(n_lambda)
    gx = np.empty(n)
    ue = np.empty(n)
    u = np.zeros(n)
    dw = np.empty(n)
    ph = np.zeros((kb, n))
    nz = np.empty(kb, np.int64)
    c = noise_scale * math.sqrt(2.0 / (beta * tau))
    inv_c = 1.0 / c if c > 0.0 else 0.0
    need_phi = use_control or record_ce
    for b in range(B):
        if diverged[b]:
            continue
        xb = x[b]
        for j in range(m):
            k = k0 + j
            t = k * dt
            h = min(dt, T - t)
            sh = math.sqrt(h)
            lam_of_t(t, lam)
            rate(lam, t, f)
            grad_x(xb, lam, gx)
            grad_lam(xb, lam, gl)
            w = 0.0
            for i in range(n_lambda):
                w += gl[i] * f[i]
            if use_escort:
                escort(xb, lam, ue)
                for i in range(n):
                    w += ue[i] * gx[i]
                w -= escort_div(xb, lam) / beta
            for i in range(n):
                dw[i] = sh * noise[b, j, i]
            if need_phi:
                phi(xb, t, phi_data, ph)
            if use_control:
                uu = 0.0
                udw = 0.0
                for i in range(n):
                    s = 0.0
                    for l in range(kb):
                        s += omega[l] * ph[l, i]
                    u[i] = s
                    uu += s * s
                    udw += s * dw[i]
                logw[b] += -inv_c * udw - 0.5 * inv_c * inv_c * uu * h
            if record_ce:
                cnt = 0
                for l in range(kb):
                    for i in range(n):
                        if ph[l, i] != 0.0:
                            nz[cnt] = l
                            cnt += 1
                            break
                for a in range(cnt):
                    la = nz[a]
                    r = 0.0
                    for i in range(n):
                        r += ph[la, i] * (u[i] * h + c * dw[i])
                    ce_R[b, la] += r
                    for bb in range(cnt):
                        lb = nz[bb]
                        s = 0.0
                        for i in range(n):
                            s += ph[la, i] * ph[lb, i]
                        ce_AA[b, la, lb] += s * h
            ok = True
            for i in range(n):
                drift = -gx[i] / tau
                if use_control:
                    drift += u[i]
                if use_escort:
                    drift += ue[i]
                xb[i] += drift * h + c * dw[i]
                if not math.isfinite(xb[i]):
                    ok = False
            W[b] += w * h
            if not (ok and math.isfinite(W[b]) and math.isfinite(logw[b])):
                diverged[b] = True
                break
            if ck_every > 0 and (k + 1) % ck_every == 0:
                ck_W[b, (k + 1) // ck_every] = W[b]
                ck_logw[b, (k + 1) // ck_every] = logw[b]


def simulate_alchemical(model: PotentialModel, protocol: Protocol, initial, cfg: IntegratorConfig, *,
                        beta: float, n_traj: int | None = None, control: ControlField | None = None,
                        reference=None, tau: float = 1.0, escort: EscortField | None = None,
                        checkpoints: int = 0, ce_basis: AnsatzBasis | None = None,
                        index_offset: int = 0, noise=None) -> TrajectoryResult:
    """Simulate N trajectories of the alchemically driven dynamics over [0, protocol.horizon].

    ``initial`` is an (N, n) array of starting states or a law from
    :mod:`neqfe.laws`.  When it is a law and ``reference`` (the equilibrium
    law at lambda(0)) is given, the log-weight starts at
    log(d reference / d initial)(x0).  ``ce_basis`` switches on recording of
    the per-trajectory cross-entropy statistics; it defaults to the control's
    basis when only ``control`` is given and recording is requested via
    ``ce_basis``.
    """
    if protocol.n_lambda != model.n_lambda:
        raise ValueError("protocol and model disagree on the number of lambda parameters")
    if not (beta > 0 and tau > 0):
        raise ValueError("beta and tau must be positive")
    n = model.dim
    fixed, law, N = _resolve_initial(initial, n_traj, n)
    T = float(protocol.horizon)
    n_steps = cfg.n_steps(T)
    every = _checkpoint_every(n_steps, checkpoints)
    n_ck = n_steps // every + 1 if every else 1
    if control is not None and cfg.noise_scale == 0:
        raise ValueError("a control needs nonzero noise for the likelihood ratio")
    if control is not None and control.basis.dim != n:
        raise ValueError("control basis dimension does not match the model")
    if ce_basis is not None and control is not None and ce_basis is not control.basis:
        raise ValueError("cross-entropy statistics must use the pilot control's basis")

    basis = control.basis if control is not None else ce_basis
    if basis is None:
        phi, data, omega = _no_phi, np.zeros(1), np.zeros(0)
    else:
        phi, data = basis.phi, basis.data
        omega = control.omega if control is not None else np.zeros(basis.k)
    record_ce = ce_basis is not None
    kb = omega.shape[0]
    esc_u, esc_div = (escort.u, escort.div_u) if escort is not None else (_no_escort, _no_div)

    x = np.empty((N, n))
    x_init = np.empty((N, n))
    W = np.zeros(N)
    logw = np.zeros(N)
    diverged = np.zeros(N, dtype=bool)
    ck_W = np.zeros((N, n_ck))
    ck_logw = np.zeros((N, n_ck))
    ce_AA = np.zeros((N, kb, kb)) if record_ce else np.zeros((N, 0, 0))
    ce_R = np.zeros((N, kb)) if record_ce else np.zeros((N, 0))

    def init_block(s, e, x0):
        x[s:e] = x0
        x_init[s:e] = x0
        if law is not None and reference is not None and reference is not law:
            logw[s:e] = reference.log_density(x0) - law.log_density(x0)
        ck_logw[s:e, 0] = logw[s:e]
        bad = ~np.isfinite(logw[s:e])
        diverged[s:e] |= bad

    def step_block(s, e, xi, k0):
        _alchemical_kernel(model.grad_x, model.grad_lambda, protocol.lambda_of_t, protocol.rate,
                           phi, data, omega, control is not None, esc_u, esc_div, escort is not None,
                           record_ce, model.n_lambda, x[s:e], W[s:e], logw[s:e], diverged[s:e], xi,
                           k0, cfg.dt, T, beta, tau, cfg.noise_scale, every, ck_W[s:e], ck_logw[s:e],
                           ce_AA[s:e], ce_R[s:e])

    _run_blocks(N, n, n_steps, cfg, index_offset, law, fixed, noise, init_block, step_block)
    return TrajectoryResult(x_init, x, W, logw, diverged, np.zeros(N), beta, tau,
                            _checkpoint_times(n_steps, every, cfg.dt, T),
                            ck_W if every else None, ck_logw if every else None,
                            ce_AA if record_ce else None, ce_R if record_ce else None)


def simulate_escorted(model, protocol, escort: EscortField, initial, cfg, **kw) -> TrajectoryResult:
    """Driven dynamics with the deterministic flow ``escort`` added; the work gains u.grad V - div u / beta."""
    return simulate_alchemical(model, protocol, initial, cfg, escort=escort, **kw)


def simulate_reversed(model, protocol: Protocol, initial, cfg, *, escort: EscortField | None = None,
                      **kw) -> TrajectoryResult:
    """Reversed protocol lambda(T - s) started from ``initial`` (normally the equilibrium law at lambda(T)).

    The returned work is W^R; the reversed escort flow is -u.
    """
    esc = escort.negated() if escort is not None else None
    return simulate_alchemical(model, protocol.reversed(), initial, cfg, escort=esc, **kw)


# ---------------------------------------------------- reaction coordinate

@njit(nogil=True)
def _rc_kernel(grad_v, xi_fn, grad_xi, div_p, div_g, z_of_t, zrate, d,
               phi, phi_data, omega, use_control, record_ce,
               y, W, logw, maxviol, diverged, noise, k0, dt, T, beta, tau, noise_scale, tol,
               ck_every, ck_W, ck_logw, ce_AA, ce_R):
    B, m, n = noise.shape
    kb = omega.shape[0]
    empty = np.empty(0)
    J = np.empty((n, d))
    G = np.empty((n, d))
    P = np.empty((n, n))
    Psi = np.empty((d, d))
    Pinv1 = np.empty((1, 1))
    dp = np.empty(n)
    dg = np.empty(d)
    gv = np.empty(n)
    xv = np.empty(d)
    z = np.empty(d)
    fz = np.empty(d)
    fx = np.empty(d)
    u = np.zeros(n)
    pu = np.zeros(n)
    dw = np.empty(n)
    pdw = np.empty(n)
    ph = np.zeros((kb, n))
    pph = np.zeros((kb, n))
    nz = np.empty(kb, np.int64)
    c = noise_scale * math.sqrt(2.0 / (beta * tau))
    inv_c = 1.0 / c if c > 0.0 else 0.0
    need_phi = use_control or record_ce
    for b in range(B):
        if diverged[b]:
            continue
        yb = y[b]
        xi_fn(yb, xv)
        for j in range(m):
            k = k0 + j
            t = k * dt
            h = min(dt, T - t)
            sh = math.sqrt(h)
            grad_xi(yb, J)
            for a in range(d):
                for bb in range(d):
                    s = 0.0
                    for i in range(n):
                        s += J[i, a] * J[i, bb]
                    Psi[a, bb] = s
            if d == 1:
                Pinv = Pinv1
                Pinv[0, 0] = 1.0 / Psi[0, 0]
            else:
                Pinv = np.linalg.inv(Psi)
            for i in range(n):
                for a in range(d):
                    s = 0.0
                    for bb in range(d):
                        s += J[i, bb] * Pinv[bb, a]
                    G[i, a] = s
            for i in range(n):
                for l2 in range(n):
                    s = 0.0
                    for a in range(d):
                        s -= G[i, a] * J[l2, a]
                    P[i, l2] = s + (1.0 if i == l2 else 0.0)
            div_p(yb, dp)
            div_g(yb, dg)
            grad_v(yb, empty, gv)
            z_of_t(t, z)
            zrate(z, t, fz)
            zrate(xv, t, fx)
            # work: (G^T grad V - div G / beta) . zdot
            w = 0.0
            for a in range(d):
                s = 0.0
                for i in range(n):
                    s += G[i, a] * gv[i]
                w += (s - dg[a] / beta) * fz[a]
            for i in range(n):
                dw[i] = sh * noise[b, j, i]
            for i in range(n):
                s = 0.0
                for l2 in range(n):
                    s += P[i, l2] * dw[l2]
                pdw[i] = s
            if need_phi:
                phi(yb, t, phi_data, ph)
                for l in range(kb):
                    for i in range(n):
                        s = 0.0
                        for l2 in range(n):
                            s += P[i, l2] * ph[l, l2]
                        pph[l, i] = s
            if use_control:
                uu = 0.0
                udw = 0.0
                for i in range(n):
                    s = 0.0
                    for l in range(kb):
                        s += omega[l] * pph[l, i]
                    pu[i] = s
                    uu += s * s
                    udw += s * dw[i]
                logw[b] += -inv_c * udw - 0.5 * inv_c * inv_c * uu * h
            if record_ce:
                cnt = 0
                for l in range(kb):
                    for i in range(n):
                        if pph[l, i] != 0.0:
                            nz[cnt] = l
                            cnt += 1
                            break
                for a in range(cnt):
                    la = nz[a]
                    r = 0.0
                    for i in range(n):
                        r += pph[la, i] * (pu[i] * h + c * dw[i])
                    ce_R[b, la] += r
                    for bb in range(cnt):
                        lb = nz[bb]
                        s = 0.0
                        for i in range(n):
                            s += pph[la, i] * pph[lb, i]
                        ce_AA[b, la, lb] += s * h
            ok = True
            for i in range(n):
                s = 0.0
                for l2 in range(n):
                    s += P[i, l2] * gv[l2]
                drift = -s / tau + dp[i] / (beta * tau)
                for a in range(d):
                    drift += G[i, a] * fx[a]
                if use_control:
                    drift += pu[i]
                yb[i] += drift * h + c * pdw[i]
                if not math.isfinite(yb[i]):
                    ok = False
            W[b] += w * h
            if not (ok and math.isfinite(W[b]) and math.isfinite(logw[b])):
                diverged[b] = True
                break
            tn = min((k + 1) * dt, T)
            z_of_t(tn, z)
            xi_fn(yb, xv)
            viol = 0.0
            for a in range(d):
                v = abs(xv[a] - z[a])
                if not (v <= viol):
                    viol = v
            if viol > maxviol[b]:
                maxviol[b] = viol
            if not (viol <= tol):
                diverged[b] = True
                break
            if ck_every > 0 and (k + 1) % ck_every == 0:
                ck_W[b, (k + 1) // ck_every] = W[b]
                ck_logw[b, (k + 1) // ck_every] = logw[b]


def simulate_rc(rc: ReactionCoordinate, model: PotentialModel, drive: Protocol, initial, cfg: IntegratorConfig,
                *, beta: float, tau: float = 1.0, n_traj: int | None = None,
                control: ControlField | None = None, checkpoints: int = 0,
                ce_basis: AnsatzBasis | None = None, index_offset: int = 0, noise=None) -> TrajectoryResult:
    """Constrained dynamics driving xi(y) along z(t) = drive.lam(t); no projection step is applied.

    The drift is -P grad V / tau + div P / (beta tau) + G f(xi(y), t) + P u with
    G = grad xi Psi^-1 and noise c P dW.  Trajectories whose constraint error
    |xi(y) - z(t)| exceeds ``cfg.constraint_tol`` are flagged as diverged.
    """
    if drive.n_lambda != rc.d or rc.dim != model.dim:
        raise ValueError("reaction coordinate, drive and model dimensions disagree")
    if not (beta > 0 and tau > 0):
        raise ValueError("beta and tau must be positive")
    n = model.dim
    fixed, law, N = _resolve_initial(initial, n_traj, n)
    T = float(drive.horizon)
    n_steps = cfg.n_steps(T)
    every = _checkpoint_every(n_steps, checkpoints)
    n_ck = n_steps // every + 1 if every else 1
    if control is not None and cfg.noise_scale == 0:
        raise ValueError("a control needs nonzero noise for the likelihood ratio")
    basis = control.basis if control is not None else ce_basis
    if basis is None:
        phi, data, omega = _no_phi, np.zeros(1), np.zeros(0)
    else:
        phi, data = basis.phi, basis.data
        omega = control.omega if control is not None else np.zeros(basis.k)
    record_ce = ce_basis is not None
    kb = omega.shape[0]
    z0 = drive.lam(0.0)

    y = np.empty((N, n))
    y_init = np.empty((N, n))
    W = np.zeros(N)
    logw = np.zeros(N)
    maxviol = np.zeros(N)
    diverged = np.zeros(N, dtype=bool)
    ck_W = np.zeros((N, n_ck))
    ck_logw = np.zeros((N, n_ck))
    ce_AA = np.zeros((N, kb, kb)) if record_ce else np.zeros((N, 0, 0))
    ce_R = np.zeros((N, kb)) if record_ce else np.zeros((N, 0))

    def init_block(s, e, y0):
        y[s:e] = y0
        y_init[s:e] = y0
        xv = np.empty(rc.d)
        for i in range(s, e):
            rc.xi(y[i], xv)
            v = np.max(np.abs(xv - z0))
            if not np.isfinite(v):
                raise GeometryError(f"{rc.name}: reaction coordinate undefined at y={y[i].tolist()}")
            maxviol[i] = v
            if v > cfg.constraint_tol:
                raise ValueError(f"initial state {i} is off the level set by {v:.3g}")

    def step_block(s, e, xi, k0):
        _rc_kernel(model.grad_x, rc.xi, rc.grad_xi, rc.div_p, rc.div_g, drive.lambda_of_t, drive.rate,
                   rc.d, phi, data, omega, control is not None, record_ce,
                   y[s:e], W[s:e], logw[s:e], maxviol[s:e], diverged[s:e], xi, k0, cfg.dt, T,
                   beta, tau, cfg.noise_scale, cfg.constraint_tol, every, ck_W[s:e], ck_logw[s:e],
                   ce_AA[s:e], ce_R[s:e])

    _run_blocks(N, n, n_steps, cfg, index_offset, law, fixed, noise, init_block, step_block)
    return TrajectoryResult(y_init, y, W, logw, diverged, maxviol, beta, tau,
                            _checkpoint_times(n_steps, every, cfg.dt, T),
                            ck_W if every else None, ck_logw if every else None,
                            ce_AA if record_ce else None, ce_R if record_ce else None)


def simulate_rc_reversed(rc, model, drive: Protocol, initial, cfg, **kw) -> TrajectoryResult:
    """Reversed drive z(T - s) started on the final level set; returns W^R."""
    return simulate_rc(rc, model, drive.reversed(), initial, cfg, **kw)


def sample_initial_rc(rc: ReactionCoordinate, model: PotentialModel, z0, seed_point, cfg: IntegratorConfig,
                      *, beta: float, n: int, burn_in: float = 50.0, tau: float = 1.0) -> np.ndarray:
    """Approximate samples of the level-set equilibrium at z0 by running the
    constrained dynamics with a frozen drive for ``burn_in`` time units.

    Returns the (n, dim) array of final states of the non-diverged runs.
    """
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    frozen = linear_protocol(z0, z0, burn_in, "frozen")
    res = simulate_rc(rc, model, frozen, np.asarray(seed_point, dtype=float), cfg, beta=beta, tau=tau,
                      n_traj=n)
    return res.x_final[res.valid()]
