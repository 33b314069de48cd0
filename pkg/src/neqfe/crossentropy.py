"""Cross-entropy fitting of a control u = sum_l omega_l phi_l.

Minimizing the cross-entropy between the zero-variance path measure and the
controlled one over the linear ansatz gives the linear system A omega = R with

    A_ll' = E[exp(-beta W) int phi_l . phi_l' ds]
    R_l   = E[exp(-beta W) int phi_l . (u_pilot ds + c dW)],

expectations taken under the uncontrolled dynamics and estimated from pilot
trajectories reweighted by their Girsanov factors.  Both sides scale together,
so they are accumulated with a running log-sum-exp shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import AnsatzBasis, ControlField
from .sde import IntegratorConfig, TrajectoryResult, simulate_alchemical, simulate_rc


class CEError(RuntimeError):
    """Singular system or a diverging iteration."""


@dataclass
class CESystem:
    """Normalized A and R: both divided by the sum of pilot weights."""
    A: np.ndarray
    R: np.ndarray
    log_mean_weight: float
    n: int
    labels: tuple = ()


class _Accumulator:
    def __init__(self, k: int):
        self.shift = -math.inf
        self.A = np.zeros((k, k))
        self.R = np.zeros(k)
        self.w = 0.0
        self.n = 0

    def add(self, a, phiphi, phidw):
        if a.size == 0:
            return
        m = float(a.max())
        if m > self.shift:
            s = math.exp(self.shift - m) if math.isfinite(self.shift) else 0.0
            self.A *= s
            self.R *= s
            self.w *= s
            self.shift = m
        w = np.exp(a - self.shift)
        self.A += np.einsum("n,nij->ij", w, phiphi)
        self.R += w @ phidw
        self.w += math.fsum(w.tolist())
        self.n += a.size


def assemble_system(results, beta: float | None = None, labels: tuple = ()) -> CESystem:
    """Weighted A and R from pilot results that recorded cross-entropy statistics.

    ``results`` may be a single result or any iterable of them, so pilot
    ensembles can be streamed chunk by chunk.
    """
    if isinstance(results, TrajectoryResult):
        results = [results]
    acc = None
    for res in results:
        if res.ce_phiphi is None:
            raise ValueError("pilot simulation did not record cross-entropy statistics")
        if acc is None:
            acc = _Accumulator(res.ce_phidw.shape[1])
        b = res.beta if beta is None else beta
        ok = res.valid()
        a = -b * res.work[ok] + res.log_weight[ok]
        acc.add(a, res.ce_phiphi[ok], res.ce_phidw[ok])
    if acc is None or acc.n == 0:
        raise CEError("no pilot trajectories")
    A = 0.5 * (acc.A + acc.A.T) / acc.w
    return CESystem(A, acc.R / acc.w, acc.shift + math.log(acc.w / acc.n), acc.n, labels)


def solve_system(system: CESystem, ridge: float | None = None, allow_unvisited: bool = False) -> np.ndarray:
    """omega solving (A + ridge I) omega = R; ridge defaults to 1e-8 trace(A) / k.

    Basis functions that the pilot never visited leave zero rows in A; they
    are reported by label, or pinned to omega = 0 with ``allow_unvisited``.
    """
    A, R = system.A, system.R
    k = A.shape[0]
    d = np.diag(A)
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(R)):
        raise CEError("non-finite cross-entropy system")
    dead = d <= 1e-14 * max(d.max(), 1e-300)
    if dead.any() and not allow_unvisited:
        names = [system.labels[i] if i < len(system.labels) else f"phi[{i}]" for i in np.flatnonzero(dead)]
        raise CEError(f"rank-deficient system: basis functions never visited by the pilot: {names}")
    live = ~dead
    if ridge is None:
        ridge = 1e-8 * np.trace(A[np.ix_(live, live)]) / max(live.sum(), 1)
    omega = np.zeros(k)
    Al = A[np.ix_(live, live)] + ridge * np.eye(live.sum())
    if np.linalg.cond(Al) > 1e14:
        raise CEError(f"ill-conditioned system (cond {np.linalg.cond(Al):.3g})")
    omega[live] = np.linalg.solve(Al, R[live])
    return omega


def ce_objective(system: CESystem, omega, beta: float, tau: float = 1.0) -> float:
    """Cross-entropy objective up to an omega-independent constant:
    (beta tau / 2) (omega^T A omega / 2 - omega^T R)."""
    om = np.asarray(omega, dtype=float)
    return 0.5 * beta * tau * (0.5 * om @ system.A @ om - om @ system.R)


@dataclass
class CERound:
    beta: float
    omega: np.ndarray
    system: CESystem


@dataclass
class CEFit:
    control: ControlField
    rounds: list = field(default_factory=list)


def _pilot_chunks(simulate, n_pilot, chunk):
    for s in range(0, n_pilot, chunk):
        yield simulate(s, min(chunk, n_pilot - s))


def iterate_ce(model, protocol, basis: AnsatzBasis, initial, cfg: IntegratorConfig, *, schedule=(5.0,),
               n_pilot: int = 100000, reference=None, tau: float = 1.0, chunk: int = 8192,
               initial_omega=None, growth_limit: float = 10.0) -> CEFit:
    """Fit an alchemical control by rounds of pilot simulation.

    Round r simulates at inverse temperature ``schedule[r]`` under the control
    from round r-1 (uncontrolled in round 0) and solves for a new omega.  The
    last entry of ``schedule`` should be the target beta.  Pilot trajectories
    use stream ``cfg.stream + 1000 + r`` so they never share noise with
    production runs.
    """
    omega = None if initial_omega is None else np.asarray(initial_omega, dtype=float)
    fit_rounds = []
    for r, b in enumerate(schedule):
        ctrl = ControlField(basis, omega) if omega is not None else None
        pc = IntegratorConfig(cfg.dt, cfg.seed, cfg.stream + 1000 + r, cfg.constraint_tol, cfg.noise_scale)

        def sim(start, n, ctrl=ctrl, pc=pc, b=b):
            return simulate_alchemical(model, protocol, initial, pc, beta=b, n_traj=n, control=ctrl,
                                       reference=reference, tau=tau, ce_basis=basis, index_offset=start)

        if not hasattr(initial, "sample"):
            raise ValueError("cross-entropy pilots need an initial law")
        system = assemble_system(_pilot_chunks(sim, n_pilot, chunk), labels=basis.labels)
        new = solve_system(system)
        if omega is not None and np.linalg.norm(omega) > 0 and np.linalg.norm(new) > growth_limit * np.linalg.norm(omega):
            raise CEError(f"round {r}: |omega| grew from {np.linalg.norm(omega):.3g} to {np.linalg.norm(new):.3g}")
        omega = new
        fit_rounds.append(CERound(b, omega.copy(), system))
    return CEFit(ControlField(basis, omega), fit_rounds)


def iterate_ce_rc(rc, model, drive, basis: AnsatzBasis, initial, cfg: IntegratorConfig, *, schedule=(5.0,),
                  n_pilot: int = 20000, tau: float = 1.0, chunk: int = 4096, growth_limit: float = 10.0) -> CEFit:
    """Cross-entropy fit for the reaction-coordinate dynamics; the effective basis is P phi."""
    omega = None
    fit_rounds = []
    for r, b in enumerate(schedule):
        ctrl = ControlField(basis, omega) if omega is not None else None
        pc = IntegratorConfig(cfg.dt, cfg.seed, cfg.stream + 1000 + r, cfg.constraint_tol, cfg.noise_scale)

        def sim(start, n, ctrl=ctrl, pc=pc, b=b):
            return simulate_rc(rc, model, drive, initial, pc, beta=b, tau=tau, n_traj=n, control=ctrl,
                               ce_basis=basis, index_offset=start)

        system = assemble_system(_pilot_chunks(sim, n_pilot, chunk), labels=basis.labels)
        new = solve_system(system)
        if omega is not None and np.linalg.norm(omega) > 0 and np.linalg.norm(new) > growth_limit * np.linalg.norm(omega):
            raise CEError(f"round {r}: |omega| grew from {np.linalg.norm(omega):.3g} to {np.linalg.norm(new):.3g}")
        omega = new
        fit_rounds.append(CERound(b, omega.copy(), system))
    return CEFit(ControlField(basis, omega), fit_rounds)
