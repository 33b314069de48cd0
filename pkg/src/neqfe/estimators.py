"""Jarzynski, importance-sampling, thermodynamic-integration and Crooks estimators.

All averages of exp(-beta W) r are formed in the log domain.  Sums over
trajectories use ``math.fsum`` on terms in trajectory-index order, so
estimates are reproducible to the last bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .model import build_projection
from .sde import TrajectoryResult

MAX_DIVERGED_FRACTION = 1e-3


class NumericalError(RuntimeError):
    """Too many trajectories diverged or an estimate is not finite."""


@dataclass
class RunEstimate:
    """One independent run: I = mean of exp(-beta W) r and Delta F = -log(I) / beta."""
    log_I: float
    dF: float
    mean_W: float
    sd_terms: float | None
    n: int
    n_diverged: int

    @property
    def I(self) -> float:
        # saturates to inf rather than raising; dF stays exact in the log domain
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_I))


@dataclass
class EstimatorReport:
    """Aggregate over runs.

    ``sd_I`` and ``sd_dF`` are sample standard deviations across runs;
    ``sd_I_sample`` is the per-trajectory standard deviation of exp(-beta W) r
    pooled over all runs.  Any SD with fewer than two samples is None.
    """
    mean_I: float
    sd_I: float | None
    mean_dF: float
    sd_dF: float | None
    mean_W: float
    sd_I_sample: float | None
    n_runs: int
    n_traj: int
    n_diverged: int
    runs: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"mean_I": self.mean_I, "sd_I": self.sd_I, "mean_dF": self.mean_dF, "sd_dF": self.sd_dF,
                "mean_W": self.mean_W, "sd_I_per_trajectory": self.sd_I_sample, "n_runs": self.n_runs,
                "n_traj": self.n_traj, "n_diverged": self.n_diverged}


def _fsum_mean(a) -> float:
    a = np.asarray(a, dtype=float).ravel()
    return math.fsum(a.tolist()) / a.size


def _sample_sd(a) -> float | None:
    a = np.asarray(a, dtype=float).ravel()
    if a.size < 2:
        return None
    m = _fsum_mean(a)
    return math.sqrt(math.fsum(((a - m) ** 2).tolist()) / (a.size - 1))


def log_mean_exp(a) -> float:
    a = np.asarray(a, dtype=float).ravel()
    m = float(a.max())
    if not math.isfinite(m):
        raise NumericalError("non-finite log-weight")
    return m + math.log(math.fsum(np.exp(a - m).tolist()) / a.size)


def _valid(result: TrajectoryResult, max_fraction: float):
    bad = result.n_diverged
    if bad > max_fraction * result.n:
        raise NumericalError(f"{bad} of {result.n} trajectories diverged "
                             f"(limit {max_fraction:.2%}); reduce dt")
    return result.valid()


def jarzynski_estimate(result: TrajectoryResult, beta: float | None = None,
                       max_diverged_fraction: float = MAX_DIVERGED_FRACTION) -> RunEstimate:
    """Estimate Delta F from one run; uses the importance weights stored in ``result``.

    Without a control and with equilibrium initial states this is the plain
    Jarzynski estimator.
    """
    beta = result.beta if beta is None else beta
    ok = _valid(result, max_diverged_fraction)
    W = result.work[ok]
    if W.size == 0:
        raise NumericalError("no valid trajectories")
    a = -beta * W + result.log_weight[ok]
    log_I = log_mean_exp(a)
    m = float(a.max())
    sd = _sample_sd(np.exp(a - m))
    if sd is not None:
        with np.errstate(over="ignore", divide="ignore"):
            sd = float(np.exp(math.log(sd) + m)) if sd > 0 else 0.0
    return RunEstimate(log_I, -log_I / beta, _fsum_mean(W), sd, int(W.size), result.n_diverged)


def summarize_runs(runs: list[RunEstimate]) -> EstimatorReport:
    """Combine independent runs.

    The pooled per-trajectory SD of exp(-beta W) r is assembled exactly from
    each run's mean, SD and size, so the trajectories need not be kept.
    """
    if not runs:
        raise ValueError("no runs to summarize")
    I = np.array([r.I for r in runs])
    dF = np.array([r.dF for r in runs])
    n = np.array([r.n for r in runs], dtype=float)
    n_tot = int(n.sum())
    mean_W = math.fsum((r.mean_W * r.n for r in runs)) / n_tot
    sd_pool = None
    if not np.all(np.isfinite(I)):
        # I overflowed in linear scale; only the log-domain quantities are meaningful
        return EstimatorReport(math.inf, None, _fsum_mean(dF), _sample_sd(dF), mean_W, None,
                               len(runs), n_tot, sum(r.n_diverged for r in runs), list(runs))
    if n_tot >= 2 and all(r.sd_terms is not None or r.n == 1 for r in runs):
        grand = math.fsum((I * n).tolist()) / n_tot
        within = math.fsum((r.n - 1) * r.sd_terms ** 2 for r in runs if r.n > 1)
        between = math.fsum((n * (I - grand) ** 2).tolist())
        sd_pool = math.sqrt((within + between) / (n_tot - 1))
    return EstimatorReport(_fsum_mean(I), _sample_sd(I), _fsum_mean(dF), _sample_sd(dF), mean_W, sd_pool,
                           len(runs), n_tot, sum(r.n_diverged for r in runs), list(runs))


def df_curve(result: TrajectoryResult, beta: float | None = None,
             max_diverged_fraction: float = MAX_DIVERGED_FRACTION) -> tuple[np.ndarray, np.ndarray]:
    """Delta F at each checkpoint time from W(t) and the log-weight accumulated up to t."""
    if result.work_checkpoints is None:
        raise ValueError("simulation was run without checkpoints")
    beta = result.beta if beta is None else beta
    ok = _valid(result, max_diverged_fraction)
    Wc = result.work_checkpoints[ok]
    Lc = result.logw_checkpoints[ok]
    dF = np.array([-log_mean_exp(-beta * Wc[:, j] + Lc[:, j]) / beta for j in range(Wc.shape[1])])
    return result.checkpoint_times.copy(), dF


def work_histogram(work, bin_width: float = 0.05):
    """Density histogram on bins aligned to integer multiples of ``bin_width``.

    Returns (left edges, right edges, density) with sum(density * width) = 1.
    """
    w = np.asarray(work, dtype=float)
    w = w[np.isfinite(w)]
    if w.size == 0:
        raise ValueError("no finite work values")
    lo = math.floor(w.min() / bin_width)
    hi = math.floor(w.max() / bin_width) + 1
    edges = np.arange(lo, hi + 1) * bin_width
    counts, _ = np.histogram(w, bins=edges)
    return edges[:-1], edges[1:], counts / (w.size * bin_width)


def effective_sample_size(log_weights) -> float:
    a = np.asarray(log_weights, dtype=float)
    w = np.exp(a - a.max())
    return float(w.sum() ** 2 / np.sum(w * w))


# ------------------------------------------------- thermodynamic integration

def ti_estimate(model, protocol, sampler, beta: float, n_points: int = 100, n_samples: int = 10000,
                seed: int = 0) -> tuple[float, np.ndarray, np.ndarray]:
    """Delta F = int_0^T E[grad_lambda V . f] dt by the trapezoid rule on ``n_points`` times.

    ``sampler(t, n, rng)`` returns (n, dim) equilibrium states at lambda(t).
    Returns (Delta F, times, mean integrand).
    """
    ts = np.linspace(0.0, protocol.horizon, n_points)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_points)]
    vals = np.empty(n_points)
    for i, t in enumerate(ts):
        x = np.asarray(sampler(t, n_samples, rngs[i]), dtype=float).reshape(n_samples, model.dim)
        lam = protocol.lam(t)
        vals[i] = _fsum_mean(model.lambda_gradients(x, lam) @ protocol.f(t))
    return float(trapezoid(vals, ts)), ts, vals


def mean_force_samples(rc, model, y, zdot, beta: float) -> np.ndarray:
    """Per-sample local mean force (G^T grad V - div G / beta) . zdot at states y."""
    y = np.asarray(y, dtype=float).reshape(-1, model.dim)
    zdot = np.atleast_1d(zdot)
    out = np.empty(y.shape[0])
    empty = np.zeros(0)
    g = np.empty(model.dim)
    for i in range(y.shape[0]):
        pr = build_projection(rc, y[i])
        G = pr.grad_xi @ np.linalg.inv(pr.Psi)
        model.grad_x(y[i], empty, g)
        out[i] = float((G.T @ g - pr.div_g / beta) @ zdot)
    return out


def ti_estimate_rc(rc, model, drive, sampler, beta: float, n_points: int = 50, n_samples: int = 2000,
                   seed: int = 0) -> tuple[float, np.ndarray, np.ndarray]:
    """Delta F along the drive from the level-set mean force; ``sampler(z, n, rng)`` gives states on xi = z."""
    ts = np.linspace(0.0, drive.horizon, n_points)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_points)]
    vals = np.empty(n_points)
    for i, t in enumerate(ts):
        z = drive.lam(t)
        y = sampler(z, n_samples, rngs[i])
        vals[i] = _fsum_mean(mean_force_samples(rc, model, y, drive.f(t), beta))
    return float(trapezoid(vals, ts)), ts, vals


# ---------------------------------------------------------------- Crooks

@dataclass
class CrooksReport:
    left: np.ndarray
    right: np.ndarray
    ratio: np.ndarray
    se: np.ndarray
    target: float
    z: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z))) if self.z.size else float("nan")


def crooks_check(forward: TrajectoryResult, reverse: TrajectoryResult, beta: float, dF: float,
                 edges, min_count: int = 200) -> CrooksReport:
    """Per-bin test of E_f[exp(-beta W) 1_B(W)] / E_r[1_B(-W_R)] = exp(-beta Delta F).

    Bins with fewer than ``min_count`` trajectories in either direction are dropped.
    Standard errors come from the delta method on the ratio of two means.
    """
    wf = forward.work[forward.valid()]
    lf = forward.log_weight[forward.valid()]
    wr = -reverse.work[reverse.valid()]
    edges = np.asarray(edges, dtype=float)
    keep, ratio, se = [], [], []
    for i in range(len(edges) - 1):
        inf = (wf >= edges[i]) & (wf < edges[i + 1])
        inr = (wr >= edges[i]) & (wr < edges[i + 1])
        if inf.sum() < min_count or inr.sum() < min_count:
            continue
        a = np.where(inf, np.exp(-beta * wf + lf), 0.0)
        b = inr.astype(float)
        ma, mb = a.mean(), b.mean()
        sa, sb = a.std(ddof=1) / math.sqrt(a.size), b.std(ddof=1) / math.sqrt(b.size)
        r = ma / mb
        keep.append(i)
        ratio.append(r)
        se.append(r * math.sqrt((sa / ma) ** 2 + (sb / mb) ** 2))
    keep = np.array(keep, dtype=int)
    ratio, se = np.array(ratio), np.array(se)
    target = math.exp(-beta * dF)
    return CrooksReport(edges[keep], edges[keep + 1], ratio, se, target, (ratio - target) / se)
