"""Configured experiments: the two model problems, their estimators and output files.

A configuration is a flat ``key = value`` text file whose keys are the
fields of :class:`ExperimentConfig`.  Outputs written to ``output_dir``:

* summary.json    mean/SD of I and Delta F over runs, mean W, oracle value
* df_curve.csv    lambda_or_theta, dF_mean, dF_sd (SD across runs)
* work_hist.csv   bin_left, bin_right, density of the sampled work, pooled
* omega.json      fitted control coefficients (cross-entropy runs)
* run_meta.json   configuration, versions, thread count, wall time

Everything except run_meta.json is a deterministic function of the
configuration.
"""
from __future__ import annotations

import importlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import __version__
from . import crossentropy as ce
from . import estimators as est
from . import oracle, pdeopt
from .laws import GaussianLaw
from .model import ExampleOne, ExampleTwo, cell_basis, gaussian_basis
from .noise import thread_count
from .sde import (IntegratorConfig, TrajectoryResult, simulate_alchemical, simulate_rc, simulate_rc_reversed,
                  simulate_reversed)

EXAMPLES = ("ex1", "ex2", "custom")
METHODS = ("stdmc", "is-ce", "is-optimal", "ti", "crooks")
ANSATZ = ("linear", "gaussian", "none")
INITIAL = ("mu0", "mubar0", "mu0star")


class ConfigError(ValueError):
    exit_code = 2


@dataclass(frozen=True)
class ExperimentConfig:
    example: str
    method: str
    beta: float = 5.0
    n_traj: int = 10000
    dt: float | None = None
    n_runs: int = 10
    seed: int = 0
    tau: float = 1.0
    kappa: float = 0.3
    ansatz: str = "gaussian"
    initial: str = "mu0"
    output_dir: str = "out"
    n_pilot: int = 100000
    ce_schedule: str = "2,5"
    mubar_mean: float = 0.5
    grid_nx: int = 2001
    grid_nt: int = 2000
    checkpoints: int = 20
    bin_width: float = 0.05
    ti_points: int = 100
    custom_model: str = ""

    def integrator(self, run: int, stream_base: int = 0) -> IntegratorConfig:
        return IntegratorConfig(self.step, self.seed, stream_base + run)

    @property
    def step(self) -> float:
        if self.dt is not None:
            return self.dt
        return 1e-4 if self.example == "ex2" else 5e-4


_REQUIRED = ("example", "method")


def _convert(name, raw, typ):
    try:
        if typ in ("float", "float | None"):
            return float(raw)
        if typ == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot read {raw!r} as {typ}") from exc


def parse_config(text: str = "", overrides=()) -> ExperimentConfig:
    """Build a config from ``key = value`` lines plus ``key=value`` override strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    types = {f.name: str(f.type) for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - set(types))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    cfg = ExperimentConfig(**{k: _convert(k, v, types[k]) for k, v in raw.items()})
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    if cfg.example not in EXAMPLES:
        raise ConfigError(f"example must be one of {EXAMPLES}, got {cfg.example!r}")
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
    if cfg.ansatz not in ANSATZ:
        raise ConfigError(f"ansatz must be one of {ANSATZ}, got {cfg.ansatz!r}")
    if cfg.initial not in INITIAL:
        raise ConfigError(f"initial must be one of {INITIAL}, got {cfg.initial!r}")
    for name in ("beta", "tau", "bin_width"):
        v = getattr(cfg, name)
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{name} must be positive and finite, got {v}")
    if cfg.dt is not None and not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ConfigError(f"dt must be positive and finite, got {cfg.dt}")
    for name in ("n_traj", "n_runs", "n_pilot", "grid_nx", "grid_nt", "ti_points"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be at least 1")
    if cfg.checkpoints < 0:
        raise ConfigError("checkpoints must be nonnegative")
    if cfg.example == "ex2" and cfg.method in ("is-ce", "is-optimal"):
        raise ConfigError("importance sampling is implemented for the alchemical example only")
    if cfg.example == "ex1" and cfg.tau != 1.0:
        raise ConfigError("time rescaling tau applies to the reaction-coordinate example")
    if cfg.method == "is-ce" and cfg.ansatz == "none":
        raise ConfigError("is-ce needs an ansatz (linear or gaussian)")
    if cfg.initial == "mu0star" and cfg.method != "is-optimal":
        raise ConfigError("initial=mu0star is only available with method=is-optimal")
    if cfg.example == "custom" and not cfg.custom_model:
        raise ConfigError("example=custom needs custom_model=module:function")
    try:
        sched = _schedule(cfg)
    except ValueError as exc:
        raise ConfigError(f"ce_schedule: {exc}") from exc
    if any(b <= 0 for b in sched):
        raise ConfigError("ce_schedule entries must be positive")


def _schedule(cfg) -> tuple:
    return tuple(float(v) for v in cfg.ce_schedule.split(",") if v.strip())


# ------------------------------------------------------------- problems

@dataclass
class AlchemicalProblem:
    model: object
    protocol: object
    mu0: object                 # equilibrium law at lambda(0)
    beta: float
    mubar0: object = None
    end_law: object = None      # equilibrium law at lambda(T), for reversed runs
    reference_dF: float | None = None
    oracle_curve: object = None  # callable times -> Delta F(t)


def alchemical_problem(cfg: ExperimentConfig) -> AlchemicalProblem:
    if cfg.example == "ex1":
        ex = ExampleOne(beta=cfg.beta)
        m, p = ex.model(), ex.protocol()
        mu0 = GaussianLaw(ex.initial_mean(), 1.0 / cfg.beta)
        return AlchemicalProblem(m, p, mu0, cfg.beta, GaussianLaw(cfg.mubar_mean, 1.0 / cfg.beta),
                                 oracle.equilibrium_sampler_1d(m, p.lam(p.horizon), cfg.beta),
                                 oracle.free_energy(m, p.lam(0.0), p.lam(p.horizon), cfg.beta),
                                 lambda ts: oracle.delta_f_curve(m, p, cfg.beta, ts))
    if cfg.example == "custom":
        mod, _, fn = cfg.custom_model.partition(":")
        try:
            factory = getattr(importlib.import_module(mod), fn)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"custom_model {cfg.custom_model!r} not found") from exc
        prob = factory(cfg)
        if not isinstance(prob, AlchemicalProblem):
            raise ConfigError("custom_model must return an AlchemicalProblem")
        return prob
    raise ConfigError("not an alchemical example")


# -------------------------------------------------------------- running

@dataclass
class Outcome:
    report: est.EstimatorReport
    curve_x: np.ndarray
    curve_mean: np.ndarray
    curve_sd: np.ndarray | None
    hist: tuple
    reference_dF: float | None
    omega: np.ndarray | None = None
    omega_labels: tuple = ()
    extra: dict = field(default_factory=dict)


class _HistogramAccumulator:
    def __init__(self, width):
        self.width = width
        self.counts = {}
        self.n = 0

    def add(self, work):
        w = np.asarray(work, dtype=float)
        w = w[np.isfinite(w)]
        idx = np.floor(w / self.width).astype(np.int64)
        u, c = np.unique(idx, return_counts=True)
        for i, k in zip(u.tolist(), c.tolist()):
            self.counts[i] = self.counts.get(i, 0) + k
        self.n += w.size

    def result(self):
        if not self.counts:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        lo, hi = min(self.counts), max(self.counts)
        ks = np.arange(lo, hi + 1)
        dens = np.array([self.counts.get(int(k), 0) for k in ks]) / (self.n * self.width)
        return ks * self.width, (ks + 1) * self.width, dens


def _collect(results_iter, beta, width, curve_map):
    runs, curves = [], []
    hist = _HistogramAccumulator(width)
    times = None
    for res in results_iter:
        runs.append(est.jarzynski_estimate(res, beta))
        hist.add(res.work[res.valid()])
        if res.work_checkpoints is not None:
            times, c = est.df_curve(res, beta)
            curves.append(c)
    report = est.summarize_runs(runs)
    if curves:
        C = np.array(curves)
        sd = C.std(axis=0, ddof=1) if len(curves) > 1 else None
        return report, curve_map(times), C.mean(axis=0), sd, hist.result()
    return report, np.zeros(0), np.zeros(0), None, hist.result()


def _checkpoints(cfg, horizon):
    n_steps = IntegratorConfig(cfg.step).n_steps(horizon)
    c = cfg.checkpoints
    while c > 0 and n_steps % c:
        c -= 1
    return c


def fit_ce_control(cfg: ExperimentConfig, prob: AlchemicalProblem) -> ce.CEFit:
    basis = cell_basis() if cfg.ansatz == "linear" else gaussian_basis()
    init = prob.mubar0 if cfg.initial == "mubar0" else prob.mu0
    pilot = IntegratorConfig(cfg.step, cfg.seed, 0)
    return ce.iterate_ce(prob.model, prob.protocol, basis, init, pilot, schedule=_schedule(cfg),
                         n_pilot=cfg.n_pilot, reference=prob.mu0)


def run_alchemical(cfg: ExperimentConfig, prob: AlchemicalProblem | None = None) -> Outcome:
    prob = prob or alchemical_problem(cfg)
    m, p, beta = prob.model, prob.protocol, prob.beta
    ck = _checkpoints(cfg, p.horizon)
    control, omega, labels, extra = None, None, (), {}
    init = prob.mubar0 if cfg.initial == "mubar0" else prob.mu0
    if cfg.method == "is-ce":
        fit = fit_ce_control(cfg, prob)
        control, omega, labels = fit.control, fit.control.omega, fit.control.basis.labels
    elif cfg.method == "is-optimal":
        sol = pdeopt.solve_g(m, p, beta, cfg.grid_nx, cfg.grid_nt)
        control = pdeopt.optimal_control(sol)
        extra["pde_dF"] = pdeopt.delta_f_from_g(sol, m, p)
        if cfg.initial == "mu0star":
            init = pdeopt.optimal_initial(sol, m, p)

    def runs():
        for r in range(cfg.n_runs):
            yield simulate_alchemical(m, p, init, cfg.integrator(r), beta=beta, n_traj=cfg.n_traj,
                                      control=control, reference=prob.mu0, checkpoints=ck)

    lam_of = lambda ts: np.array([p.lam(t)[0] if p.n_lambda == 1 else t for t in ts])
    report, cx, cm, cs, hist = _collect(runs(), beta, cfg.bin_width, lam_of)
    return Outcome(report, cx, cm, cs, hist, prob.reference_dF, omega, labels, extra)


def _ex2_parts(cfg):
    spec = ExampleTwo(kappa=cfg.kappa, beta=cfg.beta)
    return spec, spec.model(), spec.reaction_coordinate(), spec.drive()


def run_rc(cfg: ExperimentConfig) -> Outcome:
    spec, m, rc, drive = _ex2_parts(cfg)
    ck = _checkpoints(cfg, drive.horizon)
    law = oracle.level_set_law(spec, spec.theta_start)

    def runs():
        for r in range(cfg.n_runs):
            yield simulate_rc(rc, m, drive, law, cfg.integrator(r), beta=cfg.beta, tau=cfg.tau,
                              n_traj=cfg.n_traj, checkpoints=ck)

    theta_of = lambda ts: np.array([drive.lam(t)[0] for t in ts])
    report, cx, cm, cs, hist = _collect(runs(), cfg.beta, cfg.bin_width, theta_of)
    return Outcome(report, cx, cm, cs, hist, oracle.delta_f_theta(spec, spec.theta_end))


def run_ti(cfg: ExperimentConfig) -> Outcome:
    """Thermodynamic integration with exact equilibrium samples; one estimate per run."""
    runs_dF = []
    if cfg.example == "ex2":
        spec, m, rc, drive = _ex2_parts(cfg)
        laws = {}

        def sampler(z, n, rng):
            key = float(z[0])
            if key not in laws:
                laws[key] = oracle.level_set_law(spec, key)
            return laws[key].sample(rng.random((n, 2)))

        for r in range(cfg.n_runs):
            dF, ts, vals = est.ti_estimate_rc(rc, m, drive, sampler, cfg.beta, cfg.ti_points, cfg.n_traj,
                                              seed=cfg.seed * 1000 + r)
            runs_dF.append((dF, ts, vals))
        xs = lambda ts: np.array([drive.lam(t)[0] for t in ts])
        ref = oracle.delta_f_theta(spec, spec.theta_end)
    else:
        prob = alchemical_problem(cfg)
        m, p = prob.model, prob.protocol
        laws = {}

        def sampler(t, n, rng):
            if t not in laws:
                laws[t] = oracle.equilibrium_sampler_1d(m, p.lam(t), cfg.beta)
            return laws[t].sample(rng.random(n))

        for r in range(cfg.n_runs):
            dF, ts, vals = est.ti_estimate(m, p, sampler, cfg.beta, cfg.ti_points, cfg.n_traj,
                                           seed=cfg.seed * 1000 + r)
            runs_dF.append((dF, ts, vals))
        xs = lambda ts: np.array([p.lam(t)[0] for t in ts])
        ref = prob.reference_dF
    ts = runs_dF[0][1]
    curves = np.array([cumulative_trapezoid(v, ts, initial=0.0) for _, _, v in runs_dF])
    dFs = np.array([d for d, _, _ in runs_dF])
    runs = [est.RunEstimate(-cfg.beta * d, d, float("nan"), None, cfg.n_traj, 0) for d in dFs]
    report = est.summarize_runs(runs)
    report.mean_W = float("nan")
    sd = curves.std(axis=0, ddof=1) if len(curves) > 1 else None
    return Outcome(report, xs(ts), curves.mean(axis=0), sd, (np.zeros(0), np.zeros(0), np.zeros(0)), ref)


def run_crooks(cfg: ExperimentConfig) -> Outcome:
    """Forward and reversed ensembles; the summary holds the forward Jarzynski estimate
    and ``extra['crooks']`` the per-bin Crooks ratios."""
    if cfg.example == "ex2":
        spec, m, rc, drive = _ex2_parts(cfg)
        fwd_law = oracle.level_set_law(spec, spec.theta_start)
        rev_law = oracle.level_set_law(spec, spec.theta_end)
        sim_f = lambda r: simulate_rc(rc, m, drive, fwd_law, cfg.integrator(r), beta=cfg.beta, tau=cfg.tau,
                                      n_traj=cfg.n_traj)
        sim_r = lambda r: simulate_rc_reversed(rc, m, drive, rev_law, cfg.integrator(r, 500), beta=cfg.beta,
                                               tau=cfg.tau, n_traj=cfg.n_traj)
        ref = oracle.delta_f_theta(spec, spec.theta_end)
    else:
        prob = alchemical_problem(cfg)
        m, p = prob.model, prob.protocol
        sim_f = lambda r: simulate_alchemical(m, p, prob.mu0, cfg.integrator(r), beta=cfg.beta, n_traj=cfg.n_traj)
        sim_r = lambda r: simulate_reversed(m, p, prob.end_law, cfg.integrator(r, 500), beta=cfg.beta,
                                            n_traj=cfg.n_traj)
        ref = prob.reference_dF
    fwd = [sim_f(r) for r in range(cfg.n_runs)]
    rev = [sim_r(r) for r in range(cfg.n_runs)]
    report, _, _, _, hist = _collect(iter(fwd), cfg.beta, cfg.bin_width, lambda ts: ts)
    wf = np.concatenate([f.work for f in fwd])
    wr = np.concatenate([-r.work for r in rev])
    lo = math.floor(min(wf.min(), wr.min()) / cfg.bin_width) * cfg.bin_width
    hi = math.ceil(max(wf.max(), wr.max()) / cfg.bin_width) * cfg.bin_width
    edges = np.arange(lo, hi + cfg.bin_width / 2, cfg.bin_width)
    pooled_f = _pool(fwd)
    pooled_r = _pool(rev)
    crooks = est.crooks_check(pooled_f, pooled_r, cfg.beta, ref, edges, min_count=50)
    return Outcome(report, np.zeros(0), np.zeros(0), None, hist, ref, extra={"crooks": crooks})


def _pool(results):
    cat = lambda name: np.concatenate([getattr(r, name) for r in results])
    return TrajectoryResult(cat("x_initial"), cat("x_final"), cat("work"), cat("log_weight"), cat("diverged"),
                            cat("max_constraint_violation"), results[0].beta, results[0].tau)


def execute(cfg: ExperimentConfig) -> Outcome:
    validate(cfg)
    if cfg.method == "ti":
        return run_ti(cfg)
    if cfg.method == "crooks":
        return run_crooks(cfg)
    if cfg.example == "ex2":
        return run_rc(cfg)
    return run_alchemical(cfg)


# -------------------------------------------------------------- writing

def _fmt(v) -> str:
    return "nan" if v is None else format(float(v), ".17g")


def _json_num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


class _Writer:
    """Tracks files written so a failed run can remove its partial outputs."""

    def __init__(self, out: Path):
        self.out = out
        self.created_dir = not out.exists()
        self.files: list[Path] = []

    def open(self):
        self.out.mkdir(parents=True, exist_ok=True)

    def text(self, name, content):
        path = self.out / name
        self.files.append(path)
        path.write_text(content)

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def csv(self, name, header, columns):
        lines = [",".join(header)]
        for row in zip(*columns):
            lines.append(",".join(_fmt(v) for v in row))
        self.text(name, "\n".join(lines) + "\n")

    def cleanup(self):
        for f in self.files:
            try:
                f.unlink()
            except FileNotFoundError:
                pass
        if self.created_dir:
            try:
                self.out.rmdir()
            except OSError:
                pass


def write_outcome(cfg: ExperimentConfig, outcome: Outcome, w: _Writer, wall: float):
    rep = outcome.report
    summary = {k: _json_num(v) if isinstance(v, float) else v for k, v in rep.as_dict().items()}
    if cfg.n_traj == 1:
        summary["sd_I_per_trajectory"] = None
    summary.update({"example": cfg.example, "method": cfg.method, "reference_dF": _json_num(outcome.reference_dF)})
    for k, v in outcome.extra.items():
        if isinstance(v, float):
            summary[k] = _json_num(v)
    w.json("summary.json", summary)
    if outcome.curve_x.size:
        sd = outcome.curve_sd if outcome.curve_sd is not None else [None] * outcome.curve_x.size
        w.csv("df_curve.csv", ["lambda_or_theta", "dF_mean", "dF_sd"], [outcome.curve_x, outcome.curve_mean, sd])
    left, right, dens = outcome.hist
    if left.size:
        w.csv("work_hist.csv", ["bin_left", "bin_right", "density"], [left, right, dens])
    if outcome.omega is not None:
        w.json("omega.json", {"ansatz": cfg.ansatz, "labels": list(outcome.omega_labels),
                              "omega": [float(v) for v in outcome.omega]})
    if "crooks" in outcome.extra:
        c = outcome.extra["crooks"]
        w.csv("crooks.csv", ["bin_left", "bin_right", "ratio", "se", "target"],
              [c.left, c.right, c.ratio, c.se, np.full(c.ratio.size, c.target)])
    w.json("run_meta.json", {"config": asdict(cfg), "version": __version__, "threads": thread_count(),
                             "wall_time_s": wall, "python": platform.python_version(),
                             "numpy": np.__version__, "n_diverged": rep.n_diverged})


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    """Run the configured estimator and write its outputs; partial outputs are removed on failure."""
    validate(cfg)
    w = _Writer(Path(cfg.output_dir))
    try:
        w.open()
        t0 = time.perf_counter()
        outcome = execute(cfg)
        write_outcome(cfg, outcome, w, time.perf_counter() - t0)
        return outcome
    except BaseException:
        w.cleanup()
        raise


def run_pipeline_ce(cfg: ExperimentConfig) -> Outcome:
    """Fit the cross-entropy control, then run the importance-sampling estimator with it."""
    return run_experiment(replace(cfg, method="is-ce"))


def run_reference(cfg: ExperimentConfig) -> dict:
    """Quadrature reference curve, and for the alchemical example the PDE solution.

    Writes oracle_df.csv and, for ex1, pde_grid.npz plus pde_t0.csv with
    x, U(x, 0), u*(x, 0) and the optimal initial density.
    """
    validate(cfg)
    w = _Writer(Path(cfg.output_dir))
    try:
        w.open()
        t0 = time.perf_counter()
        out = {}
        if cfg.example == "ex2":
            spec = ExampleTwo(kappa=cfg.kappa, beta=cfg.beta)
            th = np.linspace(spec.theta_start, spec.theta_end, 101)
            curve = oracle.delta_f_theta_curve(spec, th)
            w.csv("oracle_df.csv", ["lambda_or_theta", "dF"], [th, curve])
            out["dF"] = float(curve[-1])
        else:
            prob = alchemical_problem(cfg)
            m, p = prob.model, prob.protocol
            ts = np.linspace(0.0, p.horizon, 101)
            curve = prob.oracle_curve(ts)
            w.csv("oracle_df.csv", ["lambda_or_theta", "dF"], [[p.lam(t)[0] for t in ts], curve])
            out["dF"] = float(curve[-1])
            sol = pdeopt.solve_g(m, p, prob.beta, cfg.grid_nx, cfg.grid_nt)
            path = Path(cfg.output_dir) / "pde_grid.npz"
            w.files.append(path)
            sol.save(path)
            law = pdeopt.optimal_initial(sol, m, p, n_nodes=sol.x.size)
            w.csv("pde_t0.csv", ["x", "U", "u_star", "mu0star_density"],
                  [sol.x, sol.U[0], sol.control_table()[0], law.density(sol.x)])
            out["pde_dF"] = pdeopt.delta_f_from_g(sol, m, p)
        w.json("summary.json", {"example": cfg.example, "oracle_dF": out["dF"], "pde_dF": out.get("pde_dF")})
        w.json("run_meta.json", {"config": asdict(cfg), "version": __version__, "threads": thread_count(),
                                 "wall_time_s": time.perf_counter() - t0})
        return out
    except BaseException:
        w.cleanup()
        raise
