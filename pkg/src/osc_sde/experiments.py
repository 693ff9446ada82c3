"""Experiment drivers behind the ``osc-sde`` command line.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns plain
data (an :class:`~osc_sde.montecarlo.ErrorTable` or a dict) without touching
files; :mod:`osc_sde.cli` does the I/O.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import montecarlo as mc
from . import problems as catalog
from . import toolkit
from .core import RngStream, validate_problem
from .montecarlo import ErrorRow, ErrorTable
from .schemes import SCHEMES, TimeGrid, integrate

EXPERIMENTS = ("weak-conv", "strong-conv", "resonance", "validate", "sweep")
DEFAULT_SEED = 20261016
PAPER_EPSILONS = (2.0**-4, 2.0**-6, 2.0**-8, 2.0**-10)

TEST_FUNCTIONS = {
    "x1": lambda x: x[..., 0],
    "sum": lambda x: x.sum(axis=-1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    problem: str
    schemes: tuple
    h: tuple
    eps: tuple
    samples: int
    final_time: float
    seed: int = DEFAULT_SEED
    out: Optional[str] = None
    format: str = "csv"
    threads: int = 1
    test_fn: str = "x1"
    ref_refinement: int = 64
    x0: Optional[tuple] = None
    noise_scale: Optional[float] = None
    period_scale: float = 1.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.problem != "all" and self.problem not in catalog.CATALOG:
            raise ValueError(f"unknown problem {self.problem!r}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.samples < 1 or self.threads < 1:
            raise ValueError("samples and threads must be positive")
        if not self.final_time > 0:
            raise ValueError("final time must be positive")
        if any(not (0 < e <= 1) for e in self.eps):
            raise ValueError("every epsilon must lie in (0, 1]")
        if any(not h > 0 for h in self.h):
            raise ValueError("step sizes must be positive")
        if self.test_fn not in TEST_FUNCTIONS:
            raise ValueError(f"test function must be one of {sorted(TEST_FUNCTIONS)}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def provenance(self) -> dict:
        doc = asdict(self)
        doc.pop("out")
        doc.pop("threads")
        return doc


def default_config(experiment: str) -> ExperimentConfig:
    """Defaults reproducing the published experiment grids."""
    if experiment == "weak-conv":
        return ExperimentConfig(experiment, "henon-heiles-mult-weak", SCHEMES,
                                tuple(2.0**-i for i in range(1, 6)), PAPER_EPSILONS,
                                10**4, 1.0)
    if experiment == "strong-conv":
        return ExperimentConfig(experiment, "henon-heiles-mult-strong", SCHEMES,
                                tuple(2.0**-i for i in range(4, 9)), PAPER_EPSILONS,
                                100, 1.0)
    if experiment == "resonance":
        return ExperimentConfig(experiment, "logistic", ("em", "micro-macro"),
                                (0.99 * 2.0 * math.pi * 0.1,), (0.1,), 1, 10.0,
                                ref_refinement=256)
    if experiment == "sweep":
        return ExperimentConfig(experiment, "henon-heiles-add-weak", ("micro-macro",),
                                (2.0**-8,), PAPER_EPSILONS, 1000, 1.0)
    if experiment == "validate":
        return ExperimentConfig(experiment, "all", SCHEMES, (), (), 1, 1.0)
    raise ValueError(f"unknown experiment {experiment!r}")


def _spec(config, epsilon=None):
    spec = catalog.get_spec(config.problem, epsilon)
    if config.noise_scale is not None:
        key = "mu" if spec.name == "gbm" else "noise_scale"
        if key not in spec.parameters:
            raise ValueError(f"problem {spec.name} has no noise scale")
        params = dict(spec.parameters, **{key: float(config.noise_scale)})
        spec = replace(spec, parameters=params)
    if config.x0 is not None:
        spec = spec.with_initial_state(config.x0)
    return spec


def _convergence(config: ExperimentConfig, mode: str) -> ErrorTable:
    test_fn = TEST_FUNCTIONS[config.test_fn]

    def run(eps, seed):
        spec = _spec(config, eps)
        return mc.study_rows(config.experiment, config.problem, spec.build(), config.schemes,
                             config.h, config.final_time, config.samples, seed,
                             spec.initial_state, mode, test_fn=test_fn,
                             reference=config.ref_refinement, threads=config.threads)

    table = mc.epsilon_sweep(run, config.eps, config.seed)
    return table.fit_orders()


def run_weak_conv(config: ExperimentConfig) -> ErrorTable:
    """Weak errors per (scheme, epsilon, h) with fitted orders per (scheme, epsilon)."""
    return _convergence(config, "weak")


def run_strong_conv(config: ExperimentConfig) -> ErrorTable:
    return _convergence(config, "strong")


def run_sweep(config: ExperimentConfig) -> ErrorTable:
    """Micro-part size ``E|Y(T)|`` per epsilon, with the log-log slope against epsilon."""
    h = config.h[0]
    steps = mc._steps_for(config.final_time, h)

    def run(eps, seed):
        spec = _spec(config, eps)
        est = mc.micro_mean_abs(spec.build(), TimeGrid(0.0, config.final_time, steps),
                                config.samples, seed, spec.initial_state, threads=config.threads)
        return [ErrorRow("sweep", config.problem, "micro-macro", eps, config.final_time / steps,
                         config.samples, est.value, est.half_width, seed=seed)]

    table = mc.epsilon_sweep(run, config.eps, config.seed)
    if len(table.rows) >= 3:
        fit = mc.estimate_order([(r.epsilon, r.error) for r in table.rows])
        for r in table.rows:
            r.order_fit, r.residual = fit.slope, fit.residual
    return table


def run_resonance(config: ExperimentConfig) -> dict:
    """Euler-Maruyama versus micro-macro on a step close to the oscillation period.

    The step count is ``floor(T / h)``, so the run ends at the last grid point
    not beyond ``T``.
    """
    eps = config.eps[0]
    spec = _spec(config, eps)
    h = config.h[0]
    n_steps = int(math.floor(config.final_time / h + 1e-12))
    if n_steps < 1:
        raise ValueError("final time shorter than one step")
    res = mc.resonance_paths(spec.build(), h, n_steps, spec.initial_state, config.seed,
                             refinement=config.ref_refinement, scheme_names=config.schemes)
    return {"epsilon": eps, "h": h, "steps": n_steps, **res}


# -- validation ------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: str
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value!r} (want {self.bound})"


def _below(name, value, tol):
    return Check(name, float(value), f"<= {tol:g}", bool(value <= tol))


def _within(name, value, lo, hi):
    return Check(name, float(value), f"in [{lo:g}, {hi:g}]", bool(lo <= value <= hi))


def probe_points(dimension, count=20, seed=0, low=-2.0, high=2.0):
    """Deterministic uniform probe points in ``[low, high]^d``."""
    return RngStream(seed, 0).generator().uniform(low, high, size=(count, dimension))


def catalog_checks(period_scale=1.0, names=None, probes=20) -> list:
    """Structural and closed-form checks for catalog problems."""
    checks = []
    for name in names or catalog.CATALOG:
        spec = catalog.get_spec(name)
        problem = spec.build()
        if period_scale != 1.0:
            problem = replace(problem, period=problem.period * period_scale)
        pts = probe_points(problem.dimension, probes)
        report = validate_problem(problem, pts)
        checks.append(_below(f"{name} periodicity", report["periodicity"], 1e-12))
        checks.append(_below(f"{name} F_0 = 0", report["antiderivative_at_zero"], 1e-12))
        checks.append(_below(f"{name} F_P = 0", report["antiderivative_closure"], 1e-8))
        checks.append(_below(f"{name} averaged drift vs quadrature",
                             report["averaged_drift_consistency"], 1e-9))
        checks.append(_below(f"{name} antiderivative vs quadrature",
                             report["antiderivative_consistency"], 1e-9))
        jac_gap = hess_gap = 0.0
        for th in np.linspace(0.0, problem.period, 7):
            jac_gap = max(jac_gap, float(np.max(np.abs(
                problem.antiderivative_jacobian(th, pts)
                - toolkit.antiderivative_jacobian_fallback(problem, th, pts)))))
            hess_gap = max(hess_gap, float(np.max(np.abs(
                problem.antiderivative_hessian(th, pts)
                - toolkit.antiderivative_hessian_fallback(problem, th, pts)))))
        checks.append(_below(f"{name} F' vs finite differences", jac_gap, 1e-6))
        checks.append(_below(f"{name} F'' vs finite differences", hess_gap, 1e-5))
    return checks


def integral_exactness_gap(epsilons=(1.0, 2.0**-4, 2.0**-8), step_counts=(1, 7, 64),
                           final_time=1.0) -> float:
    """Largest deviation of the integral scheme from the exact pure-oscillation solution."""
    worst = 0.0
    for eps in epsilons:
        problem = catalog.pure_oscillation(eps)
        exact = catalog.pure_oscillation_exact(eps, final_time)
        for n in step_counts:
            x, _ = integrate(problem, "integral", TimeGrid(0.0, final_time, n), [0.0], np.zeros(n))
            worst = max(worst, abs(float(x[0]) - exact))
    return worst


def trivial_limit_gap(steps=64, seed=0) -> float:
    """Largest per-step pathwise gap between the three schemes on GBM."""
    problem = catalog.geometric_brownian(1.0, 0.5, 1.0)
    grid = TimeGrid(0.0, 1.0, steps)
    inc = mc.brownian_grid(RngStream(seed, 0), grid.step, steps).fine_increments
    paths = [integrate(problem, s, grid, [1.0], inc, keep_path=True)[0] for s in SCHEMES]
    per_step = np.maximum(np.arange(steps + 1), 1)[:, None]
    return max(float(np.max(np.abs(p - paths[0]) / per_step)) for p in paths[1:])


GBM_WEAK = {"lam": 1.0, "mu": 0.5, "x0": 1.0}
GBM_STRONG = {"lam": 0.25, "mu": 0.5, "x0": 1.0}


def gbm_self_test(seed=DEFAULT_SEED, weak_samples=10**4, strong_samples=1000, threads=1):
    """Fitted EM weak and strong orders on GBM against its pathwise exact solution."""
    def study(params, steps, M, mode):
        problem = catalog.geometric_brownian(**params)
        exact = lambda x0, t, w: catalog.gbm_exact(params["lam"], params["mu"], x0, t, w)
        res = mc.convergence_study(problem, ["em"], steps, 1.0, M, seed, [params["x0"]],
                                   mode=mode, test_fn=TEST_FUNCTIONS["x1"], reference=exact,
                                   threads=threads)
        return mc.estimate_order([(1.0 / n, e.value) for (_, n), e in res.items()])

    weak = study(GBM_WEAK, [2.0**-i for i in range(2, 7)], weak_samples, "weak")
    strong = study(GBM_STRONG, [2.0**-i for i in range(4, 9)], strong_samples, "strong")
    return weak, strong


def run_validate(config: ExperimentConfig) -> list:
    names = None if config.problem == "all" else [config.problem]
    checks = catalog_checks(config.period_scale, names)
    checks.append(_below("integral scheme exact on pure oscillation",
                         integral_exactness_gap(), 1e-10))
    checks.append(_below("schemes agree for theta-independent drift", trivial_limit_gap(), 1e-12))
    weak, strong = gbm_self_test(config.seed, threads=config.threads)
    checks.append(_within("GBM Euler-Maruyama weak order", weak.slope, 0.8, 1.2))
    checks.append(_within("GBM Euler-Maruyama strong order", strong.slope, 0.4, 0.6))
    return checks


def resonance_document(result: dict, config: ExperimentConfig) -> dict:
    """JSON-ready view of :func:`run_resonance`: one path record per scheme."""
    def record(name, t, x):
        return {"t": [float(v) for v in t], "x": np.asarray(x).tolist(),
                "scheme": name, "seed": config.seed}

    paths = [record("reference-integral", result["reference"]["t"], result["reference"]["x"])]
    errors, diverged = {}, {}
    for name, info in result["schemes"].items():
        paths.append(record(name, info["t"], info["x"]))
        errors[name] = None if info["diverged"] else info["endpoint_error"]
        diverged[name] = info["diverged"]
    return {"config": config.provenance(), "epsilon": result["epsilon"], "h": result["h"],
            "steps": result["steps"], "endpoint_errors": errors, "diverged": diverged,
            "paths": paths}
