"""Monte Carlo error estimation with common random numbers.

Every sample ``i`` of a run with seed ``s`` draws its fine Brownian path from
``RngStream(s, i)``; a coarse scheme sees the exact partial sums of that fine
path.  Fine increments are rounded to multiples of ``QUANTUM = 2**-40``, which
makes every partial sum exact in double precision: coarsening is bitwise
reproducible and independent of summation order.  Per-sample results are
reduced with :func:`math.fsum`, so chunking and ``threads`` never change a
result.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BLOWUP_THRESHOLD, MicroMacroState, OscillatoryProblem, RngStream, derive_seed
from .schemes import (TimeGrid, _micro_macro_update, integrate, recombine, simulate_path,
                      step_euler_maruyama, step_integral)
from .toolkit import DEFAULT_RULE

QUANTUM = 2.0**-40
#: samples simulated together; fixed so results never depend on ``threads``
CHUNK = 1000
Z95 = 1.96


@dataclass(frozen=True)
class BrownianGrid:
    """Fine Wiener increments of one or several paths (last axis is time)."""

    fine_step: float
    fine_increments: np.ndarray

    @property
    def count(self) -> int:
        return self.fine_increments.shape[-1]

    def total(self):
        return self.fine_increments.sum(axis=-1)


def quantize(values):
    return np.round(np.asarray(values, dtype=float) / QUANTUM) * QUANTUM


def brownian_grid(stream: RngStream, fine_step: float, count: int) -> BrownianGrid:
    xi = stream.generator().standard_normal(int(count))
    return BrownianGrid(fine_step, quantize(math.sqrt(fine_step) * xi))


def brownian_batch(seed: int, sample_indices, fine_step: float, count: int) -> BrownianGrid:
    """Stack the fine paths of ``RngStream(seed, i)`` for each sample index."""
    rows = [RngStream(seed, int(i)).generator().standard_normal(int(count))
            for i in sample_indices]
    xi = np.array(rows).reshape(len(rows), int(count))
    return BrownianGrid(fine_step, quantize(math.sqrt(fine_step) * xi))


def _is_power_of_two(k):
    return int(k) == k and k >= 1 and (int(k) & (int(k) - 1)) == 0


def coarsen(grid: BrownianGrid, ratio: int) -> np.ndarray:
    """Sums of consecutive blocks of ``ratio`` fine increments."""
    if not _is_power_of_two(ratio):
        raise ValueError(f"ratio must be a power of two, got {ratio}")
    if grid.count % ratio:
        raise ValueError(f"ratio {ratio} does not divide {grid.count} fine steps")
    inc = grid.fine_increments
    if ratio == 1:
        return inc.copy()
    # pairwise halving; exact because every partial sum sits on the QUANTUM lattice
    while ratio > 1:
        inc = inc[..., 0::2] + inc[..., 1::2]
        ratio //= 2
    return inc


@dataclass(frozen=True)
class ErrorEstimate:
    """Monte Carlo error with a 95% confidence half-width."""

    value: float
    half_width: float
    sample_count: int

    @property
    def significant(self) -> bool:
        """False when the confidence interval is wider than the estimate."""
        return self.half_width < self.value


def _mean_std(values):
    values = np.asarray(values, dtype=float).ravel()
    m = len(values)
    mean = math.fsum(values) / m
    if m < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (m - 1)
    return mean, math.sqrt(var)


def weak_estimate(differences) -> ErrorEstimate:
    """``|mean|`` of per-sample differences, half-width ``1.96 s / sqrt(M)``."""
    mean, std = _mean_std(differences)
    m = np.size(differences)
    return ErrorEstimate(abs(mean), Z95 * std / math.sqrt(m), m)


def strong_estimate(squared_errors) -> ErrorEstimate:
    """Root mean square error.

    The interval ``ms +- 1.96 s / sqrt(M)`` is built on the mean square; the
    reported half-width is half the length of its image under ``sqrt``.
    """
    ms, std = _mean_std(squared_errors)
    m = np.size(squared_errors)
    hw = Z95 * std / math.sqrt(m)
    half = 0.5 * (math.sqrt(ms + hw) - math.sqrt(max(ms - hw, 0.0)))
    return ErrorEstimate(math.sqrt(ms), half, m)


# -- simulation engine -----------------------------------------------------------

Exact = Callable[[np.ndarray, float, np.ndarray], np.ndarray]


def _chunks(M):
    return [range(lo, min(lo + CHUNK, M)) for lo in range(0, M, CHUNK)]


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def simulate_terminal(problem: OscillatoryProblem, runs, final_time: float, fine_steps: int,
                      M: int, seed: int, x0, reference=None, threads=1, t0=0.0):
    """Terminal states of several (scheme, step count) runs on shared noise.

    ``runs`` is a sequence of ``(scheme, N)``; each ``N`` must divide
    ``fine_steps`` by a power of two.  ``reference`` is ``"integral"`` (the
    integral scheme on the fine grid), a callable ``exact(x0, t, W_t)`` giving
    the pathwise solution, or ``None``.  Returns ``(terminals, reference)``
    where ``terminals[(scheme, N)]`` has shape ``(M, d)``.
    """
    fine = TimeGrid(t0, final_time, fine_steps)
    for _, n in runs:
        if fine_steps % n or not _is_power_of_two(fine_steps // n):
            raise ValueError(f"{n} steps do not divide {fine_steps} fine steps by a power of two")
    x0 = problem.check_state(x0)

    def work(indices):
        bg = brownian_batch(seed, indices, fine.step, fine_steps)
        out = {}
        for scheme, n in runs:
            inc = coarsen(bg, fine_steps // n)
            out[(scheme, n)], _ = integrate(problem, scheme, TimeGrid(t0, final_time, n), x0, inc)
        if reference == "integral":
            out["ref"], _ = integrate(problem, "integral", fine, x0, bg.fine_increments)
        elif callable(reference):
            w = bg.total()
            out["ref"] = np.asarray(reference(x0, final_time - t0, w[:, None]), dtype=float)
        return out

    if M < 1:
        raise ValueError("need at least one sample")
    parts = _map(work, _chunks(M), threads)
    keys = parts[0].keys()
    merged = {k: np.concatenate([p[k] for p in parts]) for k in keys}
    ref = merged.pop("ref", None)
    return merged, ref


def _steps_for(final_time, h, t0=0.0):
    n = (final_time - t0) / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
        raise ValueError(f"step {h} does not divide the interval [{t0}, {final_time}]")
    return int(round(n))


def weak_error(problem: OscillatoryProblem, scheme: str, test_fn, grid: TimeGrid, M: int,
               reference, seed: int, x0, threads=1) -> ErrorEstimate:
    """Weak error ``|E phi(X_N) - E phi(X(T))|`` at the end of ``grid``.

    ``reference`` may be

    * an ``int`` refinement ``r`` (power of two, at least 16): the integral
      scheme on the grid refined ``r`` times, driven by the same Brownian
      paths (common random numbers);
    * a callable ``exact(x0, t, W_t)``: the pathwise exact solution, again on
      the same Brownian paths;
    * a number: the exact value of ``E phi(X(T))``, compared with the plain
      sample mean.
    """
    rows = convergence_study(problem, [scheme], [grid.step], grid.final_time, M, seed, x0,
                             mode="weak", test_fn=test_fn, reference=reference,
                             threads=threads, t0=grid.t0)
    return rows[(scheme, grid.step_count)]


def strong_error(problem: OscillatoryProblem, scheme: str, grid: TimeGrid, M: int,
                 reference_refinement, seed: int, x0, threads=1) -> ErrorEstimate:
    """RMS distance at the end of ``grid`` to a reference on the same Brownian paths.

    ``reference_refinement`` is a power-of-two refinement for the fine
    integral-scheme reference, or a callable ``exact(x0, t, W_t)``.
    """
    rows = convergence_study(problem, [scheme], [grid.step], grid.final_time, M, seed, x0,
                             mode="strong", reference=reference_refinement,
                             threads=threads, t0=grid.t0)
    return rows[(scheme, grid.step_count)]


def convergence_study(problem: OscillatoryProblem, scheme_names: Sequence[str],
                      steps: Sequence[float], final_time: float, M: int, seed: int, x0,
                      mode="weak", test_fn=None, reference=64, threads=1, t0=0.0):
    """Weak or strong errors for every scheme and step size on shared noise.

    An integer ``reference`` refines the finest requested step.  Returns a
    dict ``{(scheme, N): ErrorEstimate}``.
    """
    if mode not in ("weak", "strong"):
        raise ValueError(f"mode must be 'weak' or 'strong', got {mode!r}")
    if mode == "weak" and test_fn is None:
        raise ValueError("weak errors need a test function")
    if mode == "weak" and M < 100 and not problem_is_deterministic(problem):
        raise ValueError("weak errors need M >= 100 samples")
    if mode == "strong" and M < 50 and not problem_is_deterministic(problem):
        raise ValueError("strong errors need M >= 50 samples")
    counts = sorted({_steps_for(final_time, h, t0) for h in steps})
    finest = counts[-1]

    exact_mean = None
    if isinstance(reference, (int, np.integer)) and not isinstance(reference, bool):
        if not _is_power_of_two(reference) or reference < 16:
            raise ValueError("reference refinement must be a power of two >= 16")
        fine_steps, ref_kind = finest * int(reference), "integral"
    elif callable(reference):
        fine_steps, ref_kind = finest, reference
    elif mode == "weak" and isinstance(reference, (float, np.floating)):
        fine_steps, ref_kind, exact_mean = finest, None, float(reference)
    else:
        raise ValueError(f"unsupported reference {reference!r}")

    runs = [(s, n) for s in scheme_names for n in counts]
    terminals, ref = simulate_terminal(problem, runs, final_time, fine_steps, M, seed, x0,
                                       reference=ref_kind, threads=threads, t0=t0)
    out = {}
    for key, xs in terminals.items():
        if mode == "weak":
            values = np.asarray(test_fn(xs), dtype=float)
            if exact_mean is not None:
                mean, std = _mean_std(values)
                out[key] = ErrorEstimate(abs(mean - exact_mean), Z95 * std / math.sqrt(M), M)
            else:
                out[key] = weak_estimate(values - np.asarray(test_fn(ref), dtype=float))
        else:
            out[key] = strong_estimate(np.sum((xs - ref) ** 2, axis=-1))
    return out


def problem_is_deterministic(problem: OscillatoryProblem) -> bool:
    probe = np.linspace(-1.0, 1.0, 3 * problem.dimension).reshape(3, problem.dimension)
    return not np.any(problem.diffusion(probe))


def micro_mean_abs(problem: OscillatoryProblem, grid: TimeGrid, M: int, seed: int, x0,
                   threads=1) -> ErrorEstimate:
    """Monte Carlo ``E|Y(T)|`` of the micro part of the micro-macro scheme."""
    x0 = problem.check_state(x0)

    def work(indices):
        bg = brownian_batch(seed, indices, grid.step, grid.step_count)
        _, state = integrate(problem, "micro-macro", grid, x0, bg.fine_increments)
        return np.linalg.norm(state.micro, axis=-1)

    norms = np.concatenate(_map(work, _chunks(M), threads))
    mean, std = _mean_std(norms)
    return ErrorEstimate(mean, Z95 * std / math.sqrt(M), M)


# -- order fitting ---------------------------------------------------------------

@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    residual: float


def estimate_order(points) -> OrderFit:
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    ``residual`` is the largest absolute residual of the fit in log space.
    """
    pts = [(float(h), float(e)) for h, e in points]
    if len(pts) < 3:
        raise ValueError("need at least three points to fit an order")
    if any(e <= 0 or h <= 0 for h, e in pts):
        raise ValueError("errors and steps must be positive to fit an order")
    lh = np.log([h for h, _ in pts])
    le = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(lh, le, 1)
    residual = float(np.max(np.abs(le - (slope * lh + intercept))))
    return OrderFit(float(slope), float(intercept), residual)


# -- tables ----------------------------------------------------------------------

CSV_COLUMNS = ("experiment", "problem", "scheme", "epsilon", "h", "M", "error",
               "ci_half_width", "order_fit", "residual", "seed")


@dataclass
class ErrorRow:
    experiment: str
    problem: str
    scheme: str
    epsilon: float
    h: float
    M: int
    error: float
    ci_half_width: float
    order_fit: Optional[float] = None
    residual: Optional[float] = None
    seed: int = 0


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ErrorTable:
    rows: list = field(default_factory=list)

    def add(self, row: ErrorRow):
        self.rows.append(row)

    def groups(self):
        """Rows keyed by ``(scheme, epsilon)`` in insertion order."""
        out = {}
        for r in self.rows:
            out.setdefault((r.scheme, r.epsilon), []).append(r)
        return out

    def fit_orders(self, against="h"):
        """Fill ``order_fit``/``residual`` per ``(scheme, epsilon)`` group."""
        for rows in self.groups().values():
            pts = [(getattr(r, against), r.error) for r in rows]
            try:
                fit = estimate_order(pts)
            except ValueError:
                continue
            for r in rows:
                r.order_fit, r.residual = fit.slope, fit.residual
        return self

    def slopes(self):
        return {k: rows[0].order_fit for k, rows in self.groups().items()}

    def errors(self, scheme, epsilon):
        return [(r.h, r.error) for r in self.rows if r.scheme == scheme and r.epsilon == epsilon]

    def to_csv(self, provenance: Optional[dict] = None) -> str:
        buf = io.StringIO()
        for key, value in (provenance or {}).items():
            buf.write(f"# {key}={value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self, provenance: Optional[dict] = None) -> str:
        doc = {"config": provenance or {}, "rows": [asdict(r) for r in self.rows]}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def epsilon_sweep(run: Callable[[float, int], list], epsilons: Sequence[float], seed: int,
                  independent_seeds=True) -> ErrorTable:
    """Collect ``run(epsilon, seed_for_epsilon)`` rows for every epsilon.

    With ``independent_seeds`` the seed for the ``i``-th epsilon is
    ``derive_seed(seed, i)``; otherwise every epsilon reuses ``seed`` and so
    the same Brownian paths.
    """
    if not epsilons:
        raise ValueError("need at least one epsilon")
    table = ErrorTable()
    for i, eps in enumerate(epsilons):
        if not (0.0 < eps <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        for row in run(eps, derive_seed(seed, i) if independent_seeds else seed):
            table.add(row)
    return table


def study_rows(experiment, problem_name, problem, scheme_names, steps, final_time, M, seed,
               x0, mode, test_fn=None, reference=64, threads=1):
    """Rows of a :func:`convergence_study`, ready for an :class:`ErrorTable`."""
    res = convergence_study(problem, scheme_names, steps, final_time, M, seed, x0, mode=mode,
                            test_fn=test_fn, reference=reference, threads=threads)
    rows = []
    for scheme in scheme_names:
        for (s, n), est in sorted(res.items(), key=lambda kv: -kv[0][1]):
            if s != scheme:
                continue
            rows.append(ErrorRow(experiment, problem_name, scheme, problem.epsilon,
                                 final_time / n, M, est.value, est.half_width, seed=seed))
    return rows


def resonance_paths(problem: OscillatoryProblem, h: float, n_steps: int, x0, seed: int,
                    refinement=256, scheme_names=("em", "micro-macro")):
    """Coarse paths of ``scheme_names`` against a fine integral-scheme reference.

    All paths share the Brownian path of ``RngStream(seed, 0)``.  Returns a
    dict with the reference path and, per scheme, its path (truncated at a
    blow-up), the endpoint error (``inf`` when diverged) and a ``diverged``
    flag.
    """
    if not _is_power_of_two(refinement):
        raise ValueError("refinement must be a power of two")
    x0 = problem.check_state(x0)
    coarse = TimeGrid.from_step(h, n_steps)
    fine = coarse.refined(refinement)
    bg = brownian_grid(RngStream(seed, 0), fine.step, fine.step_count)
    ref = simulate_path(problem, "integral", fine, bg.fine_increments, x0)
    inc = coarsen(bg, refinement)
    out = {"reference": {"t": fine.times(), "x": ref}, "schemes": {}}
    for name in scheme_names:
        path, diverged = _partial_path(problem, name, coarse, inc, x0)
        if diverged:
            err = math.inf
        else:
            err = float(np.linalg.norm(path[-1] - ref[-1]))
        out["schemes"][name] = {"t": coarse.times()[:len(path)], "x": path,
                                "endpoint_error": err, "diverged": diverged}
    return out


def _partial_path(problem, scheme, grid, increments, x0):
    x = np.array(x0, dtype=float)
    states = [x]
    mm = MicroMacroState.initial(problem, x0)
    h = grid.step
    for n in range(grid.step_count):
        t = grid.time(n)
        try:
            if scheme == "em":
                x = step_euler_maruyama(problem, x, t, h, increments[n])
            elif scheme == "integral":
                x = step_integral(problem, x, t, h, increments[n])
            else:
                mm = _micro_macro_update(problem, mm, t, h, increments[n], DEFAULT_RULE)
                x = recombine(problem, mm, grid.time(n + 1))
        except ArithmeticError:
            return np.array(states), True
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > BLOWUP_THRESHOLD):
            return np.array(states), True
        states.append(x)
    return np.array(states), False
