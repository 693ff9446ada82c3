"""Time stepping: direct Euler-Maruyama, the integral scheme and the
micro-macro Euler-Maruyama scheme.

All step functions accept a single state ``(d,)`` or a batch ``(M, d)``.  The
Brownian increment ``dW`` is a scalar or an array of shape ``(M,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import toolkit
from .core import BlowUpError, MicroMacroState, OscillatoryProblem, check_finite

SCHEMES = ("em", "integral", "micro-macro")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = t0 + n h`` with ``h = (final_time - t0) / step_count``."""

    t0: float
    final_time: float
    step_count: int

    def __post_init__(self):
        if int(self.step_count) != self.step_count or self.step_count < 0:
            raise ValueError("step_count must be a nonnegative integer")
        if self.step_count > 0 and not self.final_time > self.t0:
            raise ValueError("final_time must exceed t0")

    @classmethod
    def from_step(cls, h, step_count, t0=0.0):
        """Grid of ``step_count`` steps of exactly ``h`` (final time derived)."""
        return cls(t0, t0 + step_count * h, step_count)

    @property
    def step(self) -> float:
        if self.step_count == 0:
            return 0.0
        return (self.final_time - self.t0) / self.step_count

    def time(self, n) -> float:
        if n == self.step_count:
            return self.final_time
        return self.t0 + n * self.step

    def times(self) -> np.ndarray:
        t = self.t0 + self.step * np.arange(self.step_count + 1)
        t[-1] = self.final_time
        return t

    def refined(self, ratio) -> "TimeGrid":
        return TimeGrid(self.t0, self.final_time, self.step_count * ratio)


def _noise(sig, dW):
    return sig * np.asarray(dW, dtype=float)[..., None]


def step_euler_maruyama(problem: OscillatoryProblem, x, t_n, h, dW):
    """``x + h f_{t_n/eps}(x) + sigma(x) dW``."""
    x = problem.check_state(x)
    out = x + h * problem.drift(problem.theta(t_n), x) + _noise(problem.diffusion(x), dW)
    return check_finite(out)


def step_integral(problem: OscillatoryProblem, x, t_n, h, dW, rule=toolkit.DEFAULT_RULE):
    """``x + h <f>(x) + eps (F_{t_{n+1}/eps}(x) - F_{t_n/eps}(x)) + sigma(x) dW``."""
    x = problem.check_state(x)
    eps = problem.epsilon
    osc = (toolkit.antiderivative(problem, problem.theta(t_n + h), x, rule)
           - toolkit.antiderivative(problem, problem.theta(t_n), x, rule))
    out = (x + h * toolkit.averaged_drift(problem, x, rule) + eps * osc
           + _noise(problem.diffusion(x), dW))
    return check_finite(out)


def _micro_macro_update(problem, state, t_n, h, dW, rule):
    xb, y = state.macro, state.micro
    eps = problem.epsilon
    th = problem.theta(t_n)
    avg = toolkit.averaged_drift(problem, xb, rule)
    sig = problem.diffusion(xb)
    jac = toolkit.antiderivative_jacobian(problem, th, xb, rule)
    hess = toolkit.antiderivative_hessian(problem, th, xb, rule)
    full = toolkit.phi(problem, th, xb, rule) + y

    macro = xb + h * avg + _noise(sig, dW)
    drift_y = (problem.drift(th, full) - problem.drift(th, xb)
               - eps * (toolkit.matvec(jac, avg) + 0.5 * toolkit.bilinear(hess, sig, sig)))
    noise_y = problem.diffusion(full) - sig - eps * toolkit.matvec(jac, sig)
    micro = y + h * drift_y + _noise(noise_y, dW)
    return MicroMacroState(check_finite(macro), check_finite(micro))


def step_micro_macro(problem: OscillatoryProblem, state: MicroMacroState, t_n, h, xi,
                     rule=toolkit.DEFAULT_RULE) -> MicroMacroState:
    """One Euler-Maruyama step of the macro/micro pair driven by ``sqrt(h) xi``.

    Every coefficient, including all phases ``t_n/eps``, is evaluated at the old
    state.
    """
    problem.check_state(state.macro)
    return _micro_macro_update(problem, state, t_n, h, math.sqrt(h) * np.asarray(xi), rule)


def recombine(problem: OscillatoryProblem, state: MicroMacroState, t_n,
              rule=toolkit.DEFAULT_RULE):
    """``Phi_{t_n/eps}(macro) + micro``."""
    return toolkit.phi(problem, problem.theta(t_n), state.macro, rule) + state.micro


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def _increments(grid, increments):
    inc = np.asarray(increments, dtype=float)
    if inc.shape[-1:] != (grid.step_count,) and not (grid.step_count == 0 and inc.size == 0):
        raise ValueError(
            f"need {grid.step_count} increments per path, got shape {inc.shape}")
    return inc


def integrate(problem: OscillatoryProblem, scheme: str, grid: TimeGrid, x0, increments,
              keep_path=False, rule=toolkit.DEFAULT_RULE):
    """Run ``scheme`` over ``grid`` and return the terminal state (or path).

    ``increments`` holds the Brownian increments ``dW_n`` with shape ``(N,)``
    for one path or ``(M, N)`` for a batch, in which case ``x0`` is broadcast
    to ``(M, d)``.  The micro-macro scheme is driven by the very same
    increments.  With ``keep_path`` the result has a time axis of length
    ``N + 1`` in front of the state axes.  Raises :class:`BlowUpError` with the
    failing step index.

    For ``micro-macro`` the second return value is the terminal
    :class:`MicroMacroState`; the other schemes return ``None`` there.
    """
    _check_scheme(scheme)
    inc = _increments(grid, increments)
    x = problem.check_state(x0)
    if inc.ndim == 2:
        x = np.broadcast_to(x, (inc.shape[0], problem.dimension)).copy()
    else:
        x = x.copy()
    h = grid.step
    path = [x] if keep_path else None

    state = MicroMacroState.initial(problem, x) if scheme == "micro-macro" else None
    for n in range(grid.step_count):
        t_n = grid.time(n)
        dW = inc[..., n]
        try:
            if scheme == "em":
                x = step_euler_maruyama(problem, x, t_n, h, dW)
            elif scheme == "integral":
                x = step_integral(problem, x, t_n, h, dW, rule)
            else:
                state = _micro_macro_update(problem, state, t_n, h, dW, rule)
                if keep_path:
                    x = recombine(problem, state, grid.time(n + 1), rule)
        except BlowUpError as exc:
            which = f" (path {exc.path})" if exc.path is not None else ""
            raise BlowUpError(f"{scheme} blew up at step {n}{which}",
                              step=n, path=exc.path) from None
        if keep_path:
            path.append(x)

    if scheme == "micro-macro" and not keep_path:
        x = recombine(problem, state, grid.final_time, rule)
    result = np.stack(path) if keep_path else x
    return result, state


def simulate_path(problem: OscillatoryProblem, scheme: str, grid: TimeGrid, increments, x0,
                  rule=toolkit.DEFAULT_RULE) -> np.ndarray:
    """All ``N + 1`` states of one path, including ``x0``.

    Micro-macro output is recombined at every grid node.
    """
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 1:
        raise ValueError("simulate_path takes the increments of a single path")
    path, _ = integrate(problem, scheme, grid, x0, inc, keep_path=True, rule=rule)
    return path
