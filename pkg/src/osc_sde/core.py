"""Core types shared by the solvers: problem description, micro-macro state,
per-path random streams and problem diagnostics.

States are plain ``numpy`` arrays.  A single state has shape ``(d,)``; a batch
of independent samples has shape ``(M, d)``.  Every user-supplied callable must
accept either and broadcast over leading axes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Drift = Callable[[float, np.ndarray], np.ndarray]
Diffusion = Callable[[np.ndarray], np.ndarray]

#: any state component with larger magnitude counts as a blow-up
BLOWUP_THRESHOLD = 1e12

_UINT64_MAX = 2**64 - 1


class Error(Exception):
    pass


class DimensionError(Error, ValueError):
    """A state or probe point does not match the problem dimension."""


class NumericalError(Error, ArithmeticError):
    """A coefficient evaluation produced a non-finite value."""


class BlowUpError(NumericalError):
    """A simulated path left the finite range.

    ``step`` is the index of the failing step and ``path`` the sample index
    inside the batch (``None`` for a single path).
    """

    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


@dataclass(frozen=True)
class OscillatoryProblem:
    """Itô SDE ``dX = f_{t/eps}(X) dt + sigma(X) dW`` with a drift that is
    ``period``-periodic in its first argument.

    The optional ``averaged_drift``, ``antiderivative``,
    ``antiderivative_jacobian`` and ``antiderivative_hessian`` are closed
    forms; when left as ``None`` the functions in :mod:`osc_sde.toolkit`
    fall back on quadrature and finite differences.
    """

    dimension: int
    epsilon: float
    drift: Drift
    diffusion: Diffusion
    period: float = 1.0
    averaged_drift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    antiderivative: Optional[Drift] = None
    antiderivative_jacobian: Optional[Drift] = None
    antiderivative_hessian: Optional[Drift] = None
    drift_theta_derivative: Optional[Drift] = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not (self.period > 0.0 and np.isfinite(self.period)):
            raise ValueError(f"period must be positive, got {self.period}")

    def check_state(self, x) -> np.ndarray:
        """Return ``x`` as a float array, rejecting a wrong trailing dimension."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dimension:
            raise DimensionError(
                f"expected state of dimension {self.dimension}, got shape {x.shape}")
        return x

    def theta(self, t: float) -> float:
        """Fast variable at time ``t``."""
        return t / self.epsilon


@dataclass(frozen=True)
class MicroMacroState:
    """Pair ``(macro, micro)`` with ``X = Phi_{t/eps}(macro) + micro``."""

    macro: np.ndarray
    micro: np.ndarray

    @classmethod
    def initial(cls, problem: OscillatoryProblem, x0) -> "MicroMacroState":
        x0 = problem.check_state(x0).copy()
        return cls(macro=x0, micro=np.zeros_like(x0))

    def __post_init__(self):
        if np.shape(self.macro) != np.shape(self.micro):
            raise DimensionError("macro and micro parts must have equal shapes")


@dataclass(frozen=True)
class RngStream:
    """Independent Gaussian stream keyed by ``(seed, path_index)``.

    Backed by the Philox counter-based generator with the two 64-bit words as
    its key, so each path's draws depend only on its own key and never on how
    many other paths were drawn before it or on which thread.
    """

    seed: int
    path_index: int = 0

    def __post_init__(self):
        for name in ("seed", "path_index"):
            v = getattr(self, name)
            if int(v) != v or not (0 <= v <= _UINT64_MAX):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.path_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def gaussian_increments(stream: RngStream, count: int) -> np.ndarray:
    """First ``count`` standard normal draws of ``stream``.

    Calling twice with the same stream returns the same numbers.
    """
    if int(count) != count or count < 1:
        raise ValueError(f"count must be a positive integer, got {count!r}")
    return stream.generator().standard_normal(int(count))


def derive_seed(master_seed: int, *indices: int) -> int:
    """Hash a master seed and a tuple of indices into a new 64-bit seed.

    The hash is BLAKE2b (8-byte digest) over the little-endian uint64 encoding
    of ``(master_seed, *indices)``.  Monte Carlo runs use
    ``RngStream(derive_seed(master, eps_index), sample_index)``.
    """
    values = (master_seed,) + tuple(indices)
    for v in values:
        if int(v) != v or not (0 <= v <= _UINT64_MAX):
            raise ValueError(f"seed components must be unsigned 64-bit integers, got {v!r}")
    payload = struct.pack(f"<{len(values)}Q", *(int(v) for v in values))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def check_finite(x: np.ndarray, step=None) -> np.ndarray:
    """Raise :class:`BlowUpError` if any sample of ``x`` is non-finite or huge."""
    bad = ~np.isfinite(x) | (np.abs(x) > BLOWUP_THRESHOLD)
    if bad.any():
        path = None
        if x.ndim > 1:
            path = int(np.argwhere(bad.reshape(x.shape[0], -1).any(axis=1))[0, 0])
        where = f" at step {step}" if step is not None else ""
        which = f" (path {path})" if path is not None else ""
        raise BlowUpError(f"numerical blow-up{where}{which}", step=step, path=path)
    return x


def validate_problem(problem: OscillatoryProblem, probe_points, rule=None,
                     theta_samples: int = 64) -> dict:
    """Measure how far ``problem`` is from satisfying its structural invariants.

    Returns a dict of maximal violations over ``probe_points``:

    ``periodicity``
        ``|f_{theta+P}(x) - f_theta(x)|`` over a grid of ``theta_samples``
        phases in one period.
    ``antiderivative_at_zero``
        ``|F_0(x)|``.
    ``antiderivative_closure``
        ``|F_P(x)|``.  For closed forms this is the closed form at ``P``;
        otherwise the quadrature integral of the mean-free drift over a full
        period (without reducing ``P`` modulo the period).
    ``averaged_drift_consistency`` / ``antiderivative_consistency``
        Distance between closed forms and the quadrature fallback (zero when
        no closed form is supplied).
    """
    from . import toolkit

    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probes.size == 0:
        raise ValueError("probe_points must be nonempty")
    probes = problem.check_state(probes)
    rule = rule or toolkit.QuadratureRule()
    P = problem.period

    thetas = np.linspace(0.0, P, theta_samples, endpoint=False)
    periodicity = 0.0
    for th in thetas:
        diff = problem.drift(th + P, probes) - problem.drift(th, probes)
        periodicity = max(periodicity, float(np.max(np.abs(diff))))

    F0 = toolkit.antiderivative(problem, 0.0, probes, rule)
    if problem.antiderivative is not None:
        FP = problem.antiderivative(P, probes)
    else:
        FP = toolkit.mean_free_integral(problem, P, probes, rule)

    avg_gap = 0.0
    if problem.averaged_drift is not None:
        avg_gap = float(np.max(np.abs(
            problem.averaged_drift(probes) - toolkit.averaged_drift_fallback(problem, probes, rule))))
    F_gap = 0.0
    if problem.antiderivative is not None:
        for th in np.linspace(0.0, P, 9):
            F_gap = max(F_gap, float(np.max(np.abs(
                problem.antiderivative(th, probes)
                - toolkit.antiderivative_fallback(problem, th, probes, rule)))))

    return {
        "periodicity": periodicity,
        "antiderivative_at_zero": float(np.max(np.abs(F0))),
        "antiderivative_closure": float(np.max(np.abs(FP))),
        "averaged_drift_consistency": avg_gap,
        "antiderivative_consistency": F_gap,
    }
