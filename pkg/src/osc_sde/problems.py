"""Catalog of concrete problems.

Hénon-Heiles (filtered variables, period ``2 pi``) writes with
``u = X1 cos(theta) + X3 sin(theta)``::

    f1 =  2 sin(theta) u X2
    f2 =  X4
    f3 = -2 cos(theta) u X2
    f4 = -2 u**2 + X2**2 - X2

Expanding with double angles gives the mean-free parts and, with
``a = (1 - cos 2theta)/2`` and ``b = sin(2theta)/2``, the antiderivative::

    F1 =  X2 (a X1 - b X3)
    F2 =  0
    F3 = -X2 (b X1 + a X3)
    F4 = -b (X1**2 - X3**2) - 2 a X1 X3
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import OscillatoryProblem

TWO_PI = 2.0 * math.pi
NOISE_KINDS = ("multiplicative", "additive", "none")


# -- Hénon-Heiles ------------------------------------------------------------

def _hh_drift(theta, x):
    x1, x2, x3, x4 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    c, s = math.cos(theta), math.sin(theta)
    u = x1 * c + x3 * s
    return np.stack([2.0 * s * u * x2,
                     x4,
                     -2.0 * c * u * x2,
                     -2.0 * u * u + x2 * x2 - x2], axis=-1)


def _hh_drift_dtheta(theta, x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    c, s = math.cos(theta), math.sin(theta)
    u = x1 * c + x3 * s
    du = -x1 * s + x3 * c
    return np.stack([2.0 * x2 * (c * u + s * du),
                     np.zeros_like(x1),
                     2.0 * x2 * (s * u - c * du),
                     -4.0 * u * du], axis=-1)


def _hh_average(x):
    x1, x2, x3, x4 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return np.stack([x2 * x3, x4, -x1 * x2, -(x1 * x1 + x3 * x3) + x2 * x2 - x2], axis=-1)


def _ab(theta):
    return 0.5 * (1.0 - math.cos(2.0 * theta)), 0.5 * math.sin(2.0 * theta)


def _hh_F(theta, x):
    a, b = _ab(theta)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([x2 * (a * x1 - b * x3),
                     np.zeros_like(x1),
                     -x2 * (b * x1 + a * x3),
                     -b * (x1 * x1 - x3 * x3) - 2.0 * a * x1 * x3], axis=-1)


def _hh_F_jacobian(theta, x):
    a, b = _ab(theta)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    J = np.zeros(x.shape + (4,))
    J[..., 0, 0] = a * x2
    J[..., 0, 1] = a * x1 - b * x3
    J[..., 0, 2] = -b * x2
    J[..., 2, 0] = -b * x2
    J[..., 2, 1] = -(b * x1 + a * x3)
    J[..., 2, 2] = -a * x2
    J[..., 3, 0] = -2.0 * (b * x1 + a * x3)
    J[..., 3, 2] = 2.0 * (b * x3 - a * x1)
    return J


def _hh_F_hessian(theta, x):
    a, b = _ab(theta)
    H = np.zeros(x.shape + (4, 4))
    for i, j, k, v in ((0, 0, 1, a), (0, 1, 2, -b),
                       (2, 0, 1, -b), (2, 1, 2, -a),
                       (3, 0, 2, -2.0 * a)):
        H[..., i, j, k] = v
        H[..., i, k, j] = v
    H[..., 3, 0, 0] = -2.0 * b
    H[..., 3, 2, 2] = 2.0 * b
    return H


def henon_heiles(epsilon, noise_kind="multiplicative", noise_scale=0.2, full_state=False):
    """Stochastic Hénon-Heiles problem in filtered variables (``d = 4``).

    ``noise_kind="multiplicative"`` gives ``sigma(X) = s (0, 0, X1, X2)``, or
    ``sigma(X) = s X`` with ``full_state=True``.  ``"additive"`` gives
    ``sigma = (0, 0, s, s)``; ``"none"`` switches the noise off.
    """
    if noise_kind not in NOISE_KINDS:
        raise ValueError(f"noise_kind must be one of {NOISE_KINDS}, got {noise_kind!r}")
    if noise_kind != "none" and not noise_scale > 0:
        raise ValueError("noise_scale must be positive")
    s = float(noise_scale)
    if noise_kind == "multiplicative" and full_state:
        def sigma(x):
            return s * np.asarray(x, dtype=float)
    elif noise_kind == "multiplicative":
        def sigma(x):
            z = np.zeros_like(x[..., 0])
            return s * np.stack([z, z, x[..., 0], x[..., 1]], axis=-1)
    elif noise_kind == "additive":
        def sigma(x):
            out = np.zeros(np.shape(x))
            out[..., 2:] = s
            return out
    else:
        def sigma(x):
            return np.zeros(np.shape(x))
    return OscillatoryProblem(
        dimension=4, epsilon=epsilon, period=TWO_PI,
        drift=_hh_drift, diffusion=sigma,
        averaged_drift=_hh_average, antiderivative=_hh_F,
        antiderivative_jacobian=_hh_F_jacobian, antiderivative_hessian=_hh_F_hessian,
        drift_theta_derivative=_hh_drift_dtheta, name="henon-heiles")


# -- logistic ----------------------------------------------------------------

def logistic(epsilon, noise_scale=0.2):
    """``dX = (X(1 - X) + sin(t/eps)) dt + s X dW``."""
    s = float(noise_scale)

    def drift(theta, x):
        return x * (1.0 - x) + math.sin(theta)

    def F(theta, x):
        return np.full(np.shape(x), 1.0 - math.cos(theta))

    return OscillatoryProblem(
        dimension=1, epsilon=epsilon, period=TWO_PI,
        drift=drift, diffusion=lambda x: s * np.asarray(x, dtype=float),
        averaged_drift=lambda x: x * (1.0 - x),
        antiderivative=F,
        antiderivative_jacobian=lambda theta, x: np.zeros(np.shape(x) + (1,)),
        antiderivative_hessian=lambda theta, x: np.zeros(np.shape(x) + (1, 1)),
        drift_theta_derivative=lambda theta, x: np.full(np.shape(x), math.cos(theta)),
        name="logistic")


# -- geometric Brownian motion ------------------------------------------------

def geometric_brownian(lam=1.0, mu=0.5, x0=1.0, epsilon=1.0):
    """``dX = lam X dt + mu X dW``; no oscillation, so ``F`` vanishes."""
    lam, mu = float(lam), float(mu)

    def zero(theta, x):
        return np.zeros(np.shape(x))

    return OscillatoryProblem(
        dimension=1, epsilon=epsilon, period=1.0,
        drift=lambda theta, x: lam * np.asarray(x, dtype=float),
        diffusion=lambda x: mu * np.asarray(x, dtype=float),
        averaged_drift=lambda x: lam * np.asarray(x, dtype=float),
        antiderivative=zero,
        antiderivative_jacobian=lambda theta, x: np.zeros(np.shape(x) + (1,)),
        antiderivative_hessian=lambda theta, x: np.zeros(np.shape(x) + (1, 1)),
        drift_theta_derivative=zero, name="gbm")


def gbm_exact(lam, mu, x0, t, w_t):
    """Pathwise solution ``x0 exp((lam - mu**2/2) t + mu W(t))``."""
    return x0 * np.exp((lam - 0.5 * mu * mu) * t + mu * np.asarray(w_t, dtype=float))


def gbm_mean(lam, x0, t):
    return x0 * math.exp(lam * t)


# -- pure oscillation ----------------------------------------------------------

def pure_oscillation(epsilon):
    """Scalar ``f_theta(x) = sin(2 pi theta)`` with period 1 and no noise."""
    w = TWO_PI

    def drift(theta, x):
        return np.full(np.shape(x), math.sin(w * theta))

    def F(theta, x):
        return np.full(np.shape(x), (1.0 - math.cos(w * theta)) / w)

    return OscillatoryProblem(
        dimension=1, epsilon=epsilon, period=1.0,
        drift=drift, diffusion=lambda x: np.zeros(np.shape(x)),
        averaged_drift=lambda x: np.zeros(np.shape(x)),
        antiderivative=F,
        antiderivative_jacobian=lambda theta, x: np.zeros(np.shape(x) + (1,)),
        antiderivative_hessian=lambda theta, x: np.zeros(np.shape(x) + (1, 1)),
        drift_theta_derivative=lambda theta, x: np.full(np.shape(x), w * math.cos(w * theta)),
        name="pure-osc")


def pure_oscillation_exact(epsilon, t, x0=0.0):
    """``x0 + int_0^t sin(2 pi s / eps) ds``."""
    return x0 + epsilon * (1.0 - math.cos(TWO_PI * t / epsilon)) / TWO_PI


# -- named catalog -------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """A named catalog entry: problem parameters plus initial state."""

    name: str
    dimension: int
    epsilon: float
    period: float
    initial_state: tuple
    noise_kind: str
    parameters: dict = field(default_factory=dict)
    factory: Callable[..., OscillatoryProblem] = field(default=None, repr=False, compare=False)

    def build(self) -> OscillatoryProblem:
        return self.factory(self.epsilon, **self.parameters)

    def with_epsilon(self, epsilon) -> "ProblemSpec":
        if not (0.0 < epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
        return ProblemSpec(self.name, self.dimension, epsilon, self.period, self.initial_state,
                           self.noise_kind, dict(self.parameters), self.factory)

    def with_initial_state(self, x0) -> "ProblemSpec":
        x0 = tuple(float(v) for v in np.atleast_1d(x0))
        if len(x0) != self.dimension:
            raise ValueError(f"{self.name} needs an initial state of dimension {self.dimension}")
        return ProblemSpec(self.name, self.dimension, self.epsilon, self.period, x0,
                           self.noise_kind, dict(self.parameters), self.factory)


def _hh(eps, noise_kind, noise_scale, full_state=False):
    return henon_heiles(eps, noise_kind, noise_scale, full_state)


def _gbm(eps, lam, mu, x0):
    return geometric_brownian(lam, mu, x0, epsilon=eps)


def _entries():
    weak_x0 = (0.7,) * 4
    strong_x0 = (0.12,) * 4
    return {
        "henon-heiles-mult-weak": ProblemSpec(
            "henon-heiles-mult-weak", 4, 2.0**-4, TWO_PI, weak_x0, "multiplicative",
            {"noise_kind": "multiplicative", "noise_scale": 0.2}, _hh),
        "henon-heiles-add-weak": ProblemSpec(
            "henon-heiles-add-weak", 4, 2.0**-4, TWO_PI, weak_x0, "additive",
            {"noise_kind": "additive", "noise_scale": 0.2}, _hh),
        "henon-heiles-mult-strong": ProblemSpec(
            "henon-heiles-mult-strong", 4, 2.0**-4, TWO_PI, strong_x0, "multiplicative",
            {"noise_kind": "multiplicative", "noise_scale": 0.5, "full_state": True}, _hh),
        "henon-heiles-add-strong": ProblemSpec(
            "henon-heiles-add-strong", 4, 2.0**-4, TWO_PI, strong_x0, "additive",
            {"noise_kind": "additive", "noise_scale": 0.5}, _hh),
        "logistic": ProblemSpec(
            "logistic", 1, 0.1, TWO_PI, (2.0,), "multiplicative",
            {"noise_scale": 0.2}, logistic),
        "gbm": ProblemSpec(
            "gbm", 1, 1.0, 1.0, (1.0,), "multiplicative",
            {"lam": 1.0, "mu": 0.5, "x0": 1.0}, _gbm),
        "pure-osc": ProblemSpec(
            "pure-osc", 1, 2.0**-4, 1.0, (0.0,), "none", {}, pure_oscillation),
    }


CATALOG = _entries()


def get_spec(name: str, epsilon=None) -> ProblemSpec:
    try:
        spec = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(CATALOG)}") from None
    return spec if epsilon is None else spec.with_epsilon(epsilon)
