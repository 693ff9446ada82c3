"""Averaging quantities of an oscillatory drift.

For a drift ``f_theta`` of period ``P`` this module builds

* the average ``<f>(x) = (1/P) int_0^P f_theta(x) dtheta``,
* the mean-free antiderivative ``F_theta(x) = int_0^theta (f_tau(x) - <f>(x)) dtau``,
* its first and second space derivatives ``F'`` and ``F''``,
* the near-identity change of variable ``Phi_theta(x) = x + eps F_theta(x)``.

Closed forms carried by the problem are used when present; otherwise the
``*_fallback`` functions compute them numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import NumericalError, OscillatoryProblem

_EPS = np.finfo(float).eps
_FD1 = _EPS ** (1.0 / 3.0)
_FD2 = _EPS ** 0.25


@dataclass(frozen=True)
class QuadratureRule:
    """Periodic trapezoid rule with ``node_count`` equispaced nodes.

    The rule averages over a full period.  Partial periods ``[0, s]`` are not
    periodic integrands, so they use Gauss-Legendre with ``partial_nodes``
    points mapped onto the subinterval.
    """

    node_count: int = 1024
    kind: str = "trapezoid-periodic"

    def __post_init__(self):
        n = self.node_count
        if int(n) != n or n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"node_count must be a power of two >= 8, got {n}")
        if self.kind != "trapezoid-periodic":
            raise ValueError(f"unsupported quadrature kind {self.kind!r}")

    @property
    def partial_nodes(self) -> int:
        return max(32, self.node_count // 8)


DEFAULT_RULE = QuadratureRule()


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite value while evaluating {what}")
    return value


def averaged_drift_fallback(problem: OscillatoryProblem, x, rule=DEFAULT_RULE):
    x = problem.check_state(x)
    n = rule.node_count
    P = problem.period
    total = np.zeros_like(x)
    for i in range(n):
        total = total + problem.drift(i * P / n, x)
    return _finite(total / n, "averaged drift")


def mean_free_integral(problem: OscillatoryProblem, s: float, x, rule=DEFAULT_RULE):
    """Gauss-Legendre value of ``int_0^s (f_tau(x) - <f>(x)) dtau``.

    No reduction modulo the period is applied, which makes this usable as a
    closure check at ``s = P``.
    """
    x = problem.check_state(x)
    avg = averaged_drift_fallback(problem, x, rule)
    if s == 0.0:
        return np.zeros_like(avg)
    nodes, weights = _legendre(rule.partial_nodes)
    half = 0.5 * s
    total = np.zeros_like(avg)
    for node, w in zip(nodes, weights):
        total = total + w * problem.drift(half * (node + 1.0), x)
    return _finite(half * total - s * avg, "antiderivative")


def antiderivative_fallback(problem: OscillatoryProblem, theta: float, x, rule=DEFAULT_RULE):
    """``F_theta(x)`` by quadrature over ``[0, theta mod P]``; whole periods add zero."""
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    return mean_free_integral(problem, float(np.mod(theta, problem.period)), x, rule)


def _shift(x, j, delta):
    xs = x.copy()
    xs[..., j] = xs[..., j] + delta
    return xs


def antiderivative_jacobian_fallback(problem: OscillatoryProblem, theta, x, rule=DEFAULT_RULE):
    """Central differences of ``F_theta`` with step ``cbrt(eps) (1 + |x_j|)``.

    Returns shape ``(..., d, d)`` with ``J[..., i, j] = dF_i / dx_j``.
    """
    x = problem.check_state(x)
    d = problem.dimension
    jac = np.zeros(x.shape[:-1] + (d, d))
    for j in range(d):
        h = _FD1 * (1.0 + np.abs(x[..., j]))
        up, down = _shift(x, j, h), _shift(x, j, -h)
        # exactly representable step
        width = up[..., j] - down[..., j]
        diff = antiderivative(problem, theta, up, rule) - antiderivative(problem, theta, down, rule)
        jac[..., :, j] = diff / width[..., None]
    return jac


def antiderivative_hessian_fallback(problem: OscillatoryProblem, theta, x, rule=DEFAULT_RULE):
    """Second central differences of ``F_theta`` with step ``eps**(1/4) (1 + |x_j|)``.

    Returns shape ``(..., d, d, d)`` with ``H[..., i, j, k] = d2F_i / dx_j dx_k``.
    """
    x = problem.check_state(x)
    d = problem.dimension
    F = lambda z: antiderivative(problem, theta, z, rule)
    steps = [_FD2 * (1.0 + np.abs(x[..., j])) for j in range(d)]
    hess = np.zeros(x.shape[:-1] + (d, d, d))
    centre = F(x)
    for j in range(d):
        hj = steps[j]
        plus, minus = _shift(x, j, hj), _shift(x, j, -hj)
        hess[..., :, j, j] = (F(plus) - 2.0 * centre + F(minus)) / (hj * hj)[..., None]
        for k in range(j + 1, d):
            hk = steps[k]
            pp = F(_shift(plus, k, hk))
            pm = F(_shift(plus, k, -hk))
            mp = F(_shift(minus, k, hk))
            mm = F(_shift(minus, k, -hk))
            value = (pp - pm - mp + mm) / (4.0 * hj * hk)[..., None]
            hess[..., :, j, k] = value
            hess[..., :, k, j] = value
    return hess


def averaged_drift(problem: OscillatoryProblem, x, rule=DEFAULT_RULE):
    if problem.averaged_drift is not None:
        return problem.averaged_drift(x)
    return averaged_drift_fallback(problem, x, rule)


def antiderivative(problem: OscillatoryProblem, theta, x, rule=DEFAULT_RULE):
    if problem.antiderivative is not None:
        return problem.antiderivative(theta, x)
    return antiderivative_fallback(problem, theta, x, rule)


def antiderivative_jacobian(problem: OscillatoryProblem, theta, x, rule=DEFAULT_RULE):
    if problem.antiderivative_jacobian is not None:
        return problem.antiderivative_jacobian(theta, x)
    return antiderivative_jacobian_fallback(problem, theta, x, rule)


def antiderivative_hessian(problem: OscillatoryProblem, theta, x, rule=DEFAULT_RULE):
    if problem.antiderivative_hessian is not None:
        return problem.antiderivative_hessian(theta, x)
    return antiderivative_hessian_fallback(problem, theta, x, rule)


def phi(problem: OscillatoryProblem, theta, x, rule=DEFAULT_RULE):
    """Change of variable ``x + eps F_theta(x)``."""
    x = problem.check_state(x)
    return x + problem.epsilon * antiderivative(problem, theta, x, rule)


def bilinear(tensor, u, v):
    """Contract ``tensor[..., i, j, k]`` with ``u[..., j]`` and ``v[..., k]``."""
    return np.einsum("...ijk,...j,...k->...i", tensor, u, v)


def matvec(matrix, v):
    return np.einsum("...ij,...j->...i", matrix, v)
