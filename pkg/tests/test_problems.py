import math

import numpy as np
import pytest
import sympy as sp

from osc_sde.problems import (CATALOG, geometric_brownian, gbm_exact, gbm_mean, get_spec,
                              henon_heiles, logistic, pure_oscillation, pure_oscillation_exact)

th = sp.Symbol("theta", real=True)
tau = sp.Symbol("tau", real=True)
X = sp.symbols("x1:5", real=True)


def symbolic_henon_heiles():
    """Drift typed from its component formulas, then averaged and integrated symbolically."""
    x1, x2, x3, x4 = X
    f = sp.Matrix([
        2 * sp.sin(th) * (x1 * sp.cos(th) + x3 * sp.sin(th)) * x2,
        x4,
        -2 * sp.cos(th) * (x1 * sp.cos(th) + x3 * sp.sin(th)) * x2,
        -2 * (x1 * sp.cos(th) + x3 * sp.sin(th)) ** 2 + x2 ** 2 - x2,
    ])
    avg = (f.integrate((th, 0, 2 * sp.pi)) / (2 * sp.pi)).applyfunc(sp.simplify)
    F = (f.subs(th, tau) - avg).integrate((tau, 0, th)).applyfunc(sp.simplify)
    J = F.jacobian(X)
    H = [[[sp.diff(F[i], X[j], X[k]) for k in range(4)] for j in range(4)] for i in range(4)]
    args = (th,) + X
    return (sp.lambdify(args, f, "numpy"), sp.lambdify(X, avg, "numpy"),
            sp.lambdify(args, F, "numpy"), sp.lambdify(args, J, "numpy"),
            sp.lambdify(args, H, "numpy"))


@pytest.fixture(scope="module")
def oracle():
    return symbolic_henon_heiles()


def random_pairs(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-20, 20, n), rng.uniform(-2, 2, (n, 4))


def test_henon_heiles_drift_examples():
    hh = henon_heiles(0.1)
    assert np.allclose(hh.drift(0.0, np.ones(4)), [0.0, 1.0, -2.0, -2.0], atol=1e-15)
    assert np.allclose(hh.averaged_drift(np.ones(4)), [1.0, 1.0, -1.0, -2.0], atol=1e-15)
    assert np.allclose(hh.antiderivative(2 * math.pi, np.ones(4)), 0.0, atol=1e-14)
    assert hh.period == pytest.approx(2 * math.pi)


def test_henon_heiles_drift_against_independent_typing(oracle):
    f = oracle[0]
    hh = henon_heiles(0.1)
    thetas, xs = random_pairs(1000)
    for t, x in zip(thetas, xs):
        assert np.allclose(hh.drift(t, x), np.ravel(f(t, *x)), atol=1e-12)


def test_henon_heiles_closed_forms_against_symbolic(oracle):
    _, avg, F, J, H = oracle
    hh = henon_heiles(0.1)
    thetas, xs = random_pairs(100, seed=1)
    for t, x in zip(thetas, xs):
        assert np.allclose(hh.averaged_drift(x), np.ravel(avg(*x)), atol=1e-12)
        assert np.allclose(hh.antiderivative(t, x), np.ravel(F(t, *x)), atol=1e-12)
        assert np.allclose(hh.antiderivative_jacobian(t, x), np.array(J(t, *x), float),
                           atol=1e-12)
        assert np.allclose(hh.antiderivative_hessian(t, x), np.array(H(t, *x), float),
                           atol=1e-12)


def test_henon_heiles_theta_derivative():
    hh = henon_heiles(0.1)
    x = np.array([0.3, -0.8, 1.2, 0.5])
    d = 1e-6
    fd = (hh.drift(1.0 + d, x) - hh.drift(1.0 - d, x)) / (2 * d)
    assert np.allclose(hh.drift_theta_derivative(1.0, x), fd, atol=1e-8)


def test_henon_heiles_noise_kinds():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(henon_heiles(0.1, "multiplicative", 0.2).diffusion(x), [0, 0, 0.2, 0.4])
    assert np.allclose(henon_heiles(0.1, "additive", 0.2).diffusion(x), [0, 0, 0.2, 0.2])
    assert np.allclose(henon_heiles(0.1, "multiplicative", 0.5, full_state=True).diffusion(x),
                       0.5 * x)
    assert np.allclose(henon_heiles(0.1, "none").diffusion(x), 0.0)
    with pytest.raises(ValueError):
        henon_heiles(0.1, "multiplicative", 0.0)
    with pytest.raises(ValueError):
        henon_heiles(0.1, "colored")


def test_logistic_examples():
    p = logistic(0.1)
    assert p.drift(math.pi / 2, np.array([2.0]))[0] == pytest.approx(-1.0)
    assert p.averaged_drift(np.array([2.0]))[0] == pytest.approx(-2.0)
    assert p.antiderivative(math.pi, np.array([2.0]))[0] == pytest.approx(2.0)
    assert np.all(p.antiderivative_jacobian(1.0, np.array([2.0])) == 0.0)


def test_gbm_mean_and_deterministic_limit():
    assert gbm_mean(1.0, 1.0, 1.0) == pytest.approx(math.e)
    assert gbm_exact(0.7, 0.0, 2.0, 1.5, 123.0) == pytest.approx(2.0 * math.exp(0.7 * 1.5))
    p = geometric_brownian(0.7, 0.0)
    assert np.all(p.diffusion(np.array([3.0])) == 0.0)


def test_gbm_exact_sample_mean():
    rng = np.random.default_rng(5)
    w = rng.normal(0.0, 1.0, 10**6)
    m = gbm_exact(1.0, 0.5, 1.0, 1.0, w).mean()
    assert m == pytest.approx(math.e, rel=3e-3)


def test_pure_oscillation_exact_solution():
    for eps in (1.0, 0.1, 2.0**-8):
        for T in (0.3, 1.0, 2.7):
            expected = eps * (1 - math.cos(2 * math.pi * T / eps)) / (2 * math.pi)
            assert pure_oscillation_exact(eps, T) == pytest.approx(expected, abs=1e-15)
    p = pure_oscillation(0.25)
    assert p.averaged_drift(np.array([1.0]))[0] == 0.0


def test_catalog_names_and_specs():
    assert set(CATALOG) == {"henon-heiles-mult-weak", "henon-heiles-add-weak",
                            "henon-heiles-mult-strong", "henon-heiles-add-strong",
                            "logistic", "gbm", "pure-osc"}
    assert CATALOG["henon-heiles-mult-weak"].initial_state == (0.7,) * 4
    assert CATALOG["henon-heiles-mult-strong"].initial_state == (0.12,) * 4
    assert CATALOG["logistic"].initial_state == (2.0,)
    assert CATALOG["logistic"].epsilon == 0.1
    for name, spec in CATALOG.items():
        p = spec.build()
        assert p.dimension == spec.dimension == len(spec.initial_state)
        assert p.period == pytest.approx(spec.period)


def test_catalog_diffusions_at_a_state():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(get_spec("henon-heiles-add-strong").build().diffusion(x), [0, 0, .5, .5])
    assert np.allclose(get_spec("henon-heiles-mult-strong").build().diffusion(x), 0.5 * x)
    assert np.allclose(get_spec("henon-heiles-add-weak").build().diffusion(x), [0, 0, .2, .2])


def test_get_spec_overrides_epsilon():
    spec = get_spec("henon-heiles-mult-weak", 2.0**-6)
    assert spec.epsilon == 2.0**-6 and spec.build().epsilon == 2.0**-6
    with pytest.raises(ValueError):
        get_spec("henon-heiles-mult-weak", 2.0)
    with pytest.raises(KeyError):
        get_spec("fermi-pasta-ulam")
    with pytest.raises(ValueError):
        get_spec("logistic").with_initial_state([1.0, 2.0])
