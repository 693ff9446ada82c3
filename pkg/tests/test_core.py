import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osc_sde.core import (BlowUpError, DimensionError, MicroMacroState, OscillatoryProblem,
                          RngStream, check_finite, derive_seed, gaussian_increments,
                          validate_problem)
from osc_sde.problems import henon_heiles, logistic


def theta_free(dimension=2):
    return OscillatoryProblem(dimension=dimension, epsilon=0.5,
                              drift=lambda th, x: -np.asarray(x, dtype=float),
                              diffusion=lambda x: np.ones(np.shape(x)))


def test_problem_rejects_bad_fields():
    f = lambda th, x: x
    with pytest.raises(ValueError):
        OscillatoryProblem(dimension=0, epsilon=0.5, drift=f, diffusion=f)
    with pytest.raises(ValueError):
        OscillatoryProblem(dimension=1, epsilon=0.0, drift=f, diffusion=f)
    with pytest.raises(ValueError):
        OscillatoryProblem(dimension=1, epsilon=1.5, drift=f, diffusion=f)
    with pytest.raises(ValueError):
        OscillatoryProblem(dimension=1, epsilon=0.5, period=-1.0, drift=f, diffusion=f)


def test_check_state_rejects_wrong_dimension():
    p = theta_free(2)
    assert p.check_state([1.0, 2.0]).shape == (2,)
    assert p.check_state(np.zeros((5, 2))).shape == (5, 2)
    with pytest.raises(DimensionError):
        p.check_state([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        p.check_state(1.0)


def test_micro_macro_initial_state():
    s = MicroMacroState.initial(henon_heiles(0.1), [0.7] * 4)
    assert np.array_equal(s.macro, [0.7] * 4)
    assert np.array_equal(s.micro, np.zeros(4))
    with pytest.raises(DimensionError):
        MicroMacroState(np.zeros(4), np.zeros(3))


def test_rng_stream_same_key_same_draws():
    a = gaussian_increments(RngStream(7, 3), 100)
    b = gaussian_increments(RngStream(7, 3), 100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, gaussian_increments(RngStream(7, 4), 100))
    assert not np.array_equal(a, gaussian_increments(RngStream(8, 3), 100))


def test_rng_stream_prefix_is_stable():
    # drawing more never changes the first draws
    long = gaussian_increments(RngStream(11, 0), 1000)
    assert np.array_equal(long[:10], gaussian_increments(RngStream(11, 0), 10))


def test_gaussian_moments_over_a_million_draws():
    z = gaussian_increments(RngStream(20261016, 0), 10**6)
    assert abs(z.mean()) < 0.01
    assert 0.99 <= z.var() <= 1.01


def test_rng_stream_validates_keys():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)
    RngStream(2**64 - 1, 2**64 - 1).generator()
    with pytest.raises(ValueError):
        gaussian_increments(RngStream(1, 0), 0)


@given(st.integers(0, 2**64 - 1), st.lists(st.integers(0, 2**32), max_size=3))
def test_derive_seed_is_deterministic_uint64(master, idx):
    s = derive_seed(master, *idx)
    assert s == derive_seed(master, *idx)
    assert 0 <= s < 2**64


def test_derive_seed_separates_indices():
    seeds = {derive_seed(1, i, j) for i in range(20) for j in range(20)}
    assert len(seeds) == 400


def test_check_finite_flags_nan_and_huge_values():
    check_finite(np.array([1.0, 2.0]))
    with pytest.raises(BlowUpError):
        check_finite(np.array([1.0, np.nan]))
    with pytest.raises(BlowUpError) as info:
        check_finite(np.array([[0.0], [2e12], [0.0]]), step=5)
    assert info.value.path == 1 and info.value.step == 5


def test_validate_henon_heiles_at_seven_tenths():
    report = validate_problem(henon_heiles(0.1), [[0.7] * 4])
    assert set(report) >= {"periodicity", "antiderivative_at_zero", "antiderivative_closure",
                           "averaged_drift_consistency", "antiderivative_consistency"}
    for value in report.values():
        assert value <= 1e-10


def test_validate_theta_free_drift_has_no_violations():
    report = validate_problem(theta_free(2), np.random.default_rng(0).normal(size=(10, 2)))
    assert report["periodicity"] == 0.0
    assert report["antiderivative_at_zero"] == 0.0
    # F vanishes up to quadrature rounding
    assert report["antiderivative_closure"] <= 1e-12


def test_validate_detects_wrong_period():
    from dataclasses import replace
    bad = replace(logistic(0.1), period=math.pi)
    assert validate_problem(bad, [[2.0]])["periodicity"] > 0.1


def test_validate_rejects_mismatched_probes():
    with pytest.raises(DimensionError):
        validate_problem(henon_heiles(0.1), [[0.7, 0.7]])
    with pytest.raises(ValueError):
        validate_problem(henon_heiles(0.1), np.zeros((0, 4)))


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_henon_heiles_drift_periodic(theta, x):
    p = henon_heiles(0.1)
    x = np.array(x)
    assert np.allclose(p.drift(theta + p.period, x), p.drift(theta, x), atol=1e-12)
