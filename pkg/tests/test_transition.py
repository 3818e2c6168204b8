import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import benchmark_model
from gclab.burgers import FlowConfig
from gclab.noise import GAUSSIAN, ComponentDensity, NoiseModel
from gclab.spectral_field import SpectralField, WeightSequence
from gclab.transition import (
    ConstantFlow,
    TransitionModel,
    log_rho,
    sigma,
    sigma_gaussian_closed,
    sigma_growth_bound_probe,
)


def const_model(c, b, comp=GAUSSIAN):
    return TransitionModel(ConstantFlow(np.asarray(c, float)), NoiseModel(WeightSequence(b), comp))


def test_log_rho_unshifted(rng):
    tm = TransitionModel(FlowConfig(1.0, SpectralField.zeros(4), 20), NoiseModel(WeightSequence.power_law(4)))
    assert log_rho(tm, np.zeros(8), rng.standard_normal(8)) == 0.0


def test_log_rho_scalar_gaussian():
    tm = const_model([0.5], [1.0])
    assert log_rho(tm, np.array([7.0]), np.array([0.3])) == pytest.approx(0.025, abs=1e-15)


def test_log_rho_series_vs_closed_form(burgers_tm, rng):
    u, v = rng.standard_normal(64), rng.standard_normal(64)
    Su = burgers_tm.apply(u)
    closed = -0.5 * np.sum(Su**2 / burgers_tm.noise.b**2) + np.sum(Su * v / burgers_tm.noise.b**2)
    assert log_rho(burgers_tm, u, v, Su=Su) == pytest.approx(closed, abs=1e-10)


def test_sigma_diagonal_zero(burgers_tm, rng):
    u = rng.standard_normal(64)
    assert sigma(burgers_tm, u, u) == 0.0


@settings(max_examples=40)
@given(arrays(np.float64, 4, elements=st.floats(-3, 3)), arrays(np.float64, 4, elements=st.floats(-3, 3)))
def test_sigma_constant_map(u, v):
    c = np.array([0.4, -1.0, 0.3, 2.0])
    b = np.array([1.0, 0.5, 2.0, 1.0])
    tm = const_model(c, b)
    assert sigma(tm, u, v) == pytest.approx(float(np.sum(c * (v - u) / b**2)), abs=1e-10)


def test_sigma_antisymmetry_two_paths(burgers_tm, rng):
    u, v = rng.standard_normal((2, 10, 64))
    fwd = sigma(burgers_tm, u, v)
    bwd = sigma(burgers_tm, v, u)
    assert np.max(np.abs(fwd + bwd)) <= 1e-10


def test_sigma_is_log_rho_difference(burgers_tm, rng):
    u, v = rng.standard_normal((2, 64))
    diff = log_rho(burgers_tm, u, v) - log_rho(burgers_tm, v, u)
    assert sigma(burgers_tm, u, v) == pytest.approx(diff, abs=1e-10)


def test_sigma_closed_form_benchmark():
    tm = benchmark_model()
    rng = np.random.default_rng(2024)
    u, v = rng.standard_normal((2, 64))
    Su, Sv = tm.apply(u), tm.apply(v)
    assert sigma_gaussian_closed(tm.noise, u, v, Su, Sv) == pytest.approx(sigma(tm, u, v, Su, Sv), abs=1e-9)


def test_sigma_genexp_series(rng):
    comp = ComponentDensity("genexp", a=0.8, beta=1.5)
    tm = TransitionModel(ConstantFlow(np.array([0.3, -0.2])), NoiseModel(WeightSequence([1.0, 0.5]), comp))
    u, v = rng.standard_normal((2, 2))
    c, b = np.array([0.3, -0.2]), np.array([1.0, 0.5])
    lr = lambda a, x: np.sum(comp.logpdf((x - a) / b) - comp.logpdf(x / b))
    assert sigma(tm, u, v) == pytest.approx(lr(c, v) - lr(c, u), abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        TransitionModel(FlowConfig(1.0, SpectralField.zeros(3), 10), NoiseModel(WeightSequence.power_law(4)))


def test_growth_probe_radius_zero():
    tm = TransitionModel(FlowConfig(0.5, SpectralField.zeros(4), 20), NoiseModel(WeightSequence.power_law(4)))
    rep = sigma_growth_bound_probe(tm, 10, 0.0)
    assert rep["max_abs_sigma"] == 0.0


def test_growth_probe_finite_and_dominated():
    tm = benchmark_model(N=8, substeps=400)
    rep = sigma_growth_bound_probe(tm, 400, 30.0, rng_seed=3)
    assert rep["finite"]
    assert np.all(np.isfinite(rep["shell_max"]))
    assert np.isfinite(rep["slope"]) and np.isfinite(rep["intercept"])
    assert set(rep["window_slopes"]) == {"10-20"}


def test_growth_probe_cauchy_schwarz_envelope(rng):
    # |sigma| <= (|Su|_b^2 + |Sv|_b^2)/2 + |b^-2 Su| |v| + |b^-2 Sv| |u|
    tm = benchmark_model(N=8, substeps=400)
    u, v = 5 * rng.standard_normal((2, 50, 16))
    Su, Sv = tm.apply(u), tm.apply(v)
    ib2 = tm.noise.b**-2
    env = (0.5 * np.sum(ib2 * Su**2, 1) + 0.5 * np.sum(ib2 * Sv**2, 1)
           + np.linalg.norm(ib2 * Su, axis=1) * np.linalg.norm(v, axis=1)
           + np.linalg.norm(ib2 * Sv, axis=1) * np.linalg.norm(u, axis=1))
    assert np.all(np.abs(sigma(tm, u, v, Su, Sv)) <= env * (1 + 1e-12))


def test_aligned_sampling_finds_larger_sigma():
    tm = benchmark_model(N=8, substeps=400)
    rand = sigma_growth_bound_probe(tm, 300, 30.0, rng_seed=1, aligned=0.0)
    al = sigma_growth_bound_probe(tm, 300, 30.0, rng_seed=1, aligned=0.5)
    assert al["max_abs_sigma"] > rand["max_abs_sigma"]
