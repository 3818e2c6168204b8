import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gclab.spectral_field import (
    AliasingError,
    DimensionError,
    SpectralField,
    WeightSequence,
    analyze_grid,
    evaluate_on_grid,
    mode_indices,
    sobolev_norm,
    weighted_inner,
    weighted_norm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def fields(n=6):
    return arrays(np.float64, 2 * n, elements=finite).map(SpectralField)


def test_mode_indices():
    assert mode_indices(3).tolist() == [1, 1, 2, 2, 3, 3]


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 3.0])
def test_sobolev_zero_and_unit_cos(s):
    assert sobolev_norm(SpectralField.zeros(4), s) == 0.0
    assert sobolev_norm(SpectralField.unit_mode(4, 1, "cos"), s) == pytest.approx(1.0)


def test_sobolev_sin2_s2():
    assert sobolev_norm(SpectralField.unit_mode(3, 2, "sin"), 2) == pytest.approx(4.0)


@given(fields())
def test_parseval(u):
    assert sobolev_norm(u, 0) ** 2 == pytest.approx(float(np.sum(u.coeffs**2)), rel=1e-12, abs=1e-300)
    assert u.norm() == pytest.approx(np.linalg.norm(u.coeffs), rel=1e-12, abs=1e-300)


@settings(max_examples=50)
@given(fields(), fields(), arrays(np.float64, 12, elements=st.floats(0.01, 10)))
def test_weighted_cauchy_schwarz(u, v, b):
    w = WeightSequence(b)
    lhs = abs(weighted_inner(u, v, w, 2))
    assert lhs <= weighted_norm(u, w) * weighted_norm(v, w) * (1 + 1e-12) + 1e-300


def test_weighted_inner_examples():
    z = SpectralField.zeros(1)
    assert weighted_inner(z, z, WeightSequence([2.0, 2.0])) == 0.0
    e = SpectralField.unit_mode(1, 1, "cos")
    assert weighted_inner(e, e, WeightSequence([2.0, 2.0]), 2) == pytest.approx(0.25)
    u = SpectralField(np.array([1.0, 0, 0, 0]))
    assert weighted_inner(u, u, WeightSequence([1, 1, 0.5, 0.5]), 4) == pytest.approx(1.0)


def test_weighted_inner_dimension_mismatch():
    with pytest.raises(DimensionError):
        weighted_inner(SpectralField.zeros(1), SpectralField.zeros(2), WeightSequence([1.0, 1.0]))


@settings(max_examples=30)
@given(fields(5), st.floats(0.05, 2.0), st.floats(0.0, 1.5))
def test_norm_comparison_b2(w, c, s):
    # b_j >= c j^{-(s+1)}  implies  ||w||_{b^2} <= ||w||_{2(s+1)} / c^2
    j = mode_indices(5).astype(float)
    b = WeightSequence(c * j ** (-(s + 1)))
    assert weighted_norm(w, b, 4) <= sobolev_norm(w, 2 * (s + 1)) / c**2 * (1 + 1e-10) + 1e-300


def test_grid_examples():
    assert np.all(evaluate_on_grid(SpectralField.zeros(3), 8) == 0)
    x = 2 * np.pi * np.arange(8) / 8
    np.testing.assert_allclose(evaluate_on_grid(SpectralField.unit_mode(3, 1, "cos"), 8), np.cos(x) / np.sqrt(np.pi), atol=1e-15)


def test_grid_matches_direct_synthesis(rng):
    u = SpectralField(rng.standard_normal(10))
    M = 16
    x = 2 * np.pi * np.arange(M) / M
    j = np.arange(1, 6)
    direct = (u.cos_coeffs() @ np.cos(np.outer(j, x)) + u.sin_coeffs() @ np.sin(np.outer(j, x))) / np.sqrt(np.pi)
    np.testing.assert_allclose(evaluate_on_grid(u, M), direct, atol=1e-12)


@given(fields(7), st.integers(16, 64))
def test_round_trip(u, M):
    back = analyze_grid(evaluate_on_grid(u, M), 7)
    scale = max(1.0, np.abs(u.coeffs).max())
    assert np.max(np.abs(back - u.coeffs)) <= 1e-12 * scale


def test_aliasing_error():
    with pytest.raises(AliasingError):
        evaluate_on_grid(SpectralField.zeros(4), 9)


def test_invalid_fields():
    with pytest.raises(DimensionError):
        SpectralField(np.ones(3))
    with pytest.raises(ValueError):
        SpectralField(np.array([np.nan, 0.0]))
    with pytest.raises(ValueError):
        WeightSequence([1.0, 0.0])
    with pytest.raises(ValueError):
        WeightSequence.power_law(4, 1.0, 0.5)


def test_serialisation_round_trip(rng):
    u = SpectralField(rng.standard_normal(8))
    csv_text = u.to_csv()
    assert csv_text.splitlines()[0] == "mode_index,cos_coeff,sin_coeff"
    assert SpectralField.from_csv(csv_text) == u
    assert SpectralField.from_json(u.to_json()) == u
    assert isinstance(json.loads(u.to_json()), list)


def test_immutable(rng):
    u = SpectralField(rng.standard_normal(4))
    with pytest.raises(ValueError):
        u.coeffs[0] = 1.0
