import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bedflux.errors import AllExcluded, DegenerateSamples, ShapeMismatch, ZeroVariance
from bedflux.metrics import freedman_diaconis_bins, mape, pdf_estimate, pearson


def test_mape_identical():
    a = np.array([0.1, -0.2, 0.3])
    assert mape(a, a) == (0.0, 0)


def test_mape_worked_example():
    res = mape([1.0, 2.0], [1.1, 1.8])
    assert res.percent == pytest.approx(10.0, rel=1e-12)
    assert res.excluded == 0


def test_mape_excludes_small_truth():
    res = mape([0.0, 1.0], [5.0, 1.0], epsilon=1e-9)
    assert res == (0.0, 1)


def test_mape_all_excluded():
    with pytest.raises(AllExcluded):
        mape([0.0, 1e-8], [1.0, 1.0])


def test_mape_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        mape([1.0, 2.0], [1.0])


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, 8, elements=st.floats(0.5, 10.0)),
    arrays(np.float64, 8, elements=st.floats(-1.0, 1.0)),
    st.floats(0.25, 4.0),
)
def test_mape_scale_invariant(truth, noise, c):
    pred = truth + noise
    assert mape(c * truth, c * pred).percent == pytest.approx(mape(truth, pred).percent, rel=1e-9, abs=1e-12)


def test_pearson_basic():
    a = np.array([1.0, 2.0, 4.0, 7.0])
    assert pearson(a, a) == 1.0
    assert pearson(a, -a) == -1.0
    assert pearson([1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0]) == pytest.approx(0.0, abs=1e-15)


def test_pearson_errors():
    with pytest.raises(ZeroVariance):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ShapeMismatch):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, 12, elements=st.floats(-10.0, 10.0)),
    arrays(np.float64, 12, elements=st.floats(-10.0, 10.0)),
    st.floats(0.1, 10.0),
    st.floats(-5.0, 5.0),
)
def test_pearson_affine_invariant(a, b, scale, shift):
    if np.ptp(a) < 1e-3 or np.ptp(b) < 1e-3:
        return
    r = pearson(a, b)
    assert -1.0 <= r <= 1.0
    assert pearson(scale * a + shift, b) == pytest.approx(r, abs=1e-9)


def test_pdf_two_points():
    pdf = pdf_estimate([0.0, 1.0], bins=2)
    np.testing.assert_array_equal(pdf.densities, [1.0, 1.0])
    np.testing.assert_array_equal(pdf.bin_edges, [0.0, 0.5, 1.0])


def test_pdf_uniform_samples(rng):
    pdf = pdf_estimate(rng.uniform(0.0, 1.0, 200_000))
    assert pdf.densities.size >= 16
    np.testing.assert_allclose(pdf.densities, 1.0, atol=0.1)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(-100.0, 100.0)))
def test_pdf_integrates_to_one(samples):
    if samples.min() == samples.max():
        with pytest.raises(DegenerateSamples):
            pdf_estimate(samples)
        return
    pdf = pdf_estimate(samples)
    assert pdf.integral() == pytest.approx(1.0, abs=1e-9)
    assert np.all(pdf.densities >= 0)


def test_pdf_degenerate():
    with pytest.raises(DegenerateSamples):
        pdf_estimate([0.3, 0.3, 0.3])


def test_fd_bins_floor(rng):
    assert freedman_diaconis_bins(rng.normal(size=10)) == 16
    assert freedman_diaconis_bins(rng.normal(size=100_000)) > 16


def test_fd_bins_capped_for_heavy_tails():
    samples = np.array([0.0, 0.0, 1.0, 1e-9, 1e-9])
    assert freedman_diaconis_bins(samples) == 16
    assert pdf_estimate(samples).integral() == pytest.approx(1.0, abs=1e-9)
