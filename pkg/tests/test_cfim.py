import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import analytic_families
from covgeom.cfim import (CovariateFIM, Invertible, Singular, cfim_report, check_invertibility,
                          empirical_cfim, g_entropy, inverse_or_raise, quadrature_cfim, spectrum)
from covgeom.density import Exponential, Gaussian, SampleMatrix, sample
from covgeom.errors import DimensionMismatch, SingularMetric
from covgeom.manifold import ManifoldSpec, generate_manifold_data
from covgeom.score import ScoreField


def test_empirical_gaussian_variance_four():
    model = Gaussian([0.0], 4.0)
    G = empirical_cfim(ScoreField.analytic(model), sample(model, 100_000, seed=0))
    assert G.matrix.shape == (1, 1)
    assert G.matrix[0, 0] == pytest.approx(0.25, rel=0.03)


def test_empirical_identity_three_dims():
    model = Gaussian([0.0, 0.0, 0.0], 1.0)
    G = empirical_cfim(ScoreField.analytic(model), sample(model, 100_000, seed=1))
    np.testing.assert_allclose(G.matrix, np.eye(3), atol=0.03)


def test_single_row_is_rank_one():
    model = Gaussian([0.0, 0.0], 1.0)
    x = SampleMatrix(np.array([[1.0, -2.0]]))
    G = empirical_cfim(ScoreField.analytic(model), x)
    np.testing.assert_allclose(G.matrix, [[1.0, -2.0], [-2.0, 4.0]])
    assert np.linalg.matrix_rank(G.matrix) == 1


def test_empirical_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        empirical_cfim(ScoreField.analytic(Gaussian([0.0], 1.0)), sample(Gaussian([0.0, 0.0], 1.0), 10, 0))


def test_quadrature_cfim_examples():
    np.testing.assert_allclose(quadrature_cfim(Gaussian([0.0, 0.0], [1.0, 4.0])).matrix,
                               np.diag([1.0, 0.25]), atol=1e-4)
    assert quadrature_cfim(Exponential([3.0])).matrix[0, 0] == pytest.approx(9.0, rel=1e-12)
    assert quadrature_cfim(Gaussian([0.0], 1.0)).matrix[0, 0] == pytest.approx(1.0, rel=1e-10)


def test_quadrature_equals_inverse_covariance():
    cov = np.array([[2.0, 0.6], [0.6, 1.0]])
    G = quadrature_cfim(Gaussian([0.5, -1.0], cov))
    np.testing.assert_allclose(G.matrix, np.linalg.inv(cov), rtol=1e-8)


def test_g_entropy_examples():
    assert g_entropy(CovariateFIM(np.eye(3))) == 3.0
    assert g_entropy(quadrature_cfim(Gaussian([0.0, 0.0], [1.0, 4.0]))) == pytest.approx(1.25, abs=1e-4)
    assert g_entropy(quadrature_cfim(Gaussian([0.0], 2.5))) == pytest.approx(0.4, rel=1e-10)


def test_spectral_consistency(family):
    _, model = family
    G = quadrature_cfim(model)
    sp = spectrum(G)
    assert sp.eigenvalues.sum() == pytest.approx(g_entropy(G), rel=1e-8)
    np.testing.assert_allclose(sp.eigenvectors.T @ sp.eigenvectors, np.eye(G.n), atol=1e-8)


def test_estimator_consistency():
    model = Gaussian([0.0, 0.0, 0.0], 1.0)
    for seed in range(5):
        err = [np.linalg.norm(empirical_cfim(ScoreField.analytic(model), sample(model, n, seed)).matrix
                              - np.eye(3)) for n in (1000, 100_000)]
        assert err[1] < err[0]


def test_spectrum_diagonal():
    sp = spectrum(CovariateFIM(np.diag([1.0, 100.0])))
    np.testing.assert_allclose(sp.eigenvalues, [100.0, 1.0])
    assert sp.gap_index == 1 and sp.significant


def test_spectrum_identity_has_no_gap():
    sp = spectrum(CovariateFIM(np.eye(4)))
    assert sp.gap_index == 1
    assert sp.gap_ratio == pytest.approx(1.0)
    assert not sp.significant
    assert not cfim_report(CovariateFIM(np.eye(4)))["significant_gap"]


def test_spectrum_floor_on_zero_eigenvalue():
    sp = spectrum(CovariateFIM(np.diag([2.0, 1.0, 0.0])))
    assert sp.gap_index == 2
    assert sp.gap_ratio == pytest.approx(1.0 / (1e-12 * 2.0))


def test_spectrum_circle_is_isotropic():
    # rotation-invariant noisy circle: the population cFIM is a multiple of I
    data = generate_manifold_data(ManifoldSpec.circle(noise_sigma=0.05), 4000, seed=0)
    sp = spectrum(empirical_cfim(ScoreField.kde(data), data))
    assert sp.gap_index == 1
    assert sp.gap_ratio < 1.2


def test_invertibility_examples():
    model = Gaussian([0.0, 0.0], 1.0)
    res = check_invertibility(empirical_cfim(ScoreField.analytic(model), sample(model, 50_000, 3)))
    assert isinstance(res, Invertible)
    np.testing.assert_allclose(res.inverse, np.eye(2), atol=0.03)
    scalar = check_invertibility(CovariateFIM([[0.25]]))
    assert isinstance(scalar, Invertible)
    np.testing.assert_allclose(scalar.inverse, [[4.0]])


def test_duplicated_coordinate_is_singular():
    x = sample(Gaussian([0.0], 1.0), 3000, seed=4).values
    dup = SampleMatrix(np.hstack([x, x]))
    res = check_invertibility(empirical_cfim(ScoreField.kde(dup), dup))
    assert isinstance(res, Singular)
    v = res.null_space[:, 0]
    assert abs(abs(v @ np.array([1.0, -1.0])) / np.sqrt(2.0) - 1.0) < 1e-6
    with pytest.raises(SingularMetric) as info:
        inverse_or_raise(CovariateFIM(np.ones((2, 2))))
    assert info.value.null_space.shape == (2, 1)


def test_non_psd_rejected():
    with pytest.raises(ValueError):
        CovariateFIM([[1.0, 0.0], [0.0, -1.0]])


def test_report_schema():
    rep = cfim_report(quadrature_cfim(Gaussian([0.0, 0.0], [1.0, 4.0])))
    for key in ("n", "matrix", "eigenvalues", "gap_index", "dominance_ratio", "g_entropy"):
        assert key in rep
    assert rep["dominance_ratio"] == pytest.approx(0.8)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-10, 10)))
def test_outer_product_average_is_psd_and_symmetric(s):
    class Fixed:
        dim = 3
        source = "fixed"

        def __call__(self, x):
            return s

    G = empirical_cfim(Fixed(), SampleMatrix(np.zeros((12, 3))))
    assert np.array_equal(G.matrix, G.matrix.T)
    lam = np.linalg.eigvalsh(G.matrix)
    assert lam[0] >= -1e-10 * max(1.0, lam[-1])
    assert g_entropy(G) == pytest.approx(float((s ** 2).sum() / 12), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(1e-3, 1e3)))
def test_gap_index_is_argmax_ratio(lam):
    sp = spectrum(CovariateFIM(np.diag(lam)))
    srt = np.sort(lam)[::-1]
    ratios = srt[:-1] / srt[1:]
    assert sp.gap_index == int(np.argmax(ratios)) + 1
    assert 0.0 <= sp.dominance_ratio <= 1.0


def test_all_families_psd():
    for model in analytic_families().values():
        assert np.linalg.eigvalsh(quadrature_cfim(model).matrix)[0] > 0
