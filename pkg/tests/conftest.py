import numpy as np
import pytest

from covgeom.density import Exponential, Gaussian, GaussianMixture, ProductOfMarginals

ACCEPTANCE_LINES = []


def skew_mixture():
    return GaussianMixture([0.7, 0.3], [Gaussian([0.0], 1.0), Gaussian([2.0], 0.25)])


def analytic_families():
    """name -> model, one per closed-form family used in the suite."""
    return {
        "gaussian_1d": Gaussian([0.0], 4.0),
        "gaussian_diag": Gaussian([0.0, 0.0], [1.0, 4.0]),
        "gaussian_corr": Gaussian([0.5, -1.0], [[2.0, 0.6], [0.6, 1.0]]),
        "exponential": Exponential([1.0]),
        "mixture": skew_mixture(),
        "product": ProductOfMarginals([Gaussian([1.0], 0.5), skew_mixture()]),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(analytic_families()))
def family(request):
    return request.param, analytic_families()[request.param]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
