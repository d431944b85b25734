import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import norm

from covgeom import kernels


def _reference(query, samples, h):
    """Direct double loop over kernels, via scipy, for small inputs."""
    z = (query[:, None, :] - samples[None, :, :]) / h
    logk = norm.logpdf(z).sum(axis=2) - np.log(h).sum()
    logpdf = logsumexp(logk, axis=1) - np.log(len(samples))
    r = np.exp(logk - logsumexp(logk, axis=1, keepdims=True))
    score = np.einsum("qk,qkj->qj", r, -(query[:, None, :] - samples[None, :, :]) / h ** 2)
    return logpdf, score


@pytest.mark.parametrize("impl", [kernels.kde_logpdf_score, kernels.py_kde_logpdf_score],
                         ids=["active", "python"])
@pytest.mark.parametrize("dim", [1, 2, 5])
def test_kernel_matches_reference(impl, dim):
    rng = np.random.default_rng(dim)
    samples = rng.standard_normal((257, dim))
    query = rng.standard_normal((33, dim)) * 2.0
    h = rng.uniform(0.2, 0.8, dim)
    lp, sc = impl(query, samples, h)
    lp_ref, sc_ref = _reference(query, samples, h)
    np.testing.assert_allclose(lp, lp_ref, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(sc, sc_ref, rtol=1e-9, atol=1e-10)


def test_backends_agree():
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((3000, 3))
    query = rng.standard_normal((400, 3))
    h = np.array([0.3, 0.4, 0.5])
    a = kernels.kde_logpdf_score(query, samples, h)
    b = kernels.py_kde_logpdf_score(query, samples, h)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-10)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-10, atol=1e-10)


def test_far_query_does_not_underflow():
    samples = np.zeros((5, 1))
    lp, sc = kernels.kde_logpdf_score(np.array([[60.0]]), samples, np.array([0.5]))
    assert np.isfinite(lp[0])
    assert sc[0, 0] == pytest.approx(-60.0 / 0.25)


def test_read_only_inputs_accepted():
    samples = np.ones((4, 2))
    samples.setflags(write=False)
    lp, _ = kernels.kde_logpdf_score(samples, samples, np.array([1.0, 1.0]))
    assert lp.shape == (4,)


def test_pure_python_switch():
    env = dict(os.environ, COVGEOM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import covgeom; print(covgeom.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
