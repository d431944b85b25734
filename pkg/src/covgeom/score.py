"""Stein score fields ``s(x) = grad_x log f(x)``.

Three routes: closed form for the analytic families, the exact gradient of a
Gaussian KDE, and central finite differences of ``log f`` (used as the oracle
for the other two).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from covgeom import kernels
from covgeom.density import KDE, DensityModel, SampleMatrix, _as_batch, silverman_bandwidth
from covgeom.errors import EmptySamples, OutOfSupport, UnsupportedModel


def analytic_score(model: DensityModel, x):
    if isinstance(model, KDE):
        raise UnsupportedModel("KDE models have no closed-form score; use kde_score")
    return model.grad_log(x)


def kde_score(samples, bandwidth, x):
    """Exact gradient of the log Gaussian-KDE density at ``x``.

    Computed as the responsibility-weighted average of the kernel scores,
    ``sum_k r_k(x) (X_k - x) / h^2``, with a log-sum-exp for the weights.
    """
    values = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] == 0:
        raise EmptySamples("kde_score needs at least one sample")
    h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (values.shape[1],))
    if np.any(h <= 0):
        raise ValueError("bandwidth components must be positive")
    x, single = _as_batch(x, values.shape[1])
    _, sc = kernels.kde_logpdf_score(x, np.ascontiguousarray(values), np.ascontiguousarray(h))
    return sc[0] if single else sc


def default_fd_step(x):
    return 1e-4 * (1.0 + np.abs(x))


def fd_score(model: DensityModel, x, step=None):
    """Central difference of ``log f`` along each coordinate."""
    x, single = _as_batch(x, model.dim)
    h = default_fd_step(x) if step is None else np.broadcast_to(np.asarray(step, dtype=np.float64), x.shape)
    out = np.empty_like(x)
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = 1.0
        up = model.logpdf(x + h[:, i:i + 1] * e)
        dn = model.logpdf(x - h[:, i:i + 1] * e)
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(dn))):
            raise OutOfSupport("finite-difference stencil leaves the model's support")
        out[:, i] = (up - dn) / (2.0 * h[:, i])
    return out[0] if single else out


@dataclass(frozen=True)
class ScoreField:
    """A batch-callable vector field ``x -> grad log f(x)`` with provenance.

    ``source`` is one of ``"analytic"``, ``"kde"`` or ``"fd"``.
    """

    source: str
    dim: int
    fn: Callable

    def __call__(self, x):
        return self.fn(x)

    @classmethod
    def analytic(cls, model: DensityModel):
        if isinstance(model, KDE):
            raise UnsupportedModel("KDE models have no closed-form score; use ScoreField.kde")
        return cls("analytic", model.dim, lambda x: analytic_score(model, x))

    @classmethod
    def kde(cls, samples: SampleMatrix, bandwidth=None):
        bw = silverman_bandwidth(samples) if bandwidth is None else np.broadcast_to(
            np.asarray(bandwidth, dtype=np.float64), (samples.dim,)).copy()
        return cls("kde", samples.dim, lambda x: kde_score(samples, bw, x))

    @classmethod
    def finite_difference(cls, model: DensityModel, step=None):
        return cls("fd", model.dim, lambda x: fd_score(model, x, step))

    @property
    def tag(self):
        return self.source


def make_scores(method: str, samples: SampleMatrix = None, model: DensityModel = None, bandwidth=None):
    """Pick a score route by name, as the CLI does."""
    if method == "analytic":
        if model is None:
            raise UnsupportedModel("analytic scores need a model")
        return ScoreField.analytic(model)
    if method == "kde":
        if samples is None:
            raise EmptySamples("KDE scores need samples")
        return ScoreField.kde(samples, bandwidth)
    if method == "fd":
        return ScoreField.finite_difference(model)
    raise ValueError(f"unknown score method {method!r}")
