"""Covariate Fisher information matrix: estimation, spectrum, inversion."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from covgeom.density import (
    DensityModel,
    IntegrationSpec,
    SampleMatrix,
    expectation_rule,
    tree_sum,
    _checked,
)
from covgeom.errors import DimensionMismatch, SingularMetric
from covgeom.score import ScoreField, analytic_score

PSD_TOL = 1e-10
DEFAULT_GAP_THRESHOLD = 5.0
DEFAULT_COND_THRESHOLD = 1e10


@dataclass(frozen=True)
class CovariateFIM:
    matrix: np.ndarray
    sample_count: int = 0
    score_source: str = "unknown"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"cFIM must be square, got shape {m.shape}")
        m = 0.5 * (m + m.T)
        ev = np.linalg.eigvalsh(m)
        if ev[0] < -PSD_TOL * np.abs(ev).max():
            raise ValueError(f"cFIM is not positive semidefinite: eigenvalues {ev.tolist()}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {"n": self.n, "matrix": self.matrix.tolist(), "sample_count": self.sample_count,
                "score_source": self.score_source}


def _outer_mean(s, weights=None):
    """``sum_k w_k s_k s_k^T`` accumulated chunkwise with a fixed reduction."""
    if weights is None:
        weights = np.full(s.shape[0], 1.0 / s.shape[0])
    chunk = 8192
    parts = [(s[i:i + chunk] * weights[i:i + chunk, None]).T @ s[i:i + chunk]
             for i in range(0, s.shape[0], chunk)]
    return tree_sum(np.stack(parts), chunk=1)


def empirical_cfim(scores: ScoreField, samples: SampleMatrix, max_rows: Optional[int] = None,
                   seed: int = 0) -> CovariateFIM:
    """``(1/N) sum_k s(X_k) s(X_k)^T`` over the sample rows.

    ``max_rows`` caps the number of rows at which the score is evaluated (a
    seeded subsample); the KDE route is quadratic in N, so the CLI sets it.
    """
    if samples.dim != scores.dim:
        raise DimensionMismatch(f"scores are {scores.dim}-D but samples are {samples.dim}-D")
    x = samples.values
    if max_rows is not None and x.shape[0] > max_rows:
        idx = np.sort(np.random.default_rng(seed).choice(x.shape[0], size=max_rows, replace=False))
        x = x[idx]
    s = _checked(scores(x))
    return CovariateFIM(_outer_mean(s), sample_count=x.shape[0], score_source=scores.source)


def quadrature_cfim(model: DensityModel, spec: Optional[IntegrationSpec] = None) -> CovariateFIM:
    """Entrywise ``E_f[s_i s_j]`` with closed-form scores."""
    nodes, w = expectation_rule(model, spec)
    s = _checked(analytic_score(model, nodes))
    method = (spec or IntegrationSpec.grid()).method
    return CovariateFIM(_outer_mean(s, w), sample_count=nodes.shape[0], score_source=f"analytic/{method}")


def g_entropy(G: CovariateFIM) -> float:
    return float(np.trace(G.matrix))


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gap_index: int
    gap_ratio: float
    significant: bool
    gap_threshold: float

    @property
    def dominance_ratio(self):
        total = self.eigenvalues.sum()
        return float(self.eigenvalues[:self.gap_index].sum() / total) if total > 0 else 0.0

    def to_dict(self):
        return {"eigenvalues": self.eigenvalues.tolist(), "eigenvectors": self.eigenvectors.tolist(),
                "gap_index": self.gap_index, "gap_ratio": self.gap_ratio,
                "significant_gap": self.significant, "gap_threshold": self.gap_threshold,
                "dominance_ratio": self.dominance_ratio}


def _sorted_eigh(m):
    lam, vec = np.linalg.eigh(m)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    # fix the sign of each eigenvector so reports are reproducible
    for k in range(vec.shape[1]):
        j = np.argmax(np.abs(vec[:, k]))
        if vec[j, k] < 0:
            vec[:, k] = -vec[:, k]
    return lam, vec


def spectrum(G: CovariateFIM, gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> SpectralReport:
    """Descending eigen-decomposition plus the largest-ratio spectral gap.

    ``gap_index`` is the 1-based ``k`` maximizing ``lam_k / lam_{k+1}``
    (first maximum on ties), with the denominator floored at
    ``1e-12 * lam_1``.
    """
    lam, vec = _sorted_eigh(G.matrix)
    top = lam[0] if lam.size else 0.0
    if lam.size and lam[-1] < 0:
        if lam[-1] < -PSD_TOL * abs(top):
            raise ValueError(f"negative eigenvalue {lam[-1]} beyond tolerance; spectrum {lam.tolist()}")
        warnings.warn(f"clipping negative eigenvalues down to {lam[-1]:.3e}", RuntimeWarning, stacklevel=2)
        lam = np.clip(lam, 0.0, None)
    n = lam.size
    if n < 2 or top <= 0:
        return SpectralReport(lam, vec, 1, 1.0, False, gap_threshold)
    floor = 1e-12 * top
    ratios = lam[:-1] / np.maximum(lam[1:], floor)
    k = int(np.argmax(ratios))
    ratio = float(ratios[k])
    return SpectralReport(lam, vec, k + 1, ratio, ratio >= gap_threshold, gap_threshold)


@dataclass(frozen=True)
class Invertible:
    inverse: np.ndarray
    condition: float


@dataclass(frozen=True)
class Singular:
    null_space: np.ndarray
    condition: float


def check_invertibility(G: CovariateFIM, cond_threshold: float = DEFAULT_COND_THRESHOLD):
    """Invert through the eigen-decomposition, or return the null-space witness.

    Returns ``Invertible`` when ``lam_min / lam_max >= 1 / cond_threshold``;
    otherwise ``Singular`` whose columns ``c`` satisfy ``c @ s(X) ~ 0``.
    """
    lam, vec = _sorted_eigh(G.matrix)
    top = lam[0]
    cond = float(top / lam[-1]) if lam[-1] > 0 else np.inf
    if top > 0 and lam[-1] / top >= 1.0 / cond_threshold:
        inv = (vec / lam) @ vec.T
        return Invertible(0.5 * (inv + inv.T), cond)
    null = lam <= top / cond_threshold if top > 0 else np.ones_like(lam, dtype=bool)
    return Singular(vec[:, null], cond)


def inverse_or_raise(G: CovariateFIM, cond_threshold: float = DEFAULT_COND_THRESHOLD) -> np.ndarray:
    res = check_invertibility(G, cond_threshold)
    if isinstance(res, Singular):
        raise SingularMetric(f"cFIM is singular (condition number {res.condition:.3e})", res.null_space)
    return res.inverse


def cfim_report(G: CovariateFIM, gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> dict:
    """JSON-ready summary: matrix, spectrum, gap and G-entropy."""
    sp = spectrum(G, gap_threshold)
    return {"n": G.n, "matrix": G.matrix.tolist(), "eigenvalues": sp.eigenvalues.tolist(),
            "gap_index": sp.gap_index, "gap_ratio": sp.gap_ratio, "significant_gap": sp.significant,
            "dominance_ratio": sp.dominance_ratio, "g_entropy": g_entropy(G),
            "sample_count": G.sample_count, "score_source": G.score_source}
