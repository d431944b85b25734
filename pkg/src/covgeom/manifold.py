"""Manifold-hypothesis test from the cFIM spectrum, plus synthetic manifolds.

For data concentrated within ``eps`` of a d-dimensional set, the score is
stiff (variance ~ 1/eps^2) in the normal directions, so the eigenvalues
above the spectral gap count normal directions. Reports carry both readings:
``estimated_dim`` is the gap index itself, ``intrinsic_dim`` is
``n - stiff_dims``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from covgeom.cfim import (
    DEFAULT_GAP_THRESHOLD,
    CovariateFIM,
    SpectralReport,
    empirical_cfim,
    spectrum,
)
from covgeom.density import SampleMatrix
from covgeom.errors import DimensionMismatch, ShapeMismatch
from covgeom.score import ScoreField

SUPPORT = "SupportMH"
REJECT = "RejectMH"


@dataclass(frozen=True)
class ManifoldSpec:
    """Synthetic d-manifold in R^n with isotropic ambient noise.

    ``kind`` is ``"linear"`` (``x = A y + b``, ``y ~ N(0, I_d)``), ``"circle"``
    (radius ``radius`` in the first two coordinates) or ``"helix"``
    (``(r cos u, r sin u, pitch u)``, ``u`` uniform on ``[0, 4 pi)``).
    """

    kind: str
    ambient_dim: int
    intrinsic_dim: int
    noise_sigma: float = 0.0
    A: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    radius: float = 1.0
    pitch: float = 0.5

    def __post_init__(self):
        if self.kind not in ("linear", "circle", "helix"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 1 <= self.intrinsic_dim < self.ambient_dim:
            raise ValueError("need 1 <= intrinsic_dim < ambient_dim")
        if self.kind == "linear":
            A = np.asarray(self.A, dtype=np.float64)
            if A.shape != (self.ambient_dim, self.intrinsic_dim):
                raise ShapeMismatch(f"A must be {self.ambient_dim}x{self.intrinsic_dim}, got {A.shape}")
            if np.linalg.matrix_rank(A) < self.intrinsic_dim:
                raise ValueError("A must have full column rank")
            object.__setattr__(self, "A", A)
        off = np.zeros(self.ambient_dim) if self.offset is None else np.asarray(self.offset, dtype=np.float64)
        object.__setattr__(self, "offset", off)

    @classmethod
    def linear(cls, A, offset=None, noise_sigma=0.0):
        A = np.asarray(A, dtype=np.float64)
        return cls("linear", A.shape[0], A.shape[1], noise_sigma, A=A, offset=offset)

    @classmethod
    def circle(cls, radius=1.0, ambient_dim=2, noise_sigma=0.0):
        return cls("circle", ambient_dim, 1, noise_sigma, radius=radius)

    @classmethod
    def helix(cls, radius=1.0, pitch=0.5, noise_sigma=0.0):
        return cls("helix", 3, 1, noise_sigma, radius=radius, pitch=pitch)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        noise = float(d.get("noise", d.get("noise_sigma", 0.0)))
        if kind == "linear":
            return cls.linear(d["A"], d.get("offset"), noise)
        if kind == "circle":
            return cls.circle(float(d.get("radius", 1.0)), int(d.get("ambient", 2)), noise)
        if kind == "helix":
            return cls.helix(float(d.get("radius", 1.0)), float(d.get("pitch", 0.5)), noise)
        raise ValueError(f"unknown manifold kind {kind!r}")

    def to_dict(self):
        out = {"kind": self.kind, "ambient": self.ambient_dim, "intrinsic_dim": self.intrinsic_dim,
               "noise": self.noise_sigma}
        if self.kind == "linear":
            out["A"] = self.A.tolist()
            out["offset"] = self.offset.tolist()
        else:
            out["radius"] = self.radius
        if self.kind == "helix":
            out["pitch"] = self.pitch
        return out

    def embed(self, y):
        """Map intrinsic coordinates ``(N, d)`` onto the noiseless manifold."""
        y = np.asarray(y, dtype=np.float64).reshape(-1, self.intrinsic_dim)
        if self.kind == "linear":
            return y @ self.A.T + self.offset
        u = y[:, 0]
        x = np.zeros((y.shape[0], self.ambient_dim))
        x[:, 0] = self.radius * np.cos(u)
        x[:, 1] = self.radius * np.sin(u)
        if self.kind == "helix":
            x[:, 2] = self.pitch * u
        return x + self.offset

    def jacobian(self, y=None):
        """``dx/dy``; constant for linear embeddings."""
        if self.kind == "linear":
            return self.A
        u = float(np.asarray(y).ravel()[0])
        J = np.zeros((self.ambient_dim, 1))
        J[0, 0] = -self.radius * np.sin(u)
        J[1, 0] = self.radius * np.cos(u)
        if self.kind == "helix":
            J[2, 0] = self.pitch
        return J


def generate_manifold_data(spec: ManifoldSpec, count: int, seed: int) -> SampleMatrix:
    if count < 10 * spec.ambient_dim:
        raise ValueError(f"need at least {10 * spec.ambient_dim} points for a {spec.ambient_dim}-D ambient space")
    rng = np.random.default_rng(seed)
    if spec.kind == "linear":
        y = rng.standard_normal((count, spec.intrinsic_dim))
    elif spec.kind == "circle":
        y = rng.uniform(0.0, 2.0 * np.pi, size=(count, 1))
    else:
        y = rng.uniform(0.0, 4.0 * np.pi, size=(count, 1))
    x = spec.embed(y)
    if spec.noise_sigma > 0:
        x = x + spec.noise_sigma * rng.standard_normal(x.shape)
    return SampleMatrix(x, seed=seed)


def dominance_ratio(spec: SpectralReport, d: int) -> float:
    """Share of the eigenvalue mass in the top ``d`` eigenvalues."""
    lam = spec.eigenvalues
    if not 1 <= d <= lam.size:
        raise ValueError(f"d must lie in [1, {lam.size}]")
    total = lam.sum()
    return float(lam[:d].sum() / total) if total > 0 else 0.0


@dataclass(frozen=True)
class MHReport:
    spectrum: SpectralReport
    estimated_dim: int
    stiff_dims: int
    intrinsic_dim: int
    dominance_ratio: float
    gap_ratio: float
    decision: str
    threshold: float
    score_source: str

    def to_dict(self):
        return {"eigenvalues": self.spectrum.eigenvalues.tolist(), "gap_ratio": self.gap_ratio,
                "estimated_dim": self.estimated_dim, "stiff_dims": self.stiff_dims,
                "intrinsic_dim": self.intrinsic_dim, "dominance_ratio": self.dominance_ratio,
                "decision": self.decision, "gap_threshold": self.threshold,
                "score_source": self.score_source, "rule": "heuristic threshold on max eigenvalue ratio"}


def mh_test(samples: SampleMatrix, scores: Optional[ScoreField] = None,
            gap_threshold: float = DEFAULT_GAP_THRESHOLD, max_rows: Optional[int] = 20_000,
            seed: int = 0) -> MHReport:
    """Spectral-gap test on ``G_hat`` (KDE scores unless ``scores`` is given).

    The decision is ``SupportMH`` iff the largest eigenvalue ratio reaches
    ``gap_threshold`` and the gap index is below ``n / 2``.
    """
    n = samples.dim
    if n < 2:
        raise DimensionMismatch("the manifold test needs at least 2 coordinates")
    if samples.count < 10 * n:
        raise ValueError(f"need at least {10 * n} samples")
    scores = scores or ScoreField.kde(samples)
    G = empirical_cfim(scores, samples, max_rows=max_rows, seed=seed)
    sp = spectrum(G, gap_threshold)
    d_hat = sp.gap_index
    support = sp.gap_ratio >= gap_threshold and d_hat < n / 2.0
    return MHReport(sp, d_hat, d_hat, n - d_hat, dominance_ratio(sp, d_hat), sp.gap_ratio,
                    SUPPORT if support else REJECT, gap_threshold, scores.source)


def jacobian_congruence_check(G_ambient: CovariateFIM, J, G_intrinsic: CovariateFIM) -> float:
    """Relative Frobenius residual ``||G_int - J^T G_amb J|| / ||G_int||``."""
    J = np.asarray(J, dtype=np.float64)
    n, d = G_ambient.n, G_intrinsic.n
    if J.shape != (n, d):
        raise ShapeMismatch(f"J must be {n}x{d}, got {J.shape}")
    pulled = J.T @ G_ambient.matrix @ J
    return float(np.linalg.norm(G_intrinsic.matrix - pulled) / np.linalg.norm(G_intrinsic.matrix))
