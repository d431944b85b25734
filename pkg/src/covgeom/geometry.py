"""Fisher-Rao inner products and the projection onto the covariate subspace.

Tangent vectors are carried in score form ``s_h = h / f``, so every metric
quantity below is an expectation of score products under the base density.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy

from covgeom.cfim import CovariateFIM, inverse_or_raise, quadrature_cfim
from covgeom.density import (
    DensityModel,
    IntegrationSpec,
    expectation_rule,
    grid_nodes,
    resolve_box,
    default_points,
    tree_sum,
    _checked,
)
from covgeom.errors import BaseMismatch, DimensionMismatch, InputError, ZeroTangent
from covgeom.score import ScoreField


@dataclass(frozen=True)
class TangentVector:
    """Tangent direction at ``base`` given by its score form ``x -> h(x)/f(x)``.

    The score form is centered on whatever integration rule evaluates it, so
    the zero-integral constraint holds exactly on that rule.
    """

    base: DensityModel
    score_form: Callable
    label: str = ""

    def values(self, nodes, weights):
        v = np.broadcast_to(_checked(self.score_form(nodes)), (nodes.shape[0],)).astype(np.float64)
        return v - tree_sum(weights * v) / tree_sum(weights)

    def __add__(self, other):
        _same_base(self.base, other)
        return TangentVector(self.base, lambda x: self.score_form(x) + other.score_form(x),
                             f"({self.label})+({other.label})")

    def __rmul__(self, c):
        return TangentVector(self.base, lambda x: c * self.score_form(x), f"{c}*({self.label})")


def _same_base(base, *tangents):
    for t in tangents:
        if t.base is not base:
            raise BaseMismatch(f"tangent {t.label!r} lives at a different base density")


def covariate_direction(base: DensityModel, i: int, scores: Optional[ScoreField] = None) -> TangentVector:
    """The tangent whose score form is the ``i``-th coordinate score ``s_i``."""
    scores = scores or ScoreField.analytic(base)
    return TangentVector(base, lambda x: scores(x)[:, i], f"s{i + 1}")


def zero_tangent(base):
    return TangentVector(base, lambda x: np.zeros(x.shape[0]), "0")


def polynomial_tangent(base: DensityModel, expression: str) -> TangentVector:
    """Tangent with score form given by a polynomial string in ``x1..xn``.

    ``^`` is accepted for powers, e.g. ``"x1^2 - 1"``.
    """
    names = [f"x{i + 1}" for i in range(base.dim)]
    syms = sympy.symbols(names)
    local = dict(zip(names, syms))
    try:
        expr = sympy.parse_expr(expression.replace("^", "**"), local_dict=local, evaluate=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise InputError(f"cannot parse tangent {expression!r}: {exc}") from exc
    extra = expr.free_symbols - set(syms)
    if extra:
        raise InputError(f"tangent {expression!r} uses unknown variables {sorted(map(str, extra))}")
    fn = sympy.lambdify(syms, expr, "numpy")

    def score_form(x):
        return np.broadcast_to(np.asarray(fn(*x.T), dtype=np.float64), (x.shape[0],))

    return TangentVector(base, score_form, expression)


def random_polynomial_tangent(base: DensityModel, rng, degree: int = 4) -> TangentVector:
    """Random polynomial of total degree <= ``degree``, coefficients in [-1, 1]."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=base.dim) if 0 < sum(e) <= degree]
    coef = rng.uniform(-1.0, 1.0, size=len(exps))
    exps_arr = np.array(exps)

    def score_form(x):
        return np.prod(x[:, None, :] ** exps_arr[None, :, :], axis=2) @ coef

    return TangentVector(base, score_form, f"poly(deg<={degree})")


def fisher_rao_inner(base: DensityModel, a: TangentVector, b: TangentVector,
                     spec: Optional[IntegrationSpec] = None) -> float:
    """``g_f(a, b) = E_f[s_a s_b]``."""
    _same_base(base, a, b)
    nodes, w = expectation_rule(base, spec)
    return float(tree_sum(w * a.values(nodes, w) * b.values(nodes, w)))


def cross_information_vector(base: DensityModel, h: TangentVector, scores: ScoreField,
                             spec: Optional[IntegrationSpec] = None) -> np.ndarray:
    """``(v_h)_j = E_f[s_h s_j]``."""
    _same_base(base, h)
    if scores.dim != base.dim:
        raise DimensionMismatch("score field and base density differ in dimension")
    nodes, w = expectation_rule(base, spec)
    sh = h.values(nodes, w)
    s = _checked(scores(nodes))
    return tree_sum((w * sh)[:, None] * s)


@dataclass(frozen=True)
class ProjectionResult:
    weights: np.ndarray
    cross_info: np.ndarray
    explained: float
    residual: float
    total: float
    capture_ratio: float

    def to_dict(self):
        return {"weights": self.weights.tolist(), "cross_info": self.cross_info.tolist(),
                "explained": self.explained, "residual": self.residual, "total": self.total,
                "capture_ratio": self.capture_ratio}


def project_tangent(h: TangentVector, G: CovariateFIM, v, spec: Optional[IntegrationSpec] = None,
                    cond_threshold: float = 1e10) -> ProjectionResult:
    """Solve ``G w = v`` and split ``g_f(h, h)`` into explained + residual.

    Raises ``SingularMetric`` when ``G`` fails the invertibility test and
    ``ZeroTangent`` when ``h`` has no mass after centering.
    """
    v = np.asarray(v, dtype=np.float64)
    nodes, wts = expectation_rule(h.base, spec)
    raw = np.broadcast_to(_checked(h.score_form(nodes)), (nodes.shape[0],))
    sh = h.values(nodes, wts)
    total = float(tree_sum(wts * sh * sh))
    scale = float(tree_sum(wts * raw * raw))
    if scale == 0.0 or total <= 1e-12 * scale:
        raise ZeroTangent(f"tangent {h.label!r} is zero after centering")
    inv = inverse_or_raise(G, cond_threshold)
    w = inv @ v
    explained = float(v @ w)
    return ProjectionResult(w, v, explained, total - explained, total, explained / total)


def decompose(base: DensityModel, h: TangentVector, spec: Optional[IntegrationSpec] = None,
              scores: Optional[ScoreField] = None) -> ProjectionResult:
    """Full Pythagorean split of ``h`` with quadrature ``G`` and ``v``."""
    scores = scores or ScoreField.analytic(base)
    G = quadrature_cfim(base, spec)
    v = cross_information_vector(base, h, scores, spec)
    return project_tangent(h, G, v, spec)


def split_tangent(h: TangentVector, result: ProjectionResult, scores: Optional[ScoreField] = None):
    """Return ``(h_S, eps)`` as tangents: ``h_S = w^T s`` and ``eps = h - h_S``."""
    scores = scores or ScoreField.analytic(h.base)
    w = np.asarray(result.weights)
    h_s = TangentVector(h.base, lambda x: scores(x) @ w, f"proj({h.label})")
    eps = TangentVector(h.base, lambda x: h.score_form(x) - scores(x) @ w, f"resid({h.label})")
    return h_s, eps


def bhattacharyya(f1: DensityModel, f2: DensityModel, spec: Optional[IntegrationSpec] = None) -> float:
    """``int sqrt(f1 f2)`` on a grid over both boxes, or by Monte Carlo under f1."""
    if f1.dim != f2.dim:
        raise DimensionMismatch("densities differ in dimension")
    spec = spec or IntegrationSpec.grid()
    if spec.method == "mc":
        nodes, w = expectation_rule(f1, spec)
        return float(tree_sum(w * _checked(np.exp(0.5 * (f2.logpdf(nodes) - f1.logpdf(nodes))))))
    nodes, vol = grid_nodes(resolve_box(spec, f1, f2), spec.points or default_points(f1.dim))
    lsum = f1.logpdf(nodes) + f2.logpdf(nodes)
    vals = np.exp(0.5 * np.where(np.isfinite(lsum), lsum, -np.inf))
    return float(tree_sum(vol * _checked(vals)))


def fisher_rao_distance(f1: DensityModel, f2: DensityModel, spec: Optional[IntegrationSpec] = None) -> float:
    """``2 arccos(BC)`` with the Bhattacharyya coefficient clamped to [0, 1]."""
    bc = min(1.0, max(0.0, bhattacharyya(f1, f2, spec)))
    return float(2.0 * np.arccos(bc))
