"""KL divergence by quadrature and finite-difference checks of its derivatives.

Perturbation curves are coordinate translations ``f_t(x) = f(x - t e_i)``.
They keep ``f_t`` exactly normalized; their tangent is ``h = -f s_i``, so
odd-order quantities carry the opposite sign to the ``h = f s_i`` curve
while every quadratic quantity is unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from covgeom.cfim import g_entropy, quadrature_cfim
from covgeom.density import (
    DensityModel,
    IntegrationSpec,
    _as_batch,
    default_points,
    expectation_rule,
    grid_nodes,
    resolve_box,
    tree_sum,
)
from covgeom.errors import SupportMismatch
from covgeom.score import analytic_score

FORWARD = "forward"
REVERSE = "reverse"
DT_RANGE = (1e-3, 1e-1)


class Translated(DensityModel):
    """``x -> f(x - shift)``."""

    kind = "translated"

    def __init__(self, base: DensityModel, shift):
        self.base = base
        self.shift = np.asarray(shift, dtype=np.float64)
        self.dim = base.dim

    def logpdf(self, x):
        x, single = _as_batch(x, self.dim)
        out = self.base.logpdf(x - self.shift)
        return out[0] if single else out

    def grad_log(self, x):
        x, single = _as_batch(x, self.dim)
        out = self.base.grad_log(x - self.shift)
        return out[0] if single else out

    def _draw(self, count, rng):
        return self.base._draw(count, rng) + self.shift

    def box(self):
        return self.base.box() + self.shift[:, None]

    def marginal_std(self):
        return self.base.marginal_std()

    def mode_logpdf(self):
        return self.base.mode_logpdf()

    def to_dict(self):
        return {"translated": {"base": self.base.to_dict(), "shift": self.shift.tolist()}}


@dataclass(frozen=True)
class PerturbationCurve:
    """Translation of ``base`` along coordinate ``axis`` (0-based)."""

    base: DensityModel
    axis: int = 0

    def __post_init__(self):
        if not 0 <= self.axis < self.base.dim:
            raise ValueError(f"axis {self.axis} out of range for a {self.base.dim}-D base")

    def at(self, t: float) -> DensityModel:
        if t == 0.0:
            return self.base
        shift = np.zeros(self.base.dim)
        shift[self.axis] = t
        return Translated(self.base, shift)

    def default_dt(self) -> float:
        dt = 0.02 * float(self.base.marginal_std()[self.axis])
        return float(np.clip(dt, *DT_RANGE))

    def stencil_box(self, dt: float):
        box = self.base.box().astype(np.float64).copy()
        box[self.axis, 0] -= 2.0 * dt
        box[self.axis, 1] += 2.0 * dt
        return box


def kl_divergence(p: DensityModel, q: DensityModel, spec: Optional[IntegrationSpec] = None) -> float:
    """``int p log(p / q)``; raises ``SupportMismatch`` where q vanishes under p."""
    spec = spec or IntegrationSpec.grid()
    if spec.method == "mc":
        nodes, w = expectation_rule(p, spec)
        lp, lq = p.logpdf(nodes), q.logpdf(nodes)
        if not np.all(np.isfinite(lq)):
            raise SupportMismatch("q has zero density at points drawn from p")
        val = float(tree_sum(w * (lp - lq)))
    else:
        nodes, vol = grid_nodes(resolve_box(spec, p, q), spec.points or default_points(p.dim))
        lp, lq = p.logpdf(nodes), q.logpdf(nodes)
        mass = vol * np.exp(lp)
        live = mass > 0
        bad = live & ~np.isfinite(lq)
        if np.any(mass[bad] > 1e-12):
            raise SupportMismatch("q vanishes where p has non-negligible mass; KL is infinite")
        live &= ~bad
        with np.errstate(invalid="ignore"):
            val = float(tree_sum(np.where(live, mass * (lp - np.where(live, lq, 0.0)), 0.0)))
    if val < 0:
        if val < -1e-8:
            raise ArithmeticError(f"KL divergence came out negative ({val:.3e}); quadrature too coarse")
        warnings.warn(f"clamping KL {val:.3e} to 0", RuntimeWarning, stacklevel=2)
        val = 0.0
    return val


def _kl_along(curve, direction, t, spec):
    ft = curve.at(t)
    if direction == FORWARD:
        return kl_divergence(curve.base, ft, spec)
    if direction == REVERSE:
        return kl_divergence(ft, curve.base, spec)
    raise ValueError(f"direction must be {FORWARD!r} or {REVERSE!r}")


def _stencils(d, dt):
    dm2, dm1, d0, d1, d2 = d
    first = (dm2 - 8.0 * dm1 + 8.0 * d1 - d2) / (12.0 * dt)
    second = (-dm2 + 16.0 * dm1 - 30.0 * d0 + 16.0 * d1 - d2) / (12.0 * dt ** 2)
    third = (-dm2 + 2.0 * dm1 - 2.0 * d1 + d2) / (2.0 * dt ** 3)
    return {"first": first, "second": second, "third": third}


@dataclass(frozen=True)
class DerivativeReport:
    """Richardson-extrapolated t-derivatives of ``D(t)`` at ``t = 0``."""

    first: float
    second: float
    third: float
    step: float
    direction: str
    axis: int
    raw: dict = field(default_factory=dict)
    richardson: dict = field(default_factory=dict)

    def to_dict(self):
        return {"first": self.first, "second": self.second, "third": self.third, "step": self.step,
                "direction": self.direction, "axis": self.axis,
                "dt_sweep": [self.step, self.step / 2.0], "raw": self.raw, "richardson": self.richardson}


def kl_derivatives(base: DensityModel, curve: PerturbationCurve, direction: str = FORWARD,
                   dt: Optional[float] = None, spec: Optional[IntegrationSpec] = None) -> DerivativeReport:
    """5-point stencils on ``D(t)`` at steps ``dt`` and ``dt/2``, then one Richardson step.

    ``D(t)`` is ``KL(f || f_t)`` for ``direction="forward"`` and
    ``KL(f_t || f)`` for ``"reverse"``. All stencil points share one
    quadrature box so the grid error is common to every ``D`` value.
    """
    if curve.base is not base:
        raise ValueError("curve is not anchored at the given base density")
    dt = curve.default_dt() if dt is None else float(dt)
    if not DT_RANGE[0] <= dt <= DT_RANGE[1]:
        raise ValueError(f"dt must lie in {DT_RANGE}, got {dt}")
    spec = (spec or IntegrationSpec.grid())
    if spec.method == "grid" and spec.box is None:
        spec = spec.with_box(curve.stencil_box(dt))
    raw = {}
    for h in (dt, dt / 2.0):
        d = [_kl_along(curve, direction, k * h, spec) for k in (-2, -1, 0, 1, 2)]
        raw[repr(h)] = dict(_stencils(d, h), values=d)
    coarse, fine = raw[repr(dt)], raw[repr(dt / 2.0)]
    rich = {
        "first": (16.0 * fine["first"] - coarse["first"]) / 15.0,
        "second": (16.0 * fine["second"] - coarse["second"]) / 15.0,
        "third": (4.0 * fine["third"] - coarse["third"]) / 3.0,
    }
    return DerivativeReport(rich["first"], rich["second"], rich["third"], dt, direction, curve.axis,
                            raw, rich)


def cubic_tensor(base: DensityModel, curve: PerturbationCurve, dt: Optional[float] = None,
                 spec: Optional[IntegrationSpec] = None) -> float:
    """``T(h,h,h)``: third t-derivative of ``KL(f || f_t)`` at 0."""
    return kl_derivatives(base, curve, FORWARD, dt, spec).third


def cubic_tensor_quadrature(base: DensityModel, axis: int = 0, spec: Optional[IntegrationSpec] = None,
                            step: float = 1e-4) -> float:
    """Independent value of ``T`` for a translation curve.

    Uses ``T = 3 E[l'' s] + E[s^3]`` with ``l = log f_t``, ``s = dl/dt`` at 0,
    which follows from differentiating ``int f_t = 1`` three times. For a
    translation ``s = -s_i`` and ``l'' = d^2 log f / dx_i^2``; the latter is a
    central difference of the closed-form score.
    """
    nodes, w = expectation_rule(base, spec)
    e = np.zeros(base.dim)
    e[axis] = 1.0
    h = step * (1.0 + np.abs(nodes[:, axis:axis + 1]))
    s = -analytic_score(base, nodes)[:, axis]
    curv = (analytic_score(base, nodes + h * e)[:, axis] - analytic_score(base, nodes - h * e)[:, axis]) / (2 * h[:, 0])
    return float(3.0 * tree_sum(w * curv * s) + tree_sum(w * s ** 3))


@dataclass(frozen=True)
class AsymmetryReport:
    forward3: float
    reverse3: float
    T: float
    defect: float
    reverse_defect: float

    def to_dict(self):
        return {"forward3": self.forward3, "reverse3": self.reverse3, "T": self.T,
                "defect": self.defect, "reverse_defect": self.reverse_defect}


def asymmetry_check(base: DensityModel, curve: PerturbationCurve, dt: Optional[float] = None,
                    spec: Optional[IntegrationSpec] = None) -> AsymmetryReport:
    """Third-order forward/reverse KL asymmetry.

    ``defect = (forward3 - reverse3) - 2T`` and ``reverse_defect = reverse3 + T``;
    both vanish when the identities hold.
    """
    fwd = kl_derivatives(base, curve, FORWARD, dt, spec)
    rev = kl_derivatives(base, curve, REVERSE, dt, spec)
    T = fwd.third
    return AsymmetryReport(fwd.third, rev.third, T, (fwd.third - rev.third) - 2.0 * T, rev.third + T)


def gentropy_via_kl(base: DensityModel, dt: Optional[float] = None,
                    spec: Optional[IntegrationSpec] = None) -> float:
    """Sum over axes of ``d^2/dt^2 KL(f || f_{i,t})`` at 0."""
    total = 0.0
    for i in range(base.dim):
        curve = PerturbationCurve(base, i)
        total += kl_derivatives(base, curve, FORWARD, dt, spec).second
    return total


def hessian_check(base: DensityModel, dt: Optional[float] = None, spec: Optional[IntegrationSpec] = None):
    """Per-axis ``(second derivative, (G)_ii)`` pairs from independent code paths."""
    G = quadrature_cfim(base)
    out = []
    for i in range(base.dim):
        rep = kl_derivatives(base, PerturbationCurve(base, i), FORWARD, dt, spec)
        out.append((rep.second, float(G.matrix[i, i])))
    return out, g_entropy(G)


def curve_mass(curve: PerturbationCurve, t: float, spec: Optional[IntegrationSpec] = None) -> float:
    """``int f_t`` on a grid over the curve's stencil box."""
    spec = spec or IntegrationSpec.grid()
    box = np.asarray(spec.box) if spec.box is not None else curve.stencil_box(abs(t) + 1e-12)
    nodes, vol = grid_nodes(box, spec.points or default_points(curve.base.dim))
    return float(tree_sum(vol * np.exp(curve.at(t).logpdf(nodes))))
