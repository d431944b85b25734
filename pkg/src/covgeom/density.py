"""Evaluable density models, sampling and expectation backends.

Every model works in log space: ``logpdf`` is the primitive, ``pdf`` is its
exponential. Batch inputs are ``(M, n)`` arrays; a single point may be passed
as a length-``n`` vector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from covgeom import kernels
from covgeom.errors import (
    DimensionMismatch,
    EmptySamples,
    InputError,
    NonFiniteIntegrand,
    OutOfSupport,
    UnsupportedModel,
)

_LOG_2PI = np.log(2.0 * np.pi)

# grid budget per dimension; beyond 4 axes a tensor grid is only a fallback
_DEFAULT_POINTS = {1: 512, 2: 160, 3: 48, 4: 20}
MIN_GRID_POINTS = 16
MIN_MC_DRAWS = 1000


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {x.shape}")
    return x, single


def tree_sum(values, chunk=4096):
    """Sum along axis 0 in fixed-size chunks reduced pairwise.

    The reduction order depends only on ``len(values)``, so results are
    bit-stable however the chunks are produced.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] == 0:
        return np.zeros(values.shape[1:])
    parts = [values[i:i + chunk].sum(axis=0) for i in range(0, values.shape[0], chunk)]
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


# --------------------------------------------------------------------------
# sample container


@dataclass(frozen=True)
class SampleMatrix:
    """``N x n`` block of observations plus the seed that produced it."""

    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise EmptySamples(f"sample matrix must be non-empty 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("sample matrix contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.count


def read_csv(path) -> SampleMatrix:
    """Read the ``x1,...,xn`` header CSV format; errors name the bad line."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file (line 1)") from None
        names = [h.strip() for h in header]
        expected = [f"x{i + 1}" for i in range(len(names))]
        if names != expected:
            raise InputError(f"{path}: line 1: header must be {','.join(expected)}, got {','.join(names)}")
        rows = []
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(names):
                raise InputError(f"{path}: line {lineno}: expected {len(names)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise InputError(f"{path}: line {lineno}: non-numeric field in {row!r}") from None
            if not all(np.isfinite(vals)):
                raise InputError(f"{path}: line {lineno}: non-finite value")
            rows.append(vals)
    if len(rows) < 2:
        raise InputError(f"{path}: need at least 2 data rows, got {len(rows)}")
    return SampleMatrix(np.array(rows), seed=0)


def write_csv(path, samples: SampleMatrix):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(samples.dim)])
        for row in samples.values:
            writer.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# models


class DensityModel:
    """Base class. Subclasses implement ``logpdf``, ``_draw`` and ``box``."""

    dim: int
    kind: str = "abstract"

    def logpdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def grad_log(self, x):
        raise UnsupportedModel(f"{self.kind} has no closed-form score")

    def _draw(self, count, rng):
        raise NotImplementedError

    def box(self):
        """``(n, 2)`` bounding box holding all but a negligible tail."""
        raise NotImplementedError

    def marginal_std(self):
        raise NotImplementedError

    def mode_logpdf(self):
        """Log density at (or near) the mode, for tail-decay checks."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class Gaussian(DensityModel):
    kind = "gaussian"

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = np.eye(mean.size) * cov
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        ev = np.linalg.eigvalsh(cov)
        if ev[0] <= 1e-12 * ev[-1]:
            raise ValueError(f"covariance is not positive definite (eigenvalues {ev})")
        self.mean = mean
        self.cov = cov
        self.dim = mean.size
        self._chol = np.linalg.cholesky(cov)
        self._prec = np.linalg.inv(cov)
        self._prec = 0.5 * (self._prec + self._prec.T)
        self._logdet = 2.0 * np.log(np.diag(self._chol)).sum()

    def logpdf(self, x):
        x, single = _as_batch(x, self.dim)
        d = x - self.mean
        z = np.linalg.solve(self._chol, d.T)
        out = -0.5 * (self.dim * _LOG_2PI + self._logdet + np.sum(z * z, axis=0))
        return out[0] if single else out

    def grad_log(self, x):
        x, single = _as_batch(x, self.dim)
        out = -(x - self.mean) @ self._prec
        return out[0] if single else out

    def _draw(self, count, rng):
        z = rng.standard_normal((count, self.dim))
        return self.mean + z @ self._chol.T

    def marginal_std(self):
        return np.sqrt(np.diag(self.cov))

    def box(self):
        s = 8.0 * self.marginal_std()
        return np.column_stack([self.mean - s, self.mean + s])

    def mode_logpdf(self):
        return float(self.logpdf(self.mean))

    def to_dict(self):
        return {"gaussian": {"mean": self.mean.tolist(), "cov": self.cov.tolist()}}


class GaussianMixture(DensityModel):
    kind = "mixture"

    def __init__(self, weights, components: Sequence[Gaussian]):
        w = np.asarray(weights, dtype=np.float64)
        comps = list(components)
        if w.ndim != 1 or w.size != len(comps) or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be nonnegative and sum to 1, got {w}")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise DimensionMismatch("mixture components differ in dimension")
        self.weights = w
        self.components = comps
        self.dim = dims.pop()
        self._logw = np.log(np.where(w > 0, w, 1e-300))

    def _component_logpdfs(self, x):
        return np.stack([c.logpdf(x) for c in self.components], axis=1) + self._logw

    def logpdf(self, x):
        x, single = _as_batch(x, self.dim)
        out = logsumexp(self._component_logpdfs(x), axis=1)
        return out[0] if single else out

    def grad_log(self, x):
        x, single = _as_batch(x, self.dim)
        lc = self._component_logpdfs(x)
        resp = np.exp(lc - logsumexp(lc, axis=1, keepdims=True))
        out = np.zeros_like(x)
        for k, c in enumerate(self.components):
            out += resp[:, k:k + 1] * c.grad_log(x)
        return out[0] if single else out

    def _draw(self, count, rng):
        comp = rng.choice(len(self.components), size=count, p=self.weights)
        z = rng.standard_normal((count, self.dim))
        out = np.empty((count, self.dim))
        for k, c in enumerate(self.components):
            idx = comp == k
            out[idx] = c.mean + z[idx] @ c._chol.T
        return out

    def _moments(self):
        mu = sum(w * c.mean for w, c in zip(self.weights, self.components))
        second = sum(w * (np.diag(c.cov) + c.mean ** 2) for w, c in zip(self.weights, self.components))
        return mu, second - mu ** 2

    def marginal_std(self):
        return np.sqrt(self._moments()[1])

    def box(self):
        boxes = np.stack([c.box() for c in self.components])
        return np.column_stack([boxes[:, :, 0].min(axis=0), boxes[:, :, 1].max(axis=0)])

    def mode_logpdf(self):
        return float(max(self.logpdf(c.mean) for c in self.components))

    def to_dict(self):
        return {"mixture": {"weights": self.weights.tolist(),
                            "components": [c.to_dict()["gaussian"] for c in self.components]}}


class Exponential(DensityModel):
    """Independent exponential coordinates, support ``x_i > 0``."""

    kind = "exponential"

    def __init__(self, rates):
        r = np.atleast_1d(np.asarray(rates, dtype=np.float64))
        if np.any(r <= 0):
            raise ValueError("rates must be positive")
        self.rates = r
        self.dim = r.size

    def logpdf(self, x):
        x, single = _as_batch(x, self.dim)
        inside = np.all(x > 0, axis=1)
        out = np.where(inside, np.sum(np.log(self.rates) - self.rates * x, axis=1), -np.inf)
        return out[0] if single else out

    def grad_log(self, x):
        x, single = _as_batch(x, self.dim)
        if not np.all(x > 0):
            raise OutOfSupport("exponential score is undefined for x_i <= 0")
        out = np.broadcast_to(-self.rates, x.shape).copy()
        return out[0] if single else out

    def _draw(self, count, rng):
        return rng.exponential(1.0 / self.rates, size=(count, self.dim))

    def marginal_std(self):
        return 1.0 / self.rates

    def box(self):
        # e^-30 keeps the boundary density below 1e-10 of the mode
        return np.column_stack([np.zeros(self.dim), 30.0 / self.rates])

    def mode_logpdf(self):
        return float(np.sum(np.log(self.rates)))

    def to_dict(self):
        return {"exponential": {"rates": self.rates.tolist()}}


class ProductOfMarginals(DensityModel):
    kind = "product"

    def __init__(self, marginals: Sequence[DensityModel]):
        ms = list(marginals)
        if not ms or any(m.dim != 1 for m in ms):
            raise DimensionMismatch("product marginals must all be 1-D models")
        self.marginals = ms
        self.dim = len(ms)

    def logpdf(self, x):
        x, single = _as_batch(x, self.dim)
        out = sum(m.logpdf(x[:, i:i + 1]) for i, m in enumerate(self.marginals))
        return out[0] if single else out

    def grad_log(self, x):
        x, single = _as_batch(x, self.dim)
        out = np.column_stack([m.grad_log(x[:, i:i + 1])[:, 0] for i, m in enumerate(self.marginals)])
        return out[0] if single else out

    def _draw(self, count, rng):
        return np.column_stack([m._draw(count, rng)[:, 0] for m in self.marginals])

    def marginal_std(self):
        return np.concatenate([m.marginal_std() for m in self.marginals])

    def box(self):
        return np.vstack([m.box() for m in self.marginals])

    def mode_logpdf(self):
        return float(sum(m.mode_logpdf() for m in self.marginals))

    def to_dict(self):
        return {"product": [m.to_dict() for m in self.marginals]}


def silverman_bandwidth(samples) -> np.ndarray:
    """Per-coordinate ``1.06 * std * N^(-1/(n+4))``."""
    x = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=np.float64)
    n_obs, dim = x.shape
    sd = x.std(axis=0, ddof=1) if n_obs > 1 else np.ones(dim)
    sd = np.where(sd > 0, sd, 1.0)
    return 1.06 * sd * n_obs ** (-1.0 / (dim + 4))


class KDE(DensityModel):
    """Gaussian kernel density estimate with diagonal bandwidth."""

    kind = "kde"

    def __init__(self, samples, bandwidth=None):
        if not isinstance(samples, SampleMatrix):
            samples = SampleMatrix(np.asarray(samples, dtype=np.float64))
        self.samples = samples
        self.dim = samples.dim
        if bandwidth is None:
            bw = silverman_bandwidth(samples)
        else:
            bw = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (self.dim,)).copy()
        if np.any(bw <= 0):
            raise ValueError("bandwidth components must be positive")
        self.bandwidth = bw

    def logpdf_and_score(self, x):
        x, single = _as_batch(x, self.dim)
        lp, sc = kernels.kde_logpdf_score(x, self.samples.values, self.bandwidth)
        return (lp[0], sc[0]) if single else (lp, sc)

    def logpdf(self, x):
        return self.logpdf_and_score(x)[0]

    def _draw(self, count, rng):
        idx = rng.integers(0, self.samples.count, size=count)
        return self.samples.values[idx] + rng.standard_normal((count, self.dim)) * self.bandwidth

    def marginal_std(self):
        x = self.samples.values
        var = x.var(axis=0) + self.bandwidth ** 2
        return np.sqrt(var)

    def box(self):
        x = self.samples.values
        return np.column_stack([x.min(axis=0) - 8.0 * self.bandwidth, x.max(axis=0) + 8.0 * self.bandwidth])

    def mode_logpdf(self):
        return float(np.max(self.logpdf(self.samples.values)))

    def to_dict(self):
        return {"kde": {"count": self.samples.count, "bandwidth": self.bandwidth.tolist()}}


def model_from_dict(spec: dict) -> DensityModel:
    """Build a model from the JSON form used by the CLI.

    Accepted keys: ``gaussian`` (``mean``, ``cov`` or ``var``), ``exponential``
    (``rates``), ``mixture`` (``weights``, ``components``) and ``product``
    (list of 1-D specs).
    """
    if not isinstance(spec, dict) or len(spec) != 1:
        raise InputError(f"model spec must be a single-key object, got {spec!r}")
    (kind, body), = spec.items()
    allowed = {"gaussian": {"mean", "cov", "var"}, "exponential": {"rates", "rate"},
               "mixture": {"weights", "components"}}
    if kind in allowed and isinstance(body, dict) and set(body) - allowed[kind]:
        raise InputError(f"unknown keys for {kind}: {sorted(set(body) - allowed[kind])}")
    try:
        if kind == "gaussian":
            mean = np.atleast_1d(np.asarray(body.get("mean", [0.0]), dtype=float))
            cov = body.get("cov", body.get("var", 1.0))
            return Gaussian(mean, cov)
        if kind == "exponential":
            return Exponential(body.get("rates", body.get("rate", 1.0)))
        if kind == "mixture":
            # components may be bare Gaussian bodies or {"gaussian": {...}} objects
            comps = [model_from_dict(c if "gaussian" in c else {"gaussian": c}) for c in body["components"]]
            if not all(isinstance(c, Gaussian) for c in comps):
                raise InputError("mixture components must be Gaussian")
            return GaussianMixture(body["weights"], comps)
        if kind == "product":
            return ProductOfMarginals([model_from_dict(m) for m in body])
    except InputError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"invalid {kind} model spec: {exc}") from exc
    raise InputError(f"unknown model kind {kind!r}")


# --------------------------------------------------------------------------
# evaluation, sampling, integration


def eval_pdf(model: DensityModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.dim:
        raise DimensionMismatch(f"point of length {x.size} for a {model.dim}-D model")
    return float(np.exp(model.logpdf(x)))


def sample(model: DensityModel, count: int, seed: int) -> SampleMatrix:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return SampleMatrix(model._draw(int(count), rng), seed=seed)


@dataclass(frozen=True)
class IntegrationSpec:
    """How ``E_f[.]`` is realized: a tensor Gauss-Legendre grid or Monte Carlo.

    ``points`` and ``box`` default per model (see ``DensityModel.box``).
    """

    method: str = "grid"
    points: Optional[int] = None
    box: Optional[tuple] = None
    draws: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("grid", "mc"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.method == "grid" and self.points is not None and self.points < MIN_GRID_POINTS:
            raise ValueError(f"grid needs at least {MIN_GRID_POINTS} points per axis")
        if self.method == "mc" and self.draws < MIN_MC_DRAWS:
            raise ValueError(f"Monte Carlo needs at least {MIN_MC_DRAWS} draws")
        if self.box is not None:
            object.__setattr__(self, "box", tuple(tuple(map(float, b)) for b in self.box))

    @classmethod
    def grid(cls, points=None, box=None):
        return cls("grid", points=points, box=box)

    @classmethod
    def monte_carlo(cls, draws=100_000, seed=0):
        return cls("mc", draws=draws, seed=seed)

    @classmethod
    def parse(cls, text: str):
        """Parse the CLI form ``grid:<pts>`` or ``mc:<draws>[:<seed>]``."""
        try:
            kind, _, rest = text.partition(":")
            if kind == "grid":
                return cls.grid(int(rest) if rest else None)
            if kind == "mc":
                parts = rest.split(":")
                return cls.monte_carlo(int(parts[0]), int(parts[1]) if len(parts) > 1 else 0)
        except ValueError as exc:
            raise InputError(f"bad integration spec {text!r}: {exc}") from exc
        raise InputError(f"bad integration spec {text!r}")

    def with_box(self, box):
        return IntegrationSpec(self.method, self.points, tuple(map(tuple, np.asarray(box))), self.draws, self.seed)

    def to_dict(self):
        return {"method": self.method, "points": self.points,
                "box": None if self.box is None else [list(b) for b in self.box],
                "draws": self.draws, "seed": self.seed}


def default_points(dim: int) -> int:
    return _DEFAULT_POINTS.get(dim, MIN_GRID_POINTS)


def grid_nodes(box, points):
    """Tensor Gauss-Legendre nodes ``(M, n)`` and volume weights ``(M,)``."""
    box = np.asarray(box, dtype=np.float64)
    t, w = np.polynomial.legendre.leggauss(points)
    axes, weights = [], []
    for lo, hi in box:
        half = 0.5 * (hi - lo)
        axes.append(lo + half * (t + 1.0))
        weights.append(half * w)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])
    wmesh = np.meshgrid(*weights, indexing="ij")
    vol = np.prod(np.column_stack([m.ravel() for m in wmesh]), axis=1)
    return nodes, vol


def resolve_box(spec: IntegrationSpec, *models: DensityModel):
    if spec.box is not None:
        return np.asarray(spec.box, dtype=np.float64)
    boxes = np.stack([m.box() for m in models])
    return np.column_stack([boxes[:, :, 0].min(axis=0), boxes[:, :, 1].max(axis=0)])


def expectation_rule(model: DensityModel, spec: Optional[IntegrationSpec] = None):
    """Nodes and weights with ``E_f[g] ~= sum(w * g(nodes))``.

    Grid weights fold in the density; Monte Carlo weights are ``1/draws``.
    """
    spec = spec or IntegrationSpec.grid()
    if spec.method == "mc":
        nodes = sample(model, spec.draws, spec.seed).values
        return nodes, np.full(nodes.shape[0], 1.0 / nodes.shape[0])
    nodes, vol = grid_nodes(resolve_box(spec, model), spec.points or default_points(model.dim))
    return nodes, vol * np.exp(model.logpdf(nodes))


def _checked(values):
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteIntegrand("integrand produced NaN or Inf")
    return values


def expectation(model: DensityModel, integrand: Callable, spec: Optional[IntegrationSpec] = None):
    """``E_f[integrand(X)]``.

    ``integrand`` maps an ``(M, n)`` batch of points to ``M`` values (or an
    ``(M, k)`` block, giving a length-``k`` result).
    """
    nodes, w = expectation_rule(model, spec)
    vals = _checked(integrand(nodes))
    if vals.ndim == 1:
        return float(tree_sum(w * vals))
    return tree_sum(w[:, None] * vals.reshape(vals.shape[0], -1))
