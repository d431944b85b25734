"""Command-line front end.

Every command reads CSV samples and/or an inline JSON model, and writes one
JSON report that echoes the run configuration. Exit codes: 0 ok, 2 input
error, 3 singular metric, 4 invalid tangent or configuration.
"""

from __future__ import annotations

import datetime
import functools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import click
import numpy as np

from covgeom import __version__, kernels
from covgeom.cfim import (
    Singular,
    cfim_report,
    check_invertibility,
    empirical_cfim,
    g_entropy,
    quadrature_cfim,
)
from covgeom.density import (
    IntegrationSpec,
    model_from_dict,
    read_csv,
    sample,
    write_csv,
)
from covgeom.divergence import (
    FORWARD,
    REVERSE,
    PerturbationCurve,
    asymmetry_check,
    cubic_tensor_quadrature,
    kl_derivatives,
)
from covgeom.errors import (
    DimensionMismatch,
    EmptySamples,
    InputError,
    SingularMetric,
    SupportMismatch,
    UnsupportedModel,
    ZeroTangent,
)
from covgeom.geometry import decompose, polynomial_tangent
from covgeom.inference import EstimatorSpec, efficiency_benchmark
from covgeom.manifold import ManifoldSpec, generate_manifold_data, mh_test
from covgeom.score import make_scores

EXIT_INPUT = 2
EXIT_SINGULAR = 3
EXIT_CONFIG = 4

STANDARD_NORMAL = '{"gaussian": {"mean": [0.0], "cov": [[1.0]]}}'


class CommandFailed(click.ClickException):
    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


# --------------------------------------------------------------------------
# JSON with 17 significant digits


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2) -> str:
    """Deterministic JSON; floats carry 17 significant digits, non-finite -> null."""
    return _encode(obj, indent, 0) + "\n"


# --------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    model: Optional[dict] = None
    scores: str = "analytic"
    bandwidth: Optional[list] = None
    integration: Optional[dict] = None
    seed: int = 0
    dt: Optional[float] = None
    gap_threshold: float = 5.0
    output: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _parse_model(text):
    if text is None:
        return None, None
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"--model is not valid JSON: {exc}") from exc
    return spec, model_from_dict(spec)


def _parse_bandwidth(text):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"bad --bandwidth {text!r}") from None
    if any(v <= 0 for v in vals):
        raise InputError("bandwidths must be positive")
    return vals


def _emit(report, cfg: RunConfig, no_timestamp: bool):
    out = dict(report)
    out["config"] = cfg.to_dict()
    out["version"] = __version__
    out["kernel_backend"] = kernels.BACKEND
    if not no_timestamp:
        out["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    text = dumps(out)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SingularMetric as exc:
            raise CommandFailed(f"singular metric: {exc}", EXIT_SINGULAR) from exc
        except (ZeroTangent, SupportMismatch, UnsupportedModel) as exc:
            raise CommandFailed(f"{type(exc).__name__}: {exc}", EXIT_CONFIG) from exc
        except (InputError, DimensionMismatch, EmptySamples) as exc:
            raise CommandFailed(f"input error: {exc}", EXIT_INPUT) from exc
        except ValueError as exc:
            raise CommandFailed(f"invalid configuration: {exc}", EXIT_CONFIG) from exc

    return wrapper


def common_options(fn):
    opts = [
        click.option("--input", "input_path", type=str, default=None, help="CSV sample file (x1,...,xn header)."),
        click.option("--model", "model_text", type=str, default=None, help="Inline JSON density model."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--output", type=str, default=None, help="Write the report here instead of stdout."),
        click.option("--no-timestamp", is_flag=True, help="Omit the timestamp (byte-identical reruns)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Covariate information geometry toolkit."""


@main.command("cfim")
@common_options
@click.option("--scores", type=click.Choice(["analytic", "kde"]), default="analytic", show_default=True)
@click.option("--bandwidth", type=str, default=None, help="KDE bandwidth, scalar or comma list.")
@click.option("--integration", type=str, default="grid", show_default=True, help="grid[:<pts>] or mc:<draws>[:<seed>].")
@click.option("--max-rows", type=int, default=20_000, show_default=True, help="Rows at which KDE scores are evaluated.")
@click.option("--gap-threshold", type=float, default=5.0, show_default=True)
@_guarded
def cmd_cfim(input_path, model_text, seed, output, no_timestamp, scores, bandwidth, integration, max_rows,
             gap_threshold):
    """Covariate Fisher information matrix, G-entropy and spectrum."""
    model_spec, model = _parse_model(model_text)
    bw = _parse_bandwidth(bandwidth)
    integ = IntegrationSpec.parse(integration)
    cfg = RunConfig("cfim", input_path, model_spec, scores, bw, integ.to_dict(), seed, None, gap_threshold, output,
                    {"max_rows": max_rows})
    if input_path is not None:
        data = read_csv(input_path)
        if scores == "analytic" and model is None:
            raise InputError("--scores analytic with --input needs --model")
        field_ = make_scores(scores, samples=data, model=model, bandwidth=bw)
        G = empirical_cfim(field_, data, max_rows=max_rows if scores == "kde" else None, seed=seed)
    else:
        if model is None:
            raise InputError("give --input or --model")
        if scores != "analytic":
            raise InputError("a model without data needs --scores analytic")
        G = quadrature_cfim(model, integ)
    report = cfim_report(G, gap_threshold)
    inv = check_invertibility(G)
    report["invertible"] = not isinstance(inv, Singular)
    report["condition"] = inv.condition
    if isinstance(inv, Singular):
        report["null_space"] = inv.null_space.T.tolist()
    _emit(report, cfg, no_timestamp)
    if isinstance(inv, Singular):
        raise CommandFailed("singular metric: cFIM failed the invertibility test", EXIT_SINGULAR)


@main.command("project")
@common_options
@click.option("--tangent", type=str, required=True, help='Polynomial score form, e.g. "x1^2-1".')
@click.option("--integration", type=str, default="grid", show_default=True)
@_guarded
def cmd_project(input_path, model_text, seed, output, no_timestamp, tangent, integration):
    """Pythagorean split of a tangent into covariate and residual parts."""
    model_spec, model = _parse_model(model_text or STANDARD_NORMAL)
    integ = IntegrationSpec.parse(integration)
    cfg = RunConfig("project", input_path, model_spec, "analytic", None, integ.to_dict(), seed, output=output,
                    extra={"tangent": tangent})
    try:
        h = polynomial_tangent(model, tangent)
    except InputError as exc:
        raise CommandFailed(f"invalid tangent: {exc}", EXIT_CONFIG) from exc
    res = decompose(model, h, integ)
    _emit({"projection": res.to_dict(), "tangent": tangent}, cfg, no_timestamp)


@main.command("klcheck")
@common_options
@click.option("--axis", type=int, default=1, show_default=True, help="1-based translation axis.")
@click.option("--dt", type=float, default=None, help="Stencil step (default 0.02 x axis std).")
@click.option("--integration", type=str, default="grid", show_default=True)
@_guarded
def cmd_klcheck(input_path, model_text, seed, output, no_timestamp, axis, dt, integration):
    """Finite-difference KL derivatives against the cFIM and the cubic tensor."""
    if model_text is None:
        raise InputError("klcheck needs --model")
    model_spec, model = _parse_model(model_text)
    integ = IntegrationSpec.parse(integration)
    cfg = RunConfig("klcheck", input_path, model_spec, "analytic", None, integ.to_dict(), seed, dt, output=output,
                    extra={"axis": axis})
    curve = PerturbationCurve(model, axis - 1)
    fwd = kl_derivatives(model, curve, FORWARD, dt, integ)
    rev = kl_derivatives(model, curve, REVERSE, dt, integ)
    asym = asymmetry_check(model, curve, dt, integ)
    G = quadrature_cfim(model)
    report = {"forward": fwd.to_dict(), "reverse": rev.to_dict(), "asymmetry": asym.to_dict(),
              "cfim_diagonal": float(G.matrix[axis - 1, axis - 1]),
              "cubic_tensor_quadrature": cubic_tensor_quadrature(model, axis - 1),
              "g_entropy": g_entropy(G),
              "curve": "translation f(x - t e_axis); tangent h = -f s_axis"}
    _emit(report, cfg, no_timestamp)


@main.command("crlb")
@common_options
@click.option("--estimator", type=click.Choice(["mean", "median", "trimmed"]), default="mean", show_default=True)
@click.option("--trim", type=float, default=0.1, show_default=True, help="Trim fraction for --estimator trimmed.")
@click.option("--scores", type=click.Choice(["analytic", "kde"]), default="analytic", show_default=True)
@click.option("--bandwidth", type=str, default=None)
@click.option("--reps", type=int, default=2000, show_default=True)
@click.option("--n-per-rep", type=int, default=500, show_default=True)
@click.option("--n-cfim", type=int, default=100_000, show_default=True, help="Sample size for G when no --input.")
@click.option("--max-rows", type=int, default=20_000, show_default=True)
@_guarded
def cmd_crlb(input_path, model_text, seed, output, no_timestamp, estimator, trim, scores, bandwidth, reps,
             n_per_rep, n_cfim, max_rows):
    """Covariate CRLB and the efficiency ratio of a location estimator."""
    if model_text is None:
        raise InputError("crlb needs --model (the replication sampler)")
    model_spec, model = _parse_model(model_text)
    bw = _parse_bandwidth(bandwidth)
    est = EstimatorSpec(estimator, trim)
    cfg = RunConfig("crlb", input_path, model_spec, scores, bw, None, seed, output=output,
                    extra={"estimator": est.label, "reps": reps, "n_per_rep": n_per_rep, "n_cfim": n_cfim})
    data = read_csv(input_path) if input_path else sample(model, n_cfim, seed + reps)
    field_ = make_scores(scores, samples=data, model=model, bandwidth=bw)
    rep = efficiency_benchmark(model, est, n_per_rep, reps, seed, cfim_samples=data, scores=field_,
                               max_rows=max_rows if scores == "kde" else None)
    _emit(rep.to_dict(), cfg, no_timestamp)
    click.echo(rep.table(), err=output is None)


@main.command("mhtest")
@common_options
@click.option("--scores", type=click.Choice(["analytic", "kde"]), default="kde", show_default=True)
@click.option("--bandwidth", type=str, default=None)
@click.option("--gap-threshold", type=float, default=5.0, show_default=True)
@click.option("--max-rows", type=int, default=20_000, show_default=True)
@_guarded
def cmd_mhtest(input_path, model_text, seed, output, no_timestamp, scores, bandwidth, gap_threshold, max_rows):
    """Spectral-gap manifold-hypothesis test on sample data."""
    if input_path is None:
        raise InputError("mhtest needs --input")
    model_spec, model = _parse_model(model_text)
    bw = _parse_bandwidth(bandwidth)
    cfg = RunConfig("mhtest", input_path, model_spec, scores, bw, None, seed, None, gap_threshold, output,
                    {"max_rows": max_rows})
    data = read_csv(input_path)
    field_ = make_scores(scores, samples=data, model=model, bandwidth=bw)
    rep = mh_test(data, field_, gap_threshold, max_rows=max_rows, seed=seed)
    _emit(rep.to_dict(), cfg, no_timestamp)


@main.command("generate")
@click.option("--manifold", "manifold_text", type=str, default=None,
              help='JSON manifold, e.g. {"kind": "circle", "radius": 1, "ambient": 2, "noise": 0.05}.')
@click.option("--model", "model_text", type=str, default=None, help="Sample a density model instead.")
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", type=str, default=None, help="CSV destination (stdout if omitted).")
@_guarded
def cmd_generate(manifold_text, model_text, count, seed, output):
    """Write synthetic samples as CSV."""
    if (manifold_text is None) == (model_text is None):
        raise InputError("give exactly one of --manifold or --model")
    if manifold_text is not None:
        try:
            spec = ManifoldSpec.from_dict(json.loads(manifold_text))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"bad --manifold: {exc}") from exc
        data = generate_manifold_data(spec, count, seed)
    else:
        _, model = _parse_model(model_text)
        data = sample(model, count, seed)
    if output:
        write_csv(output, data)
    else:
        _write_stdout(data)


def _write_stdout(data):
    click.echo(",".join(f"x{i + 1}" for i in range(data.dim)))
    for row in data.values:
        click.echo(",".join(repr(float(v)) for v in row))


if __name__ == "__main__":
    main()
