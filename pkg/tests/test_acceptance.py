"""Acceptance gate: one check per criterion, each at its stated tolerance.

Every check appends a ``PASS``/``FAIL`` line that is printed in the terminal
summary (see ``conftest.py``), so a plain ``pytest`` run shows the gate.
"""

import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import ACCEPTANCE_LINES, analytic_families, skew_mixture
from covgeom.cfim import (Invertible, Singular, check_invertibility, empirical_cfim, g_entropy,
                          quadrature_cfim)
from covgeom.density import Exponential, Gaussian, SampleMatrix, sample
from covgeom.divergence import PerturbationCurve, asymmetry_check, gentropy_via_kl, kl_derivatives
from covgeom.errors import CovGeomError
from covgeom.geometry import (covariate_direction, decompose, fisher_rao_distance, polynomial_tangent,
                              random_polynomial_tangent)
from covgeom.inference import EstimatorSpec, efficiency_benchmark
from covgeom.manifold import ManifoldSpec, generate_manifold_data, jacobian_congruence_check, mh_test
from covgeom.score import ScoreField


def record(cid, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---- independent closed-form scores for the oracle in criterion 1 ----------

def _mixture_score(x):
    p1 = 0.7 * stats.norm.pdf(x, 0.0, 1.0)
    p2 = 0.3 * stats.norm.pdf(x, 2.0, 0.5)
    return (p1 * (-x) + p2 * (-(x - 2.0) / 0.25)) / (p1 + p2)


def _trace_oracle(name):
    if name == "gaussian_diag":
        # E[s_i^2] per axis, each a 1-D integral because the axes are independent
        return sum(integrate.quad(lambda x, v=v: stats.norm.pdf(x, 0, np.sqrt(v)) * (x / v) ** 2,
                                  -np.inf, np.inf, epsabs=1e-13)[0] for v in (1.0, 4.0))
    if name == "exponential":
        return integrate.quad(lambda x: np.exp(-x) * 1.0, 0, np.inf, epsabs=1e-13)[0]
    f = lambda x: (0.7 * stats.norm.pdf(x) + 0.3 * stats.norm.pdf(x, 2, 0.5)) * _mixture_score(x) ** 2
    return integrate.quad(f, -12, 12, points=[0.0, 2.0], limit=200, epsabs=1e-13)[0]


@pytest.mark.parametrize("name, model", [
    ("gaussian_diag", Gaussian([0.0, 0.0], [1.0, 4.0])),
    ("exponential", Exponential([1.0])),
    ("mixture", skew_mixture()),
])
def test_c01_trace_identity(name, model):
    tr = g_entropy(quadrature_cfim(model))
    ref = _trace_oracle(name)
    rel = abs(tr - ref) / abs(ref)
    record("1", rel <= 1e-6, f"{name} Tr G={tr:.10g} oracle={ref:.10g} rel={rel:.2e}")


def test_c02_gaussian_congruence():
    model = Gaussian([0.0], 4.0)
    data = sample(model, 100_000, seed=2)
    g_an = empirical_cfim(ScoreField.analytic(model), data).matrix[0, 0]
    g_kde = empirical_cfim(ScoreField.kde(data), data, max_rows=20_000, seed=2).matrix[0, 0]
    e_an, e_kde = abs(g_an - 0.25) / 0.25, abs(g_kde - 0.25) / 0.25
    record("2", e_an <= 0.03 and e_kde <= 0.15,
           f"analytic G={g_an:.5f} ({e_an:.2%}), kde G={g_kde:.5f} ({e_kde:.2%})")


@pytest.mark.parametrize("name", sorted(analytic_families()))
def test_c03_kl_hessian(name):
    model = analytic_families()[name]
    G = quadrature_cfim(model).matrix
    worst, parts = 0.0, []
    try:
        for i in range(model.dim):
            second = kl_derivatives(model, PerturbationCurve(model, i)).second
            err = abs(second - G[i, i])
            worst = max(worst, err / max(1e-3, 0.01 * abs(G[i, i])))
            parts.append(f"axis{i + 1}: {second:.6g} vs {G[i, i]:.6g}")
    except CovGeomError as exc:
        record("3", False, f"{name} {type(exc).__name__}: {exc}")
    record("3", worst <= 1.0, f"{name} " + ", ".join(parts))


def test_c04_gentropy_via_kl():
    out = []
    ok = True
    for model, target in ((Gaussian([0.0, 0.0], 1.0), 2.0), (Gaussian([0.0, 0.0], [1.0, 4.0]), 1.25)):
        via_kl = gentropy_via_kl(model)
        ge = g_entropy(quadrature_cfim(model))
        ok &= abs(via_kl - ge) <= 0.01 * ge and abs(ge - target) <= 1e-9
        out.append(f"{via_kl:.6f} vs {ge:.6f} (target {target})")
    record("4", ok, "; ".join(out))


def test_c05_pythagorean_suite():
    rng = np.random.default_rng(5)
    bases = [Gaussian([0.0], 1.0), Gaussian([0.0, 0.0], 1.0), Gaussian([0.3, -0.2], [[1.5, 0.4], [0.4, 0.8]])]
    worst = 0.0
    for k in range(200):
        base = bases[k % len(bases)]
        res = decompose(base, random_polynomial_tangent(base, rng))
        worst = max(worst, abs(res.total - res.explained - res.residual) / res.total)
    base = Gaussian([0.0], 1.0)
    c_s = decompose(base, covariate_direction(base, 0)).capture_ratio
    c_q = decompose(base, polynomial_tangent(base, "x1^2-1")).capture_ratio
    ok = worst <= 1e-6 and abs(c_s - 1.0) <= 1e-6 and abs(c_q) <= 1e-3
    record("5", ok, f"max additivity defect {worst:.2e}, capture(s1)={c_s:.9f}, capture(x^2-1)={c_q:.2e}")


def test_c06_projection_exactness():
    base = Gaussian([0.0, 0.0], 1.0)
    h = 2.0 * covariate_direction(base, 0) + 3.0 * covariate_direction(base, 1)
    w = decompose(base, h).weights
    err = float(np.max(np.abs(w - [2.0, 3.0])))
    record("6", err <= 1e-6, f"w={w.tolist()} max err {err:.2e}")


def test_c07_cubic_asymmetry():
    mix = skew_mixture()
    rep = asymmetry_check(mix, PerturbationCurve(mix, 0))
    tol = 5e-3 * max(1.0, abs(rep.T))
    ok_mix = abs(rep.defect) <= tol and abs(rep.reverse_defect) <= tol
    g = Gaussian([0.0], 4.0)
    rg = asymmetry_check(g, PerturbationCurve(g, 0))
    ok_g = max(abs(rg.forward3), abs(rg.reverse3), abs(rg.T)) <= 1e-3
    record("7", ok_mix and ok_g,
           f"mixture T={rep.T:.6f} defect={rep.defect:.1e} reverse_defect={rep.reverse_defect:.1e}; "
           f"gaussian |f3|,|r3|={abs(rg.forward3):.1e},{abs(rg.reverse3):.1e}")


@pytest.mark.slow
def test_c08_covariate_crlb():
    model = Gaussian([0.0], 1.0)
    mean = efficiency_benchmark(model, EstimatorSpec("mean"), n_per_rep=500, n_reps=2000, seed=8).eff
    med = efficiency_benchmark(model, EstimatorSpec("median"), n_per_rep=500, n_reps=2000, seed=8).eff
    ok = 0.9 <= mean <= 1.1 and abs(med - 2.0 / np.pi) <= 0.07
    record("8", ok, f"Eff(mean)={mean:.4f}, Eff(median)={med:.4f} (2/pi={2 / np.pi:.4f})")


def test_c09_invertibility():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((5000, 1))
    dup = SampleMatrix(np.hstack([x, x]), seed=9)
    r_dup = check_invertibility(empirical_cfim(ScoreField.kde(dup), dup))
    full = sample(Gaussian([0.0, 0.0], [[1.0, 0.5], [0.5, 2.0]]), 5000, seed=9)
    r_full = check_invertibility(empirical_cfim(ScoreField.kde(full), full))
    ok = isinstance(r_dup, Singular) and isinstance(r_full, Invertible)
    detail = f"duplicated -> {type(r_dup).__name__}, full-rank -> {type(r_full).__name__}"
    if isinstance(r_dup, Singular):
        v = r_dup.null_space[:, 0] * np.sign(r_dup.null_space[0, 0])
        err = float(np.max(np.abs(v - np.array([1.0, -1.0]) / np.sqrt(2.0))))
        ok &= err <= 1e-3
        detail += f", null vector err {err:.1e}"
    record("9", ok, detail)


def test_c10_jacobian_congruence():
    rng = np.random.default_rng(10)
    A = rng.standard_normal((5, 2))
    eps = 0.1
    spec = ManifoldSpec.linear(A, noise_sigma=eps)
    data = generate_manifold_data(spec, 50_000, seed=10)
    ambient = Gaussian(np.zeros(5), A @ A.T + eps ** 2 * np.eye(5))
    G_amb = empirical_cfim(ScoreField.analytic(ambient), data)
    G_int = quadrature_cfim(Gaussian([0.0, 0.0], 1.0))
    res = jacobian_congruence_check(G_amb, A, G_int)
    record("10", res <= 0.05, f"residual {res:.4f}")


def test_c11_mh_test():
    seeds = range(10)
    circle = [mh_test(generate_manifold_data(ManifoldSpec.circle(noise_sigma=0.05), 5000, s), seed=s)
              for s in seeds]
    dims = [r.estimated_dim for r in circle]
    modal = max(set(dims), key=dims.count)
    good = sum(r.estimated_dim == modal and r.dominance_ratio >= 0.9 and r.decision == "SupportMH"
               for r in circle)
    iso = [mh_test(sample(Gaussian(np.zeros(4), 1.0), 5000, s), seed=s) for s in seeds]
    rejects = sum(r.decision == "RejectMH" for r in iso)
    record("11", good >= 9 and rejects >= 9,
           f"circle SupportMH+dominance>=0.9 in {good}/10 (median dominance "
           f"{np.median([r.dominance_ratio for r in circle]):.3f}, median gap "
           f"{np.median([r.gap_ratio for r in circle]):.3f}); isotropic RejectMH in {rejects}/10")


def test_c12_fisher_rao_distance():
    d = fisher_rao_distance(Gaussian([0.0], 1.0), Gaussian([1.0], 1.0))
    ref = 2.0 * np.arccos(np.exp(-1.0 / 8.0))
    d0 = fisher_rao_distance(skew_mixture(), skew_mixture())
    record("12", abs(d - ref) <= 1e-3 and d0 <= 1e-5, f"dFR={d:.7f} ref={ref:.7f}, dFR(f,f)={d0:.1e}")


def _run_cli(args):
    return subprocess.run([sys.executable, "-m", "covgeom.cli", *args], capture_output=True, check=True).stdout


def test_c13_cli_reproducibility(tmp_path):
    csv = tmp_path / "data.csv"
    _run_cli(["generate", "--model", '{"gaussian": {"mean": [0, 0], "cov": [[1, 0.3], [0.3, 2]]}}',
              "--count", "2000", "--seed", "13", "--output", str(csv)])
    runs = [
        ["cfim", "--input", str(csv), "--scores", "kde", "--seed", "13", "--no-timestamp"],
        ["mhtest", "--input", str(csv), "--seed", "13", "--no-timestamp"],
        ["project", "--model", '{"gaussian": {"mean": [0], "var": 1}}', "--tangent", "x1^3",
         "--no-timestamp"],
    ]
    same = []
    for args in runs:
        a, b = _run_cli(args), _run_cli(args)
        json.loads(a)
        same.append(a == b)
    record("13", all(same), f"byte-identical JSON for {sum(same)}/{len(same)} commands")
