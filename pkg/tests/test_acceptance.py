"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also collected into the terminal summary.
"""

import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_pd_moments, random_pd_structure
from oracles import central_gradient, delta_method_variance, nelder_mead_2d
from ratiocv import cli
from ratiocv import coefficients as coef
from ratiocv import search as de
from ratiocv import variance_model as vm
from ratiocv.numerics import MomentSet, is_positive_definite
from ratiocv.simulation import BUILTIN_LOWER, Scenario, run_scenario

N = 100


def report(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def structures_1000():
    return random_pd_moments(np.random.default_rng(20240601), 1000)


def _run_cli(args):
    code = cli.main([str(a) for a in args])
    assert code == 0, f"ratiocv {' '.join(map(str, args))} exited with {code}"


def _simulate(tmp_path, scenario, n, reps=10_000, seed=0):
    out = tmp_path / f"{scenario}-{n}.json"
    _run_cli(["simulate", "--scenario", scenario, "--n", n, "--reps", reps, "--seed", seed, "--out", out])
    rows = json.loads(out.read_text())["result"]["combinations"]
    return {(r["kind"], r["strategy"]): r for r in rows}


def test_criterion_1_gradient_zero(structures_1000):
    worst = 0.0
    for m in structures_1000:
        c = coef.optimal(m)

        def f(x):
            return vm.var_cv_cv(m, x[0], x[1], N)

        h = [1e-5 * (1 + abs(c.alpha)), 1e-5 * (1 + abs(c.beta))]
        g = central_gradient(f, [c.alpha, c.beta], h)
        g0 = central_gradient(f, [0.0, 0.0], [1e-5, 1e-5])
        worst = max(worst, np.linalg.norm(g) / np.linalg.norm(g0))
    report(1, worst < 1e-6, f"max relative gradient norm {worst:.2e} over 1000 structures, bound 1e-6")


def test_criterion_2_guaranteed_reduction(structures_1000):
    positive = 0
    worst = 0.0
    for m in structures_1000:
        b = vm.variance_difference(m, "optimal", N)
        positive += b.difference > 0
        worst = max(worst, abs(b.difference - b.closed_form_difference) / abs(b.closed_form_difference))
    ok = positive == 0 and worst < 1e-9
    report(2, ok, f"{positive} positive differences, max closed-form mismatch {worst:.2e}, bound 1e-9")


def test_criterion_3_oracle_minimizer():
    moments = random_pd_moments(np.random.default_rng(31337), 100)
    worst_x = worst_v = 0.0
    for m in moments:
        c = coef.optimal(m)
        # Objective from the gradient-form oracle, independent of the ten-term sum.
        sigma, mu = m.covariance_matrix(), (m.mean_a, 0.0, m.mean_c, 0.0)

        def f(x):
            return delta_method_variance(sigma, mu, x[0], x[1], N)

        x, fx = nelder_mead_2d(f, [0.0, 0.0])
        v = vm.var_cv_cv(m, c.alpha, c.beta, N)
        worst_x = max(worst_x, float(np.abs(x - [c.alpha, c.beta]).max()))
        worst_v = max(worst_v, abs(fx - v) / v)
    ok = worst_x < 1e-4 and worst_v < 1e-10
    report(3, ok, f"max coefficient gap {worst_x:.2e} (bound 1e-4), max relative variance gap {worst_v:.2e} (bound 1e-10)")


def _gap_se(a, b):
    # Positively correlated RVRs make this an upper bound on the gap's error.
    return math.hypot(a["rvr_std_error"], b["rvr_std_error"])


@pytest.mark.slow
def test_criterion_4_best_case_optimal(tmp_path):
    r = _simulate(tmp_path, "best-case-optimal", 100)
    opt, gor, cla = (r[("cv_cv", s)] for s in ("optimal", "gordon", "classical"))
    checks = [
        opt["rvr_vs_mc_mc"] - gor["rvr_vs_mc_mc"] > 3 * _gap_se(opt, gor),
        opt["rvr_vs_mc_mc"] - cla["rvr_vs_mc_mc"] > 3 * _gap_se(opt, cla),
        gor["rvr_vs_mc_mc"] > 3 * gor["rvr_std_error"],
        cla["rvr_vs_mc_mc"] > 3 * cla["rvr_std_error"],
    ]
    report(
        4,
        all(checks),
        f"RVR optimal {opt['rvr_vs_mc_mc']:.4f}, gordon {gor['rvr_vs_mc_mc']:.4f}, "
        f"classical {cla['rvr_vs_mc_mc']:.4f}; gaps in SE units "
        f"{(opt['rvr_vs_mc_mc'] - gor['rvr_vs_mc_mc']) / _gap_se(opt, gor):.1f} and "
        f"{(opt['rvr_vs_mc_mc'] - cla['rvr_vs_mc_mc']) / _gap_se(opt, cla):.1f}",
    )


@pytest.mark.slow
def test_criterion_5_worst_case_gordon(tmp_path):
    r = _simulate(tmp_path, "worst-case-gordon", 100)
    opt, gor, cla = (r[("cv_cv", s)]["rvr_vs_mc_mc"] for s in ("optimal", "gordon", "classical"))
    report(5, gor < 0 and cla < 0 and opt >= -0.02,
           f"RVR gordon {gor:.4f}, classical {cla:.4f}, optimal {opt:.4f}")


@pytest.mark.slow
def test_criterion_6_small_sample(tmp_path):
    small = _simulate(tmp_path, "best-case-gordon", 10)
    large = _simulate(tmp_path, "best-case-gordon", 100)
    o10, g10 = (small[("cv_cv", s)]["rvr_vs_mc_mc"] for s in ("optimal", "gordon"))
    o100, g100 = (large[("cv_cv", s)]["rvr_vs_mc_mc"] for s in ("optimal", "gordon"))
    ok = abs(o10 - g10) < 0.15 and o100 >= g100 - 0.02
    report(6, ok, f"n=10: optimal {o10:.4f} vs gordon {g10:.4f}; n=100: optimal {o100:.4f} vs gordon {g100:.4f}")


@pytest.mark.slow
def test_criterion_7_acv_scaling():
    rng = np.random.default_rng(7)
    worst = 0.0
    details = []
    for i in range(3):
        structure = random_pd_structure(rng)
        for n, m in ((100, 100), (100, 400)):
            scenario = Scenario(
                "random",
                structure,
                n=n,
                m=m,
                replications=10_000,
                strategies=("optimal",),
                estimator_kinds=("cv_cv", "acv_acv"),
            )
            r = run_scenario(scenario, seed=11 + i, coefficient_mode="population")
            v0 = r.get("mc_mc", "none").variance
            ratio = (r.get("acv_acv", "optimal").variance - v0) / (r.get("cv_cv", "optimal").variance - v0)
            expected = m / (n + m)
            worst = max(worst, abs(ratio / expected - 1))
            details.append(f"{ratio:.3f}/{expected:.3f}")
    report(7, worst < 0.2, f"empirical/expected ratios {', '.join(details)}; max relative error {worst:.3f}")


def test_criterion_8_linear_controls():
    rng = np.random.default_rng(8)
    base = MomentSet.from_structure(random_pd_structure(rng))
    lin = vm.linear_controls_moments(base, 2.0)
    values = []
    for beta in (-1.0, 0.0, 1.0, 7.0):
        c = coef.linear_cv(lin, 2.0, 3.0, beta)
        values.append(vm.var_cv_cv(lin, c.alpha, c.beta, N))
    spread = (max(values) - min(values)) / min(values)

    mismatches = 0
    outside_interval_reducing = 0
    for _ in range(200):
        tau = rng.uniform(-2, 2)
        var_d = rng.uniform(0.05, 4.0)
        m = MomentSet(**{**lin.to_dict(), "var_d": var_d, "cov_ad": tau + lin.r * lin.cov_cd})
        m = vm.linear_controls_moments(m, 2.0)
        c = coef.linear_cv(m, 2.0, 3.0, 0.0)
        evaluated = vm.var_cv_cv(m, c.alpha, c.beta, N) - vm.var_mc_mc(m, N)
        scale = vm.var_mc_mc(m, N)
        sign_reduces = evaluated < -1e-12 * scale
        mismatches += vm.linear_cv_reduction_predicate(m) != sign_reduces
        if sign_reduces and not vm.in_sufficient_interval(tau, var_d):
            outside_interval_reducing += 1
    ok = spread < 1e-10 and mismatches == 0
    report(
        8,
        ok,
        f"relative spread over beta {spread:.1e}; {mismatches} predicate/sign mismatches in 200 pairs; "
        f"{outside_interval_reducing} reducing pairs lie outside the sufficient interval",
    )


@pytest.mark.slow
def test_criterion_9_application_stand_in(tmp_path):
    data = tmp_path / "synthetic.csv"
    _run_cli(["synth", "--aircraft-corr", "--rows", 1252, "--seed", 9, "--out", data])
    ok = True
    details = []
    for n in (200, 500):
        out = tmp_path / f"apply-{n}.json"
        _run_cli(["apply", "--file", data, "--n", n, "--configs", 1000, "--seed", 3, "--out", out])
        rows = json.loads(out.read_text())["result"]["combinations"]
        rvr = {r["strategy"]: r["rvr_vs_mc_mc"] for r in rows if r["kind"] == "acv_acv"}
        ok &= rvr["optimal"] > 0 and rvr["classical"] < rvr["optimal"] and rvr["gordon"] < rvr["optimal"]
        band = "inside" if 0.05 <= rvr["optimal"] <= 0.35 else "outside"
        details.append(
            f"n={n}: optimal {rvr['optimal']:.3f} ({band} advisory band), "
            f"gordon {rvr['gordon']:.3f}, classical {rvr['classical']:.3f}"
        )
    report(9, ok, "; ".join(details))


def test_criterion_10_determinism(tmp_path):
    data = tmp_path / "d.csv"
    _run_cli(["synth", "--aircraft-corr", "--rows", 300, "--seed", 4, "--out", data])
    commands = {
        "simulate": ["simulate", "--scenario", "best-case-optimal", "--reps", 300, "--seed", 1],
        "analyze": ["analyze", "--scenario", "worst-case-gordon", "--m", 50, "--linear-cv"],
        "search": ["search", "--generations", 15, "--seed", 5],
        "apply": ["apply", "--file", data, "--n", 60, "--configs", 80, "--seed", 2],
        "synth": ["synth", "--aircraft-corr", "--rows", 50, "--seed", 6],
    }
    threaded = {"simulate", "search", "apply"}
    differing = []
    for name, args in commands.items():
        blobs = []
        for run, threads in enumerate((1, 1, 3)):
            extra = ["--threads", threads] if name in threaded else []
            out = tmp_path / f"{name}-{run}.out"
            _run_cli(args + extra + ["--out", out])
            blobs.append(out.read_bytes())
        rerun = tmp_path / f"{name}-rerun.out"
        _run_cli([name, "--from-config", tmp_path / f"{name}-0.out", "--out", rerun])
        blobs.append(rerun.read_bytes())
        if len(set(blobs)) != 1:
            differing.append(name)
    report(10, not differing,
           f"{len(commands)} commands rerun at threads 1, 1, 3 and from embedded config; differing: {differing or 'none'}")


@pytest.mark.slow
def test_criterion_11_search(tmp_path):
    out = tmp_path / "search.json"
    _run_cli(["search", "--objective", "maximize", "--strategy", "optimal", "--out", out])
    result = json.loads(out.read_text())["result"]
    problem = de.SearchProblem()
    reference = de.objective_value(BUILTIN_LOWER["best-case-optimal"], problem)
    recomputed = de.objective_value(result["candidate"], problem)
    pd_ok = is_positive_definite(np.array(result["matrix"]))
    ok = pd_ok and recomputed <= reference + 1e-6 and recomputed == result["objective"]
    report(11, ok, f"found {recomputed:.7f} vs printed-matrix objective {reference:.7f}; positive definite {pd_ok}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
