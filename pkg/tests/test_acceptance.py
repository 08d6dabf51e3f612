"""Exit criteria of the build, each at its stated tolerance and runtime."""

import json
import time

import numpy as np
import pytest

from hadprox.cli import EXIT_BUDGET, main
from hadprox.fields import WholeSet, grad_dist_sq_field
from hadprox.geometry import dist, geodesic_point, random_points
from hadprox.problems import build_benchmarks
from hadprox.solver import (
    BudgetExhausted,
    Schedule,
    StopRule,
    fejer_monitor,
    run_ippa,
    solution_residual,
    solve_subproblem,
    step_vanishing_slack,
)
from hadprox.verify import ACCEPTANCE_CHARTS, DEFAULT_EPS_GRID, verify_algebra, verify_enlargement, verify_geometry

pytestmark = pytest.mark.acceptance

EXACT = Schedule.exact(1.0)
INEXACT = Schedule.geometric(1e-2, 1.0, 0.5)
STOP = StopRule(max_outer=500)


@pytest.fixture(scope="module")
def benchmarks():
    return build_benchmarks()


@pytest.fixture(scope="module")
def exact_runs(benchmarks):
    t0 = time.perf_counter()
    runs = {name: run_ippa(spec.instance, EXACT, STOP) for name, spec in benchmarks.items()}
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def inexact_runs(benchmarks):
    return {name: run_ippa(spec.instance, INEXACT, STOP, "residual_ball") for name, spec in benchmarks.items()}


def test_1_geometry_suite(acceptance_line):
    t0 = time.perf_counter()
    reports = [verify_geometry(chart, samples=10_000, seed=0) for chart in ACCEPTANCE_CHARTS]
    elapsed = time.perf_counter() - t0
    failed = [c.line() for r in reports for c in r.failures()]
    ok = not failed and elapsed <= 30.0
    acceptance_line(1, ok, f"{len(reports)} charts x 1e4 samples in {elapsed:.1f}s {failed or ''}")
    assert not failed, failed
    assert elapsed <= 30.0


def _enlargement_reports():
    t0 = time.perf_counter()
    reports = [verify_enlargement(chart, DEFAULT_EPS_GRID, seed=1, cases=8, witnesses=256) for chart in ACCEPTANCE_CHARTS]
    return reports, time.perf_counter() - t0


@pytest.fixture(scope="module")
def enlargement_reports():
    return _enlargement_reports()


def _select(reports, keys):
    return [c for r in reports for c in r.checks if any(k in c.name for k in keys)]


def test_2_enlargement_ball(enlargement_reports, acceptance_line):
    reports, elapsed = enlargement_reports
    checks = _select(reports, ("enlargement ball evidence", "enlargement x1.01 refuted"))
    flat_refuted = [c for c in checks if "refuted" in c.name and c.required]
    assert len(flat_refuted) == 4 * len(DEFAULT_EPS_GRID)
    bad = [c.line() for c in checks if c.required and not c.passed]
    ok = not bad and elapsed <= 60.0
    worst = min(c.value for c in checks if "evidence" in c.name)
    acceptance_line(2, ok, f"min ball slack {worst:.2e}, flat refutations {len(flat_refuted)}, {elapsed:.1f}s {bad or ''}")
    assert not bad, bad
    assert elapsed <= 60.0


def test_3_eps_subdifferential(enlargement_reports, acceptance_line):
    reports, _ = enlargement_reports
    checks = _select(reports, ("eps-subdifferential evidence", "eps-subdiff inside enlargement", "eps-subdiff x1.01 refuted"))
    assert len([c for c in checks if "refuted" in c.name and c.required]) == 4 * len(DEFAULT_EPS_GRID)
    bad = [c.line() for c in checks if c.required and not c.passed]
    worst = min(c.value for c in checks if "refuted" not in c.name)
    acceptance_line(3, not bad, f"min slack {worst:.2e} over {len(checks)} checks {bad or ''}")
    assert not bad, bad


def test_4_enlargement_algebra(acceptance_line):
    rep = verify_algebra(list(ACCEPTANCE_CHARTS), cases=1000, seed=0)
    bad = [c.line() for c in rep.failures()]
    acceptance_line(4, rep.passed, f"1000 cases, {len(rep.checks)} checks {bad or ''}")
    assert rep.passed, bad


def test_5_exact_convergence(benchmarks, exact_runs, acceptance_line):
    runs, elapsed = exact_runs
    problems = []
    for name, trace in runs.items():
        spec = benchmarks[name]
        if spec.set_valued:
            reached = solution_residual(spec.instance, trace.final) <= 1e-6
        else:
            reached = dist(trace.final, spec.oracle_solution) <= 1e-6
        slacks = fejer_monitor(trace, spec.oracle_solution, EXACT)
        worst = min(min(s) for s in slacks) if slacks else 0.0
        if not (trace.converged and reached and len(trace.steps) <= 500 and worst >= -1e-9):
            problems.append(f"{name}: steps={len(trace.steps)} reached={reached} slack={worst:.2e}")
    ok = not problems and elapsed <= 120.0
    iters = max(len(t.steps) for t in runs.values())
    acceptance_line(5, ok, f"{len(runs)} benchmarks, max {iters} iterations, {elapsed:.1f}s {problems or ''}")
    assert not problems, problems
    assert elapsed <= 120.0


def test_6_inexact_convergence(benchmarks, inexact_runs, tmp_path, acceptance_line):
    problems = []
    for name, trace in inexact_runs.items():
        spec = benchmarks[name]
        d = dist(trace.final, spec.oracle_solution)
        if spec.set_valued:
            d = solution_residual(spec.instance, trace.final)
        worst = min(s.slack_main for s in trace.steps)
        total = sum(trace.eps_certified)
        kinds = {s.certificate.kind for s in trace.steps}
        if not (d <= 1e-4 and worst >= -1e-7 and total <= INEXACT.budget and kinds == {"ResidualBall"}):
            problems.append(f"{name}: dist={d:.2e} slack={worst:.2e} eps_total={total:.2e} {kinds}")

    eps0 = 0.1
    guard_k = []
    for name, spec in benchmarks.items():
        with pytest.raises(BudgetExhausted) as info:
            run_ippa(spec.instance, Schedule(eps_rule="constant", eps0=eps0), STOP)
        guard_k.append(info.value.k)
    cfg = tmp_path / "nonsummable.json"
    cfg.write_text(json.dumps({
        "benchmark": "frechet_hyperboloid",
        "schedule": {"eps_rule": "constant", "eps0": eps0},
        "out": str(tmp_path / "t.csv"),
    }))
    code = main(["run", "--config", str(cfg)])
    guard_ok = max(guard_k) < 2 / eps0 and code == EXIT_BUDGET
    if not guard_ok:
        problems.append(f"budget guard: k={guard_k} exit={code}")
    acceptance_line(6, not problems, f"{len(inexact_runs)} benchmarks, guard at k={max(guard_k)} exit {code} {problems or ''}")
    assert not problems, problems


def test_7_closed_form_subproblem(acceptance_line):
    rng = np.random.default_rng(7)
    worst = 0.0
    for chart in ACCEPTANCE_CHARTS:
        for _ in range(20):
            anchor, qbar = random_points(chart, rng, 2)
            lam = float(rng.uniform(0.1, 10.0))
            r = solve_subproblem(grad_dist_sq_field(qbar), WholeSet(chart), anchor, lam, 1e-12, lipschitz=2.0)
            worst = max(worst, dist(r.point, geodesic_point(anchor, qbar, 1.0 / (1.0 + lam))))
    acceptance_line(7, worst <= 1e-8, f"max distance to closed form {worst:.2e} over {20 * len(ACCEPTANCE_CHARTS)} cases")
    assert worst <= 1e-8


def test_8_step_vanishing(benchmarks, exact_runs, inexact_runs, acceptance_line):
    worst = np.inf
    for runs, sched in ((exact_runs[0], EXACT), (inexact_runs, INEXACT)):
        for name, trace in runs.items():
            q = benchmarks[name].oracle_solution
            worst = min(worst, step_vanishing_slack(trace.points, trace.eps_certified, q, sched.lambda_lo))
    # floating point allowance only; the bound itself is exact
    ok = worst >= -1e-12
    acceptance_line(8, ok, f"min slack {worst:.3e} over {2 * len(benchmarks)} certified traces")
    assert ok
