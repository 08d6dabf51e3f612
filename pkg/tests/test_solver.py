import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hadprox.fields import (
    BallSet,
    WholeSet,
    dist_sq_function,
    grad_dist_sq_field,
    skew_plus_mu_field,
)
from hadprox.geometry import Chart, dist, geodesic_point, random_points
from hadprox.problems import build_benchmarks
from hadprox.solver import (
    BudgetExhausted,
    Certificate,
    InfeasiblePoint,
    InnerSolverError,
    ProblemInstance,
    Schedule,
    StopRule,
    fejer_monitor,
    fejer_slacks,
    inexact_prox_step,
    quasi_fejer_check,
    residual_to_eps,
    run_ippa,
    solution_residual,
    solve_subproblem,
    step_vanishing_slack,
)

E1 = Chart("euclidean", 1)
E2 = Chart("euclidean", 2)
CHARTS = [E2, Chart("euclidean", 4), Chart("hyperboloid", 2), Chart("hyperboloid", 4), Chart("spd", 2), Chart("spd", 3)]


@pytest.fixture(scope="module")
def benchmarks():
    return build_benchmarks()


def line_problem(start=0.0):
    q = E1.point([1.0])
    return ProblemInstance(
        E1, grad_dist_sq_field(q), WholeSet(E1), dist_sq_function(q), q, E1.point([start]), 2.0
    )


# ---------------------------------------------------------------- schedules and certificates


def test_schedule_defaults_and_invariants():
    s = Schedule()
    assert [s.eps_of(k) for k in range(3)] == [1e-2, 5e-3, 2.5e-3]
    assert s.budget == pytest.approx(2e-2)
    assert Schedule(eps_rule="constant", eps0=0.1).budget == pytest.approx(0.2)
    cyc = Schedule(0.5, 2.0, "cyclic")
    assert [cyc.lambda_of(k) for k in range(4)] == [0.5, 2.0, 0.5, 2.0]
    for bad in (dict(lambda_lo=2.0, lambda_hi=1.0), dict(lambda_lo=0.0), dict(eps_rule="x"),
                dict(eps0=-1.0), dict(eps_ratio=1.0), dict(eps_budget=-1.0)):
        with pytest.raises(ValueError):
            Schedule(**bad)
    with pytest.raises(ValueError):
        Certificate("Guess", 0.0, 0.0)
    with pytest.raises(ValueError):
        Certificate("Exact", -1.0, 0.0)


def test_residual_to_eps_examples():
    assert residual_to_eps(0.0, 1.0, 2.0) == 0.0
    assert residual_to_eps(0.4, 1.0, 2.0) == pytest.approx(1.6)
    # strong variant: membership level e^2/(4 rho), certified at twice that
    assert residual_to_eps(0.4, 1.0, modulus=2.0) == pytest.approx(2 * 0.4**2 / 8)
    assert residual_to_eps(0.4, 1.0, 100.0, modulus=2.0) == pytest.approx(0.04)
    for args in ((0.4, 1.0, 0.0), (0.4, 1.0, -1.0), (-0.1, 1.0, 1.0), (0.4, 0.0, 1.0), (0.4, 1.0)):
        with pytest.raises(ValueError):
            residual_to_eps(*args)


# ---------------------------------------------------------------- subproblem


def test_subproblem_one_dimensional_example():
    p = line_problem()
    r = solve_subproblem(p.field, p.set, E1.point([0.0]), 1.0, 1e-12, lipschitz=2.0)
    assert r.point.coords[0] == pytest.approx(0.5, abs=1e-12)
    assert r.residual_norm <= 1e-12


@settings(max_examples=30, deadline=None)
@given(chart=st.sampled_from(CHARTS), seed=st.integers(0, 2**32 - 1), lam=st.floats(0.1, 10.0))
def test_subproblem_matches_closed_form_geodesic_point(chart, seed, lam):
    rng = np.random.default_rng(seed)
    anchor, qbar = random_points(chart, rng, 2)
    r = solve_subproblem(grad_dist_sq_field(qbar), WholeSet(chart), anchor, lam, 1e-12, lipschitz=2.0)
    assert dist(r.point, geodesic_point(anchor, qbar, 1.0 / (1.0 + lam))) <= 1e-8


def test_subproblem_pins_to_anchor_for_large_lambda():
    B = BallSet(E2.origin(), 1.0)
    anchor = E2.point([0.0, -0.7])
    r = solve_subproblem(grad_dist_sq_field(E2.point([3.0, 4.0])), B, anchor, 1e4, 1e-10, lipschitz=2.0)
    assert dist(r.point, anchor) <= 1e-3


def test_subproblem_errors():
    X = grad_dist_sq_field(E2.point([3.0, 4.0]))
    B = BallSet(E2.origin(), 1.0)
    with pytest.raises(InfeasiblePoint):
        solve_subproblem(X, B, E2.point([2.0, 0.0]), 1.0, 1e-8)
    with pytest.raises(ValueError):
        solve_subproblem(X, B, E2.origin(), 0.0, 1e-8)
    with pytest.raises(ValueError):
        solve_subproblem(X, B, E2.origin(), 1.0, 0.0)
    with pytest.raises(InnerSolverError) as info:
        solve_subproblem(X, WholeSet(E2), E2.origin(), 1.0, 1e-14, max_inner=2)
    assert info.value.best_residual > 0 and info.value.iterations == 2


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_subproblem_well_defined_on_benchmarks(benchmarks, lam):
    for spec in benchmarks.values():
        inst = spec.instance
        r = solve_subproblem(inst.field, inst.set, inst.start, lam, 1e-10, 10_000, inst.lipschitz)
        assert r.residual_norm <= 1e-10, spec.name


# ---------------------------------------------------------------- outer steps


def test_exact_steps_follow_affine_recursion():
    trace = run_ippa(line_problem(), Schedule.exact(), StopRule(max_outer=20, dist_tol=0.0, residual_tol=0.0))
    xs = [p.coords[0] for p in trace.points]
    assert len(xs) == 21
    for k, x in enumerate(xs):
        assert x == pytest.approx(1.0 - 2.0**-k, abs=1e-12)
    assert all(s.certificate.kind == "Exact" for s in trace.steps)


def test_inexact_step_certificate_within_allowance(benchmarks):
    spec = benchmarks["frechet_spd"]
    sched = Schedule.geometric()
    for policy in ("residual_ball", "value_gap"):
        step = inexact_prox_step(spec.instance, spec.instance.start, 0, sched, policy)
        assert step.certificate.eps_claimed <= sched.eps_of(0)
        assert step.certificate.kind in ("ResidualBall", "ValueGap")
        assert step.certificate.eps_membership == pytest.approx(step.certificate.eps_claimed / 2)


def test_inexact_step_errors(benchmarks):
    spec = benchmarks["skew_vip"]
    sched = Schedule.geometric()
    with pytest.raises(ValueError):
        inexact_prox_step(spec.instance, spec.instance.start, 0, sched, "witness")
    with pytest.raises(ValueError):
        inexact_prox_step(spec.instance, spec.instance.start, 0, sched, "value_gap")
    with pytest.raises(BudgetExhausted):
        inexact_prox_step(spec.instance, spec.instance.start, 0, Schedule(eps_budget=0.0))
    with pytest.raises(BudgetExhausted) as info:
        inexact_prox_step(spec.instance, spec.instance.start, 2, Schedule(eps_rule="constant", eps0=0.1), spent=0.2)
    assert info.value.k == 2


def test_constant_schedule_exhausts_budget(benchmarks):
    spec = benchmarks["projection_euclidean"]
    with pytest.raises(BudgetExhausted) as info:
        run_ippa(spec.instance, Schedule(eps_rule="constant", eps0=0.1))
    assert info.value.k == 2


# ---------------------------------------------------------------- run_ippa examples


def test_projection_limit():
    B = BallSet(E2.origin(), 1.0)
    qbar = E2.point([3.0, 4.0])
    inst = ProblemInstance(E2, grad_dist_sq_field(qbar), B, dist_sq_function(qbar), lipschitz=2.0)
    trace = run_ippa(inst, Schedule.exact())
    assert trace.converged
    assert np.allclose(trace.final.coords, [0.6, 0.8], atol=1e-8)


def test_karcher_midpoint_and_skew_limits(benchmarks):
    for name in ("karcher_spd_midpoint", "skew_vip"):
        spec = benchmarks[name]
        trace = run_ippa(spec.instance, Schedule.exact())
        assert trace.converged, name
        assert dist(trace.final, spec.oracle_solution) <= 1e-6
        assert solution_residual(spec.instance, trace.final) <= 1e-8


def test_run_errors(benchmarks):
    spec = benchmarks["projection_euclidean"]
    inst = spec.instance
    bad = ProblemInstance(inst.chart, inst.field, inst.set, inst.objective, None, E2.point([0.0, 0.0]))
    bad.start = E2.point([2.0, 2.0])
    with pytest.raises(InfeasiblePoint):
        run_ippa(bad, Schedule.exact())
    with pytest.raises(InnerSolverError) as info:
        run_ippa(benchmarks["frechet_spd"].instance, Schedule.exact(), max_inner=1)
    assert info.value.outer == 0


def test_problem_instance_rejects_bad_reference():
    with pytest.raises(ValueError):
        ProblemInstance(E2, grad_dist_sq_field(E2.point([1.0, 0.0])), WholeSet(E2), reference_solution=E2.origin())
    with pytest.raises(ValueError):
        ProblemInstance(E2, grad_dist_sq_field(E2.origin()), WholeSet(Chart("euclidean", 3)))


def test_stationary_start(benchmarks):
    spec = benchmarks["projection_euclidean"]
    inst = spec.instance
    fixed = ProblemInstance(inst.chart, inst.field, inst.set, inst.objective, spec.oracle_solution, spec.oracle_solution, 2.0)
    trace = run_ippa(fixed, Schedule.geometric())
    assert trace.converged and trace.steps == []
    q = spec.oracle_solution
    slacks = fejer_slacks([q, q, q], [1.0, 2.0], [0.1, 0.05], q, 1.0)
    assert slacks == [(0.1 / 2.0, 0.1), (0.05 / 4.0, 0.05)]


# ---------------------------------------------------------------- solution residual


def test_solution_residual_examples(benchmarks):
    qbar = E2.point([3.0, 4.0])
    free = ProblemInstance(E2, grad_dist_sq_field(qbar), WholeSet(E2))
    assert solution_residual(free, qbar) == 0.0
    spec = benchmarks["projection_euclidean"]
    assert solution_residual(spec.instance, E2.point([0.6, 0.8])) <= 1e-10
    assert solution_residual(spec.instance, E2.point([0.0, 1.0])) > 0.1
    with pytest.raises(InfeasiblePoint):
        solution_residual(spec.instance, qbar)
    for s in benchmarks.values():
        off = geodesic_point(s.oracle_solution, s.instance.start, 0.5)
        if s.set_valued:
            continue
        assert solution_residual(s.instance, off) > 1e-4, s.name


# ---------------------------------------------------------------- monitors


def test_exact_traces_are_fejer_monotone(benchmarks):
    sched = Schedule.exact()
    for spec in benchmarks.values():
        trace = run_ippa(spec.instance, sched)
        q = spec.oracle_solution
        slacks = fejer_monitor(trace, q, sched)
        assert min(min(s) for s in slacks) >= -1e-9, spec.name
        d = [dist(q, p) for p in trace.points]
        assert all(b <= a + 1e-9 for a, b in zip(d, d[1:])), spec.name
        assert quasi_fejer_check(trace, [q], [0.0] * len(trace.steps))
        assert step_vanishing_slack(trace.points, trace.eps_certified, q, sched.lambda_lo) >= -1e-9


def test_fejer_monitor_needs_reference(benchmarks):
    trace = run_ippa(line_problem(), Schedule.exact(), StopRule(max_outer=3))
    with pytest.raises(ValueError):
        fejer_monitor(trace, None, Schedule.exact())
    with pytest.raises(ValueError):
        fejer_slacks(trace.points, [1.0], [0.0], E1.origin(), 1.0)


def test_over_reported_eps_is_flagged():
    # a rotation field is monotone with modulus 0, so the exact step makes slack_main vanish
    X = skew_plus_mu_field(0.0)
    a, q = E2.point([1.0, 0.0]), E2.origin()
    lam, R = 1.0, 2.0
    exact = solve_subproblem(X, WholeSet(E2), a, lam, 1e-14)
    (s0, _), = fejer_slacks([a, exact.point], [lam], [0.0], q, lam)
    assert abs(s0) <= 1e-12
    direction = exact.point.coords - (a.coords - exact.point.coords)
    direction /= np.linalg.norm(direction)
    b = E2.point(exact.point.coords + 1e-3 * direction)
    M = np.array([[0.0, 1.0], [-1.0, 0.0]]) + 2.0 * lam * np.eye(2)
    e_norm = np.linalg.norm(M @ (b.coords - exact.point.coords))
    honest = residual_to_eps(e_norm, lam, R)
    (good, _), = fejer_slacks([a, b], [lam], [honest], q, lam)
    (bad, _), = fejer_slacks([a, b], [lam], [residual_to_eps(e_norm / 10.0, lam, R)], q, lam)
    assert good >= -1e-12
    assert bad < -1e-4


def test_quasi_fejer_examples():
    p = E2.point([1.0, 1.0])
    assert quasi_fejer_check([p] * 5, [E2.origin(), E2.point([3.0, 0.0])], [0.0] * 4)
    doubling = [E1.point([2.0**k]) for k in range(6)]
    assert not quasi_fejer_check(doubling, [E1.origin()], [0.0] * 5)
    assert not quasi_fejer_check(doubling, [E1.origin()], [1e3] * 5, R=10.0)
    with pytest.raises(ValueError):
        quasi_fejer_check(doubling, [E1.origin()], [0.0] * 2)
    with pytest.raises(ValueError):
        quasi_fejer_check(doubling, [E1.origin()], [-1.0] * 5)


def test_inexact_run_is_certified(benchmarks):
    sched = Schedule.geometric()
    for name in ("projection_hyperboloid", "frechet_spd", "skew_vip"):
        spec = benchmarks[name]
        trace = run_ippa(spec.instance, sched)
        assert trace.converged
        assert dist(trace.final, spec.oracle_solution) <= 1e-4
        assert min(s.slack_main for s in trace.steps) >= -1e-7
        assert sum(trace.eps_certified) <= sched.budget
        assert step_vanishing_slack(trace.points, trace.eps_certified, spec.oracle_solution, 1.0) >= 0
        s = trace.summary()
        assert set(s) >= {"iterations", "final_residual", "final_dist", "budget_used"}
        assert math.isfinite(s["final_residual"])
