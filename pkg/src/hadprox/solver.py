"""
Inexact proximal point method for ``0 in X(p) + N_Omega(p)``.

Each outer step finds ``p^{k+1}`` with

    0 in (X^{eps_k} + N_Omega)(p^{k+1}) - 2 lambda_k log_{p^{k+1}} p^k

and records a :class:`Certificate` stating which ``eps_k`` the step provably
satisfies.  ``eps_claimed`` is always the value for which the per-step
inequality

    d^2(q, p^k) - d^2(p^k, p^{k+1}) - d^2(q, p^{k+1}) + eps_k / (2 lambda_k) >= 0

holds for solutions ``q``; it is twice the enlargement level that the step
realizes, because the inclusion only yields ``-eps/lambda`` on the right.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import TOL
from .fields import (
    ConvexFunctionOracle,
    ConvexSetOracle,
    VectorFieldOracle,
    absorption_eps,
    nearest_normal,
)
from .geometry import Chart, Point, Tangent, dist, exp_map, log_map, norm, point_to_record

log = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "InnerSolverError",
    "BudgetExhausted",
    "InfeasiblePoint",
    "Schedule",
    "StopRule",
    "Certificate",
    "ProblemInstance",
    "SubproblemResult",
    "StepResult",
    "StepRecord",
    "ProxTrace",
    "POLICIES",
    "solve_subproblem",
    "residual_to_eps",
    "inexact_prox_step",
    "run_ippa",
    "solution_residual",
    "fejer_slacks",
    "fejer_monitor",
    "quasi_fejer_check",
    "step_vanishing_slack",
    "default_radius",
]

POLICIES = ("residual_ball", "value_gap")
CERTIFICATE_KINDS = ("ResidualBall", "ValueGap", "WitnessEvidence", "Exact")


class SolverError(RuntimeError):
    pass


class InnerSolverError(SolverError):
    def __init__(self, message, best_residual=math.inf, iterations=0, outer=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations
        self.outer = outer


class BudgetExhausted(SolverError):
    def __init__(self, k, spent, requested, budget):
        super().__init__(
            f"step {k}: eps {requested:.3e} on top of {spent:.3e} exceeds budget {budget:.3e}"
        )
        self.k = k
        self.spent = spent
        self.requested = requested
        self.budget = budget


class InfeasiblePoint(SolverError):
    pass


# ---------------------------------------------------------------------------
# configuration records


@dataclass(frozen=True)
class Schedule:
    """
    Regularization and inexactness schedule.

    ``lambda_rule`` is ``"constant"`` (always ``lambda_lo``) or ``"cyclic"``
    (alternating ``lambda_lo``, ``lambda_hi``).  ``eps_rule`` is ``"zero"``,
    ``"geometric"`` (``eps0 * eps_ratio**k``) or ``"constant"`` (``eps0``).
    The budget bounds the running sum of requested ``eps_k``; it defaults to
    the geometric series total, or ``2 eps0`` for the other rules.
    """

    lambda_lo: float = 1.0
    lambda_hi: float = 1.0
    lambda_rule: str = "constant"
    eps_rule: str = "geometric"
    eps0: float = 1e-2
    eps_ratio: float = 0.5
    eps_budget: float | None = None

    def __post_init__(self):
        if not 0 < self.lambda_lo <= self.lambda_hi:
            raise ValueError("need 0 < lambda_lo <= lambda_hi")
        if self.lambda_rule not in ("constant", "cyclic"):
            raise ValueError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.eps_rule not in ("zero", "geometric", "constant"):
            raise ValueError(f"unknown eps rule {self.eps_rule!r}")
        if self.eps0 < 0:
            raise ValueError("eps0 must be nonnegative")
        if self.eps_rule == "geometric" and not 0 <= self.eps_ratio < 1:
            raise ValueError("geometric eps_ratio must lie in [0, 1)")
        if self.eps_budget is not None and self.eps_budget < 0:
            raise ValueError("eps_budget must be nonnegative")

    @classmethod
    def exact(cls, lam: float = 1.0) -> "Schedule":
        return cls(lam, lam, eps_rule="zero", eps0=0.0)

    @classmethod
    def geometric(cls, eps0: float = 1e-2, lam: float = 1.0, ratio: float = 0.5) -> "Schedule":
        return cls(lam, lam, eps_rule="geometric", eps0=eps0, eps_ratio=ratio)

    @property
    def budget(self) -> float:
        if self.eps_budget is not None:
            return self.eps_budget
        if self.eps_rule == "geometric":
            return self.eps0 / (1.0 - self.eps_ratio)
        return 2.0 * self.eps0

    def lambda_of(self, k: int) -> float:
        if self.lambda_rule == "cyclic" and k % 2:
            return self.lambda_hi
        return self.lambda_lo

    def eps_of(self, k: int) -> float:
        if self.eps_rule == "zero":
            return 0.0
        if self.eps_rule == "constant":
            return self.eps0
        return self.eps0 * self.eps_ratio**k


@dataclass(frozen=True)
class StopRule:
    max_outer: int = 500
    dist_tol: float = 1e-9
    residual_tol: float = 1e-8


@dataclass(frozen=True)
class Certificate:
    kind: str
    eps_claimed: float
    residual_norm: float
    eps_membership: float = 0.0
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CERTIFICATE_KINDS:
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if self.eps_claimed < 0 or self.residual_norm < 0:
            raise ValueError("certificate values must be nonnegative")


@dataclass
class ProblemInstance:
    """A VIP instance; ``objective`` is set when ``field`` is the subdifferential of it."""

    chart: Chart
    field: VectorFieldOracle
    set: ConvexSetOracle
    objective: ConvexFunctionOracle | None = None
    reference_solution: Point | None = None
    start: Point | None = None
    lipschitz: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.field.chart != self.chart or self.set.chart != self.chart:
            raise ValueError("field, set and chart disagree")
        if self.start is None:
            self.start = self.set.project(self.chart.origin())
        if self.reference_solution is not None:
            r = solution_residual(self, self.reference_solution)
            if r > 1e-6:
                raise ValueError(f"reference solution has stationarity residual {r:.3e}")

    @property
    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "chart": {"kind": self.chart.kind, "n": self.chart.n},
            "field": self.field.descriptor,
            "set": self.set.descriptor,
            "start": point_to_record(self.start),
            "reference": None
            if self.reference_solution is None
            else point_to_record(self.reference_solution),
            "lipschitz": self.lipschitz,
        }


# ---------------------------------------------------------------------------
# residuals


def _best_residual(X, omega, p, pull):
    """Representative of ``X(p)`` and normal element minimizing ``|v + w - pull|``."""
    rays = omega.normal_rays(p)
    best = None
    for v in X(p):
        g = v - pull
        w = nearest_normal(p, rays, g)
        e = g + w
        ne = norm(e)
        if best is None or ne < best[3]:
            best = (v, w, e, ne)
    if best is None:
        raise SolverError("field returned no representatives")
    return best


def solution_residual(problem: ProblemInstance, p: Point) -> float:
    """``min_{v in X(p), w in N(p)} |v + w|``; zero exactly at solutions of the VIP."""
    if not problem.set.contains(p):
        raise InfeasiblePoint("solution residual requested outside the feasible set")
    zero = Tangent(p, np.zeros(p.chart.ops.point_shape))
    return _best_residual(problem.field, problem.set, p, zero)[3]


# ---------------------------------------------------------------------------
# inner solver


@dataclass
class SubproblemResult:
    point: Point
    v: Tangent
    w: Tangent
    residual: Tangent
    residual_norm: float
    iterations: int
    step: float


def solve_subproblem(
    X: VectorFieldOracle,
    omega: ConvexSetOracle,
    anchor: Point,
    lam: float,
    inner_tol: float,
    max_inner: int = 10_000,
    lipschitz: float = 1.0,
    start: Point | None = None,
) -> SubproblemResult:
    """
    Solve ``0 in X(p) + N_omega(p) - 2 lam log_p(anchor)`` to residual ``inner_tol``.

    Projected geodesic fixed-point iteration
    ``p <- P_omega(exp_p(tau (2 lam log_p anchor - v)))`` with
    ``tau = 1/(2 lam + lipschitz)``; ``tau`` is halved (at most 50 times)
    whenever the step length grows, and the iteration restarts from the best
    point seen so far.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if inner_tol <= 0:
        raise ValueError("inner_tol must be positive")
    if not omega.contains(anchor):
        raise InfeasiblePoint("anchor outside the feasible set")
    tau = 1.0 / (2.0 * lam + lipschitz)
    halvings = 0
    p = anchor if start is None else omega.project(start)
    prev_step = math.inf
    best = None
    for it in range(max_inner + 1):
        pull = 2.0 * lam * log_map(p, anchor)
        v, w, e, ne = _best_residual(X, omega, p, pull)
        if best is None or ne < best[-1]:
            best = (p, v, w, e, ne)
        # always move at least once so a loose tolerance cannot stall at the anchor
        if ne <= inner_tol and (it > 0 or start is not None):
            return SubproblemResult(p, v, w, e, ne, it, tau)
        if it == max_inner:
            break
        p_new = omega.project(exp_map(p, tau * (pull - v)))
        step = dist(p, p_new)
        if step > prev_step and step > 1e-13 and halvings < 50:
            tau *= 0.5
            halvings += 1
            p = best[0]
            prev_step = math.inf
            continue
        prev_step = step
        p = p_new
    raise InnerSolverError(
        f"inner solver stopped after {max_inner} iterations with residual {best[-1]:.3e} "
        f"(target {inner_tol:.3e})",
        best_residual=best[-1],
        iterations=max_inner,
    )


# ---------------------------------------------------------------------------
# certificates and outer steps


def residual_to_eps(
    e_norm: float, lam: float, R: float | None = None, modulus: float | None = None
) -> float:
    """
    Certified ``eps_k`` for a step whose inclusion residual has norm ``e_norm``.

    With a solution-distance bound ``R`` the error term satisfies
    ``<e, log_p q> >= -R |e|``, giving ``2 R |e|``.  When the field has a
    positive ``modulus`` the error can instead be absorbed into ``X^eps`` with
    ``eps = |e|^2/(4 rho)`` (see :func:`absorption_eps`), which certifies
    ``|e|^2/(2 rho)`` independently of ``R``.  The smaller value is returned.
    """
    if e_norm < 0:
        raise ValueError("residual norm must be nonnegative")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if R is None and not modulus:
        raise ValueError("need a radius R or a positive modulus")
    if R is not None and R <= 0:
        raise ValueError("R must be positive")
    out = math.inf
    if R is not None:
        out = 2.0 * e_norm * R
    if modulus:
        out = min(out, 2.0 * absorption_eps(e_norm, modulus))
    return out


def default_radius(problem: ProblemInstance, p0: Point) -> float:
    return 2.0 * dist(p0, problem.set.project(p0)) + 10.0


@dataclass
class StepResult:
    point: Point
    certificate: Certificate
    sub: SubproblemResult
    lam: float
    eps_allowed: float


def inexact_prox_step(
    problem: ProblemInstance,
    anchor: Point,
    k: int,
    schedule: Schedule,
    policy: str = "residual_ball",
    R: float | None = None,
    spent: float = 0.0,
    max_inner: int = 10_000,
) -> StepResult:
    """
    One outer step from ``anchor = p^k``.

    The inner tolerance is chosen so that the certificate of ``policy`` meets
    ``eps_of(k)``.  ``spent`` is the running sum of earlier ``eps_of`` values;
    a step that would push it past the budget raises :class:`BudgetExhausted`.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; witness evidence never certifies a step")
    lam = schedule.lambda_of(k)
    eps_k = schedule.eps_of(k)
    budget = schedule.budget
    if spent + eps_k > budget * (1.0 + 1e-12) + 1e-300:
        raise BudgetExhausted(k, spent, eps_k, budget)
    if R is None:
        R = default_radius(problem, anchor)
    rho = problem.field.modulus

    if eps_k == 0.0:
        tol = TOL.exact_inner
    elif policy == "residual_ball":
        tol = eps_k / (2.0 * R)
        if rho > 0:
            tol = max(tol, math.sqrt(2.0 * rho * eps_k))
    else:
        f = problem.objective
        if f is None or f.strong_convexity <= 0:
            raise ValueError("value_gap needs an objective with positive strong convexity")
        tol = math.sqrt(2.0 * f.strong_convexity * eps_k)

    sub = solve_subproblem(
        problem.field, problem.set, anchor, lam, tol, max_inner, problem.lipschitz
    )
    e = sub.residual_norm
    if eps_k == 0.0:
        cert = Certificate("Exact", 0.0, e, 0.0, {"inner_tol": tol})
    elif policy == "residual_ball":
        radius_eps = 2.0 * R * e
        strong_eps = 2.0 * absorption_eps(e, rho) if rho > 0 else math.inf
        if strong_eps < radius_eps:
            cert = Certificate(
                "ResidualBall", strong_eps, e, strong_eps / 2.0,
                {"mode": "strong", "modulus": rho},
            )
        else:
            cert = Certificate(
                "ResidualBall", radius_eps, e, radius_eps / 2.0, {"mode": "radius", "R": R}
            )
    else:
        sigma = problem.objective.strong_convexity
        gap = e**2 / (4.0 * sigma)
        cert = Certificate("ValueGap", 2.0 * gap, e, gap, {"gap_bound": gap, "sigma": sigma})
    if cert.eps_claimed > eps_k * (1.0 + 1e-9):
        raise SolverError(f"certificate {cert.eps_claimed:.3e} exceeds eps_k {eps_k:.3e}")
    return StepResult(sub.point, cert, sub, lam, eps_k)


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class StepRecord:
    k: int
    lam: float
    eps_allowed: float
    certificate: Certificate
    inner_iters: int
    dist_to_ref: float | None = None
    slack_main: float | None = None
    slack_fejer: float | None = None


@dataclass
class ProxTrace:
    """``points[k]`` is ``p^k``; ``steps[k]`` records the move ``p^k -> p^{k+1}``."""

    points: list[Point]
    steps: list[StepRecord]
    lambda_lo: float
    R: float
    reference: Point | None = None
    converged: bool = False
    reason: str = ""
    final_residual: float = math.nan
    budget_used: float = 0.0

    @property
    def eps_certified(self) -> list[float]:
        return [s.certificate.eps_claimed for s in self.steps]

    @property
    def lambdas(self) -> list[float]:
        return [s.lam for s in self.steps]

    @property
    def final(self) -> Point:
        return self.points[-1]

    def summary(self) -> dict:
        final_dist = None
        if self.reference is not None:
            final_dist = dist(self.reference, self.final)
        return {
            "iterations": len(self.steps),
            "final_residual": self.final_residual,
            "final_dist": final_dist,
            "budget_used": self.budget_used,
            "eps_certified_total": float(sum(self.eps_certified)),
            "converged": self.converged,
            "reason": self.reason,
        }


def run_ippa(
    problem: ProblemInstance,
    schedule: Schedule,
    stop: StopRule = StopRule(),
    policy: str = "residual_ball",
    R: float | None = None,
    max_inner: int = 10_000,
) -> ProxTrace:
    p = problem.start
    if not problem.set.contains(p):
        raise InfeasiblePoint("starting point outside the feasible set")
    if R is None:
        R = default_radius(problem, p)
    ref = problem.reference_solution
    trace = ProxTrace([p], [], schedule.lambda_lo, R, ref)
    spent = 0.0
    for k in range(stop.max_outer):
        res = solution_residual(problem, p)
        trace.final_residual = res
        if res <= stop.residual_tol:
            trace.converged, trace.reason = True, "residual"
            break
        try:
            step = inexact_prox_step(problem, p, k, schedule, policy, R, spent, max_inner)
        except InnerSolverError as exc:
            exc.outer = k
            raise
        spent += step.eps_allowed
        trace.budget_used = spent
        q = step.point
        rec = StepRecord(k, step.lam, step.eps_allowed, step.certificate, step.sub.iterations)
        if ref is not None:
            rec.dist_to_ref = dist(ref, q)
            (rec.slack_main, rec.slack_fejer), = fejer_slacks(
                [p, q], [step.lam], [step.certificate.eps_claimed], ref, schedule.lambda_lo
            )
        trace.steps.append(rec)
        trace.points.append(q)
        moved = dist(p, q)
        p = q
        log.debug("k=%d moved=%.3e eps=%.3e", k, moved, step.certificate.eps_claimed)
        # a short step only signals stationarity when the inclusion was solved tightly
        if moved <= stop.dist_tol and step.certificate.residual_norm <= stop.residual_tol:
            trace.final_residual = solution_residual(problem, p)
            trace.converged, trace.reason = True, "step"
            break
    else:
        trace.final_residual = solution_residual(problem, p)
        trace.reason = "max_outer"
    return trace


# ---------------------------------------------------------------------------
# convergence monitors


def fejer_slacks(
    points: Sequence[Point],
    lambdas: Sequence[float],
    eps: Sequence[float],
    q_ref: Point,
    lambda_lo: float,
) -> list[tuple[float, float]]:
    """Per-step ``(slack_main, slack_fejer)`` of the proximal inequalities at ``q_ref``."""
    if len(points) != len(lambdas) + 1 or len(lambdas) != len(eps):
        raise ValueError("need one more point than steps")
    out = []
    for k, (lam, e) in enumerate(zip(lambdas, eps)):
        a, b = points[k], points[k + 1]
        dqa = dist(q_ref, a) ** 2
        dqb = dist(q_ref, b) ** 2
        main = dqa - dist(a, b) ** 2 - dqb + e / (2.0 * lam)
        fej = dqa + e / lambda_lo - dqb
        out.append((main, fej))
    return out


def fejer_monitor(trace: ProxTrace, q_ref: Point | None, schedule: Schedule) -> list[tuple[float, float]]:
    if q_ref is None:
        raise ValueError("the Fejer monitor needs a reference solution")
    return fejer_slacks(trace.points, trace.lambdas, trace.eps_certified, q_ref, schedule.lambda_lo)


def quasi_fejer_check(
    trace: ProxTrace | Sequence[Point],
    W: Sequence[Point],
    eps_sequence: Sequence[float],
    R: float | None = None,
    tol: float = TOL.exact_monitor,
) -> bool:
    """
    ``d^2(q, p^{k+1}) <= d^2(q, p^k) + eps'_k`` for all ``q`` in ``W`` and all ``k``,
    plus boundedness: every iterate within ``R`` of ``p^0`` (when ``R`` is given).
    """
    points = trace.points if isinstance(trace, ProxTrace) else list(trace)
    if R is None and isinstance(trace, ProxTrace):
        R = trace.R
    if len(eps_sequence) < len(points) - 1:
        raise ValueError("eps sequence shorter than the trace")
    if any(e < 0 for e in eps_sequence) or not math.isfinite(sum(eps_sequence)):
        raise ValueError("eps sequence must be nonnegative with a finite sum")
    for q in W:
        d2 = [dist(q, p) ** 2 for p in points]
        for k in range(len(points) - 1):
            if d2[k + 1] > d2[k] + eps_sequence[k] + tol:
                return False
    if R is not None:
        if max(dist(points[0], p) for p in points) > R:
            return False
    return True


def step_vanishing_slack(
    points: Sequence[Point], eps: Sequence[float], q_ref: Point, lambda_lo: float
) -> float:
    """``d^2(q, p^0) + sum eps_k / lambda_lo - sum d^2(p^k, p^{k+1})``; nonnegative on valid traces."""
    moves = sum(dist(points[k], points[k + 1]) ** 2 for k in range(len(points) - 1))
    return dist(q_ref, points[0]) ** 2 + sum(eps) / lambda_lo - moves
