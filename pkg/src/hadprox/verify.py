"""
Numerical verification suites behind ``hadprox verify-geometry`` and
``hadprox verify-enlargement``.

Each suite returns a :class:`Report` of named checks.  Failing checks make
the report fail; informational checks (``required=False``) only annotate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import TOL
from .fields import (
    DEFAULT_LINE_TS,
    WitnessSet,
    dist_sq_function,
    enlarged_ball_element,
    enlargement_slack,
    eps_subdiff_slack,
    eps_subgrad_ball_element,
    field_scale,
    field_sum,
    grad_dist_sq_field,
    line_search_minimum,
    line_witnesses,
    monotone_slack,
    random_witnesses,
    _pairing,
)
from .geometry import (
    Chart,
    InvariantViolation,
    Point,
    Tangent,
    comparison_slacks_array,
    exp_map,
    inner,
    log_map,
    random_point_array,
    random_points,
    random_tangent,
    random_tangent_array,
)

__all__ = [
    "CheckResult",
    "Report",
    "DEFAULT_EPS_GRID",
    "ACCEPTANCE_CHARTS",
    "verify_geometry",
    "verify_enlargement",
    "verify_algebra",
    "check_points_on_chart",
]

DEFAULT_EPS_GRID = (0.125, 0.5, 2.0)
ACCEPTANCE_CHARTS = tuple(
    [Chart("euclidean", n) for n in (2, 3, 4, 5)]
    + [Chart("hyperboloid", n) for n in (2, 3, 4)]
    + [Chart("spd", n) for n in (2, 3)]
)
INFLATION = 1.01
MAX_LINE_DISTANCE = 8.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    note: str = ""
    required: bool = True

    def line(self) -> str:
        status = "ok" if self.passed else ("FAIL" if self.required else "info")
        extra = f"  {self.note}" if self.note else ""
        return f"  {status:4s} {self.name:36s} value={self.value: .3e} tol={self.tolerance:.1e}{extra}"


@dataclass
class Report:
    title: str
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, name, passed, value, tolerance, note="", required=True):
        self.checks.append(CheckResult(name, bool(passed), float(value), tolerance, note, required))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.required and not c.passed]

    def find(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def text(self) -> str:
        head = f"{self.title}: {'PASS' if self.passed else 'FAIL'}"
        return "\n".join([head] + [c.line() for c in self.checks])


# ---------------------------------------------------------------------------
# geometry


def _corrupt(chart: Chart, x: np.ndarray) -> np.ndarray:
    """A point that violates the chart invariants (self-test only)."""
    x = np.array(x, dtype=float, copy=True)
    if chart.kind == "hyperboloid":
        x[0] *= 1.01
    elif chart.kind == "spd":
        x = -x
    else:
        x[0] = np.nan
    return x


def check_points_on_chart(chart: Chart, xs: np.ndarray) -> None:
    """Raise :class:`InvariantViolation` if any row of ``xs`` is not a valid point."""
    ops = chart.ops
    bad = ~np.all(np.isfinite(xs.reshape(len(xs), -1)), axis=1)
    if bad.any():
        raise InvariantViolation(f"{chart}: sample {int(np.argmax(bad))} has non-finite coordinates")
    for i, x in enumerate(xs):
        msg = ops.point_violation(x)
        if msg is not None:
            raise InvariantViolation(f"{chart}: sample {i}: {msg}")


def _norms(ops, base, v):
    return np.sqrt(np.maximum(ops.inner(base, v, v), 0.0))


def verify_geometry(
    chart: Chart,
    samples: int = 10_000,
    seed: int = 0,
    max_norm: float = 5.0,
    inject_corruption: bool = False,
) -> Report:
    """
    Roundtrip, distance-norm, transport isometry and comparison slacks on
    ``samples`` seeded draws.  Raises :class:`InvariantViolation` when a
    computed point leaves the chart.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    ops = chart.ops
    rng = np.random.default_rng(seed)
    rep = Report(f"geometry {chart} samples={samples} seed={seed}")

    P = random_point_array(chart, rng, samples)
    V = random_tangent_array(chart, rng, P, max_norm)
    Q = ops.exp(P, V)
    if inject_corruption:
        Q = Q.copy()
        Q[0] = _corrupt(chart, Q[0])
    check_points_on_chart(chart, Q)

    L = ops.log(P, Q)
    rt = float(np.max(_norms(ops, P, L - V)))
    rep.add("exp/log roundtrip", rt <= TOL.geometric, rt, TOL.geometric)

    dn = float(np.max(np.abs(ops.dist(P, Q) - _norms(ops, P, L))))
    rep.add("distance = |log|", dn <= TOL.isometry, dn, TOL.isometry)

    U = random_tangent_array(chart, rng, P, 1.0)
    W = random_tangent_array(chart, rng, P, 1.0)
    PU, PW = ops.transport(P, Q, U), ops.transport(P, Q, W)
    iso = float(np.max(np.abs(ops.inner(Q, PU, PW) - ops.inner(P, U, W))))
    rep.add("transport isometry", iso <= TOL.isometry, iso, TOL.isometry)

    P1, P2, P3 = (random_point_array(chart, rng, samples) for _ in range(3))
    s1, s2 = comparison_slacks_array(chart, P1, P2, P3)
    m1, m2 = float(np.min(s1)), float(np.min(s2))
    rep.add("comparison slack (law of cosines)", m1 >= -TOL.geometric, m1, TOL.geometric)
    rep.add("comparison slack (angle sum)", m2 >= -TOL.geometric, m2, TOL.geometric)
    if chart.kind == "euclidean":
        flat = float(max(np.max(np.abs(s1)), np.max(np.abs(s2))))
        rep.add("flat equality |slack|", flat <= TOL.flat_equality, flat, TOL.flat_equality)

    # grad d^2_c(p) = -2 log_p c points away from c
    C = random_point_array(chart, rng, samples)
    lc = ops.log(P, C)
    pairing = ops.inner(P, -2.0 * lc, lc)
    away = ops.dist(P, C) > 1e-6
    worst = float(np.max(pairing[away])) if away.any() else -1.0
    rep.add("gradient points away from center", worst < 0.0, worst, 0.0)
    zero = float(np.max(_norms(ops, C, -2.0 * ops.log(C, C))))
    rep.add("gradient vanishes at center", zero <= TOL.geometric, zero, TOL.geometric)
    return rep


# ---------------------------------------------------------------------------
# enlargements


def _direction(p: Point, rng) -> Tangent:
    while True:
        d = random_tangent(p, rng, 1.0)
        if np.any(d.coords != 0):
            return d


def _unit(d: Tangent) -> Tangent:
    return d / float(np.sqrt(d.chart.ops.inner(d.base.coords, d.coords, d.coords)))


def _line_ts(w: Tangent) -> np.ndarray:
    # keep witnesses within the sampling radius so SPD eigenvalues stay representable
    nw = float(np.sqrt(w.chart.ops.inner(w.base.coords, w.coords, w.coords)))
    return DEFAULT_LINE_TS[DEFAULT_LINE_TS * nw <= MAX_LINE_DISTANCE]


def _min_enlargement_on_line(X, p, u, w, eps) -> float:
    """Smallest enlargement slack of ``u`` against witnesses ``exp_p(t w)``."""

    def slack(t):
        q = exp_map(p, t * w)
        return min(_pairing(p, u, q, v) for v in X(q)) + eps

    return line_search_minimum(slack, _line_ts(w))[1]


def _min_subdiff_on_line(f, p, u, w, eps) -> float:
    """Smallest eps-subgradient slack of ``u`` against ``q = exp_p(t w)``."""
    fp = f.value(p)

    def slack(t):
        q = exp_map(p, t * w)
        return f.value(q) - fp - inner(p, u, log_map(p, q)) + eps

    return line_search_minimum(slack, _line_ts(w))[1]


def verify_enlargement(
    chart: Chart,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    seed: int = 0,
    cases: int = 4,
    witnesses: int = 256,
) -> Report:
    """
    Ball-element evidence for the enlargement of ``grad d^2`` (radius
    ``2 sqrt(2 eps)``) and for the eps-subdifferential of ``d^2`` (radius
    ``2 sqrt(eps)``), including the inclusion of the latter in the former.

    On flat charts a ``1.01``-inflated radius must be refuted by a line search
    along the perturbation; on curved charts the outcome is reported only.
    ``eps = 0`` reduces to monotonicity of the field.
    """
    rng = np.random.default_rng(seed)
    rep = Report(f"enlargement {chart} eps={list(eps_grid)} seed={seed}")
    tol = TOL.geometric
    for eps in eps_grid:
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        tag = f"eps={eps:g}"
        enl = sub = incl = mono = math.inf
        # largest (least negative) slack found at inflated radius over all cases
        infl_enl = infl_sub = -math.inf
        for _ in range(cases):
            center, p = random_points(chart, rng, 2)
            X = grad_dist_sq_field(center)
            f = dist_sq_function(center)
            d = _direction(p, rng)
            W = random_witnesses(X, p, rng, witnesses) + line_witnesses(
                X, p, d, max_distance=MAX_LINE_DISTANCE
            )
            if eps == 0:
                u = X(p)[0]
                enl = min(enl, enlargement_slack(X, 0.0, p, u, W))
                mono = min(mono, min(monotone_slack(X, p, q, u, v) for q, v in W.entries))
                continue
            u = enlarged_ball_element(center, p, eps, d)
            g = eps_subgrad_ball_element(center, p, eps, d)
            enl = min(enl, enlargement_slack(X, eps, p, u, W))
            sub = min(sub, eps_subdiff_slack(f, p, g, eps, W.points))
            incl = min(incl, enlargement_slack(X, eps, p, g, W))

            base = X(p)[0]
            w = _unit(d) * (INFLATION * 2.0 * math.sqrt(2.0 * eps))
            infl_enl = max(infl_enl, _min_enlargement_on_line(X, p, base + w, w, eps))
            w = _unit(d) * (INFLATION * 2.0 * math.sqrt(eps))
            infl_sub = max(infl_sub, _min_subdiff_on_line(f, p, base + w, w, eps))

        rep.add(f"{tag} enlargement ball evidence", enl >= -tol, enl, tol)
        if eps == 0:
            rep.add(f"{tag} monotonicity", mono >= -tol, mono, tol)
            continue
        rep.add(f"{tag} eps-subdifferential evidence", sub >= -tol, sub, tol)
        rep.add(f"{tag} eps-subdiff inside enlargement", incl >= -tol, incl, tol)
        for label, value in (("enlargement", infl_enl), ("eps-subdiff", infl_sub)):
            name = f"{tag} {label} x{INFLATION} refuted"
            refuted = value < 0
            if chart.kind == "euclidean":
                rep.add(name, refuted, value, 0.0)
            else:
                note = "violation found" if refuted else "inclusion strict or undetected"
                rep.add(name, refuted, value, 0.0, note=note, required=False)
    return rep


def verify_algebra(
    charts: Sequence[Chart], cases: int = 1000, seed: int = 0, witnesses: int = 64
) -> Report:
    """
    Evidence transfer for the sum rule ``X1^e1 + X2^e2 in (X1+X2)^(e1+e2)``,
    the scaling rule ``a X^e = (a X)^(a e)`` and eps-monotonicity on shared
    witness sets, over ``cases`` seeded draws cycling through ``charts``.
    """
    rng = np.random.default_rng(seed)
    rep = Report(f"enlargement algebra cases={cases} seed={seed}")
    sum_gap = worst_sum = worst_scale = math.inf
    scale_err = 0.0
    mono_ok = True
    for i in range(cases):
        chart = charts[i % len(charts)]
        a, b, p = random_points(chart, rng, 3)
        X1, X2 = grad_dist_sq_field(a), grad_dist_sq_field(b)
        e1, e2 = rng.uniform(0.01, 2.0, size=2)
        alpha = float(rng.uniform(0.1, 5.0))
        d1, d2 = _direction(p, rng), _direction(p, rng)
        u1 = enlarged_ball_element(a, p, e1, d1)
        u2 = enlarged_ball_element(b, p, e2, d2)
        Q = np.concatenate(
            [
                random_witnesses(X1, p, rng, witnesses).Q,
                [exp_map(p, t * d1).coords for t in (0.25, 0.5, 1.0, 2.0)],
            ]
        )
        S = field_sum(X1, X2)
        W1, W2, W12 = (WitnessSet.from_arrays(chart, Q, X.batch(Q)) for X in (X1, X2, S))
        s1 = enlargement_slack(X1, e1, p, u1, W1)
        s2 = enlargement_slack(X2, e2, p, u2, W2)
        s12 = enlargement_slack(S, e1 + e2, p, u1 + u2, W12)
        # min of a sum dominates the sum of minima
        sum_gap = min(sum_gap, s12 - (s1 + s2))
        worst_sum = min(worst_sum, s12)

        aX = field_scale(alpha, X1)
        Wa = WitnessSet.from_arrays(chart, Q, aX.batch(Q))
        sa = enlargement_slack(aX, alpha * e1, p, alpha * u1, Wa)
        scale_err = max(scale_err, abs(sa - alpha * s1) / (1.0 + abs(sa)))
        worst_scale = min(worst_scale, sa)

        lo, hi = sorted((e1, e2))
        if enlargement_slack(X1, lo, p, u1, W1) >= 0 and enlargement_slack(X1, hi, p, u1, W1) < 0:
            mono_ok = False

    tol = TOL.geometric
    rep.add("sum rule evidence", worst_sum >= -tol, worst_sum, tol)
    rep.add("sum rule transfer (slack12 - slack1 - slack2)", sum_gap >= -1e-10, sum_gap, 1e-10)
    rep.add("scaling rule evidence", worst_scale >= -tol, worst_scale, tol)
    rep.add("scaling rule slack ratio error", scale_err <= 1e-10, scale_err, 1e-10)
    rep.add("eps-monotonicity (exact)", mono_ok, 0.0 if mono_ok else 1.0, 0.0)
    return rep
