"""
Monotone vector fields, convex sets, convex functions and the enlargement X^eps.

A multivalued field is represented by a finite list of representative tangent
vectors per query point.  Membership in the enlargement

    X^eps(p) = {u : <P_pq u - v, log_q p> >= -eps  for all q, v in X(q)}

cannot be decided from an oracle, so two notions are kept apart:

* *evidence*: :func:`enlargement_slack` over a finite :class:`WitnessSet`
  (a negative value refutes membership, a nonnegative one proves nothing);
* *certified members*: closed-form constructions such as
  :func:`enlarged_ball_element` and :func:`absorption_eps`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .config import TOL
from .geometry import (
    Chart,
    GeometryError,
    Point,
    Tangent,
    dist,
    exp_map,
    grad_dist_sq,
    geodesic_point,
    inner,
    log_map,
    norm,
    point_from_record,
    point_to_record,
    random_tangent_array,
    transport,
    zero_tangent,
)

__all__ = [
    "FieldError",
    "VectorFieldOracle",
    "ConvexSetOracle",
    "WholeSet",
    "BallSet",
    "BallIntersection",
    "ConvexFunctionOracle",
    "WitnessSet",
    "zero_field",
    "identity_field",
    "grad_dist_sq_field",
    "skew_plus_mu_field",
    "subdiff_sum_dist_field",
    "field_sum",
    "field_scale",
    "field_restriction_sum",
    "ball_set",
    "whole_set",
    "dist_sq_function",
    "sum_dist_function",
    "function_sum",
    "function_scale",
    "monotone_slack",
    "enlargement_slack",
    "pairings",
    "enlarged_ball_element",
    "eps_subgrad_ball_element",
    "eps_subdiff_slack",
    "absorption_eps",
    "nearest_normal",
    "random_witnesses",
    "line_witnesses",
    "line_search_minimum",
    "DEFAULT_LINE_TS",
    "field_from_descriptor",
    "set_from_descriptor",
    "objective_from_descriptor",
]

# log-spaced step lengths for directional witness searches
DEFAULT_LINE_TS = np.logspace(-3, 1, 32)


class FieldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True)
class VectorFieldOracle:
    """
    A (possibly multivalued) monotone vector field.

    ``rule(p)`` returns representative elements of ``X(p)``; ``modulus`` is the
    claimed strong-monotonicity constant (0 for merely monotone fields).
    Single-valued fields may also supply ``batch``, mapping stacked point
    coordinates to stacked tangent coordinates.
    """

    chart: Chart
    rule: Callable[[Point], list[Tangent]]
    modulus: float = 0.0
    domain_tag: str = "whole_manifold"
    descriptor: dict | None = None
    batch: Callable[[np.ndarray], np.ndarray] | None = None

    def evaluate(self, p: Point) -> list[Tangent]:
        if p.chart != self.chart:
            raise FieldError(f"field on {self.chart} queried at a point of {p.chart}")
        return self.rule(p)

    __call__ = evaluate


def zero_field(chart: Chart) -> VectorFieldOracle:
    return VectorFieldOracle(
        chart,
        lambda p: [zero_tangent(p)],
        0.0,
        descriptor={"type": "zero"},
        batch=lambda Q: np.zeros_like(Q),
    )


def identity_field(chart: Chart) -> VectorFieldOracle:
    """``X(p) = {-log_p(o)}`` with ``o`` the chart origin; equals ``x`` on R^n."""
    o = chart.origin()
    ops = chart.ops
    return VectorFieldOracle(
        chart,
        lambda p: [-log_map(p, o)],
        1.0,
        descriptor={"type": "identity"},
        batch=lambda Q: -ops.log(Q, np.broadcast_to(o.coords, Q.shape)),
    )


def grad_dist_sq_field(center: Point) -> VectorFieldOracle:
    # d^2_c is 2-strongly geodesically convex on a Hadamard manifold
    ops = center.chart.ops
    return VectorFieldOracle(
        center.chart,
        lambda p: [grad_dist_sq(center, p)],
        2.0,
        descriptor={"type": "grad_dist_sq", "center": point_to_record(center)},
        batch=lambda Q: -2.0 * ops.log(Q, np.broadcast_to(center.coords, Q.shape)),
    )


def skew_plus_mu_field(mu: float, A=None, shift=None, n: int = 2) -> VectorFieldOracle:
    """Euclidean field ``x -> A(x - c) + mu (x - c)`` with ``A`` skew-symmetric."""
    if mu < 0:
        raise FieldError("mu must be nonnegative")
    A = np.array([[0.0, 1.0], [-1.0, 0.0]]) if A is None else np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or np.max(np.abs(A + A.T)) > TOL.structural:
        raise FieldError("A must be a square skew-symmetric matrix")
    c = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    chart = Chart("euclidean", n)
    M = A + mu * np.eye(n)

    def rule(p):
        return [Tangent(p, M @ (p.coords - c))]

    desc = {"type": "skew_plus_mu", "mu": float(mu), "A": A.tolist(), "shift": c.tolist()}
    return VectorFieldOracle(chart, rule, float(mu), descriptor=desc, batch=lambda Q: (Q - c) @ M.T)


def subdiff_sum_dist_field(anchors: Sequence[Point]) -> VectorFieldOracle:
    """
    Subdifferential of ``f(p) = sum_i d(p, a_i)``.

    Off the anchors ``f`` is smooth.  At an anchor ``a_j`` the subdifferential
    is ``g + B[0, 1]`` with ``g`` the gradient of the other terms; the
    representatives are ``g`` and the minimum-norm element of that ball.
    """
    anchors = list(anchors)
    if not anchors:
        raise FieldError("need at least one anchor")
    chart = anchors[0].chart

    def rule(p):
        g = zero_tangent(p)
        at_anchor = False
        for a in anchors:
            d = dist(p, a)
            if d <= TOL.structural * 10:
                at_anchor = True
                continue
            g = g - log_map(p, a) / d
        if not at_anchor:
            return [g]
        ng = norm(g)
        shrink = g - g * (min(1.0, ng) / ng) if ng > 0 else g
        return [shrink, g]

    desc = {"type": "subdiff_sum_dist", "anchors": [point_to_record(a) for a in anchors]}
    return VectorFieldOracle(chart, rule, 0.0, descriptor=desc)


def field_sum(X1: VectorFieldOracle, X2: VectorFieldOracle) -> VectorFieldOracle:
    if X1.chart != X2.chart:
        raise FieldError(f"cannot add fields on {X1.chart} and {X2.chart}")

    def rule(p):
        return [u + v for u in X1(p) for v in X2(p)]

    desc = None
    if X1.descriptor is not None and X2.descriptor is not None:
        desc = {"type": "sum", "terms": [X1.descriptor, X2.descriptor]}
    tag = "whole_manifold" if X1.domain_tag == X2.domain_tag == "whole_manifold" else "restricted"
    batch = None
    if X1.batch is not None and X2.batch is not None:
        batch = lambda Q: X1.batch(Q) + X2.batch(Q)  # noqa: E731
    return VectorFieldOracle(X1.chart, rule, X1.modulus + X2.modulus, tag, desc, batch)


def field_scale(alpha: float, X: VectorFieldOracle) -> VectorFieldOracle:
    if alpha < 0:
        raise FieldError("scale factor must be nonnegative")
    alpha = float(alpha)

    def rule(p):
        return [alpha * u for u in X(p)]

    desc = None if X.descriptor is None else {"type": "scaled", "alpha": alpha, "field": X.descriptor}
    batch = None if X.batch is None else (lambda Q: alpha * X.batch(Q))
    return VectorFieldOracle(X.chart, rule, alpha * X.modulus, X.domain_tag, desc, batch)


def field_restriction_sum(
    X: VectorFieldOracle, omega: "ConvexSetOracle", normal_scales=(0.5, 1.0, 2.0)
) -> VectorFieldOracle:
    """``X + N_omega``; normal cone rays are sampled at ``normal_scales``."""
    if X.chart != omega.chart:
        raise FieldError("field and set live on different charts")

    def rule(p):
        if not omega.contains(p):
            raise FieldError("X + N_omega queried outside omega")
        reps = X(p)
        rays = omega.normal_rays(p)
        out = list(reps)
        for u in reps:
            for n in rays:
                out.extend(u + s * n for s in normal_scales)
        return out

    return VectorFieldOracle(X.chart, rule, X.modulus, "restricted")


# ---------------------------------------------------------------------------
# convex sets


def nearest_normal(p: Point, rays: Sequence[Tangent], g: Tangent) -> Tangent:
    """
    The element ``w`` of ``cone(rays)`` minimizing ``||g + w||``.

    Solved exactly by enumerating active sets, which is cheap for the
    handful of generators the supported sets produce.
    """
    if not rays:
        return zero_tangent(p)
    if len(rays) > 8:
        raise FieldError("too many normal generators for active-set enumeration")
    G = np.array([[inner(p, a, b) for b in rays] for a in rays])
    b = np.array([inner(p, g, a) for a in rays])
    best_val, best_s = inner(p, g, g), np.zeros(len(rays))
    for size in range(1, len(rays) + 1):
        for idx in itertools.combinations(range(len(rays)), size):
            idx = list(idx)
            s_sub, *_ = np.linalg.lstsq(G[np.ix_(idx, idx)], -b[idx], rcond=None)
            if np.any(s_sub < 0):
                continue
            s = np.zeros(len(rays))
            s[idx] = s_sub
            val = inner(p, g, g) + 2 * b @ s + s @ G @ s
            if val < best_val:
                best_val, best_s = val, s
    w = zero_tangent(p)
    for s, r in zip(best_s, rays):
        if s > 0:
            w = w + s * r
    return w


class ConvexSetOracle:
    """A closed geodesically convex set with projection and normal-cone access."""

    chart: Chart
    descriptor: dict

    def contains(self, p: Point) -> bool:
        raise NotImplementedError

    def project(self, p: Point) -> Point:
        raise NotImplementedError

    def normal_rays(self, p: Point) -> list[Tangent]:
        """Unit generators of the normal cone at a member ``p`` (empty inside)."""
        raise NotImplementedError

    def normal_elements(self, p: Point, scale: float) -> list[Tangent]:
        if scale < 0:
            raise FieldError("normal scale must be nonnegative")
        rays = self.normal_rays(p)
        if not rays:
            return [zero_tangent(p)]
        return [scale * r for r in rays]


class WholeSet(ConvexSetOracle):
    def __init__(self, chart: Chart):
        self.chart = chart
        self.descriptor = {"set": "whole"}

    def contains(self, p):
        return True

    def project(self, p):
        return p

    def normal_rays(self, p):
        return []


class BallSet(ConvexSetOracle):
    """Closed geodesic ball ``{p : d(center, p) <= radius}``."""

    def __init__(self, center: Point, radius: float):
        if not radius > 0:
            raise FieldError("ball radius must be positive")
        self.chart = center.chart
        self.center = center
        self.radius = float(radius)
        self.descriptor = {"set": "ball", "center": point_to_record(center), "radius": self.radius}

    def _slack(self):
        return TOL.boundary * max(1.0, self.radius)

    def contains(self, p):
        return dist(self.center, p) <= self.radius + self._slack()

    def project(self, p):
        d = dist(self.center, p)
        if d <= self.radius:
            return p
        return geodesic_point(self.center, p, self.radius / d)

    def on_boundary(self, p) -> bool:
        return abs(dist(self.center, p) - self.radius) <= self._slack()

    def normal_rays(self, p):
        d = dist(self.center, p)
        if d > self.radius + self._slack():
            raise FieldError("normal cone requested outside the set")
        if d < self.radius - self._slack():
            return []
        out = -log_map(p, self.center)
        return [out / norm(out)]


class BallIntersection(ConvexSetOracle):
    """
    Intersection of at most four geodesic balls.

    ``project`` runs cyclic projections onto the balls until a fixed point;
    the result is the nearest point whenever at most one ball is active there,
    and a feasible point otherwise.
    """

    max_sweeps = 10_000

    def __init__(self, balls: Sequence[BallSet]):
        balls = list(balls)
        if not 1 <= len(balls) <= 4:
            raise FieldError("ball_intersection supports between 1 and 4 balls")
        self.chart = balls[0].chart
        if any(b.chart != self.chart for b in balls):
            raise FieldError("balls on different charts")
        self.balls = balls
        self.descriptor = {
            "set": "ball_intersection",
            "balls": [{"center": point_to_record(b.center), "radius": b.radius} for b in balls],
        }

    def contains(self, p):
        return all(b.contains(p) for b in self.balls)

    def project(self, p):
        x = p
        for _ in range(self.max_sweeps):
            y = x
            for b in self.balls:
                y = b.project(y)
            if dist(x, y) <= 1e-10:
                return y
            x = y
        raise FieldError("alternating projections did not reach a fixed point")

    def normal_rays(self, p):
        if not self.contains(p):
            raise FieldError("normal cone requested outside the set")
        rays = []
        for b in self.balls:
            rays.extend(b.normal_rays(p))
        return rays


def ball_set(center: Point, r: float) -> BallSet:
    return BallSet(center, r)


def whole_set(chart: Chart) -> WholeSet:
    return WholeSet(chart)


# ---------------------------------------------------------------------------
# convex functions


@dataclass(frozen=True)
class ConvexFunctionOracle:
    """
    Convex function with subgradients.

    ``strong_convexity`` is the constant ``s`` in
    ``f(q) >= f(p) + <g, log_p q> + s d^2(p, q)`` for every subgradient ``g``.
    """

    chart: Chart
    value_fn: Callable[[Point], float]
    subgradient_fn: Callable[[Point], list[Tangent]]
    eps_subgradient_fn: Callable[[Point, float, Tangent], Tangent] | None = None
    strong_convexity: float = 0.0
    descriptor: dict | None = None

    def value(self, p: Point) -> float:
        return float(self.value_fn(p))

    def subgradient(self, p: Point) -> list[Tangent]:
        return self.subgradient_fn(p)

    def eps_subgradient(self, p: Point, eps: float, direction: Tangent) -> Tangent:
        if self.eps_subgradient_fn is None:
            raise FieldError("this function exposes no eps-subgradient construction")
        return self.eps_subgradient_fn(p, eps, direction)


def dist_sq_function(center: Point) -> ConvexFunctionOracle:
    return ConvexFunctionOracle(
        center.chart,
        lambda p: dist(center, p) ** 2,
        lambda p: [grad_dist_sq(center, p)],
        lambda p, eps, d: eps_subgrad_ball_element(center, p, eps, d),
        1.0,
        {"type": "grad_dist_sq", "center": point_to_record(center)},
    )


def sum_dist_function(anchors: Sequence[Point]) -> ConvexFunctionOracle:
    anchors = list(anchors)
    X = subdiff_sum_dist_field(anchors)
    return ConvexFunctionOracle(
        anchors[0].chart,
        lambda p: sum(dist(p, a) for a in anchors),
        X.evaluate,
        None,
        0.0,
        X.descriptor,
    )


def function_sum(f: ConvexFunctionOracle, g: ConvexFunctionOracle) -> ConvexFunctionOracle:
    if f.chart != g.chart:
        raise FieldError("functions on different charts")
    desc = None
    if f.descriptor is not None and g.descriptor is not None:
        desc = {"type": "sum", "terms": [f.descriptor, g.descriptor]}
    return ConvexFunctionOracle(
        f.chart,
        lambda p: f.value(p) + g.value(p),
        lambda p: [a + b for a in f.subgradient(p) for b in g.subgradient(p)],
        None,
        f.strong_convexity + g.strong_convexity,
        desc,
    )


def function_scale(alpha: float, f: ConvexFunctionOracle) -> ConvexFunctionOracle:
    if alpha < 0:
        raise FieldError("scale factor must be nonnegative")
    alpha = float(alpha)
    desc = None if f.descriptor is None else {"type": "scaled", "alpha": alpha, "field": f.descriptor}
    return ConvexFunctionOracle(
        f.chart,
        lambda p: alpha * f.value(p),
        lambda p: [alpha * s for s in f.subgradient(p)],
        None,
        alpha * f.strong_convexity,
        desc,
    )


# ---------------------------------------------------------------------------
# slacks and certified members


def _pairing(p: Point, u: Tangent, q: Point, v: Tangent) -> float:
    """``<P_pq u - v, log_q p>``."""
    return inner(q, transport(p, q, u) - v, log_map(q, p))


def monotone_slack(X: VectorFieldOracle, p: Point, q: Point, u: Tangent, v: Tangent) -> float:
    return _pairing(p, u, q, v) - X.modulus * dist(p, q) ** 2


class WitnessSet:
    """
    Finite sample ``(q, v)`` with ``v`` in ``X(q)``, standing in for all of graph X.

    Stored as stacked coordinate arrays; ``entries`` materializes validated
    ``(Point, Tangent)`` pairs on demand.
    """

    def __init__(self, entries: Sequence[tuple[Point, Tangent]] = ()):
        entries = list(entries)
        for q, v in entries:
            if v.base is not q and not np.allclose(v.base.coords, q.coords, rtol=0, atol=1e-12):
                raise FieldError("witness vector is not based at its witness point")
        self.chart = entries[0][0].chart if entries else None
        self.Q = np.array([q.coords for q, _ in entries])
        self.V = np.array([v.coords for _, v in entries])
        self._entries = entries

    @classmethod
    def from_arrays(cls, chart: Chart, Q: np.ndarray, V: np.ndarray) -> "WitnessSet":
        if Q.shape != V.shape or Q.shape[1:] != chart.ops.point_shape:
            raise FieldError("witness arrays have mismatched shapes")
        out = cls()
        out.chart, out.Q, out.V, out._entries = chart, np.asarray(Q), np.asarray(V), None
        return out

    @classmethod
    def from_points(cls, X: VectorFieldOracle, points: Sequence[Point]) -> "WitnessSet":
        points = list(points)
        if X.batch is not None and points:
            Q = np.array([q.coords for q in points])
            return cls.from_arrays(X.chart, Q, X.batch(Q))
        return cls([(q, v) for q in points for v in X(q)])

    def __len__(self):
        return len(self.Q)

    def __add__(self, other: "WitnessSet") -> "WitnessSet":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        if self.chart != other.chart:
            raise FieldError("cannot merge witness sets on different charts")
        return WitnessSet.from_arrays(
            self.chart, np.concatenate([self.Q, other.Q]), np.concatenate([self.V, other.V])
        )

    @property
    def entries(self) -> list[tuple[Point, Tangent]]:
        if self._entries is None:
            pts = [Point(self.chart, q) for q in self.Q]
            self._entries = [(q, Tangent(q, v)) for q, v in zip(pts, self.V)]
        return self._entries

    @property
    def points(self) -> list[Point]:
        seen, out = set(), []
        for q, _ in self.entries:
            if id(q) not in seen:
                seen.add(id(q))
                out.append(q)
        return out

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked witness coordinates ``(Q, V)`` for batched evaluation."""
        return self.Q, self.V


def pairings(p: Point, u: Tangent, W: WitnessSet) -> np.ndarray:
    """``<P_pq u - v, log_q p>`` for every witness ``(q, v)``, evaluated in one batch."""
    if u.base.chart != p.chart:
        raise GeometryError("vector on a different chart")
    if W.chart is not None and W.chart != p.chart:
        raise GeometryError("witnesses on a different chart")
    ops = p.chart.ops
    Q, V = W.arrays()
    P = np.broadcast_to(p.coords, Q.shape)
    U = np.broadcast_to(u.coords, Q.shape)
    return ops.inner(Q, ops.transport(P, Q, U) - V, ops.log(Q, P))


def enlargement_slack(
    X: VectorFieldOracle, eps: float, p: Point, u: Tangent, W: WitnessSet
) -> float:
    """``min_{(q,v) in W} <P_pq u - v, log_q p> + eps``; negative refutes ``u in X^eps(p)``."""
    if eps < 0:
        raise FieldError("eps must be nonnegative")
    if len(W) == 0:
        raise FieldError("empty witness set")
    return float(np.min(pairings(p, u, W))) + eps


def _ball_element(center, p, radius, direction):
    if direction.base.chart != p.chart:
        raise GeometryError("direction on a different chart")
    nd = norm(direction)
    if nd == 0:
        raise FieldError("direction must be nonzero")
    return grad_dist_sq(center, p) + (radius / nd) * direction


def enlarged_ball_element(center: Point, p: Point, eps: float, direction: Tangent) -> Tangent:
    """``grad d^2_center(p) + 2 sqrt(2 eps) dir/|dir|``; a certified member of the enlargement."""
    if eps < 0:
        raise FieldError("eps must be nonnegative")
    return _ball_element(center, p, 2.0 * math.sqrt(2.0 * eps), direction)


def eps_subgrad_ball_element(center: Point, p: Point, eps: float, direction: Tangent) -> Tangent:
    """``grad d^2_center(p) + 2 sqrt(eps) dir/|dir|``; a member of the eps-subdifferential."""
    if eps < 0:
        raise FieldError("eps must be nonnegative")
    return _ball_element(center, p, 2.0 * math.sqrt(eps), direction)


def eps_subdiff_slack(
    f: ConvexFunctionOracle, p: Point, u: Tangent, eps: float, W: Sequence[Point]
) -> float:
    """``min_{q in W} f(q) - f(p) - <u, log_p q> + eps``."""
    if eps < 0:
        raise FieldError("eps must be nonnegative")
    if len(W) == 0:
        raise FieldError("empty witness set")
    fp = f.value(p)
    return min(f.value(q) - fp - inner(p, u, log_map(p, q)) for q in W) + eps


def absorption_eps(e_norm: float, modulus: float) -> float:
    """
    Enlargement level absorbing an error ``e`` into a strongly monotone field.

    If ``u`` is in ``X(p)`` and ``X`` has modulus ``rho > 0`` then ``u + e`` is in
    ``X^eps(p)`` for ``eps = |e|^2 / (4 rho)``, because
    ``rho d^2 - |e| d >= -|e|^2 / (4 rho)``.
    """
    if modulus <= 0:
        raise FieldError("absorption needs a positive modulus")
    if e_norm < 0:
        raise FieldError("error norm must be nonnegative")
    return e_norm**2 / (4.0 * modulus)


# ---------------------------------------------------------------------------
# witness construction


def random_witnesses(
    X: VectorFieldOracle,
    p: Point,
    rng: np.random.Generator,
    size: int = 256,
    radius: float = 4.0,
) -> WitnessSet:
    """``size`` points uniform in the tangent ball of ``radius`` at ``p``, mapped by exp."""
    chart = p.chart
    base = np.broadcast_to(p.coords, (size,) + chart.ops.point_shape)
    vs = random_tangent_array(chart, rng, base, 1.0)
    ops = chart.ops
    nv = np.sqrt(np.maximum(ops.inner(base, vs, vs), 1e-300))
    r = radius * rng.uniform(size=size) ** (1.0 / chart.ops.dim)
    scale = r / nv
    scale = scale[:, None, None] if chart.kind == "spd" else scale[:, None]
    qs = ops.exp(base, vs * scale)
    if X.batch is not None:
        return WitnessSet.from_arrays(chart, qs, X.batch(qs))
    return WitnessSet.from_points(X, [Point(chart, q) for q in qs])


def _line_points(p: Point, direction: Tangent, ts, max_distance):
    nd = norm(direction)
    out = []
    for t in ts:
        if max_distance is not None and t * nd > max_distance:
            continue
        out.append(exp_map(p, t * direction))
    return out


def line_witnesses(
    X: VectorFieldOracle,
    p: Point,
    direction: Tangent,
    ts=DEFAULT_LINE_TS,
    max_distance: float | None = None,
) -> WitnessSet:
    """Witnesses ``q = exp_p(t * direction)`` along the perturbation direction."""
    return WitnessSet.from_points(X, _line_points(p, direction, ts, max_distance))


def line_search_minimum(fn: Callable[[float], float], ts=DEFAULT_LINE_TS) -> tuple[float, float]:
    """
    Minimize ``fn`` over the grid ``ts`` and refine inside the bracketing cell.

    Returns ``(t, fn(t))``.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.array([fn(t) for t in ts])
    i = int(np.argmin(vals))
    lo = ts[max(i - 1, 0)]
    hi = ts[min(i + 1, len(ts) - 1)]
    best_t, best_v = float(ts[i]), float(vals[i])
    if hi > lo:
        res = minimize_scalar(fn, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        if res.fun < best_v:
            best_t, best_v = float(res.x), float(res.fun)
    return best_t, best_v


# ---------------------------------------------------------------------------
# descriptors


def _point(rec, chart):
    return point_from_record(rec, chart)


def field_from_descriptor(desc: dict, chart: Chart) -> VectorFieldOracle:
    try:
        kind = desc["type"]
    except (KeyError, TypeError):
        raise FieldError(f"field descriptor needs a 'type': {desc!r}") from None
    try:
        if kind == "zero":
            return zero_field(chart)
        if kind == "identity":
            return identity_field(chart)
        if kind == "grad_dist_sq":
            return grad_dist_sq_field(_point(desc["center"], chart))
        if kind == "skew_plus_mu":
            if chart.kind != "euclidean":
                raise FieldError("skew_plus_mu lives on a Euclidean chart")
            X = skew_plus_mu_field(float(desc["mu"]), desc.get("A"), desc.get("shift"))
            if X.chart != chart:
                raise FieldError(f"skew field dimension does not match {chart}")
            return X
        if kind == "sum":
            terms = [field_from_descriptor(t, chart) for t in desc["terms"]]
            if not terms:
                raise FieldError("sum needs at least one term")
            out = terms[0]
            for t in terms[1:]:
                out = field_sum(out, t)
            return out
        if kind == "scaled":
            return field_scale(float(desc["alpha"]), field_from_descriptor(desc["field"], chart))
        if kind == "subdiff_sum_dist":
            return subdiff_sum_dist_field([_point(a, chart) for a in desc["anchors"]])
    except KeyError as exc:
        raise FieldError(f"field descriptor {kind!r} is missing {exc}") from None
    raise FieldError(f"unknown field type {kind!r}")


def objective_from_descriptor(desc: dict, chart: Chart) -> ConvexFunctionOracle | None:
    """The convex function whose subdifferential the descriptor encodes, if any."""
    kind = desc.get("type")
    if kind == "grad_dist_sq":
        return dist_sq_function(_point(desc["center"], chart))
    if kind == "subdiff_sum_dist":
        return sum_dist_function([_point(a, chart) for a in desc["anchors"]])
    if kind == "scaled":
        inner_f = objective_from_descriptor(desc["field"], chart)
        return None if inner_f is None else function_scale(float(desc["alpha"]), inner_f)
    if kind == "sum":
        parts = [objective_from_descriptor(t, chart) for t in desc["terms"]]
        if not parts or any(f is None for f in parts):
            return None
        out = parts[0]
        for f in parts[1:]:
            out = function_sum(out, f)
        return out
    return None


def set_from_descriptor(desc: dict, chart: Chart) -> ConvexSetOracle:
    kind = desc.get("set") if isinstance(desc, dict) else None
    try:
        if kind == "whole":
            return WholeSet(chart)
        if kind == "ball":
            return BallSet(_point(desc["center"], chart), float(desc["radius"]))
        if kind == "ball_intersection":
            return BallIntersection(
                [BallSet(_point(b["center"], chart), float(b["radius"])) for b in desc["balls"]]
            )
    except KeyError as exc:
        raise FieldError(f"set descriptor {kind!r} is missing {exc}") from None
    raise FieldError(f"unknown set descriptor {desc!r}")
