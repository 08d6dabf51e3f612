"""
Benchmark instances with independently known solutions.

Every builder returns a :class:`BenchmarkSpec` whose oracle solution was
computed without the proximal solver: closed forms, a brute-force grid
refinement, or the classical Karcher fixed-point iteration.  The built-in
suite is cached in ``data/benchmarks.json``; regenerate it with
``python -m hadprox.problems``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .fields import (
    BallSet,
    ConvexSetOracle,
    FieldError,
    WholeSet,
    dist_sq_function,
    field_from_descriptor,
    field_scale,
    field_sum,
    function_scale,
    function_sum,
    grad_dist_sq_field,
    objective_from_descriptor,
    set_from_descriptor,
    skew_plus_mu_field,
    subdiff_sum_dist_field,
    sum_dist_function,
)
from .geometry import (
    Chart,
    Point,
    Tangent,
    dist,
    exp_map,
    geodesic_point,
    log_map,
    norm,
    point_from_record,
    point_to_record,
    tangent_basis,
    zero_tangent,
)
from .solver import ProblemInstance, solution_residual

__all__ = [
    "BenchmarkSpec",
    "ORACLE_KINDS",
    "make_projection_problem",
    "make_frechet_mean",
    "make_fermat_weber",
    "make_skew_vip",
    "karcher_fixed_point",
    "grid_refine_minimum",
    "build_benchmarks",
    "load_fixtures",
    "write_fixtures",
    "get_benchmark",
    "benchmark_names",
    "problem_from_descriptor",
    "FIXTURE_FILE",
]

ORACLE_KINDS = ("closed_form", "brute_force_grid", "independent_fixed_point")
FIXTURE_FILE = "benchmarks.json"


@dataclass
class BenchmarkSpec:
    name: str
    instance: ProblemInstance
    oracle_solution: Point
    oracle_kind: str
    provenance: str = ""
    set_valued: bool = False

    def __post_init__(self):
        if self.oracle_kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.oracle_kind!r}")
        if not self.instance.set.contains(self.oracle_solution):
            raise ValueError(f"{self.name}: oracle solution is infeasible")
        r = solution_residual(self.instance, self.oracle_solution)
        if r > 1e-6:
            raise ValueError(f"{self.name}: oracle residual {r:.3e} exceeds 1e-6")

    def to_record(self) -> dict:
        rec = self.instance.descriptor
        rec.update(
            {
                "name": self.name,
                "oracle": point_to_record(self.oracle_solution),
                "oracle_kind": self.oracle_kind,
                "provenance": self.provenance,
                "set_valued": self.set_valued,
            }
        )
        return rec


# ---------------------------------------------------------------------------
# independent oracles


def karcher_fixed_point(
    anchors: Sequence[Point], weights: Sequence[float], tol: float = 1e-12, max_iter: int = 10_000
) -> Point:
    """Weighted Karcher mean by ``p <- exp_p(sum w_i log_p a_i / sum w_i)``."""
    total = float(sum(weights))
    p = anchors[int(np.argmax(weights))]
    for _ in range(max_iter):
        step = sum(((w / total) * log_map(p, a) for w, a in zip(weights, anchors)), zero_tangent(p))
        p = exp_map(p, step)
        if norm(step) <= tol:
            return p
    raise RuntimeError("Karcher fixed-point iteration did not converge")


def grid_refine_minimum(
    f_batch,
    base: Point,
    half_width: float,
    tol: float = 1e-10,
    budget: int = 6000,
) -> Point:
    """
    Brute-force minimizer of a geodesically convex function.

    Parametrizes ``x = exp_base(sum t_i e_i)`` over an orthonormal tangent basis,
    evaluates ``f_batch`` (array of points -> array of values) on a full grid
    around the incumbent and shrinks the box to two grid spacings per round
    until the half-width drops below ``tol``.
    """
    chart = base.chart
    ops = chart.ops
    basis = np.array([e.coords for e in tangent_basis(base)])
    m = len(basis)
    k = max(5, int(budget ** (1.0 / m)))
    if k % 2 == 0:
        k += 1
    axis = np.linspace(-1.0, 1.0, k)
    offsets = np.array(np.meshgrid(*([axis] * m), indexing="ij")).reshape(m, -1).T
    center = np.zeros(m)
    h = half_width
    while h > tol:
        ts = center + h * offsets
        vs = np.tensordot(ts, basis, axes=(1, 0))
        xs = ops.exp(np.broadcast_to(base.coords, vs.shape), vs)
        vals = f_batch(xs)
        center = ts[int(np.argmin(vals))]
        h *= 2.0 / (k - 1)
    v = np.tensordot(center, basis, axes=(0, 0))
    return exp_map(base, Tangent(base, v))


# ---------------------------------------------------------------------------
# builders


def make_projection_problem(
    chart: Chart,
    target: Point,
    center: Point,
    r: float,
    start: Point | None = None,
    name: str = "projection",
) -> BenchmarkSpec:
    """Minimize ``d^2(target, .)`` over the geodesic ball ``B[center, r]``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    omega = BallSet(center, r)
    d = dist(center, target)
    oracle = target if d <= r else geodesic_point(center, target, min(1.0, r / d))
    inst = ProblemInstance(
        chart,
        grad_dist_sq_field(target),
        omega,
        dist_sq_function(target),
        oracle,
        start,
        lipschitz=2.0,
        name=name,
    )
    return BenchmarkSpec(name, inst, oracle, "closed_form", "nearest point on the ball geodesic")


def make_frechet_mean(
    chart: Chart,
    anchors: Sequence[Point],
    weights: Sequence[float],
    omega: ConvexSetOracle | None = None,
    start: Point | None = None,
    name: str = "frechet",
    closed_form: Point | None = None,
) -> BenchmarkSpec:
    """Minimize ``sum_i w_i d^2(., a_i)``; oracle from the Karcher fixed point."""
    anchors = list(anchors)
    weights = [float(w) for w in weights]
    if not anchors:
        raise ValueError("need at least one anchor")
    if len(weights) != len(anchors) or any(w <= 0 for w in weights):
        raise ValueError("need one positive weight per anchor")
    omega = WholeSet(chart) if omega is None else omega
    X = field_scale(weights[0], grad_dist_sq_field(anchors[0]))
    f = function_scale(weights[0], dist_sq_function(anchors[0]))
    for w, a in zip(weights[1:], anchors[1:]):
        X = field_sum(X, field_scale(w, grad_dist_sq_field(a)))
        f = function_sum(f, function_scale(w, dist_sq_function(a)))
    if closed_form is not None:
        oracle, kind, note = closed_form, "closed_form", "symmetry of the weighted sum"
    else:
        oracle = karcher_fixed_point(anchors, weights)
        kind, note = "independent_fixed_point", "Karcher iteration to step norm 1e-12"
    inst = ProblemInstance(
        chart, X, omega, f, oracle, start, lipschitz=2.0 * sum(weights), name=name
    )
    return BenchmarkSpec(name, inst, oracle, kind, note)


def make_fermat_weber(
    chart: Chart,
    anchors: Sequence[Point],
    omega: ConvexSetOracle | None = None,
    start: Point | None = None,
    name: str = "fermat_weber",
) -> BenchmarkSpec:
    """
    Minimize ``sum_i d(., a_i)``.

    One anchor: the anchor.  Two anchors: every point of the connecting
    segment is optimal and the midpoint is recorded.  Otherwise the oracle
    comes from :func:`grid_refine_minimum`.
    """
    anchors = list(anchors)
    if not anchors:
        raise ValueError("need at least one anchor")
    for i, a in enumerate(anchors):
        for b in anchors[:i]:
            if dist(a, b) <= 1e-12:
                raise ValueError("anchors must be distinct")
    omega = WholeSet(chart) if omega is None else omega
    X = subdiff_sum_dist_field(anchors)
    f = sum_dist_function(anchors)
    set_valued = False
    if len(anchors) == 1:
        oracle, kind, note = anchors[0], "closed_form", "single anchor"
    elif len(anchors) == 2:
        oracle = geodesic_point(anchors[0], anchors[1], 0.5)
        kind, note, set_valued = "closed_form", "midpoint of a set-valued minimizer", True
    else:
        ops = chart.ops
        A = np.array([a.coords for a in anchors])

        def f_batch(xs):
            tot = np.zeros(len(xs))
            for a in A:
                tot += ops.dist(xs, np.broadcast_to(a, xs.shape))
            if not isinstance(omega, WholeSet):
                bad = [not omega.contains(Point(chart, x)) for x in xs]
                tot[np.array(bad, dtype=bool)] = np.inf
            return tot

        base = anchors[0]
        half = max(dist(base, a) for a in anchors) + 1.0
        oracle = grid_refine_minimum(f_batch, base, half)
        kind, note = "brute_force_grid", "nested grid refinement to half-width 1e-10"
    inst = ProblemInstance(chart, X, omega, f, oracle, start, lipschitz=3.0, name=name)
    return BenchmarkSpec(name, inst, oracle, kind, note, set_valued)


def make_skew_vip(
    mu: float,
    omega: BallSet,
    A=None,
    shift=None,
    start: Point | None = None,
    name: str = "skew_vip",
) -> BenchmarkSpec:
    """Euclidean VIP for ``x -> A(x - c) + mu (x - c)``; the unique solution is ``c``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    X = skew_plus_mu_field(mu, A, shift)
    if omega.chart != X.chart:
        raise ValueError("skew VIP needs a Euclidean ball of matching dimension")
    c = Point(X.chart, np.zeros(X.chart.n) if shift is None else shift)
    if not omega.contains(c):
        raise ValueError("the shift point must lie inside the ball")
    M = np.asarray(X.descriptor["A"]) + mu * np.eye(X.chart.n)
    inst = ProblemInstance(
        X.chart, X, omega, None, c, start, lipschitz=float(np.linalg.norm(M, 2)), name=name
    )
    return BenchmarkSpec(name, inst, c, "closed_form", "unique zero of a strongly monotone field")


# ---------------------------------------------------------------------------
# the built-in suite


def _unit(p: Point, angle: float) -> Tangent:
    e = tangent_basis(p)
    return math.cos(angle) * e[0] + math.sin(angle) * e[1]


def build_benchmarks() -> dict[str, BenchmarkSpec]:
    out = {}

    E2 = Chart("euclidean", 2)
    out["projection_euclidean"] = make_projection_problem(
        E2, E2.point([3.0, 4.0]), E2.origin(), 1.0, E2.point([-0.5, 0.2]), "projection_euclidean"
    )

    H2 = Chart("hyperboloid", 2)
    o = H2.origin()
    out["projection_hyperboloid"] = make_projection_problem(
        H2,
        exp_map(o, 2.0 * _unit(o, 0.7)),
        o,
        1.0,
        exp_map(o, 0.8 * _unit(o, 2.5)),
        "projection_hyperboloid",
    )

    S2 = Chart("spd", 2)
    C = S2.point([[1.5, 0.2], [0.2, 0.8]])
    out["projection_spd"] = make_projection_problem(
        S2, exp_map(C, 2.0 * _unit(C, 0.4)), C, 1.0, exp_map(C, 0.6 * _unit(C, 2.9)), "projection_spd"
    )

    E3 = Chart("euclidean", 3)
    out["frechet_euclidean"] = make_frechet_mean(
        E3,
        [E3.point(x) for x in ([1, 0, 0], [0, 2, 0], [0, 0, -1], [1.5, 1, 1])],
        [1.0, 2.0, 0.5, 1.5],
        start=E3.point([3.0, -2.0, 1.0]),
        name="frechet_euclidean",
    )

    out["frechet_hyperboloid"] = make_frechet_mean(
        H2,
        [exp_map(o, r * _unit(o, a)) for r, a in ((1.0, 0.0), (1.5, 2.0), (0.7, 4.0))],
        [1.0, 1.0, 2.0],
        start=exp_map(o, 2.5 * _unit(o, 1.0)),
        name="frechet_hyperboloid",
    )

    S3 = Chart("spd", 3)
    I3 = S3.origin()
    rng = np.random.default_rng(20160115)
    spd_anchors = []
    for _ in range(3):
        w = rng.standard_normal((3, 3))
        v = Tangent(I3, 0.5 * (w + w.T))
        spd_anchors.append(exp_map(I3, v * (1.2 / norm(v))))
    out["frechet_spd"] = make_frechet_mean(
        S3, spd_anchors, [1.0, 0.5, 1.5], start=I3, name="frechet_spd"
    )

    A = S2.point([[2.0, 0.3], [0.3, 1.0]])
    B = S2.point([[1.0, -0.2], [-0.2, 3.0]])
    out["karcher_spd_midpoint"] = make_frechet_mean(
        S2,
        [A, B],
        [1.0, 1.0],
        start=S2.point([[4.0, 1.0], [1.0, 1.0]]),
        name="karcher_spd_midpoint",
        closed_form=geodesic_point(A, B, 0.5),
    )

    out["skew_vip"] = make_skew_vip(
        0.1, BallSet(E2.origin(), 1.0), start=E2.point([0.5, 0.3]), name="skew_vip"
    )

    c = np.array([0.2, -0.1])
    tri = [E2.point(c + [math.cos(t), math.sin(t)]) for t in (math.pi / 2, 7 * math.pi / 6, 11 * math.pi / 6)]
    out["fermat_weber_triangle"] = make_fermat_weber(
        E2, tri, start=E2.point([0.9, 0.7]), name="fermat_weber_triangle"
    )
    return out


def problem_from_descriptor(desc: dict) -> ProblemInstance:
    """Build a :class:`ProblemInstance` from a JSON-compatible descriptor tree."""
    try:
        chart = Chart(desc["chart"]["kind"], int(desc["chart"]["n"]))
        X = field_from_descriptor(desc["field"], chart)
        omega = set_from_descriptor(desc.get("set", {"set": "whole"}), chart)
    except (KeyError, TypeError) as exc:
        raise FieldError(f"malformed problem descriptor: missing {exc}") from None
    f = objective_from_descriptor(desc["field"], chart)
    start = desc.get("start")
    ref = desc.get("reference") or desc.get("oracle")
    return ProblemInstance(
        chart,
        X,
        omega,
        f,
        None if ref is None else point_from_record(ref, chart),
        None if start is None else point_from_record(start, chart),
        float(desc.get("lipschitz", 1.0)),
        desc.get("name", ""),
    )


def _spec_from_record(rec: dict) -> BenchmarkSpec:
    inst = problem_from_descriptor(rec)
    return BenchmarkSpec(
        rec["name"],
        inst,
        point_from_record(rec["oracle"], inst.chart),
        rec["oracle_kind"],
        rec.get("provenance", ""),
        bool(rec.get("set_valued", False)),
    )


def write_fixtures(path: str | Path, specs: dict[str, BenchmarkSpec] | None = None) -> None:
    specs = build_benchmarks() if specs is None else specs
    records = [s.to_record() for s in specs.values()]
    Path(path).write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")


def load_fixtures(path: str | Path | None = None) -> dict[str, BenchmarkSpec]:
    """Load cached benchmarks; oracles are re-verified (feasible, residual <= 1e-6)."""
    if path is None:
        text = resources.files("hadprox").joinpath("data").joinpath(FIXTURE_FILE).read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return {rec["name"]: _spec_from_record(rec) for rec in json.loads(text)}


def benchmark_names() -> list[str]:
    return list(load_fixtures())


def get_benchmark(name: str) -> BenchmarkSpec:
    specs = load_fixtures()
    if name not in specs:
        raise KeyError(f"unknown benchmark {name!r}; known: {', '.join(specs)}")
    return specs[name]


if __name__ == "__main__":
    target = Path(__file__).with_name("data") / FIXTURE_FILE
    write_fixtures(target)
    print(f"wrote {target}")
