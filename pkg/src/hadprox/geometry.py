"""
Closed-form Hadamard manifold primitives.

Three charts are supported:

* ``euclidean``  -- R^n with the dot product.
* ``hyperboloid`` -- hyperbolic n-space as the upper sheet
  ``{x in R^{n+1} : <x,x>_L = -1, x_0 > 0}`` of Minkowski space.
* ``spd`` -- symmetric positive definite n x n matrices with the
  affine-invariant metric ``<U,V>_P = tr(P^-1 U P^-1 V)``.

Each chart has an array backend (``chart.ops``) whose methods broadcast over
leading batch axes; the ``Point``/``Tangent`` layer on top validates
invariants and rejects mixed charts.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import TOL

__all__ = [
    "Chart",
    "Point",
    "Tangent",
    "GeometryError",
    "ChartMismatchError",
    "InvariantViolation",
    "exp_map",
    "log_map",
    "dist",
    "transport",
    "inner",
    "norm",
    "grad_dist_sq",
    "geodesic_point",
    "comparison_slacks",
    "zero_tangent",
    "tangent_basis",
    "random_points",
    "random_tangent",
    "point_to_record",
    "point_from_record",
    "format_real",
]

KINDS = ("euclidean", "hyperboloid", "spd")


class GeometryError(ValueError):
    pass


class ChartMismatchError(GeometryError):
    pass


class InvariantViolation(GeometryError):
    pass


# ---------------------------------------------------------------------------
# array backends


def _minkowski(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _eig_apply(a, fn):
    w, u = np.linalg.eigh(a)
    return _sym((u * fn(w)[..., None, :]) @ np.swapaxes(u, -1, -2))


class EuclideanOps:
    kind = "euclidean"

    def __init__(self, n: int):
        self.n = n
        self.point_shape = (n,)
        self.dim = n

    def origin(self):
        return np.zeros(self.n)

    def exp(self, p, v):
        return p + v

    def log(self, p, q):
        return q - p

    def dist(self, p, q):
        return np.linalg.norm(q - p, axis=-1)

    def transport(self, p, q, v):
        return np.array(v, dtype=float, copy=True)

    def inner(self, p, u, v):
        return np.sum(u * v, axis=-1)

    def project_tangent(self, p, w):
        return np.asarray(w, dtype=float)

    def basis(self, p):
        return list(np.eye(self.n))

    def point_violation(self, x):
        return None

    def tangent_violation(self, base, v):
        return None


class HyperboloidOps:
    kind = "hyperboloid"

    def __init__(self, n: int):
        self.n = n
        self.point_shape = (n + 1,)
        self.dim = n

    def origin(self):
        x = np.zeros(self.n + 1)
        x[0] = 1.0
        return x

    def _renormalize(self, x):
        x = np.array(x, dtype=float, copy=True)
        x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
        return x

    def exp(self, p, v):
        nv = np.sqrt(np.maximum(_minkowski(v, v), 0.0))[..., None]
        small = nv < TOL.small_vector
        safe = np.where(small, 1.0, nv)
        out = np.cosh(nv) * p + np.sinh(nv) * v / safe
        out = np.where(small, p + v, out)
        return self._renormalize(out)

    def dist(self, p, q):
        diff = q - p
        chord = np.sqrt(np.maximum(_minkowski(diff, diff), 0.0))
        return 2.0 * np.arcsinh(0.5 * chord)

    def log(self, p, q):
        alpha = np.maximum(-_minkowski(p, q), 1.0)[..., None]
        u = q - alpha * p
        nu = np.sqrt(np.maximum(_minkowski(u, u), 0.0))[..., None]
        d = self.dist(p, q)[..., None]
        factor = np.where(nu > 1e-300, d / np.where(nu > 1e-300, nu, 1.0), 1.0)
        return factor * u

    def transport(self, p, q, v):
        alpha = np.maximum(-_minkowski(p, q), 1.0)
        coef = (_minkowski(q, v) / (1.0 + alpha))[..., None]
        return v + coef * (p + q)

    def inner(self, p, u, v):
        return _minkowski(u, v)

    def project_tangent(self, p, w):
        return w + _minkowski(p, w)[..., None] * p

    def basis(self, p):
        o = self.origin()
        return [self.transport(o, p, e) for e in np.eye(self.n + 1)[1:]]

    def point_violation(self, x):
        if x[0] <= 0:
            return "first coordinate must be positive"
        err = abs(_minkowski(x, x) + 1.0)
        if err > TOL.sheet * max(1.0, x[0] ** 2):
            return f"point off the sheet: |<p,p>_L + 1| = {err:.3e}"
        return None

    def tangent_violation(self, base, v):
        err = abs(_minkowski(base, v))
        scale = max(1.0, float(np.linalg.norm(base) * np.linalg.norm(v)))
        if err > TOL.sheet * scale:
            return f"vector not tangent: <p,v>_L = {err:.3e}"
        return None


class SpdOps:
    kind = "spd"

    def __init__(self, n: int):
        self.n = n
        self.point_shape = (n, n)
        self.dim = n * (n + 1) // 2

    def origin(self):
        return np.eye(self.n)

    def _roots(self, p):
        w, u = np.linalg.eigh(p)
        w = np.maximum(w, TOL.spd_eig_floor)
        ut = np.swapaxes(u, -1, -2)
        sw = np.sqrt(w)
        ps = (u * sw[..., None, :]) @ ut
        pis = (u * (1.0 / sw)[..., None, :]) @ ut
        return _sym(ps), _sym(pis)

    def exp(self, p, v):
        ps, pis = self._roots(p)
        mid = _eig_apply(_sym(pis @ v @ pis), np.exp)
        return _sym(ps @ mid @ ps)

    def log(self, p, q):
        ps, pis = self._roots(p)
        mid = _eig_apply(
            _sym(pis @ q @ pis), lambda w: np.log(np.maximum(w, TOL.spd_eig_floor))
        )
        return _sym(ps @ mid @ ps)

    def dist(self, p, q):
        _, pis = self._roots(p)
        w = np.linalg.eigvalsh(_sym(pis @ q @ pis))
        return np.sqrt(np.sum(np.log(np.maximum(w, TOL.spd_eig_floor)) ** 2, axis=-1))

    def transport(self, p, q, v):
        ps, pis = self._roots(p)
        half = _eig_apply(_sym(pis @ q @ pis), lambda w: np.sqrt(np.maximum(w, 0.0)))
        e = ps @ half @ pis
        return _sym(e @ v @ np.swapaxes(e, -1, -2))

    def inner(self, p, u, v):
        a = np.linalg.solve(p, u)
        b = np.linalg.solve(p, v)
        return np.sum(a * np.swapaxes(b, -1, -2), axis=(-2, -1))

    def project_tangent(self, p, w):
        return _sym(w)

    def basis(self, p):
        ps, _ = self._roots(p)
        out = []
        for i in range(self.n):
            for j in range(i, self.n):
                e = np.zeros((self.n, self.n))
                if i == j:
                    e[i, i] = 1.0
                else:
                    e[i, j] = e[j, i] = 1.0 / math.sqrt(2.0)
                out.append(_sym(ps @ e @ ps))
        return out

    def point_violation(self, x):
        scale = max(1.0, float(np.max(np.abs(x))))
        if np.max(np.abs(x - x.T)) > TOL.structural * scale:
            return "matrix not symmetric"
        if np.linalg.eigvalsh(_sym(x))[0] <= 0:
            return "matrix not positive definite"
        return None

    def tangent_violation(self, base, v):
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.max(np.abs(v - v.T)) > TOL.structural * scale:
            return "tangent matrix not symmetric"
        return None


@functools.lru_cache(maxsize=None)
def _ops(kind: str, n: int):
    return {"euclidean": EuclideanOps, "hyperboloid": HyperboloidOps, "spd": SpdOps}[kind](n)


# ---------------------------------------------------------------------------
# validated point layer


@dataclass(frozen=True)
class Chart:
    """A Hadamard chart: ``kind`` in {euclidean, hyperboloid, spd}, dimension ``n``."""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"unknown chart kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 1:
            raise GeometryError(f"chart dimension must be a positive integer, got {self.n}")

    @property
    def ops(self):
        return _ops(self.kind, self.n)

    @classmethod
    def parse(cls, text: str) -> "Chart":
        """Parse ``"kind:n"``, e.g. ``"hyperboloid:2"``."""
        kind, _, n = text.partition(":")
        if not n:
            raise GeometryError(f"chart must look like kind:n, got {text!r}")
        try:
            return cls(kind.strip().lower(), int(n))
        except ValueError as exc:
            raise GeometryError(f"bad chart {text!r}: {exc}") from None

    def __str__(self):
        return f"{self.kind}:{self.n}"

    def point(self, coords) -> "Point":
        return Point(self, coords)

    def origin(self) -> "Point":
        return Point(self, self.ops.origin())


def _as_coords(chart: Chart, coords) -> np.ndarray:
    arr = np.array(coords, dtype=float)
    shape = chart.ops.point_shape
    if arr.shape != shape:
        if arr.size == int(np.prod(shape)):
            arr = arr.reshape(shape)
        else:
            raise GeometryError(f"{chart} expects coordinates of shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation("non-finite coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Point:
    chart: Chart
    coords: np.ndarray

    def __post_init__(self):
        arr = _as_coords(self.chart, self.coords)
        problem = self.chart.ops.point_violation(arr)
        if problem:
            raise InvariantViolation(f"{self.chart}: {problem}")
        object.__setattr__(self, "coords", arr)

    def __repr__(self):
        return f"Point({self.chart}, {np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True, eq=False)
class Tangent:
    base: Point
    coords: np.ndarray

    def __post_init__(self):
        arr = _as_coords(self.base.chart, self.coords)
        problem = self.base.chart.ops.tangent_violation(self.base.coords, arr)
        if problem:
            raise InvariantViolation(f"{self.base.chart}: {problem}")
        object.__setattr__(self, "coords", arr)

    @property
    def chart(self) -> Chart:
        return self.base.chart

    def _same_base(self, other: "Tangent"):
        _check_base(self.base, other)

    def __add__(self, other: "Tangent") -> "Tangent":
        self._same_base(other)
        return Tangent(self.base, self.coords + other.coords)

    def __sub__(self, other: "Tangent") -> "Tangent":
        self._same_base(other)
        return Tangent(self.base, self.coords - other.coords)

    def __mul__(self, alpha: float) -> "Tangent":
        return Tangent(self.base, float(alpha) * self.coords)

    __rmul__ = __mul__

    def __neg__(self) -> "Tangent":
        return Tangent(self.base, -self.coords)

    def __truediv__(self, alpha: float) -> "Tangent":
        return Tangent(self.base, self.coords / float(alpha))

    def __repr__(self):
        return f"Tangent(at {self.base!r}, {np.array2string(self.coords, precision=6)})"


def _check_chart(*points: Point):
    first = points[0].chart
    for p in points[1:]:
        if p.chart != first:
            raise ChartMismatchError(f"mixed charts {first} and {p.chart}")


def _same_point(a: Point, b: Point) -> bool:
    if a is b:
        return True
    scale = max(1.0, float(np.max(np.abs(a.coords))))
    return a.chart == b.chart and bool(
        np.max(np.abs(a.coords - b.coords)) <= TOL.structural * scale
    )


def _check_base(p: Point, v: Tangent):
    if v.base.chart != p.chart:
        raise ChartMismatchError(f"tangent on {v.base.chart} used at a point of {p.chart}")
    if not _same_point(p, v.base):
        raise GeometryError("tangent vector is not based at the given point")


# ---------------------------------------------------------------------------
# operations


def exp_map(p: Point, v: Tangent) -> Point:
    _check_base(p, v)
    return Point(p.chart, p.chart.ops.exp(p.coords, v.coords))


def log_map(p: Point, q: Point) -> Tangent:
    _check_chart(p, q)
    return Tangent(p, p.chart.ops.log(p.coords, q.coords))


def dist(p: Point, q: Point) -> float:
    _check_chart(p, q)
    return float(p.chart.ops.dist(p.coords, q.coords))


def transport(p: Point, q: Point, v: Tangent) -> Tangent:
    """Parallel transport of ``v`` from ``p`` to ``q`` along the geodesic."""
    _check_chart(p, q)
    _check_base(p, v)
    return Tangent(q, p.chart.ops.transport(p.coords, q.coords, v.coords))


def inner(p: Point, u: Tangent, v: Tangent) -> float:
    _check_base(p, u)
    _check_base(p, v)
    return float(p.chart.ops.inner(p.coords, u.coords, v.coords))


def norm(v: Tangent) -> float:
    return math.sqrt(max(inner(v.base, v, v), 0.0))


def zero_tangent(p: Point) -> Tangent:
    return Tangent(p, np.zeros(p.chart.ops.point_shape))


def grad_dist_sq(center: Point, p: Point) -> Tangent:
    """Riemannian gradient of ``d^2(center, .)`` at ``p``: ``-2 log_p(center)``."""
    _check_chart(center, p)
    return -2.0 * log_map(p, center)


def geodesic_point(p: Point, q: Point, t: float) -> Point:
    _check_chart(p, q)
    if not (0.0 <= t <= 1.0):
        raise GeometryError(f"geodesic parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return p
    if t == 1.0:
        return q
    return exp_map(p, t * log_map(p, q))


def comparison_slacks(p1: Point, p2: Point, p3: Point) -> tuple[float, float]:
    """
    Slacks of the two nonpositive-curvature comparison inequalities.

    Returns ``(s1, s2)`` with

    * ``s1 = d^2(p1,p2) - [d^2(p1,p3) + d^2(p3,p2) - 2<log_p3 p1, log_p3 p2>]``
    * ``s2 = <log_p2 p1, log_p2 p3> + <log_p3 p1, log_p3 p2> - d^2(p2,p3)``

    Both are nonnegative on a Hadamard manifold and vanish on flat charts.
    """
    _check_chart(p1, p2, p3)
    return comparison_slacks_array(p1.chart, p1.coords, p2.coords, p3.coords)


def comparison_slacks_array(chart: Chart, p1, p2, p3):
    ops = chart.ops
    l31, l32 = ops.log(p3, p1), ops.log(p3, p2)
    l21, l23 = ops.log(p2, p1), ops.log(p2, p3)
    d12 = ops.dist(p1, p2)
    d13 = ops.dist(p1, p3)
    d32 = ops.dist(p3, p2)
    g3 = ops.inner(p3, l31, l32)
    g2 = ops.inner(p2, l21, l23)
    s1 = d12**2 - (d13**2 + d32**2 - 2.0 * g3)
    s2 = g2 + g3 - d32**2
    if np.ndim(s1) == 0:
        return float(s1), float(s2)
    return s1, s2


def tangent_basis(p: Point) -> list[Tangent]:
    """Orthonormal basis of the tangent space at ``p``."""
    return [Tangent(p, e) for e in p.chart.ops.basis(p.coords)]


# ---------------------------------------------------------------------------
# sampling


def random_tangent_array(chart: Chart, rng: np.random.Generator, base, max_norm: float):
    """Tangent vectors at ``base`` (batched) with norm uniform in ``[0, max_norm]``."""
    ops = chart.ops
    base = np.asarray(base, dtype=float)
    w = rng.standard_normal(base.shape)
    if chart.kind == "spd":
        ps, _ = ops._roots(base)
        w = ps @ _sym(w) @ ps
    else:
        w = ops.project_tangent(base, w)
    nw = np.sqrt(np.maximum(ops.inner(base, w, w), 1e-300))
    radius = max_norm * rng.uniform(size=nw.shape)
    scale = radius / nw
    scale = scale[..., None, None] if chart.kind == "spd" else scale[..., None]
    return w * scale


def random_point_array(chart: Chart, rng: np.random.Generator, size: int, radius: float = 2.0):
    """``size`` points within geodesic distance ``radius`` of the chart origin."""
    ops = chart.ops
    o = np.broadcast_to(ops.origin(), (size,) + ops.point_shape).copy()
    return ops.exp(o, random_tangent_array(chart, rng, o, radius))


def random_points(chart: Chart, rng: np.random.Generator, size: int, radius: float = 2.0):
    return [Point(chart, x) for x in random_point_array(chart, rng, size, radius)]


def random_tangent(p: Point, rng: np.random.Generator, max_norm: float = 1.0) -> Tangent:
    return Tangent(p, random_tangent_array(p.chart, rng, p.coords, max_norm))


# ---------------------------------------------------------------------------
# serialization


def format_real(x: float) -> str:
    return f"{float(x):.17g}"


def point_to_record(p: Point) -> dict:
    return {
        "chart": p.chart.kind,
        "n": p.chart.n,
        "coords": [float(format_real(x)) for x in p.coords.ravel()],
    }


def point_from_record(record: dict, chart: Chart | None = None) -> Point:
    try:
        rec_chart = Chart(record["chart"], int(record["n"]))
        coords: Sequence[float] = record["coords"]
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"malformed point record {record!r}") from exc
    if chart is not None and rec_chart != chart:
        raise ChartMismatchError(f"record on {rec_chart}, expected {chart}")
    return Point(rec_chart, coords)
