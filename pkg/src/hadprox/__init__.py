"""
hadprox: inexact proximal point method for monotone variational inequalities
and constrained convex optimization on Hadamard manifolds.

Charts: Euclidean space, the hyperboloid model of hyperbolic space and the
symmetric positive definite matrices with the affine-invariant metric.
"""

__version__ = "0.1.0"

from .geometry import Chart, Point, Tangent, dist, exp_map, log_map, transport  # noqa: E402
from .solver import ProblemInstance, Schedule, StopRule, run_ippa  # noqa: E402

__all__ = [
    "__version__",
    "Chart",
    "Point",
    "Tangent",
    "dist",
    "exp_map",
    "log_map",
    "transport",
    "ProblemInstance",
    "Schedule",
    "StopRule",
    "run_ippa",
]
