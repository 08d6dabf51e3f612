"""Numerical tolerances shared by every module and test."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    geometric: float = 1e-8
    structural: float = 1e-12
    # |<p,p>_L + 1| on the hyperboloid, scaled by max(1, p0^2)
    sheet: float = 1e-10
    spd_eig_floor: float = 1e-14
    small_vector: float = 1e-12
    isometry: float = 1e-9
    flat_equality: float = 1e-10
    monitor: float = 1e-7
    exact_monitor: float = 1e-9
    exact_inner: float = 1e-12
    boundary: float = 1e-9


TOL = Tolerances()
