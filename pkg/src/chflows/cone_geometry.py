"""Metric geometry of the cone over the unit interval.

A cone point ``[x, r]`` pairs a base coordinate ``x`` in ``[0, 1]`` with a
radius ``r >= 0``. All points with ``r = 0`` are identified with the apex.
The cone over an interval is flat: the development map
``[x, r] -> (r cos x, r sin x)`` is an isometry onto a planar sector of
opening angle 1, so geodesics are straight segments in the plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConePoint",
    "ConeVelocity",
    "APEX",
    "base_distance",
    "cone_distance",
    "cone_distance_sq",
    "develop",
    "undevelop",
    "cone_geodesic",
    "metric_norm_sq",
]

DEFAULT_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class ConePoint:
    """Point ``[x, r]`` on the cone; the apex is stored with ``x = 0``."""

    x: float
    r: float

    def __post_init__(self):
        x, r = float(self.x), float(self.r)
        if not (np.isfinite(x) and np.isfinite(r)):
            raise ValueError(f"non-finite cone point ({x}, {r})")
        if r < 0:
            raise ValueError(f"radius must be non-negative, got {r}")
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"base coordinate must lie in [0, 1], got {x}")
        if r == 0.0:
            x = 0.0
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", r)

    @property
    def is_apex(self) -> bool:
        return self.r == 0.0

    def isclose(self, other: "ConePoint", atol: float = DEFAULT_ATOL) -> bool:
        if self.is_apex and other.is_apex:
            return True
        return abs(self.x - other.x) <= atol and abs(self.r - other.r) <= atol

    def __eq__(self, other):
        if not isinstance(other, ConePoint):
            return NotImplemented
        return self.isclose(other)

    __hash__ = None

    def scaled(self, lam: float) -> "ConePoint":
        """Radial dilation ``[x, lam r]``."""
        return ConePoint(self.x, lam * self.r)


APEX = ConePoint(0.0, 0.0)


@dataclass(frozen=True)
class ConeVelocity:
    dx: float
    dr: float

    def __post_init__(self):
        if not (np.isfinite(self.dx) and np.isfinite(self.dr)):
            raise ValueError("velocity components must be finite")


def base_distance(x1: float, x2: float) -> float:
    """Euclidean distance on the base interval ``[0, 1]``."""
    for x in (x1, x2):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"base coordinate outside [0, 1]: {x}")
    return abs(x1 - x2)


def cone_distance_sq(x1, r1, x2, r2):
    """Squared cone distance, vectorised over numpy broadcasting.

    No range checks are made on the base coordinates; the angular gap is
    clamped at pi so synthetic inputs far apart route through the apex.
    """
    x1, r1, x2, r2 = (np.asarray(a, dtype=float) for a in (x1, r1, x2, r2))
    gap = np.minimum(np.abs(x1 - x2), np.pi)
    # same as r1^2 + r2^2 - 2 r1 r2 cos(gap), without cancellation for close points
    return (r1 - r2) ** 2 + 4.0 * r1 * r2 * np.sin(0.5 * gap) ** 2


def cone_distance(p: ConePoint, q: ConePoint) -> float:
    if p.is_apex or q.is_apex:
        return p.r + q.r
    if p.x == q.x:
        return abs(p.r - q.r)
    return float(np.sqrt(cone_distance_sq(p.x, p.r, q.x, q.r)))


def develop(p: ConePoint) -> tuple[float, float]:
    """Planar image ``(r cos x, r sin x)`` of a cone point."""
    return (p.r * np.cos(p.x), p.r * np.sin(p.x))


def undevelop(u: float, v: float) -> ConePoint:
    """Inverse of :func:`develop` on the sector of angles ``[0, 1]``."""
    r = float(np.hypot(u, v))
    if r == 0.0:
        return APEX
    x = float(np.arctan2(v, u))
    # round-off can push the angle a hair outside the sector
    return ConePoint(min(max(x, 0.0), 1.0), r)


def cone_geodesic(p: ConePoint, q: ConePoint, s: float) -> ConePoint:
    """Point at parameter ``s`` on the minimising geodesic from ``p`` to ``q``.

    The geodesic is the straight segment between the developed images, so
    the returned point has constant-speed parametrisation. Endpoints are
    returned exactly.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"geodesic parameter must lie in [0, 1], got {s}")
    if s == 0.0:
        return p
    if s == 1.0:
        return q
    if p.is_apex and q.is_apex:
        return APEX
    if not (p.is_apex or q.is_apex) and abs(p.x - q.x) >= np.pi:
        raise ValueError("base points at distance >= pi: geodesic not unique")
    if p.is_apex or q.is_apex or p.x == q.x:
        # radial segment, possibly through the apex
        x = q.x if p.is_apex else p.x
        return ConePoint(x, abs((1.0 - s) * p.r + s * q.r))
    pu, pv = develop(p)
    qu, qv = develop(q)
    return undevelop((1.0 - s) * pu + s * qu, (1.0 - s) * pv + s * qv)


def metric_norm_sq(p: ConePoint, v: ConeVelocity) -> float:
    """Squared length ``r^2 dx^2 + dr^2`` of a tangent vector."""
    return p.r * p.r * v.dx * v.dx + v.dr * v.dr
