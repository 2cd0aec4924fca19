"""Tensor grids on the truncated cone, boundary maps, costs and Gibbs kernels.

Cone nodes are flattened base-major: node ``j`` sits at base index
``j // n_r`` and radius index ``j % n_r``, so any length-``N`` vector
reshapes to an ``(n_x, n_r)`` array.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cone_geometry import cone_distance_sq

__all__ = [
    "Grid",
    "BoundaryMap",
    "CostMatrices",
    "GibbsFactors",
    "build_grid",
    "boundary_eval",
    "build_cost_matrices",
    "build_gibbs",
    "peakon_map",
    "reflection_map",
    "identity_map",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform base nodes, a radius ladder containing 1, and a time ladder."""

    xs: np.ndarray
    rs: np.ndarray
    ts: np.ndarray
    unit_radius_index: int

    def __post_init__(self):
        rs = self.rs
        if np.any(rs <= 0) or np.any(np.diff(rs) <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        if np.count_nonzero(rs == 1.0) != 1 or rs[self.unit_radius_index] != 1.0:
            raise ValueError("exactly one radius node must equal 1")
        if len(self.ts) < 2 or self.ts[-1] <= 0:
            raise ValueError("need at least two time levels and T > 0")
        for a in (self.xs, self.rs, self.ts):
            a.setflags(write=False)

    @property
    def nx(self) -> int:
        return len(self.xs)

    @property
    def nr(self) -> int:
        return len(self.rs)

    @property
    def n(self) -> int:
        return self.nx * self.nr

    @property
    def K(self) -> int:
        return len(self.ts)

    @property
    def T(self) -> float:
        return float(self.ts[-1])

    @property
    def dt(self) -> float:
        return self.T / (self.K - 1)

    @property
    def base_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.nx), self.nr)

    @property
    def radius_index(self) -> np.ndarray:
        return np.tile(np.arange(self.nr), self.nx)

    @property
    def node_x(self) -> np.ndarray:
        return self.xs[self.base_index]

    @property
    def node_r(self) -> np.ndarray:
        return self.rs[self.radius_index]

    @property
    def first_slice(self) -> np.ndarray:
        """Flat indices of the ``r = 1`` node above each base node."""
        return np.arange(self.nx) * self.nr + self.unit_radius_index

    def scaled(self, lam: float) -> "Grid":
        """Same grid with all radii multiplied by ``lam`` (no unit-node check)."""
        g = object.__new__(Grid)
        object.__setattr__(g, "xs", self.xs)
        object.__setattr__(g, "rs", lam * self.rs)
        object.__setattr__(g, "ts", self.ts)
        object.__setattr__(g, "unit_radius_index", self.unit_radius_index)
        return g


def build_grid(nx: int, nr: int, r_lo: float, r_hi: float, K: int, T: float = 1.0) -> Grid:
    """Build the uniform tensor grid, snapping the nearest radius node to 1."""
    if nx < 2 or nr < 2 or K < 2:
        raise ValueError("need nx >= 2, nr >= 2 and K >= 2")
    if not T > 0:
        raise ValueError("T must be positive")
    if not r_lo > 0:
        raise ValueError("r_lo must be positive")
    if r_lo >= r_hi:
        raise ValueError(f"infeasible radius bounds [{r_lo}, {r_hi}]")
    if not r_lo <= 1.0 <= r_hi:
        raise ValueError(f"radius 1 not in [{r_lo}, {r_hi}]")
    xs = np.linspace(0.0, 1.0, nx)
    rs = np.linspace(r_lo, r_hi, nr)
    j = int(np.argmin(np.abs(rs - 1.0)))
    rs[j] = 1.0
    ts = np.linspace(0.0, T, K)
    return Grid(xs, rs, ts, j)


@dataclass(frozen=True)
class BoundaryMap:
    """Final-time map ``h`` of the coupling plan, together with ``|h'|``.

    ``kind`` is ``"piecewise-linear"``, ``"analytic-reflection"``
    (``h(x) = 1 - x``) or ``"identity"``. Piecewise-linear maps are given by
    ``breakpoints`` ``0 = b_0 < ... < b_m = 1``, per-piece ``slopes`` and the
    value ``h0 = h(0)``; they are continuous by construction.
    """

    kind: str
    breakpoints: tuple = ()
    slopes: tuple = ()
    h0: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in ("piecewise-linear", "analytic-reflection", "identity"):
            raise ValueError(f"unknown boundary map kind {self.kind!r}")
        if self.kind != "piecewise-linear":
            return
        b = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        if len(b) < 2 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase from 0 to 1")
        if len(s) != len(b) - 1:
            raise ValueError("need one slope per piece")
        if np.any(s == 0):
            raise ValueError("slopes must be non-zero")
        knots = self.h0 + np.concatenate([[0.0], np.cumsum(s * np.diff(b))])
        if knots.min() < -1e-12 or knots.max() > 1 + 1e-12:
            raise ValueError("piecewise-linear map leaves [0, 1]")

    def __call__(self, x):
        return boundary_eval(self, x)

    def _knots(self):
        b = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        return b, s, self.h0 + np.concatenate([[0.0], np.cumsum(s * np.diff(b))])


def peakon_map() -> BoundaryMap:
    """``h(x) = 1.4 x`` for ``x <= 0.5`` and ``0.6 x + 0.4`` beyond."""
    return BoundaryMap("piecewise-linear", (0.0, 0.5, 1.0), (1.4, 0.6), 0.0, name="peakon")


def reflection_map() -> BoundaryMap:
    return BoundaryMap("analytic-reflection", name="reflection")


def identity_map() -> BoundaryMap:
    return BoundaryMap("identity", name="identity")


def boundary_eval(bmap: BoundaryMap, x):
    """Return ``(h(x), |h'(x)|)``; scalar in, scalars out.

    At an interior breakpoint the slope of the piece on the left is used.
    """
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0) | (xa > 1)):
        raise ValueError("boundary map evaluated outside [0, 1]")
    if bmap.kind == "identity":
        h, jac = xa.copy(), np.ones_like(xa)
    elif bmap.kind == "analytic-reflection":
        h, jac = 1.0 - xa, np.ones_like(xa)
    else:
        b, s, knots = bmap._knots()
        piece = np.clip(np.searchsorted(b, xa, side="left") - 1, 0, len(s) - 1)
        h = knots[piece] + s[piece] * (xa - b[piece])
        jac = np.abs(s[piece])
        h = np.clip(h, 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(h), float(jac)
    return h, jac


@dataclass(frozen=True)
class CostMatrices:
    """Squared cone distances between nodes (``D0``) and to mapped endpoints (``D1``).

    ``D1[i, j]`` is the squared distance from node ``i`` to
    ``[h(x_j), sqrt|h'(x_j)|]`` where ``x_j`` is the base coordinate of node
    ``j``; ``target_x``/``target_r`` hold those endpoints per base node.
    """

    D0: np.ndarray
    D1: np.ndarray
    target_x: np.ndarray
    target_r: np.ndarray


def build_cost_matrices(grid: Grid, bmap: BoundaryMap) -> CostMatrices:
    x, r = grid.node_x, grid.node_r
    D0 = cone_distance_sq(x[:, None], r[:, None], x[None, :], r[None, :])
    np.fill_diagonal(D0, 0.0)
    D0 = 0.5 * (D0 + D0.T)

    hx, jac = boundary_eval(bmap, grid.xs)
    hr = np.sqrt(jac)
    if bmap.kind == "piecewise-linear":
        on_break = np.isin(grid.xs, np.asarray(bmap.breakpoints)[1:-1])
        for i in np.flatnonzero(on_break):
            logger.info("base node %d sits on a breakpoint of h; using left slope", i)
    lo, hi = grid.rs[0], grid.rs[-1]
    outside = (hr < lo) | (hr > hi)
    if np.any(outside):
        clamped = np.clip(hr[outside], lo, hi)
        warnings.warn(
            f"{outside.sum()} mapped radii sqrt|h'| lie outside [{lo}, {hi}] "
            f"(nearest admissible: {np.unique(clamped)}); using unclamped targets",
            RuntimeWarning,
            stacklevel=2,
        )
    tx = hx[grid.base_index]
    tr = hr[grid.base_index]
    D1 = cone_distance_sq(x[:, None], r[:, None], tx[None, :], tr[None, :])
    return CostMatrices(D0, D1, hx, hr)


@dataclass(frozen=True)
class GibbsFactors:
    """Log Gibbs kernels of the cyclic chain plus the grid they live on.

    ``log_xi = -(K-1)/(T eps) D0`` links consecutive levels and
    ``log_xi_close = -(alpha/eps) D1`` closes the cycle from level ``K``
    back to the starting node. Only the ``r = 1`` nodes in
    ``grid.first_slice`` may start a path.
    """

    grid: Grid
    eps: float
    alpha: float
    log_xi: np.ndarray
    log_xi_close: np.ndarray
    costs: CostMatrices
    restrict_support: bool = True

    @property
    def xi(self) -> np.ndarray:
        return np.exp(self.log_xi)

    @property
    def xi_close(self) -> np.ndarray:
        return np.exp(self.log_xi_close)

    @property
    def log_close(self) -> np.ndarray:
        """Closing kernel restricted to first-slice columns, shape ``(N, nx)``."""
        return self.log_xi_close[:, self.grid.first_slice]

    @property
    def first_slice(self) -> np.ndarray:
        return self.grid.first_slice

    @property
    def support(self) -> np.ndarray:
        """Nodes that may carry mass at levels ``k >= 2``.

        Level 1 holds unit mass on ``r = 1`` and every level needs mean
        ``r^2`` equal to 1. If 1 is the smallest or largest radius this
        forces all mass onto ``r = 1``, so the other nodes are excluded
        outright instead of being driven to zero by diverging duals.
        Disabled when ``restrict_support`` is false.
        """
        g = self.grid
        if self.restrict_support and (g.rs[0] == 1.0 or g.rs[-1] == 1.0):
            return g.node_r == 1.0
        return np.ones(g.n, dtype=bool)

    def underflows(self) -> bool:
        """True when a dense kernel would contain exact zeros."""
        tiny = np.log(np.finfo(float).tiny)
        return bool(self.log_xi.min() < tiny or self.log_close.min() < tiny)


def build_gibbs(
    costs: CostMatrices, grid: Grid, eps: float, alpha: float, restrict_support: bool = True
) -> GibbsFactors:
    if not eps > 0 or not alpha > 0:
        raise ValueError("eps and alpha must be positive")
    log_xi = -((grid.K - 1) / (grid.T * eps)) * costs.D0
    log_xi_close = -(alpha / eps) * costs.D1
    if not (np.all(np.isfinite(log_xi)) and np.all(np.isfinite(log_xi_close))):
        raise FloatingPointError("non-finite Gibbs exponents")
    return GibbsFactors(grid, float(eps), float(alpha), log_xi, log_xi_close, costs, restrict_support)
