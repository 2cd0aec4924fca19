"""Smooth Lagrangian reference flows and the short-time optimality checks.

Each base atom carries a position ``phi`` and a radius ``lam`` obeying

    lam phi'' + 2 lam' phi' + (1/2) lam dP(t, phi) = 0
    lam'' - lam phi'^2 + lam P(t, phi) = 0

for a prescribed pressure ``P(t, x)`` with spatial derivative ``dP``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cone_geometry import ConePoint, cone_distance_sq, develop
from .generalized_flows import DiscretePathMeasure, lift_deterministic

__all__ = [
    "LagrangianState",
    "Trajectory",
    "BlowUpError",
    "NonInvertibleFlowError",
    "GVReport",
    "geodesic_initial_state",
    "integrate_geodesic",
    "energy",
    "eulerian_consistency",
    "gv_condition_check",
]

LAMBDA_FLOOR = 1e-8


class BlowUpError(RuntimeError):
    """The radius of some atom reached the floor: the flow hits the apex."""

    def __init__(self, t: float, atoms):
        self.t = t
        self.atoms = list(map(int, atoms))
        super().__init__(f"lambda fell below the floor at t={t:.6g} for atoms {self.atoms}")


class NonInvertibleFlowError(ValueError):
    """Atoms overlap, so the Eulerian fields cannot be reconstructed."""


@dataclass(frozen=True)
class LagrangianState:
    phi: np.ndarray
    lam: np.ndarray
    dphi: np.ndarray
    dlam: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.phi, self.lam, self.dphi, self.dlam)]
        if len({a.shape for a in arrays}) != 1:
            raise ValueError("state components must share one shape")
        if np.any(arrays[1] <= 0):
            raise ValueError("lambda must be positive")
        for name, a in zip(("phi", "lam", "dphi", "dlam"), arrays):
            object.__setattr__(self, name, a)

    def pack(self) -> np.ndarray:
        return np.stack([self.phi, self.lam, self.dphi, self.dlam])


@dataclass(frozen=True)
class Trajectory:
    """Sampled states; each field has shape ``(len(ts), n_atoms)``."""

    ts: np.ndarray
    phi: np.ndarray
    lam: np.ndarray
    dphi: np.ndarray
    dlam: np.ndarray

    def state(self, n: int) -> LagrangianState:
        return LagrangianState(self.phi[n], self.lam[n], self.dphi[n], self.dlam[n])

    def point(self, n: int, atom: int) -> ConePoint:
        return ConePoint(min(max(self.phi[n, atom], 0.0), 1.0), self.lam[n, atom])

    def to_path_measure(self, masses) -> DiscretePathMeasure:
        """Lift the atoms to a path measure on the cone."""
        return lift_deterministic(self.phi.T, self.lam.T, masses, self.ts)


def geodesic_initial_state(p: ConePoint, q: ConePoint, T: float = 1.0) -> LagrangianState:
    """Position and velocity at ``t = 0`` of the constant-speed cone geodesic p -> q."""
    if p.is_apex:
        raise ValueError("geodesics leaving the apex have no Lagrangian description")
    u0 = np.array(develop(p))
    du = (np.array(develop(q)) - u0) / T
    r = p.r
    dr = (u0 @ du) / r
    dx = (u0[0] * du[1] - u0[1] * du[0]) / r ** 2
    return LagrangianState(p.x, r, dx, dr)


def _rhs(t, y, P, dP):
    phi, lam, v, w = y
    pv, gv = P(t, phi), dP(t, phi)
    return np.stack([v, w, -2.0 * w * v / lam - 0.5 * gv, lam * v * v - lam * pv])


def _zero(t, x):
    return np.zeros_like(x)


def integrate_geodesic(
    state0: LagrangianState,
    T: float,
    steps: int,
    pressure: Callable | None = None,
    grad_pressure: Callable | None = None,
    lam_floor: float = LAMBDA_FLOOR,
) -> Trajectory:
    """Implicit midpoint rule, solved by fixed-point iteration at each step.

    ``pressure(t, x)`` and ``grad_pressure(t, x)`` must accept arrays;
    both default to zero. Raises :class:`BlowUpError` as soon as some
    radius drops to ``lam_floor``.
    """
    if steps < 1 or not T > 0:
        raise ValueError("need steps >= 1 and T > 0")
    P = pressure or _zero
    dP = grad_pressure or _zero
    h = T / steps
    ts = np.linspace(0.0, T, steps + 1)
    y = state0.pack()
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    for n in range(steps):
        tm = ts[n] + 0.5 * h
        f = _rhs(tm, y, P, dP)
        if not np.all(np.isfinite(f)):
            raise ValueError(f"non-finite pressure or state at t={ts[n]:.6g}")
        y1 = y + h * f
        for _ in range(100):
            mid = 0.5 * (y + y1)
            if np.any(mid[1] <= lam_floor):
                break
            nxt = y + h * _rhs(tm, mid, P, dP)
            delta = np.max(np.abs(nxt - y1))
            y1 = nxt
            if delta <= 1e-15 * max(1.0, np.max(np.abs(y1))):
                break
        if not np.all(np.isfinite(y1)):
            raise ValueError(f"non-finite state at t={ts[n + 1]:.6g}")
        low = y1[1] <= lam_floor
        if np.any(low):
            raise BlowUpError(ts[n + 1], np.flatnonzero(low))
        y = y1
        out[n + 1] = y
    return Trajectory(ts, out[:, 0], out[:, 1], out[:, 2], out[:, 3])


def energy(traj: Trajectory, pressure: Callable | None = None) -> np.ndarray:
    """Per-atom ``lam^2 phi'^2 + lam'^2 + P lam^2`` at every sample, shape ``(S, P)``."""
    P = pressure or _zero
    psi = np.asarray(P(traj.ts[:, None], traj.phi), dtype=float) * traj.lam ** 2
    return traj.lam ** 2 * traj.dphi ** 2 + traj.dlam ** 2 + psi


@dataclass(frozen=True)
class ConsistencyReport:
    max_residual: float
    residual: np.ndarray  # (times, interior nodes)
    grid: np.ndarray


def eulerian_consistency(traj: Trajectory, grid) -> ConsistencyReport:
    """Max over interior nodes and times of ``|2 alpha - du/dx|``.

    ``u`` and ``alpha = lam'/lam`` are pushed to Eulerian form by linear
    interpolation through the atom positions; ``du/dx`` uses central
    differences on ``grid``, which must be uniform.
    """
    y = np.asarray(grid, dtype=float)
    if len(y) < 3:
        raise ValueError("need at least three grid nodes")
    h = y[1] - y[0]
    res = []
    for n in range(len(traj.ts)):
        pos = traj.phi[n]
        order = np.argsort(pos, kind="stable")
        pos = pos[order]
        if np.any(np.diff(pos) <= 0):
            raise NonInvertibleFlowError(f"atoms overlap at t={traj.ts[n]:.6g}")
        u = np.interp(y, pos, traj.dphi[n][order])
        a = np.interp(y, pos, (traj.dlam[n] / traj.lam[n])[order])
        inside = (y[1:-1] - h >= pos[0]) & (y[1:-1] + h <= pos[-1])
        div = (u[2:] - u[:-2]) / (2 * h)
        res.append(np.where(inside, np.abs(2 * a[1:-1] - div), 0.0))
    res = np.array(res)
    return ConsistencyReport(float(res.max()), res, y[1:-1])


@dataclass(frozen=True)
class GVReport:
    rho: float
    rho_condition: bool
    margin: float
    hessian_bound_required: float
    hessian_bound_observed: float
    hessian_ok: bool
    oscillation: float
    oscillation_ok: bool


def _fd(f, h=1e-4):
    return lambda t, x: (f(t, x + h) - f(t, x - h)) / (2 * h)


def gv_condition_check(
    traj: Trajectory,
    pressure: Callable,
    T: float,
    grad_pressure: Callable | None = None,
    hess_pressure: Callable | None = None,
    C0: float = 1.0,
    sup_samples: int = 201,
) -> GVReport:
    """Evaluate the three short-time sufficient conditions for optimality.

    * ``[rho^2 + (rho + 1)^2] ||P||_sup < 3 / (2 T^2)`` with
      ``rho = 2 r_max / r_min`` over the trajectory;
    * the block matrix ``[[2P + P'', P'], [P', 2P]]`` along the trajectory
      has operator norm below ``pi^2 C0 / T^2``;
    * every atom stays within cone distance ``r_min / 4`` of itself.

    ``||P||_sup`` is taken over a uniform ``sup_samples``-square grid of
    ``[0, T] x [0, 1]`` together with the trajectory points. Missing
    derivatives are replaced by central differences.
    """
    lam = traj.lam
    if np.any(lam <= 0):
        raise ValueError("trajectory must keep lambda > 0")
    r_min, r_max = float(lam.min()), float(lam.max())
    rho = 2.0 * r_max / r_min
    tt, xx = np.meshgrid(np.linspace(0, T, sup_samples), np.linspace(0, 1, sup_samples), indexing="ij")
    sup = max(
        float(np.max(np.abs(pressure(tt, xx)))),
        float(np.max(np.abs(pressure(traj.ts[:, None], traj.phi)))),
    )
    margin = 3.0 / (2.0 * T * T) - (rho ** 2 + (rho + 1.0) ** 2) * sup

    dP = grad_pressure or _fd(pressure)
    d2P = hess_pressure or _fd(dP)
    t = traj.ts[:, None] * np.ones_like(traj.phi)
    p0 = pressure(t, traj.phi) * np.ones_like(t)
    p1 = dP(t, traj.phi) * np.ones_like(t)
    p2 = d2P(t, traj.phi) * np.ones_like(t)
    blocks = np.stack([np.stack([2 * p0 + p2, p1], -1), np.stack([p1, 2 * p0], -1)], -2)
    observed = float(np.max(np.abs(np.linalg.eigvalsh(blocks))))
    required = np.pi ** 2 * C0 / T ** 2

    # pairwise distances along each atom; the maximum is the oscillation
    x = np.clip(traj.phi, 0.0, 1.0)
    osc = 0.0
    for a in range(x.shape[1]):
        d2 = cone_distance_sq(x[:, None, a], lam[:, None, a], x[None, :, a], lam[None, :, a])
        osc = max(osc, float(np.sqrt(d2.max())))
    return GVReport(
        rho, bool(margin > 0), float(margin), float(required), observed,
        observed < required, osc, osc <= r_min / 4,
    )
