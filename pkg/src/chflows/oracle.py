"""Brute-force reference solver for tiny grids.

Enumerates every admissible path, evaluates its cost point by point with
:func:`cone_distance`, and maximises the concave dual by damped Newton with
the exact Hessian. Shares no code with the message-passing solver beyond
the grid and boundary-map definitions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .cone_geometry import ConePoint, cone_distance
from .discretization import BoundaryMap, Grid, boundary_eval

__all__ = ["OracleSolution", "enumerate_paths", "exhaustive_solve"]

_MAX_PATHS = 200_000


@dataclass
class OracleSolution:
    paths: np.ndarray  # (P, K) flat node indices
    transport: np.ndarray  # per-path kinetic cost
    coupling: np.ndarray  # per-path closing penalty (alpha included)
    mu: np.ndarray  # plan weights on the paths
    duals: np.ndarray  # (K, nx)
    marginals: np.ndarray  # (K, N)
    admissible: np.ndarray  # bool per enumerated path
    eps: float

    @property
    def action(self) -> float:
        return float(self.mu @ (self.transport + self.coupling))

    @property
    def transport_action(self) -> float:
        return float(self.mu @ self.transport)

    @property
    def entropy(self) -> float:
        m = self.mu[self.mu > 0]
        return float(-(m * (np.log(m) - 1.0)).sum())

    @property
    def objective(self) -> float:
        return self.action - self.eps * self.entropy

    def moments(self, grid: Grid) -> np.ndarray:
        return (self.marginals.reshape(len(self.marginals), grid.nx, grid.nr) * grid.rs ** 2).sum(axis=2)


def enumerate_paths(grid: Grid, bmap: BoundaryMap, alpha: float):
    """All paths starting on the unit slice, with their two cost parts."""
    N, K = grid.n, grid.K
    count = grid.nx * N ** (K - 1)
    if count > _MAX_PATHS:
        raise ValueError(f"{count} paths is too many for exhaustive enumeration")
    points = [ConePoint(grid.xs[j // grid.nr], grid.rs[j % grid.nr]) for j in range(N)]
    starts = [i * grid.nr + grid.unit_radius_index for i in range(grid.nx)]
    targets = []
    for x in grid.xs:
        hx, jac = boundary_eval(bmap, float(x))
        targets.append(ConePoint(hx, np.sqrt(jac)))
    dist2 = {}

    def d2(a, b):
        key = (a, b) if a <= b else (b, a)
        if key not in dist2:
            dist2[key] = cone_distance(points[a], points[b]) ** 2
        return dist2[key]

    paths, transport, coupling = [], [], []
    dt = grid.T / (K - 1)
    for i0, s in enumerate(starts):
        for rest in itertools.product(range(N), repeat=K - 1):
            path = (s,) + rest
            paths.append(path)
            transport.append(sum(d2(path[k], path[k + 1]) for k in range(K - 1)) / dt)
            coupling.append(alpha * cone_distance(points[path[-1]], targets[i0]) ** 2)
    return np.array(paths), np.array(transport), np.array(coupling)


def _features(paths, grid):
    P, K = paths.shape
    phi = np.zeros((P, K, grid.nx))
    rows = np.arange(P)
    for k in range(K):
        phi[rows, k, paths[:, k] // grid.nr] = grid.rs[paths[:, k] % grid.nr] ** 2
    return phi.reshape(P, K * grid.nx)


def _admissible(phi, target):
    """Paths charged by at least one non-negative plan meeting the constraints."""
    P = phi.shape[0]
    b = np.full(phi.shape[1], target)
    ok = np.zeros(P, dtype=bool)
    for p in range(P):
        if ok[p]:
            continue
        c = np.zeros(P)
        c[p] = -1.0
        res = linprog(c, A_eq=phi.T, b_eq=b, bounds=(0, None), method="highs")
        if res.status != 0:
            raise RuntimeError("moment constraints are infeasible")
        ok |= res.x > 1e-9
    return ok


def exhaustive_solve(
    grid: Grid, bmap: BoundaryMap, eps: float, alpha: float, tol: float = 1e-14, maxiter: int = 500
) -> OracleSolution:
    """Maximise ``sum p / n_x - sum_paths exp(-C/eps + phi . p)`` over the duals."""
    paths, transport, coupling = enumerate_paths(grid, bmap, alpha)
    phi = _features(paths, grid)
    target = 1.0 / grid.nx
    adm = _admissible(phi, target)
    F = phi[adm]
    logw = -(transport + coupling)[adm] / eps

    def dual(p):
        e = logw + F @ p
        m = e.max()
        with np.errstate(over="ignore"):
            return p.sum() * target - np.exp(m) * np.exp(e - m).sum()

    p = np.zeros(F.shape[1])
    val = dual(p)
    for _ in range(maxiter):
        mu = np.exp(logw + F @ p)
        grad = target - F.T @ mu
        if np.abs(grad).max() < tol:
            break
        H = (F * mu[:, None]).T @ F
        d = np.linalg.pinv(H, rcond=1e-12, hermitian=True) @ grad
        s = 1.0
        while s > 1e-12:
            trial = dual(p + s * d)
            if trial >= val - 1e-15 * abs(val):
                break
            s *= 0.5
        p, val = p + s * d, dual(p + s * d)

    mu = np.zeros(len(paths))
    mu[adm] = np.exp(logw + F @ p)
    K = grid.K
    S = np.zeros((K, grid.n))
    for k in range(K):
        np.add.at(S[k], paths[:, k], mu)
    return OracleSolution(
        paths, transport, coupling, mu, p.reshape(K, grid.nx), S, adm, float(eps)
    )
