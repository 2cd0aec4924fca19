"""Post-processing of solved plans: slices, action, entropy, pressure, determinism.

Everything is computed from forward/backward messages; the path tensor is
never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import GibbsFactors, Grid
from .mmot_solver import (
    DualPotentials,
    _Chain,
    _check_level,
    _lmatmul,
    _lse,
    moment_M,
)

__all__ = [
    "PlanSlice",
    "PlanAction",
    "base_transport_plan",
    "cone_marginal",
    "plan_action",
    "plan_entropy",
    "regularized_objective",
    "extract_pressure",
    "determinism_index",
    "radial_profile",
    "profile_modes",
]


@dataclass(frozen=True)
class PlanSlice:
    """Non-negative matrix with labelled axes, taken at time level ``k`` (1-based)."""

    matrix: np.ndarray
    k: int
    row_axis: str
    col_axis: str
    row_values: np.ndarray
    col_values: np.ndarray
    mass: float

    def __post_init__(self):
        m = self.matrix
        if np.any(m < 0):
            raise ValueError("plan slices must be non-negative")
        if not np.isclose(m.sum(), self.mass, rtol=0.0, atol=1e-12 * max(1.0, abs(self.mass))):
            raise ValueError("recorded mass does not match the entry sum")


@dataclass(frozen=True)
class PlanAction:
    transport: float
    coupling: float

    @property
    def total(self) -> float:
        return self.transport + self.coupling


def _messages(factors, duals):
    chain = _Chain(factors, log_domain=True)
    return chain, chain.forward(duals.p), chain.backward(duals.p)


def base_transport_plan(factors: GibbsFactors, duals: DualPotentials, k: int) -> PlanSlice:
    """Joint law of (start base node, base node at level ``k``)."""
    g = factors.grid
    _check_level(k, duals.K)
    chain, logFt, logG = _messages(factors, duals)
    # (i0, j): mass of paths starting at i0 and visiting node j at level k
    L = logFt[k - 1] + chain.loga(duals.p[k - 1])[None, :] + logG[k - 1].T
    plan = np.exp(_lse(L.reshape(g.nx, g.nx, g.nr), axis=2))
    return PlanSlice(plan, k, "x0", "x", g.xs, g.xs, float(plan.sum()))


def cone_marginal(factors: GibbsFactors, duals: DualPotentials, k: int) -> PlanSlice:
    """Level-``k`` marginal on the cone as a base-by-radius matrix."""
    g = factors.grid
    _check_level(k, duals.K)
    chain, logFt, logG = _messages(factors, duals)
    S = np.exp(_Chain.log_B(logFt[k - 1], logG[k - 1]) + chain.loga(duals.p[k - 1]))
    S = S.reshape(g.nx, g.nr)
    return PlanSlice(S, k, "x", "r", g.xs, g.rs, float(S.sum()))


def plan_action(factors: GibbsFactors, duals: DualPotentials) -> PlanAction:
    """``<C, mu>`` split into the kinetic part and the closing penalty."""
    g = factors.grid
    K = duals.K
    chain, logFt, logG = _messages(factors, duals)
    with np.errstate(divide="ignore"):
        log_cost = factors.log_xi + np.log(factors.costs.D0)
    transport = 0.0
    for k in range(K - 1):
        left = logFt[k] + chain.loga(duals.p[k])[None, :]
        right = chain.loga(duals.p[k + 1])[:, None] + logG[k + 1]
        inner = _lmatmul(left, log_cost)
        transport += np.exp(_lse(inner + right.T))
    transport *= (K - 1) / g.T

    D1 = factors.costs.D1[:, g.first_slice]
    with np.errstate(divide="ignore"):
        L = logFt[K - 1] + chain.loga(duals.p[K - 1])[None, :] + (logG[K - 1] + np.log(D1)).T
    coupling = factors.alpha * np.exp(_lse(L))
    return PlanAction(float(transport), float(coupling))


def plan_entropy(factors: GibbsFactors, duals: DualPotentials, action: PlanAction | None = None) -> float:
    """``-<mu, log mu - 1>`` via ``log mu = -C/eps + sum_k p^k r^2`` on the support."""
    g = factors.grid
    if action is None:
        action = plan_action(factors, duals)
    chain, logFt, logG = _messages(factors, duals)
    pairing = 0.0
    mass = 0.0
    for k in range(duals.K):
        S = np.exp(_Chain.log_B(logFt[k], logG[k]) + chain.loga(duals.p[k]))
        if k == 0:
            mass = S.sum()
        pairing += duals.p[k] @ moment_M(S, 2, g)
    return float(action.total / factors.eps - pairing + mass)


def regularized_objective(factors: GibbsFactors, duals: DualPotentials) -> float:
    """Primal value ``<C, mu> - eps E(mu)`` of the implied plan."""
    action = plan_action(factors, duals)
    return action.total - factors.eps * plan_entropy(factors, duals, action)


def extract_pressure(duals: DualPotentials, grid: Grid, eps: float) -> np.ndarray:
    """Discrete pressure ``eps p^k_i / dt`` after removing each level's mean.

    The exponent ``sum_k p^k r^2`` of the Gibbs weight plays the role of
    ``(1/eps) sum_k dt P(t_k, x) r^2``, hence the scaling.
    """
    return eps * duals.gauge_fixed() / grid.dt


def determinism_index(plan) -> float:
    """One minus the mass-weighted mean row entropy, normalised by ``log(n_cols)``.

    Rows without mass are skipped. Equals 1 when each row is a point mass
    and 0 when every row is uniform.
    """
    m = plan.matrix if isinstance(plan, PlanSlice) else np.asarray(plan, dtype=float)
    n = m.shape[1]
    if n < 2:
        return 1.0
    rows = m.sum(axis=1)
    live = rows > 0
    if not np.any(live):
        raise ValueError("plan carries no mass")
    q = m[live] / rows[live, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(q > 0, q * np.log(q), 0.0).sum(axis=1)
    w = rows[live] / rows[live].sum()
    return float(1.0 - (w @ h) / np.log(n))


def radial_profile(marginal: PlanSlice) -> np.ndarray:
    """Mass per radius node, summed over the base."""
    return marginal.matrix.sum(axis=0)


def profile_modes(profile, rel_height: float = 0.05) -> np.ndarray:
    """Indices of local maxima holding at least ``rel_height`` of the peak."""
    f = np.asarray(profile, dtype=float)
    padded = np.concatenate([[-np.inf], f, [-np.inf]])
    peak = (padded[1:-1] > padded[:-2]) & (padded[1:-1] >= padded[2:])
    return np.flatnonzero(peak & (f >= rel_height * f.max()))
