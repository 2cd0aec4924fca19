"""Finite path measures on the cone and the homogeneous calculus acting on them.

A :class:`DiscretePathMeasure` holds ``P`` paths sampled on a common time
ladder as arrays ``xs`` and ``rs`` of shape ``(P, K)`` plus one weight per
path. Time levels in the public API are 1-based, as in the solver.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cone_geometry import ConePoint, cone_distance_sq

__all__ = [
    "DiscretePathMeasure",
    "CouplingReport",
    "path_action",
    "b_functional",
    "homogeneous_marginal",
    "dilate",
    "rescale_to_unit",
    "sigma_r0",
    "sigma_energy",
    "strong_coupling_check",
    "lift_deterministic",
    "coupling_pairing",
]


@dataclass(frozen=True)
class DiscretePathMeasure:
    xs: np.ndarray
    rs: np.ndarray
    weights: np.ndarray
    ts: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float, ndmin=2)
        rs = np.array(self.rs, dtype=float, ndmin=2)
        w = np.array(self.weights, dtype=float, ndmin=1)
        ts = np.array(self.ts, dtype=float)
        if xs.shape != rs.shape or xs.shape[0] != w.shape[0] or xs.shape[1] != ts.shape[0]:
            raise ValueError("inconsistent path, weight and time shapes")
        if ts.shape[0] < 2 or np.any(np.diff(ts) <= 0):
            raise ValueError("time ladder must be increasing with at least two levels")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if np.any(rs < 0) or np.any((xs < 0) | (xs > 1)):
            raise ValueError("path samples must be valid cone points")
        xs = np.where(rs == 0, 0.0, xs)
        for name, a in (("xs", xs), ("rs", rs), ("weights", w), ("ts", ts)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_paths(self) -> int:
        return self.xs.shape[0]

    @property
    def K(self) -> int:
        return len(self.ts)

    @property
    def T(self) -> float:
        return float(self.ts[-1] - self.ts[0])

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def path(self, p: int) -> list[ConePoint]:
        return [ConePoint(x, r) for x, r in zip(self.xs[p], self.rs[p])]

    def actions(self) -> np.ndarray:
        return path_action(self.xs, self.rs, self.ts)

    def total_action(self) -> float:
        return float(self.weights @ self.actions())

    def to_csv(self, path) -> None:
        """One row per path sample: ``path,k,t,x,r,weight``."""
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["path", "k", "t", "x", "r", "weight"])
            for p in range(self.n_paths):
                for k in range(self.K):
                    out.writerow(
                        [p, k + 1, repr(float(self.ts[k])), repr(float(self.xs[p, k])),
                         repr(float(self.rs[p, k])), repr(float(self.weights[p]))]
                    )

    @classmethod
    def from_csv(cls, path) -> "DiscretePathMeasure":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        P = 1 + max(int(r["path"]) for r in rows)
        K = max(int(r["k"]) for r in rows)
        xs, rs, ts, w = np.zeros((P, K)), np.zeros((P, K)), np.zeros(K), np.zeros(P)
        for r in rows:
            p, k = int(r["path"]), int(r["k"]) - 1
            xs[p, k], rs[p, k] = float(r["x"]), float(r["r"])
            ts[k], w[p] = float(r["t"]), float(r["weight"])
        return cls(xs, rs, w, ts)


def path_action(xs, rs, ts) -> np.ndarray | float:
    """Chord quadrature ``sum_k d_C(z_k, z_{k+1})^2 / (t_{k+1} - t_k)``.

    On a uniform ladder this is ``(K-1)/T`` times the sum of squared
    chords, the same weighting as the solver's cost. Works on a single
    path (1-d arrays) or a batch (rows are paths).
    """
    xs, rs, ts = np.asarray(xs, float), np.asarray(rs, float), np.asarray(ts, float)
    if xs.shape[-1] < 2:
        raise ValueError("need at least two samples")
    d2 = cone_distance_sq(xs[..., :-1], rs[..., :-1], xs[..., 1:], rs[..., 1:])
    out = (d2 / np.diff(ts)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def b_functional(xs, rs, ts, pressure: Callable) -> np.ndarray | float:
    """Action minus the trapezoid integral of ``P(t, x) r^2`` along the path."""
    xs, rs, ts = np.asarray(xs, float), np.asarray(rs, float), np.asarray(ts, float)
    psi = np.asarray(pressure(ts, xs), dtype=float) * rs ** 2
    if not np.all(np.isfinite(psi)):
        raise ValueError("pressure is not finite along the path")
    out = path_action(xs, rs, ts) - np.trapezoid(psi, ts, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _bin_index(x, nbins):
    return np.minimum((np.asarray(x) * nbins).astype(int), nbins - 1)


def homogeneous_marginal(measure: DiscretePathMeasure, k: int, nbins: int) -> np.ndarray:
    """Per-bin sum of ``weight * r^2`` at level ``k`` over a uniform partition of [0, 1]."""
    if not 1 <= k <= measure.K:
        raise ValueError(f"level must be in [1, {measure.K}]")
    x, r = measure.xs[:, k - 1], measure.rs[:, k - 1]
    return np.bincount(_bin_index(x, nbins), weights=measure.weights * r ** 2, minlength=nbins)


def dilate(measure: DiscretePathMeasure, theta) -> DiscretePathMeasure:
    """Radii divided by ``theta``, weights multiplied by ``theta^2``.

    Paths of zero weight are carried over untouched whatever ``theta`` is.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != measure.weights.shape:
        raise ValueError("need one theta value per path")
    charged = measure.weights > 0
    if np.any(~(theta[charged] > 0)):
        raise ValueError("theta must be positive on every charged path")
    th = np.where(charged, theta, 1.0)
    return DiscretePathMeasure(
        measure.xs, measure.rs / th[:, None], measure.weights * th ** 2, measure.ts
    )


def sigma_r0(measure: DiscretePathMeasure) -> np.ndarray:
    return measure.rs[:, 0].copy()


def sigma_energy(measure: DiscretePathMeasure) -> np.ndarray:
    """``sqrt(r_0^2 + r_T^2 + int r_t^2 dt)`` with the trapezoid rule in time."""
    r2 = measure.rs ** 2
    return np.sqrt(r2[:, 0] + r2[:, -1] + np.trapezoid(r2, measure.ts, axis=1))


def rescale_to_unit(measure: DiscretePathMeasure, sigma) -> tuple[DiscretePathMeasure, float]:
    """Dilate by ``sigma / C`` with ``C^2 = sum w sigma^2``.

    The result has unit mass and ``sigma = C`` on every charged path,
    provided ``sigma`` is 1-homogeneous in the radius. Returns the measure
    and ``C``.
    """
    sigma = np.asarray(sigma, dtype=float)
    C2 = float(measure.weights @ sigma ** 2)
    if not C2 > 0 or not np.isfinite(C2):
        raise ValueError("normalising constant must be finite and positive")
    C = float(np.sqrt(C2))
    return dilate(measure, sigma / C), C


@dataclass(frozen=True)
class CouplingReport:
    apex_start_mass: float
    apex_both_mass: float

    @property
    def rescalable(self) -> bool:
        return self.apex_start_mass == 0.0


def strong_coupling_check(measure: DiscretePathMeasure) -> CouplingReport:
    """Mass of paths starting at the apex, and of those also ending there."""
    r0, rT = measure.rs[:, 0], measure.rs[:, -1]
    w = measure.weights
    return CouplingReport(float(w[r0 == 0].sum()), float(w[(r0 == 0) & (rT == 0)].sum()))


def lift_deterministic(phi, lam, masses, ts) -> DiscretePathMeasure:
    """One path ``t -> [phi_t(x), lam_t(x)]`` per base atom, weighted by its mass."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    return DiscretePathMeasure(phi, lam, masses, ts)


def coupling_pairing(measure: DiscretePathMeasure, f: Callable) -> float:
    """``sum_paths w f(x_0, r_0, x_T, r_T)`` for a vectorised test function ``f``."""
    x0, r0 = measure.xs[:, 0], measure.rs[:, 0]
    xT, rT = measure.xs[:, -1], measure.rs[:, -1]
    return float(measure.weights @ np.asarray(f(x0, r0, xT, rT), dtype=float))
