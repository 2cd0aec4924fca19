"""Self-check suites runnable from the command line.

Each suite returns a list of :class:`Check` records; nothing here raises
on a failed property, so a report can list every failure at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cone_geometry import (
    ConePoint,
    ConeVelocity,
    cone_distance,
    cone_distance_sq,
    cone_geodesic,
    metric_norm_sq,
)
from .diagnostics import plan_action, plan_entropy, regularized_objective
from .discretization import build_cost_matrices, build_gibbs, build_grid, identity_map
from .generalized_flows import (
    DiscretePathMeasure,
    dilate,
    homogeneous_marginal,
    rescale_to_unit,
    sigma_energy,
    sigma_r0,
)
from .mmot_solver import all_marginals, moment_M, sinkhorn_solve
from .oracle import exhaustive_solve
from .smooth_reference import (
    LagrangianState,
    energy,
    geodesic_initial_state,
    gv_condition_check,
    integrate_geodesic,
)

__all__ = ["Check", "SUITES", "run_suite", "random_path_measure", "observed_order"]


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.suite}.{self.name}: {self.detail}"


def observed_order(errors) -> np.ndarray:
    """Base-2 log of successive error ratios for step sizes halved each time."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def _random_points(rng, n, r_max=3.0):
    return rng.uniform(0, 1, n), rng.uniform(0, r_max, n)


def geometry_suite(rng) -> list[Check]:
    out = []
    x1, r1 = _random_points(rng, 10_000)
    x2, r2 = _random_points(rng, 10_000)
    x3, r3 = _random_points(rng, 10_000)
    d12 = np.sqrt(cone_distance_sq(x1, r1, x2, r2))
    d21 = np.sqrt(cone_distance_sq(x2, r2, x1, r1))
    d13 = np.sqrt(cone_distance_sq(x1, r1, x3, r3))
    d23 = np.sqrt(cone_distance_sq(x2, r2, x3, r3))
    out.append(Check("geometry", "symmetry", bool(np.all(d12 == d21)), "10^4 pairs"))
    slack = float(np.max(d13 - d12 - d23))
    out.append(Check("geometry", "triangle_inequality", slack <= 1e-12, f"max excess {slack:.2e}"))
    dev = np.hypot(r1 * np.cos(x1) - r2 * np.cos(x2), r1 * np.sin(x1) - r2 * np.sin(x2))
    err = float(np.max(np.abs(dev - d12)))
    out.append(Check("geometry", "development_isometry", err <= 1e-12, f"max error {err:.2e}"))
    lam = rng.uniform(0.1, 5, 10_000)
    hom = float(np.max(np.abs(np.sqrt(cone_distance_sq(x1, lam * r1, x2, lam * r2)) - lam * d12)))
    out.append(Check("geometry", "one_homogeneity", hom <= 1e-12, f"max error {hom:.2e}"))

    d = cone_distance(ConePoint(0, 1), ConePoint(1, 1))
    out.append(Check("geometry", "unit_chord", abs(d - 0.958851) <= 1e-6, f"{d:.9f}"))
    mid = cone_geodesic(ConePoint(0, 1), ConePoint(1, 1), 0.5)
    ok = abs(mid.x - 0.5) <= 1e-6 and abs(mid.r - 0.877583) <= 1e-6
    out.append(Check("geometry", "chord_midpoint", ok, f"[{mid.x:.9f}, {mid.r:.9f}]"))

    ends_ok = True
    for _ in range(200):
        p = ConePoint(*rng.uniform([0, 0.1], [1, 3]))
        q = ConePoint(*rng.uniform([0, 0.1], [1, 3]))
        ends_ok &= cone_geodesic(p, q, 0.0) == p and cone_geodesic(p, q, 1.0) == q
    out.append(Check("geometry", "geodesic_endpoints", bool(ends_ok), "200 random pairs"))

    p, q = ConePoint(0.1, 0.8), ConePoint(0.9, 2.0)
    target = cone_distance(p, q)
    errs = [abs(_riemann_length(p, q, n) - target) for n in (20, 40, 80, 160)]
    order = observed_order(errs)
    out.append(
        Check("geometry", "geodesic_length_order", bool(np.all(np.abs(order - 2) < 0.2)),
              f"orders {np.round(order, 3).tolist()}")
    )
    return out


def _riemann_length(p, q, n):
    """Midpoint-rule length of the geodesic using finite-difference velocities."""
    s = np.linspace(0, 1, n + 1)
    pts = [cone_geodesic(p, q, float(v)) for v in s]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        m = ConePoint(0.5 * (a.x + b.x), 0.5 * (a.r + b.r))
        v = ConeVelocity((b.x - a.x) * n, (b.r - a.r) * n)
        total += np.sqrt(metric_norm_sq(m, v)) / n
    return total


def random_path_measure(rng, n_paths=None, K=None, apex_prob=0.05) -> DiscretePathMeasure:
    """Random measure with occasional apex samples and zero weights."""
    P = n_paths or int(rng.integers(1, 12))
    K = K or int(rng.integers(2, 9))
    if rng.random() < 0.5:
        ts = np.linspace(0.0, float(rng.uniform(0.2, 3.0)), K)
    else:
        ts = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 1.0, K - 1))])
    xs = rng.uniform(0, 1, (P, K))
    rs = rng.uniform(0.05, 3.0, (P, K))
    rs[:, 1:][rng.random((P, K - 1)) < apex_prob] = 0.0
    w = rng.uniform(0, 1, P) * (rng.random(P) > 0.1)
    if w.sum() == 0:
        w[0] = 1.0
    return DiscretePathMeasure(xs, rs, w, ts)


def sandbox_suite(rng, n_measures: int = 200) -> list[Check]:
    worst = {"homogeneity": 0.0, "dilation_action": 0.0, "dilation_marginal": 0.0, "rescale_mass": 0.0, "rescale_sigma": 0.0}
    for _ in range(n_measures):
        m = random_path_measure(rng)
        lam = rng.uniform(0.2, 5.0)
        a = m.actions()
        a_scaled = DiscretePathMeasure(m.xs, lam * m.rs, m.weights, m.ts).actions()
        worst["homogeneity"] = max(worst["homogeneity"], _rel(a_scaled, lam ** 2 * a))

        sigma_fn = sigma_r0 if rng.random() < 0.5 else sigma_energy
        sigma = sigma_fn(m)
        theta = sigma / rng.uniform(0.5, 2.0)
        d = dilate(m, theta)
        worst["dilation_action"] = max(worst["dilation_action"], _rel(d.total_action(), m.total_action()))
        for k in (1, m.K):
            worst["dilation_marginal"] = max(
                worst["dilation_marginal"], _rel(homogeneous_marginal(d, k, 7), homogeneous_marginal(m, k, 7))
            )
        u, C = rescale_to_unit(m, sigma)
        worst["rescale_mass"] = max(worst["rescale_mass"], abs(u.mass - 1.0))
        charged = u.weights > 0
        worst["rescale_sigma"] = max(worst["rescale_sigma"], _rel(sigma_fn(u)[charged], C))
    return [
        Check("sandbox", k, v <= 1e-12, f"worst relative error {v:.2e} over {n_measures} measures")
        for k, v in worst.items()
    ]


def oracle_suite(rng=None) -> list[Check]:
    grid = build_grid(3, 2, 0.5, 1.0, 3, 1.0)
    bmap = identity_map()
    eps, alpha = 0.1, 1.0
    factors = build_gibbs(build_cost_matrices(grid, bmap), grid, eps, alpha)
    duals, rep = sinkhorn_solve(factors, tolerance=1e-12)
    ref = exhaustive_solve(grid, bmap, eps, alpha)
    S = all_marginals(factors, duals)
    M2 = np.stack([moment_M(s, 2, grid) for s in S])
    act = plan_action(factors, duals)
    gauge = np.abs(duals.gauge_fixed() - (ref.duals - ref.duals.mean(axis=1, keepdims=True))).max()
    checks = [
        ("converged", rep.converged, f"{rep.iterations} sweeps, violation {rep.final_violation:.2e}"),
        ("marginals", np.abs(S - ref.marginals).max() <= 1e-8, f"{np.abs(S - ref.marginals).max():.2e}"),
        ("moments", np.abs(M2 - ref.moments(grid)).max() <= 1e-8, f"{np.abs(M2 - ref.moments(grid)).max():.2e}"),
        ("action", abs(act.total - ref.action) <= 1e-8, f"{abs(act.total - ref.action):.2e}"),
        ("entropy", abs(plan_entropy(factors, duals) - ref.entropy) <= 1e-8,
         f"{abs(plan_entropy(factors, duals) - ref.entropy):.2e}"),
        ("objective", abs(regularized_objective(factors, duals) - ref.objective) <= 1e-6,
         f"{abs(regularized_objective(factors, duals) - ref.objective):.2e}"),
        ("duals_up_to_gauge", gauge <= 1e-6, f"{gauge:.2e}"),
    ]
    return [Check("oracle", n, bool(ok), d) for n, ok, d in checks]


def smooth_suite(rng=None) -> list[Check]:
    out = []
    p, q = ConePoint(0.0, 1.0), ConePoint(1.0, 1.0)
    s0 = geodesic_initial_state(p, q)
    steps = (20, 40, 80, 160)
    errs = []
    for n in steps:
        tr = integrate_geodesic(s0, 1.0, n)
        errs.append(max(cone_distance(tr.point(i, 0), cone_geodesic(p, q, tr.ts[i])) for i in range(n + 1)))
    o = observed_order(errs)
    out.append(Check("smooth", "free_geodesic_order", bool(np.all(np.abs(o - 2) <= 0.2)), f"{np.round(o, 3).tolist()}"))

    c, lam0 = 0.7, 1.2
    errs = []
    for n in steps:
        tr = integrate_geodesic(LagrangianState(0.3, lam0, 0.0, 0.0), 1.0, n, lambda t, x: c + 0 * x)
        errs.append(np.abs(tr.lam[:, 0] - lam0 * np.cos(np.sqrt(c) * tr.ts)).max())
    o = observed_order(errs)
    out.append(Check("smooth", "radial_cosine_order", bool(np.all(np.abs(o - 2) <= 0.2)), f"{np.round(o, 3).tolist()}"))

    P = lambda t, x: 0.3 * np.sin(2 * x) + 0.1
    dP = lambda t, x: 0.6 * np.cos(2 * x)
    s = LagrangianState([0.2, 0.5], [1.0, 1.1], [0.3, -0.2], [0.1, 0.0])
    drift = []
    for n in steps:
        E = energy(integrate_geodesic(s, 1.0, n, P, dP), P)
        drift.append(np.abs(E - E[0]).max())
    o = observed_order(drift)
    out.append(Check("smooth", "energy_drift_order", bool(np.all(np.abs(o - 2) <= 0.2)), f"{np.round(o, 3).tolist()}"))

    still = integrate_geodesic(LagrangianState(0.5, 1.0, 0.0, 0.0), 1.0, 4)
    thr = 3.0 / 26.0
    below = gv_condition_check(still, lambda t, x: thr * (1 - 1e-12) + 0 * x, 1.0).rho_condition
    at = gv_condition_check(still, lambda t, x: thr + 0 * x, 1.0).rho_condition
    out.append(Check("smooth", "rho_threshold", bool(below and not at), "||P|| < 3/26 at rho = 2, T = 1"))
    return out


SUITES = {
    "geometry": geometry_suite,
    "sandbox": sandbox_suite,
    "oracle": oracle_suite,
    "smooth": smooth_suite,
}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for n in SUITES for c in run_suite(n, seed)]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or all")
    return SUITES[name](np.random.default_rng(seed))
