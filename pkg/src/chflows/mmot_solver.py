"""Cycle-structured multi-marginal Sinkhorn with homogeneous moment constraints.

The regularised plan over paths ``(j_1, ..., j_K)`` of cone nodes is

    mu = 1{r(j_1) = 1} exp(-C / eps) prod_k a_k(j_k),
    a_k(j) = exp(p^k[x(j)] * r(j)^2),

where ``C`` sums the transport cost between consecutive levels and a
penalty tying level ``K`` back to the image of the starting node. The plan
factors as a chain ``W_1 ... W_{K-1} H_K`` closed into a cycle through the
starting node, so every marginal is computed by conditioning on the start
(only ``n_x`` values) and passing messages forwards and backwards.

All messages are stored as logarithms. Matrix products either exponentiate
directly ("dense") or shift rows/columns by their maxima and recompute any
underflowed entry exactly with a log-sum-exp ("log-domain"). Levels are
0-based internally; public functions take the 1-based level ``k`` used in
figures and file names.

Each sweep solves the per-level constraints exactly, one level at a time.
For small eps these sweeps contract slowly, so on problems of moderate size
a sweep is followed by a Newton step on all duals at once, using the exact
second-moment matrix of the features ``r_k^2 1{x_k = i}`` under the plan.
The step is kept only when it raises the dual objective, so ascent stays
monotone.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .discretization import GibbsFactors, Grid

__all__ = [
    "DualPotentials",
    "SolverReport",
    "StarvedNodeError",
    "weighted_kernels",
    "marginal_S",
    "all_marginals",
    "moment_M",
    "newton_dual_update",
    "dual_objective",
    "sinkhorn_solve",
    "total_mass",
]

logger = logging.getLogger(__name__)

_TINY = 1e-280
_LOG_THRESHOLD_EPS = 1e-3
_CHUNK = 1 << 21
# flop budget (K^2 nx^2 N^2) below which "auto" enables Newton corrections
_NEWTON_BUDGET = 5e10


class StarvedNodeError(RuntimeError):
    """No plan mass can reach some base nodes at a given level."""

    def __init__(self, level: int, nodes):
        self.level = level
        self.nodes = list(map(int, nodes))
        super().__init__(
            f"starved base nodes {self.nodes} at level k={level}; "
            "mass cannot reach them (eps too small for the kernel range?)"
        )


class _RangeError(ArithmeticError):
    """Dense arithmetic left the floating-point range."""


@dataclass
class DualPotentials:
    """Multipliers ``p[k, i]`` of the second-moment constraints, shape ``(K, n_x)``."""

    p: np.ndarray

    @classmethod
    def zeros(cls, K: int, nx: int) -> "DualPotentials":
        return cls(np.zeros((K, nx)))

    def __post_init__(self):
        self.p = np.array(self.p, dtype=float)
        if self.p.ndim != 2:
            raise ValueError("duals must have shape (K, n_x)")
        if not np.all(np.isfinite(self.p)):
            raise ValueError("non-finite dual potentials")

    @property
    def K(self) -> int:
        return self.p.shape[0]

    def copy(self) -> "DualPotentials":
        return DualPotentials(self.p.copy())

    def gauge_fixed(self) -> np.ndarray:
        """Duals shifted to zero mean at every level (reporting convention)."""
        return self.p - self.p.mean(axis=1, keepdims=True)


@dataclass
class SolverReport:
    iterations: int = 0
    violation_history: list = field(default_factory=list)
    dual_history: list = field(default_factory=list)
    final_violation: float = np.inf
    wall_time: float = 0.0
    converged: bool = False
    log_domain: bool = False
    tolerance: float = 0.0
    max_newton_residual: float = 0.0
    newton_steps: int = 0


# ---------------------------------------------------------------------------
# log-space linear algebra


def _lse(a, axis=None):
    """``log(sum(exp(a)))`` that returns ``-inf`` for empty support."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _exact_entries(logA, logB, rows, cols):
    out = np.empty(len(rows))
    step = max(1, _CHUNK // logA.shape[1])
    for s in range(0, len(rows), step):
        r, c = rows[s : s + step], cols[s : s + step]
        out[s : s + step] = _lse(logA[r, :] + logB[:, c].T, axis=1)
    return out


def _lmatmul(logA, logB, expA=None, expB=None, stabilized=True):
    """``log(exp(logA) @ exp(logB))``.

    ``expA``/``expB`` may pass precomputed exponentials of operands whose
    rows (resp. columns) already have maximum 0, e.g. Gibbs kernels with a
    zero diagonal.
    """
    if not stabilized:
        with np.errstate(over="raise", under="ignore"):
            try:
                A = np.exp(logA) if expA is None else expA
                B = np.exp(logB) if expB is None else expB
                prod = A @ B
            except FloatingPointError as exc:
                raise _RangeError("overflow in dense product") from exc
        if not np.all(np.isfinite(prod)) or np.any(prod < _TINY):
            raise _RangeError("dense product left the floating-point range")
        return np.log(prod)

    if expA is None:
        a = np.max(logA, axis=1)
        a = np.where(np.isfinite(a), a, 0.0)
        A = np.exp(logA - a[:, None])
    else:
        a, A = np.zeros(logA.shape[0]), expA
    if expB is None:
        b = np.max(logB, axis=0)
        b = np.where(np.isfinite(b), b, 0.0)
        B = np.exp(logB - b[None, :])
    else:
        b, B = np.zeros(logB.shape[1]), expB
    prod = A @ B
    bad = prod < _TINY
    with np.errstate(divide="ignore"):
        out = np.log(prod) + a[:, None] + b[None, :]
    if np.any(bad):
        rows, cols = np.nonzero(bad)
        out[rows, cols] = _exact_entries(logA, logB, rows, cols)
    return out


# ---------------------------------------------------------------------------
# message passing


class _Chain:
    """Forward/backward messages for fixed kernels; duals supplied per call."""

    def __init__(self, factors: GibbsFactors, log_domain: bool):
        g = factors.grid
        self.f = factors
        self.grid = g
        self.stab = log_domain
        self.r2 = g.node_r ** 2
        self.bidx = g.base_index
        self.slice = g.first_slice
        self.log_xi = factors.log_xi
        self.log_close = factors.log_close
        self.mask_log = np.where(factors.support, 0.0, -np.inf)
        with np.errstate(under="ignore"):
            self.xi = np.exp(self.log_xi)
        if not log_domain and factors.underflows():
            raise _RangeError("dense kernels underflow")

    def loga(self, p_k):
        return p_k[self.bidx] * self.r2 + self.mask_log

    def first_forward(self, p0):
        """Forward message into level 2 (index 1) from the start slice."""
        return (p0 * 1.0)[:, None] + self.log_xi[self.slice, :]

    def step_forward(self, logF):
        return _lmatmul(logF, self.log_xi, expB=self.xi, stabilized=self.stab)

    def step_backward(self, logaG):
        return _lmatmul(self.log_xi, logaG, expA=self.xi, stabilized=self.stab)

    def backward(self, p):
        K = p.shape[0]
        logG = [None] * K
        logG[K - 1] = self.log_close
        for k in range(K - 2, -1, -1):
            logG[k] = self.step_backward(self.loga(p[k + 1])[:, None] + logG[k + 1])
        return logG

    def forward(self, p):
        """Forward messages ``logFt[k]`` (level ``k`` factor not yet applied)."""
        K = p.shape[0]
        nx, N = self.grid.nx, self.grid.n
        logFt = [None] * K
        first = np.full((nx, N), -np.inf)
        first[np.arange(nx), self.slice] = 0.0
        logFt[0] = first
        if K > 1:
            logFt[1] = self.first_forward(p[0])
        for k in range(1, K - 1):
            logFt[k + 1] = self.step_forward(logFt[k] + self.loga(p[k])[None, :])
        return logFt

    @staticmethod
    def log_B(logFt_k, logG_k):
        """Level marginal with the level's own factor omitted, length ``N``."""
        return _lse(logFt_k + logG_k.T, axis=0)


def _check_level(k, K):
    if not 1 <= k <= K:
        raise ValueError(f"level k must be in [1, {K}], got {k}")


def _resolve_mode(factors: GibbsFactors, log_domain) -> bool:
    if log_domain in (True, "on"):
        return True
    if log_domain in (False, "off"):
        return False
    if log_domain != "auto":
        raise ValueError(f"log_domain must be auto, on or off; got {log_domain!r}")
    return factors.eps <= _LOG_THRESHOLD_EPS or factors.underflows()


def _messages(factors, duals):
    chain = _Chain(factors, log_domain=True)
    return chain, chain.forward(duals.p), chain.backward(duals.p)


def all_marginals(factors: GibbsFactors, duals: DualPotentials, log: bool = False) -> np.ndarray:
    """All level marginals ``S_k`` as a ``(K, N)`` array (or their logs)."""
    chain, logFt, logG = _messages(factors, duals)
    out = np.stack(
        [_Chain.log_B(logFt[k], logG[k]) + chain.loga(duals.p[k]) for k in range(duals.K)]
    )
    if log:
        return out
    return np.exp(out)


def marginal_S(factors: GibbsFactors, duals: DualPotentials, k: int) -> np.ndarray:
    """Cone marginal of the implied plan at level ``k`` (1-based), length ``N``."""
    _check_level(k, duals.K)
    chain, logFt, logG = _messages(factors, duals)
    return np.exp(_Chain.log_B(logFt[k - 1], logG[k - 1]) + chain.loga(duals.p[k - 1]))


def total_mass(factors: GibbsFactors, duals: DualPotentials) -> float:
    chain = _Chain(factors, log_domain=True)
    logG = chain.backward(duals.p)
    return float(np.exp(_lse(duals.p[0] + logG[0][chain.slice, np.arange(factors.grid.nx)])))


def moment_M(values, n: int, grid: Grid) -> np.ndarray:
    """Radial moment ``sum_{r} r^n A[x, r]`` per base node."""
    if n not in (0, 1, 2):
        raise ValueError("moment order must be 0, 1 or 2")
    A = np.asarray(values, dtype=float).reshape(grid.nx, grid.nr)
    return A @ (grid.rs ** n)


def weighted_kernels(factors: GibbsFactors, duals: DualPotentials):
    """Dense chain factors ``[W_1, ..., W_{K-1}]`` and the closing matrix.

    ``W_k = diag(a_k) xi`` and ``H_K = diag(a_K) xi_close[:, first_slice]``
    (shape ``(N, n_x)``). The plan entry for a path starting at base node
    ``i`` is ``W_1[s_i, j_2] W_2[j_2, j_3] ... H_K[j_K, i]`` with
    ``s_i`` the unit-radius node above ``i``.

    Raises ``OverflowError`` if a weight overflows; switch to the
    log-domain routines in that case.
    """
    g = factors.grid
    r2 = g.node_r ** 2
    with np.errstate(over="raise", under="ignore"):
        try:
            a = [np.exp(duals.p[k][g.base_index] * r2) * factors.support for k in range(duals.K)]
            xi = factors.xi
            W = [a[k][:, None] * xi for k in range(duals.K - 1)]
            H = a[-1][:, None] * np.exp(factors.log_close)
        except FloatingPointError as exc:
            raise OverflowError("dense kernel weights overflow; use log-domain mode") from exc
    return W, H


# ---------------------------------------------------------------------------
# dual updates


def _newton_log(logB, radii, target, tol=1e-14, maxiter=200):
    """Solve ``sum_j exp(logB[i, j] + p_i r_j^2) r_j^2 = target`` per row.

    Works on ``g(p) = logsumexp_j(logB_ij + 2 log r_j + p r_j^2) - log target``,
    which is convex and increasing with slope between the smallest and
    largest ``r_j^2`` carrying mass. That gives a closed-form bracket;
    Newton steps leaving it fall back to bisection.
    """
    logB = np.atleast_2d(np.asarray(logB, dtype=float))
    s = np.asarray(radii, dtype=float) ** 2
    c = logB + np.log(s)[None, :]
    live = np.isfinite(c)
    starved = ~live.any(axis=1)
    if np.any(starved):
        raise StarvedNodeError(-1, np.flatnonzero(starved))
    lt = np.log(target)
    s_lo = np.where(live, s[None, :], np.inf).min(axis=1)
    s_hi = np.where(live, s[None, :], -np.inf).max(axis=1)

    def g_and_slope(p, rows):
        e = c[rows] + p[:, None] * s[None, :]
        m = e.max(axis=1)
        w = np.exp(e - m[:, None])
        tot = w.sum(axis=1)
        return np.log(tot) + m - lt, (w * s[None, :]).sum(axis=1) / tot

    n = len(c)
    g0, _ = g_and_slope(np.zeros(n), np.arange(n))
    ends = np.stack([-g0 / s_lo, -g0 / s_hi])
    lo, hi = ends.min(axis=0), ends.max(axis=0)
    # Newton from the right end of the bracket decreases monotonically
    p = hi.copy()
    g = np.zeros(n)
    idx = np.arange(n)
    for _ in range(maxiter):
        gv, sl = g_and_slope(p[idx], idx)
        g[idx] = gv
        pos = gv > 0
        hi[idx[pos]] = np.minimum(hi[idx[pos]], p[idx[pos]])
        lo[idx[~pos]] = np.maximum(lo[idx[~pos]], p[idx[~pos]])
        width = hi[idx] - lo[idx]
        done = (np.abs(gv) <= tol) | (width <= 4e-16 * np.maximum(1.0, np.abs(p[idx])))
        idx, gv, sl = idx[~done], gv[~done], sl[~done]
        if idx.size == 0:
            break
        step = p[idx] - gv / sl
        out = ~((step > lo[idx]) & (step < hi[idx]))
        step[out] = 0.5 * (lo[idx][out] + hi[idx][out])
        p[idx] = step
    return p, np.abs(np.expm1(g))


def newton_dual_update(B, radii, target: float) -> np.ndarray:
    """Per-base-node root of ``sum_j B[i, j] exp(p r_j^2) r_j^2 = target``.

    Parameters
    ----------
    B : array, shape (n_x, n_r)
        Non-negative masses per base node and radius.
    radii : array, shape (n_r,)
    target : float
        Positive right-hand side.

    Returns
    -------
    p : array, shape (n_x,)

    Raises
    ------
    StarvedNodeError
        If a row of ``B`` is identically zero.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if np.any(B < 0) or not target > 0:
        raise ValueError("B must be non-negative and target positive")
    with np.errstate(divide="ignore"):
        p, _ = _newton_log(np.log(B), radii, target)
    return p


# ---------------------------------------------------------------------------
# second-order information


def _shift_matmul(logA, logB, expB):
    """Row-shifted product without exact recomputation of underflowed entries."""
    a = np.max(logA, axis=1)
    a = np.where(np.isfinite(a), a, 0.0)
    prod = np.exp(logA - a[:, None]) @ expB
    with np.errstate(divide="ignore"):
        return np.log(prod) + a[:, None]


def _feature_moments(chain, p):
    """Gradient of the dual objective and the second moments of the features.

    With features ``phi_{k,i}(path) = r(j_k)^2 1{x(j_k) = i}`` the dual
    objective has gradient ``1/n_x - E_mu[phi]`` and Hessian ``-E_mu[phi phi^T]``.
    Cross moments between levels ``k < l`` come from messages that carry the
    level-``k`` feature forward, one row per (start node, feature base node).
    Entries far below the row maximum are dropped: the matrix only steers
    the search direction, it never decides convergence.
    """
    g = chain.grid
    K, nx, N, nr = p.shape[0], g.nx, g.n, g.nr
    logFt, logG = chain.forward(p), chain.backward(p)
    with np.errstate(divide="ignore"):
        logr2 = np.log(chain.r2)
    own = np.where(chain.bidx[None, :] == np.arange(nx)[:, None], 0.0, -np.inf)
    H = np.zeros((K, nx, K, nx))
    m2 = np.zeros((K, nx))
    for k in range(K):
        la = chain.loga(p[k])
        S = np.exp(_Chain.log_B(logFt[k], logG[k]) + la).reshape(nx, nr)
        m2[k] = S @ g.rs ** 2
        H[k, :, k, :] = np.diag(S @ g.rs ** 4)
        L = logFt[k][:, None, :] + (la + logr2)[None, None, :] + own[None, :, :]
        L = L.reshape(nx * nx, N)
        for l in range(k + 1, K):
            L = _shift_matmul(L, chain.log_xi, chain.xi) + chain.loga(p[l])[None, :]
            Z = L.reshape(nx, nx, N) + logr2[None, None, :] + logG[l].T[:, None, :]
            blk = np.exp(_lse(_lse(Z, axis=0).reshape(nx, nx, nr), axis=2))
            H[k, :, l, :] = blk
            H[l, :, k, :] = blk.T
    return 1.0 / nx - m2, H.reshape(K * nx, K * nx)


def _dual_at(chain, p):
    logG = chain.backward(p)
    nx = chain.grid.nx
    with np.errstate(over="ignore"):
        mass = np.exp(_lse(p[0] + logG[0][chain.slice, np.arange(nx)]))
    return float(p.sum() / nx - mass)


def _newton_step(chain, p, dobj):
    """Damped Newton step on all duals; returns the new duals and objective.

    Backtracks until the Armijo condition holds, so the dual objective never
    decreases. Returns the input unchanged if no step is accepted.
    """
    K, nx = p.shape
    grad, H = _feature_moments(chain, p)
    gv = grad.ravel()
    d = np.linalg.lstsq(H, gv, rcond=1e-13)[0].reshape(K, nx)
    slope = float(gv @ d.ravel())
    if not (np.all(np.isfinite(d)) and slope > 0):
        return p, dobj, 0.0
    s = 1.0
    for _ in range(40):
        q = p + s * d
        try:
            dq = _dual_at(chain, q)
        except _RangeError:
            dq = -np.inf
        if np.isfinite(dq) and dq >= dobj + 1e-4 * s * slope:
            return q, dq, s
        s *= 0.5
    return p, dobj, 0.0


# ---------------------------------------------------------------------------
# objective and solve


def dual_objective(factors: GibbsFactors, duals: DualPotentials) -> float:
    """``sum_{k,i} p[k, i] / n_x - mass(mu_p)``.

    This is the dual of the regularised problem divided by ``eps``: the
    inner minimisation of ``<C, mu>/eps + <mu, log mu - 1>`` minus the
    multiplier terms is attained at ``mu_p`` and equals the expression
    above. At the optimum it equals ``(<C, mu> - eps E(mu)) / eps``.
    """
    return float(duals.p.sum() / factors.grid.nx - total_mass(factors, duals))


def _violation(logS, grid):
    with np.errstate(over="ignore"):
        m2 = moment_M(np.exp(logS), 2, grid)
    return float(np.max(np.abs(grid.nx * m2 - 1.0)))


def _sweep(chain, p, report):
    grid = chain.grid
    K, nx, nr = p.shape[0], grid.nx, grid.nr
    target = 1.0 / nx
    logG = chain.backward(p)
    viol = 0.0
    logFt = None
    for k in range(K):
        if k == 0:
            logB = np.full(grid.n, -np.inf)
            logB[chain.slice] = logG[0][chain.slice, np.arange(nx)]
        elif k == 1:
            logFt = chain.first_forward(p[0])
            logB = _Chain.log_B(logFt, logG[k])
        else:
            logFt = chain.step_forward(logFt + chain.loga(p[k - 1])[None, :])
            logB = _Chain.log_B(logFt, logG[k])
        viol = max(viol, _violation(logB + chain.loga(p[k]), grid))
        try:
            pk, res = _newton_log((logB + chain.mask_log).reshape(nx, nr), grid.rs, target)
        except StarvedNodeError as exc:
            raise StarvedNodeError(k + 1, exc.nodes) from None
        report.max_newton_residual = max(report.max_newton_residual, float(res.max()))
        p[k] = pk
    mass = float(np.exp(_lse(logB + chain.loga(p[K - 1]))))
    return viol, float(p.sum() / nx - mass)


def _exact_violation(chain, p):
    logFt, logG = chain.forward(p), chain.backward(p)
    return max(
        _violation(_Chain.log_B(logFt[k], logG[k]) + chain.loga(p[k]), chain.grid)
        for k in range(p.shape[0])
    )


def sinkhorn_solve(
    factors: GibbsFactors,
    tolerance: float = 1e-7,
    max_sweeps: int = 5000,
    log_domain="auto",
    duals: DualPotentials | None = None,
    accelerate="auto",
):
    """Alternating exact projections onto the per-level moment constraints.

    Each sweep visits levels ``k = 1..K`` in order and solves for ``p^k``
    with all other levels fixed, which is exact block-coordinate ascent on
    :func:`dual_objective`. The per-sweep violation in the report is the
    largest ``|n_x M_2[S_k]_i - 1|`` seen just before each level is
    projected; convergence is confirmed with a fresh evaluation of every
    level against ``tolerance``.

    Parameters
    ----------
    factors : GibbsFactors
    tolerance : float
        Threshold on ``max_{k,i} |n_x M_2[S_k]_i - 1|``.
    max_sweeps : int
    log_domain : {"auto", "on", "off"} or bool
        ``auto`` switches to stabilised log-domain products when
        ``eps <= 1e-3``, when the dense kernels underflow, or when a dense
        product leaves the floating-point range.
    duals : DualPotentials, optional
        Warm start; zeros by default.
    accelerate : {"auto", True, False}
        Follow every sweep with a damped Newton step on the full dual
        vector, accepted only if it raises the dual objective. Sweeps alone
        converge linearly with a rate close to 1 for small ``eps``. ``auto``
        enables the step when the cost of the second-moment matrix (about
        ``K^2 n_x^2 N^2`` flops) is modest.

    Returns
    -------
    duals : DualPotentials
    report : SolverReport
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    grid = factors.grid
    p = (duals.p.copy() if duals is not None else np.zeros((grid.K, grid.nx)))
    use_log = _resolve_mode(factors, log_domain)
    report = SolverReport(tolerance=tolerance, log_domain=use_log)
    if accelerate == "auto":
        accelerate = grid.K ** 2 * grid.nx ** 2 * grid.n ** 2 <= _NEWTON_BUDGET
    try:
        chain = _Chain(factors, use_log)
    except _RangeError:
        raise FloatingPointError("dense kernels underflow; enable log-domain mode") from None
    # second-order steps and convergence checks always run in the log domain
    aux = chain if use_log else _Chain(factors, True)
    t0 = time.perf_counter()
    sweep = 0
    while sweep < max_sweeps:
        backup = p.copy()
        try:
            viol, dobj = _sweep(chain, p, report)
        except _RangeError:
            if log_domain not in ("auto",):
                raise FloatingPointError(
                    "dense arithmetic out of range; rerun with log-domain mode"
                ) from None
            logger.info("dense products out of range at sweep %d; switching to log domain", sweep + 1)
            p = backup
            chain = aux
            report.log_domain = True
            continue
        if not (np.all(np.isfinite(p)) and np.isfinite(dobj)):
            raise FloatingPointError(f"non-finite duals at sweep {sweep + 1}")
        sweep += 1
        report.violation_history.append(viol)
        report.dual_history.append(dobj)
        elapsed = time.perf_counter() - t0
        logger.info("sweep=%d violation=%.6e dual_obj=%.15e elapsed=%.3f", sweep, viol, dobj, elapsed)
        if viol < tolerance:
            exact = _exact_violation(aux, p)
            report.final_violation = exact
            if exact < tolerance:
                report.converged = True
                break
        if accelerate:
            p, _, step = _newton_step(aux, p, dobj)
            report.newton_steps += step > 0
    report.iterations = sweep
    if not report.converged:
        report.final_violation = _exact_violation(aux, p)
        report.converged = report.final_violation < tolerance
    report.wall_time = time.perf_counter() - t0
    return DualPotentials(p), report
