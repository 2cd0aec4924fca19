"""End-to-end runs: solve, then write plans, marginals, pressure and a manifest."""

from __future__ import annotations

import hashlib
import logging
import platform
import sys
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .config import ExperimentConfig
from .diagnostics import (
    base_transport_plan,
    cone_marginal,
    determinism_index,
    extract_pressure,
    plan_action,
)
from .discretization import build_cost_matrices, build_gibbs, build_grid
from .io import write_matrix_csv, write_pgm
from .mmot_solver import DualPotentials, SolverReport, StarvedNodeError, sinkhorn_solve

__all__ = ["RunResult", "run_experiment", "source_digest"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_STARVED, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class RunResult:
    status: int
    config: ExperimentConfig
    duals: DualPotentials | None = None
    report: SolverReport | None = None
    factors: object = None
    determinism: dict | None = None
    message: str = ""


def source_digest() -> str:
    """SHA-256 over the package sources, as a code-version fingerprint."""
    h = hashlib.sha256()
    for f in sorted(Path(__file__).parent.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, cfg: ExperimentConfig, result: RunResult, files) -> None:
    rep = result.report
    lines = [
        "# run manifest",
        f"package_version = {_version()}",
        f"source_sha256 = {source_digest()}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"command = {' '.join(sys.argv)}",
        f"status = {result.status}",
    ]
    if rep is not None:
        lines += [
            f"sweeps = {rep.iterations}",
            f"newton_steps = {rep.newton_steps}",
            f"final_violation = {rep.final_violation!r}",
            f"converged = {rep.converged}",
            f"log_domain_used = {rep.log_domain}",
        ]
    if result.message:
        lines.append(f"message = {result.message}")
    lines.append("pressure_scaling = eps * (p - mean_i p) / dt  (diagnostic only)")
    lines += ["", "# configuration", cfg.to_ini(), "# files (sha256)"]
    lines += [f"{f.name} {_sha(f)}" for f in files]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir) -> RunResult:
    """Solve the configured problem and write every artifact into ``out_dir``.

    Returns a :class:`RunResult` whose ``status`` is 0 on convergence and 2
    when the sweep budget runs out (outputs are still written). Status 3
    (starved node) and 4 (dense arithmetic out of range with the log domain
    switched off) leave only the log and the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "convergence.log"
    handler = logging.FileHandler(log_path, mode="w")
    handler.setFormatter(logging.Formatter("%(message)s"))
    solver_log = logging.getLogger("chflows.mmot_solver")
    prev_level = solver_log.level
    solver_log.addHandler(handler)
    solver_log.setLevel(logging.INFO)
    result = RunResult(EXIT_OK, cfg)
    files = []
    try:
        grid = build_grid(cfg.nx, cfg.nr, cfg.r_lo, cfg.r_hi, cfg.K, cfg.T)
        costs = build_cost_matrices(grid, cfg.boundary)
        factors = build_gibbs(costs, grid, cfg.eps, cfg.alpha)
        result.factors = factors
        accel = {"auto": "auto", "on": True, "off": False}[cfg.accelerate]
        try:
            duals, rep = sinkhorn_solve(
                factors, cfg.tolerance, cfg.max_sweeps, cfg.log_domain, accelerate=accel
            )
        except StarvedNodeError as exc:
            result.status, result.message = EXIT_STARVED, str(exc)
            solver_log.error("%s", exc)
            return result
        except FloatingPointError as exc:
            result.status, result.message = EXIT_NUMERIC, str(exc)
            solver_log.error("%s", exc)
            return result
        result.duals, result.report = duals, rep
        if not rep.converged:
            result.status = EXIT_NOT_CONVERGED
            result.message = (
                f"not converged after {rep.iterations} sweeps: "
                f"violation {rep.final_violation:.3e} >= tolerance {cfg.tolerance:.3e}"
            )
            solver_log.warning("%s", result.message)

        result.determinism = {}
        for k in cfg.snapshots:
            plan = base_transport_plan(factors, duals, k)
            cone = cone_marginal(factors, duals, k)
            result.determinism[k] = determinism_index(plan)
            for stem, sl in ((f"plan_k{k}", plan), (f"cone_k{k}", cone)):
                csv_path = out / f"{stem}.csv"
                write_matrix_csv(csv_path, sl.matrix, sl.row_axis, sl.col_axis, sl.row_values, sl.col_values)
                write_pgm(out / f"{stem}.pgm", sl.matrix)
                files += [csv_path, out / f"{stem}.pgm", out / f"{stem}.pgm.txt"]
        P = extract_pressure(duals, grid, cfg.eps)
        write_matrix_csv(out / "pressure.csv", P, "t", "x", grid.ts, grid.xs)
        files.append(out / "pressure.csv")

        action = plan_action(factors, duals)
        summary = out / "summary.txt"
        summary.write_text(
            f"transport_action = {action.transport!r}\n"
            f"coupling_action = {action.coupling!r}\n"
            + "".join(f"determinism_k{k} = {v!r}\n" for k, v in result.determinism.items())
        )
        files.append(summary)
        return result
    finally:
        solver_log.removeHandler(handler)
        solver_log.setLevel(prev_level)
        handler.close()
        _write_manifest(out, cfg, result, [log_path] + files)
