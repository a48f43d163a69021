"""Replicated method comparison: full fit vs pUnif / pMV / pMVc.

Each replication generates a fresh panel, fits the full data, then runs
the three subsampling methods at every second-stage budget in the grid.
pUnif draws uniformly at probability r2/n, the same-r2 comparison the
method orderings are stated for; the two-step methods additionally
spend the shared pilot budget r1.  Wall time is
measured around each method's complete estimation path (draws and fits,
excluding data generation).  Replication s derives all of its random
streams from base_seed + s, so results are reproducible and independent
of scheduling.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .correlation import Structure, parse_structure
from .errors import (
    BenchmarkError,
    ConvergenceError,
    DegenerateError,
    DomainError,
    InfeasibleError,
    RankError,
)
from .simulate import COVARIATE_CASES, make_beta0, simulate_panel
from .solver import fit
from .subsampling import (
    METHOD_MV,
    METHOD_MVC,
    METHOD_UNIFORM,
    subsample_fit,
    two_step_fit,
    uniform_plan,
)

FULL_METHOD = "full"

#: replication failure modes that are recorded and excluded, not fatal
_RECOVERABLE = (ConvergenceError, RankError, DegenerateError, InfeasibleError)

#: failure fraction beyond which the benchmark aborts
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class SimulationConfig:
    """One benchmark scenario: data design, budgets, and replication plan."""

    n: int = 10_000
    m: int = 5
    p: int = 30
    case: str = "t3"
    true_structure: Structure = Structure.AR1
    alpha: float = 0.5
    working_structure: Structure = Structure.AR1
    r1: int = 200
    r2_grid: tuple[int, ...] = (100, 200, 400, 600, 800, 1000)
    rho: float = 0.2
    replications: int = 100
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "true_structure", parse_structure(self.true_structure)
        )
        object.__setattr__(
            self, "working_structure", parse_structure(self.working_structure)
        )
        if self.case not in COVARIATE_CASES:
            raise DomainError(f"case must be one of {COVARIATE_CASES}")
        make_beta0(self.p)  # validates the coefficient pattern
        if min(self.n, self.m, self.replications) < 1:
            raise DomainError("n, m, and replications must be positive")
        grid = tuple(int(r) for r in self.r2_grid)
        if not grid or any(r < 1 for r in grid):
            raise DomainError("r2_grid must be non-empty positive budgets")
        object.__setattr__(self, "r2_grid", grid)
        if self.r1 < 1:
            raise DomainError("r1 must be positive")
        if self.r1 + max(grid) >= self.n:
            raise DomainError(
                f"r1 + max(r2) = {self.r1 + max(grid)} must stay below n={self.n}"
            )
        if not 0.0 < self.rho < 1.0:
            raise DomainError(f"rho={self.rho} must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "case": self.case,
            "true_structure": self.true_structure.value,
            "alpha": self.alpha,
            "working_structure": self.working_structure.value,
            "r1": self.r1,
            "r2_grid": list(self.r2_grid),
            "rho": self.rho,
            "replications": self.replications,
            "base_seed": self.base_seed,
        }


@dataclass
class MethodCell:
    """Aggregated results for one (method, r2) combination.

    ``squared_errors`` keeps the per-replication values behind the MSE
    (in replication order, failures excluded); it stays out of the
    serialized outputs.
    """

    method: str
    r2: int | None
    mse: float
    log_mse: float
    mean_time_s: float
    mean_realized_size: float
    reps: int
    failures: int
    squared_errors: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "r2": self.r2,
            "mse": self.mse,
            "log_mse": self.log_mse,
            "mean_time_s": self.mean_time_s,
            "mean_realized_size": self.mean_realized_size,
            "reps": self.reps,
            "failures": self.failures,
        }


@dataclass
class BenchmarkResult:
    """All cells of one scenario plus the full-data reference row."""

    config: SimulationConfig
    cells: list[MethodCell] = field(default_factory=list)

    def cell(self, method: str, r2: int | None) -> MethodCell:
        for c in self.cells:
            if c.method == method and c.r2 == r2:
                return c
        raise KeyError((method, r2))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "budget_policy": "pUnif draws uniformly at r2/n; pMV/pMVc "
            f"additionally spend the shared pilot budget r1={self.config.r1}",
            "cells": [c.to_dict() for c in self.cells],
        }


_CSV_COLUMNS = (
    "case",
    "true_structure",
    "working_structure",
    "p",
    "method",
    "r2",
    "mse",
    "log_mse",
    "mean_time_s",
    "reps",
    "failures",
)


def write_result_csv(results: "list[BenchmarkResult]", path: str | Path) -> None:
    """Emit one row per (scenario, method, r2) in a fixed column order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for result in results:
            cfg = result.config
            for cell in result.cells:
                writer.writerow(
                    [
                        cfg.case,
                        cfg.true_structure.value,
                        cfg.working_structure.value,
                        cfg.p,
                        cell.method,
                        "" if cell.r2 is None else cell.r2,
                        repr(cell.mse),
                        repr(cell.log_mse),
                        f"{cell.mean_time_s:.6f}",
                        cell.reps,
                        cell.failures,
                    ]
                )


def compute_mse(estimates, beta0: np.ndarray) -> float:
    """Mean squared Euclidean distance of the estimates from beta0."""
    estimates = [np.asarray(b, dtype=float) for b in estimates]
    if not estimates:
        raise DomainError("need at least one estimate")
    beta0 = np.asarray(beta0, dtype=float)
    for b in estimates:
        if b.shape != beta0.shape:
            raise DomainError(
                f"estimate shape {b.shape} does not match beta0 {beta0.shape}"
            )
    return float(np.mean([np.sum((beta0 - b) ** 2) for b in estimates]))


def _method_seed(base_seed: int, replication: int, method: str, r2: int):
    key = {METHOD_UNIFORM: 1, METHOD_MV: 2, METHOD_MVC: 3}[method]
    return np.random.SeedSequence(
        entropy=base_seed + replication, spawn_key=(key, r2)
    )


def _run_replication(config: SimulationConfig, s: int) -> dict:
    """All method outcomes for replication s; None marks a failure."""
    seed = config.base_seed + s
    data, beta0 = simulate_panel(
        config.case, config.n, config.m, config.p,
        config.true_structure, config.alpha, seed,
    )
    out: dict = {}

    t0 = time.perf_counter()
    try:
        full = fit(data, config.working_structure)
        out[(FULL_METHOD, None)] = (
            float(np.sum((beta0 - full.beta) ** 2)),
            time.perf_counter() - t0,
            float(config.n),
        )
    except _RECOVERABLE:
        out[(FULL_METHOD, None)] = None

    for r2 in config.r2_grid:
        t0 = time.perf_counter()
        try:
            plan = uniform_plan(config.n, r2)
            ufit, udraw = subsample_fit(
                data, config.working_structure, plan,
                _method_seed(config.base_seed, s, METHOD_UNIFORM, r2),
            )
            out[(METHOD_UNIFORM, r2)] = (
                float(np.sum((beta0 - ufit.beta) ** 2)),
                time.perf_counter() - t0,
                float(udraw.realized_size),
            )
        except _RECOVERABLE:
            out[(METHOD_UNIFORM, r2)] = None

        for method, criterion in ((METHOD_MV, "MV"), (METHOD_MVC, "MVc")):
            t0 = time.perf_counter()
            try:
                result = two_step_fit(
                    data, config.working_structure, config.r1, r2, criterion,
                    rho=config.rho,
                    seed=_method_seed(config.base_seed, s, method, r2),
                )
                out[(method, r2)] = (
                    float(np.sum((beta0 - result.fit.beta) ** 2)),
                    time.perf_counter() - t0,
                    float(
                        result.pilot_draw.realized_size
                        + result.draw.realized_size
                    ),
                )
            except _RECOVERABLE:
                out[(method, r2)] = None
    return out


def run_benchmark(config: SimulationConfig, n_jobs: int = 1) -> BenchmarkResult:
    """Run every replication and aggregate per-cell MSE and timing.

    Replications may run in parallel; aggregation order is fixed by the
    replication index, so the numeric output is independent of n_jobs.
    Raises BenchmarkError when any cell loses more than 5% of its
    replications to recoverable failures.
    """
    reps = config.replications
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_rep = list(pool.map(_run_replication, [config] * reps, range(reps)))
    else:
        per_rep = [_run_replication(config, s) for s in range(reps)]

    keys = [(FULL_METHOD, None)]
    for r2 in config.r2_grid:
        keys.extend(
            [(METHOD_UNIFORM, r2), (METHOD_MV, r2), (METHOD_MVC, r2)]
        )

    result = BenchmarkResult(config=config)
    for method, r2 in keys:
        sq_errors, times, sizes, failures = [], [], [], 0
        for rep in per_rep:
            value = rep[(method, r2)]
            if value is None:
                failures += 1
                continue
            err, seconds, realized = value
            sq_errors.append(err)
            times.append(seconds)
            sizes.append(realized)
        if failures > MAX_FAILURE_RATE * reps:
            raise BenchmarkError(
                f"{failures}/{reps} replications failed for "
                f"method={method} r2={r2}"
            )
        mse = float(np.mean(sq_errors))
        result.cells.append(
            MethodCell(
                method=method,
                r2=r2,
                mse=mse,
                log_mse=math.log(mse) if mse > 0 else float("-inf"),
                mean_time_s=float(np.mean(times)),
                mean_realized_size=float(np.mean(sizes)),
                reps=len(sq_errors),
                failures=failures,
                squared_errors=tuple(sq_errors),
            )
        )
    return result
