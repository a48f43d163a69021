"""Sandwich covariance estimators and Wald intervals for linear contrasts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import ndtri

from .errors import DomainError, RankError
from .panel import PanelDataset
from .solver import GeeFit, SubjectWeights, _residual_kernel, fisher_information
from .subsampling import SubsampleDraw, SubsamplePlan
from .correlation import WorkingCorrelation

SOURCE_ORACLE = "full_data_oracle"
SOURCE_PLUGIN = "subsample_plugin"


@dataclass(frozen=True)
class SandwichCovariance:
    """Bread H, meat M, and the assembled covariance H^{-1} M H^{-1}."""

    bread: np.ndarray
    meat: np.ndarray
    covariance: np.ndarray
    source: str

    def to_dict(self) -> dict:
        return {
            "bread": self.bread.tolist(),
            "meat": self.meat.tolist(),
            "covariance": self.covariance.tolist(),
            "source": self.source,
        }


def _score_vectors(data: PanelDataset, beta, correlation) -> np.ndarray:
    """Per-subject contributions X_i' A_i^{1/2} R^{-1} e_i, one row each."""
    beta = np.asarray(beta, dtype=float)
    _, sqrt_v, eps = _residual_kernel(data.X, data.Y, data.family, beta)
    return np.einsum("smp,sm->sp", data.X, sqrt_v * (eps @ correlation.inverse))


def meat_full(
    data: PanelDataset,
    beta: np.ndarray,
    correlation: WorkingCorrelation,
    plan: SubsamplePlan,
) -> np.ndarray:
    """Exact (1/n^2) sum_i (1/pi_i) u_i u_i' over the full data.

    Benchmark-only oracle: it needs every subject, so it never appears on
    estimation paths.  Subjects with pi = 0 must contribute a zero score
    vector, otherwise the target is undefined.
    """
    if plan.n != data.n:
        raise DomainError("plan length does not match the dataset")
    U = _score_vectors(data, beta, correlation)
    pi = plan.probabilities
    zero_pi = pi <= 0.0
    if np.any(zero_pi & (np.linalg.norm(U, axis=1) > 0.0)):
        raise DomainError(
            "some subjects have pi = 0 but a nonzero score contribution"
        )
    inv_pi = np.where(zero_pi, 0.0, 1.0 / np.where(zero_pi, 1.0, pi))
    M = (U.T * inv_pi) @ U / data.n**2
    return 0.5 * (M + M.T)


def _assemble(bread: np.ndarray, meat: np.ndarray, source: str) -> SandwichCovariance:
    try:
        chol = cho_factor(bread, lower=True)
    except LinAlgError as exc:
        raise RankError(f"sandwich bread is singular: {exc}") from exc
    half = cho_solve(chol, meat)            # H^{-1} M
    cov = cho_solve(chol, half.T)           # H^{-1} (H^{-1} M)' = H^{-1} M H^{-1}
    cov = 0.5 * (cov + cov.T)
    return SandwichCovariance(bread=bread, meat=meat, covariance=cov, source=source)


def sandwich_subsample(
    draw: SubsampleDraw,
    data: PanelDataset,
    fit_state: GeeFit,
    plan: SubsamplePlan,
    mode: str = "ht",
) -> SandwichCovariance:
    """Plug-in sandwich for a subsample estimate.

    ``mode="ht"`` (default) uses inverse-probability-consistent weights:
    1/pi in the bread and 1/pi^2 in the meat, so both pieces are unbiased
    for their full-data targets under Poisson inclusion.  ``mode="plain"``
    uses the unweighted bread and single 1/pi meat weights for
    comparison.
    """
    if mode not in ("ht", "plain"):
        raise DomainError(f"mode must be 'ht' or 'plain', got {mode!r}")
    if draw.realized_size == 0:
        raise DomainError("cannot build a sandwich from an empty draw")
    idx = draw.indices
    pi = plan.probabilities[idx]
    subset = data.subset(idx)

    if mode == "ht":
        bread_weights = SubjectWeights(indices=idx, weights=1.0 / pi)
        meat_coef = 1.0 / pi**2
    else:
        bread_weights = SubjectWeights(indices=idx, weights=np.ones(idx.size))
        meat_coef = 1.0 / pi
    bread = fisher_information(
        data, fit_state.beta, fit_state.correlation, weights=bread_weights
    )
    U = _score_vectors(subset, fit_state.beta, fit_state.correlation)
    meat = (U.T * meat_coef) @ U / data.n**2
    meat = 0.5 * (meat + meat.T)
    return _assemble(bread, meat, SOURCE_PLUGIN)


def sandwich_full(data: PanelDataset, fit_state: GeeFit) -> SandwichCovariance:
    """Full-data sandwich (the pi = 1, all-subjects special case)."""
    n = data.n
    all_idx = np.arange(n)
    draw = SubsampleDraw(
        indices=all_idx, weights=np.ones(n), realized_size=n
    )
    plan = SubsamplePlan(
        probabilities=np.ones(n),
        expected_size=float(n),
        method="full",
        nominal_size=float(n),
    )
    result = sandwich_subsample(draw, data, fit_state, plan)
    return SandwichCovariance(
        bread=result.bread,
        meat=result.meat,
        covariance=result.covariance,
        source=SOURCE_ORACLE,
    )


@dataclass(frozen=True)
class ConfidenceInterval:
    """Two-sided Wald interval for a normalized linear contrast."""

    estimate: float
    lower: float
    upper: float
    level: float
    contrast: np.ndarray

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "contrast": self.contrast.tolist(),
        }


def confidence_interval(
    fit_state: GeeFit,
    cov: SandwichCovariance,
    contrast: np.ndarray,
    level: float = 0.95,
) -> ConfidenceInterval:
    """c'beta +/- z_{(1+level)/2} sqrt(c' Sigma c), with c normalized."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level={level} must lie in (0, 1)")
    c = np.asarray(contrast, dtype=float)
    if c.shape != fit_state.beta.shape:
        raise DomainError(
            f"contrast shape {c.shape} does not match beta {fit_state.beta.shape}"
        )
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        raise DomainError("contrast must be nonzero")
    c = c / norm
    variance = float(c @ cov.covariance @ c)
    scale = max(1.0, float(np.trace(cov.covariance)))
    if variance < -1e-12 * scale:
        raise DomainError(
            f"covariance is not positive semidefinite (c'Sc = {variance:.3e})"
        )
    variance = max(variance, 0.0)
    z = float(ndtri(0.5 * (1.0 + level)))
    estimate = float(c @ fit_state.beta)
    half = z * np.sqrt(variance)
    return ConfidenceInterval(
        estimate=estimate,
        lower=estimate - half,
        upper=estimate + half,
        level=level,
        contrast=c,
    )
