"""GEE solver: estimating function, information matrix, Fisher scoring.

Handles the full-data fit and the Horvitz-Thompson-weighted subsample
fit through the same code path.  Each outer iteration refreshes the
dispersion and the working correlation from the current residuals, then
takes one scoring step; iteration stops when successive coefficient
vectors differ by less than 1e-4 in Euclidean norm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .correlation import (
    Structure,
    StandardizedResiduals,
    WorkingCorrelation,
    build_correlation,
    estimate_alpha_gpl,
    estimate_dispersion,
    estimate_unstructured,
    parse_structure,
)
from .errors import ConvergenceError, DomainError, RankError
from .panel import PanelDataset

#: stopping rule: Euclidean norm of successive coefficient differences
BETA_TOL = 1e-4

#: outer iteration cap
MAX_ITERATIONS = 100


@dataclass(frozen=True)
class SubjectWeights:
    """Sparse per-subject inverse-probability multipliers.

    ``indices`` lists the retained subjects; ``weights`` holds 1/pi for
    each of them (>= 1 since pi <= 1).  Subjects not listed have weight
    zero.
    """

    indices: np.ndarray
    weights: np.ndarray
    expected_size: float | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        w = np.asarray(self.weights, dtype=float)
        if idx.shape != w.shape or idx.ndim != 1:
            raise DomainError("indices and weights must be matching 1-d arrays")
        if not np.all(np.isfinite(w)) or np.any(w < 1.0 - 1e-9):
            raise DomainError("weights must be finite and >= 1")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class GeeFit:
    """Converged GEE estimate with the state that produced it."""

    beta: np.ndarray
    correlation: WorkingCorrelation
    dispersion: float
    iterations: int
    converged: bool
    final_score_norm: float

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "structure": self.correlation.structure.value,
            "alpha": self.correlation.alpha,
            "phi": self.dispersion,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_score_norm": self.final_score_norm,
        }


def _select(data: PanelDataset, weights: SubjectWeights | None):
    """Retained-subject views of the arrays plus the weight vector."""
    if weights is None:
        return data.X, data.Y, None
    return data.X[weights.indices], data.Y[weights.indices], weights.weights


def _residual_kernel(X, Y, family, beta):
    """Means, sqrt variance function, and standardized residuals."""
    eta = X @ beta
    mu = family.mean(eta)
    v = family.variance(mu)
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise DomainError(
            f"variance function hit zero or overflowed under {family.name} "
            "(fitted mean on the boundary)"
        )
    sqrt_v = np.sqrt(v)
    eps = (Y - mu) / sqrt_v
    return mu, sqrt_v, eps


def compute_residuals(
    data: PanelDataset,
    beta: np.ndarray,
    weights: SubjectWeights | None = None,
) -> StandardizedResiduals:
    """Standardized residuals A^{-1/2}(Y - mu) for the retained subjects."""
    X, Y, w = _select(data, weights)
    _, _, eps = _residual_kernel(X, Y, data.family, np.asarray(beta, float))
    return StandardizedResiduals(epsilon=eps, weights=w, n_total=data.n)


def score(
    data: PanelDataset,
    beta: np.ndarray,
    correlation: WorkingCorrelation,
    weights: SubjectWeights | None = None,
) -> np.ndarray:
    """Estimating function (1/n) sum_i w_i X_i' A_i^{1/2} R^{-1} e_i(beta)."""
    X, Y, w = _select(data, weights)
    beta = np.asarray(beta, dtype=float)
    _, sqrt_v, eps = _residual_kernel(X, Y, data.family, beta)
    t = sqrt_v * (eps @ correlation.inverse)
    if w is not None:
        t = t * w[:, None]
    return np.einsum("smp,sm->p", X, t) / data.n


def fisher_information(
    data: PanelDataset,
    beta: np.ndarray,
    correlation: WorkingCorrelation,
    weights: SubjectWeights | None = None,
) -> np.ndarray:
    """Information matrix (1/n) sum_i w_i X_i' A_i^{1/2} R^{-1} A_i^{1/2} X_i.

    Raises RankError when the result is numerically singular (smallest
    eigenvalue below 1e-12), which usually means the retained subsample
    is too small for the covariate dimension.
    """
    X, Y, w = _select(data, weights)
    beta = np.asarray(beta, dtype=float)
    _, sqrt_v, _ = _residual_kernel(X, Y, data.family, beta)
    B = sqrt_v[:, :, None] * X
    C = np.matmul(correlation.inverse, B)
    t = B if w is None else B * w[:, None, None]
    H = np.einsum("smp,smq->pq", t, C) / data.n
    H = 0.5 * (H + H.T)
    eig_min = float(np.linalg.eigvalsh(H)[0])
    if eig_min < 1e-12:
        raise RankError(
            f"information matrix singular (smallest eigenvalue {eig_min:.3e}); "
            "a larger subsample or fewer covariates is needed"
        )
    return H


def _scoring_step(data, beta, correlation, weights):
    H = fisher_information(data, beta, correlation, weights)
    S = score(data, beta, correlation, weights)
    try:
        delta = cho_solve(cho_factor(H, lower=True), S)
    except LinAlgError as exc:
        raise RankError(f"information matrix factorization failed: {exc}") from exc
    return beta + delta, delta


def _independence_start(data, weights):
    """One scoring pass under the independence structure from beta = 0."""
    identity = build_correlation(Structure.IND, None, data.m)
    beta0 = np.zeros(data.p)
    beta, _ = _scoring_step(data, beta0, identity, weights)
    return beta


def _refresh_correlation(data, beta, weights, structure, n_params, family):
    """Dispersion and working correlation re-estimated at the current beta."""
    residuals = compute_residuals(data, beta, weights)
    if family.estimate_dispersion:
        phi = estimate_dispersion(residuals, n_params)
    else:
        phi = 1.0
    residuals = replace(residuals, phi=phi)
    if structure == Structure.UNSTRUCTURED:
        matrix = estimate_unstructured(residuals)
        corr = WorkingCorrelation.from_matrix(matrix)
    else:
        alpha = estimate_alpha_gpl(residuals, structure)
        corr = build_correlation(structure, alpha, data.m)
    return corr, phi


def fit(
    data: PanelDataset,
    structure: Structure | str,
    weights: SubjectWeights | None = None,
    beta_init: np.ndarray | None = None,
    fixed_correlation: WorkingCorrelation | None = None,
    max_iterations: int = MAX_ITERATIONS,
    tol: float = BETA_TOL,
) -> GeeFit:
    """Fit the (possibly weighted) GEE by Fisher scoring.

    ``fixed_correlation`` holds the working correlation constant instead
    of re-estimating it each iteration.  ``beta_init`` overrides the
    default warm start (one independence-structure scoring pass).
    Raises ConvergenceError (carrying the last iterate) after
    ``max_iterations`` steps without meeting the stopping rule.
    """
    structure = parse_structure(structure)
    if weights is not None and weights.size == 0:
        raise DomainError("cannot fit on an empty retained set")

    if beta_init is not None:
        beta = np.asarray(beta_init, dtype=float).copy()
        if beta.shape != (data.p,):
            raise DomainError(f"beta_init must have shape ({data.p},)")
    else:
        beta = _independence_start(data, weights)

    refresh = (
        fixed_correlation is None
        and structure != Structure.IND
        and data.m > 1
    )
    if fixed_correlation is not None:
        corr = fixed_correlation
    else:
        # identity start; the first refresh replaces it for m > 1
        corr = build_correlation(Structure.IND, None, data.m)
        if structure != Structure.IND:
            corr = replace(corr, structure=structure)
    phi = 1.0

    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        if refresh:
            corr, phi = _refresh_correlation(
                data, beta, weights, structure, data.p, data.family
            )
        beta, delta = _scoring_step(data, beta, corr, weights)
        if float(np.linalg.norm(delta)) < tol:
            converged = True
            break

    if not converged:
        raise ConvergenceError(
            f"no convergence in {max_iterations} iterations "
            f"(last step norm {float(np.linalg.norm(delta)):.3e})",
            last_beta=beta,
            iterations=iterations,
        )

    # report dispersion and correlation re-estimated at the converged beta
    if refresh:
        corr, phi = _refresh_correlation(
            data, beta, weights, structure, data.p, data.family
        )
    elif data.family.estimate_dispersion:
        residuals = compute_residuals(data, beta, weights)
        phi = estimate_dispersion(residuals, data.p)

    return GeeFit(
        beta=beta,
        correlation=corr,
        dispersion=float(phi),
        iterations=iterations,
        converged=converged,
        final_score_norm=float(np.linalg.norm(score(data, beta, corr, weights))),
    )
