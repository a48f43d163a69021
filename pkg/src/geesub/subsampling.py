"""Poisson subsampling: scores, optimal probabilities, and the two-step fit.

The per-subject sampling scores come in two flavours: ``MV`` applies the
inverse information matrix to each subject's estimating-function
contribution (A-optimality, minimizes the trace of the estimator's
asymptotic covariance) and ``MVc`` skips that inverse (L-optimality,
minimizes the trace of the score covariance and is cheaper).  Budgeted
probabilities are either exactly water-filled with a cap threshold, or
mixed with the uniform r/n floor for the two-step shrinkage plan.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .correlation import (
    Structure,
    WorkingCorrelation,
    build_correlation,
    estimate_alpha_gpl,
    estimate_dispersion,
    estimate_unstructured,
    parse_structure,
)
from .errors import (
    ConvergenceError,
    DegenerateError,
    DomainError,
    InfeasibleError,
    RankError,
)
from .panel import PanelDataset
from .solver import (
    GeeFit,
    SubjectWeights,
    _residual_kernel,
    compute_residuals,
    fisher_information,
    fit,
)

METHOD_UNIFORM = "pUnif"
METHOD_MV = "pMV"
METHOD_MVC = "pMVc"

_CRITERIA = {"mv": "MV", "mvc": "MVc"}
_METHOD_FOR_CRITERION = {"MV": METHOD_MV, "MVc": METHOD_MVC}


def parse_criterion(name: str) -> str:
    key = str(name).strip().lower()
    if key not in _CRITERIA:
        raise DomainError(f"unknown criterion {name!r}; expected MV or MVc")
    return _CRITERIA[key]


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class SubsamplePlan:
    """Per-subject inclusion probabilities with their provenance."""

    probabilities: np.ndarray
    expected_size: float
    method: str
    rho: float | None = None
    pilot_fit: GeeFit | None = None
    nominal_size: float | None = None

    def __post_init__(self):
        pi = np.asarray(self.probabilities, dtype=float)
        if pi.ndim != 1:
            raise DomainError("probabilities must be a 1-d vector")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0.0) or np.any(pi > 1.0):
            raise DomainError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probabilities", pi)

    @property
    def n(self) -> int:
        return self.probabilities.shape[0]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rho": self.rho,
            "expected_size": self.expected_size,
            "nominal_size": self.nominal_size,
            "n": self.n,
        }


@dataclass(frozen=True)
class SubsampleDraw:
    """Realized Poisson draw: retained indices and their HT weights."""

    indices: np.ndarray
    weights: np.ndarray
    realized_size: int

    def to_weights(self, expected_size: float | None = None) -> SubjectWeights:
        return SubjectWeights(
            indices=self.indices,
            weights=self.weights,
            expected_size=expected_size,
        )

    def to_dict(self) -> dict:
        return {"realized_size": self.realized_size}


@dataclass(frozen=True)
class HScores:
    """Non-negative sampling scores with the plug-ins that produced them."""

    values: np.ndarray
    criterion: str
    beta: np.ndarray
    correlation: WorkingCorrelation
    information: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(h)) or np.any(h < 0.0):
            raise DomainError("scores must be finite and non-negative")
        object.__setattr__(self, "values", h)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def uniform_plan(n: int, r: float) -> SubsamplePlan:
    """Uniform Poisson plan with expected size r."""
    if not 0 < r <= n:
        raise DomainError(f"expected size r={r} must lie in (0, n={n}]")
    pi = np.full(n, r / n, dtype=float)
    return SubsamplePlan(
        probabilities=pi,
        expected_size=float(pi.sum()),
        method=METHOD_UNIFORM,
        nominal_size=float(r),
    )


def poisson_draw(plan: SubsamplePlan, seed) -> SubsampleDraw:
    """Independent Bernoulli(pi_i) inclusion per subject.

    Uses a counter-based generator keyed by the seed, so the draw is a
    pure function of (plan, seed).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random(plan.n)
    keep = u < plan.probabilities
    indices = np.flatnonzero(keep)
    return SubsampleDraw(
        indices=indices,
        weights=1.0 / plan.probabilities[indices],
        realized_size=int(indices.size),
    )


def compute_h_scores(
    data: PanelDataset,
    fit_state: GeeFit,
    criterion: str,
    information: np.ndarray | None = None,
) -> HScores:
    """Sampling scores h_i = ||[H^{-1}] X_i' A_i^{1/2} R^{-1} e_i|| for all subjects.

    ``MVc`` omits the leading inverse.  For ``MV``, ``information``
    supplies the matrix whose inverse is applied (the pilot information
    in the two-step algorithm); when absent it is computed from ``data``
    at the fit's coefficients.
    """
    criterion = parse_criterion(criterion)
    beta = np.asarray(fit_state.beta, dtype=float)
    corr = fit_state.correlation
    _, sqrt_v, eps = _residual_kernel(data.X, data.Y, data.family, beta)
    U = np.einsum("smp,sm->sp", data.X, sqrt_v * (eps @ corr.inverse))
    if criterion == "MVc":
        h = np.linalg.norm(U, axis=1)
        info = None
    else:
        info = information
        if info is None:
            info = fisher_information(data, beta, corr)
        try:
            Z = cho_solve(cho_factor(np.asarray(info, float), lower=True), U.T)
        except LinAlgError as exc:
            raise RankError(
                "pilot information matrix is singular under the MV criterion; "
                "consider MVc or a larger pilot"
            ) from exc
        h = np.linalg.norm(Z, axis=0)
    return HScores(
        values=h,
        criterion=criterion,
        beta=beta,
        correlation=corr,
        information=None if info is None else np.asarray(info, float),
    )


def capped_probabilities(h: HScores, r: float) -> SubsamplePlan:
    """Exact budgeted probabilities pi_i = r (h_i ^ T) / sum_j (h_j ^ T).

    The cap threshold T is chosen by a water-filling search over the
    number of saturated subjects so that sum(pi) = r and max(pi) <= 1.
    Zero-score subjects receive probability zero; at least ceil(r)
    strictly positive scores are required for feasibility.
    """
    values = h.values
    n = values.shape[0]
    if not 0 < r <= n:
        raise DomainError(f"expected size r={r} must lie in (0, n={n}]")
    n_positive = int(np.count_nonzero(values > 0.0))
    if n_positive < int(np.ceil(r)):
        raise InfeasibleError(
            f"only {n_positive} positive scores for expected size r={r}"
        )

    hs = np.sort(values)
    prefix = np.concatenate(([0.0], np.cumsum(hs)))
    threshold = None
    for s in range(int(np.floor(r)) + 1):
        remaining = r - s
        tail_sum = prefix[n - s]
        if remaining <= 0.0:
            # integer r with exactly r positive scores: saturate them all
            if tail_sum == 0.0:
                threshold = hs[hs > 0.0].min()
                break
            continue
        if n - s == 0:
            continue
        candidate = tail_sum / remaining
        if hs[n - s - 1] < candidate:
            threshold = candidate
            break
    if threshold is None:
        raise InfeasibleError(f"no cap threshold exists for r={r}")

    capped = np.minimum(values, threshold)
    pi = np.minimum(r * capped / capped.sum(), 1.0)
    return SubsamplePlan(
        probabilities=pi,
        expected_size=float(pi.sum()),
        method=_METHOD_FOR_CRITERION[h.criterion],
        nominal_size=float(r),
    )


def shrinkage_probabilities(
    h: HScores,
    r2: float,
    rho: float,
    psi_hat: float,
    pilot_fit: GeeFit | None = None,
) -> SubsamplePlan:
    """Shrinkage mixture (1-rho) r2 h_i / (n psi) + rho r2 / n, capped at 1.

    No water-filling threshold is applied; the mixture floor rho*r2/n
    keeps every probability strictly positive, and values above 1 are
    truncated.
    """
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho={rho} must lie in (0, 1)")
    if psi_hat <= 0.0:
        raise DomainError(f"psi_hat={psi_hat} must be positive")
    n = h.n
    if not 0 < r2 <= n:
        raise DomainError(f"expected size r2={r2} must lie in (0, n={n}]")
    raw = (1.0 - rho) * r2 * h.values / (n * psi_hat) + rho * r2 / n
    pi = np.minimum(raw, 1.0)
    return SubsamplePlan(
        probabilities=pi,
        expected_size=float(pi.sum()),
        method=_METHOD_FOR_CRITERION[h.criterion],
        rho=float(rho),
        pilot_fit=pilot_fit,
        nominal_size=float(r2),
    )


def estimate_psi(
    data: PanelDataset,
    pilot_draw: SubsampleDraw,
    pilot_fit: GeeFit,
    criterion: str,
    information: np.ndarray | None = None,
) -> float:
    """Mean sampling score over the retained pilot subjects.

    With ``information`` absent, the information matrix is computed on
    the pilot subset itself (the plug-in the two-step algorithm uses).
    """
    if pilot_draw.realized_size == 0:
        raise DegenerateError("empty pilot draw")
    subset = data.subset(pilot_draw.indices)
    criterion = parse_criterion(criterion)
    if criterion == "MV" and information is None:
        information = fisher_information(
            subset, pilot_fit.beta, pilot_fit.correlation
        )
    scores = compute_h_scores(subset, pilot_fit, criterion, information)
    return float(scores.values.mean())


def subsample_fit(
    data: PanelDataset,
    structure: Structure | str,
    plan: SubsamplePlan,
    seed,
    beta_init: np.ndarray | None = None,
) -> tuple[GeeFit, SubsampleDraw]:
    """Draw a Poisson subsample from the plan and fit the weighted GEE."""
    draw = poisson_draw(plan, seed)
    if draw.realized_size == 0:
        raise DegenerateError("Poisson draw retained no subjects")
    fitted = fit(
        data,
        structure,
        weights=draw.to_weights(plan.expected_size),
        beta_init=beta_init,
    )
    return fitted, draw


@dataclass(frozen=True)
class TwoStepResult:
    """Two-step estimate with its plan, pilot state, and diagnostics."""

    fit: GeeFit
    plan: SubsamplePlan
    pilot_fit: GeeFit
    pilot_draw: SubsampleDraw
    draw: SubsampleDraw
    scores: HScores
    psi_hat: float
    pilot_seconds: float
    estimation_seconds: float
    overlap_count: int

    def to_dict(self) -> dict:
        return {
            "fit": self.fit.to_dict(),
            "plan": self.plan.to_dict(),
            "pilot_realized_size": self.pilot_draw.realized_size,
            "realized_size": self.draw.realized_size,
            "psi_hat": self.psi_hat,
            "overlap_count": self.overlap_count,
            "timings": {
                "pilot_seconds": self.pilot_seconds,
                "estimation_seconds": self.estimation_seconds,
            },
        }


def _pilot_correlation(data, pilot_fit, pilot_draw, structure):
    """Working correlation (and dispersion) estimated on the pilot."""
    residuals = compute_residuals(
        data, pilot_fit.beta, pilot_draw.to_weights()
    )
    if data.family.estimate_dispersion:
        phi = estimate_dispersion(residuals, data.p)
    else:
        phi = 1.0
    residuals = replace(residuals, phi=phi)
    if structure == Structure.IND or data.m == 1:
        return build_correlation(Structure.IND, None, data.m), phi
    if structure == Structure.UNSTRUCTURED:
        matrix = estimate_unstructured(residuals)
        return WorkingCorrelation.from_matrix(matrix), phi
    alpha = estimate_alpha_gpl(residuals, structure)
    return build_correlation(structure, alpha, data.m), phi


def two_step_fit(
    data: PanelDataset,
    structure: Structure | str,
    r1: float,
    r2: float,
    criterion: str,
    rho: float = 0.2,
    seed=0,
) -> TwoStepResult:
    """Pilot-then-optimal Poisson subsampling estimate.

    Step 1 draws a uniform pilot of expected size r1, fits it under the
    independence structure, estimates the working correlation and the
    pilot information, and computes sampling scores for all subjects.
    Step 2 draws from the shrinkage plan of expected size r2 and fits
    the weighted GEE warm-started at the pilot coefficients.
    """
    structure = parse_structure(structure)
    criterion = parse_criterion(criterion)
    seed_pilot, seed_main = _as_seed_sequence(seed).spawn(2)

    t0 = time.perf_counter()
    pilot_plan = uniform_plan(data.n, r1)
    pilot_draw = poisson_draw(pilot_plan, seed_pilot)
    if pilot_draw.realized_size < 2:
        raise DegenerateError(
            f"pilot draw retained {pilot_draw.realized_size} subjects; "
            "increase r1"
        )
    try:
        pilot_fit = fit(
            data, Structure.IND, weights=pilot_draw.to_weights(float(r1))
        )
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"pilot fit did not converge; increase r1 (cause: {exc})",
            last_beta=exc.last_beta,
            iterations=exc.iterations,
        ) from exc

    pilot_corr, pilot_phi = _pilot_correlation(
        data, pilot_fit, pilot_draw, structure
    )
    plug_in = replace(pilot_fit, correlation=pilot_corr, dispersion=pilot_phi)
    pilot_subset = data.subset(pilot_draw.indices)
    pilot_information = fisher_information(
        pilot_subset, pilot_fit.beta, pilot_corr
    )
    scores = compute_h_scores(
        data,
        plug_in,
        criterion,
        information=pilot_information if criterion == "MV" else None,
    )
    psi_hat = float(scores.values[pilot_draw.indices].mean())
    plan = shrinkage_probabilities(scores, r2, rho, psi_hat, pilot_fit=plug_in)
    pilot_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    final_fit, draw = subsample_fit(
        data, structure, plan, seed_main, beta_init=pilot_fit.beta
    )
    estimation_seconds = time.perf_counter() - t1

    overlap = int(np.intersect1d(pilot_draw.indices, draw.indices).size)
    return TwoStepResult(
        fit=final_fit,
        plan=plan,
        pilot_fit=pilot_fit,
        pilot_draw=pilot_draw,
        draw=draw,
        scores=scores,
        psi_hat=psi_hat,
        pilot_seconds=pilot_seconds,
        estimation_seconds=estimation_seconds,
        overlap_count=overlap,
    )
