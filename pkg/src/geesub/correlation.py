"""Working correlation structures and their parameter estimators.

Supported structures: independence (IND), exchangeable (EX), first-order
autoregressive (AR1), first-order moving average (MA1), and the
unstructured estimator built from weighted residual outer products.
The correlation parameter of EX/AR1/MA1 is estimated either by
maximizing the Gaussian pseudo-log-likelihood (golden-section search
over the feasible interval) or by a moment estimator used as a
cross-check.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateError, DomainError

#: clamping margin keeping estimated parameters strictly inside the
#: feasible interval so the matrix stays invertible at the boundary
FEASIBILITY_MARGIN = 1e-4

#: smallest eigenvalue accepted for a positive-definite correlation matrix
PD_EIGEN_FLOOR = 1e-10

#: golden-section termination width for the pseudo-likelihood search
GPL_TOL = 1e-6


class Structure(str, enum.Enum):
    IND = "IND"
    EX = "EX"
    AR1 = "AR1"
    MA1 = "MA1"
    UNSTRUCTURED = "UNSTRUCTURED"


_ALIASES = {
    "ind": Structure.IND,
    "independence": Structure.IND,
    "ex": Structure.EX,
    "exchangeable": Structure.EX,
    "ar1": Structure.AR1,
    "ar(1)": Structure.AR1,
    "ma1": Structure.MA1,
    "ma(1)": Structure.MA1,
    "unstructured": Structure.UNSTRUCTURED,
}


def parse_structure(name: str | Structure) -> Structure:
    if isinstance(name, Structure):
        return name
    key = str(name).strip().lower()
    if key not in _ALIASES:
        raise DomainError(
            f"unknown correlation structure {name!r}; expected one of "
            f"{sorted(set(a.value for a in _ALIASES.values()))}"
        )
    return _ALIASES[key]


def feasible_interval(structure: Structure, m: int) -> tuple[float, float]:
    """Open interval of correlation parameters giving a PD matrix."""
    structure = parse_structure(structure)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if m == 1:
        # all structures collapse to the 1x1 identity
        return (-1.0, 1.0)
    if structure == Structure.EX:
        return (-1.0 / (m - 1), 1.0)
    if structure == Structure.AR1:
        return (-1.0, 1.0)
    if structure == Structure.MA1:
        bound = 1.0 / (2.0 * np.cos(np.pi / (m + 1)))
        return (-bound, bound)
    raise DomainError(f"structure {structure.value} has no scalar parameter")


def _ex_matrix(alpha: float, m: int) -> np.ndarray:
    R = np.full((m, m), alpha, dtype=float)
    np.fill_diagonal(R, 1.0)
    return R


def _ar1_matrix(alpha: float, m: int) -> np.ndarray:
    lags = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
    return np.power(float(alpha), lags)


def _ma1_matrix(alpha: float, m: int) -> np.ndarray:
    R = np.eye(m)
    off = np.arange(m - 1)
    R[off, off + 1] = alpha
    R[off + 1, off] = alpha
    return R


_BUILDERS = {
    Structure.EX: _ex_matrix,
    Structure.AR1: _ar1_matrix,
    Structure.MA1: _ma1_matrix,
}


@dataclass(frozen=True)
class WorkingCorrelation:
    """An m x m correlation matrix with its cached inverse.

    Unit diagonal, symmetric, positive definite (smallest eigenvalue
    above ``PD_EIGEN_FLOOR``); ``inverse @ matrix`` stays within 1e-10
    of the identity in max norm.
    """

    structure: Structure
    alpha: float | None
    matrix: np.ndarray
    inverse: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(
        cls,
        matrix: np.ndarray,
        structure: Structure = Structure.UNSTRUCTURED,
        alpha: float | None = None,
    ) -> "WorkingCorrelation":
        R = np.asarray(matrix, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise DomainError(f"correlation matrix must be square, got {R.shape}")
        if not np.allclose(R, R.T, atol=1e-12):
            raise DomainError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(R), 1.0, atol=1e-8):
            raise DomainError("correlation matrix must have unit diagonal")
        R = 0.5 * (R + R.T)
        eig_min = float(np.linalg.eigvalsh(R)[0])
        if eig_min <= PD_EIGEN_FLOOR:
            raise DomainError(
                f"correlation matrix not positive definite "
                f"(smallest eigenvalue {eig_min:.3e})"
            )
        inverse = np.linalg.inv(R)
        inverse = 0.5 * (inverse + inverse.T)
        residual = float(np.abs(R @ inverse - np.eye(R.shape[0])).max())
        if residual > 1e-10:
            raise DomainError(
                f"correlation inverse inaccurate (max residual {residual:.3e})"
            )
        return cls(structure=structure, alpha=alpha, matrix=R, inverse=inverse)

    def to_dict(self) -> dict:
        return {
            "structure": self.structure.value,
            "alpha": self.alpha,
            "m": self.m,
            "matrix": self.matrix.tolist(),
        }


def build_correlation(
    structure: Structure | str, alpha: float | None, m: int
) -> WorkingCorrelation:
    """Build the m x m working correlation for a structure and parameter.

    Raises DomainError when alpha falls outside the structure's feasible
    (positive-definite) interval, reporting that interval.
    """
    structure = parse_structure(structure)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if structure == Structure.UNSTRUCTURED:
        raise DomainError(
            "unstructured correlation is estimated from residuals; "
            "use WorkingCorrelation.from_matrix"
        )
    if structure == Structure.IND or m == 1:
        eye = np.eye(m)
        return WorkingCorrelation(
            structure=structure,
            alpha=None if structure == Structure.IND else alpha,
            matrix=eye,
            inverse=eye.copy(),
        )
    if alpha is None:
        raise DomainError(f"structure {structure.value} requires a parameter")
    lo, hi = feasible_interval(structure, m)
    if not (lo < alpha < hi):
        raise DomainError(
            f"alpha={alpha} infeasible for {structure.value} at m={m}; "
            f"feasible interval is ({lo:.6g}, {hi:.6g})"
        )
    R = _BUILDERS[structure](float(alpha), m)
    return WorkingCorrelation.from_matrix(R, structure=structure, alpha=float(alpha))


@dataclass(frozen=True)
class StandardizedResiduals:
    """Variance-standardized residual vectors, optionally HT-weighted.

    ``epsilon`` holds one length-m vector per retained subject; weights
    are the inverse inclusion probabilities (1 for full data).
    ``n_total`` is the population subject count behind the weights.
    """

    epsilon: np.ndarray
    weights: np.ndarray | None = None
    phi: float = 1.0
    n_total: int | None = None

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=float)
        if eps.ndim != 2:
            raise DomainError(f"epsilon must be (subjects, m); got {eps.shape}")
        if not np.all(np.isfinite(eps)):
            raise DomainError("non-finite residuals")
        object.__setattr__(self, "epsilon", eps)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (eps.shape[0],):
                raise DomainError(
                    f"{w.shape[0] if w.ndim else 0} weights for "
                    f"{eps.shape[0]} subjects"
                )
            if not np.all(np.isfinite(w)) or np.any(w < 1.0 - 1e-9):
                raise DomainError("weights must be finite and >= 1")
            object.__setattr__(self, "weights", w)
        if self.n_total is not None and self.n_total < eps.shape[0]:
            raise DomainError("n_total smaller than the residual set")

    @property
    def k(self) -> int:
        return self.epsilon.shape[0]

    @property
    def m(self) -> int:
        return self.epsilon.shape[1]

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.k)
        return self.weights


def estimate_dispersion(residuals: StandardizedResiduals, n_params: int) -> float:
    """Weighted Pearson dispersion with an n*m - p degrees correction.

    For families with fixed dispersion the caller pins phi = 1 instead.
    """
    w = residuals.weight_vector()
    num = float(np.sum(w * np.sum(residuals.epsilon**2, axis=1)))
    den = residuals.m * float(np.sum(w)) - n_params
    if den <= 0:
        raise DomainError(
            f"non-positive dispersion degrees of freedom "
            f"(m*sum(w)={residuals.m * float(np.sum(w)):.3g}, p={n_params})"
        )
    return num / den


def _golden_section_max(f, lo: float, hi: float, tol: float = GPL_TOL) -> float:
    """Maximize a unimodal scalar function on [lo, hi]; never leaves bounds."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _check_estimable(residuals: StandardizedResiduals, structure: Structure):
    structure = parse_structure(structure)
    if structure not in (Structure.EX, Structure.AR1, Structure.MA1):
        raise DomainError(
            f"parameter estimation applies to EX/AR1/MA1, not {structure.value}"
        )
    if residuals.k < 2:
        raise DomainError("need residuals from at least 2 subjects")
    if residuals.m < 2:
        raise DegenerateError("no within-subject pairs at m = 1")
    if float(np.abs(residuals.epsilon).max()) == 0.0:
        raise DegenerateError("all residuals are zero; correlation undefined")
    return structure


def estimate_alpha_gpl(
    residuals: StandardizedResiduals, structure: Structure | str
) -> float:
    """Gaussian pseudo-likelihood estimate of the correlation parameter.

    Maximizes -0.5 * sum_i w_i [log det R(a) + e_i' R(a)^{-1} e_i / phi]
    by golden-section search, clamped inside the feasible interval by
    ``FEASIBILITY_MARGIN`` at each end.
    """
    structure = _check_estimable(residuals, structure)
    m = residuals.m
    lo, hi = feasible_interval(structure, m)
    lo += FEASIBILITY_MARGIN
    hi -= FEASIBILITY_MARGIN
    E = residuals.epsilon
    w = residuals.weight_vector()
    phi = residuals.phi if residuals.phi > 0 else 1.0
    builder = _BUILDERS[structure]

    def objective(alpha: float) -> float:
        R = builder(alpha, m)
        chol = cho_factor(R, lower=True)
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        V = cho_solve(chol, E.T)
        quad = np.sum(E.T * V, axis=0)
        return -0.5 * float(np.sum(w * (logdet + quad / phi)))

    return float(_golden_section_max(objective, lo, hi))


def estimate_alpha_moment(
    residuals: StandardizedResiduals, structure: Structure | str
) -> float:
    """Moment estimate of the correlation parameter (cross-check method).

    EX averages all within-subject cross products; AR1/MA1 use lag-1
    pairs only.  The result is clamped to the feasible interval shrunk
    by ``FEASIBILITY_MARGIN``.
    """
    structure = _check_estimable(residuals, structure)
    E = residuals.epsilon
    m = residuals.m
    w = residuals.weight_vector()
    phi = residuals.phi if residuals.phi > 0 else 1.0
    if structure == Structure.EX:
        row_sums = E.sum(axis=1)
        cross = 0.5 * (row_sums**2 - np.sum(E**2, axis=1))
        num = float(np.sum(w * cross))
        den = phi * float(np.sum(w)) * m * (m - 1) / 2.0
    else:
        lag1 = np.sum(E[:, :-1] * E[:, 1:], axis=1)
        num = float(np.sum(w * lag1))
        den = phi * float(np.sum(w)) * (m - 1)
    if den == 0.0:
        raise DegenerateError("zero denominator in moment estimator")
    alpha = num / den
    lo, hi = feasible_interval(structure, m)
    return float(np.clip(alpha, lo + FEASIBILITY_MARGIN, hi - FEASIBILITY_MARGIN))


def estimate_unstructured(residuals: StandardizedResiduals) -> np.ndarray:
    """Weighted outer-product correlation estimate, unit-diagonal rescaled.

    Averages w_i * e_i e_i' over 1/n_total, adds a 1e-6 ridge (with a
    warning) when the raw average is not positive definite, then rescales
    to unit diagonal.
    """
    if residuals.k < residuals.m:
        raise DomainError(
            f"need at least m={residuals.m} subjects, got {residuals.k}"
        )
    if float(np.abs(residuals.epsilon).max()) == 0.0:
        raise DegenerateError("all residuals are zero; correlation undefined")
    E = residuals.epsilon
    w = residuals.weight_vector()
    n_total = residuals.n_total if residuals.n_total is not None else residuals.k
    raw = (E.T * w) @ E / n_total
    raw = 0.5 * (raw + raw.T)
    eig_min = float(np.linalg.eigvalsh(raw)[0])
    if eig_min <= PD_EIGEN_FLOOR:
        warnings.warn(
            f"unstructured correlation not PD (eigenvalue {eig_min:.3e}); "
            "adding 1e-06 ridge",
            RuntimeWarning,
            stacklevel=2,
        )
        raw = raw + 1e-6 * np.eye(residuals.m)
    scale = np.sqrt(np.diag(raw))
    R = raw / np.outer(scale, scale)
    np.fill_diagonal(R, 1.0)
    return R
