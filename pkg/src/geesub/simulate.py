"""Synthetic panel generators for the benchmark designs.

Covariate rows are i.i.d. from either a heavy-tailed multivariate t with
3 degrees of freedom, t3(0, S) with S_{jk} = 0.5^{|j-k|}, or a
log-normal exp(N(0, 1.8 S)).  Responses follow the linear model
Y_i = X_i b0 + e_i with e_i ~ N(0, R(alpha)) within subject.
"""

from __future__ import annotations

import numpy as np

from .correlation import Structure, build_correlation, parse_structure
from .errors import DomainError
from .families import GAUSSIAN_IDENTITY
from .panel import PanelDataset

COVARIATE_CASES = ("t3", "lognormal")


def make_beta0(p: int) -> np.ndarray:
    """Alternating (1, 1.5, 1, 1.5, ...) truth; defined for even p >= 2."""
    if p < 2 or p % 2 != 0:
        raise DomainError(
            f"the alternating coefficient pattern needs even p >= 2, got {p}"
        )
    return np.tile([1.0, 1.5], p // 2)


def _base_covariance(p: int) -> np.ndarray:
    lags = np.abs(np.arange(p)[:, None] - np.arange(p)[None, :])
    return np.power(0.5, lags)


def generate_covariates(case: str, n: int, m: int, p: int, seed) -> np.ndarray:
    """(n, m, p) design array with i.i.d. rows from the chosen case."""
    case = str(case).strip().lower()
    if case not in COVARIATE_CASES:
        raise DomainError(f"case must be one of {COVARIATE_CASES}, got {case!r}")
    if n < 1 or m < 1 or p < 1:
        raise DomainError(f"sizes must be positive (n={n}, m={m}, p={p})")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(_base_covariance(p))
    rows = n * m
    if case == "t3":
        z = rng.standard_normal((rows, p)) @ chol.T
        chi = rng.chisquare(3, size=(rows, 1))
        X = z / np.sqrt(chi / 3.0)
    else:
        w = rng.standard_normal((rows, p)) @ (np.sqrt(1.8) * chol).T
        X = np.exp(w)
    return X.reshape(n, m, p)


def generate_responses(
    X: np.ndarray,
    beta0: np.ndarray,
    true_structure: Structure | str,
    alpha: float,
    seed,
) -> np.ndarray:
    """Gaussian responses X_i b0 + L z with L the Cholesky factor of R(alpha)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise DomainError(f"X must have shape (n, m, p); got {X.shape}")
    n, m, p = X.shape
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.shape != (p,):
        raise DomainError(f"beta0 shape {beta0.shape} does not match p={p}")
    structure = parse_structure(true_structure)
    R = build_correlation(structure, alpha, m).matrix
    chol = np.linalg.cholesky(R)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, m)) @ chol.T
    return X @ beta0 + noise


def simulate_panel(
    case: str,
    n: int,
    m: int,
    p: int,
    true_structure: Structure | str,
    alpha: float,
    seed,
) -> tuple[PanelDataset, np.ndarray]:
    """Full synthetic panel plus its generating coefficients."""
    if n < 2:
        raise DomainError(f"need at least 2 subjects, got n={n}")
    beta0 = make_beta0(p)
    seed_x, seed_y = np.random.SeedSequence(seed).spawn(2)
    X = generate_covariates(case, n, m, p, seed_x)
    Y = generate_responses(X, beta0, true_structure, alpha, seed_y)
    data = PanelDataset(X=X, Y=Y, family=GAUSSIAN_IDENTITY)
    return data, beta0
