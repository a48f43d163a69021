"""Shared fixtures and data helpers."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geesub import (
    GAUSSIAN_IDENTITY,
    PanelDataset,
    StandardizedResiduals,
    build_correlation,
)


def make_panel(n, m, p, seed=0, family=GAUSSIAN_IDENTITY, beta=None, corr=None):
    """Small gaussian panel with known coefficients for solver tests."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m, p))
    if beta is None:
        beta = rng.standard_normal(p)
    noise = rng.standard_normal((n, m))
    if corr is not None:
        noise = noise @ np.linalg.cholesky(corr.matrix).T
    if family is GAUSSIAN_IDENTITY:
        Y = X @ beta + noise
    else:
        from scipy.special import expit

        Y = (rng.random((n, m)) < expit(X @ beta)).astype(float)
    return PanelDataset(X=X, Y=Y, family=family), np.asarray(beta, float)


def correlated_residuals(n, m, structure, alpha, seed=0, scale=1.0):
    """Residual vectors with exact within-subject correlation R(alpha)."""
    rng = np.random.default_rng(seed)
    R = build_correlation(structure, alpha, m)
    chol = np.linalg.cholesky(R.matrix)
    eps = scale * rng.standard_normal((n, m)) @ chol.T
    return StandardizedResiduals(epsilon=eps, phi=scale**2)


@pytest.fixture
def tiny_csv(tmp_path):
    """Minimal well-formed panel file: 2 subjects x 2 obs x 1 covariate."""
    path = tmp_path / "tiny.csv"
    path.write_text(
        "id,obs,y,x1\n"
        "a,1,1.0,0.5\n"
        "a,2,2.0,1.5\n"
        "b,1,3.0,2.5\n"
        "b,2,4.0,3.5\n"
    )
    return path
