"""Response families: mean function, variance function, and derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import DomainError

Array = np.ndarray


@dataclass(frozen=True)
class ResponseFamily:
    """Marginal mean/variance structure of a response model.

    ``mean`` maps the linear predictor eta to the marginal mean;
    ``mean_deriv`` and ``mean_deriv2`` are its first two derivatives in
    eta; ``variance`` is the variance function v(mu), strictly positive
    on the interior of the mean range.  ``estimate_dispersion`` is False
    when the model fixes the dispersion at 1.
    """

    name: str
    mean: Callable[[Array], Array]
    mean_deriv: Callable[[Array], Array]
    mean_deriv2: Callable[[Array], Array]
    variance: Callable[[Array], Array]
    estimate_dispersion: bool
    binary: bool = False


def _logit_mean_deriv(eta: Array) -> Array:
    mu = expit(eta)
    return mu * (1.0 - mu)


def _logit_mean_deriv2(eta: Array) -> Array:
    mu = expit(eta)
    return mu * (1.0 - mu) * (1.0 - 2.0 * mu)


GAUSSIAN_IDENTITY = ResponseFamily(
    name="gaussian_identity",
    mean=np.asarray,
    mean_deriv=np.ones_like,
    mean_deriv2=np.zeros_like,
    variance=np.ones_like,
    estimate_dispersion=True,
    binary=False,
)

BERNOULLI_LOGIT = ResponseFamily(
    name="bernoulli_logit",
    mean=expit,
    mean_deriv=_logit_mean_deriv,
    mean_deriv2=_logit_mean_deriv2,
    variance=lambda mu: mu * (1.0 - mu),
    estimate_dispersion=False,
    binary=True,
)

_FAMILIES = {f.name: f for f in (GAUSSIAN_IDENTITY, BERNOULLI_LOGIT)}


def get_family(name: str) -> ResponseFamily:
    """Look up a family by tag (``gaussian_identity`` or ``bernoulli_logit``)."""
    key = name.strip().lower()
    if key not in _FAMILIES:
        raise DomainError(
            f"unknown response family {name!r}; expected one of "
            f"{sorted(_FAMILIES)}"
        )
    return _FAMILIES[key]
