"""Mixture-weight estimation over the simplex.

The marginal log-likelihood sum_j log sum_k pi_k l_jk is concave in pi,
so plain EM from uniform weights reaches the global optimum; an optional
Dirichlet penalty prod_k pi_k^(lambda_k - 1) biases the fit toward the
null component when requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .lgp import psd_to_sigma
from .likelihood import LikelihoodMatrix


def default_grid(order: int, size: int = 51, qmax: float = 10.0) -> np.ndarray:
    """Scale grid used when none is supplied: 0 plus ``size`` positive values.

    The positive values are equally spaced in the log-precision of the
    one-unit predictive SD, -2 log sigma_k(1) covering [0, qmax], then
    converted back to raw scales for the requested order. For the default
    size this puts log sigma(1) on a 0.1-spaced ladder from -qmax/2 to 0.
    """
    if size < 2:
        raise InvalidArgumentError(f"size must be >= 2, got {size}")
    if qmax <= 0:
        raise InvalidArgumentError(f"qmax must be > 0, got {qmax}")
    log_precision = np.linspace(qmax, 0.0, size)
    psd_one = np.exp(-0.5 * log_precision)
    sigmas = np.array([psd_to_sigma(order, 1.0, v) for v in psd_one])
    return np.concatenate([[0.0], sigmas])


@dataclass(frozen=True)
class PenaltyConfig:
    """Dirichlet exponents, all >= 1 (1 means unpenalized)."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or np.any(lam < 1) or not np.all(np.isfinite(lam)):
            raise InvalidArgumentError("penalty exponents must be finite and >= 1")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def flat(cls, n_components: int) -> "PenaltyConfig":
        return cls(np.ones(n_components))

    @classmethod
    def null_biased(cls, n_components: int, lam0: float = 10.0) -> "PenaltyConfig":
        lam = np.ones(n_components)
        lam[0] = lam0
        return cls(lam)


@dataclass(frozen=True)
class FitResult:
    weights: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool


def _objective(lexp: np.ndarray, offsets: np.ndarray, weights: np.ndarray, lam: np.ndarray) -> tuple[float, np.ndarray]:
    """Penalized log-likelihood and per-row mixture densities."""
    dens = lexp @ weights
    if np.any(dens <= 0):
        raise NumericError("a unit has zero likelihood under every weighted component")
    value = float(np.sum(np.log(dens)) + np.sum(offsets))
    active = lam > 1
    if np.any(active):
        if np.any(weights[active] <= 0):
            return -np.inf, dens
        value += float(np.sum((lam[active] - 1) * np.log(weights[active])))
    return value, dens


def em_update(weights: np.ndarray, matrix: LikelihoodMatrix, penalty: PenaltyConfig) -> np.ndarray:
    """One EM step for the penalized objective; never decreases it."""
    weights = np.asarray(weights, dtype=float)
    lam = penalty.lam
    if lam.size != matrix.n_components:
        raise InvalidArgumentError("penalty length must match the number of components")
    lexp = np.exp(matrix.loglik)
    dens = lexp @ weights
    if np.any(dens <= 0):
        raise NumericError("zero responsibilities: no component supports some unit")
    resp_sum = weights * (lexp.T @ (1.0 / dens))
    new = resp_sum + (lam - 1.0)
    return new / new.sum()


def fit_weights(
    matrix: LikelihoodMatrix,
    penalty: PenaltyConfig | None = None,
    tol: float = 1e-8,
    max_iter: int = 5000,
) -> FitResult:
    """Maximize the (penalized) mixture log-likelihood by EM.

    Starts from uniform weights; stops when successive objective values
    differ by less than tol * (1 + |objective|). Hitting ``max_iter`` is
    reported through ``converged=False`` rather than an error.
    """
    n_comp = matrix.n_components
    penalty = penalty if penalty is not None else PenaltyConfig.flat(n_comp)
    lam = penalty.lam
    if lam.size != n_comp:
        raise InvalidArgumentError("penalty length must match the number of components")

    lexp = np.exp(matrix.loglik)
    weights = np.full(n_comp, 1.0 / n_comp)
    lam_extra = lam - 1.0
    norm = matrix.n_units + lam_extra.sum()

    trace = []
    value, dens = _objective(lexp, matrix.row_offset, weights, lam)
    trace.append(value)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resp_sum = weights * (lexp.T @ (1.0 / dens))
        weights = (resp_sum + lam_extra) / norm
        weights = weights / weights.sum()
        value, dens = _objective(lexp, matrix.row_offset, weights, lam)
        trace.append(value)
        if abs(trace[-1] - trace[-2]) < tol * (1.0 + abs(trace[-1])):
            converged = True
            break

    return FitResult(
        weights=weights,
        objective_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
    )
