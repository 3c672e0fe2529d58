"""Observation units, mixture priors and the per-component likelihood matrix.

The marginal likelihood of a unit under one prior component integrates the
effect function out of

    beta_hat_r | beta ~ N(beta(t_r), se_r^2),  r = 1..R,

giving N(beta_hat; 0, C_sigma + V0 X X^T + S) where C_sigma is the
zero-initialised process covariance on the unit's grid, X the polynomial
basis X[r, i] = t_r^i / i! carrying the diffuse null-space coefficients,
and S = diag(se^2). The production path evaluates this with a Kalman
filter in O(R p^3); a dense O(R^3) factorisation of the same matrix is
kept as an independent cross-check.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np

from .errors import DataError, InvalidArgumentError, NumericError
from .lgp import iwp_covariance_matrix
from .statespace import LOG_2PI, batch_loglik

SE_FLOOR = 1e-8


def _readonly(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ObservationUnit:
    """One unit's effect estimates over the condition variable.

    Times must be strictly increasing and nonnegative (the prior is
    anchored at t = 0); standard errors below 1e-8 are rejected rather
    than clamped, since they almost always indicate corrupted input.
    """

    id: str
    times: np.ndarray
    beta_hat: np.ndarray
    se: np.ndarray

    def __post_init__(self):
        if not self.id:
            raise InvalidArgumentError("unit id must be a nonempty string")
        times = _readonly(self.times, "times")
        beta_hat = _readonly(self.beta_hat, "beta_hat")
        se = _readonly(self.se, "se")
        if not (times.size == beta_hat.size == se.size):
            raise InvalidArgumentError(f"unit {self.id}: times, beta_hat and se must share a length")
        if times.size < 1:
            raise InvalidArgumentError(f"unit {self.id}: needs at least one observation")
        if times[0] < 0:
            raise InvalidArgumentError(f"unit {self.id}: times must be nonnegative")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError(f"unit {self.id}: times must be strictly increasing")
        if np.any(se <= SE_FLOOR):
            raise InvalidArgumentError(f"unit {self.id}: standard errors must exceed {SE_FLOOR:g}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "beta_hat", beta_hat)
        object.__setattr__(self, "se", se)

    @property
    def n_obs(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class MixturePrior:
    """A scale grid with mixture weights, plus the shared diffuse variance.

    ``sigma_grid[0]`` must be exactly 0 (the baseline component); the
    diffuse variance V0 applies to the polynomial coefficients of every
    component, so its arbitrary magnitude cancels from likelihood ratios.
    """

    order: int
    sigma_grid: np.ndarray
    weights: np.ndarray
    diffuse_variance: float = 1e6

    def __post_init__(self):
        if not isinstance(self.order, (int, np.integer)) or self.order < 1:
            raise InvalidArgumentError(f"order must be an integer >= 1, got {self.order!r}")
        grid = _readonly(self.sigma_grid, "sigma_grid")
        weights = _readonly(self.weights, "weights")
        if grid.size < 2:
            raise InvalidArgumentError("sigma_grid needs the null plus at least one component")
        if grid[0] != 0.0:
            raise InvalidArgumentError("sigma_grid must start at exactly 0")
        if np.any(np.diff(grid) <= 0):
            raise InvalidArgumentError("sigma_grid must be strictly increasing")
        if weights.size != grid.size:
            raise InvalidArgumentError("weights and sigma_grid must have equal length")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("weights must be nonnegative and sum to 1")
        if not np.isfinite(self.diffuse_variance) or self.diffuse_variance <= 0:
            raise InvalidArgumentError("diffuse_variance must be finite and > 0")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "sigma_grid", grid)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "diffuse_variance", float(self.diffuse_variance))

    @classmethod
    def uniform(cls, order: int, sigma_grid, diffuse_variance: float = 1e6) -> "MixturePrior":
        grid = np.asarray(sigma_grid, dtype=float)
        return cls(order, grid, np.full(grid.size, 1.0 / grid.size), diffuse_variance)

    def with_weights(self, weights) -> "MixturePrior":
        return replace(self, weights=np.asarray(weights, dtype=float))

    @property
    def n_components(self) -> int:
        return self.sigma_grid.size


@dataclass(frozen=True)
class LikelihoodMatrix:
    """Row-scaled log marginal likelihoods, one row per unit, one column per component.

    ``loglik[j, k] + row_offset[j]`` is the absolute value; any quantity
    defined through per-row ratios (posterior weights, Bayes factors) is
    unchanged by the offsets.
    """

    loglik: np.ndarray
    row_offset: np.ndarray
    unit_ids: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        loglik = np.asarray(self.loglik, dtype=float)
        offset = np.asarray(self.row_offset, dtype=float)
        if loglik.ndim != 2:
            raise InvalidArgumentError("loglik must be a 2-d array")
        if offset.shape != (loglik.shape[0],):
            raise InvalidArgumentError("row_offset must have one entry per row")
        if np.any(np.isnan(loglik)) or np.any(loglik == np.inf):
            raise InvalidArgumentError("loglik entries must not be NaN or +inf")
        object.__setattr__(self, "loglik", loglik)
        object.__setattr__(self, "row_offset", offset)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))

    @property
    def n_units(self) -> int:
        return self.loglik.shape[0]

    @property
    def n_components(self) -> int:
        return self.loglik.shape[1]


def _check_component(sigma: float, diffuse_variance: float) -> None:
    if not np.isfinite(sigma) or sigma < 0:
        raise InvalidArgumentError(f"sigma must be finite and >= 0, got {sigma}")
    if not np.isfinite(diffuse_variance) or diffuse_variance <= 0:
        raise InvalidArgumentError(f"diffuse_variance must be finite and > 0, got {diffuse_variance}")


def marginal_loglik(unit: ObservationUnit, order: int, sigma: float, diffuse_variance: float) -> float:
    """Log marginal likelihood of one unit under one component (Kalman path)."""
    _check_component(sigma, diffuse_variance)
    out = batch_loglik(
        unit.times,
        unit.beta_hat[None, :],
        (unit.se**2)[None, :],
        order,
        sigma,
        diffuse_variance,
    )
    return float(out[0])


def _cholesky_longdouble(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    chol = np.zeros_like(mat)
    for i in range(n):
        pivot = mat[i, i] - chol[i, :i] @ chol[i, :i]
        if pivot <= 0:
            raise NumericError(f"covariance not positive definite at pivot {i}")
        chol[i, i] = np.sqrt(pivot)
        if i + 1 < n:
            chol[i + 1 :, i] = (mat[i + 1 :, i] - chol[i + 1 :, :i] @ chol[i, :i]) / chol[i, i]
    return chol


def marginal_loglik_dense(unit: ObservationUnit, order: int, sigma: float, diffuse_variance: float) -> float:
    """Same quantity as :func:`marginal_loglik` via a dense factorisation.

    Assembles the full R x R covariance and factorises it in extended
    precision, which keeps this oracle trustworthy at condition numbers
    where a double-precision Cholesky would lose the 1e-8 agreement the
    two routes are held to. Intended for R up to a few hundred.
    """
    _check_component(sigma, diffuse_variance)
    times = unit.times.astype(np.longdouble)
    n = times.size
    basis = np.column_stack([times**i / factorial(i) for i in range(order)])
    cov_ld = iwp_covariance_matrix(order, sigma, unit.times, dtype=np.longdouble)
    cov_ld += np.longdouble(diffuse_variance) * (basis @ basis.T)
    cov_ld += np.diag(unit.se.astype(np.longdouble) ** 2)
    scale = float(np.mean(np.diag(cov_ld)))
    chol = None
    for jitter in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            chol = _cholesky_longdouble(cov_ld + (jitter * scale) * np.eye(n, dtype=np.longdouble))
            break
        except NumericError:
            continue
    if chol is None:
        raise NumericError(f"unit {unit.id}: covariance numerically indefinite after jitter")

    white = np.zeros(n, dtype=np.longdouble)
    y = unit.beta_hat.astype(np.longdouble)
    for i in range(n):
        white[i] = (y[i] - chol[i, :i] @ white[:i]) / chol[i, i]
    loglik = -0.5 * n * LOG_2PI - np.sum(np.log(np.diag(chol))) - 0.5 * np.sum(white**2)
    return float(loglik)


def likelihood_matrix(
    dataset: list[ObservationUnit],
    prior: MixturePrior,
    n_threads: int = 1,
) -> LikelihoodMatrix:
    """Evaluate every unit against every prior component.

    Units sharing a time grid are filtered as one vectorised batch; work
    is split across threads into disjoint slices of the output, so the
    result is bit-identical for any thread count.
    """
    if not dataset:
        raise InvalidArgumentError("dataset must contain at least one unit")
    n_units = len(dataset)
    n_comp = prior.n_components
    raw = np.full((n_units, n_comp), np.nan)

    groups: dict[tuple, list[int]] = {}
    for j, unit in enumerate(dataset):
        groups.setdefault(tuple(unit.times), []).append(j)

    tasks = []
    for key, idx in groups.items():
        times = np.asarray(key)
        y = np.array([dataset[j].beta_hat for j in idx])
        se2 = np.array([dataset[j].se for j in idx]) ** 2
        for k in range(n_comp):
            tasks.append((idx, times, y, se2, float(prior.sigma_grid[k]), k))

    def run(task):
        idx, times, y, se2, sigma, k = task
        raw[idx, k] = batch_loglik(times, y, se2, prior.order, sigma, prior.diffuse_variance)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(run, tasks))
    else:
        for task in tasks:
            run(task)

    bad = ~np.all(np.isfinite(raw), axis=1)
    if np.any(bad):
        culprit = dataset[int(np.nonzero(bad)[0][0])]
        raise DataError(f"marginal likelihood failed for unit {culprit.id!r}")

    offset = raw.max(axis=1)
    return LikelihoodMatrix(
        loglik=raw - offset[:, None],
        row_offset=offset,
        unit_ids=tuple(u.id for u in dataset),
    )
