"""Conservative re-estimation of the null weight from Bayes factors.

Each unit's Bayes factor compares the weight-collapsed alternative
against the baseline component. Under the null these ratios have unit
expectation no matter how the alternative is specified, so the largest
set of units whose average Bayes factor stays at (or below) one behaves
like a null set: the adjustment takes the smallest cutoff c at which the
below-cutoff average crosses 1 + epsilon and calls everything below it
null.

All bookkeeping runs on log Bayes factors; strongly non-null units
routinely overflow the linear scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError
from .likelihood import LikelihoodMatrix, MixturePrior
from .rng import as_generator
from .statespace import batch_loglik


@dataclass(frozen=True)
class BfAdjustConfig:
    """Buffer epsilon plus an optional explicit candidate-cutoff set.

    With ``cutoffs=None`` the candidates are the observed Bayes factors
    themselves plus +inf, which realises the infimum over all real
    cutoffs because the below-cutoff average only changes at observed
    values.
    """

    epsilon: float = 0.05
    cutoffs: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidArgumentError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if self.cutoffs is not None:
            cuts = np.asarray(self.cutoffs, dtype=float)
            if cuts.size == 0 or np.any(cuts <= 0) or np.any(np.diff(cuts) < 0):
                raise InvalidArgumentError("cutoffs must be nonempty, positive and ascending")
            object.__setattr__(self, "cutoffs", cuts)


@dataclass(frozen=True)
class BfAdjustResult:
    bayes_factors: np.ndarray
    log_bayes_factors: np.ndarray
    c_star: float
    pi0_adjusted: float
    adjusted_weights: np.ndarray
    mu_curve: np.ndarray  # columns: cutoff, mean BF below it, null fraction below it


def _normalized_alternative(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    alt = weights[1:]
    total = alt.sum()
    if total <= 0:
        raise InvalidArgumentError(
            "the prior puts no mass on alternative components; "
            "supply normalized alternative weights"
        )
    return alt / total


def collapse_log_bayes_factors(matrix: LikelihoodMatrix, weights: np.ndarray) -> np.ndarray:
    """log BF_j of the collapsed alternative vs the null column.

    Row offsets cancel, so the result is identical whether or not the
    matrix rows were rescaled.
    """
    alt = _normalized_alternative(weights)
    with np.errstate(divide="ignore"):
        log_alt = np.log(alt)
    collapsed = logsumexp(matrix.loglik[:, 1:] + log_alt[None, :], axis=1)
    return collapsed - matrix.loglik[:, 0]


def collapse_bayes_factors(matrix: LikelihoodMatrix, weights: np.ndarray) -> np.ndarray:
    """Linear-scale Bayes factors (may overflow to inf for extreme units)."""
    with np.errstate(over="ignore"):
        return np.exp(collapse_log_bayes_factors(matrix, weights))


def _adjust_from_log(
    log_bfs: np.ndarray,
    config: BfAdjustConfig,
    weights: np.ndarray,
) -> BfAdjustResult:
    if log_bfs.size == 0:
        raise InvalidArgumentError("need at least one Bayes factor")
    if np.any(np.isnan(log_bfs)):
        raise InvalidArgumentError("Bayes factors must not be NaN")
    alt = _normalized_alternative(weights)
    n = log_bfs.size

    order = np.argsort(log_bfs, kind="stable")
    sorted_log = log_bfs[order]
    # prefix_lse[i] = log sum of the i smallest BFs
    prefix_lse = np.concatenate([[-np.inf], np.logaddexp.accumulate(sorted_log)])

    if config.cutoffs is None:
        log_cuts = np.unique(sorted_log[np.isfinite(sorted_log)])
        log_cuts = np.concatenate([log_cuts, [np.inf]])
    else:
        with np.errstate(divide="ignore"):
            log_cuts = np.log(config.cutoffs)

    counts = np.searchsorted(sorted_log, log_cuts, side="left")
    log_threshold = np.log1p(config.epsilon)

    curve_rows = []
    c_star = np.inf
    pi0 = 1.0
    found = False
    for log_c, below in zip(log_cuts, counts):
        if below == 0:
            continue
        log_mu = prefix_lse[below] - np.log(below)
        with np.errstate(over="ignore"):
            curve_rows.append((np.exp(log_c), np.exp(log_mu), below / n))
        if not found and log_mu >= log_threshold:
            found = True
            c_star = float(np.exp(log_c)) if np.isfinite(log_c) else np.inf
            pi0 = below / n

    if not found:
        # no cutoff reaches the buffer: treat everything as null
        c_star = np.inf
        pi0 = 1.0

    adjusted = np.concatenate([[pi0], (1.0 - pi0) * alt])
    with np.errstate(over="ignore"):
        bfs = np.exp(log_bfs)
    return BfAdjustResult(
        bayes_factors=bfs,
        log_bayes_factors=log_bfs,
        c_star=c_star,
        pi0_adjusted=float(pi0),
        adjusted_weights=adjusted,
        mu_curve=np.asarray(curve_rows, dtype=float).reshape(-1, 3),
    )


def adjust_pi0(bfs: np.ndarray, config: BfAdjustConfig, weights: np.ndarray) -> BfAdjustResult:
    """Run the cutoff search on precomputed Bayes factors."""
    bfs = np.asarray(bfs, dtype=float)
    if bfs.size == 0:
        raise InvalidArgumentError("need at least one Bayes factor")
    if np.any(np.isnan(bfs)) or np.any(bfs < 0):
        raise InvalidArgumentError("Bayes factors must be nonnegative")
    with np.errstate(divide="ignore"):
        return _adjust_from_log(np.log(bfs), config, weights)


def bf_adjust(
    matrix: LikelihoodMatrix,
    weights: np.ndarray,
    config: BfAdjustConfig | None = None,
) -> BfAdjustResult:
    """Collapse the likelihood matrix and adjust the null weight in one go."""
    config = config if config is not None else BfAdjustConfig()
    return _adjust_from_log(collapse_log_bayes_factors(matrix, weights), config, weights)


@dataclass(frozen=True)
class UnitDesign:
    """Times and standard errors shared by simulated diagnostic units."""

    times: np.ndarray
    se: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        se = np.asarray(self.se, dtype=float)
        if times.ndim != 1 or se.shape != times.shape:
            raise InvalidArgumentError("times and se must be 1-d arrays of equal length")
        if np.any(np.diff(times) <= 0) or times[0] < 0:
            raise InvalidArgumentError("times must be nonnegative and strictly increasing")
        if np.any(se <= 0):
            raise InvalidArgumentError("standard errors must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "se", se)


def bf_moment_check(
    n_null: int,
    prior: MixturePrior,
    design: UnitDesign,
    rng: int | np.random.Generator | None = None,
) -> float:
    """Sample mean of the Bayes factor over units drawn from the null model.

    Null draws are a diffuse polynomial (coefficient variance equal to
    the prior's diffuse variance) plus observation noise from the design,
    so the population mean is exactly one for any alternative weights.
    Large values indicate a broken likelihood or weight pipeline.
    """
    if n_null < 1:
        raise InvalidArgumentError(f"n_null must be >= 1, got {n_null}")
    gen = as_generator(rng)
    times = design.times
    p = prior.order
    basis = np.column_stack([times**i / factorial(i) for i in range(p)])
    coef = gen.standard_normal((n_null, p)) * np.sqrt(prior.diffuse_variance)
    y = coef @ basis.T + gen.standard_normal((n_null, times.size)) * design.se[None, :]
    se2 = np.broadcast_to(design.se**2, y.shape)

    loglik = np.empty((n_null, prior.n_components))
    for k, sigma in enumerate(prior.sigma_grid):
        loglik[:, k] = batch_loglik(times, y, se2, p, float(sigma), prior.diffuse_variance)
    offsets = loglik.max(axis=1)
    matrix = LikelihoodMatrix(loglik - offsets[:, None], offsets)

    log_bfs = collapse_log_bayes_factors(matrix, prior.weights)
    return float(np.exp(logsumexp(log_bfs) - np.log(n_null)))
