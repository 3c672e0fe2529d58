"""Per-unit posterior inference: weights, smoothing, sampling and testing.

Conjugacy makes each unit's posterior a mixture of Gaussian processes
over the same component grid as the prior, reweighted by the unit's
likelihood row. Everything downstream flows from that: the local false
discovery rate is the posterior null weight, smoothing mixes the
per-component state-space smoothers, and functionals of the effect
function are handled by Monte-Carlo over joint posterior paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import InvalidArgumentError, NumericError
from .likelihood import MixturePrior, ObservationUnit
from .rng import as_generator
from .statespace import filter_pass, sample_paths, smooth_pass

SPARSITY_FLOOR = 1e-10


def posterior_weights(loglik_row: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Posterior component probabilities pi_k l_k / sum pi_k' l_k'.

    Stable in log space and invariant to adding a constant to the row.
    """
    row = np.asarray(loglik_row, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if row.shape != weights.shape:
        raise InvalidArgumentError("loglik row and weights must have equal length")
    with np.errstate(divide="ignore"):
        log_post = np.log(weights) + row
    total = logsumexp(log_post)
    if not np.isfinite(total):
        raise NumericError("no prior mass on any component with nonzero likelihood")
    return np.exp(log_post - total)


@dataclass(frozen=True)
class PosteriorMixture:
    """Posterior over components for one unit.

    ``weights`` is the full simplex (``weights[0]`` is the lfdr exactly);
    components whose posterior weight falls below the sparsity floor are
    dropped from smoothing and sampling, with the remaining mass
    renormalized over ``active``.
    """

    unit_id: str
    prior: MixturePrior
    weights: np.ndarray
    active: np.ndarray
    active_weights: np.ndarray


def build_posterior(
    unit_id: str,
    loglik_row: np.ndarray,
    prior: MixturePrior,
    floor: float = SPARSITY_FLOOR,
) -> PosteriorMixture:
    weights = posterior_weights(loglik_row, prior.weights)
    active = np.nonzero(weights > floor)[0]
    if active.size == 0:
        active = np.array([int(np.argmax(weights))])
    active_weights = weights[active] / weights[active].sum()
    return PosteriorMixture(
        unit_id=unit_id,
        prior=prior,
        weights=weights,
        active=active,
        active_weights=active_weights,
    )


def lfdr(mixture: PosteriorMixture) -> float:
    """Posterior probability that the unit follows the baseline component."""
    return float(mixture.weights[0])


@dataclass(frozen=True)
class FdrCurve:
    """Cumulative false-rate curve along the ranked local rates."""

    order: np.ndarray  # original indices, ascending local rate, stable
    sorted_values: np.ndarray
    cumulative: np.ndarray

    def n_significant(self, alpha: float) -> int:
        """Largest prefix whose running mean stays at or below alpha."""
        below = np.nonzero(self.cumulative <= alpha)[0]
        return int(below[-1] + 1) if below.size else 0

    def decisions(self, alpha: float) -> np.ndarray:
        out = np.zeros(self.order.size, dtype=bool)
        out[self.order[: self.n_significant(alpha)]] = True
        return out

    def per_unit(self) -> np.ndarray:
        """Cumulative rate at each unit's own rank, in original order."""
        out = np.empty(self.order.size)
        out[self.order] = self.cumulative
        return out


def fdr_curve(local_rates: np.ndarray) -> FdrCurve:
    rates = np.asarray(local_rates, dtype=float)
    if rates.ndim != 1 or rates.size == 0:
        raise InvalidArgumentError("local rates must be a nonempty 1-d array")
    if np.any(rates < 0) or np.any(rates > 1):
        raise InvalidArgumentError("local rates must lie in [0, 1]")
    order = np.argsort(rates, kind="stable")
    sorted_values = rates[order]
    cumulative = np.cumsum(sorted_values) / np.arange(1, rates.size + 1)
    return FdrCurve(order=order, sorted_values=sorted_values, cumulative=cumulative)


# ---------------------------------------------------------------------------
# smoothing


@dataclass(frozen=True)
class SmoothResult:
    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    state_mean: np.ndarray  # (n, order) mixture mean of (beta, beta', ...)
    component_indices: np.ndarray
    component_means: np.ndarray  # (n_active, n)
    component_sds: np.ndarray  # (n_active, n)


def _component_moments(
    unit: ObservationUnit,
    mixture: PosteriorMixture,
    grid: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smoothed state means/sds for each active component on ``grid``."""
    aug = np.union1d(unit.times, grid)
    obs_mask = np.isin(aug, unit.times)
    y_aug = np.zeros(aug.size)
    se2_aug = np.ones(aug.size)
    obs_idx = np.searchsorted(aug, unit.times)
    y_aug[obs_idx] = unit.beta_hat
    se2_aug[obs_idx] = unit.se**2
    query_idx = np.searchsorted(aug, grid)

    prior = mixture.prior
    n_active = mixture.active.size
    means = np.empty((n_active, grid.size))
    sds = np.empty((n_active, grid.size))
    state_means = np.empty((n_active, grid.size, prior.order))
    for pos, k in enumerate(mixture.active):
        fr = filter_pass(
            aug, y_aug, se2_aug, obs_mask, prior.order,
            float(prior.sigma_grid[k]), prior.diffuse_variance,
        )
        sm_mean, sm_cov = smooth_pass(fr)
        state_means[pos] = sm_mean[query_idx]
        means[pos] = sm_mean[query_idx, 0]
        sds[pos] = np.sqrt(np.clip(sm_cov[query_idx, 0, 0], 0.0, None))
    return means, sds, state_means


def _mixture_quantile(q: float, means: np.ndarray, sds: np.ndarray, weights: np.ndarray) -> float:
    sds = np.maximum(sds, 1e-300)

    def cdf_gap(x: float) -> float:
        return float(weights @ norm.cdf((x - means) / sds) - q)

    span = float(np.max(sds))
    lo = float(np.min(means - 10.0 * sds))
    hi = float(np.max(means + 10.0 * sds))
    for _ in range(60):
        if cdf_gap(lo) < 0:
            break
        lo -= max(span, abs(lo) * 0.5 + 1.0)
    for _ in range(60):
        if cdf_gap(hi) > 0:
            break
        hi += max(span, abs(hi) * 0.5 + 1.0)
    return float(brentq(cdf_gap, lo, hi, xtol=1e-10, rtol=8.9e-16))


def smooth(
    unit: ObservationUnit,
    mixture: PosteriorMixture,
    query_grid: np.ndarray | None = None,
    level: float = 0.95,
) -> SmoothResult:
    """Pointwise posterior mean, sd and central credible band on a grid.

    The band bounds are exact quantiles of the posterior mixture of
    normals at each grid point, found by root-finding on the mixture CDF;
    extrapolation beyond the observed range is allowed and simply widens
    the band.
    """
    if not 0 < level < 1:
        raise InvalidArgumentError(f"level must be in (0, 1), got {level}")
    grid = unit.times if query_grid is None else np.asarray(query_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise InvalidArgumentError("query grid must be nonempty, nonnegative, strictly increasing")

    means, sds, state_means = _component_moments(unit, mixture, grid)
    w = mixture.active_weights
    mean = w @ means
    var = w @ (sds**2 + means**2) - mean**2
    sd = np.sqrt(np.clip(var, 0.0, None))
    state_mean = np.einsum("a,anp->np", w, state_means)

    q_lo = (1.0 - level) / 2.0
    lower = np.empty(grid.size)
    upper = np.empty(grid.size)
    for i in range(grid.size):
        lower[i] = _mixture_quantile(q_lo, means[:, i], sds[:, i], w)
        upper[i] = _mixture_quantile(1.0 - q_lo, means[:, i], sds[:, i], w)

    return SmoothResult(
        grid=grid,
        mean=mean,
        sd=sd,
        lower=lower,
        upper=upper,
        level=level,
        state_mean=state_mean,
        component_indices=mixture.active.copy(),
        component_means=means,
        component_sds=sds,
    )


def sample_posterior(
    unit: ObservationUnit,
    mixture: PosteriorMixture,
    n_samples: int = 3000,
    query_grid: np.ndarray | None = None,
    rng: int | np.random.Generator | None = None,
) -> np.ndarray:
    """Joint posterior draws of the effect function on a grid.

    Each path picks a component from the (renormalized) posterior weights
    and then a joint Gaussian path from that component's smoother via
    backward sampling. Returns an (n_samples, len(grid)) array.
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"n_samples must be >= 1, got {n_samples}")
    grid = unit.times if query_grid is None else np.asarray(query_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise InvalidArgumentError("query grid must be nonempty, nonnegative, strictly increasing")
    gen = as_generator(rng)

    aug = np.union1d(unit.times, grid)
    obs_mask = np.isin(aug, unit.times)
    y_aug = np.zeros(aug.size)
    se2_aug = np.ones(aug.size)
    obs_idx = np.searchsorted(aug, unit.times)
    y_aug[obs_idx] = unit.beta_hat
    se2_aug[obs_idx] = unit.se**2
    query_idx = np.searchsorted(aug, grid)

    prior = mixture.prior
    picks = gen.choice(mixture.active.size, size=n_samples, p=mixture.active_weights)
    out = np.empty((n_samples, grid.size))
    for pos, k in enumerate(mixture.active):
        rows = np.nonzero(picks == pos)[0]
        if rows.size == 0:
            continue
        fr = filter_pass(
            aug, y_aug, se2_aug, obs_mask, prior.order,
            float(prior.sigma_grid[k]), prior.diffuse_variance,
        )
        states = sample_paths(fr, rows.size, gen)
        out[rows] = states[:, query_idx, 0]
    return out


# ---------------------------------------------------------------------------
# functionals of the effect function


@dataclass(frozen=True)
class FunctionalSpec:
    """A real-valued summary of the effect function plus the test sidedness.

    Built-in kinds classify where the effect is strongest (early / middle /
    late windows on the |effect| maxima), whether it switches sign by a
    margin (switch), or whether its maximum clears a threshold
    (max_threshold); custom contrasts any window against its complement.
    """

    kind: str
    params: dict = field(default_factory=dict)
    sided: str = "one"

    def __post_init__(self):
        if self.sided not in ("one", "two"):
            raise InvalidArgumentError(f"sided must be 'one' or 'two', got {self.sided!r}")


def _window_contrast(values: np.ndarray, inside: np.ndarray) -> np.ndarray:
    absval = np.abs(values)
    return absval[:, inside].max(axis=1) - absval[:, ~inside].max(axis=1)


def builtin_functional(kind: str, params: dict | None = None):
    """Evaluator mapping (paths, grid) to one functional value per path.

    Window maxima are taken over the grid points falling inside the
    window; a window that captures no grid point (or leaves its
    complement empty where one is required) is rejected.
    """
    params = dict(params or {})

    def need_nonempty(mask: np.ndarray, grid: np.ndarray, what: str) -> None:
        if not mask.any() or not (~mask).any():
            raise InvalidArgumentError(f"{what} window leaves no grid points on one side of the split")

    if kind == "early":
        split = float(params.pop("split", 3.0))

        def evaluate(paths: np.ndarray, grid: np.ndarray) -> np.ndarray:
            inside = grid <= split
            need_nonempty(inside, grid, "early")
            return _window_contrast(paths, inside)

    elif kind == "middle":
        lo = float(params.pop("lo", 4.0))
        hi = float(params.pop("hi", 11.0))

        def evaluate(paths: np.ndarray, grid: np.ndarray) -> np.ndarray:
            inside = (grid >= lo) & (grid <= hi)
            need_nonempty(inside, grid, "middle")
            return _window_contrast(paths, inside)

    elif kind == "late":
        start = float(params.pop("start", 12.0))

        def evaluate(paths: np.ndarray, grid: np.ndarray) -> np.ndarray:
            inside = grid >= start
            need_nonempty(inside, grid, "late")
            return _window_contrast(paths, inside)

    elif kind == "custom":
        try:
            lo = float(params.pop("lo"))
            hi = float(params.pop("hi"))
        except KeyError as exc:
            raise InvalidArgumentError("custom functional needs 'lo' and 'hi' window bounds") from exc

        def evaluate(paths: np.ndarray, grid: np.ndarray) -> np.ndarray:
            inside = (grid >= lo) & (grid <= hi)
            need_nonempty(inside, grid, "custom")
            return _window_contrast(paths, inside)

    elif kind == "switch":
        margin = float(params.pop("c", 0.25))
        if margin <= 0:
            raise InvalidArgumentError(f"switch margin must be > 0, got {margin}")

        def evaluate(paths: np.ndarray, grid: np.ndarray) -> np.ndarray:
            pos = np.clip(paths, 0.0, None).max(axis=1)
            neg = np.clip(-paths, 0.0, None).max(axis=1)
            return np.minimum(pos, neg) - margin

    elif kind == "max_threshold":
        try:
            threshold = float(params.pop("threshold"))
        except KeyError as exc:
            raise InvalidArgumentError("max_threshold functional needs a 'threshold'") from exc

        def evaluate(paths: np.ndarray, grid: np.ndarray) -> np.ndarray:
            return paths.max(axis=1) - threshold

    else:
        raise InvalidArgumentError(f"unknown functional kind {kind!r}")

    if params:
        raise InvalidArgumentError(f"unused parameters for {kind!r}: {sorted(params)}")
    return evaluate


def lfsr_functional(paths: np.ndarray, grid: np.ndarray, spec: FunctionalSpec) -> tuple[float, float]:
    """Local false sign rate of a functional from posterior path samples.

    One-sided (claim: functional > 0) uses the fraction of paths at or
    below zero; two-sided takes the smaller of the two sign fractions.
    Returns (lfsr, Monte-Carlo standard error).
    """
    paths = np.asarray(paths, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if paths.ndim != 2 or paths.shape[1] != grid.size:
        raise InvalidArgumentError("paths must be (n_samples, len(grid))")
    values = builtin_functional(spec.kind, spec.params)(paths, grid)
    n = values.size
    if spec.sided == "one":
        rate = float(np.mean(values <= 0))
    else:
        rate = float(min(np.mean(values >= 0), np.mean(values <= 0)))
    return rate, float(np.sqrt(rate * (1.0 - rate) / n))


# ---------------------------------------------------------------------------
# test tables


@dataclass(frozen=True)
class FunctionalColumn:
    lfsr: np.ndarray
    mc_se: np.ndarray
    fsr: np.ndarray
    significant: np.ndarray


@dataclass(frozen=True)
class TestTable:
    """Per-unit significance summary at one threshold.

    ``fdr``/``fsr`` columns hold the cumulative rate at each unit's own
    rank (the running mean of sorted local rates), so a unit is flagged
    exactly when that value is at or below the threshold.
    """

    unit_ids: tuple[str, ...]
    alpha: float
    lfdr: np.ndarray
    fdr: np.ndarray
    significant: np.ndarray
    functionals: dict[str, FunctionalColumn]

    def header(self) -> list[str]:
        cols = ["unit", "lfdr", "fdr", "significant"]
        for name in self.functionals:
            cols += [f"lfsr_{name}", f"lfsr_se_{name}", f"fsr_{name}", f"significant_{name}"]
        return cols

    def rows(self):
        for j, uid in enumerate(self.unit_ids):
            row = [uid, self.lfdr[j], self.fdr[j], int(self.significant[j])]
            for col in self.functionals.values():
                row += [col.lfsr[j], col.mc_se[j], col.fsr[j], int(col.significant[j])]
            yield row


def build_test_table(
    unit_ids,
    lfdrs: np.ndarray,
    alpha: float,
    functional_results: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> TestTable:
    lfdrs = np.asarray(lfdrs, dtype=float)
    curve = fdr_curve(lfdrs)
    functionals = {}
    for name, (lfsr_values, mc_se) in (functional_results or {}).items():
        fcurve = fdr_curve(np.asarray(lfsr_values, dtype=float))
        functionals[name] = FunctionalColumn(
            lfsr=np.asarray(lfsr_values, dtype=float),
            mc_se=np.asarray(mc_se, dtype=float),
            fsr=fcurve.per_unit(),
            significant=fcurve.decisions(alpha),
        )
    return TestTable(
        unit_ids=tuple(unit_ids),
        alpha=float(alpha),
        lfdr=lfdrs,
        fdr=curve.per_unit(),
        significant=curve.decisions(alpha),
        functionals=functionals,
    )
