"""Synthetic benchmark: dataset generator, null-proportion sweep, calibration.

Units come from three generative categories on a shared day grid:
constant effects, linear trends, and smooth nonlinear curves (a
second-order process path on top of a random intercept and slope).
Testing against a constant baseline treats only the first category as
null; testing against a linear baseline also nulls the second.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bfadjust import BfAdjustConfig
from .ebayes import PenaltyConfig
from .errors import InvalidArgumentError
from .lgp import LgpSpec, psd_to_sigma, sample_prior_paths
from .likelihood import ObservationUnit
from .pipeline import fit_model
from .posterior import fdr_curve
from .rng import as_generator

DEFAULT_TIMES = tuple(float(t) for t in range(16))
DEFAULT_SE_CHOICES = (0.1, 0.3, 0.5)

CONSTANT = "constant"
LINEAR = "linear"
NONLINEAR = "nonlinear"

# nonlinear category: second-order process whose 16-day predictive SD is 5
NONLINEAR_SIGMA = psd_to_sigma(2, 16.0, 5.0)


@dataclass(frozen=True)
class SimulationConfig:
    n_units: int = 1000
    rho: float = 0.2
    times: tuple[float, ...] = DEFAULT_TIMES
    se_choices: tuple[float, ...] = DEFAULT_SE_CHOICES
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1:
            raise InvalidArgumentError("n_units must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgumentError(f"rho must lie in [0, 1], got {self.rho}")

    def category_counts(self) -> tuple[int, int, int]:
        n_constant = int(np.round(self.n_units * (1.0 - self.rho)))
        n_linear = int(np.round(self.n_units * self.rho / 2.0))
        n_nonlinear = self.n_units - n_constant - n_linear
        return n_constant, n_linear, n_nonlinear


@dataclass(frozen=True)
class GroundTruth:
    categories: tuple[str, ...]
    beta: np.ndarray  # (n_units, n_times) true effect values on the grid
    times: np.ndarray

    def null_mask(self, order: int) -> np.ndarray:
        """Units whose truth lies in the baseline class of the given order."""
        cats = np.asarray(self.categories)
        if order == 1:
            return cats == CONSTANT
        if order == 2:
            return (cats == CONSTANT) | (cats == LINEAR)
        raise InvalidArgumentError(f"no null definition for order {order}")

    def pi0_true(self, order: int) -> float:
        return float(self.null_mask(order).mean())


def generate_dataset(config: SimulationConfig) -> tuple[list[ObservationUnit], GroundTruth]:
    """Draw one dataset; identical config (including seed) gives identical bytes."""
    rng = as_generator(config.seed)
    times = np.asarray(config.times, dtype=float)
    n = config.n_units
    n_constant, n_linear, n_nonlinear = config.category_counts()
    categories = (CONSTANT,) * n_constant + (LINEAR,) * n_linear + (NONLINEAR,) * n_nonlinear

    intercept = rng.standard_normal(n)
    slope = rng.standard_normal(n) * 0.5
    beta = np.tile(intercept[:, None], (1, times.size))
    lin_rows = slice(n_constant, n)  # linear and nonlinear both carry a slope
    beta[lin_rows] += slope[lin_rows, None] * times[None, :]
    if n_nonlinear:
        paths = sample_prior_paths(LgpSpec(2, NONLINEAR_SIGMA), times, n_nonlinear, rng)
        beta[n_constant + n_linear :] += paths

    se = rng.choice(np.asarray(config.se_choices, dtype=float), size=(n, times.size))
    observed = beta + se * rng.standard_normal((n, times.size))

    width = max(4, len(str(n - 1)))
    dataset = [
        ObservationUnit(id=f"sim{j:0{width}d}", times=times, beta_hat=observed[j], se=se[j])
        for j in range(n)
    ]
    return dataset, GroundTruth(categories=categories, beta=beta, times=times)


def _child_seed(master: int, *indices: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, indices)]).generate_state(1)[0])


@dataclass(frozen=True)
class StudySettings:
    """Knobs shared by the sweep and calibration runs."""

    n_units: int = 1000
    replicates: int = 20
    orders: tuple[int, ...] = (1, 2)
    grid_size: int = 51
    grid_qmax: float = 10.0
    epsilon: float = 0.05
    penalty_null: float = 10.0
    diffuse_variance: float | None = None
    n_threads: int = 1
    times: tuple[float, ...] = DEFAULT_TIMES
    se_choices: tuple[float, ...] = DEFAULT_SE_CHOICES


TEST_NAME = {1: "constant-null", 2: "linear-null"}


def _fit_both(dataset, order, settings: StudySettings):
    n_components = settings.grid_size + 1
    penalty = (
        PenaltyConfig.null_biased(n_components, settings.penalty_null)
        if settings.penalty_null > 1
        else PenaltyConfig.flat(n_components)
    )
    return fit_model(
        dataset,
        order,
        grid_size=settings.grid_size,
        grid_qmax=settings.grid_qmax,
        penalty=penalty,
        diffuse_variance=settings.diffuse_variance,
        bf_config=BfAdjustConfig(epsilon=settings.epsilon),
        n_threads=settings.n_threads,
    )


def run_pi0_sweep(
    rho_grid,
    seed: int = 0,
    settings: StudySettings = StudySettings(),
) -> list[dict]:
    """Estimated null proportions across rho, one row per test/pipeline/replicate."""
    rows = []
    for rho_idx, rho in enumerate(rho_grid):
        for rep in range(settings.replicates):
            config = SimulationConfig(
                n_units=settings.n_units,
                rho=float(rho),
                times=settings.times,
                se_choices=settings.se_choices,
                seed=_child_seed(seed, rho_idx, rep),
            )
            dataset, truth = generate_dataset(config)
            for order in settings.orders:
                model = _fit_both(dataset, order, settings)
                for pipeline_name, pi0_hat in (
                    ("mle", float(model.fit_result.weights[0])),
                    ("bf_adjusted", float(model.bf_result.pi0_adjusted)),
                ):
                    rows.append(
                        {
                            "rho": float(rho),
                            "test": TEST_NAME[order],
                            "order": order,
                            "replicate": rep,
                            "pipeline": pipeline_name,
                            "pi0_true": truth.pi0_true(order),
                            "pi0_hat": pi0_hat,
                        }
                    )
    return rows


def run_calibration(
    alpha_grid,
    rho: float = 0.2,
    seed: int = 0,
    settings: StudySettings = StudySettings(),
) -> list[dict]:
    """Empirical FDR and power of the threshold decisions, per alpha and pipeline."""
    alpha_grid = [float(a) for a in alpha_grid]
    rows = []
    for rep in range(settings.replicates):
        config = SimulationConfig(
            n_units=settings.n_units,
            rho=rho,
            times=settings.times,
            se_choices=settings.se_choices,
            seed=_child_seed(seed, 0, rep),
        )
        dataset, truth = generate_dataset(config)
        for order in settings.orders:
            model = _fit_both(dataset, order, settings)
            null_mask = truth.null_mask(order)
            n_alt = int((~null_mask).sum())
            for pipeline_name, adjusted in (("mle", False), ("bf_adjusted", True)):
                curve = fdr_curve(model.lfdrs(adjusted=adjusted))
                for alpha in alpha_grid:
                    picked = curve.decisions(alpha)
                    n_disc = int(picked.sum())
                    false_disc = int((picked & null_mask).sum())
                    true_disc = n_disc - false_disc
                    rows.append(
                        {
                            "rho": rho,
                            "test": TEST_NAME[order],
                            "order": order,
                            "replicate": rep,
                            "pipeline": pipeline_name,
                            "alpha": alpha,
                            "discoveries": n_disc,
                            "fdr": false_disc / max(1, n_disc),
                            "power": true_disc / max(1, n_alt),
                        }
                    )
    return rows
