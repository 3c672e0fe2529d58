"""Integrated Wiener process priors of order ``p``.

The process solves ``D^p beta = sigma * xi`` with standard white noise
``xi`` and zero initial conditions ``beta(0) = ... = beta^(p-1)(0) = 0``.
Its null space (constants for p=1, lines for p=2, ...) is handled
separately by the likelihood layer as a diffuse polynomial component;
this module covers only the proper, zero-initialised part together with
its exact Gauss-Markov realisation on arbitrary grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import InvalidArgumentError
from .rng import as_generator


@dataclass(frozen=True)
class LgpSpec:
    """Order and deviation scale of one process.

    ``sigma = 0`` denotes the degenerate baseline member whose sample
    paths with zero initial conditions are identically zero.
    """

    order: int
    sigma: float

    def __post_init__(self):
        _check_order(self.order)
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidArgumentError(f"sigma must be finite and >= 0, got {self.sigma}")


@dataclass(frozen=True)
class StateTransition:
    """Exact one-step transition of the state (beta, beta', ..., beta^(p-1)).

    ``A`` is the deterministic polynomial propagator and ``Q_unit`` the
    process-noise covariance for sigma = 1; the noise for scale sigma is
    ``sigma**2 * Q_unit``.
    """

    delta: float
    A: np.ndarray
    Q_unit: np.ndarray


def _check_order(order: int) -> int:
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise InvalidArgumentError(f"order must be an integer >= 1, got {order!r}")
    return int(order)


def iwp_covariance(order: int, sigma: float, s: float, t: float) -> float:
    """Covariance K(s, t) of the zero-initialised process.

    K(s,t) = sigma^2 * int_0^min(s,t) (s-u)^(p-1) (t-u)^(p-1) du / ((p-1)!)^2,
    evaluated in closed form by binomial expansion of the integrand.
    """
    p = _check_order(order)
    if s < 0 or t < 0:
        raise InvalidArgumentError(f"times must be nonnegative, got s={s}, t={t}")
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    m = min(s, t)
    if sigma == 0 or m == 0:
        return 0.0
    acc = 0.0
    for a in range(p):
        ca = _binom(p - 1, a) * s ** (p - 1 - a)
        for b in range(p):
            cb = _binom(p - 1, b) * t ** (p - 1 - b)
            acc += ca * cb * (-1.0) ** (a + b) * m ** (a + b + 1) / (a + b + 1)
    return sigma**2 * acc / factorial(p - 1) ** 2


def iwp_covariance_matrix(order: int, sigma: float, times: np.ndarray, dtype=float) -> np.ndarray:
    """Gram matrix of :func:`iwp_covariance` on a time grid.

    Accumulates in extended precision: oracle code compares marginal
    likelihoods built from this matrix against the filter route, and with
    large time values the entries would otherwise carry enough rounding
    to dominate that comparison.
    """
    p = _check_order(order)
    times = np.asarray(times, dtype=np.longdouble)
    sig = np.longdouble(sigma)
    n = times.size
    out = np.zeros((n, n), dtype=np.longdouble)
    if sigma != 0:
        for i in range(n):
            for j in range(i, n):
                s, t = times[i], times[j]
                m = min(s, t)
                acc = np.longdouble(0.0)
                for a in range(p):
                    ca = _binom(p - 1, a) * s ** (p - 1 - a)
                    for b in range(p):
                        cb = _binom(p - 1, b) * t ** (p - 1 - b)
                        acc += ca * cb * (-1.0) ** (a + b) * m ** (a + b + 1) / (a + b + 1)
                out[i, j] = out[j, i] = sig**2 * acc / factorial(p - 1) ** 2
    return out.astype(dtype)


def _binom(n: int, k: int) -> float:
    return factorial(n) / (factorial(k) * factorial(n - k))


def psd(order: int, sigma: float, horizon: float) -> float:
    """Predictive standard deviation over a horizon ``h``.

    This is SD[beta(t+h) | beta(s), s <= t], which for this process family
    is path independent and equals sigma * h^((2p-1)/2) / ((p-1)! sqrt(2p-1)).
    It gives sigma an interpretation that is comparable across orders.
    """
    p = _check_order(order)
    if horizon <= 0:
        raise InvalidArgumentError(f"horizon must be > 0, got {horizon}")
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    return sigma * horizon ** ((2 * p - 1) / 2) / (factorial(p - 1) * np.sqrt(2 * p - 1))


def psd_to_sigma(order: int, horizon: float, target_psd: float) -> float:
    """Invert :func:`psd`: the raw scale whose h-unit PSD equals ``target_psd``."""
    p = _check_order(order)
    if horizon <= 0:
        raise InvalidArgumentError(f"horizon must be > 0, got {horizon}")
    if target_psd < 0:
        raise InvalidArgumentError(f"target_psd must be >= 0, got {target_psd}")
    return target_psd * factorial(p - 1) * np.sqrt(2 * p - 1) / horizon ** ((2 * p - 1) / 2)


def transition(order: int, delta: float) -> StateTransition:
    """Exact discretisation of the state over a step of length ``delta``.

    A[i, j] = delta^(j-i)/(j-i)! for j >= i, and
    Q_unit[i, j] = delta^(2p-1-i-j) / ((p-1-i)! (p-1-j)! (2p-1-i-j)).
    """
    p = _check_order(order)
    if delta <= 0 or not np.isfinite(delta):
        raise InvalidArgumentError(f"delta must be finite and > 0, got {delta}")
    A = np.zeros((p, p))
    Q = np.zeros((p, p))
    for i in range(p):
        for j in range(i, p):
            A[i, j] = delta ** (j - i) / factorial(j - i)
    for i in range(p):
        for j in range(p):
            power = 2 * p - 1 - i - j
            Q[i, j] = delta**power / (factorial(p - 1 - i) * factorial(p - 1 - j) * power)
    return StateTransition(delta=float(delta), A=A, Q_unit=Q)


def sample_prior_paths(
    spec: LgpSpec,
    grid: np.ndarray,
    n: int,
    rng: int | np.random.Generator | None = None,
) -> np.ndarray:
    """Draw ``n`` independent zero-initial-condition paths on ``grid``.

    Returns an (n, len(grid)) array of function values. The full state is
    propagated exactly step by step, so the sampled finite-dimensional
    distribution matches :func:`iwp_covariance` without discretisation error.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidArgumentError("grid must be a nonempty 1-d array")
    if np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("grid must be strictly increasing")
    if grid[0] < 0:
        raise InvalidArgumentError("grid must be nonnegative")
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")

    p = spec.order
    out = np.zeros((n, grid.size))
    if spec.sigma == 0:
        return out
    gen = as_generator(rng)
    state = np.zeros((n, p))
    prev = 0.0
    for r, t in enumerate(grid):
        delta = t - prev
        if delta > 0:
            step = transition(p, delta)
            noise_chol = np.linalg.cholesky(spec.sigma**2 * step.Q_unit)
            state = state @ step.A.T + gen.standard_normal((n, p)) @ noise_chol.T
        out[:, r] = state[:, 0]
        prev = t
    return out
