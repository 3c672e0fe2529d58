"""Gauss-Markov filtering, smoothing and sampling for the process priors.

Every model here shares one structure: the state (beta, ..., beta^(p-1))
starts at time 0 with a zero-mean diffuse-polynomial prior N(0, V0 I_p),
evolves by the exact transitions from :mod:`fash.lgp`, and is observed
through its first component with known per-point noise. The filter uses
Joseph-form covariance updates so that a large V0 (1e6 and beyond) does
not poison later steps through cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .lgp import transition

LOG_2PI = float(np.log(2.0 * np.pi))


def _steps(times: np.ndarray, order: int, sigma: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-interval (A, sigma^2 Q) pairs, anchored at the process origin t=0."""
    steps = []
    prev = 0.0
    eye = np.eye(order)
    zero = np.zeros((order, order))
    for t in times:
        delta = t - prev
        if delta > 0:
            st = transition(order, float(delta))
            steps.append((st.A, sigma**2 * st.Q_unit))
        else:
            steps.append((eye, zero))
        prev = t
    return steps


def batch_loglik(
    times: np.ndarray,
    y: np.ndarray,
    se2: np.ndarray,
    order: int,
    sigma: float,
    diffuse_variance: float,
) -> np.ndarray:
    """Marginal log density of each row of ``y`` under one prior component.

    Parameters
    ----------
    times : (R,) shared observation grid, strictly increasing, nonnegative.
    y : (J, R) effect estimates, one row per unit.
    se2 : (J, R) squared standard errors.
    order, sigma : prior component.
    diffuse_variance : variance V0 of the polynomial coefficients at t=0.

    Returns
    -------
    (J,) log marginal likelihoods via the prediction-error decomposition.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    se2 = np.atleast_2d(np.asarray(se2, dtype=float))
    nunits, nobs = y.shape
    p = order
    eye = np.eye(p)

    mean = np.zeros((nunits, p))
    cov = np.broadcast_to(diffuse_variance * eye, (nunits, p, p)).copy()
    loglik = np.zeros(nunits)

    for r, (A, Q) in enumerate(_steps(np.asarray(times, dtype=float), order, sigma)):
        mean = mean @ A.T
        cov = np.einsum("ab,jbc,dc->jad", A, cov, A) + Q

        innov = y[:, r] - mean[:, 0]
        innov_var = cov[:, 0, 0] + se2[:, r]
        with np.errstate(over="ignore"):  # corrupt inputs surface as -inf loglik
            loglik -= 0.5 * (LOG_2PI + np.log(innov_var) + innov**2 / innov_var)

        gain = cov[:, :, 0] / innov_var[:, None]
        mean = mean + gain * innov[:, None]
        # Joseph form: (I - K H) P (I - K H)^T + se^2 K K^T with H = e_0^T.
        ikh = np.broadcast_to(eye, (nunits, p, p)).copy()
        ikh[:, :, 0] -= gain
        cov = np.einsum("jab,jbc,jdc->jad", ikh, cov, ikh)
        cov += se2[:, r, None, None] * gain[:, :, None] * gain[:, None, :]
        cov = 0.5 * (cov + cov.transpose(0, 2, 1))

    return loglik


@dataclass
class FilterResult:
    """Forward-pass artifacts on an (augmented) grid, for one unit."""

    times: np.ndarray
    order: int
    steps: list[tuple[np.ndarray, np.ndarray]]
    pred_mean: np.ndarray  # (n, p) prior to the update at each point
    pred_cov: np.ndarray  # (n, p, p)
    filt_mean: np.ndarray  # (n, p) after the update (equal to pred_* if unobserved)
    filt_cov: np.ndarray  # (n, p, p)
    loglik: float


def filter_pass(
    times: np.ndarray,
    y: np.ndarray,
    se2: np.ndarray,
    obs_mask: np.ndarray,
    order: int,
    sigma: float,
    diffuse_variance: float,
) -> FilterResult:
    """Kalman filter for a single unit on a grid with optional gaps.

    ``obs_mask[r]`` marks grid points carrying an observation; ``y`` and
    ``se2`` are only consulted where the mask is set.
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    p = order
    eye = np.eye(p)
    steps = _steps(times, order, sigma)

    pred_mean = np.zeros((n, p))
    pred_cov = np.zeros((n, p, p))
    filt_mean = np.zeros((n, p))
    filt_cov = np.zeros((n, p, p))

    mean = np.zeros(p)
    cov = diffuse_variance * eye
    loglik = 0.0
    for r in range(n):
        A, Q = steps[r]
        mean = A @ mean
        cov = A @ cov @ A.T + Q
        pred_mean[r] = mean
        pred_cov[r] = cov
        if obs_mask[r]:
            innov = y[r] - mean[0]
            innov_var = cov[0, 0] + se2[r]
            loglik -= 0.5 * (LOG_2PI + np.log(innov_var) + innov**2 / innov_var)
            gain = cov[:, 0] / innov_var
            mean = mean + gain * innov
            ikh = eye.copy()
            ikh[:, 0] -= gain
            cov = ikh @ cov @ ikh.T + se2[r] * np.outer(gain, gain)
            cov = 0.5 * (cov + cov.T)
        filt_mean[r] = mean
        filt_cov[r] = cov

    return FilterResult(
        times=times,
        order=order,
        steps=steps,
        pred_mean=pred_mean,
        pred_cov=pred_cov,
        filt_mean=filt_mean,
        filt_cov=filt_cov,
        loglik=float(loglik),
    )


def smooth_pass(fr: FilterResult) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-interval (RTS) smoother; returns smoothed means and covariances."""
    n = fr.times.size
    mean = fr.filt_mean.copy()
    cov = fr.filt_cov.copy()
    for r in range(n - 2, -1, -1):
        A, _ = fr.steps[r + 1]
        # gain = P_f A^T (P_pred)^-1, via a symmetric solve
        gain = np.linalg.solve(fr.pred_cov[r + 1], A @ fr.filt_cov[r]).T
        mean[r] = fr.filt_mean[r] + gain @ (mean[r + 1] - fr.pred_mean[r + 1])
        cov[r] = fr.filt_cov[r] + gain @ (cov[r + 1] - fr.pred_cov[r + 1]) @ gain.T
        cov[r] = 0.5 * (cov[r] + cov[r].T)
    return mean, cov


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Square root of a (numerically) PSD matrix, clipping tiny negatives."""
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def sample_paths(fr: FilterResult, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Joint posterior draws of the state sequence (backward sampling).

    Returns an (n_paths, n, p) array. Degenerate conditionals (e.g. the
    sigma = 0 component, whose backward step is deterministic) are handled
    through an eigenvalue square root.
    """
    if n_paths < 1:
        raise InvalidArgumentError(f"n_paths must be >= 1, got {n_paths}")
    n = fr.times.size
    p = fr.order
    out = np.empty((n_paths, n, p))

    z = rng.standard_normal((n_paths, p))
    out[:, n - 1] = fr.filt_mean[n - 1] + z @ _psd_sqrt(fr.filt_cov[n - 1]).T
    for r in range(n - 2, -1, -1):
        A, _ = fr.steps[r + 1]
        gain = np.linalg.solve(fr.pred_cov[r + 1], A @ fr.filt_cov[r]).T
        cond_cov = fr.filt_cov[r] - gain @ A @ fr.filt_cov[r]
        cond_mean = fr.filt_mean[r] + (out[:, r + 1] - fr.pred_mean[r + 1]) @ gain.T
        z = rng.standard_normal((n_paths, p))
        out[:, r] = cond_mean + z @ _psd_sqrt(cond_cov).T
    return out
