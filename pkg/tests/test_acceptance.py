"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the one-line
pass/fail summaries. The heavyweight simulation study is shared by the
conservativeness, FDR and power criteria through a module-scoped fixture.
"""

import time

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.stats import norm
from scipy.stats import t as t_dist

from fash.bfadjust import UnitDesign, bf_moment_check
from fash.cli import main as cli_main
from fash.ebayes import default_grid, fit_weights
from fash.ingest import adjust_se, write_long_csv
from fash.lgp import psd
from fash.likelihood import (
    LikelihoodMatrix,
    MixturePrior,
    ObservationUnit,
    marginal_loglik,
    marginal_loglik_dense,
)
from fash.posterior import build_posterior, smooth
from fash.simulate import SimulationConfig, StudySettings, generate_dataset, run_calibration, run_pi0_sweep

RHO_GRID = (0.05, 0.2, 0.35, 0.5)
ALPHA_GRID = (0.01, 0.05, 0.1, 0.2)
STUDY = StudySettings(n_units=1000, replicates=20, orders=(1, 2))


def report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[criterion {num:2d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def study():
    start = time.time()
    sweep = run_pi0_sweep(RHO_GRID, seed=202, settings=STUDY)
    sweep_seconds = time.time() - start
    start = time.time()
    calib = run_calibration(ALPHA_GRID, rho=0.2, seed=202, settings=STUDY)
    calib_seconds = time.time() - start
    return {"sweep": sweep, "sweep_seconds": sweep_seconds, "calib": calib, "calib_seconds": calib_seconds}


def test_criterion_01_kalman_matches_dense_oracle():
    rng = np.random.default_rng(101)
    start = time.time()
    worst = 0.0
    for order in (1, 2):
        for _ in range(100):
            n = int(rng.integers(2, 17))
            times = np.cumsum(rng.uniform(0.05, 1.0, n))
            times -= times[0] * float(rng.uniform(0.0, 1.0))
            unit = ObservationUnit("u", np.sort(np.abs(times)) + np.arange(n) * 1e-9,
                                   rng.normal(size=n), rng.uniform(0.1, 1.0, n))
            sigma = float(rng.uniform(0.0, 2.0))
            gap = abs(marginal_loglik(unit, order, sigma, 1e4)
                      - marginal_loglik_dense(unit, order, sigma, 1e4))
            worst = max(worst, gap)
    elapsed = time.time() - start
    ok = worst < 1e-8 and elapsed < 10.0
    report(1, "filter vs dense oracle", ok, f"max |diff| = {worst:.3e}, {elapsed:.1f}s over 200 instances")
    assert worst < 1e-8
    assert elapsed < 10.0


def test_criterion_02_null_component_polynomial_regression():
    rng = np.random.default_rng(102)
    worst = 0.0
    for order in (1, 2):
        for _ in range(10):
            n = 12
            times = np.sort(rng.uniform(0.0, 15.0, n)) + np.arange(n) * 1e-9
            y = rng.normal(size=n)
            se = rng.uniform(0.2, 0.9, n)
            unit = ObservationUnit("u", times, y, se)
            prior = MixturePrior(order, [0.0, 1.0], [1.0, 0.0], 1e8)
            mixture = build_posterior("u", np.array([0.0, -np.inf]), prior)
            got = smooth(unit, mixture, query_grid=times).mean
            w = 1.0 / se**2
            if order == 1:
                want = np.full(n, np.sum(w * y) / np.sum(w))
            else:
                design = np.column_stack([np.ones(n), times])
                coef = np.linalg.solve(design.T @ (w[:, None] * design), design.T @ (w * y))
                want = design @ coef
            worst = max(worst, float(np.abs(got - want).max()))
    ok = worst < 1e-6
    report(2, "sigma=0 smoothing equals weighted regression", ok, f"max |diff| = {worst:.3e}")
    assert worst < 1e-6


def test_criterion_03_unit_mean_bayes_factor():
    # designs keep every component's likelihood ratio light-tailed so the
    # 50k-sample mean is a sharp estimate of the exact unit expectation
    start = time.time()
    results = []
    for order, se_value in ((1, 2.0), (2, 6.0)):
        grid = default_grid(order, 25, 10.0)
        design = UnitDesign(np.arange(4.0), np.full(4, se_value))
        uniform = MixturePrior.uniform(order, grid)
        skew = np.zeros(grid.size)
        skew[0] = 0.3
        skew[-1] = 0.7  # absurd alternative: everything on the widest component
        misweighted = MixturePrior(order, grid, skew)
        for label, prior in (("uniform", uniform), ("mis-weighted", misweighted)):
            value = bf_moment_check(50_000, prior, design, rng=103 + order)
            results.append((order, label, value))
    elapsed = time.time() - start
    ok = all(0.9 <= v <= 1.1 for _, _, v in results) and elapsed < 300.0
    detail = ", ".join(f"p={p} {lab}: {v:.4f}" for p, lab, v in results) + f"; {elapsed:.0f}s"
    report(3, "mean Bayes factor over null units", ok, detail)
    for _, _, value in results:
        assert 0.9 <= value <= 1.1
    assert elapsed < 300.0


def test_criterion_04_adjusted_pi0_conservative(study):
    rows = [r for r in study["sweep"] if r["pipeline"] == "bf_adjusted"]
    assert len(rows) == len(RHO_GRID) * STUDY.replicates * 2
    margins = np.array([r["pi0_hat"] - r["pi0_true"] for r in rows])
    ok = bool(np.all(margins >= -0.01)) and study["sweep_seconds"] < 1800.0
    report(4, "adjusted null proportion conservative", ok,
           f"min margin = {margins.min():+.4f} over {len(rows)} fits, {study['sweep_seconds']:.0f}s")
    assert np.all(margins >= -0.01)
    assert study["sweep_seconds"] < 1800.0


def test_criterion_05_fdr_calibration(study):
    rows = [r for r in study["calib"] if r["pipeline"] == "bf_adjusted"]
    details = []
    ok = True
    for test_name in ("constant-null", "linear-null"):
        for alpha in ALPHA_GRID:
            values = [r["fdr"] for r in rows if r["test"] == test_name and r["alpha"] == alpha]
            assert len(values) == STUDY.replicates
            mean_fdr = float(np.mean(values))
            details.append(f"{test_name}@{alpha}: {mean_fdr:.3f}")
            ok &= mean_fdr <= alpha + 0.02
    report(5, "adjusted empirical FDR within budget", ok, "; ".join(details))
    assert ok


def test_criterion_06_power(study):
    ok = True
    details = []
    for test_name in ("constant-null", "linear-null"):
        powers = {}
        for pipeline in ("bf_adjusted", "mle"):
            values = [
                r["power"] for r in study["calib"]
                if r["pipeline"] == pipeline and r["test"] == test_name and r["alpha"] == 0.05
            ]
            powers[pipeline] = float(np.mean(values))
        loss = powers["mle"] - powers["bf_adjusted"]
        details.append(f"{test_name}: power={powers['bf_adjusted']:.3f}, loss={loss:+.3f}")
        ok &= powers["bf_adjusted"] >= 0.75 and loss <= 0.05
    report(6, "adjusted power at 5% threshold", ok, "; ".join(details))
    assert ok


def test_criterion_07_se_adjustment_round_trip():
    worst_gap = 0.0
    for ratio in (0.1, 0.5, 1.0, 2.0, 5.0):
        for nu in (3.0, 5.0, 14.0, 30.0, 100.0):
            se = 0.37
            beta = ratio * se
            adjusted = adjust_se(beta, se, nu)
            gap = abs(norm.sf(beta / adjusted) - t_dist.sf(beta / se, nu))
            worst_gap = max(worst_gap, gap)
            assert adjusted > se
    zero_gap = max(
        abs(adjust_se(1e-7 * 0.37, 0.37, nu) - adjust_se(0.0, 0.37, nu)) for nu in (3.0, 14.0, 100.0)
    )
    ok = worst_gap < 1e-10 and zero_gap < 1e-6 * 0.37
    report(7, "standard-error calibration identity", ok,
           f"max CDF gap = {worst_gap:.2e}, zero-limit gap = {zero_gap:.2e}")
    assert worst_gap < 1e-10
    assert zero_gap < 1e-6 * 0.37


def test_criterion_08_em_monotone_and_exact():
    rng = np.random.default_rng(108)
    monotone = True
    for _ in range(20):
        loglik = rng.normal(scale=3.0, size=(int(rng.integers(3, 40)), int(rng.integers(2, 8))))
        offsets = loglik.max(axis=1)
        result = fit_weights(LikelihoodMatrix(loglik - offsets[:, None], offsets), max_iter=200)
        trace = result.objective_trace
        monotone &= bool(np.all(np.diff(trace) >= -1e-10 * np.maximum(1.0, np.abs(trace[1:]))))
    two_point = fit_weights(LikelihoodMatrix(np.log([[1.0, 1e-300], [1e-300, 1.0]]), np.zeros(2)))
    gap = float(np.abs(two_point.weights - 0.5).max())
    ok = monotone and gap < 1e-6
    report(8, "EM monotone, exact on two-point problem", ok,
           f"monotone={monotone}, |weights - 0.5| = {gap:.2e}")
    assert monotone
    assert gap < 1e-6


def mc_conditional_sd(order, horizon, n_steps, n_paths, seed, chunk=2500):
    """Brute-force SD via trapezoid integration of simulated white noise."""
    rng = np.random.default_rng(seed)
    dt = horizon / n_steps
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        w = np.cumsum(rng.standard_normal((m, n_steps)) * np.sqrt(dt), axis=1)
        w = np.concatenate([np.zeros((m, 1)), w], axis=1)
        for _ in range(order - 1):
            inc = 0.5 * (w[:, 1:] + w[:, :-1]) * dt
            w = np.concatenate([np.zeros((m, 1)), np.cumsum(inc, axis=1)], axis=1)
        final = w[:, -1]
        total += final.sum()
        total_sq += (final**2).sum()
        done += m
    return np.sqrt(total_sq / done - (total / done) ** 2)


def test_criterion_09_predictive_sd_against_simulation():
    n_paths = 50_000
    bound = 3.0 / np.sqrt(2 * n_paths)
    details = []
    ok = True
    seed = 109
    for order in (1, 2):
        for horizon in (1.0, 4.0, 16.0):
            seed += 1
            estimate = mc_conditional_sd(order, horizon, n_steps=4000, n_paths=n_paths, seed=seed)
            exact = psd(order, 1.0, horizon)
            rel = abs(estimate - exact) / exact
            details.append(f"p={order},h={horizon:g}: {rel:.4f}")
            ok &= rel < bound
    report(9, "predictive SD vs brute-force simulation", ok,
           f"rel errors {'; '.join(details)} (bound {bound:.4f})")
    assert ok


def test_criterion_10_thread_count_determinism(tmp_path):
    runner = CliRunner()
    blobs = []
    for threads, name in (("1", "one"), ("4", "four")):
        out = tmp_path / name
        result = runner.invoke(cli_main, [
            "calibrate", "--output", str(out),
            "--rho-grid", "0.2,0.35", "--alpha-grid", "0.05,0.1",
            "--units", "120", "--replicates", "2", "--orders", "1,2",
            "--grid-size", "12", "--seed", "11", "--threads", threads, "--no-plot",
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        blobs.append((out / "pi0_sweep.csv").read_bytes() + (out / "fdr_power.csv").read_bytes())
    ok = blobs[0] == blobs[1]
    report(10, "calibrate byte-identical across thread counts", ok,
           f"{len(blobs[0])} bytes compared")
    assert ok


def test_workflow_smoke_two_thousand_units(tmp_path):
    # stand-in for a full-scale run: fit -> test -> smooth on 2,000 units
    start = time.time()
    dataset, _ = generate_dataset(SimulationConfig(n_units=2000, rho=0.2, seed=99))
    data_path = tmp_path / "units.csv"
    write_long_csv(data_path, dataset)

    runner = CliRunner()
    out = tmp_path / "run"
    result = runner.invoke(cli_main, ["fit", "--input", str(data_path), "--output", str(out),
                                      "--no-plot"], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli_main, [
        "test", "--cache", str(out), "--functional", "switch:c=0.25", "--seed", "1",
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli_main, [
        "smooth", "--cache", str(out), "--unit", dataset[0].id, "--unit", dataset[1].id, "--no-plot",
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output

    elapsed = time.time() - start
    assert (out / "tests.csv").exists()
    print(f"[smoke] 2000-unit fit/test/smooth workflow: "
          f"{'PASS' if elapsed < 120 else 'FAIL'} ({elapsed:.0f}s)")
    assert elapsed < 120.0
