"""Command-line pipeline: fit, test, smooth, simulate, calibrate, adjust-se.

The fit phase caches everything later phases need (dataset echo, prior,
likelihood matrix) inside its output directory, so test and smooth never
recompute marginal likelihoods. Exit codes: 0 success, 2 usage error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import difflib
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bfadjust import BfAdjustConfig
from .ebayes import PenaltyConfig
from .errors import DataError, InvalidArgumentError, NumericError
from .ingest import (
    read_long_csv,
    write_csv,
    write_long_csv,
    write_manifest,
    write_mu_curve,
    write_smooth_table,
    write_table,
    write_test_table,
)
from .likelihood import LikelihoodMatrix, MixturePrior
from .pipeline import fit_model
from .posterior import FunctionalSpec, build_posterior, build_test_table, lfsr_functional, sample_posterior, smooth
from .rng import unit_stream
from .simulate import SimulationConfig, StudySettings, generate_dataset, run_calibration, run_pi0_sweep


def guarded(fn):
    """Map package errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InvalidArgumentError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except NumericError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)

    return wrapper


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidArgumentError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise InvalidArgumentError(f"grid must be start:stop:count, got {spec!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InvalidArgumentError(f"grid must be start:stop:count, got {spec!r}") from None
    if count < 1 or stop < start:
        raise InvalidArgumentError(f"bad grid spec {spec!r}")
    return np.linspace(start, stop, count)


def _parse_functional(text: str) -> tuple[str, FunctionalSpec]:
    name, _, rest = text.partition(":")
    name = name.strip()
    params: dict = {}
    sided = "one"
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if not key or not value:
                raise InvalidArgumentError(f"bad functional parameter {item!r} in {text!r}")
            if key == "sided":
                sided = value.strip()
            else:
                try:
                    params[key] = float(value)
                except ValueError:
                    raise InvalidArgumentError(f"bad functional parameter {item!r} in {text!r}") from None
    return name, FunctionalSpec(kind=name, params=params, sided=sided)


def _manifest_payload(command: str, params: dict, extra: dict | None = None) -> dict:
    payload = {
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "versions": {
            "fash": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    }
    if extra:
        payload.update(extra)
    return payload


@click.group()
@click.version_option(version=__version__, prog_name="fash")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file of per-command defaults, e.g. {\"fit\": {\"order\": 2}}; flags override it.")
@click.pass_context
def main(ctx, config_path):
    """Adaptive shrinkage, smoothing and testing for noisy effect functions."""
    if config_path:
        with open(config_path, encoding="utf-8") as handle:
            try:
                loaded = json.load(handle)
            except json.JSONDecodeError as exc:
                raise click.UsageError(f"bad config file {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise click.UsageError(f"config file {config_path} must hold a JSON object")
        ctx.default_map = loaded


# ---------------------------------------------------------------------------
# fit


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="Long-format CSV: unit,t,beta_hat,se[,df].")
@click.option("--output", "output_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for the prior, likelihood cache and manifest.")
@click.option("--order", default=1, show_default=True, help="Baseline polynomial order (1=constant, 2=linear).")
@click.option("--grid-size", default=51, show_default=True, help="Number of positive scale-grid components.")
@click.option("--grid-qmax", default=10.0, show_default=True, help="Log-precision span of the default grid.")
@click.option("--sigma", "sigma_list", default=None, help="Explicit comma-separated scale grid (overrides size/qmax).")
@click.option("--penalty-null", default=10.0, show_default=True,
              help="Dirichlet exponent on the null weight (1 disables the penalty).")
@click.option("--bf-adjust/--no-bf-adjust", default=True, show_default=True,
              help="Apply the conservative Bayes-factor adjustment of the null weight.")
@click.option("--epsilon", default=0.05, show_default=True, help="Buffer above 1 for the cutoff search.")
@click.option("--diffuse-variance", default=None, type=float,
              help="Variance of the polynomial null space (default: 1e6 x squared data RMS).")
@click.option("--threads", default=1, show_default=True, envvar="FASH_THREADS", show_envvar=True)
@click.option("--plot/--no-plot", default=True, show_default=True, help="Render diagnostic figures.")
@click.pass_context
@guarded
def fit(ctx, input_path, output_dir, order, grid_size, grid_qmax, sigma_list, penalty_null,
        bf_adjust, epsilon, diffuse_variance, threads, plot):
    """Estimate the mixture prior from a summary-statistics CSV."""
    dataset = read_long_csv(input_path)
    sigma_grid = None
    if sigma_list:
        values = sorted(_parse_floats(sigma_list))
        if not values:
            raise InvalidArgumentError("--sigma needs at least one positive value")
        sigma_grid = np.asarray(values if values[0] == 0.0 else [0.0] + values)

    n_components = (sigma_grid.size if sigma_grid is not None else grid_size + 1)
    penalty = (PenaltyConfig.null_biased(n_components, penalty_null)
               if penalty_null > 1 else PenaltyConfig.flat(n_components))
    model = fit_model(
        dataset,
        order,
        sigma_grid=sigma_grid,
        grid_size=grid_size,
        grid_qmax=grid_qmax,
        penalty=penalty,
        diffuse_variance=diffuse_variance,
        bf_config=BfAdjustConfig(epsilon=epsilon) if bf_adjust else None,
        n_threads=threads,
    )

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_long_csv(out / "dataset.csv", dataset)
    matrix = model.matrix
    np.savez(
        out / "loglik.npz",
        loglik=matrix.loglik,
        row_offset=matrix.row_offset,
        unit_ids=np.array(matrix.unit_ids),
    )
    prior_payload = {
        "order": order,
        "sigma_grid": model.prior_mle.sigma_grid,
        "diffuse_variance": model.prior_mle.diffuse_variance,
        "weights_mle": model.prior_mle.weights,
        "weights_adjusted": None if model.prior_adjusted is None else model.prior_adjusted.weights,
        "pi0_mle": float(model.fit_result.weights[0]),
        "pi0_adjusted": None if model.bf_result is None else model.bf_result.pi0_adjusted,
        "c_star": None if model.bf_result is None else model.bf_result.c_star,
        "epsilon": epsilon if bf_adjust else None,
        "em": {
            "iterations": model.fit_result.iterations,
            "converged": model.fit_result.converged,
            "objective": float(model.fit_result.objective_trace[-1]),
        },
    }
    write_manifest(out / "prior.json", prior_payload)
    if model.bf_result is not None:
        write_mu_curve(out / "mu_curve.csv", model.bf_result)
        if plot:
            from .plots import figure_mu_curve

            figure_mu_curve(model.bf_result, out / "fig_mu_curve.png")
    write_manifest(out / "manifest.json", _manifest_payload(
        "fit", ctx.params, {"sigma_grid": model.prior_mle.sigma_grid, "n_units": len(dataset)},
    ))
    click.echo(f"fit: {len(dataset)} units, pi0_mle={prior_payload['pi0_mle']:.4f}"
               + (f", pi0_adjusted={prior_payload['pi0_adjusted']:.4f}" if bf_adjust else ""))


def _load_cache(cache_dir) -> tuple[list, MixturePrior, MixturePrior | None, LikelihoodMatrix]:
    cache = Path(cache_dir)
    for name in ("dataset.csv", "prior.json", "loglik.npz"):
        if not (cache / name).exists():
            raise DataError(f"cache {cache} is missing {name}; run `fash fit` first")
    dataset = read_long_csv(cache / "dataset.csv", apply_df_adjustment=False)
    with open(cache / "prior.json", encoding="utf-8") as handle:
        spec = json.load(handle)
    stored = np.load(cache / "loglik.npz", allow_pickle=False)
    matrix = LikelihoodMatrix(
        loglik=stored["loglik"],
        row_offset=stored["row_offset"],
        unit_ids=tuple(str(u) for u in stored["unit_ids"]),
    )
    by_id = {u.id: u for u in dataset}
    try:
        dataset = [by_id[uid] for uid in matrix.unit_ids]
    except KeyError as exc:
        raise DataError(f"cache {cache} is inconsistent: unit {exc} missing from dataset.csv") from None
    grid = np.asarray(spec["sigma_grid"], dtype=float)
    v0 = float(spec["diffuse_variance"])
    order = int(spec["order"])
    prior_mle = MixturePrior(order, grid, np.asarray(spec["weights_mle"], dtype=float), v0)
    prior_adj = None
    if spec.get("weights_adjusted") is not None:
        prior_adj = MixturePrior(order, grid, np.asarray(spec["weights_adjusted"], dtype=float), v0)
    return dataset, prior_mle, prior_adj, matrix


def _pick_prior(prior_mle, prior_adj, weights_choice: str) -> MixturePrior:
    if weights_choice == "adjusted":
        if prior_adj is None:
            raise DataError("cache holds no adjusted weights (fit ran with --no-bf-adjust); "
                            "use --weights mle")
        return prior_adj
    return prior_mle


# ---------------------------------------------------------------------------
# test


@main.command("test")
@click.option("--cache", "cache_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory of a previous `fash fit`.")
@click.option("--output", "output_dir", default=None, type=click.Path(file_okay=False),
              help="Where to write tests.csv (default: the cache directory).")
@click.option("--alpha", default=0.05, show_default=True, help="FDR/FSR threshold for decision flags.")
@click.option("--functional", "functionals", multiple=True,
              help="Functional to score, e.g. switch, switch:c=0.25, early:split=3, "
                   "max_threshold:threshold=1, custom:lo=2,hi=7. Repeatable.")
@click.option("--samples", default=3000, show_default=True, help="Posterior paths per unit for functionals.")
@click.option("--seed", default=0, show_default=True)
@click.option("--refine", default=0, show_default=True,
              help="Evaluate functionals on this many equispaced points (0 = observed times).")
@click.option("--weights", "weights_choice", type=click.Choice(["adjusted", "mle"]), default="adjusted",
              show_default=True)
@click.pass_context
@guarded
def test_cmd(ctx, cache_dir, output_dir, alpha, functionals, samples, seed, refine, weights_choice):
    """Score units: lfdr/FDR for the baseline test, lfsr/FSR per functional."""
    dataset, prior_mle, prior_adj, matrix = _load_cache(cache_dir)
    prior = _pick_prior(prior_mle, prior_adj, weights_choice)
    specs = dict(_parse_functional(text) for text in functionals)

    lfdrs = np.empty(len(dataset))
    lfsr_cols = {name: (np.empty(len(dataset)), np.empty(len(dataset))) for name in specs}
    for j, unit in enumerate(dataset):
        mixture = build_posterior(unit.id, matrix.loglik[j], prior)
        lfdrs[j] = mixture.weights[0]
        if specs:
            grid = unit.times if refine < 2 else np.linspace(unit.times[0], unit.times[-1], refine)
            paths = sample_posterior(unit, mixture, n_samples=samples, query_grid=grid,
                                     rng=unit_stream(seed, unit.id))
            for name, spec in specs.items():
                value, mc_se = lfsr_functional(paths, grid, spec)
                lfsr_cols[name][0][j] = value
                lfsr_cols[name][1][j] = mc_se

    table = build_test_table(matrix.unit_ids, lfdrs, alpha, lfsr_cols)
    out = Path(output_dir) if output_dir else Path(cache_dir)
    write_test_table(out / "tests.csv", table)
    write_manifest(out / "manifest_test.json", _manifest_payload("test", ctx.params))
    n_sig = int(table.significant.sum())
    click.echo(f"test: {len(dataset)} units, {n_sig} significant at alpha={alpha}")
    for name, col in table.functionals.items():
        click.echo(f"  {name}: {int(col.significant.sum())} significant at alpha={alpha}")


# ---------------------------------------------------------------------------
# smooth


@main.command("smooth")
@click.option("--cache", "cache_dir", required=True, type=click.Path(file_okay=False))
@click.option("--output", "output_dir", default=None, type=click.Path(file_okay=False))
@click.option("--unit", "unit_ids", multiple=True, help="Unit id to smooth (repeatable).")
@click.option("--all", "smooth_all", is_flag=True, help="Smooth every unit in the cache.")
@click.option("--grid", "grid_spec", default=None, help="Query grid start:stop:count (default: observed times).")
@click.option("--level", default=0.95, show_default=True, help="Credible-band level.")
@click.option("--per-component", is_flag=True, help="Also write per-component means and sds.")
@click.option("--weights", "weights_choice", type=click.Choice(["adjusted", "mle"]), default="adjusted",
              show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_context
@guarded
def smooth_cmd(ctx, cache_dir, output_dir, unit_ids, smooth_all, grid_spec, level, per_component,
               weights_choice, plot):
    """Posterior mean and credible band per unit, written as one CSV each."""
    dataset, prior_mle, prior_adj, matrix = _load_cache(cache_dir)
    prior = _pick_prior(prior_mle, prior_adj, weights_choice)
    index = {u.id: j for j, u in enumerate(dataset)}

    if smooth_all:
        selected = list(matrix.unit_ids)
    else:
        if not unit_ids:
            raise InvalidArgumentError("pass --unit at least once, or --all")
        selected = list(unit_ids)
        for uid in selected:
            if uid not in index:
                near = difflib.get_close_matches(uid, index, n=3)
                hint = f" (close matches: {', '.join(near)})" if near else ""
                raise DataError(f"unknown unit id {uid!r}{hint}")

    grid = _parse_grid(grid_spec) if grid_spec else None
    out = Path(output_dir) if output_dir else Path(cache_dir)
    for uid in selected:
        j = index[uid]
        unit = dataset[j]
        mixture = build_posterior(uid, matrix.loglik[j], prior)
        result = smooth(unit, mixture, query_grid=grid, level=level)
        write_smooth_table(out / f"smooth_{uid}.csv", result, per_component=per_component)
        if plot:
            from .plots import figure_smooth

            figure_smooth(unit, result, out / f"fig_smooth_{uid}.png")
    write_manifest(out / "manifest_smooth.json", _manifest_payload("smooth", ctx.params))
    click.echo(f"smooth: wrote {len(selected)} unit(s) to {out}")


# ---------------------------------------------------------------------------
# simulate / calibrate


@main.command("simulate")
@click.option("--output", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--units", default=1000, show_default=True)
@click.option("--rho", default=0.2, show_default=True, help="Non-constant fraction of units.")
@click.option("--seed", default=0, show_default=True)
@click.pass_context
@guarded
def simulate_cmd(ctx, output_dir, units, rho, seed):
    """Draw one benchmark dataset plus its ground truth."""
    config = SimulationConfig(n_units=units, rho=rho, seed=seed)
    dataset, truth = generate_dataset(config)
    out = Path(output_dir)
    write_long_csv(out / "dataset.csv", dataset)
    write_csv(
        out / "truth.csv",
        ["unit", "category", "t", "beta_true"],
        (
            [unit.id, truth.categories[j], t, b]
            for j, unit in enumerate(dataset)
            for t, b in zip(truth.times, truth.beta[j])
        ),
    )
    write_manifest(out / "manifest.json", _manifest_payload("simulate", ctx.params))
    click.echo(f"simulate: wrote {len(dataset)} units to {out}")


@main.command("calibrate")
@click.option("--output", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--rho-grid", default="0.05,0.2,0.35,0.5", show_default=True)
@click.option("--alpha-grid", default="0.01,0.05,0.1,0.2", show_default=True)
@click.option("--calibration-rho", default=0.2, show_default=True,
              help="rho used for the FDR/power table.")
@click.option("--units", default=1000, show_default=True)
@click.option("--replicates", default=20, show_default=True)
@click.option("--orders", default="1,2", show_default=True)
@click.option("--grid-size", default=51, show_default=True)
@click.option("--grid-qmax", default=10.0, show_default=True)
@click.option("--epsilon", default=0.05, show_default=True)
@click.option("--penalty-null", default=10.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=1, show_default=True, envvar="FASH_THREADS", show_envvar=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_context
@guarded
def calibrate_cmd(ctx, output_dir, rho_grid, alpha_grid, calibration_rho, units, replicates, orders,
                  grid_size, grid_qmax, epsilon, penalty_null, seed, threads, plot):
    """Null-proportion conservativeness sweep plus FDR/power calibration tables."""
    settings = StudySettings(
        n_units=units,
        replicates=replicates,
        orders=tuple(int(v) for v in _parse_floats(orders)),
        grid_size=grid_size,
        grid_qmax=grid_qmax,
        epsilon=epsilon,
        penalty_null=penalty_null,
        n_threads=threads,
    )
    out = Path(output_dir)
    sweep_rows = run_pi0_sweep(_parse_floats(rho_grid), seed=seed, settings=settings)
    write_table(out / "pi0_sweep.csv", sweep_rows)
    calib_rows = run_calibration(_parse_floats(alpha_grid), rho=calibration_rho, seed=seed,
                                 settings=settings)
    write_table(out / "fdr_power.csv", calib_rows)
    if plot:
        from .plots import figure_calibration, figure_pi0_sweep

        figure_pi0_sweep(sweep_rows, out / "fig_pi0_sweep.png")
        figure_calibration(calib_rows, out / "fig_calibration.png")
    write_manifest(out / "manifest.json", _manifest_payload("calibrate", ctx.params))
    click.echo(f"calibrate: wrote pi0_sweep.csv and fdr_power.csv to {out}")


# ---------------------------------------------------------------------------
# adjust-se


@main.command("adjust-se")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@guarded
def adjust_se_cmd(input_path, output_path):
    """Rewrite a CSV with t-calibrated standard errors (requires a df column)."""
    with open(input_path, encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
    if "df" not in header:
        raise DataError(f"{input_path}: no df column; nothing to adjust")
    dataset = read_long_csv(input_path, apply_df_adjustment=True)
    write_long_csv(output_path, dataset)
    click.echo(f"adjust-se: wrote {output_path}")


if __name__ == "__main__":
    main()
