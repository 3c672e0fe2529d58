"""Reading summary-statistic CSVs, the small-sample SE transform, and writers.

Input schema: ``unit,t,beta_hat,se[,df]`` with a header row, UTF-8,
comma-separated. All writers emit floats with 17 significant digits so a
write/read round trip reproduces every value bit for bit, and every file
ends with a trailing newline.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.special import betaln
from scipy.stats import norm
from scipy.stats import t as t_dist

from .errors import DataError, InvalidArgumentError
from .likelihood import ObservationUnit

REQUIRED_COLUMNS = ("unit", "t", "beta_hat", "se")


def adjust_se(beta_hat: float, se: float, nu: float) -> float:
    """Inflate a standard error so normal tails mimic the t reference.

    Solves Phi(beta_hat / s_adj) = T_nu(beta_hat / se) for s_adj. The
    estimate-free limit (|z| below 1e-8) uses the analytic value
    se * phi(0) / f_nu(0), which the identity approaches continuously;
    the transform is symmetric in the sign of the estimate and always
    inflates (t densities put less mass near zero than the normal).
    """
    if not np.isfinite(nu) or nu <= 2:
        raise InvalidArgumentError(f"degrees of freedom must exceed 2, got {nu}")
    if not np.isfinite(se) or se <= 0:
        raise InvalidArgumentError(f"standard error must be positive, got {se}")
    z = abs(beta_hat) / se
    if z < 1e-8:
        return se * norm.pdf(0.0) / t_dist.pdf(0.0, nu)
    # survival-function route keeps precision for large |z|
    log_tail = _t_log_tail(z, nu)
    if log_tail > -650.0:
        target = norm.isf(np.exp(log_tail))
    else:
        target = _norm_isf_from_log(log_tail)
    return abs(beta_hat) / target


def _t_log_tail(z: float, nu: float) -> float:
    """log P(T_nu > z), valid far beyond where the tail underflows a double.

    Falls back to the incomplete-beta series for the tail,
    0.5 * I_x(nu/2, 1/2) with x = nu / (nu + z^2), summed in log space.
    """
    direct = t_dist.logsf(z, nu)
    if np.isfinite(direct) and direct > -700.0:
        return float(direct)
    a, b = nu / 2.0, 0.5
    x = nu / (nu + z * z)
    term = 1.0
    total = 1.0
    for k in range(1, 100_000):
        term *= (a + b + k - 1.0) / (a + k) * x
        total += term
        if term < 1e-17 * total:
            break
    return float(
        np.log(0.5) + a * np.log(x) + b * np.log1p(-x) - np.log(a) - betaln(a, b) + np.log(total)
    )


def _norm_isf_from_log(log_q: float) -> float:
    """Normal upper quantile for tail probabilities below double range."""
    x = np.sqrt(-2.0 * log_q)
    for _ in range(60):
        gap = norm.logsf(x) - log_q
        if abs(gap) < 1e-13:
            break
        hazard = np.exp(norm.logpdf(x) - norm.logsf(x))
        x += gap / hazard
    return float(x)


def read_long_csv(path, apply_df_adjustment: bool = True) -> list[ObservationUnit]:
    """Parse a long-format summary-statistics CSV into observation units.

    Rows may arrive in any order; units keep first-appearance order and
    each unit's rows are sorted by t. When a ``df`` column is present and
    populated, :func:`adjust_se` is applied row-wise (disable with
    ``apply_df_adjustment=False``).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[:4]) != REQUIRED_COLUMNS or len(header) > 5 or (
            len(header) == 5 and header[4] != "df"
        ):
            raise DataError(f"{path}: header must be unit,t,beta_hat,se[,df], got {','.join(header)}")
        has_df = len(header) == 5

        per_unit: dict[str, dict[float, tuple[float, float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            unit = row[0].strip()
            if not unit:
                raise DataError(f"{path}:{lineno}: empty unit id")
            try:
                t_val = float(row[1])
                beta = float(row[2])
                se = float(row[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not np.isfinite(t_val) or not np.isfinite(beta) or not np.isfinite(se):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if se <= 0:
                raise DataError(f"{path}:{lineno}: standard error must be positive, got {se}")
            if has_df and row[4].strip():
                try:
                    nu = float(row[4])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
                if nu <= 2:
                    raise DataError(f"{path}:{lineno}: df must exceed 2, got {nu}")
                if apply_df_adjustment:
                    se = adjust_se(beta, se, nu)
            bucket = per_unit.setdefault(unit, {})
            if t_val in bucket:
                raise DataError(f"{path}:{lineno}: duplicate (unit, t) pair ({unit}, {t_val:g})")
            bucket[t_val] = (beta, se)

    if not per_unit:
        raise DataError(f"{path}: no data rows")

    dataset = []
    for unit, bucket in per_unit.items():
        times = np.array(sorted(bucket))
        beta = np.array([bucket[t][0] for t in times])
        se = np.array([bucket[t][1] for t in times])
        try:
            dataset.append(ObservationUnit(id=unit, times=times, beta_hat=beta, se=se))
        except InvalidArgumentError as exc:
            raise DataError(f"{path}: unit {unit!r}: {exc}") from None
    return dataset


# ---------------------------------------------------------------------------
# writers


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, header: list[str], rows) -> Path:
    """Write rows of mixed scalars; floats at 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def write_table(path, rows: list[dict]) -> Path:
    """Write a list of homogeneous dict rows (column order from the first row)."""
    if not rows:
        raise InvalidArgumentError("no rows to write")
    header = list(rows[0])
    return write_csv(path, header, ([row[col] for col in header] for row in rows))


def write_long_csv(path, dataset: list[ObservationUnit]) -> Path:
    def rows():
        for unit in dataset:
            for t_val, beta, se in zip(unit.times, unit.beta_hat, unit.se):
                yield [unit.id, t_val, beta, se]

    return write_csv(path, list(REQUIRED_COLUMNS), rows())


def write_test_table(path, table) -> Path:
    return write_csv(path, table.header(), table.rows())


def write_smooth_table(path, result, per_component: bool = False) -> Path:
    header = ["t", "mean", "sd", "lower", "upper"]
    columns = [result.grid, result.mean, result.sd, result.lower, result.upper]
    if per_component:
        for pos, k in enumerate(result.component_indices):
            header += [f"mean_k{k}", f"sd_k{k}"]
            columns += [result.component_means[pos], result.component_sds[pos]]
    return write_csv(path, header, zip(*columns))


def write_mu_curve(path, result) -> Path:
    return write_csv(path, ["c", "mu", "pi0"], result.mu_curve)


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
            handle.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)!r}")
