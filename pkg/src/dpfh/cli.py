"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``mse``, ``simulate``, ``estimate-d``.
Exit codes: 0 success, 2 parse error, 3 convergence failure, 4 data
invariant violation.
"""

from __future__ import annotations

import json
import sys
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from .dataio import (
    fit_result_to_dict,
    read_current_csv,
    read_dataset_csv,
    read_panels_csv,
    write_fit_json,
)
from .estimator import fit_model
from .exceptions import DataError, ParseError, SolverError
from .mse import estimate_mse
from .panels import estimate_sampling_variances
from .prediction import eblup
from .simulation import (
    ScenarioConfig,
    report_filename,
    run_estimation_study,
    run_mse_estimator_study,
    run_true_mse_study,
    run_zero_estimate_sweep,
)

_EXIT_PARSE = 2
_EXIT_SOLVER = 3
_EXIT_DATA = 4


@contextmanager
def _mapped_errors():
    try:
        yield
    except ParseError as err:
        click.echo(f"parse error: {err}", err=True)
        sys.exit(_EXIT_PARSE)
    except DataError as err:
        click.echo(f"data error: {err}", err=True)
        sys.exit(_EXIT_DATA)
    except SolverError as err:
        click.echo(f"solver error: {err}", err=True)
        if err.diagnostics:
            click.echo(json.dumps(err.diagnostics, default=str), err=True)
        sys.exit(_EXIT_SOLVER)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _fit_from_options(input_path, estimator, transform, fixed_lambda, add_intercept):
    data = read_dataset_csv(input_path, add_intercept=add_intercept)
    kind = "dual-power" if transform == "dp" else "log"
    fit = fit_model(data, method=estimator, transform=kind, fixed_lambda=fixed_lambda)
    return data, fit


def _require_converged(fit, output=None):
    if fit.converged:
        return
    if output is not None:
        write_fit_json(fit, output)
    click.echo("fit did not converge (no score root on the search grid)", err=True)
    click.echo(json.dumps(fit_result_to_dict(fit)), err=True)
    sys.exit(_EXIT_SOLVER)


_common_fit_options = [
    click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False)),
    click.option(
        "--estimator",
        type=click.Choice(["pr", "fh", "ml", "reml"]),
        default="reml",
        show_default=True,
        help="Random-effect variance estimator.",
    ),
    click.option(
        "--transform",
        type=click.Choice(["dp", "log"]),
        default="dp",
        show_default=True,
        help="dp = dual power with estimated parameter, log = log model.",
    ),
    click.option(
        "--fixed-lambda",
        type=float,
        default=None,
        help="Fit at this transformation parameter instead of estimating it.",
    ),
    click.option("--add-intercept", is_flag=True, help="Prepend a constant column."),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@click.group()
def main():
    """Small area estimation with an estimated power transformation."""


@main.command()
@_with_options(_common_fit_options)
def fit(input_path, output_path, estimator, transform, fixed_lambda, add_intercept):
    """Estimate (lambda, A, beta) and write the fit as JSON."""
    with _mapped_errors():
        _, result = _fit_from_options(
            input_path, estimator, transform, fixed_lambda, add_intercept
        )
        write_fit_json(result, output_path)
        if not result.converged:
            click.echo("fit did not converge (no score root on the search grid)", err=True)
            sys.exit(_EXIT_SOLVER)


def _prediction_rows(data, fit):
    transform = fit.params.transform
    h = transform.forward(data.y)
    x_beta = data.x @ fit.beta
    preds = eblup(data, fit)
    for i, pred in enumerate(preds):
        yield {
            "area_id": data.area_id[i],
            "D": float(data.sampling_var[i]),
            "h": float(h[i]),
            "x_beta": float(x_beta[i]),
            "eblup": pred.eta_hat,
            "y_scale": pred.y_scale_value,
        }


def _write_rows(rows, header, path):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in header])


@main.command()
@_with_options(_common_fit_options)
def predict(input_path, output_path, estimator, transform, fixed_lambda, add_intercept):
    """Fit, then write per-area rows: area_id, D, h, x_beta, eblup, y_scale."""
    with _mapped_errors():
        data, result = _fit_from_options(
            input_path, estimator, transform, fixed_lambda, add_intercept
        )
        _require_converged(result)
        rows = list(_prediction_rows(data, result))
        _write_rows(rows, ["area_id", "D", "h", "x_beta", "eblup", "y_scale"], output_path)


@main.command()
@_with_options(_common_fit_options)
@click.option("--bootstrap", "n_boot", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", "n_jobs", type=int, default=1, show_default=True)
@click.option(
    "--details",
    "details_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="Also write the per-area error breakdown as JSON.",
)
def mse(
    input_path,
    output_path,
    estimator,
    transform,
    fixed_lambda,
    add_intercept,
    n_boot,
    seed,
    n_jobs,
    details_path,
):
    """Prediction rows plus the bootstrap prediction-error column."""
    with _mapped_errors():
        if n_boot < 100:
            raise DataError("--bootstrap must be at least 100")
        data, result = _fit_from_options(
            input_path, estimator, transform, fixed_lambda, add_intercept
        )
        _require_converged(result)
        mse_result = estimate_mse(data, result, n_boot=n_boot, seed=seed, n_jobs=n_jobs)
        rows = list(_prediction_rows(data, result))
        for row, breakdown in zip(rows, mse_result.breakdowns):
            row["mse"] = breakdown.total
        _write_rows(
            rows, ["area_id", "D", "h", "x_beta", "eblup", "y_scale", "mse"], output_path
        )
        if details_path is not None:
            detail = {
                "n_boot": mse_result.n_boot,
                "n_used": mse_result.n_used,
                "n_failed": mse_result.n_failed,
                "unreliable": mse_result.unreliable,
                "breakdowns": [vars(b) | {"area_id": str(b.area_id)} for b in mse_result.breakdowns],
            }
            with open(details_path, "w", encoding="utf-8") as fh:
                json.dump(detail, fh, indent=2, sort_keys=True)
                fh.write("\n")


_STUDIES = {
    "estimation": run_estimation_study,
    "true-mse": run_true_mse_study,
    "mse-estimator": run_mse_estimator_study,
    "zero-sweep": run_zero_estimate_sweep,
}


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", "n_jobs", type=int, default=1, show_default=True)
def simulate(scenario_path, output_dir, n_jobs):
    """Run a Monte Carlo study described by a scenario JSON file."""
    with _mapped_errors():
        try:
            raw = json.loads(Path(scenario_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ParseError(f"scenario file is not valid JSON: {err}") from None
        if not isinstance(raw, dict) or "study" not in raw:
            raise ParseError("scenario file must be a JSON object with a 'study' key")
        study = raw.pop("study")
        if study not in _STUDIES:
            raise ParseError(f"unknown study {study!r}; choose from {sorted(_STUDIES)}")
        extra = {}
        if study == "zero-sweep" and "lambda_grid" in raw:
            extra["lambda_grid"] = tuple(raw.pop("lambda_grid"))
        cfg = ScenarioConfig.from_dict(raw)
        report = _STUDIES[study](cfg, n_jobs=n_jobs, **extra)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = report_filename(study, cfg.pattern_label, cfg.lam, suffix="")[:-1]
        report.to_csv(out / f"{stem}.csv")
        report.to_json(out / f"{stem}.json")
        click.echo(str(out / f"{stem}.csv"))


@main.command("estimate-d")
@click.option("--input", "panels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "current_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--estimator", type=click.Choice(["pr", "fh", "ml", "reml"]), default="reml", show_default=True)
@click.option("--fixed-lambda", type=float, default=None)
@click.option("--add-intercept", is_flag=True)
@click.option("--tol", type=float, default=1e-4, show_default=True)
@click.option("--max-iterations", type=int, default=50, show_default=True)
@click.option("--details", "details_path", type=click.Path(dir_okay=False), default=None)
def estimate_d(
    panels_path,
    current_path,
    output_path,
    estimator,
    fixed_lambda,
    add_intercept,
    tol,
    max_iterations,
    details_path,
):
    """Estimate per-area sampling variances from historical panels."""
    with _mapped_errors():
        panels = read_panels_csv(panels_path)
        ids, y, x = read_current_csv(current_path, add_intercept=add_intercept)
        panel_ids = [str(p.area_id) for p in panels]
        if panel_ids != [str(i) for i in ids]:
            raise DataError("panel areas and current-data areas do not match")
        result = estimate_sampling_variances(
            panels,
            y,
            x,
            method=estimator,
            fixed_lambda=fixed_lambda,
            tol=tol,
            max_iterations=max_iterations,
        )
        _write_rows(
            [
                {"area_id": pid, "D": float(dv)}
                for pid, dv in zip(ids, result.sampling_var)
            ],
            ["area_id", "D"],
            output_path,
        )
        if details_path is not None:
            detail = {
                "sampling_var": [float(v) for v in result.sampling_var],
                "lambda_trace": list(result.lambda_trace),
                "iterations": result.iterations,
                "converged": result.converged,
                "mean_abs_correlation": result.mean_abs_correlation,
                "correlation_matrix": (
                    None
                    if result.correlation_matrix is None
                    else np.asarray(result.correlation_matrix).tolist()
                ),
            }
            with open(details_path, "w", encoding="utf-8") as fh:
                json.dump(detail, fh, indent=2, sort_keys=True)
                fh.write("\n")
        if not result.converged:
            click.echo("variance iteration hit max-iterations without settling", err=True)
            sys.exit(_EXIT_SOLVER)


if __name__ == "__main__":
    main()
