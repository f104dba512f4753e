"""Flat-file formats.

Dataset CSV (fitting input): header ``area_id,y,D,x1,...,xp``, UTF-8,
'.' decimal.  Panel CSV (variance estimation input): long format
``area_id,t,y``.  Dataset CSVs round-trip exactly (full-precision floats);
report CSVs print 6 significant digits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict

import numpy as np

from .estimator import FitResult
from .exceptions import ParseError
from .model import AreaData
from .panels import HistoricalPanel


def _parse_float(value: str, line: int, column: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParseError(f"line {line}: column {column!r} is not a number: {value!r}") from None


def _read_rows(path) -> tuple[list[str], list[tuple[int, dict]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("line 1: missing header row")
        header = [name.strip() for name in reader.fieldnames]
        rows = []
        for i, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise ParseError(f"line {i}: wrong number of fields")
            rows.append((i, {k.strip(): v for k, v in row.items()}))
    if not rows:
        raise ParseError("file has a header but no data rows")
    return header, rows


def read_dataset_csv(path, add_intercept: bool = False) -> AreaData:
    """Load a fitting dataset; covariate columns are everything beyond
    ``area_id,y,D`` in header order."""
    header, rows = _read_rows(path)
    required = ["area_id", "y", "D"]
    if header[: len(required)] != required:
        raise ParseError(
            f"line 1: header must start with {','.join(required)}, got {','.join(header)}"
        )
    x_cols = header[len(required) :]
    if not x_cols and not add_intercept:
        raise ParseError(
            "no covariate columns found; pass add_intercept to fit a mean-only model"
        )
    ids, y, d, x = [], [], [], []
    for line, row in rows:
        ids.append(row["area_id"])
        y.append(_parse_float(row["y"], line, "y"))
        d.append(_parse_float(row["D"], line, "D"))
        x.append([_parse_float(row[c], line, c) for c in x_cols])
    x_arr = np.asarray(x, dtype=float) if x_cols else np.empty((len(y), 0))
    if add_intercept:
        x_arr = np.column_stack([np.ones(len(y)), x_arr])
    return AreaData(y, x_arr, d, area_id=np.asarray(ids, dtype=object))


def write_dataset_csv(data: AreaData, path) -> None:
    """Write a dataset in the fitting format with full float precision so
    that read-after-write reproduces it exactly."""
    x_cols = [f"x{j + 1}" for j in range(data.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["area_id", "y", "D", *x_cols])
        for i in range(data.m):
            writer.writerow(
                [
                    data.area_id[i],
                    repr(float(data.y[i])),
                    repr(float(data.sampling_var[i])),
                    *(repr(float(v)) for v in data.x[i]),
                ]
            )


def read_panels_csv(path) -> list[HistoricalPanel]:
    """Load historical panels from long format ``area_id,t,y``; rows are
    ordered by ``t`` within each area, areas by first appearance."""
    header, rows = _read_rows(path)
    if header != ["area_id", "t", "y"]:
        raise ParseError(f"line 1: header must be area_id,t,y, got {','.join(header)}")
    series: dict[str, list[tuple[float, float]]] = {}
    order: list[str] = []
    for line, row in rows:
        area = row["area_id"]
        if area not in series:
            series[area] = []
            order.append(area)
        series[area].append(
            (_parse_float(row["t"], line, "t"), _parse_float(row["y"], line, "y"))
        )
    panels = []
    for area in order:
        entries = sorted(series[area], key=lambda pair: pair[0])
        panels.append(HistoricalPanel(area, [y for _, y in entries]))
    return panels


def read_current_csv(path, add_intercept: bool = False):
    """Load current-period data for variance estimation: header
    ``area_id,y[,x1,...,xp]`` (no D column)."""
    header, rows = _read_rows(path)
    required = ["area_id", "y"]
    if header[: len(required)] != required:
        raise ParseError(f"line 1: header must start with area_id,y, got {','.join(header)}")
    x_cols = header[len(required) :]
    if not x_cols and not add_intercept:
        raise ParseError(
            "no covariate columns found; pass add_intercept to fit a mean-only model"
        )
    ids, y, x = [], [], []
    for line, row in rows:
        ids.append(row["area_id"])
        y.append(_parse_float(row["y"], line, "y"))
        x.append([_parse_float(row[c], line, c) for c in x_cols])
    x_arr = np.asarray(x, dtype=float) if x_cols else np.empty((len(y), 0))
    if add_intercept:
        x_arr = np.column_stack([np.ones(len(y)), x_arr])
    return np.asarray(ids, dtype=object), np.asarray(y, dtype=float), x_arr


def fit_result_to_dict(fit: FitResult) -> dict:
    a = fit.re_var_estimate
    return {
        "transform": fit.transform_kind,
        "lambda": fit.lam,
        "re_var": fit.re_var,
        "beta": [float(b) for b in fit.beta],
        "method": fit.method,
        "re_var_estimate": asdict(a),
        "lambda_residual": fit.lambda_residual,
        "outer_iterations": fit.outer_iterations,
        "converged": fit.converged,
        "score_grid": (
            None
            if fit.score_grid is None
            else [[float(l), float(f)] for l, f in fit.score_grid]
        ),
    }


def write_fit_json(fit: FitResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_result_to_dict(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")
