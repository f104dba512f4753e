"""Iterative estimation of sampling variances from historical panels.

The model treats the per-area sampling variances as known on the
*transformed* scale, which is circular when they must themselves be
estimated from past observations: the transformation parameter depends on
the variances and vice versa.  The fixed-point iteration here starts from
log-scale sample variances, fits the transformation, recomputes the
variances of the transformed histories at the fitted parameter, and
repeats until the variances settle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import fit_model
from .exceptions import DataError, SolverError
from .model import AreaData
from .transforms import DualPowerTransform, LogTransform


@dataclass(frozen=True)
class HistoricalPanel:
    """Past observations of one area's direct estimate (same season each
    period, at least three periods, all positive)."""

    area_id: object
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise DataError(
                f"panel for area {self.area_id!r} needs at least 3 observations"
            )
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise DataError(f"panel for area {self.area_id!r} must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SamplingVarianceResult:
    """Converged (or last-iterate) sampling variances with the fitted
    transformation trace and a between-area correlation diagnostic."""

    sampling_var: np.ndarray
    lambda_trace: tuple[float, ...]
    iterations: int
    converged: bool
    correlation_matrix: np.ndarray | None
    mean_abs_correlation: float | None


def _panel_variances(panels, transform) -> np.ndarray:
    out = np.empty(len(panels))
    for i, panel in enumerate(panels):
        out[i] = np.var(transform.forward(panel.values), ddof=1)
        if out[i] <= 0.0:
            raise DataError(
                f"zero-variance history for area {panel.area_id!r}; "
                "cannot estimate its sampling variance"
            )
    return out


def _correlation_diagnostic(panels, transform):
    lengths = {panel.values.size for panel in panels}
    if len(lengths) != 1 or len(panels) < 2:
        return None, None
    h = np.column_stack([transform.forward(panel.values) for panel in panels])
    corr = np.corrcoef(h, rowvar=False)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    return corr, float(np.mean(np.abs(off)))


def estimate_sampling_variances(
    panels: list[HistoricalPanel],
    y,
    x,
    *,
    method: str = "reml",
    fixed_lambda: float | None = None,
    tol: float = 1e-4,
    max_iterations: int = 50,
    lambda_max: float = 10.0,
) -> SamplingVarianceResult:
    """Alternate between fitting the transformation on current data and
    recomputing per-area variances of the transformed histories.

    Parameters
    ----------
    panels : list of HistoricalPanel
        One panel per area, aligned with ``y``/``x`` row order.
    y, x : current-period direct estimates and covariates.
    fixed_lambda : float, optional
        Skip the transformation fit and use this value in every step
        (a single step then reproduces its own variances exactly).
    tol : float
        Stop when the largest relative change of any variance falls
        below this.

    Returns
    -------
    SamplingVarianceResult
        ``converged=False`` flags hitting ``max_iterations``; the last
        iterate is still returned.
    """
    if not panels:
        raise DataError("need at least one panel")
    d_current = _panel_variances(panels, LogTransform())
    trace: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        data = AreaData(y, x, d_current, area_id=[p.area_id for p in panels])
        fit = fit_model(
            data,
            method=method,
            transform="dual-power",
            fixed_lambda=fixed_lambda,
            lambda_max=lambda_max,
        )
        if not fit.converged:
            raise SolverError(
                f"transformation fit failed at variance iteration {iterations}",
                diagnostics={"iteration": iterations, "sampling_var": d_current.tolist()},
            )
        lam = fit.lam
        trace.append(lam)
        d_next = _panel_variances(panels, DualPowerTransform(lam))
        change = float(np.max(np.abs(d_next - d_current) / d_current))
        d_current = d_next
        if change < tol:
            converged = True
            break
    transform = DualPowerTransform(trace[-1])
    corr, mean_abs = _correlation_diagnostic(panels, transform)
    return SamplingVarianceResult(
        sampling_var=d_current,
        lambda_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
        correlation_matrix=corr,
        mean_abs_correlation=mean_abs,
    )
