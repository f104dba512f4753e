"""Area-level mixed model on the transformed scale.

The observation model is ``h(y_i, lam) = x_i' beta + v_i + e_i`` with
``v_i ~ N(0, A)`` (A the common random-effect variance), ``e_i ~ N(0, D_i)``
with known per-area sampling variances, all effects mutually independent.
This module holds the data container, the GLS regression, the profile
log-likelihood and its derivative in the transformation parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .transforms import Transform
from .validation import (
    check_design,
    check_direct_estimates,
    check_sampling_variances,
    rank_deficient_columns,
)


@dataclass(frozen=True, eq=False)
class AreaData:
    """Immutable per-area survey data.

    Attributes
    ----------
    y : (m,) array
        Positive direct estimates on the original scale.
    x : (m, p) array
        Covariates (first column is the intercept when one is used).
    sampling_var : (m,) array
        Known sampling variances on the transformed scale.
    area_id : (m,) sequence
        Opaque area labels; defaults to 0..m-1.
    """

    y: np.ndarray
    x: np.ndarray
    sampling_var: np.ndarray
    area_id: np.ndarray | None = None

    def __post_init__(self):
        y = check_direct_estimates(self.y)
        x = check_design(self.x, y.size)
        d = check_sampling_variances(self.sampling_var, y.size)
        ids = self.area_id
        ids = np.arange(y.size) if ids is None else np.asarray(ids)
        if ids.shape != (y.size,):
            raise DataError(f"area_id must have shape ({y.size},)")
        for arr in (y, x, d):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sampling_var", d)
        object.__setattr__(self, "area_id", ids)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def sampling_var_spread(self) -> float:
        """max(D)/min(D), a diagnostic for how unbalanced the variances are."""
        return float(self.sampling_var.max() / self.sampling_var.min())

    def with_y(self, new_y) -> "AreaData":
        """Same areas and design, new direct estimates (bootstrap samples)."""
        return AreaData(new_y, self.x, self.sampling_var, self.area_id)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameter triple (regression coefficients, random-effect variance,
    transformation)."""

    beta: np.ndarray
    re_var: float
    transform: Transform

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise DataError("beta must be a finite 1-d coefficient vector")
        if not np.isfinite(self.re_var) or self.re_var < 0.0:
            raise DataError("random-effect variance must be non-negative")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "re_var", float(self.re_var))

    @property
    def lam(self) -> float:
        return self.transform.lam


def weighted_beta(h: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve the weighted normal equations ``(x' W x) b = x' W h``.

    Uses a scalar path for p=1 and a stable p-by-p linear solve otherwise
    (never an explicit inverse).
    """
    if x.shape[1] == 1:
        col = x[:, 0]
        wc = w * col
        denom = wc @ col
        if denom <= 0.0 or not np.isfinite(denom):
            raise DataError("degenerate single-column design")
        return np.array([wc @ h / denom])
    mat = (x * w[:, None]).T @ x
    rhs = x.T @ (w * h)
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        offending = rank_deficient_columns(x)
        raise DataError(
            f"singular weighted normal equations; offending columns: {offending}"
        ) from None


def gls_beta(data: AreaData, re_var: float, transform: Transform) -> np.ndarray:
    """GLS estimate of the regression coefficients at fixed variance and
    transformation: weights ``1/(A + D_j)`` applied to ``h(y_j, lam)``."""
    if re_var < 0.0:
        raise ValueError("re_var must be non-negative")
    h = transform.forward(data.y)
    w = 1.0 / (re_var + data.sampling_var)
    return weighted_beta(h, data.x, w)


def log_likelihood(data: AreaData, params: ModelParams) -> float:
    """Profile log-likelihood of the transformed model (additive constant
    ``-(m/2) log(2*pi)`` dropped).

    Consists of the Gaussian log-density of ``h(y, lam)`` under
    ``N(x beta, A + D)`` plus the Jacobian term ``sum(log h_y)``.
    """
    d = params.transform.derivatives(data.y)
    v = params.re_var + data.sampling_var
    resid = d.h - data.x @ params.beta
    return float(
        -0.5 * np.log(v).sum() - 0.5 * ((resid * resid) / v).sum() + np.log(d.h_y).sum()
    )


def score_lambda(data: AreaData, params: ModelParams) -> float:
    """Derivative of :func:`log_likelihood` in the transformation parameter
    at fixed (beta, A):

    ``sum(h_ylam/h_y) - sum((h - x beta) * h_lam / (A + D))``.

    Only defined for the dual power family; the log transform has no
    transformation parameter.
    """
    if params.transform.kind != "dual-power":
        raise ValueError("score_lambda requires the dual power transform")
    d = params.transform.derivatives(data.y)
    v = params.re_var + data.sampling_var
    resid = d.h - data.x @ params.beta
    return float((d.h_y_lambda / d.h_y).sum() - ((resid / v) * d.h_lambda).sum())
