"""Joint estimation of (lambda, A, beta) and the sklearn-style front end.

The transformation parameter solves the profiled score equation
``F(lam, A_hat(lam), beta_hat(lam)) = 0``: for each candidate ``lam`` the
variance is estimated by the chosen method, the coefficients by GLS, and
the likelihood derivative in ``lam`` is evaluated at those plug-ins.  The
solver brackets sign changes of the profile score on a geometric grid and
refines them with Brent iteration; among multiple roots (and the ``lam=0``
boundary, which is always a stationary point because the transform family
is even in ``lam``) the one with the highest profile log-likelihood wins.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning

from .exceptions import SolverError
from .model import AreaData, ModelParams, weighted_beta
from .transforms import LAMBDA_MAX, DualPowerTransform, LogTransform
from .validation import check_method
from .variance import MAX_SOLVER_ITERATIONS, VarianceEstimate, estimate_re_variance_from_h

#: Root certificate: a converged fit satisfies |F(lam_hat)| < TOL_LAMBDA * m.
TOL_LAMBDA = 1e-8
#: The score search runs on [LAMBDA_FLOOR, lambda_max]; the lam = 0 boundary
#: (the log member of the family) is checked separately by likelihood.
LAMBDA_FLOOR = 0.01
GRID_POINTS = 21


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted parameters plus solver diagnostics.

    ``lambda_residual`` is |F| at the solution; log fits and fixed-lambda
    fits report 0.0 by convention (no score equation was solved).  A
    non-converged search carries the evaluated ``(lam, F)`` grid in
    ``score_grid`` and best-effort parameters.
    """

    params: ModelParams
    method: str
    re_var_estimate: VarianceEstimate
    lambda_residual: float
    outer_iterations: int
    converged: bool
    score_grid: tuple[tuple[float, float], ...] | None = None

    @property
    def transform_kind(self) -> str:
        return self.params.transform.kind

    @property
    def lam(self) -> float:
        return self.params.lam

    @property
    def re_var(self) -> float:
        return self.params.re_var

    @property
    def beta(self) -> np.ndarray:
        return self.params.beta


@dataclass(frozen=True, eq=False)
class _ProfilePoint:
    lam: float
    score: float
    a_estimate: VarianceEstimate
    beta: np.ndarray
    loglik: float


def _profile(data: AreaData, lam: float, method: str) -> _ProfilePoint:
    t = DualPowerTransform(lam)
    der = t.derivatives(data.y)
    a_est = estimate_re_variance_from_h(der.h, data.x, data.sampling_var, method)
    v = a_est.value + data.sampling_var
    w = 1.0 / v
    beta = weighted_beta(der.h, data.x, w)
    resid = der.h - data.x @ beta
    score = (der.h_y_lambda / der.h_y).sum() - ((resid * w) * der.h_lambda).sum()
    loglik = (
        -0.5 * np.log(v).sum() - 0.5 * ((resid * resid) * w).sum() + np.log(der.h_y).sum()
    )
    return _ProfilePoint(lam, float(score), a_est, beta, float(loglik))


def profile_score(
    data: AreaData, lam: float, method: str
) -> tuple[float, VarianceEstimate, np.ndarray]:
    """Profiled score at ``lam``: F value, variance estimate at ``lam``
    and the GLS coefficients at ``(A_hat(lam), lam)``."""
    method = check_method(method)
    try:
        pt = _profile(data, lam, method)
    except SolverError as err:
        raise SolverError(
            f"inner variance solve failed at lam={lam:g}: {err}",
            diagnostics={"lam": lam, **err.diagnostics},
        ) from err
    return pt.score, pt.a_estimate, pt.beta


def _fit_log(data: AreaData, method: str) -> FitResult:
    t = LogTransform()
    h = t.forward(data.y)
    a_est = estimate_re_variance_from_h(h, data.x, data.sampling_var, method)
    beta = weighted_beta(h, data.x, 1.0 / (a_est.value + data.sampling_var))
    params = ModelParams(beta, a_est.value, t)
    return FitResult(params, method, a_est, 0.0, 0, True)


def fit_model(
    data: AreaData,
    method: str = "reml",
    transform: str = "dual-power",
    *,
    fixed_lambda: float | None = None,
    lambda_max: float = LAMBDA_MAX,
) -> FitResult:
    """Fit the transformed area-level model.

    Parameters
    ----------
    data : AreaData
    method : {"pr", "fh", "ml", "reml"}
        Estimator of the random-effect variance.
    transform : {"dual-power", "log"}
        Model family.  The log model has no transformation parameter.
    fixed_lambda : float, optional
        Skip the score search and fit at this transformation parameter.
    lambda_max : float
        Upper end of the search interval.

    Returns
    -------
    FitResult
        ``converged=False`` (never an exception) when the profile score
        has no sign change on the search grid.
    """
    method = check_method(method)
    kind = transform.lower().replace("_", "-")
    if kind == "log":
        if fixed_lambda is not None:
            raise ValueError("log transform has no transformation parameter")
        return _fit_log(data, method)
    if kind not in ("dual-power", "dp"):
        raise ValueError(f"unknown transform {transform!r}")

    if fixed_lambda is not None:
        if not 0.0 <= fixed_lambda <= lambda_max:
            raise ValueError(f"fixed_lambda must lie in [0, {lambda_max}]")
        pt = _profile(data, fixed_lambda, method)
        params = ModelParams(pt.beta, pt.a_estimate.value, DualPowerTransform(pt.lam))
        return FitResult(params, method, pt.a_estimate, 0.0, 1, True)

    evals = 0

    def profile_at(lam: float) -> _ProfilePoint:
        nonlocal evals
        evals += 1
        return _profile(data, lam, method)

    # Expanding geometric grid: the base resolution, then a 4x refinement
    # if no sign change was seen.
    pts: list[_ProfilePoint] = []
    grid = np.array([])
    for n_grid in (GRID_POINTS, 4 * GRID_POINTS + 1):
        grid = np.geomspace(LAMBDA_FLOOR, lambda_max, n_grid)
        pts = [profile_at(lam) for lam in grid]
        scores = np.array([p.score for p in pts])
        zero_hits = [i for i in range(n_grid) if scores[i] == 0.0]
        brackets = [
            (grid[i], grid[i + 1])
            for i in range(n_grid - 1)
            if scores[i] * scores[i + 1] < 0.0
        ]
        if brackets or zero_hits:
            break

    candidates: list[_ProfilePoint] = []
    for lo, hi in brackets:
        root = brentq(
            lambda lam: profile_at(lam).score,
            lo,
            hi,
            xtol=1e-10,
            rtol=1e-14,
            maxiter=MAX_SOLVER_ITERATIONS,
        )
        candidates.append(profile_at(float(root)))
    candidates.extend(pts[i] for i in zero_hits)
    if pts[0].score < 0.0:
        # Profile likelihood decreasing at the floor: the lam = 0 boundary
        # (log member) is a local maximum and competes by likelihood.
        candidates.append(profile_at(0.0))

    if not candidates:
        fallback = max(pts, key=lambda p: p.loglik)
        params = ModelParams(
            fallback.beta, fallback.a_estimate.value, DualPowerTransform(fallback.lam)
        )
        return FitResult(
            params,
            method,
            fallback.a_estimate,
            abs(fallback.score),
            evals,
            False,
            score_grid=tuple((float(g), p.score) for g, p in zip(grid, pts)),
        )

    best = max(candidates, key=lambda p: p.loglik)
    residual = abs(best.score)
    converged = residual < TOL_LAMBDA * data.m
    params = ModelParams(best.beta, best.a_estimate.value, DualPowerTransform(best.lam))
    return FitResult(params, method, best.a_estimate, residual, evals, converged)


class TransformedFayHerriot(BaseEstimator):
    """Area-level shrinkage estimator on an estimated power-transformed scale.

    Implements the usual fit/predict surface: ``fit(X, y, D)`` estimates
    ``(lambda, A, beta)`` jointly, ``predict()`` returns the empirical best
    linear unbiased predictor of ``x'beta + v`` for the fitted areas (or
    for new areas when ``X, y, D`` are passed), and
    :meth:`estimate_mse` attaches parametric-bootstrap prediction-error
    estimates.

    Parameters
    ----------
    method : {"reml", "ml", "fh", "pr"}, default "reml"
        Random-effect variance estimator.
    transform : {"dual-power", "log"}, default "dual-power"
    fixed_lambda : float, optional
        Fit at a known transformation parameter instead of estimating it.
    lambda_max : float, default 10.0
    add_intercept : bool, default False
        Prepend a constant column to X.

    Attributes
    ----------
    result_ : FitResult
    lambda_ : float
    re_var_ : float
    beta_ : ndarray of shape (p,)
    """

    def __init__(
        self,
        method: str = "reml",
        transform: str = "dual-power",
        fixed_lambda: float | None = None,
        lambda_max: float = LAMBDA_MAX,
        add_intercept: bool = False,
    ):
        self.method = method
        self.transform = transform
        self.fixed_lambda = fixed_lambda
        self.lambda_max = lambda_max
        self.add_intercept = add_intercept

    def _build_data(self, X, y, D) -> AreaData:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.add_intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return AreaData(y, X, D)

    def fit(self, X, y, D):
        """Fit the model to areas with direct estimates ``y``, covariates
        ``X`` and known sampling variances ``D``."""
        data = self._build_data(X, y, D)
        result = fit_model(
            data,
            method=self.method,
            transform=self.transform,
            fixed_lambda=self.fixed_lambda,
            lambda_max=self.lambda_max,
        )
        if not result.converged:
            warnings.warn(
                "profile score had no root on the search grid; "
                "result_ holds best-effort parameters",
                ConvergenceWarning,
                stacklevel=2,
            )
        self._train_data = data
        self.result_ = result
        self.lambda_ = result.lam
        self.re_var_ = result.re_var
        self.beta_ = result.beta
        self.n_features_in_ = data.p
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise AttributeError("estimator is not fitted; call fit first")

    def predict(self, X=None, y=None, D=None, original_scale: bool = False):
        """EBLUP of the area means on the transformed scale (or mapped back
        through the inverse transform when ``original_scale=True``).

        With no arguments, predicts for the training areas; otherwise all
        three of ``X, y, D`` must describe the new areas.
        """
        from .prediction import best_predictor, eblup

        self._check_fitted()
        given = [arg is not None for arg in (X, y, D)]
        if any(given) and not all(given):
            raise ValueError("pass all of X, y, D or none of them")
        if not any(given):
            preds = eblup(self._train_data, self.result_)
            eta = np.array([p.eta_hat for p in preds])
            y_scale = np.array([p.y_scale_value for p in preds])
            return y_scale if original_scale else eta
        if not self.result_.converged:
            raise SolverError("cannot predict from a non-converged fit")
        data = self._build_data(X, y, D)
        eta = best_predictor(data.y, data.x, data.sampling_var, self.result_.params)
        if original_scale:
            return self.result_.params.transform.inverse(eta)
        return eta

    def estimate_mse(self, n_boot: int = 1000, seed: int = 0, n_jobs: int = 1):
        """Parametric-bootstrap prediction-error estimates for the training
        areas (see :func:`dpfh.mse.estimate_mse`)."""
        from .mse import estimate_mse

        self._check_fitted()
        return estimate_mse(
            self._train_data, self.result_, n_boot=n_boot, seed=seed, n_jobs=n_jobs
        )
