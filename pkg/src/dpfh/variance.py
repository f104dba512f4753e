"""Estimators of the random-effect variance at a fixed transformation.

Four classical estimators are provided: the Prasad-Rao moment estimator
(closed form), the Fay-Herriot moment estimator, maximum likelihood and
restricted maximum likelihood (each the root of its estimating equation).
All four are truncated at zero with an observable flag, since zero
estimates over-shrink the predictor and their frequency is a quantity of
interest in its own right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import SolverError
from .model import AreaData, ModelParams, weighted_beta
from .quad import normal_rule
from .transforms import Transform
from .validation import check_method

#: Estimating-equation residual certificate: a root-based estimate must
#: satisfy |G(A)| < TOL_A * m unless it was truncated at zero.
TOL_A = 1e-8
MAX_SOLVER_ITERATIONS = 200

METHODS = ("pr", "fh", "ml", "reml")


@dataclass(frozen=True)
class VarianceEstimate:
    """A random-effect variance estimate plus solver diagnostics.

    ``residual`` is the absolute estimating-equation value at the returned
    point (0 for the closed-form Prasad-Rao estimator).
    """

    value: float
    truncated_at_zero: bool
    iterations: int
    residual: float


def _ols_beta(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(x, h, rcond=None)[0]


def _hat_diagonal(x: np.ndarray) -> np.ndarray:
    q = np.linalg.qr(x, mode="reduced")[0]
    return np.einsum("ij,ij->i", q, q)


def _prasad_rao(h: np.ndarray, x: np.ndarray, d: np.ndarray) -> VarianceEstimate:
    m, p = x.shape
    resid = h - x @ _ols_beta(h, x)
    raw = (resid @ resid - (d * (1.0 - _hat_diagonal(x))).sum()) / (m - p)
    return VarianceEstimate(max(raw, 0.0), raw < 0.0, 0, 0.0)


def _make_equation(h: np.ndarray, x: np.ndarray, d: np.ndarray, method: str):
    """Estimating-equation closure G(A) = LHS - RHS; its root is the estimate.

    Built once per solve so that data-dependent constants are hoisted out
    of the Brent iteration (this sits on the innermost hot path of every
    fit and bootstrap replicate).
    """
    m, p = x.shape
    if p == 1:
        col = x[:, 0]
        col2 = col * col
        colh = col * h

        def equation(a: float) -> float:
            w = 1.0 / (a + d)
            denom = w @ col2
            beta = (w @ colh) / denom
            resid = h - beta * col
            if method == "fh":
                return float(w @ (resid * resid) - (m - p))
            wr = w * resid
            lhs = wr @ wr
            if method == "ml":
                return float(lhs - w.sum())
            w2 = w * w
            return float(lhs - w.sum() + (w2 @ col2) / denom)

    else:

        def equation(a: float) -> float:
            w = 1.0 / (a + d)
            beta = weighted_beta(h, x, w)
            resid = h - x @ beta
            if method == "fh":
                return float(w @ (resid * resid) - (m - p))
            wr = w * resid
            lhs = wr @ wr
            if method == "ml":
                return float(lhs - w.sum())
            mat = (x * w[:, None]).T @ x
            quad = np.einsum("ij,ij->i", x, np.linalg.solve(mat, x.T).T)
            return float(lhs - w.sum() + (w * w) @ quad)

    return equation


def estimate_re_variance(
    data: AreaData, transform: Transform, method: str
) -> VarianceEstimate:
    """Estimate the random-effect variance for a fixed transformation.

    Root-based methods are solved by bracketed Brent iteration on
    ``[0, A_max]`` with ``A_max = 100 * var(h)``; a negative
    estimating-equation value at ``A = 0`` means the data show less
    dispersion than the sampling variances alone explain, and the
    estimate is truncated at zero.
    """
    method = check_method(method)
    h = transform.forward(data.y)
    return estimate_re_variance_from_h(h, data.x, data.sampling_var, method)


def estimate_re_variance_from_h(
    h: np.ndarray, x: np.ndarray, d: np.ndarray, method: str
) -> VarianceEstimate:
    """Same as :func:`estimate_re_variance` but on pre-transformed values
    (the profile-score hot path reuses h across solver iterations)."""
    if method == "pr":
        return _prasad_rao(h, x, d)

    equation = _make_equation(h, x, d, method)
    g0 = equation(0.0)
    if g0 <= 0.0:
        return VarianceEstimate(0.0, True, 0, abs(g0))
    mean = h.mean()
    a_max = max(100.0 * float(h @ h - h.size * mean * mean) / (h.size - 1), 1e-12)
    g_top = equation(a_max)
    if g_top > 0.0:
        raise SolverError(
            f"no sign change for {method} estimating equation on [0, {a_max:g}]",
            diagnostics={"a_max": a_max, "g_at_zero": g0, "g_at_a_max": g_top},
        )
    root, info = brentq(
        equation,
        0.0,
        a_max,
        xtol=1e-10,
        rtol=1e-14,
        maxiter=MAX_SOLVER_ITERATIONS,
        full_output=True,
    )
    residual = abs(equation(root))
    return VarianceEstimate(float(root), False, int(info.iterations), residual)


def asymptotic_variance(data: AreaData, re_var: float, method: str) -> float:
    """Large-m variance of the variance estimator, used by the third
    prediction-error term.

    ML/REML: ``2 / sum((A+D)^-2)``; FH: ``2m / (sum((A+D)^-1))^2``;
    PR: ``2 m^-2 sum((A+D)^2)``.  Exposed per method so a bootstrap
    variance can be swapped in by callers that prefer one.
    """
    method = check_method(method)
    v = re_var + data.sampling_var
    m = data.m
    if method in ("ml", "reml"):
        return float(2.0 / (v**-2).sum())
    if method == "fh":
        return float(2.0 * m / (v**-1).sum() ** 2)
    return float(2.0 * (v**2).sum() / m**2)


def expected_lambda_slope(
    data: AreaData, params: ModelParams, method: str, n_quad: int = 64
) -> float:
    """Leading term of ``E[dA_hat/dlam]``, the sensitivity of the variance
    estimator to the transformation parameter.

    Per area the building block is ``E[(h - x'beta) * h_lam]`` under
    ``h ~ N(x'beta, A + D)``, evaluated by Gauss-Hermite quadrature.  The
    method determines the weighting: ``(A+D)^-1`` for FH, ``(A+D)^-2``
    for ML/REML, a flat ``2/(m-p)`` sum for PR.  The factor 2 comes from
    differentiating the squared residuals in the estimating equation.
    """
    method = check_method(method)
    if params.transform.kind != "dual-power":
        raise ValueError("expected_lambda_slope requires the dual power transform")
    mu = data.x @ params.beta
    sd = np.sqrt(params.re_var + data.sampling_var)
    t, w = normal_rule(n_quad)
    z = mu[:, None] + sd[:, None] * t
    y = params.transform.inverse(z)
    h_lam = params.transform.derivatives(y).h_lambda
    per_area = ((z - mu[:, None]) * h_lam) @ w
    if method == "pr":
        return float(2.0 * per_area.sum() / (data.m - data.p))
    k = 1 if method == "fh" else 2
    wk = (params.re_var + data.sampling_var) ** -k
    return float(2.0 * (wk @ per_area) / wk.sum())
