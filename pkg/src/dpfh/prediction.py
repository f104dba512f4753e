"""Best predictor, BLUP and EBLUP of the area means on the transformed scale.

The estimand per area is ``eta_i = x_i' beta + v_i``, the conditional mean
of the transformed observation given the random effect.  The predictor is
the convex combination ``x'beta + gamma * (h(y, lam) - x'beta)`` with
shrinkage weight ``gamma = A / (A + D_i)``; plugging in the fitted
parameters yields the EBLUP.  Back-transformed values are the plain
inverse image of ``eta_hat`` (no retransformation-bias correction: the
estimand lives on the transformed scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import FitResult
from .exceptions import SolverError
from .model import AreaData, ModelParams


@dataclass(frozen=True)
class Prediction:
    """EBLUP record for one area."""

    area_id: object
    eta_hat: float
    shrinkage_weight: float
    y_scale_value: float


def best_predictor(y, x, sampling_var, params: ModelParams):
    """Best predictor of the area mean at known parameters.

    Accepts a single area (scalar ``y``, 1-d ``x``) or a batch
    (array ``y``, 2-d ``x``); returns matching shape.
    """
    scalar = np.ndim(y) == 0
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    x_arr = np.asarray(x, dtype=float)
    if x_arr.ndim == 1:
        x_arr = x_arr[None, :] if scalar else x_arr[:, None]
    d_arr = np.atleast_1d(np.asarray(sampling_var, dtype=float))
    h = params.transform.forward(y_arr)
    mu = x_arr @ params.beta
    gamma = params.re_var / (params.re_var + d_arr)
    eta = mu + gamma * (h - mu)
    return float(eta[0]) if scalar else eta


def eblup(data: AreaData, fit: FitResult) -> list[Prediction]:
    """EBLUP for every area of a converged fit, with shrinkage weights and
    back-transformed values."""
    if not fit.converged:
        raise SolverError("cannot predict from a non-converged fit")
    params = fit.params
    t = params.transform
    h = t.forward(data.y)
    mu = data.x @ params.beta
    gamma = params.re_var / (params.re_var + data.sampling_var)
    eta = mu + gamma * (h - mu)
    y_scale = t.inverse(eta)
    return [
        Prediction(area, float(e), float(g), float(ys))
        for area, e, g, ys in zip(data.area_id, eta, gamma, y_scale)
    ]
