"""Power transformations mapping positive data onto the whole real line.

The working family is ``h(y, lam) = (y**lam - y**(-lam)) / (2*lam)`` with
the log transform as its ``lam -> 0`` limit.  Unlike the Box-Cox family,
whose range is truncated at ``-1/lam`` and therefore cannot carry a
normal distribution, this family is a bijection from (0, inf) onto the
real line for every ``lam >= 0``, which is what makes maximum-likelihood
estimation of the transformation parameter well behaved.  Box-Cox is
deliberately not implemented here.

Everything in this module is a pure function of its inputs and accepts
scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quad import normal_rule

#: Below this value the dual power transformation is evaluated through its
#: analytic log-limit series; the closed forms degenerate to 0/0 at lam = 0.
LAMBDA_EPS = 1e-8

#: Admissible transformation parameters live in [0, LAMBDA_MAX].  The score
#: equation can be unbounded in pathological data, so the search space is
#: capped well above the empirically relevant range.
LAMBDA_MAX = 10.0


@dataclass(frozen=True)
class TransformDerivatives:
    """Transform value and the partial derivatives used by the score
    equation and the prediction-error expansion.

    ``d_score_term`` is ``d/dlam (h_ylam / h_y)``, the per-observation
    curvature of the Jacobian part of the log-likelihood.
    """

    h: np.ndarray | float
    h_y: np.ndarray | float
    h_lambda: np.ndarray | float
    h_lambda_lambda: np.ndarray | float
    h_y_lambda: np.ndarray | float
    d_score_term: np.ndarray | float


@dataclass(frozen=True)
class IntegrabilityReport:
    """Quadrature estimates of the four moment conditions required for
    consistent estimation of the transformation parameter."""

    h2_hlam2: float
    hlam2: float
    abs_hlamlam: float
    abs_d_score_term: float
    all_finite: bool


def _as_positive_array(y) -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("transform input must be finite")
    if np.any(arr <= 0.0):
        raise ValueError("transform input must be positive (y > 0)")
    return arr


def _maybe_scalar(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _odd_series(x2: np.ndarray, coeffs: tuple[float, ...]) -> np.ndarray:
    # Evaluate c0 + c1*x^2 + c2*x^4 + ... by Horner on x^2.
    out = np.full_like(x2, coeffs[-1])
    for c in coeffs[-2::-1]:
        out = out * x2 + c
    return out

# x*cosh(x) - sinh(x) = sum_{k>=1} 2k/(2k+1)! x^(2k+1); dividing by lam^3
# gives h_lambda/lam = u^3 * P(x^2) with these coefficients.
_SLOPE_COEFFS = (1.0 / 3.0, 1.0 / 30.0, 1.0 / 840.0, 1.0 / 45360.0, 1.0 / 3991680.0)
# h_lambda_lambda = u^3 * Q(x^2) near lam = 0 (same series differentiated).
_CURV_COEFFS = (1.0 / 3.0, 1.0 / 10.0, 1.0 / 168.0, 1.0 / 6480.0)


@dataclass(frozen=True)
class DualPowerTransform:
    """``h(y, lam) = sinh(lam * log y) / lam``, the log map at ``lam = 0``.

    Parameters
    ----------
    lam : float
        Transformation parameter, restricted to ``[0, LAMBDA_MAX]``.
    """

    lam: float

    kind = "dual-power"

    def __post_init__(self):
        lam = float(self.lam)
        if not np.isfinite(lam) or not 0.0 <= lam <= LAMBDA_MAX:
            raise ValueError(f"lam must lie in [0, {LAMBDA_MAX}], got {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    def forward(self, y):
        """Transform positive ``y`` onto the real line."""
        arr = _as_positive_array(y)
        u = np.log(arr)
        if self.lam <= LAMBDA_EPS:
            x = self.lam * u
            out = u * (1.0 + x * x / 6.0)
        else:
            out = np.sinh(self.lam * u) / self.lam
        return _maybe_scalar(out, np.ndim(y) == 0)

    def inverse(self, z):
        """Map a real ``z`` back to the positive half line.

        Evaluated as ``exp(asinh(lam*z)/lam)``, which never forms
        ``lam**2 * z**2`` explicitly and so stays finite for any ``z``
        whose image is representable.
        """
        arr = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("inverse transform input must be finite")
        if self.lam <= LAMBDA_EPS:
            out = np.exp(arr)
        else:
            out = np.exp(np.arcsinh(self.lam * arr) / self.lam)
        return _maybe_scalar(out, np.ndim(z) == 0)

    def derivatives(self, y) -> TransformDerivatives:
        """Value and partial derivatives at ``y``.

        The lambda-derivatives suffer catastrophic cancellation near
        ``lam*log(y) = 0`` in their closed forms, so they switch to series
        evaluation for ``|lam*log y| < 1/2`` (series truncation error there
        is below 1e-12 relative).
        """
        arr = _as_positive_array(y)
        scalar = np.ndim(y) == 0
        lam = self.lam
        u = np.log(arr)
        x = lam * u
        coshx = np.cosh(x)
        h_y = coshx / arr
        h_y_lambda = u * np.sinh(x) / arr
        d_score = (u / coshx) ** 2
        u3 = u**3

        if lam <= LAMBDA_EPS:
            h = u * (1.0 + x * x / 6.0)
            slope = u3 * _odd_series(x * x, _SLOPE_COEFFS)  # h_lambda / lam
            h_lambda = lam * slope
            h_ll = u3 * _odd_series(x * x, _CURV_COEFFS)
        else:
            h = np.sinh(x) / lam
            slope = np.where(
                np.abs(x) < 0.5,
                u3 * _odd_series(x * x, _SLOPE_COEFFS),
                (x * coshx - np.sinh(x)) / lam**3,
            )
            h_lambda = lam * slope
            h_ll = u * u * h - 2.0 * slope

        return TransformDerivatives(
            h=_maybe_scalar(h, scalar),
            h_y=_maybe_scalar(h_y, scalar),
            h_lambda=_maybe_scalar(h_lambda, scalar),
            h_lambda_lambda=_maybe_scalar(h_ll, scalar),
            h_y_lambda=_maybe_scalar(h_y_lambda, scalar),
            d_score_term=_maybe_scalar(d_score, scalar),
        )


@dataclass(frozen=True)
class LogTransform:
    """The log transformation.  It has no free parameter: the lambda
    derivatives are identically zero by convention."""

    kind = "log"
    lam = 0.0

    def forward(self, y):
        arr = _as_positive_array(y)
        return _maybe_scalar(np.log(arr), np.ndim(y) == 0)

    def inverse(self, z):
        arr = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("inverse transform input must be finite")
        return _maybe_scalar(np.exp(arr), np.ndim(z) == 0)

    def derivatives(self, y) -> TransformDerivatives:
        arr = _as_positive_array(y)
        scalar = np.ndim(y) == 0
        zero = np.zeros_like(arr)
        return TransformDerivatives(
            h=_maybe_scalar(np.log(arr), scalar),
            h_y=_maybe_scalar(1.0 / arr, scalar),
            h_lambda=_maybe_scalar(zero, scalar),
            h_lambda_lambda=_maybe_scalar(zero.copy(), scalar),
            h_y_lambda=_maybe_scalar(zero.copy(), scalar),
            d_score_term=_maybe_scalar(zero.copy(), scalar),
        )


Transform = DualPowerTransform | LogTransform


def make_transform(kind: str, lam: float | None = None) -> Transform:
    """Build a transform from CLI-style names (``"dual-power"``/``"dp"`` or
    ``"log"``)."""
    name = kind.lower().replace("_", "-")
    if name in ("dual-power", "dp"):
        if lam is None:
            raise ValueError("dual-power transform needs a lam value")
        return DualPowerTransform(lam)
    if name == "log":
        if lam not in (None, 0.0):
            raise ValueError("log transform has no transformation parameter")
        return LogTransform()
    raise ValueError(f"unknown transform kind {kind!r}")


def check_integrability(
    transform: Transform, mean: float, variance: float, n_quad: int = 64
) -> IntegrabilityReport:
    """Estimate the four moment conditions ``E[h^2 h_lam^2]``,
    ``E[h_lam^2]``, ``E[|h_lamlam|]`` and ``E[|d/dlam(h_ylam/h_y)|]``
    under ``h(Y, lam) ~ N(mean, variance)``.

    All four are finite for the dual power family and identically zero
    for the log transform.  Non-finite intermediates are reported via
    ``all_finite=False`` rather than raised.
    """
    if n_quad < 16:
        raise ValueError("n_quad must be at least 16")
    if variance <= 0:
        raise ValueError("variance must be positive")
    t, w = normal_rule(n_quad)
    z = mean + np.sqrt(variance) * t
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            y = transform.inverse(z)
            d = transform.derivatives(y)
            moments = (
                float(w @ (d.h**2 * d.h_lambda**2)),
                float(w @ d.h_lambda**2),
                float(w @ np.abs(d.h_lambda_lambda)),
                float(w @ np.abs(d.d_score_term)),
            )
    except (ValueError, FloatingPointError):
        moments = (np.nan, np.nan, np.nan, np.nan)
    finite = bool(np.all(np.isfinite(moments)))
    return IntegrabilityReport(*moments, all_finite=finite)
