"""Input validation helpers shared by the data container, the sklearn-style
estimator and the CLI loaders."""

from __future__ import annotations

import numpy as np
from scipy.linalg import qr

from .exceptions import DataError


def check_direct_estimates(y) -> np.ndarray:
    y = np.array(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise DataError("y must be a non-empty 1-d array of direct estimates")
    if not np.all(np.isfinite(y)):
        raise DataError("y contains non-finite values")
    if np.any(y <= 0.0):
        bad = np.flatnonzero(y <= 0.0)
        raise DataError(f"direct estimates must be positive; offending rows: {bad.tolist()}")
    return y


def check_sampling_variances(d, m: int) -> np.ndarray:
    d = np.array(d, dtype=float)
    if d.shape != (m,):
        raise DataError(f"sampling variances must have shape ({m},), got {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise DataError("sampling variances must be positive and finite")
    return d


def check_design(x, m: int) -> np.ndarray:
    x = np.array(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != m:
        raise DataError(f"design matrix must have {m} rows, got shape {x.shape}")
    if x.shape[1] == 0:
        raise DataError("design matrix needs at least one column (use add_intercept)")
    if not np.all(np.isfinite(x)):
        raise DataError("design matrix contains non-finite values")
    if m <= x.shape[1]:
        raise DataError(
            f"need more areas than covariates (m={m}, p={x.shape[1]})"
        )
    rank_deficient_columns(x, raise_on_deficiency=True)
    return x


def rank_deficient_columns(x: np.ndarray, raise_on_deficiency: bool = False) -> list[int]:
    """Columns that a pivoted QR identifies as linearly dependent."""
    p = x.shape[1]
    if p == 1:
        offending = [] if float(x[:, 0] @ x[:, 0]) > 0.0 else [0]
        rank = 1 - len(offending)
    else:
        r, piv = qr(x, mode="r", pivoting=True)
        r_diag = np.abs(np.diag(r)[:p])
        tol = max(x.shape) * np.finfo(float).eps * (r_diag.max() if r_diag.size else 0.0)
        rank = int(np.sum(r_diag > tol))
        offending = sorted(int(c) for c in piv[rank:]) if rank < p else []
    if offending and raise_on_deficiency:
        raise DataError(
            f"design matrix is rank deficient (rank {rank} < {p}); "
            f"offending columns: {offending}"
        )
    return offending


def check_method(method: str) -> str:
    method = str(method).lower()
    if method not in ("pr", "fh", "ml", "reml"):
        raise ValueError(f"method must be one of pr/fh/ml/reml, got {method!r}")
    return method
