"""Monte Carlo studies: parameter estimation, robustness to non-normal
random effects, true prediction error of the EBLUP versus the direct
predictor, accuracy of the bootstrap error estimator, and the frequency
of zero variance estimates across transformation strengths.

Replicates are independent tasks keyed by ``(seed, scenario_id,
replicate, role)`` streams and reduced in replicate order, so any report
is bit-identical at any worker count.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .estimator import fit_model
from .exceptions import DataError, SolverError
from .model import AreaData
from .mse import estimate_mse, g1_term
from .rng import derive_seed, stream
from .transforms import LAMBDA_MAX, DualPowerTransform
from .validation import check_method

D_PATTERNS = {
    "a": (0.1, 0.2, 0.3, 0.4, 0.5),
    "b": (0.1, 0.3, 0.5, 0.8, 1.0),
    "c": (0.1, 0.4, 0.7, 1.1, 1.5),
}
EFFECT_LAWS = ("normal", "double-exponential", "location-exponential")
N_GROUPS = 5

_COVARIATE_ROLE = "covariates"
_EFFECT_ROLE = "effects"
_NOISE_ROLE = "noise"


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo scenario.

    ``d_pattern`` is a named pattern ("a"/"b"/"c"), a tuple of 5 group
    values, or a full length-m tuple.  ``beta`` of length 1 means a
    mean-only design (single constant column); longer vectors get an
    intercept plus standard-normal covariates frozen per scenario.
    Effect laws are moment-matched to mean zero and variance ``re_var``.
    """

    m: int = 30
    d_pattern: str | tuple = "a"
    beta: tuple[float, ...] = (0.5, 1.0)
    re_var: float = 0.4
    lam: float = 0.6
    effect_law: str = "normal"
    n_replicates: int = 2000
    n_bootstrap: int = 300
    n_truth_replicates: int = 10000
    method: str = "ml"
    seed: int = 0
    scenario_id: int = 0
    lambda_max: float = LAMBDA_MAX

    def __post_init__(self):
        if self.m <= 0:
            raise DataError("m must be positive")
        if isinstance(self.d_pattern, str):
            if self.d_pattern not in D_PATTERNS:
                raise DataError(f"unknown D pattern {self.d_pattern!r}")
            if self.m % N_GROUPS:
                raise DataError("named patterns need m divisible by 5")
        else:
            values = tuple(float(v) for v in self.d_pattern)
            if len(values) == N_GROUPS:
                if self.m % N_GROUPS:
                    raise DataError("5-value patterns need m divisible by 5")
            elif len(values) != self.m:
                raise DataError("d_pattern must have 5 or m values")
            if any(v <= 0 for v in values):
                raise DataError("sampling variances must be positive")
            object.__setattr__(self, "d_pattern", values)
        if self.effect_law not in EFFECT_LAWS:
            raise DataError(f"effect_law must be one of {EFFECT_LAWS}")
        check_method(self.method)
        if not 0.0 <= self.lam <= LAMBDA_MAX:
            raise DataError(f"lam must lie in [0, {LAMBDA_MAX}]")
        if self.re_var < 0:
            raise DataError("re_var must be non-negative")
        beta = tuple(float(b) for b in self.beta)
        if not beta:
            raise DataError("beta must be non-empty")
        object.__setattr__(self, "beta", beta)

    @property
    def pattern_label(self) -> str:
        return self.d_pattern if isinstance(self.d_pattern, str) else "custom"

    def sampling_variances(self) -> np.ndarray:
        values = (
            D_PATTERNS[self.d_pattern]
            if isinstance(self.d_pattern, str)
            else self.d_pattern
        )
        if len(values) == self.m:
            return np.asarray(values, dtype=float)
        return np.repeat(np.asarray(values, dtype=float), self.m // N_GROUPS)

    def groups(self) -> np.ndarray:
        """Group index (0..4) per area: consecutive blocks of m/5."""
        if self.m % N_GROUPS:
            raise DataError("group structure needs m divisible by 5")
        return np.repeat(np.arange(N_GROUPS), self.m // N_GROUPS)

    def to_dict(self) -> dict:
        out = asdict(self)
        if not isinstance(out["d_pattern"], str):
            out["d_pattern"] = list(out["d_pattern"])
        out["beta"] = list(out["beta"])
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        data = dict(raw)
        aliases = {"A": "re_var", "lambda": "lam"}
        for old, new in aliases.items():
            if old in data and new not in data:
                data[new] = data.pop(old)
        if "d_pattern" in data and isinstance(data["d_pattern"], list):
            data["d_pattern"] = tuple(data["d_pattern"])
        if "beta" in data:
            data["beta"] = tuple(data["beta"])
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class StudyReport:
    """Table-shaped study output: one dict per cell plus run metadata."""

    study: str
    cells: list[dict]
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        fieldnames: list[str] = []
        for cell in self.cells:
            for key in cell:
                if key not in fieldnames:
                    fieldnames.append(key)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            for cell in self.cells:
                writer.writerow(
                    {
                        k: (f"{v:.6g}" if isinstance(v, float) else v)
                        for k, v in cell.items()
                    }
                )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(
                {"study": self.study, "cells": self.cells, "meta": self.meta},
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")


def report_filename(study: str, pattern: str, lam: float, suffix: str = "csv") -> str:
    return f"{study}_{pattern}_{lam:g}.{suffix}"


def scenario_design(cfg: ScenarioConfig) -> np.ndarray:
    """Design matrix, frozen per scenario: a constant column, plus
    standard-normal covariate columns when beta has more entries."""
    p = len(cfg.beta)
    ones = np.ones(cfg.m)
    if p == 1:
        return ones[:, None]
    rng = stream(cfg.seed, cfg.scenario_id, _COVARIATE_ROLE)
    covs = rng.standard_normal((cfg.m, p - 1))
    return np.column_stack([ones, covs])


def draw_effects(rng: np.random.Generator, law: str, variance: float, size: int) -> np.ndarray:
    """Random effects with mean zero and the requested variance."""
    if law == "normal":
        return rng.normal(0.0, np.sqrt(variance), size)
    if law == "double-exponential":
        return rng.laplace(0.0, np.sqrt(variance / 2.0), size)
    if law == "location-exponential":
        scale = np.sqrt(variance)
        return rng.exponential(scale, size) - scale
    raise DataError(f"unknown effect law {law!r}")


def generate_replicate(cfg: ScenarioConfig, rep: int) -> AreaData:
    """Data for one replicate: transformed-scale linear mixed model draws
    mapped back through the inverse transform."""
    x = scenario_design(cfg)
    d = cfg.sampling_variances()
    v = draw_effects(
        stream(cfg.seed, cfg.scenario_id, rep, _EFFECT_ROLE), cfg.effect_law, cfg.re_var, cfg.m
    )
    e = stream(cfg.seed, cfg.scenario_id, rep, _NOISE_ROLE).normal(0.0, np.sqrt(d))
    z = x @ np.asarray(cfg.beta) + v + e
    y = DualPowerTransform(cfg.lam).inverse(z)
    return AreaData(y, x, d)


def _map_replicates(task, n: int, n_jobs: int) -> list:
    if n_jobs == 1:
        return [task(r) for r in range(n)]
    return Parallel(n_jobs=n_jobs, batch_size="auto")(delayed(task)(r) for r in range(n))


def _summary(values: np.ndarray) -> tuple[float, float]:
    # Reported "standard errors" are replicate standard deviations.
    return float(np.mean(values)), float(np.std(values, ddof=1))


def _estimation_rep(cfg: ScenarioConfig, methods: tuple, include_log: bool, rep: int) -> dict:
    data = generate_replicate(cfg, rep)
    out: dict = {}
    for method in methods:
        try:
            fit = fit_model(data, method, "dual-power", lambda_max=cfg.lambda_max)
        except SolverError:
            out[method] = None
            continue
        if not fit.converged:
            out[method] = None
            continue
        out[method] = (
            fit.lam,
            fit.re_var,
            tuple(fit.beta),
            fit.re_var_estimate.truncated_at_zero,
        )
    if include_log:
        log_fit = fit_model(data, "ml", "log")
        out["log"] = (
            0.0,
            log_fit.re_var,
            tuple(log_fit.beta),
            log_fit.re_var_estimate.truncated_at_zero,
        )
    return out


def run_estimation_study(
    cfg: ScenarioConfig,
    methods: tuple = ("ml", "reml", "fh", "pr"),
    include_log: bool = True,
    n_jobs: int = 1,
) -> StudyReport:
    """Replicate means and sds of the parameter estimators, per variance
    method, plus the log-model (maximum likelihood) comparison row and
    zero-estimate percentages."""
    start = time.perf_counter()
    methods = tuple(check_method(m) for m in methods)
    task = _EstimationTask(cfg, methods, include_log)
    results = _map_replicates(task, cfg.n_replicates, n_jobs)

    cells = []
    rows = methods + (("log",) if include_log else ())
    for label in rows:
        entries = [r[label] for r in results if r.get(label) is not None]
        n_used = len(entries)
        cell: dict = {"method": label, "n_used": n_used, "n_failed": cfg.n_replicates - n_used}
        if n_used >= 2:
            lam_mean, lam_sd = _summary(np.array([e[0] for e in entries]))
            a_mean, a_sd = _summary(np.array([e[1] for e in entries]))
            cell.update(
                lambda_mean=lam_mean,
                lambda_sd=lam_sd,
                re_var_mean=a_mean,
                re_var_sd=a_sd,
                zero_pct=100.0 * np.mean([e[3] for e in entries]),
            )
            betas = np.array([e[2] for e in entries])
            for j in range(betas.shape[1]):
                mean, sd = _summary(betas[:, j])
                cell[f"beta{j + 1}_mean"] = mean
                cell[f"beta{j + 1}_sd"] = sd
        cells.append(cell)
    return StudyReport(
        study="estimation",
        cells=cells,
        meta={
            "config": cfg.to_dict(),
            "wall_clock_seconds": time.perf_counter() - start,
        },
    )


def _sweep_rep(cfg: ScenarioConfig, methods: tuple, rep: int) -> dict:
    data = generate_replicate(cfg, rep)
    out: dict = {}
    for method in methods:
        try:
            fit = fit_model(data, method, "dual-power", lambda_max=cfg.lambda_max)
        except SolverError:
            out[method] = None
            continue
        out[method] = (
            fit.re_var_estimate.truncated_at_zero if fit.converged else None
        )
    log_fit = fit_model(data, "ml", "log")
    out["log"] = log_fit.re_var_estimate.truncated_at_zero
    return out


def run_zero_estimate_sweep(
    cfg: ScenarioConfig,
    lambda_grid: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4),
    methods: tuple = ("ml", "reml"),
    n_jobs: int = 1,
) -> StudyReport:
    """Percentage of zero variance estimates as a function of the true
    transformation parameter, for the transformed fits and the log model.

    The same underlying effect/noise draws are reused across grid points
    (common random numbers), so curves differ only through the true
    transformation.
    """
    start = time.perf_counter()
    methods = tuple(check_method(m) for m in methods)
    cells = []
    for lam in lambda_grid:
        cfg_lam = replace(cfg, lam=float(lam))
        task = _SweepTask(cfg_lam, methods)
        results = _map_replicates(task, cfg.n_replicates, n_jobs)
        cell: dict = {"lambda": float(lam)}
        for label in methods + ("log",):
            flags = [r[label] for r in results if r.get(label) is not None]
            cell[f"zero_pct_{label}"] = 100.0 * float(np.mean(flags)) if flags else np.nan
            cell[f"n_used_{label}"] = len(flags)
        cells.append(cell)
    return StudyReport(
        study="zero-sweep",
        cells=cells,
        meta={
            "config": cfg.to_dict(),
            "lambda_grid": [float(v) for v in lambda_grid],
            "wall_clock_seconds": time.perf_counter() - start,
        },
    )


def _true_mse_rep(cfg: ScenarioConfig, rep: int):
    data = generate_replicate(cfg, rep)
    try:
        fit = fit_model(data, cfg.method, "dual-power", lambda_max=cfg.lambda_max)
    except SolverError:
        return None
    if not fit.converged:
        return None
    t_true = DualPowerTransform(cfg.lam)
    h_true = t_true.forward(data.y)
    mu_true = data.x @ np.asarray(cfg.beta)
    gamma_true = cfg.re_var / (cfg.re_var + data.sampling_var)
    bp = mu_true + gamma_true * (h_true - mu_true)

    t_hat = fit.params.transform
    h_hat = t_hat.forward(data.y)
    mu_hat = data.x @ fit.beta
    gamma_hat = fit.re_var / (fit.re_var + data.sampling_var)
    eb = mu_hat + gamma_hat * (h_hat - mu_hat)
    return (eb - bp) ** 2, (h_hat - bp) ** 2


def run_true_mse_study(cfg: ScenarioConfig, n_jobs: int = 1) -> StudyReport:
    """True prediction error of the EBLUP and of the direct (non-shrunk)
    predictor, by group.

    Uses the conditional-mean identity: the error splits into the gap to
    the best predictor (averaged over replicates) plus the irreducible
    ``A*D/(A+D)`` term, shared with the closed-form g1.
    """
    start = time.perf_counter()
    task = _TrueMseTask(cfg)
    results = _map_replicates(task, cfg.n_replicates, n_jobs)
    kept = [r for r in results if r is not None]
    if not kept:
        raise SolverError("no replicate produced a converged fit")
    gap_eb = np.mean([r[0] for r in kept], axis=0)
    gap_dp = np.mean([r[1] for r in kept], axis=0)
    base = g1_term(cfg.re_var, cfg.sampling_variances())
    mse_eb = gap_eb + base
    mse_dp = gap_dp + base

    groups = cfg.groups()
    cells = []
    for g in range(N_GROUPS):
        sel = groups == g
        eb_g = float(np.mean(mse_eb[sel]))
        dp_g = float(np.mean(mse_dp[sel]))
        cells.append(
            {
                "group": g + 1,
                "mse_eblup": eb_g,
                "mse_direct": dp_g,
                "mse_eblup_x100": 100.0 * eb_g,
                "relative_gain_pct": 100.0 * (dp_g - eb_g) / dp_g,
            }
        )
    return StudyReport(
        study="true-mse",
        cells=cells,
        meta={
            "config": cfg.to_dict(),
            "n_used": len(kept),
            "n_failed": cfg.n_replicates - len(kept),
            "wall_clock_seconds": time.perf_counter() - start,
        },
    )


def _mse_estimator_rep(cfg: ScenarioConfig, rep: int):
    data = generate_replicate(cfg, rep)
    try:
        fit = fit_model(data, cfg.method, "dual-power", lambda_max=cfg.lambda_max)
        if not fit.converged:
            return None
        boot_seed = derive_seed(cfg.seed, cfg.scenario_id, rep, "mse-bootstrap")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = estimate_mse(data, fit, n_boot=cfg.n_bootstrap, seed=boot_seed)
    except SolverError:
        return None
    return res.totals


def run_mse_estimator_study(
    cfg: ScenarioConfig, truth: StudyReport | None = None, n_jobs: int = 1
) -> StudyReport:
    """Average bootstrap error estimate by group, with its percentage
    relative bias against the simulated truth.

    When no truth report is passed, one is computed with
    ``n_truth_replicates`` replicates on a shifted scenario id (so the
    truth and estimator studies use independent draws).
    """
    start = time.perf_counter()
    if truth is None:
        truth_cfg = replace(
            cfg,
            n_replicates=cfg.n_truth_replicates,
            scenario_id=cfg.scenario_id + 1,
        )
        truth = run_true_mse_study(truth_cfg, n_jobs=n_jobs)
    true_by_group = {cell["group"]: cell["mse_eblup"] for cell in truth.cells}

    task = _MseEstimatorTask(cfg)
    results = _map_replicates(task, cfg.n_replicates, n_jobs)
    kept = [r for r in results if r is not None]
    if not kept:
        raise SolverError("no replicate produced a converged fit")
    mean_total = np.mean(kept, axis=0)

    groups = cfg.groups()
    cells = []
    for g in range(N_GROUPS):
        sel = groups == g
        est = float(np.mean(mean_total[sel]))
        true_val = true_by_group[g + 1]
        cells.append(
            {
                "group": g + 1,
                "mse_estimate": est,
                "mse_estimate_x100": 100.0 * est,
                "true_mse_x100": 100.0 * true_val,
                "relative_bias_pct": 100.0 * (est - true_val) / true_val,
            }
        )
    return StudyReport(
        study="mse-estimator",
        cells=cells,
        meta={
            "config": cfg.to_dict(),
            "n_used": len(kept),
            "n_failed": cfg.n_replicates - len(kept),
            "wall_clock_seconds": time.perf_counter() - start,
        },
    )


class _EstimationTask:
    def __init__(self, cfg, methods, include_log):
        self.cfg, self.methods, self.include_log = cfg, methods, include_log

    def __call__(self, rep):
        return _estimation_rep(self.cfg, self.methods, self.include_log, rep)


class _SweepTask:
    def __init__(self, cfg, methods):
        self.cfg, self.methods = cfg, methods

    def __call__(self, rep):
        return _sweep_rep(self.cfg, self.methods, rep)


class _TrueMseTask:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, rep):
        return _true_mse_rep(self.cfg, rep)


class _MseEstimatorTask:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, rep):
        return _mse_estimator_rep(self.cfg, rep)
