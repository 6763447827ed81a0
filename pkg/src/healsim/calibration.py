"""Calibrators that map profiled inconsistency costs to application error.

Three prediction methods share the same application-independent inputs:

* false-negative scaling: one factor in [0, 1] multiplies exactly the
  cost streams that are identically 1 (dead-monitor windows), fitted per
  fault scale by grid search on RMSE;
* ordinary least squares on a 62-entry feature vector (five quantiles per
  cost stream plus the relative threshold and the fault scale);
* elastic-net regression (coordinate descent, standardized features,
  unpenalized intercept), optionally trained on a subset of fault profiles
  and validated on the rest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .faultmodel import (
    STREAMS,
    CostSummary,
    CostWeights,
    DEFAULT_WEIGHTS,
    PairRecord,
    SCENARIO_STREAMS,
    UNIT_FN_STREAMS,
    FP_STREAMS,
    classify_scenario,
    relative_costs,
)

logger = logging.getLogger(__name__)

QUANTILE_LEVELS = (0.10, 0.30, 0.50, 0.70, 0.90)
FEATURE_SIZE = len(STREAMS) * len(QUANTILE_LEVELS) + 2

DEFAULT_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class CalibrationConfig:
    fn_lambda: float = 1.0
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    elastic_alpha: float = 0.07
    elastic_l1_ratio: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 <= self.fn_lambda <= 1.0:
            raise ValueError("fn_lambda must lie in [0, 1]")
        if self.elastic_alpha < 0:
            raise ValueError("elastic_alpha must be nonnegative")
        if not 0.0 <= self.elastic_l1_ratio <= 1.0:
            raise ValueError("elastic_l1_ratio must lie in [0, 1]")


@dataclass
class PredictionReport:
    """Per-setting predictions plus the aggregate quality metrics."""

    method: str
    keys: list[str]
    predicted: np.ndarray
    target: np.ndarray
    rmse: float
    pearson_r: float | None
    accuracy_loss: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rmse < 0:
            raise ValueError("rmse cannot be negative")
        if self.pearson_r is not None and not -1.0 <= self.pearson_r <= 1.0 + 1e-12:
            raise ValueError("pearson_r out of range")


def rmse(a: Sequence[float], b: Sequence[float]) -> float:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.size == 0:
        raise ValueError("rmse needs two equal-length, non-empty sequences")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def pearson(a: Sequence[float], b: Sequence[float]) -> float | None:
    """Correlation coefficient; None when either side has no variance."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length sequences of size >= 2")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt((xd**2).sum() * (yd**2).sum())
    if denom == 0.0:
        return None
    return float(np.clip((xd * yd).sum() / denom, -1.0, 1.0))


def stream_populations(records: Iterable[PairRecord]) -> dict[str, list[float]]:
    """Per-stream cost populations: every pair of the stream's scenario
    class contributes its (possibly zero) cost."""
    pops: dict[str, list[float]] = {stream: [] for stream in STREAMS}
    for rec in records:
        scenario = classify_scenario(rec)
        costs = relative_costs(rec)
        for stream in SCENARIO_STREAMS[scenario]:
            pops[stream].append(costs[stream])
    return pops


def extract_features(
    populations: Mapping[str, Sequence[float]],
    threshold: int,
    max_threshold: int,
    fault_scale: float,
) -> np.ndarray:
    """62-entry feature vector: 5 quantiles per stream + threshold + scale.

    Quantiles interpolate linearly between order statistics; an empty
    stream population contributes five zeros.
    """
    if max_threshold < 1:
        raise ValueError("max_threshold must be positive")
    parts: list[np.ndarray] = []
    for stream in STREAMS:
        pop = np.asarray(populations.get(stream, ()), dtype=float)
        if pop.size == 0:
            parts.append(np.zeros(len(QUANTILE_LEVELS)))
        else:
            parts.append(np.quantile(pop, QUANTILE_LEVELS))
    vector = np.concatenate(parts + [[threshold / max_threshold, fault_scale]])
    if vector.size != FEATURE_SIZE:
        raise AssertionError("feature vector has the wrong length")
    return vector


def fn_calibrated_cost(
    records: Iterable[PairRecord],
    fn_lambda: float,
    weights: CostWeights = DEFAULT_WEIGHTS,
) -> CostSummary:
    """Total cost with the identically-1 false-negative streams scaled.

    Those streams assume a dead monitor keeps hurting until the end of the
    runtime; the factor discounts them toward what recovery and takeover
    actually leave behind. At factor 1 this is exactly the plain total.
    """
    if not 0.0 <= fn_lambda <= 1.0:
        raise ValueError("the calibration factor must lie in [0, 1]")
    c_fp = 0.0
    c_fn = 0.0
    for rec in records:
        scenario = classify_scenario(rec)
        costs = relative_costs(rec)
        for stream in SCENARIO_STREAMS[scenario]:
            value = costs[stream]
            if stream in FP_STREAMS:
                c_fp += weights.fp(scenario) * value
            elif stream in UNIT_FN_STREAMS:
                c_fn += weights.fn(scenario) * fn_lambda * value
            else:
                c_fn += weights.fn(scenario) * value
    return CostSummary(c_total=c_fn + c_fp, c_fn=c_fn, c_fp=c_fp)


@dataclass(frozen=True)
class CostParts:
    """Precomputed pieces of one setting's cost, linear in the factor.

    predicted(lambda) = (c_fp + c_fn_rest + lambda * c_fn_unit) / n_pairs
    """

    key: str
    fault_scale: float
    c_fp: float
    c_fn_unit: float
    c_fn_rest: float
    n_pairs: int

    def predict(self, fn_lambda: float) -> float:
        return (self.c_fp + self.c_fn_rest + fn_lambda * self.c_fn_unit) / self.n_pairs


def fit_lambda(
    settings: Sequence[CostParts],
    targets: Sequence[float],
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
) -> dict[float, float]:
    """Per-fault-scale factor minimizing RMSE against the targets.

    Ties resolve to the smallest grid value.
    """
    if not grid:
        raise ValueError("the candidate grid is empty")
    if len(settings) != len(targets):
        raise ValueError("settings and targets must align")
    by_scale: dict[float, list[int]] = {}
    for idx, setting in enumerate(settings):
        by_scale.setdefault(setting.fault_scale, []).append(idx)
    result: dict[float, float] = {}
    targets_arr = np.asarray(targets, dtype=float)
    for scale, indices in sorted(by_scale.items()):
        best_lambda = None
        best_rmse = np.inf
        for lam in sorted(grid):
            preds = np.array([settings[i].predict(lam) for i in indices])
            err = float(np.sqrt(np.mean((preds - targets_arr[indices]) ** 2)))
            if err < best_rmse - 1e-15:
                best_rmse = err
                best_lambda = lam
        result[scale] = float(best_lambda)
    return result


def ols_fit(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares fit with intercept via SVD (minimum-norm if deficient)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValueError("X and y must have matching, non-zero row counts")
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    solution, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        logger.warning(
            "rank-deficient design (rank %d < %d); returning the minimum-norm fit",
            rank,
            design.shape[1],
        )
    return solution[1:], float(solution[0])


def ols_predict(X: np.ndarray, coef: np.ndarray, intercept: float) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X @ np.asarray(coef, dtype=float) + intercept


@dataclass
class ElasticNetResult:
    coef: np.ndarray
    intercept: float
    converged: bool
    sweeps: int
    feature_mean: np.ndarray
    feature_scale: np.ndarray


def elastic_net_fit(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float = 0.07,
    l1_ratio: float = 0.05,
    *,
    tol: float = 1e-8,
    max_sweeps: int = 100_000,
) -> ElasticNetResult:
    """Coordinate descent for (1/2n)||y - Xw - b||^2 + a*l1*|w| + a*(1-l1)/2*||w||^2.

    Features are standardized internally and the intercept is left
    unpenalized; coefficients come back in the original units. Constant
    columns get coefficient 0. Stops when no coefficient moves more than
    ``tol`` in a sweep; a run that exhausts ``max_sweeps`` is flagged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n != y.shape[0] or n == 0:
        raise ValueError("X and y must have matching, non-zero row counts")
    if alpha < 0 or not 0.0 <= l1_ratio <= 1.0:
        raise ValueError("alpha must be >= 0 and l1_ratio in [0, 1]")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    dead = scale == 0.0
    scale = np.where(dead, 1.0, scale)
    Xs = (X - mean) / scale
    y_mean = float(y.mean())
    residual = y - y_mean  # equals y_centered - Xs @ w while w == 0

    l1 = alpha * l1_ratio
    l2 = alpha * (1.0 - l1_ratio)
    w = np.zeros(p)
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            if dead[j]:
                continue
            col = Xs[:, j]
            w_j = w[j]
            rho = (col @ residual) / n + w_j  # col variance is 1 by scaling
            new = np.sign(rho) * max(abs(rho) - l1, 0.0) / (1.0 + l2)
            if new != w_j:
                residual += col * (w_j - new)
                w[j] = new
                max_delta = max(max_delta, abs(new - w_j))
        if max_delta < tol:
            converged = True
            break
    if not converged:
        logger.warning("coordinate descent hit the sweep limit (%d)", max_sweeps)

    coef = w / scale
    intercept = y_mean - float(mean @ coef)
    return ElasticNetResult(
        coef=coef,
        intercept=intercept,
        converged=converged,
        sweeps=sweep,
        feature_mean=mean,
        feature_scale=scale,
    )


def generalized_regression(
    features: np.ndarray,
    targets: np.ndarray,
    profiles: Sequence[str],
    train_profiles: Sequence[str],
    validate_profiles: Sequence[str] | None = None,
    *,
    alpha: float = 0.07,
    l1_ratio: float = 0.05,
    keys: Sequence[str] | None = None,
) -> PredictionReport:
    """Train an elastic net on some fault profiles, validate on others.

    ``accuracy_loss`` compares the validated predictions against the
    targets and against the all-settings least-squares predictions:
    rmse(pred, target) - rmse(pred, ols). The validation set defaults to
    the profiles left out of training (all profiles when none are left).
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    profiles = list(profiles)
    if not train_profiles:
        raise ValueError("the training profile set is empty")
    train_set = set(train_profiles)
    if validate_profiles is None:
        leftover = [p for p in sorted(set(profiles)) if p not in train_set]
        validate_set = set(leftover) if leftover else set(profiles)
    else:
        validate_set = set(validate_profiles)

    train_idx = [i for i, p in enumerate(profiles) if p in train_set]
    val_idx = [i for i, p in enumerate(profiles) if p in validate_set]
    if not train_idx or not val_idx:
        raise ValueError("training or validation selection is empty")

    fit = elastic_net_fit(features[train_idx], targets[train_idx], alpha, l1_ratio)
    predictions = ols_predict(features[val_idx], fit.coef, fit.intercept)

    ols_coef, ols_intercept = ols_fit(features, targets)
    baseline = ols_predict(features[val_idx], ols_coef, ols_intercept)

    target_val = targets[val_idx]
    loss = rmse(predictions, target_val) - rmse(predictions, baseline)
    all_keys = list(keys) if keys is not None else [str(i) for i in range(len(profiles))]
    return PredictionReport(
        method="elastic-net",
        keys=[all_keys[i] for i in val_idx],
        predicted=predictions,
        target=target_val,
        rmse=rmse(predictions, target_val),
        pearson_r=pearson(predictions, target_val) if len(val_idx) >= 2 else None,
        accuracy_loss=float(loss),
        extra={
            "train_profiles": sorted(train_set),
            "validate_profiles": sorted(validate_set),
            "converged": fit.converged,
        },
    )


def profile_split_sweep(
    features: np.ndarray,
    targets: np.ndarray,
    profiles: Sequence[str],
    *,
    alpha: float = 0.07,
    l1_ratio: float = 0.05,
) -> list[dict]:
    """Every non-empty training subset against every single validate profile."""
    names = sorted(set(profiles))
    rows = []
    for mask in range(1, 1 << len(names)):
        train = [names[i] for i in range(len(names)) if mask >> i & 1]
        for validate in names:
            report = generalized_regression(
                features,
                targets,
                profiles,
                train,
                [validate],
                alpha=alpha,
                l1_ratio=l1_ratio,
            )
            rows.append(
                {
                    "train": "+".join(train),
                    "validate": validate,
                    "rmse": report.rmse,
                    "accuracy_loss": report.accuracy_loss,
                }
            )
    return rows
