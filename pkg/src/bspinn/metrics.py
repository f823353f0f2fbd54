"""Point-error metrics and ensemble mean/spread statistics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .network import ShapeError


@dataclass
class MetricReport:
    mae: float
    rmse: float
    ev: float
    relative_error_percent: float
    n: int
    n_excluded_zero_targets: int
    slice_label: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        # NaN is not valid JSON; flag undefined EV explicitly
        if math.isnan(self.ev):
            d["ev"] = None
            d["ev_undefined"] = True
        return json.dumps(d, indent=2)


def metrics(y, y_hat, slice_label="") -> MetricReport:
    """MAE, RMSE, explained variance and mean relative error (percent).

    Variances use the sample (N-1) form. Points with an exactly zero
    target are excluded from the relative error and counted separately.
    Constant targets make EV undefined (NaN-flagged).
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError("targets and predictions differ in shape")
    if y.size < 2:
        raise ValueError("metrics need at least 2 points")
    err = y - y_hat
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    var_y = float(np.var(y, ddof=1))
    ev = 1.0 - float(np.var(err, ddof=1)) / var_y if var_y > 0 else float("nan")
    nonzero = y != 0.0
    n_excluded = int(np.sum(~nonzero))
    if np.any(nonzero):
        # tiny but nonzero targets can overflow the ratio; inf is faithful
        with np.errstate(over="ignore"):
            rel = 100.0 * float(np.mean(np.abs(err[nonzero]) / np.abs(y[nonzero])))
    else:
        rel = float("nan")
    return MetricReport(mae, rmse, ev, rel, y.size, n_excluded, slice_label)


@dataclass
class EnsemblePrediction:
    s: np.ndarray
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_members: int


def ensemble_stats(s, t, member_values) -> EnsemblePrediction:
    """Pointwise mean and sample std (M-1 denominator) across members.

    ``member_values`` is an (M, n_points) array or list of equal-length rows.
    """
    vals = np.asarray(member_values, dtype=np.float64)
    if vals.ndim != 2:
        raise ShapeError("member_values must be 2-d (members x points)")
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if vals.shape[1] != s.size or s.size != t.size:
        raise ShapeError("member predictions do not match the point set")
    if vals.shape[0] < 2:
        raise ValueError("ensemble statistics need at least 2 members")
    mean = vals.mean(axis=0)
    std = vals.std(axis=0, ddof=1)
    return EnsemblePrediction(s, t, mean, std, vals.shape[0])


def bands(pred: EnsemblePrediction, k: int, payoff_floor=None):
    """(lower, upper) = mean -/+ k std; the lower band can be floored at
    the payoff (American projection consistency)."""
    lower = pred.mean - k * pred.std
    upper = pred.mean + k * pred.std
    if payoff_floor is not None:
        lower = np.maximum(lower, payoff_floor)
        upper = np.maximum(upper, payoff_floor)
    return lower, upper
