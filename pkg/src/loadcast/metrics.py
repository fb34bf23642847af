"""Forecast error measures, pooled over every hourly prediction."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np


class MetricWarning(UserWarning):
    pass


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def nrmse(y, y_hat) -> float:
    """RMSE divided by the observed range of ``y``; NaN (with a warning) for constant ``y``."""
    y, y_hat = _pair(y, y_hat)
    span = float(y.max() - y.min())
    if span <= 0:
        warnings.warn("nRMSE undefined: observed values have zero range", MetricWarning, stacklevel=2)
        return math.nan
    return rmse(y, y_hat) / span


def acc95(y, y_hat, zero_tolerance: float | None = None) -> float:
    """Share of predictions within 5 % absolute relative deviation of the truth.

    Where ``y == 0`` a prediction counts as accurate iff ``|y_hat| <=
    zero_tolerance`` (default: 1 % of the observed range of ``y``).
    """
    y, y_hat = _pair(y, y_hat)
    if zero_tolerance is None:
        zero_tolerance = 0.01 * float(y.max() - y.min())
    zero = y == 0
    ok = np.empty(y.shape, dtype=bool)
    nz = ~zero
    ok[nz] = np.abs(y_hat[nz] - y[nz]) * 100.0 <= 5.0 * np.abs(y[nz])
    ok[zero] = np.abs(y_hat[zero]) <= zero_tolerance
    return float(ok.mean())


def mase(y, y_hat, naive) -> float:
    """MAE of the forecast over MAE of the seasonal-naive forecast ``naive``."""
    y, y_hat = _pair(y, y_hat)
    y2, naive = _pair(y, naive)
    ref = float(np.mean(np.abs(y2 - naive)))
    if ref == 0:
        warnings.warn("MASE undefined: seasonal-naive MAE is zero", MetricWarning, stacklevel=2)
        return math.nan
    return mae(y, y_hat) / ref


def seasonal_naive(series, season: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Align a series with its value one season earlier: ``(y[season:], y[:-season])``."""
    x = np.asarray(series, dtype=float)
    return x[season:], x[:-season]


@dataclass
class EvalRow:
    dataset: str
    appliance: str
    model: str
    feature_group: str
    rmse: float
    nrmse: float
    mae: float
    acc95: float
    mase: float
    train_seconds: float

    NUMERIC = ("rmse", "nrmse", "mae", "acc95", "mase", "train_seconds")

    def numeric(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.NUMERIC}


REPORT_COLUMNS = ["dataset", "appliance", "model", "feature_group", "rmse", "nrmse", "mae", "acc95", "mase", "train_seconds"]


def score(y, y_hat, naive, zero_tolerance=None) -> dict[str, float]:
    return {
        "rmse": rmse(y, y_hat),
        "nrmse": nrmse(y, y_hat),
        "mae": mae(y, y_hat),
        "acc95": acc95(y, y_hat, zero_tolerance),
        "mase": mase(y, y_hat, naive),
    }


def evaluate(model, test, dataset: str = "", appliance: str | None = None, feature_group: str | None = None) -> EvalRow:
    """Score ``model`` on stride-24 test windows in physical units.

    The seasonal-naive reference for each output hour is the observed value
    24 hours earlier, i.e. the input window's own target history.
    """
    y = test.to_physical(test.targets)
    y_hat = model.predict(test)
    naive = test.to_physical(test.history)
    s = score(y, y_hat, naive)
    return EvalRow(
        dataset=dataset,
        appliance=appliance if appliance is not None else test.target,
        model=model.kind,
        feature_group=feature_group if feature_group is not None else test.group,
        train_seconds=float(model.log.seconds),
        **s,
    )


def write_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            d = asdict(r)
            w.writerow([d[c] if isinstance(d[c], str) else repr(float(d[c])) for c in REPORT_COLUMNS])
