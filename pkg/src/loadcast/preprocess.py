"""Gap imputation, value imputation, winsorization and leakage-safe scaling.

The pipeline order is fixed: time gaps, then load/weather values, then
winsorization of selected channels, then standardization.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .ingest import HOUR, LOAD_ROLES, WEATHER_ROLES, TimeSeriesFrame

logger = logging.getLogger(__name__)


class ImputationWarning(UserWarning):
    pass


def impute_time_gaps(frame: TimeSeriesFrame, max_gap=pd.Timedelta(hours=72)) -> TimeSeriesFrame:
    """Insert all-missing rows for absent hours in gaps of at most ``max_gap``.

    Longer gaps stay absent and are recorded as ``[start, end)`` exclusions.
    """
    max_gap = pd.Timedelta(max_gap)
    idx = frame.timestamps
    if len(idx) < 2:
        return frame.replace(data=frame.data.copy())
    steps = idx[1:] - idx[:-1]
    new_rows = []
    exclusions = list(frame.gap_exclusions)
    for prev, step in zip(idx[:-1], steps):
        if step <= HOUR:
            continue
        missing = step - HOUR
        start = prev + HOUR
        if missing <= max_gap:
            new_rows.append(pd.date_range(start, prev + step - HOUR, freq="h"))
        else:
            exclusions.append((start, prev + step))
    if new_rows:
        inserted = new_rows[0].append(new_rows[1:]) if len(new_rows) > 1 else new_rows[0]
        data = frame.data.reindex(idx.append(inserted).sort_values())
        data.index.name = idx.name
    else:
        data = frame.data.copy()
    return frame.replace(data=data, gap_exclusions=sorted(set(exclusions)))


def _prior_group_mean(values: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Mean of strictly earlier observed values sharing the same key (NaN if none)."""
    out = np.full(len(values), np.nan)
    sums: dict = {}
    counts: dict = {}
    for i, (v, k) in enumerate(zip(values, keys)):
        c = counts.get(k, 0)
        if c:
            out[i] = sums[k] / c
        if v == v:
            sums[k] = sums.get(k, 0.0) + v
            counts[k] = c + 1
    return out


def impute_load(frame: TimeSeriesFrame, channel: str) -> TimeSeriesFrame:
    """Fill missing load cells with the mean of earlier same-(hour, weekday) values.

    Falls back to the earlier same-hour mean, then to 0 with an
    ``ImputationWarning``. Only strictly earlier observations are used.
    """
    if frame.roles[channel] not in LOAD_ROLES:
        raise ValueError(f"{channel!r} is not a load channel")
    col = frame.data[channel].to_numpy(dtype=float)
    missing = np.isnan(col)
    if not missing.any():
        return frame.replace(data=frame.data.copy())
    idx = frame.timestamps
    hour = idx.hour.to_numpy()
    dow = idx.dayofweek.to_numpy()
    same_slot = _prior_group_mean(col, hour * 7 + dow)
    same_hour = _prior_group_mean(col, hour)
    filled = col.copy()
    filled[missing] = np.where(np.isnan(same_slot[missing]), same_hour[missing], same_slot[missing])
    still = np.isnan(filled)
    if still.any():
        warnings.warn(
            f"{channel}: {still.sum()} cells have no earlier same-hour history; imputed as 0",
            ImputationWarning, stacklevel=2,
        )
        filled[still] = 0.0
    data = frame.data.copy()
    data[channel] = filled
    return frame.replace(data=data)


def impute_weather(frame: TimeSeriesFrame, channel: str) -> TimeSeriesFrame:
    """Fill missing weather cells with the mean of their ISO week.

    Weeks with no observation at all are filled by linear interpolation
    between the neighbouring observed values.
    """
    if frame.roles[channel] not in WEATHER_ROLES:
        raise ValueError(f"{channel!r} is not a weather channel")
    col = frame.data[channel]
    if not col.isna().any():
        return frame.replace(data=frame.data.copy())
    iso = frame.timestamps.isocalendar()
    week = iso["year"].to_numpy() * 100 + iso["week"].to_numpy()
    week_mean = col.groupby(week).transform("mean")
    filled = col.fillna(week_mean)
    if filled.isna().any():
        positions = pd.Series(filled.to_numpy(), index=np.arange(len(filled)))
        positions = positions.interpolate(method="index", limit_direction="both")
        filled = pd.Series(positions.to_numpy(), index=col.index)
    data = frame.data.copy()
    data[channel] = filled
    return frame.replace(data=data)


def percentile_bounds(values: np.ndarray, lower_q: float = 0.05, upper_q: float = 0.95):
    """Percentiles by linear interpolation between order statistics."""
    return (
        float(np.percentile(values, 100 * lower_q, method="linear")),
        float(np.percentile(values, 100 * upper_q, method="linear")),
    )


def winsorize(series, lower_q: float = 0.05, upper_q: float = 0.95) -> np.ndarray:
    """Replace values strictly outside the percentile bounds.

    An outlier takes the most recent retained value; a leading outlier is
    clamped to the nearest bound. NaNs are ignored and preserved.
    """
    x = np.asarray(series, dtype=float)
    observed = x[~np.isnan(x)]
    if len(observed) < 2:
        raise ValueError("winsorize needs at least 2 observed values")
    lo, hi = percentile_bounds(observed, lower_q, upper_q)
    out = x.copy()
    last = None
    for i, v in enumerate(x):
        if v != v:
            continue
        if v < lo or v > hi:
            out[i] = last if last is not None else min(max(v, lo), hi)
        else:
            last = v
    return out


def winsorize_frame(frame: TimeSeriesFrame, channels, lower_q=0.05, upper_q=0.95) -> TimeSeriesFrame:
    data = frame.data.copy()
    for c in channels:
        before = data[c].to_numpy()
        data[c] = winsorize(before, lower_q, upper_q)
        logger.info("winsorized %s: %d values replaced", c, int(np.sum(before != data[c].to_numpy())))
    return frame.replace(data=data)


@dataclass(frozen=True)
class Scaler:
    """Per-channel standardization ``z = (x - mean) / std`` (population std).

    Channels with zero spread in the fit range are listed in ``constant`` and
    left untouched by ``apply``/``invert``.
    """

    mean: dict[str, float]
    std: dict[str, float]
    fit_range: tuple[pd.Timestamp, pd.Timestamp]
    constant: frozenset[str] = field(default_factory=frozenset)

    def transform_values(self, channel: str, values):
        if channel in self.constant:
            return np.asarray(values, dtype=float)
        return (np.asarray(values, dtype=float) - self.mean[channel]) / self.std[channel]

    def inverse_values(self, channel: str, values):
        if channel in self.constant:
            return np.asarray(values, dtype=float)
        return np.asarray(values, dtype=float) * self.std[channel] + self.mean[channel]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "fit_range": [str(self.fit_range[0]), str(self.fit_range[1])],
            "constant": sorted(self.constant),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            mean={k: float(v) for k, v in d["mean"].items()},
            std={k: float(v) for k, v in d["std"].items()},
            fit_range=(pd.Timestamp(d["fit_range"][0]), pd.Timestamp(d["fit_range"][1])),
            constant=frozenset(d.get("constant", ())),
        )


def fit_scaler(frame: TimeSeriesFrame, fit_fraction: float = 0.8, channels=None, fit_rows: int | None = None) -> Scaler:
    """Fit mean/std on the first ``floor(fit_fraction * T)`` rows only.

    ``fit_rows`` overrides the row count (used to keep the fit range out of
    a test partition).
    """
    if not 0 < fit_fraction <= 1:
        raise ValueError(f"fit_fraction must be in (0, 1], got {fit_fraction}")
    channels = frame.channels if channels is None else list(channels)
    n = int(math.floor(fit_fraction * len(frame))) if fit_rows is None else int(fit_rows)
    if n < 1:
        raise ValueError("scaler fit range is empty")
    head = frame.data.iloc[:n]
    mean, std, constant = {}, {}, set()
    for c in channels:
        v = head[c].to_numpy(dtype=float)
        v = v[~np.isnan(v)]
        if len(v) == 0:
            raise ValueError(f"channel {c!r} has no observed values in the fit range")
        mean[c] = float(np.mean(v))
        std[c] = float(np.std(v))
        if not std[c] > 0:
            constant.add(c)
            logger.warning("channel %s is constant in the fit range; left unscaled", c)
    return Scaler(mean=mean, std=std, fit_range=(head.index[0], head.index[-1]), constant=frozenset(constant))


def apply_scaler(frame: TimeSeriesFrame, scaler: Scaler) -> TimeSeriesFrame:
    data = frame.data.copy()
    for c in scaler.mean:
        data[c] = scaler.transform_values(c, data[c].to_numpy())
    return frame.replace(data=data)


def invert_scaler(frame: TimeSeriesFrame, scaler: Scaler) -> TimeSeriesFrame:
    data = frame.data.copy()
    for c in scaler.mean:
        data[c] = scaler.inverse_values(c, data[c].to_numpy())
    return frame.replace(data=data)


@dataclass
class PreprocessConfig:
    max_gap_hours: float = 72
    winsorize: tuple[str, ...] = ()
    fit_fraction: float = 0.8
    lower_q: float = 0.05
    upper_q: float = 0.95


def preprocess(frame: TimeSeriesFrame, config: PreprocessConfig | None = None, fit_rows_limit: int | None = None):
    """Run gap imputation, value imputation and winsorization; fit the scaler.

    Returns ``(clean_frame, scaler)`` where ``clean_frame`` is in physical
    units. The scaler is fitted on the first ``fit_fraction`` of rows, capped
    at ``fit_rows_limit`` rows when given.
    """
    config = config or PreprocessConfig()
    out = impute_time_gaps(frame, pd.Timedelta(hours=config.max_gap_hours))
    for c in out.load_channels:
        out = impute_load(out, c)
    for c in out.weather_channels:
        out = impute_weather(out, c)
    if config.winsorize:
        out = winsorize_frame(out, config.winsorize, config.lower_q, config.upper_q)
    n = int(math.floor(config.fit_fraction * len(out)))
    if fit_rows_limit is not None:
        n = min(n, fit_rows_limit)
    scaler = fit_scaler(out, config.fit_fraction, fit_rows=n)
    return out, scaler
