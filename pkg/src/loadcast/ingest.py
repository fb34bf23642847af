"""Reading smart-meter/weather CSVs into an hourly, channel-tagged frame."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

HOUR = pd.Timedelta(hours=1)
TIMESTAMP_COLUMN = "timestamp"
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"

# Load roles: energy per sample (summed), power samples in W (integrated),
# cumulative meter reading (differenced). After resampling all become "load".
LOAD_ROLES = ("load", "load_power", "load_cumulative")
WEATHER_ROLES = ("weather_temp", "weather_humidity", "weather_wind")
ROLES = LOAD_ROLES + WEATHER_ROLES


class IngestError(Exception):
    pass


class UnreadableFileError(IngestError):
    pass


class DuplicateTimestampError(IngestError):
    pass


class SchemaMismatchError(IngestError):
    pass


class EmptyPartitionError(IngestError):
    pass


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Timestamped multichannel table.

    ``data`` is indexed by a ``DatetimeIndex`` named ``timestamp``; a NaN cell
    is a missing value. ``gap_exclusions`` holds half-open ``[start, end)``
    intervals that are deliberately left out of the timeline.
    """

    data: pd.DataFrame
    roles: Mapping[str, str]
    gap_exclusions: tuple[tuple[pd.Timestamp, pd.Timestamp], ...] = field(default=())

    def __post_init__(self):
        if not isinstance(self.data.index, pd.DatetimeIndex):
            raise TypeError("data must be indexed by a DatetimeIndex")
        if not self.data.index.is_monotonic_increasing or not self.data.index.is_unique:
            raise ValueError("timestamps must be strictly increasing")
        if list(self.data.columns) != list(self.roles):
            raise SchemaMismatchError(
                f"columns {list(self.data.columns)} do not match roles {list(self.roles)}"
            )
        for name, role in self.roles.items():
            if role not in ROLES:
                raise SchemaMismatchError(f"unknown role {role!r} for channel {name!r}")

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return self.data.index

    @property
    def channels(self) -> list[str]:
        return list(self.data.columns)

    @property
    def load_channels(self) -> list[str]:
        return [c for c, r in self.roles.items() if r in LOAD_ROLES]

    @property
    def weather_channels(self) -> list[str]:
        return [c for c, r in self.roles.items() if r in WEATHER_ROLES]

    @property
    def mask(self) -> pd.DataFrame:
        """True where a cell is missing."""
        return self.data.isna()

    def __len__(self) -> int:
        return len(self.data)

    def replace(self, data: pd.DataFrame | None = None, roles=None, gap_exclusions=None):
        return TimeSeriesFrame(
            data=self.data if data is None else data,
            roles=dict(self.roles if roles is None else roles),
            gap_exclusions=tuple(self.gap_exclusions if gap_exclusions is None else gap_exclusions),
        )

    def select(self, channels) -> "TimeSeriesFrame":
        channels = list(channels)
        return self.replace(
            data=self.data[channels].copy(), roles={c: self.roles[c] for c in channels}
        )

    def slice(self, start=None, stop=None) -> "TimeSeriesFrame":
        """Rows with ``start <= timestamp < stop``."""
        idx = self.data.index
        keep = np.ones(len(idx), dtype=bool)
        if start is not None:
            keep &= idx >= pd.Timestamp(start)
        if stop is not None:
            keep &= idx < pd.Timestamp(stop)
        data = self.data.loc[keep].copy()
        gaps = tuple(
            (s, e) for s, e in self.gap_exclusions
            if (stop is None or s < pd.Timestamp(stop)) and (start is None or e > pd.Timestamp(start))
        )
        return self.replace(data=data, gap_exclusions=gaps)


def read_schema(path) -> dict[str, str]:
    """Parse ``channel = role`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFileError(f"cannot read schema {path}: {exc}") from exc
    schema: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaMismatchError(f"{path}:{lineno}: expected 'channel = role'")
        name, role = (part.strip() for part in line.split("=", 1))
        if role not in ROLES:
            raise SchemaMismatchError(f"{path}:{lineno}: unknown role {role!r}")
        if name in schema:
            raise SchemaMismatchError(f"{path}:{lineno}: channel {name!r} declared twice")
        schema[name] = role
    return schema


def _parse_floats(column: pd.Series) -> np.ndarray:
    """Correctly rounded str -> float; unparseable cells become NaN."""
    text = column.str.strip()
    ok = pd.to_numeric(text, errors="coerce").notna().to_numpy()
    out = np.full(len(text), np.nan)
    # numpy's string cast rounds correctly, unlike pandas' fast parser
    out[ok] = text.to_numpy()[ok].astype(float)
    return out


def load_csv(path, schema: Mapping[str, str]) -> TimeSeriesFrame:
    """Read a CSV with a ``timestamp`` column plus one column per schema channel.

    Blank or non-numeric cells become missing. Negative load readings are
    physically impossible and are also flagged missing.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc

    if not len(raw.columns) or raw.columns[0] != TIMESTAMP_COLUMN:
        raise SchemaMismatchError(f"{path}: first column must be {TIMESTAMP_COLUMN!r}")
    header = list(raw.columns[1:])
    if len(set(header)) != len(header) or set(header) != set(schema):
        raise SchemaMismatchError(
            f"{path}: header {header} does not match schema keys {list(schema)}"
        )

    try:
        index = pd.DatetimeIndex(pd.to_datetime(raw[TIMESTAMP_COLUMN], format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise SchemaMismatchError(f"{path}: unparseable timestamp: {exc}") from exc
    if index.tz is not None:
        index = index.tz_localize(None)
    dup = index.duplicated()
    if dup.any():
        raise DuplicateTimestampError(f"{path}: duplicate timestamp {index[dup][0]}")
    index.name = TIMESTAMP_COLUMN

    data = pd.DataFrame({c: _parse_floats(raw[c]) for c in header}, index=index)
    roles = {c: schema[c] for c in header}
    for c in header:
        if roles[c] in LOAD_ROLES:
            neg = data[c] < 0
            if neg.any():
                logger.warning("%s: %d negative %s readings flagged missing", path, neg.sum(), c)
                data.loc[neg, c] = np.nan
    data = data.sort_index()
    return TimeSeriesFrame(data=data, roles=roles)


def write_csv(frame: TimeSeriesFrame, path) -> None:
    """Write a frame in the ingest CSV layout (round-trips through load_csv)."""
    out = frame.data.copy()
    out.index = out.index.strftime(TIMESTAMP_FORMAT)
    out.index.name = TIMESTAMP_COLUMN
    # repr-precision floats so values reload bit-exactly
    out = out.map(lambda v: "" if v != v else repr(float(v)))
    out.to_csv(path)


def write_schema(roles: Mapping[str, str], path) -> None:
    Path(path).write_text("".join(f"{c} = {r}\n" for c, r in roles.items()), encoding="utf-8")


def _is_hourly(index: pd.DatetimeIndex) -> bool:
    return bool(len(index) == 0 or ((index == index.floor("h")).all() and index.is_unique))


def _trapezoid_hourly(series: pd.Series) -> pd.Series:
    """Integrate power samples (W) into energy per hour (Wh), piecewise linear."""
    s = series.dropna()
    if len(s) < 2:
        return pd.Series(dtype=float)
    t = (s.index - s.index[0]) / HOUR
    t = np.asarray(t, dtype=float)
    p = s.to_numpy(dtype=float)
    origin = s.index[0]
    first_hour = math.floor(t[0])
    boundaries = np.arange(first_hour + 1, math.ceil(t[-1]))
    # drop boundaries that coincide with a sample; insert the rest by interpolation
    boundaries = boundaries[~np.isin(boundaries, t)]
    tt = np.concatenate([t, boundaries])
    pp = np.concatenate([p, np.interp(boundaries, t, p)])
    order = np.argsort(tt, kind="stable")
    tt, pp = tt[order], pp[order]
    seg_energy = 0.5 * (pp[1:] + pp[:-1]) * np.diff(tt)
    seg_hour = np.floor(tt[:-1]).astype(int)
    energy = pd.Series(seg_energy).groupby(seg_hour).sum()
    energy.index = origin.floor("h") + pd.to_timedelta(energy.index, unit="h")
    return energy


def resample_hourly(frame: TimeSeriesFrame) -> TimeSeriesFrame:
    """Aggregate sub-hourly samples onto the wall-clock hour grid.

    Energy loads are summed, power loads integrated by the trapezoid rule,
    cumulative meters differenced (last minus first), weather averaged.
    Hours without any source sample are missing. Hourly input is returned
    unchanged.
    """
    idx = frame.timestamps
    if _is_hourly(idx) and all(r not in ("load_power", "load_cumulative") for r in frame.roles.values()):
        return frame.replace(data=frame.data.copy())
    if _is_hourly(idx):
        # an hourly power sample is the mean power over that hour: energy = value * 1 h
        return frame.replace(data=frame.data.copy(), roles={c: ("load" if r in LOAD_ROLES else r) for c, r in frame.roles.items()})

    hours = pd.date_range(idx[0].floor("h"), idx[-1].floor("h"), freq="h", name=TIMESTAMP_COLUMN)
    bucket = idx.floor("h")
    out = {}
    for c, role in frame.roles.items():
        col = frame.data[c]
        grouped = col.groupby(bucket)
        if role == "load":
            agg = grouped.sum(min_count=1)
        elif role == "load_cumulative":
            agg = grouped.last() - grouped.first()
        elif role == "load_power":
            agg = _trapezoid_hourly(col)
            counts = grouped.count()
            agg = agg.reindex(counts.index)
            agg[counts == 0] = np.nan
        else:
            agg = grouped.mean()
        out[c] = agg.reindex(hours)
    data = pd.DataFrame(out, index=hours)
    roles = {c: ("load" if r in LOAD_ROLES else r) for c, r in frame.roles.items()}
    return TimeSeriesFrame(data=data, roles=roles, gap_exclusions=frame.gap_exclusions)


def merge_weather(loads: TimeSeriesFrame, weather: TimeSeriesFrame, tolerance=pd.Timedelta(minutes=30)) -> TimeSeriesFrame:
    """Join weather channels onto the load timeline.

    Exact hour matches win; otherwise the nearest weather row within
    ``tolerance`` is used.
    """
    clash = set(loads.channels) & set(weather.channels)
    if clash:
        raise SchemaMismatchError(f"channel names collide: {sorted(clash)}")
    left = loads.data.reset_index()
    right = weather.data.sort_index().reset_index()
    merged = pd.merge_asof(
        left.sort_values(TIMESTAMP_COLUMN), right, on=TIMESTAMP_COLUMN,
        direction="nearest", tolerance=tolerance,
    ).set_index(TIMESTAMP_COLUMN)
    exact = weather.data.reindex(loads.timestamps)
    for c in weather.channels:
        merged[c] = exact[c].where(exact[c].notna(), merged[c])
    roles = {**loads.roles, **weather.roles}
    return TimeSeriesFrame(data=merged[list(roles)], roles=roles, gap_exclusions=loads.gap_exclusions)


@dataclass(frozen=True)
class SplitSpec:
    train_end: pd.Timestamp
    test_start: pd.Timestamp
    val_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "train_end", pd.Timestamp(self.train_end))
        object.__setattr__(self, "test_start", pd.Timestamp(self.test_start))
        if self.train_end > self.test_start:
            raise ValueError(f"train_end {self.train_end} is after test_start {self.test_start}")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


def chronological_split(frame: TimeSeriesFrame, spec: SplitSpec):
    """Split into (train, validation, test) frames without shuffling.

    Train is ``[start, train_end)``; its last ``floor(val_fraction * n)`` rows
    become validation. Test is ``[test_start, end]``.
    """
    idx = frame.timestamps
    if len(idx) == 0 or spec.train_end <= idx[0] or spec.test_start > idx[-1]:
        raise EmptyPartitionError("split boundaries fall outside the frame")
    pre = frame.slice(stop=spec.train_end)
    n_val = int(math.floor(spec.val_fraction * len(pre)))
    n_train = len(pre) - n_val
    if n_train == 0 or n_val == 0:
        raise EmptyPartitionError(f"train/validation partition empty ({n_train}/{n_val} rows)")
    cut = pre.timestamps[n_train]
    train = pre.slice(stop=cut)
    val = pre.slice(start=cut)
    test = frame.slice(start=spec.test_start)
    if len(test) == 0:
        raise EmptyPartitionError("test partition empty")
    return train, val, test
