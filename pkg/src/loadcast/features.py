"""Feature groups built from a preprocessed, standardized frame.

Every column at time ``t`` depends only on data at times ``<= t``; calendar
columns depend on ``t`` itself. The phase-space group is not a set of columns
but a per-window delay embedding of the target, applied in windowing.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import TimeSeriesFrame

logger = logging.getLogger(__name__)

LS_CAP_HOURS = 168
MOVING_WINDOWS = (12, 24, 36, 72)
WARMUP_HOURS = max(MOVING_WINDOWS)


class FeatureGroup(str, enum.Enum):
    NONE = "none"
    DATETIME = "datetime"
    WEATHER = "weather"
    APPLIANCES = "appliances"
    LS_ON_OFF = "ls_on_off"
    AUTOREGRESSIVE = "autoregressive"
    INTERACTION = "interaction"
    PHASE_SPACE = "phase_space"
    W_PLUS_DT = "w_plus_dt"
    ALL = "all"

    @classmethod
    def parse(cls, name) -> "FeatureGroup":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("+", "_plus_").replace("-", "_").replace(" ", "")
        key = {"w_plus_dt": "w_plus_dt", "w_plus__dt": "w_plus_dt", "date_time": "datetime"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise UnknownFeatureGroupError(f"unknown feature group {name!r}") from None


class UnknownFeatureGroupError(ValueError):
    pass


class IncompatibleFeatureGroupError(ValueError):
    pass


# Column-producing groups that make up "all".
CONCRETE_COLUMN_GROUPS = (
    FeatureGroup.DATETIME,
    FeatureGroup.WEATHER,
    FeatureGroup.APPLIANCES,
    FeatureGroup.LS_ON_OFF,
    FeatureGroup.AUTOREGRESSIVE,
    FeatureGroup.INTERACTION,
)


def expand_group(group: FeatureGroup) -> tuple[FeatureGroup, ...]:
    group = FeatureGroup.parse(group)
    if group is FeatureGroup.W_PLUS_DT:
        return (FeatureGroup.WEATHER, FeatureGroup.DATETIME)
    if group is FeatureGroup.ALL:
        return CONCRETE_COLUMN_GROUPS
    if group in (FeatureGroup.NONE, FeatureGroup.PHASE_SPACE):
        return ()
    return (group,)


def _week_of_month(day) -> np.ndarray:
    return np.minimum(np.ceil(np.asarray(day) / 7.0), 5).astype(int)


def cyclical_encode(timestamps, train_span=pd.Timedelta(0)) -> pd.DataFrame:
    """Sine/cosine encoding of hour, weekday, week-of-month and (optionally) month.

    ``n = hour/24, weekday/7 (Monday = 0), wom/5 with wom = ceil(day/7)``;
    the month pair (``month/12``) is emitted only when ``train_span`` exceeds
    one year.
    """
    idx = pd.DatetimeIndex(np.atleast_1d(pd.DatetimeIndex(pd.to_datetime(timestamps))))
    cases = {
        "hour": idx.hour.to_numpy() / 24.0,
        "dow": idx.dayofweek.to_numpy() / 7.0,
        "wom": _week_of_month(idx.day.to_numpy()) / 5.0,
    }
    if pd.Timedelta(train_span) > pd.Timedelta(days=365):
        cases["month"] = idx.month.to_numpy() / 12.0
    cols = {}
    for name, n in cases.items():
        cols[f"sin_{name}"] = np.sin(2 * np.pi * n)
        cols[f"cos_{name}"] = np.cos(2 * np.pi * n)
    return pd.DataFrame(cols, index=idx)


def read_holidays(path) -> set:
    dates = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            dates.add(pd.Timestamp(line).date())
    return dates


def calendar_flags(timestamps, holidays=frozenset()) -> pd.DataFrame:
    """Binary is_workday / is_holiday / is_weekend indicators."""
    idx = pd.DatetimeIndex(np.atleast_1d(pd.DatetimeIndex(pd.to_datetime(timestamps))))
    holidays = {pd.Timestamp(d).date() for d in holidays}
    weekend = idx.dayofweek.to_numpy() >= 5
    holiday = np.array([d in holidays for d in idx.date], dtype=bool)
    return pd.DataFrame(
        {
            "is_workday": (~weekend & ~holiday).astype(float),
            "is_holiday": holiday.astype(float),
            "is_weekend": weekend.astype(float),
        },
        index=idx,
    )


def _hours_since(flag: np.ndarray, cap: int) -> np.ndarray:
    out = np.empty(len(flag))
    since = None
    for i, f in enumerate(flag):
        if f:
            since = 0
        elif since is not None:
            since += 1
        out[i] = cap if since is None else min(since, cap)
    return out


def last_seen_states(target, on_threshold: float = 15.0, cap: int = LS_CAP_HOURS) -> pd.DataFrame:
    """Hours since the appliance was last ON (``ls_on``) and last OFF (``ls_off``).

    ON means ``load > on_threshold``. Before the first occurrence of a state
    the value is ``cap``; values are capped at ``cap``.
    """
    x = np.asarray(target, dtype=float)
    on = x > on_threshold
    index = target.index if isinstance(target, pd.Series) else None
    return pd.DataFrame({"ls_on": _hours_since(on, cap), "ls_off": _hours_since(~on, cap)}, index=index)


def moving_stats(target, windows=MOVING_WINDOWS) -> pd.DataFrame:
    """Moving mean and max over the strictly-past ``k`` hours ``[t-k, t-1]``.

    Rows with fewer than ``k`` past values are NaN (warm-up).
    """
    s = pd.Series(np.asarray(target, dtype=float))
    past = s.shift(1)
    cols = {}
    for k in windows:
        roll = past.rolling(k, min_periods=k)
        cols[f"ma_{k}"] = roll.mean().to_numpy()
        cols[f"mmax_{k}"] = roll.max().to_numpy()
    index = target.index if isinstance(target, pd.Series) else None
    return pd.DataFrame(cols, index=index)


def interaction_features(appliances: pd.DataFrame) -> pd.DataFrame:
    """Pairwise sum/product/mean/std plus cross-appliance mean and std.

    Produces ``4 * C(A, 2) + 2`` columns for ``A >= 2`` appliances; std is
    the population formula.
    """
    names = list(appliances.columns)
    if len(names) < 2:
        logger.warning("interaction features need >= 2 appliances, got %d", len(names))
        return pd.DataFrame(index=appliances.index)
    cols = {}
    for a, b in combinations(names, 2):
        x, y = appliances[a].to_numpy(dtype=float), appliances[b].to_numpy(dtype=float)
        cols[f"{a}+{b}_sum"] = x + y
        cols[f"{a}+{b}_prod"] = x * y
        cols[f"{a}+{b}_mean"] = (x + y) / 2
        cols[f"{a}+{b}_std"] = np.abs(x - y) / 2
    values = appliances.to_numpy(dtype=float)
    cols["appliances_mean"] = values.mean(axis=1)
    cols["appliances_std"] = values.std(axis=1)
    return pd.DataFrame(cols, index=appliances.index)


def takens_embed(series, delay: int = 1, dimension: int = 2) -> np.ndarray:
    """Delay vectors ``(x_t, x_{t+delay}, ..., x_{t+(d-1)delay})`` as rows.

    Works along the last axis, so a batch ``(N, L)`` gives ``(N, L', d)``.
    """
    x = np.asarray(series, dtype=float)
    span = (dimension - 1) * delay
    n = x.shape[-1] - span
    if n < 1:
        raise ValueError(f"series of length {x.shape[-1]} too short for dimension {dimension}, delay {delay}")
    return np.stack([x[..., k * delay: k * delay + n] for k in range(dimension)], axis=-1)


@dataclass
class FeatureConfig:
    on_threshold: float = 15.0  # W, on unscaled load
    holidays: frozenset = frozenset()
    train_span: pd.Timedelta = pd.Timedelta(0)
    takens_delay: int = 1
    takens_dimension: int = 2
    warmup: int = WARMUP_HOURS


@dataclass
class FeatureMatrix:
    """Hourly feature rows with column provenance.

    ``values`` has one row per timestamp; column 0 is always the target's
    own (scaled) history. ``embedding`` is set for the phase-space group and
    tells windowing to delay-embed the target window.
    """

    values: np.ndarray
    timestamps: pd.DatetimeIndex
    columns: list[str]
    groups: list[str]
    target: str
    target_scale: tuple[float, float] = (0.0, 1.0)  # mean, std of the target
    gap_exclusions: tuple = ()
    embedding: tuple[int, int] | None = None
    group: str = "none"
    extra: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.timestamps, columns=self.columns)


def count_columns(group, n_appliances: int, n_weather: int, with_month: bool = False) -> int:
    """Closed-form column count (target history included) for ``group``.

    ``n_appliances`` counts every load channel including the target.
    """
    per_group = {
        FeatureGroup.DATETIME: (8 if with_month else 6) + 3,
        FeatureGroup.WEATHER: n_weather,
        FeatureGroup.APPLIANCES: n_appliances - 1,
        FeatureGroup.LS_ON_OFF: 2,
        FeatureGroup.AUTOREGRESSIVE: 2 * len(MOVING_WINDOWS),
        FeatureGroup.INTERACTION: (4 * math.comb(n_appliances, 2) + 2) if n_appliances >= 2 else 0,
    }
    return 1 + sum(per_group[g] for g in expand_group(group))


def _continuous_runs(idx: pd.DatetimeIndex) -> np.ndarray:
    """Run id per row; a new run starts wherever the hourly spacing breaks."""
    if len(idx) == 0:
        return np.zeros(0, dtype=int)
    step = np.diff(idx.asi8) != pd.Timedelta(hours=1).value
    return np.concatenate([[0], np.cumsum(step)])


def _group_columns(group: FeatureGroup, frame: TimeSeriesFrame, target: str, scaler, config: FeatureConfig):
    data = frame.data
    idx = frame.timestamps
    if group is FeatureGroup.DATETIME:
        return pd.concat([cyclical_encode(idx, config.train_span), calendar_flags(idx, config.holidays)], axis=1)
    if group is FeatureGroup.WEATHER:
        return data[frame.weather_channels].copy()
    if group is FeatureGroup.APPLIANCES:
        return data[[c for c in frame.load_channels if c != target]].copy()
    if group is FeatureGroup.INTERACTION:
        return interaction_features(data[frame.load_channels])
    runs = _continuous_runs(idx)
    parts = []
    for run in np.unique(runs):
        seg = data[target][runs == run]
        if group is FeatureGroup.LS_ON_OFF:
            threshold = config.on_threshold
            if scaler is not None and target not in scaler.constant:
                threshold = (threshold - scaler.mean[target]) / scaler.std[target]
            # hours scaled into [0, 1] by the cap
            parts.append(last_seen_states(seg, threshold) / LS_CAP_HOURS)
        else:
            parts.append(moving_stats(seg))
    return pd.concat(parts).set_axis(idx)


def check_compatible(group, model_kind: str) -> None:
    from .forecasters import PHASE_SPACE_COMPATIBLE

    if FeatureGroup.parse(group) is FeatureGroup.PHASE_SPACE and model_kind not in PHASE_SPACE_COMPATIBLE:
        raise IncompatibleFeatureGroupError(
            f"phase_space inputs are not shape-compatible with model {model_kind!r}"
        )


def assemble(frame: TimeSeriesFrame, target: str, group, config: FeatureConfig | None = None,
             scaler=None, model_kind: str | None = None) -> FeatureMatrix:
    """Build the feature matrix for ``group`` from a standardized frame.

    ``scaler`` maps the ON threshold into scaled units and records the
    target's scale. The first ``config.warmup`` rows of each contiguous run
    are dropped for every group so all groups share the same sample rows.
    """
    config = config or FeatureConfig()
    group = FeatureGroup.parse(group)
    if target not in frame.channels:
        raise KeyError(f"target channel {target!r} not in frame")
    if model_kind is not None:
        check_compatible(group, model_kind)
    if frame.data.isna().any().any():
        raise ValueError("frame has missing cells; run preprocessing first")

    blocks = [frame.data[[target]]]
    provenance = ["target"]
    for g in expand_group(group):
        cols = _group_columns(g, frame, target, scaler, config)
        blocks.append(cols)
        provenance += [g.value] * cols.shape[1]
    table = pd.concat(blocks, axis=1)
    if table.columns.duplicated().any():
        dup = table.columns[table.columns.duplicated()].tolist()
        raise ValueError(f"duplicate feature columns {dup}")

    runs = _continuous_runs(frame.timestamps)
    pos_in_run = pd.Series(np.arange(len(runs))).groupby(runs).cumcount().to_numpy()
    keep = pos_in_run >= config.warmup
    table = table.loc[keep]
    if table.isna().any().any():
        raise ValueError("undefined feature values after warm-up trimming")

    t_scale = (0.0, 1.0)
    if scaler is not None and target not in scaler.constant:
        t_scale = (scaler.mean[target], scaler.std[target])
    embedding = (config.takens_delay, config.takens_dimension) if group is FeatureGroup.PHASE_SPACE else None
    return FeatureMatrix(
        values=table.to_numpy(dtype=float),
        timestamps=pd.DatetimeIndex(table.index),
        columns=[str(c) for c in table.columns],
        groups=provenance,
        target=target,
        target_scale=t_scale,
        gap_exclusions=tuple(frame.gap_exclusions),
        embedding=embedding,
        group=group.value,
    )
