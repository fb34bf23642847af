"""Synthetic hourly household with a planted daily cycle and weather coupling.

The fridge load is a daily sinusoid plus a temperature-coupled component
plus 10 % multiplicative noise. Other appliances are bursty event loads so
the appliance and interaction groups have something to work with.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .ingest import TimeSeriesFrame

FRIDGE_BASE = 60.0
FRIDGE_DAILY_AMPLITUDE = 25.0
FRIDGE_TEMP_COEF = 4.0  # Wh per degree C above the reference
REFERENCE_TEMP = 12.0
NOISE_FRACTION = 0.10


def synthetic_weather(index: pd.DatetimeIndex, rng) -> pd.DataFrame:
    n = len(index)
    hour = index.hour.to_numpy()
    day = np.arange(n) / 24.0
    anomaly = np.zeros(n)
    for t in range(1, n):
        anomaly[t] = 0.98 * anomaly[t - 1] + rng.normal(0.0, 0.8)
    temp = REFERENCE_TEMP + 4.0 * np.sin(2 * np.pi * day / 365.0) + 5.0 * np.sin(2 * np.pi * (hour - 9) / 24) + anomaly
    humidity = np.clip(70 - 1.5 * (temp - REFERENCE_TEMP) + rng.normal(0, 3, n), 5, 100)
    wind = np.abs(3.0 + 0.5 * anomaly + rng.normal(0, 1.0, n))
    return pd.DataFrame({"temperature": temp, "humidity": humidity, "wind_speed": wind}, index=index)


def _bursts(index, rng, hours, p_day, length, power):
    """One usage burst on a random subset of days, starting in ``hours``."""
    out = np.zeros(len(index))
    days = np.flatnonzero(index.hour.to_numpy() == 0)
    for d in days:
        if rng.random() < p_day:
            start = d + int(rng.choice(hours))
            stop = min(start + length, len(index))
            out[start:stop] = power * rng.uniform(0.8, 1.2, stop - start)
    return out


def synthetic_household(days: int = 120, start="2021-01-04", seed: int = 0) -> TimeSeriesFrame:
    """Hourly frame with fridge, washing_machine, dishwasher, television and weather."""
    rng = np.random.default_rng(seed)
    index = pd.date_range(pd.Timestamp(start), periods=24 * days, freq="h", name="timestamp")
    weather = synthetic_weather(index, rng)
    hour = index.hour.to_numpy()
    clean = (
        FRIDGE_BASE
        + FRIDGE_DAILY_AMPLITUDE * np.sin(2 * np.pi * (hour - 7) / 24)
        + FRIDGE_TEMP_COEF * (weather["temperature"].to_numpy() - REFERENCE_TEMP)
    )
    fridge = np.maximum(clean * (1.0 + NOISE_FRACTION * rng.standard_normal(len(index))), 0.0)
    washing = _bursts(index, rng, hours=range(8, 12), p_day=0.35, length=2, power=450.0)
    dishwasher = _bursts(index, rng, hours=range(19, 22), p_day=0.5, length=2, power=600.0)
    evening = ((hour >= 18) & (hour <= 23)).astype(float)
    tv = evening * rng.uniform(0, 1, len(index)) * 90.0 + 2.0
    data = pd.DataFrame(
        {
            "fridge": fridge,
            "washing_machine": washing,
            "dishwasher": dishwasher,
            "television": tv,
        },
        index=index,
    )
    data = pd.concat([data, weather], axis=1)
    roles = {
        "fridge": "load",
        "washing_machine": "load",
        "dishwasher": "load",
        "television": "load",
        "temperature": "weather_temp",
        "humidity": "weather_humidity",
        "wind_speed": "weather_wind",
    }
    return TimeSeriesFrame(data=data, roles=roles)
