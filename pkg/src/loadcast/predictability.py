"""Weighted permutation entropy as a predictability indicator.

Each embedding vector ``(x_j, x_{j+tau}, ..., x_{j+(m-1)tau})`` contributes
its ordinal pattern with weight equal to the vector's population variance.
The entropy is the Shannon entropy (nats) of the weight-normalized pattern
distribution; ``normalize`` divides by ``ln(m!)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

# Normalized entropy above this value indicates substantial randomness.
RANDOMNESS_THRESHOLD = 0.5


@dataclass(frozen=True)
class WpeParams:
    order: int = 7
    delay: int = 1
    normalize: bool = False

    def __post_init__(self):
        if self.order < 2:
            raise ValueError(f"order must be >= 2, got {self.order}")
        if self.delay < 1:
            raise ValueError(f"delay must be >= 1, got {self.delay}")

    @property
    def span(self) -> int:
        return (self.order - 1) * self.delay + 1


def _embed(x: np.ndarray, params: WpeParams) -> np.ndarray:
    n_vec = len(x) - (params.order - 1) * params.delay
    if n_vec < 1:
        raise ValueError(
            f"series of length {len(x)} is shorter than (m-1)*tau+1 = {params.span}"
        )
    cols = [x[k * params.delay: k * params.delay + n_vec] for k in range(params.order)]
    return np.stack(cols, axis=1)


def ordinal_patterns(series, params: WpeParams = WpeParams()):
    """Pattern id and weight of every embedding vector.

    The pattern is the stable argsort of the vector (ties keep order of
    appearance), encoded as ``sum(perm[k] * m**k)``. Returns
    ``(pattern_ids, weights)`` as arrays.
    """
    x = np.asarray(series, dtype=float)
    if np.isnan(x).any():
        raise ValueError("series contains missing values")
    emb = _embed(x, params)
    perm = np.argsort(emb, axis=1, kind="stable")
    radix = params.order ** np.arange(params.order)
    ids = perm @ radix
    weights = emb.var(axis=1)
    return ids, weights


def decode_pattern(pattern_id: int, order: int) -> tuple[int, ...]:
    digits = []
    for _ in range(order):
        pattern_id, d = divmod(int(pattern_id), order)
        digits.append(d)
    return tuple(digits)


def pattern_weights(series, params: WpeParams = WpeParams()) -> dict[int, float]:
    """Total weight per observed pattern."""
    ids, weights = ordinal_patterns(series, params)
    uniq, inv = np.unique(ids, return_inverse=True)
    totals = np.bincount(inv, weights=weights)
    return dict(zip(uniq.tolist(), totals.tolist()))


def entropy_from_weights(totals, order: int, normalize: bool) -> float:
    w = np.asarray(list(totals), dtype=float)
    total = w.sum()
    if total <= 0:
        return 0.0
    p = w[w > 0] / total
    h = float(-(p * np.log(p)).sum())
    h = max(h, 0.0)
    if normalize:
        h /= math.log(math.factorial(order))
    return h


def weighted_permutation_entropy(series, params: WpeParams = WpeParams()) -> float:
    """Weighted permutation entropy; 0 for a constant series (zero total weight)."""
    return entropy_from_weights(pattern_weights(series, params).values(), params.order, params.normalize)


@dataclass
class ChannelPredictability:
    channel: str
    wpe: float
    wpe_normalized: float
    n_patterns: int
    n_windows: int
    total_weight: float

    @property
    def random(self) -> bool:
        return self.wpe_normalized > RANDOMNESS_THRESHOLD


@dataclass
class PredictabilityReport:
    params: WpeParams
    rows: list[ChannelPredictability] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return {r.channel: (r.wpe_normalized if self.params.normalize else r.wpe) for r in self.rows}

    def ranked(self) -> list[ChannelPredictability]:
        """Channels from most to least predictable."""
        return sorted(self.rows, key=lambda r: (r.wpe_normalized, r.channel))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "wpe", "wpe_normalized", "n_patterns", "n_windows"])
            for r in self.rows:
                w.writerow([r.channel, repr(r.wpe), repr(r.wpe_normalized), r.n_patterns, r.n_windows])

    def to_json(self, path) -> None:
        payload = {"params": asdict(self.params), "channels": [asdict(r) for r in self.rows]}
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _segments(values: np.ndarray, min_len: int):
    """Runs of consecutive non-missing values at least ``min_len`` long."""
    ok = ~np.isnan(values)
    start = None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start >= min_len:
                yield values[start:i]
            start = None


def channel_predictability(name: str, values, params: WpeParams) -> ChannelPredictability:
    """wPE of one channel, pooling pattern weights over contiguous observed runs."""
    values = np.asarray(values, dtype=float)
    totals: dict[int, float] = {}
    n_windows = 0
    for seg in _segments(values, params.span):
        for k, v in pattern_weights(seg, params).items():
            totals[k] = totals.get(k, 0.0) + v
        n_windows += len(seg) - params.span + 1
    if n_windows == 0:
        raise ValueError(f"channel {name!r} has no observed run of length >= {params.span}")
    return ChannelPredictability(
        channel=name,
        wpe=entropy_from_weights(totals.values(), params.order, False),
        wpe_normalized=entropy_from_weights(totals.values(), params.order, True),
        n_patterns=len(totals),
        n_windows=n_windows,
        total_weight=float(sum(totals.values())),
    )


def predictability_report(frame, params: WpeParams = WpeParams(), channels=None) -> PredictabilityReport:
    """wPE for every load channel of ``frame`` (pass the training partition).

    Time gaps split the series; no embedding vector spans a gap.
    """
    channels = frame.load_channels if channels is None else list(channels)
    # put absent hours back as NaN so vectors never straddle a gap
    idx = frame.timestamps
    if len(idx):
        full = frame.data.reindex(pd.date_range(idx[0], idx[-1], freq="h"))
    else:
        full = frame.data
    report = PredictabilityReport(params=params)
    for c in channels:
        report.rows.append(channel_predictability(c, full[c].to_numpy(dtype=float), params))
    return report
