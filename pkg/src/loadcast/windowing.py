"""Supervised input/output windows over a feature matrix.

Training uses rolling windows (stride 1); testing uses sliding windows with
stride 24 so consecutive output windows tile the test range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .features import FeatureMatrix, takens_embed

IN_LEN = 24
OUT_LEN = 24


@dataclass
class WindowedDataset:
    """``inputs`` is ``(N, steps, f)``; ``targets`` and ``history`` are ``(N, 24)``.

    ``history`` holds the target's own (scaled) values over each input window;
    the seasonal-naive forecaster and the MASE reference use it. Values are
    scaled; ``target_scale`` = (mean, std) converts them back to physical units.
    """

    inputs: np.ndarray
    targets: np.ndarray
    history: np.ndarray
    feature_names: list[str]
    sample_timestamps: pd.DatetimeIndex
    target_scale: tuple[float, float] = (0.0, 1.0)
    target: str = ""
    group: str = "none"

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    @property
    def steps(self) -> int:
        return self.inputs.shape[1]

    def to_physical(self, values) -> np.ndarray:
        mean, std = self.target_scale
        return np.asarray(values, dtype=float) * std + mean

    def subset(self, index) -> "WindowedDataset":
        return replace(
            self,
            inputs=self.inputs[index],
            targets=self.targets[index],
            history=self.history[index],
            sample_timestamps=self.sample_timestamps[index],
        )

    def save(self, directory) -> None:
        """CSV shards (inputs flattened, targets, history) plus a JSON manifest."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        fmt = "%.17g"
        np.savetxt(d / "inputs.csv", flatten(self), delimiter=",", fmt=fmt)
        np.savetxt(d / "targets.csv", self.targets, delimiter=",", fmt=fmt)
        np.savetxt(d / "history.csv", self.history, delimiter=",", fmt=fmt)
        manifest = {
            "shape": list(self.inputs.shape),
            "feature_names": self.feature_names,
            "sample_timestamps": [t.isoformat() for t in self.sample_timestamps],
            "target_scale": list(self.target_scale),
            "target": self.target,
            "group": self.group,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "WindowedDataset":
        d = Path(directory)
        m = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        n, steps, f = m["shape"]

        def read(name, cols):
            return np.loadtxt(d / name, delimiter=",", ndmin=2).reshape(n, cols)

        return cls(
            inputs=unflatten(read("inputs.csv", steps * f), steps, f),
            targets=read("targets.csv", OUT_LEN),
            history=read("history.csv", IN_LEN),
            feature_names=m["feature_names"],
            sample_timestamps=pd.DatetimeIndex(m["sample_timestamps"]),
            target_scale=tuple(m["target_scale"]),
            target=m["target"],
            group=m["group"],
        )


def window_count(T: int, stride: int, in_len: int = IN_LEN, out_len: int = OUT_LEN) -> int:
    if T < in_len + out_len:
        return 0
    return (T - in_len - out_len) // stride + 1


def _valid_starts(timestamps: pd.DatetimeIndex, starts: np.ndarray, span: int, exclusions) -> np.ndarray:
    hour = pd.Timedelta(hours=1)
    ts = timestamps
    contiguous = (ts[starts + span - 1] - ts[starts]) == (span - 1) * hour
    ok = np.asarray(contiguous, dtype=bool)
    for ex_start, ex_end in exclusions:
        first = ts[starts]
        last = ts[starts + span - 1]
        ok &= ~((first < pd.Timestamp(ex_end)) & (last >= pd.Timestamp(ex_start)))
    return starts[ok]


def make_windows(matrix: FeatureMatrix, in_len: int = IN_LEN, out_len: int = OUT_LEN, stride: int = 1) -> WindowedDataset:
    """Cut ``(input, output)`` windows every ``stride`` rows.

    Sample ``i`` takes inputs from rows ``[i*stride, i*stride+in_len)`` and
    targets (column 0) from the next ``out_len`` rows. Windows that are not
    hour-contiguous or touch a gap exclusion are dropped.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    T = len(matrix)
    if T < in_len + out_len:
        raise ValueError(f"matrix of {T} rows is shorter than in_len + out_len = {in_len + out_len}")
    n = window_count(T, stride, in_len, out_len)
    starts = np.arange(n) * stride
    starts = _valid_starts(matrix.timestamps, starts, in_len + out_len, matrix.gap_exclusions)

    values = matrix.values
    rows_in = starts[:, None] + np.arange(in_len)[None, :]
    rows_out = starts[:, None] + in_len + np.arange(out_len)[None, :]
    inputs = values[rows_in]  # (N, in_len, f)
    targets = values[rows_out, 0]
    history = values[rows_in, 0]
    names = list(matrix.columns)
    if matrix.embedding is not None:
        delay, dim = matrix.embedding
        inputs = takens_embed(history, delay=delay, dimension=dim)
        names = [f"{matrix.target}_lag{k * delay}" for k in range(dim)]
    sample_ts = matrix.timestamps[starts + in_len] if len(starts) else pd.DatetimeIndex([])
    return WindowedDataset(
        inputs=np.ascontiguousarray(inputs, dtype=float),
        targets=np.ascontiguousarray(targets, dtype=float),
        history=np.ascontiguousarray(history, dtype=float),
        feature_names=names,
        sample_timestamps=pd.DatetimeIndex(sample_ts),
        target_scale=matrix.target_scale,
        target=matrix.target,
        group=matrix.group,
    )


def flatten(ds_or_inputs) -> np.ndarray:
    """Row-major ``(N, steps*f)``: time-major, then feature ``[t0f0, t0f1, t1f0, ...]``."""
    x = ds_or_inputs.inputs if isinstance(ds_or_inputs, WindowedDataset) else np.asarray(ds_or_inputs)
    return x.reshape(x.shape[0], -1)


def unflatten(flat, steps: int, n_features: int) -> np.ndarray:
    flat = np.asarray(flat)
    return flat.reshape(flat.shape[0], steps, n_features)


def split_validation(ds: WindowedDataset, val_fraction: float = 0.2):
    """Chronological split: the last ``floor(val_fraction * N)`` windows validate."""
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must be in (0, 1)")
    n_val = int(math.floor(val_fraction * len(ds)))
    n_train = len(ds) - n_val
    if n_val == 0 or n_train == 0:
        raise ValueError(f"cannot split {len(ds)} windows with val_fraction={val_fraction}")
    return ds.subset(slice(0, n_train)), ds.subset(slice(n_train, None))
