import itertools
import math

import numpy as np
import pandas as pd
import pytest

from loadcast.ingest import TimeSeriesFrame


def hourly_frame(columns: dict, roles: dict | None = None, start="2021-01-04", index=None):
    n = len(next(iter(columns.values())))
    if index is None:
        index = pd.date_range(start, periods=n, freq="h", name="timestamp")
    data = pd.DataFrame({k: np.asarray(v, dtype=float) for k, v in columns.items()}, index=index)
    data.index.name = "timestamp"
    roles = roles or {c: "load" for c in columns}
    return TimeSeriesFrame(data=data, roles=roles)


def brute_force_wpe(x, order, delay=1, normalize=False):
    """Dictionary-of-tuples wPE written from the definition, loop by loop."""
    x = [float(v) for v in x]
    weights = {}
    for t in range(len(x) - (order - 1) * delay):
        vec = [x[t + k * delay] for k in range(order)]
        pattern = tuple(sorted(range(order), key=lambda k: (vec[k], k)))
        mean = sum(vec) / order
        w = sum((v - mean) ** 2 for v in vec) / order
        weights[pattern] = weights.get(pattern, 0.0) + w
    total = sum(weights.values())
    if total == 0:
        return 0.0
    h = 0.0
    for w in weights.values():
        if w > 0:
            p = w / total
            h -= p * math.log(p)
    if normalize:
        h /= math.log(math.factorial(order))
    return h


def brute_force_window_count(T, stride, in_len=24, out_len=24):
    count = 0
    for s in itertools.count(0, stride):
        if s + in_len + out_len > T:
            break
        count += 1
    return count


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
