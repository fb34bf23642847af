import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadcast.predictability import (
    RANDOMNESS_THRESHOLD,
    WpeParams,
    channel_predictability,
    decode_pattern,
    ordinal_patterns,
    pattern_weights,
    predictability_report,
    weighted_permutation_entropy,
)

from conftest import brute_force_wpe, hourly_frame


@pytest.mark.parametrize("order", [3, 4, 5, 6, 7])
def test_matches_brute_force(order, rng):
    for _ in range(5):
        x = rng.normal(size=300)
        for normalize in (False, True):
            got = weighted_permutation_entropy(x, WpeParams(order, 1, normalize))
            assert got == pytest.approx(brute_force_wpe(x, order, 1, normalize), abs=1e-12)


def test_delay_matches_brute_force(rng):
    x = rng.normal(size=200)
    for delay in (2, 3, 5):
        got = weighted_permutation_entropy(x, WpeParams(4, delay))
        assert got == pytest.approx(brute_force_wpe(x, 4, delay), abs=1e-12)


def test_monotone_series_is_zero():
    assert weighted_permutation_entropy(np.arange(100.0)) == 0.0
    assert weighted_permutation_entropy(-np.arange(100.0), WpeParams(3)) == 0.0


def test_constant_series_is_zero():
    assert weighted_permutation_entropy(np.full(50, 3.0), WpeParams(3)) == 0.0


def test_two_equiprobable_patterns_give_ln2():
    # alternating series, odd length: 50 up-steps and 50 down-steps of equal weight
    x = np.array([1.0, 2.0] * 50 + [1.0])
    assert weighted_permutation_entropy(x, WpeParams(2)) == pytest.approx(math.log(2), abs=1e-12)
    assert weighted_permutation_entropy(x, WpeParams(2, normalize=True)) == pytest.approx(1.0, abs=1e-12)


def test_ties_follow_first_occurrence():
    ids, _ = ordinal_patterns(np.array([1.0, 1.0, 1.0]), WpeParams(3))
    assert decode_pattern(int(ids[0]), 3) == (0, 1, 2)


def test_pattern_decode_roundtrip(rng):
    x = rng.normal(size=40)
    params = WpeParams(4)
    ids, weights = ordinal_patterns(x, params)
    for t, pid in enumerate(ids):
        vec = x[t:t + 4]
        assert decode_pattern(int(pid), 4) == tuple(int(k) for k in np.argsort(vec, kind="stable"))
        assert weights[t] == pytest.approx(np.var(vec), abs=1e-14)


def test_pattern_weights_sum_to_total_variance(rng):
    x = rng.normal(size=100)
    w = pattern_weights(x, WpeParams(3))
    expect = sum(np.var(x[t:t + 3]) for t in range(98))
    assert sum(w.values()) == pytest.approx(expect, rel=1e-12)


def test_short_series_raises():
    with pytest.raises(ValueError):
        weighted_permutation_entropy(np.arange(5.0), WpeParams(7))


@pytest.mark.parametrize("order,delay", [(1, 1), (3, 0), (2, -1)])
def test_invalid_params(order, delay):
    with pytest.raises(ValueError):
        WpeParams(order, delay)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(-1000, 1000), min_size=20, max_size=80),
    st.floats(0.1, 100.0),
    st.floats(-1e3, 1e3),
)
def test_affine_invariance(values, scale, shift):
    # integer-valued input keeps distinct values distinct after scaling
    x = np.array(values, dtype=float)
    a = weighted_permutation_entropy(x, WpeParams(3))
    b = weighted_permutation_entropy(scale * x + shift, WpeParams(3))
    assert a == pytest.approx(b, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=10, max_size=60))
def test_normalized_in_unit_interval(values):
    h = weighted_permutation_entropy(np.array(values), WpeParams(3, normalize=True))
    assert 0.0 <= h <= 1.0 + 1e-12


def test_noise_versus_sawtooth_threshold(rng):
    noise = weighted_permutation_entropy(rng.uniform(size=20000), WpeParams(3, normalize=True))
    saw = weighted_permutation_entropy(np.tile(np.arange(24.0), 400), WpeParams(3, normalize=True))
    assert noise > RANDOMNESS_THRESHOLD > saw


def test_channel_predictability_skips_gaps(rng):
    a, b = rng.normal(size=50), rng.normal(size=60)
    values = np.concatenate([a, [np.nan], b])
    res = channel_predictability("x", values, WpeParams(3))
    pooled = {}
    for seg in (a, b):
        for k, v in pattern_weights(seg, WpeParams(3)).items():
            pooled[k] = pooled.get(k, 0.0) + v
    total = sum(pooled.values())
    expect = -sum(w / total * math.log(w / total) for w in pooled.values() if w > 0)
    assert res.wpe == pytest.approx(expect, abs=1e-12)
    assert res.n_windows == 48 + 58


def test_report_covers_load_channels_and_ranks(tmp_path, rng):
    n = 24 * 20
    frame = hourly_frame(
        {"steady": np.tile(np.arange(24.0), 20), "noisy": rng.uniform(size=n), "temp": rng.normal(size=n)},
        roles={"steady": "load", "noisy": "load", "temp": "weather_temp"},
    )
    report = predictability_report(frame, WpeParams(3))
    assert [r.channel for r in report.rows] == ["steady", "noisy"]
    assert [r.channel for r in report.ranked()] == ["steady", "noisy"]
    assert not report.rows[0].random and report.rows[1].random
    report.to_csv(tmp_path / "r.csv")
    table = pd.read_csv(tmp_path / "r.csv")
    assert list(table.columns) == ["channel", "wpe", "wpe_normalized", "n_patterns", "n_windows"]
    report.to_json(tmp_path / "r.json")


def test_report_does_not_span_missing_hours(rng):
    idx = pd.date_range("2021-01-01", periods=100, freq="h")
    idx = idx.delete(slice(40, 45))
    x = rng.normal(size=len(idx))
    frame = hourly_frame({"a": x}, index=idx)
    res = predictability_report(frame, WpeParams(3)).rows[0]
    assert res.n_windows == (40 - 2) + (55 - 2)
