import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadcast.features import (
    FeatureConfig,
    FeatureGroup,
    IncompatibleFeatureGroupError,
    UnknownFeatureGroupError,
    assemble,
    calendar_flags,
    count_columns,
    cyclical_encode,
    expand_group,
    interaction_features,
    last_seen_states,
    moving_stats,
    read_holidays,
    takens_embed,
)
from loadcast.preprocess import apply_scaler, fit_scaler

from conftest import hourly_frame


def household(n=24 * 20, n_app=3, n_weather=2, seed=0, start="2021-01-04"):
    rng = np.random.default_rng(seed)
    cols, roles = {}, {}
    for k in range(n_app):
        cols[f"app{k}"] = rng.uniform(0, 40, n)
        roles[f"app{k}"] = "load"
    for k, role in zip(range(n_weather), ("weather_temp", "weather_humidity", "weather_wind")):
        cols[f"w{k}"] = rng.normal(size=n)
        roles[f"w{k}"] = role
    return hourly_frame(cols, roles, start=start)


def test_parse_aliases():
    assert FeatureGroup.parse("w+dt") is FeatureGroup.W_PLUS_DT
    assert FeatureGroup.parse("DateTime") is FeatureGroup.DATETIME
    with pytest.raises(UnknownFeatureGroupError):
        FeatureGroup.parse("vest")


def test_cyclical_hour_zero_and_adjacency():
    ts = pd.date_range("2021-01-04", periods=24, freq="h")
    enc = cyclical_encode(ts)
    assert (enc["sin_hour"].iloc[0], enc["cos_hour"].iloc[0]) == (0.0, 1.0)
    pts = enc[["sin_hour", "cos_hour"]].to_numpy()
    d = lambda a, b: np.linalg.norm(pts[a] - pts[b])
    assert d(23, 0) < d(23, 20)
    steps = [d(h, (h + 1) % 24) for h in range(24)]
    np.testing.assert_allclose(steps, steps[0], atol=1e-12)


def test_cyclical_unit_circle_and_month_switch():
    ts = pd.date_range("2020-01-01", periods=24 * 400, freq="h")
    short = cyclical_encode(ts, pd.Timedelta(days=200))
    long = cyclical_encode(ts, pd.Timedelta(days=400))
    assert "sin_month" not in short and "sin_month" in long
    for name in ("hour", "dow", "wom", "month"):
        r = long[f"sin_{name}"] ** 2 + long[f"cos_{name}"] ** 2
        np.testing.assert_allclose(r, 1.0, atol=1e-12)


def test_week_of_month_values():
    ts = pd.DatetimeIndex(["2021-03-01", "2021-03-07", "2021-03-08", "2021-03-29", "2021-03-31"])
    enc = cyclical_encode(ts)
    wom = [1, 1, 2, 5, 5]
    np.testing.assert_allclose(enc["sin_wom"], np.sin(2 * np.pi * np.array(wom) / 5), atol=1e-15)


def test_calendar_flags(tmp_path):
    (tmp_path / "h.txt").write_text("2021-01-06  # holiday\n", encoding="utf-8")
    hol = read_holidays(tmp_path / "h.txt")
    ts = pd.DatetimeIndex(["2021-01-05 10:00", "2021-01-06 10:00", "2021-01-09 10:00"])
    f = calendar_flags(ts, hol)
    assert f["is_workday"].tolist() == [1, 0, 0]
    assert f["is_holiday"].tolist() == [0, 1, 0]
    assert f["is_weekend"].tolist() == [0, 0, 1]


def test_last_seen_states_hand_example():
    x = pd.Series([0, 20, 20, 0, 0, 0, 20.0])
    ls = last_seen_states(x, 15, cap=4)
    assert ls["ls_on"].tolist() == [4, 0, 0, 1, 2, 3, 0]
    assert ls["ls_off"].tolist() == [0, 1, 2, 0, 0, 0, 1]


def test_last_seen_cap():
    ls = last_seen_states(pd.Series(np.r_[20.0, np.zeros(300)]), 15)
    assert ls["ls_on"].max() == 168


def test_moving_stats_strictly_past(rng):
    x = pd.Series(rng.normal(size=200))
    m = moving_stats(x, windows=(12,))
    assert m["ma_12"].iloc[:12].isna().all()
    for t in (12, 50, 199):
        assert m["ma_12"].iloc[t] == pytest.approx(x.iloc[t - 12:t].mean(), abs=1e-12)
        assert m["mmax_12"].iloc[t] == x.iloc[t - 12:t].max()


def test_interaction_columns_and_values():
    df = pd.DataFrame({"a": [1.0, 2.0], "b": [3.0, 6.0], "c": [0.0, 1.0]})
    out = interaction_features(df)
    assert out.shape[1] == 4 * math.comb(3, 2) + 2
    assert out["a+b_prod"].tolist() == [3.0, 12.0]
    assert out["a+b_std"].tolist() == [1.0, 2.0]
    np.testing.assert_allclose(out["appliances_std"], df.to_numpy().std(axis=1))


def test_takens_shapes():
    assert takens_embed(np.arange(24.0), 1, 2).shape == (23, 2)
    e = takens_embed(np.arange(10.0), 2, 3)
    assert e.shape == (6, 3) and e[0].tolist() == [0, 2, 4]
    assert takens_embed(np.zeros((5, 24)), 1, 2).shape == (5, 23, 2)
    with pytest.raises(ValueError):
        takens_embed(np.arange(3.0), 2, 3)


def test_expand_and_union():
    assert set(expand_group("w_plus_dt")) == {FeatureGroup.WEATHER, FeatureGroup.DATETIME}
    assert FeatureGroup.PHASE_SPACE not in expand_group("all")
    assert expand_group("none") == ()


def test_w_plus_dt_is_exact_union():
    frame = household()
    cfg = FeatureConfig()
    cols = lambda g: set(assemble(frame, "app0", g, cfg).columns) - {"app0"}
    assert cols("w_plus_dt") == cols("weather") | cols("datetime")


@pytest.mark.parametrize("group", ["none", "datetime", "weather", "appliances", "ls_on_off",
                                   "autoregressive", "interaction", "w_plus_dt", "all"])
@pytest.mark.parametrize("n_app,n_weather", [(5, 3), (2, 1), (3, 0)])
def test_column_count_formula(group, n_app, n_weather):
    frame = household(n_app=n_app, n_weather=n_weather)
    m = assemble(frame, "app0", group, FeatureConfig())
    assert m.n_features == count_columns(group, n_app, n_weather)
    assert m.columns[0] == "app0"


def test_all_group_count_by_hand():
    # 5 appliances, 3 weather: 1 + 9 + 3 + 4 + 2 + 8 + (4*10+2) = 69
    assert count_columns("all", 5, 3) == 69
    frame = household(n_app=5, n_weather=3)
    assert assemble(frame, "app0", "all", FeatureConfig()).n_features == 69


def test_warmup_rows_dropped_for_every_group():
    frame = household()
    a = assemble(frame, "app0", "none", FeatureConfig())
    b = assemble(frame, "app0", "autoregressive", FeatureConfig())
    assert len(a) == len(frame) - 72
    assert a.timestamps.equals(b.timestamps)


def test_phase_space_sets_embedding_and_checks_model():
    frame = household()
    m = assemble(frame, "app0", "phase_space", FeatureConfig())
    assert m.embedding == (1, 2) and m.n_features == 1
    with pytest.raises(IncompatibleFeatureGroupError):
        assemble(frame, "app0", "phase_space", FeatureConfig(), model_kind="msvr")


def test_ls_threshold_in_scaled_units():
    x = np.tile([0.0, 0.0, 30.0], 40)
    frame = hourly_frame({"a": x, "b": np.ones(120)})
    scaler = fit_scaler(frame, 1.0)
    raw = assemble(frame, "a", "ls_on_off", FeatureConfig())
    scaled = assemble(apply_scaler(frame, scaler), "a", "ls_on_off", FeatureConfig(), scaler=scaler)
    np.testing.assert_array_equal(raw.values[:, 1:], scaled.values[:, 1:])
    assert scaled.target_scale == (scaler.mean["a"], scaler.std["a"])


def test_missing_cells_rejected():
    frame = household()
    frame.data.iloc[5, 0] = np.nan
    with pytest.raises(ValueError):
        assemble(frame, "app0", "none")


def test_runs_split_at_gaps():
    idx = pd.date_range("2021-01-04", periods=400, freq="h").delete(slice(200, 300))
    rng = np.random.default_rng(1)
    frame = hourly_frame({"a": rng.uniform(0, 40, 300), "b": rng.uniform(0, 40, 300)}, index=idx)
    m = assemble(frame, "a", "autoregressive", FeatureConfig())
    # each of the two 200- and 100-row runs loses its first 72 rows
    assert len(m) == (200 - 72) + (100 - 72)
    assert not np.isnan(m.values).any()


@settings(max_examples=15, deadline=None)
@given(st.integers(100, 400), st.sampled_from(["all", "w_plus_dt", "ls_on_off", "autoregressive"]))
def test_no_lookahead(cut, group):
    """Features at time t are unchanged when everything after t is deleted."""
    frame = household(n=480, seed=cut)
    cfg = FeatureConfig(train_span=pd.Timedelta(days=30))
    full = assemble(frame, "app0", group, cfg)
    part = assemble(frame.slice(stop=frame.timestamps[cut]), "app0", group, cfg)
    n = len(part)
    assert full.timestamps[:n].equals(part.timestamps)
    np.testing.assert_array_equal(full.values[:n], part.values)
