import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from loadcast.experiment import ConfigError, ExperimentConfig, load_config, parse_config, run, summarize
from loadcast.ingest import write_csv, write_schema
from loadcast.synthetic import synthetic_household

BASE = """
[data]
name = synth
synthetic_days = 40
targets = fridge
[split]
test_fraction = 0.25
[features]
groups = {groups}
[wpe]
order = 4
[models]
kinds = {kinds}
[model]
hidden = 4
max_epochs = 2
max_iter = 10
[run]
output = out
seed = 3
"""


def config(tmp_path, groups="none", kinds="naive", **extra):
    text = BASE.format(groups=groups, kinds=kinds)
    for line in extra.get("append", []):
        text += line + "\n"
    path = tmp_path / "exp.ini"
    path.write_text(text, encoding="utf-8")
    return load_config(path)


def test_parse_paths_relative_to_file(tmp_path):
    cfg = config(tmp_path)
    assert cfg.output == tmp_path / "out"
    assert cfg.models[0].kind == "naive" and cfg.groups == ("none",)
    assert cfg.wpe.order == 4


def test_per_kind_overrides(tmp_path):
    cfg = config(tmp_path, kinds="ffnn, lstm", append=["[model.lstm]", "hidden = 9"])
    assert {m.kind: m.hidden for m in cfg.models} == {"ffnn": 4, "lstm": 9}


@pytest.mark.parametrize("text", [
    "[data]\nsynthetic_days = 10\n[models]\nkinds = naive\n",  # no targets
    "[data]\nsynthetic_days = 10\ntargets = fridge\n[models]\nkinds = gru\n",
    "[data]\nsynthetic_days = 10\ntargets = fridge\n[features]\ngroups = vest\n",
    "[data]\ntargets = fridge\n",  # no data source
    "[data]\nsynthetic_days = 10\ntargets = fridge\n[model]\nwidth = 3\n",
    "not an ini file",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unknown_target_rejected(tmp_path):
    cfg = replace(config(tmp_path), targets=("toaster",))
    with pytest.raises(ConfigError):
        run(cfg)


def test_config_hash_tracks_semantic_fields(tmp_path):
    cfg = config(tmp_path)
    h = cfg.config_hash()
    assert replace(cfg, output=tmp_path / "elsewhere", workers=4).config_hash() == h
    assert replace(cfg, seed=4).config_hash() != h
    assert replace(cfg, groups=("none", "datetime")).config_hash() != h
    assert replace(cfg, models=(replace(cfg.models[0], hidden=5),)).config_hash() != h


def test_naive_single_cell(tmp_path):
    result = run(config(tmp_path))
    assert len(result.rows) == 1
    assert result.rows[0].mase == pytest.approx(1.0, abs=1e-12)
    out = tmp_path / "out"
    for name in ("grid.csv", "eval_report.csv", "predictability.csv", "predictability_vs_mase.csv",
                 "summary_groups.csv", "summary_models.csv", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == result.config.config_hash()
    assert manifest["cells"][0]["status"] == "ok"
    assert "train_seconds" not in pd.read_csv(out / "grid.csv").columns


def test_grid_cardinality_and_skip(tmp_path):
    cfg = config(tmp_path, groups="none, datetime, phase_space", kinds="naive, msvr, ffnn")
    result = run(cfg)
    grid = pd.read_csv(tmp_path / "out" / "grid.csv")
    assert len(grid) == 3 * 3 - 1  # msvr x phase_space is skipped
    skipped = [c for c in result.cells if c.status == "skipped"]
    assert [(c.model, c.feature_group) for c in skipped] == [("msvr", "phase_space")]


def test_fail_soft(tmp_path, monkeypatch):
    import loadcast.experiment as experiment

    original = experiment.make_model

    def flaky(spec):
        if spec.kind == "ffnn":
            raise RuntimeError("boom")
        return original(spec)

    monkeypatch.setattr(experiment, "make_model", flaky)
    result = run(config(tmp_path, kinds="naive, ffnn"))
    status = {c.model: c.status for c in result.cells}
    assert status == {"naive": "ok", "ffnn": "failed"}
    assert not result.all_failed
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert any("boom" in c["error"] for c in manifest["cells"])


def test_serial_runs_byte_identical_and_parallel_equal(tmp_path):
    cfg = config(tmp_path, groups="none, datetime", kinds="naive, ffnn, lstm")
    run(replace(cfg, output=tmp_path / "a"))
    run(replace(cfg, output=tmp_path / "b"))
    run(replace(cfg, output=tmp_path / "c", workers=3))
    a = (tmp_path / "a" / "grid.csv").read_bytes()
    assert a == (tmp_path / "b" / "grid.csv").read_bytes()
    assert a == (tmp_path / "c" / "grid.csv").read_bytes()


def test_csv_data_source(tmp_path):
    frame = synthetic_household(days=30, seed=1)
    loads = frame.select(["fridge", "television"])
    weather = frame.select(["temperature"])
    write_csv(loads, tmp_path / "loads.csv")
    write_schema(loads.roles, tmp_path / "loads.schema")
    write_csv(weather, tmp_path / "w.csv")
    write_schema(weather.roles, tmp_path / "w.schema")
    (tmp_path / "hol.txt").write_text("2021-01-06\n", encoding="utf-8")
    (tmp_path / "exp.ini").write_text(
        "[data]\nloads = loads.csv\nschema = loads.schema\nweather = w.csv\nweather_schema = w.schema\n"
        "holidays = hol.txt\ntargets = fridge, television\n"
        "[split]\ntest_start = 2021-01-27\n[features]\ngroups = none, w_plus_dt\n"
        "[models]\nkinds = naive\n[run]\noutput = out\n",
        encoding="utf-8",
    )
    result = run(load_config(tmp_path / "exp.ini"))
    assert {(r.appliance, r.feature_group) for r in result.rows} == {
        ("fridge", "none"), ("fridge", "w_plus_dt"), ("television", "none"), ("television", "w_plus_dt")}
    pvm = pd.read_csv(tmp_path / "out" / "predictability_vs_mase.csv")
    assert set(pvm["appliance"]) == {"fridge", "television"}


def test_scaler_never_sees_test_rows(tmp_path):
    from loadcast.experiment import prepare

    cfg = replace(config(tmp_path), preprocess=replace(config(tmp_path).preprocess, fit_fraction=1.0))
    _, _, scaler, _, test_start = prepare(cfg)
    assert scaler.fit_range[1] < test_start


def grid_3x3():
    rows = []
    rng = np.random.default_rng(0)
    for model in ("m1", "m2", "m3"):
        for group in ("none", "g1", "g2"):
            rows.append({"appliance": "a", "model": model, "feature_group": group,
                         "nrmse": rng.uniform(), "acc95": rng.uniform()})
    return pd.DataFrame(rows)


def test_summarize_against_spreadsheet_oracle():
    grid = grid_3x3()
    by_group, by_model = summarize(grid)
    cell = {(r.model, r.feature_group): r for r in grid.itertuples()}
    for g in ("none", "g1", "g2"):
        expect = np.mean([cell[(m, g)].nrmse - cell[(m, "none")].nrmse for m in ("m1", "m2", "m3")])
        got = by_group.set_index("feature_group").loc[g, "delta_nrmse"]
        assert got == pytest.approx(expect, abs=1e-15)
    for m in ("m1", "m2", "m3"):
        expect = np.mean([cell[(m, g)].acc95 - cell[(m, "none")].acc95 for g in ("g1", "g2")])
        assert by_model.set_index("model").loc[m, "delta_acc95"] == pytest.approx(expect, abs=1e-15)


def test_summarize_simple_cases():
    grid = pd.DataFrame([{"appliance": "a", "model": "lstm", "feature_group": "none", "nrmse": 0.10, "acc95": 0.5},
                         {"appliance": "a", "model": "lstm", "feature_group": "datetime", "nrmse": 0.08, "acc95": 0.5}])
    by_group, by_model = summarize(grid)
    assert by_group.set_index("feature_group").loc["datetime", "delta_nrmse"] == pytest.approx(-0.02)
    assert by_group.set_index("feature_group").loc["none", "delta_nrmse"] == 0.0
    with pytest.raises(ValueError):
        summarize(grid[grid["feature_group"] != "none"])


def test_shipped_config_parses():
    root = Path(__file__).resolve().parents[1]
    cfg = load_config(root / "configs" / "synthetic.ini")
    assert cfg.output == (root / "runs" / "synthetic").resolve()
    assert len(cfg.models) * len(cfg.groups) == 20
