import csv
import json
import math
import statistics
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from fasnoma import cli
from fasnoma.bench import (SUMMARY_COLUMNS, TRIAL_COLUMNS, ExperimentConfig, read_trials, run_experiment,
                           seed_sequence, summarize, summarize_rows, write_csv)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
FAST = {"max_outer": 1, "max_sweeps": 1, "sca_max_iters": 3}


def small_config(**kw):
    d = dict(sweep_axis="power_ratio_db", sweep_values=[0.0, 10.0], methods=["FAS-NOMA", "FPA", "RPA", "OMA-FAS"],
             num_trials=2, base_seed=7, params={"num_antennas": 2}, ao=FAST)
    d.update(kw)
    return ExperimentConfig(**d)


def test_config_validation():
    with pytest.raises(ValueError, match="sweep_axis"):
        small_config(sweep_axis="bandwidth")
    with pytest.raises(ValueError, match="unknown methods"):
        small_config(methods=["MAGIC"])
    with pytest.raises(ValueError, match="num_trials"):
        small_config(num_trials=0)
    with pytest.raises(ValueError, match="ao options"):
        small_config(ao={"warp": 9})
    with pytest.raises(ValueError, match="sweep axis"):
        small_config(params={"power_ratio_db": 3.0})
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"sweep": {"axis": "num_antennas", "values": [2]}, "colour": "red"})


@pytest.mark.parametrize("name", ["power_sweep.yaml", "antenna_sweep.yaml"])
def test_shipped_configs_load(name):
    cfg = ExperimentConfig.load(CONFIGS / name)
    assert cfg.num_trials == 200
    assert cfg.digest() == ExperimentConfig.from_dict(yaml.safe_load((CONFIGS / name).read_text())).digest()


def test_seed_streams_are_distinct_and_stable():
    a = np.random.default_rng(seed_sequence(5, 1, 2)).integers(1 << 30)
    b = np.random.default_rng(seed_sequence(5, 1, 2)).integers(1 << 30)
    c = np.random.default_rng(seed_sequence(5, 1, 2, 1)).integers(1 << 30)
    d = np.random.default_rng(seed_sequence(5, 2, 1)).integers(1 << 30)
    assert a == b and len({a, c, d}) == 3


def test_run_experiment_outputs(tmp_path):
    cfg = small_config()
    out = run_experiment(cfg, tmp_path)
    assert len(out.rows) == 2 * 2 * 4
    with open(out.trials_path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == TRIAL_COLUMNS
    assert {r["method"] for r in rows} == {"FAS-NOMA", "FPA", "RPA", "OMA-FAS"}
    with open(out.summary_path) as fh:
        summary = list(csv.DictReader(fh))
    assert list(summary[0]) == SUMMARY_COLUMNS and len(summary) == 2 * 4
    manifest = json.loads(Path(out.manifest_path).read_text())
    assert manifest["config_sha256"] == cfg.digest()
    assert len(manifest["trials"]) == 4
    with open(out.timings_path) as fh:
        assert len(list(csv.DictReader(fh))) == len(rows)


def test_run_experiment_is_byte_deterministic(tmp_path):
    cfg = small_config(methods=["FAS-NOMA", "RPA"])
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    c = run_experiment(cfg, tmp_path / "c", workers=2)
    ta = Path(a.trials_path).read_bytes()
    assert ta == Path(b.trials_path).read_bytes() == Path(c.trials_path).read_bytes()
    assert Path(a.summary_path).read_bytes() == Path(c.summary_path).read_bytes()


def test_methods_share_the_channel_draw(tmp_path):
    out = run_experiment(small_config(methods=["FAS-NOMA", "FPA"], sweep_values=[10.0], num_trials=1), tmp_path)
    assert len({r["seed_key"] for r in out.rows}) == 1


def test_summaries_of_split_files_match_concatenation(tmp_path):
    out = run_experiment(small_config(methods=["FAS-NOMA", "FPA"]), tmp_path / "run")
    rows = read_trials(out.trials_path)
    write_csv(tmp_path / "part1.csv", TRIAL_COLUMNS, rows[::2])
    write_csv(tmp_path / "part2.csv", TRIAL_COLUMNS, rows[1::2])
    merged = summarize([str(tmp_path / "part*.csv")], tmp_path / "merged.csv")
    whole = summarize([out.trials_path], tmp_path / "whole.csv")
    assert merged == whole
    assert (tmp_path / "merged.csv").read_bytes() == (tmp_path / "whole.csv").read_bytes()
    assert (tmp_path / "whole.csv").read_bytes() == Path(out.summary_path).read_bytes()


def _row(method, r_s, feasible=True, value=10.0):
    return {"sweep_axis": "power_ratio_db", "sweep_value": value, "method": method, "R_s": r_s, "feasible": feasible}


def test_summary_statistics_match_statistics_module():
    vals = [0.5, 2.0, -1.0, float("nan"), 3.5]
    out = summarize_rows([_row("FPA", v, feasible=not math.isnan(v)) for v in vals])[0]
    clamped = [0.5, 2.0, 0.0, 0.0, 3.5]
    assert out["count"] == 5
    assert out["mean"] == pytest.approx(statistics.fmean(clamped), rel=1e-15)
    assert out["median"] == statistics.median(clamped)
    assert out["std"] == pytest.approx(statistics.stdev(clamped), rel=1e-15)
    half = 1.959963984540054 * statistics.stdev(clamped) / math.sqrt(5)
    assert out["ci95_low"] == pytest.approx(out["mean"] - half, rel=1e-12)
    assert out["feasible_fraction"] == pytest.approx(0.8)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 20, allow_nan=False), min_size=1, max_size=30), st.randoms(use_true_random=False))
def test_summary_is_order_independent(values, rnd):
    rows = [_row("FAS-NOMA", v) for v in values]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert summarize_rows(rows) == summarize_rows(shuffled)


def test_read_trials_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("sweep_axis,method\nx,y\n")
    with pytest.raises(ValueError, match="missing column"):
        read_trials(bad)
    out = run_experiment(small_config(methods=["FPA"], num_trials=1, sweep_values=[10.0]), tmp_path / "ok")
    text = Path(out.trials_path).read_text().splitlines()
    cols = text[0].split(",")
    row = text[1].split(",")
    row[cols.index("R_s")] = "lots"
    bad.write_text("\n".join([text[0], ",".join(row)]) + "\n")
    with pytest.raises(ValueError, match="R_s"):
        read_trials(bad)
    with pytest.raises(FileNotFoundError):
        summarize([str(tmp_path / "nothing*.csv")])


def test_cli_run_and_summarize(tmp_path, capsys):
    cfg = small_config(methods=["FAS-NOMA", "FPA"], num_trials=1).to_dict()
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out"), "--trials", "2",
                     "--seed", "3", "-q"]) == 0
    rows = read_trials(tmp_path / "out" / "trials.csv")
    assert len(rows) == 2 * 2 * 2
    assert rows[0]["seed_key"].startswith("3:")
    assert cli.main(["summarize", "--in", str(tmp_path / "out" / "trials.csv"), "--out",
                     str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "out" / "summary.csv").read_bytes()


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(small_config().to_dict()))
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--workers", "0"]) == 1
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
