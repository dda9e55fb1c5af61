import json
import subprocess
import sys

import pytest

from driftbench.cli import build_parser, main
from driftbench.synth import EnvironmentConfig

SMALL_ENV = dict(
    floor_width=12.0,
    floor_height=6.0,
    n_fixed_aps=8,
    anchor_samples_per_day=4,
    env_trend_per_day=0.3,
)


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def env_json(tmp_path):
    p = tmp_path / "env.json"
    cfg = EnvironmentConfig(**SMALL_ENV).to_dict()
    p.write_text(json.dumps(cfg))
    return p


@pytest.fixture
def db_dir(tmp_path, env_json):
    out = tmp_path / "db"
    assert run("synth", "--config", env_json, "--days", 12, "--out", out, "--quiet", "--reproducible") == 0
    return out


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


HELP_PATHS = [
    [],
    ["synth"],
    ["import"],
    ["stats"],
    ["stats", "variance"],
    ["stats", "anomaly"],
    ["train"],
    ["train", "dnn"],
    ["train", "gp"],
    ["eval"],
    ["eval", "dnn"],
    ["eval", "gp"],
    ["report"],
]


@pytest.mark.parametrize("path", HELP_PATHS, ids=lambda p: "-".join(p) or "top")
def test_help_exits_zero(path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(path + ["--help"])
    assert exc.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_leaf_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["eval", "gp", "--help"])
    text = capsys.readouterr().out
    for flag in ("--db", "--train-days", "--test-days", "--group", "--polyfit", "--out", "--seed",
                 "--threads", "--quiet", "--reproducible", "--lengthscale", "--noise"):
        assert flag in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "driftbench", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synth" in proc.stdout


def test_usage_errors_exit_one(capsys):
    assert run("bogus") == 1
    assert run("eval", "gp") == 1  # missing --db
    assert run("eval", "gp", "--db", "x", "--train-days", "5") == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert all(json.loads(line)["error"] == "UsageError" for line in err)


def test_data_errors_exit_two(tmp_path, db_dir, capsys):
    assert run("stats", "anomaly", "--db", tmp_path / "missing", "--ap", "a", "--rp", 0) == 2
    assert run("stats", "anomaly", "--db", db_dir, "--ap", "nope", "--rp", 0, "--quiet") == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"floor_width": -1}')
    assert run("synth", "--config", bad, "--out", tmp_path / "o") == 2
    msg = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert msg["error"] == "InvalidConfig" and "floor_width" in msg["message"]


def test_synth_outputs_and_reproducibility(tmp_path, env_json, db_dir):
    assert set(snapshot(db_dir)) == {"records.csv", "readings.csv", "rps.csv", "manifest.json"}
    again = tmp_path / "again"
    run("synth", "--config", env_json, "--days", 12, "--out", again, "--quiet", "--reproducible")
    assert snapshot(again) == snapshot(db_dir)
    stamped = tmp_path / "stamped"
    run("synth", "--config", env_json, "--days", 12, "--out", stamped, "--quiet")
    assert "created_utc" in json.loads((stamped / "manifest.json").read_text())
    assert "created_utc" not in json.loads((db_dir / "manifest.json").read_text())
    assert (stamped / "records.csv").read_bytes() == (db_dir / "records.csv").read_bytes()


def test_seed_env_var_and_flag(tmp_path, env_json, monkeypatch):
    def synth(out, *extra):
        assert run("synth", "--config", env_json, "--days", 3, "--out", out, "--quiet", "--reproducible", *extra) == 0
        return json.loads((out / "manifest.json").read_text())["seed"]

    assert synth(tmp_path / "a") == 42
    monkeypatch.setenv("DRIFTBENCH_SEED", "7")
    assert build_parser().parse_args(["synth"]).seed == 7
    assert synth(tmp_path / "b") == 7
    assert synth(tmp_path / "c", "--seed", "9") == 9


def test_threads_do_not_change_results(tmp_path, db_dir):
    for n in (1, 4):
        assert run("stats", "anomaly", "--db", db_dir, "--ap", "ap_1", "--rp", 3, "--threads", n,
                   "--out", tmp_path / f"t{n}", "--quiet") == 0
    assert snapshot(tmp_path / "t1") == snapshot(tmp_path / "t4")


def test_stats_commands(tmp_path, db_dir):
    out = tmp_path / "st"
    assert run("stats", "anomaly", "--db", db_dir, "--ap", "ap_1", "--rp", 3, "--contamination", 0.1,
               "--trees", 100, "--seed", 42, "--out", out, "--quiet") == 0
    lines = (out / "anomaly.csv").read_text().splitlines()
    assert lines[0] == "day_index,mean_rssi,anomaly_score,signed_score,flagged"
    assert len(lines) == 13
    assert run("stats", "variance", "--db", db_dir, "--ap", "ap_1", "--rp", 3, "--out", out, "--quiet") == 0
    info = json.loads((out / "variance.json").read_text())
    assert info["variance"] >= 0 and info["n_samples"] > 0


def test_eval_train_report_pipeline(tmp_path, db_dir):
    rep = tmp_path / "rep"
    args = ["--db", db_dir, "--train-days", "1:6", "--test-days", "7:12", "--group", 3, "--polyfit", 2, "--quiet"]
    assert run("eval", "gp", *args, "--out", rep) == 0
    assert set(snapshot(rep)) == {"report.json", "per_day.csv", "trend.csv", "drift.svg"}
    assert run("eval", "gp", *args, "--out", tmp_path / "rep2") == 0
    assert snapshot(rep) == snapshot(tmp_path / "rep2")

    model_dir = tmp_path / "model"
    assert run("train", "gp", "--db", db_dir, "--train-days", "1:6", "--out", model_dir, "--quiet") == 0
    assert run("eval", "gp", *args, "--model", model_dir / "model.dbm", "--out", tmp_path / "rep3") == 0
    a = json.loads((rep / "report.json").read_text())
    b = json.loads((tmp_path / "rep3" / "report.json").read_text())
    assert a["per_day"] == b["per_day"]
    assert run("eval", "dnn", *args, "--model", model_dir / "model.dbm", "--out", tmp_path / "x") == 2

    rerender = tmp_path / "rerender"
    assert run("report", "--report", rep / "report.json", "--out", rerender, "--quiet") == 0
    assert snapshot(rerender) == snapshot(rep)


def test_dnn_train_and_eval(tmp_path, db_dir):
    small = ["--epochs-sae", 2, "--epochs-cls", 3, "--hid-dim", 16, "--sae-dim", 8, "--quiet"]
    model_dir = tmp_path / "m"
    assert run("train", "dnn", "--db", db_dir, "--train-days", "1:6", "--out", model_dir, *small) == 0
    info = json.loads((model_dir / "train.json").read_text())
    assert len(info["loss_history"]) == 3
    first = (model_dir / "model.dbm").read_bytes()
    assert run("train", "dnn", "--db", db_dir, "--train-days", "1:6", "--out", model_dir, *small) == 0
    assert (model_dir / "model.dbm").read_bytes() == first
    out = tmp_path / "rep"
    assert run("eval", "dnn", "--db", db_dir, "--train-days", "1:6", "--test-days", "7:12", "--group", 3,
               "--polyfit", 2, "--out", out, *small) == 0
    assert json.loads((out / "report.json").read_text())["metric"] == "accuracy"


def test_import_wide_and_native(tmp_path, db_dir):
    wide = tmp_path / "w.csv"
    wide.write_text(
        "WAP001,WAP002,x,y,floor,timestamp\n"
        "-50,100,1.0,2.0,0,2023-06-01T09:00:00Z\n"
        "100,-70,3.0,2.0,0,2023-06-02T09:00:00Z\n"
    )
    out = tmp_path / "imp"
    assert run("import", "--wide", wide, "--not-detected-code", 100, "--out", out, "--quiet") == 0
    assert (out / "readings.csv").read_text() == "record_id,ap_id,rssi\n0,WAP001,-50\n1,WAP002,-70\n"
    copy = tmp_path / "copy"
    assert run("import", "--native", db_dir, "--out", copy, "--quiet") == 0
    for name in ("records.csv", "readings.csv", "rps.csv"):
        assert (copy / name).read_bytes() == (db_dir / name).read_bytes()


def test_print_config(capsys):
    assert run("synth", "--print-config") == 0
    assert EnvironmentConfig.from_dict(json.loads(capsys.readouterr().out)) == EnvironmentConfig()
