import csv
import json
import os
import subprocess
import sys

import pytest

from blowup_forge.cli import ConfigError, default_config, load_config, main


def _write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return str(p)


def _files(d):
    with open(os.path.join(d, "manifest.json")) as fh:
        return json.load(fh)


def test_missing_field_reports_path(tmp_path, capsys):
    cfg = _write(tmp_path, "[global]\nT = 0.01\n")
    assert main(["constants", "--config", cfg, "--out-dir", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "global.M" in err and "global.R" in err


def test_all_problems_listed(tmp_path):
    text = "\n".join(f"{k} = {v!r}" if not isinstance(v, str) else f'{k} = "{v}"'
                     for k, v in default_config()["global"].items())
    cfg = _write(tmp_path, "[global]\n" + text.replace("T = 0.01", "T = -1.0") + "\nbogus = 1\n[nope]\nx = 1\n")
    with pytest.raises(ConfigError) as exc:
        load_config(cfg)
    paths = {p for p, _ in exc.value.problems}
    assert {"global.T", "global.bogus", "nope"} <= paths


def test_override_validation(tmp_path, capsys):
    assert main(["simulate", "--n", "7", "--out-dir", str(tmp_path)]) == 2
    assert "simulate.n" in capsys.readouterr().err


@pytest.fixture(scope="module")
def modulation_runs(tmp_path_factory):
    dirs = []
    for k in range(2):
        d = str(tmp_path_factory.mktemp(f"mod{k}"))
        assert main(["modulation", "--T", "1e-2", "--out-dir", d]) == 0
        dirs.append(d)
    return dirs


def test_modulation_rates(modulation_runs):
    d = modulation_runs[0]
    with open(os.path.join(d, "rates.json")) as fh:
        rates = json.load(fh)
    assert abs(rates["slope_1"] - 4) <= 0.05
    assert abs(rates["slope_2"] - 2) <= 0.05
    with open(os.path.join(d, "trajectory.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) > 100
    sig = [float(r["sigma"]) for r in rows]
    assert sig == sorted(sig, reverse=True)


def test_outputs_deterministic(modulation_runs):
    a, b = (_files(d) for d in modulation_runs)
    assert a["files"] == b["files"]
    for name in a["files"]:
        with open(os.path.join(modulation_runs[0], name), "rb") as f1, \
                open(os.path.join(modulation_runs[1], name), "rb") as f2:
            assert f1.read() == f2.read(), name


def test_manifest_lists_every_file(modulation_runs):
    d = modulation_runs[0]
    m = _files(d)
    listed = set(m["files"]) | set(m["volatile_files"]) | {"manifest.json"}
    assert listed == set(os.listdir(d))
    assert m["checks"] and m["passed"]


def test_plots_come_from_csv(modulation_runs):
    d = modulation_runs[0]
    for name in os.listdir(d):
        if name.endswith(".svg"):
            assert name[:-4] + ".csv" in os.listdir(d)
    # regenerating after editing the CSV changes the plot
    from blowup_forge.plots import line_plot_from_csv

    src = os.path.join(d, "trajectory.csv")
    with open(src) as fh:
        rows = list(csv.reader(fh))
    rows = rows[:1] + rows[1:len(rows) // 2]
    cut = os.path.join(d, "cut.csv")
    with open(cut, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    line_plot_from_csv(cut, os.path.join(d, "cut.svg"), "sigma", ["lambda1"], logx=True, logy=True)
    with open(os.path.join(d, "cut.svg")) as f1, open(os.path.join(d, "trajectory.svg")) as f2:
        assert f1.read() != f2.read()
    os.remove(cut)
    os.remove(os.path.join(d, "cut.svg"))


def test_constants_console_script(tmp_path):
    out = tmp_path / "c"
    proc = subprocess.run([sys.executable, "-m", "blowup_forge", "constants", "--out-dir", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS kernel_annihilation" in proc.stdout
    m = _files(out)
    assert {"constants.json", "profiles.csv", "profiles.svg"} <= set(m["files"])


def test_failure_still_writes_manifest(tmp_path):
    # an unknown criterion makes the pipeline raise
    out = str(tmp_path / "bad")
    rc = main(["verify-all", "--criteria", "99", "--out-dir", out])
    assert rc == 1
    m = _files(out)
    assert m["passed"] is False
    assert "error.json" in m["files"]


def test_shipped_config_matches_defaults():
    path = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "default.toml")
    assert load_config(path) == default_config()
