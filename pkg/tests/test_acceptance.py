"""End-to-end acceptance suite.

``blowup-forge verify-all`` is run twice with the default configuration.
Each criterion is then checked against its own verdict and its runtime
budget, and one PASS/FAIL line per criterion is printed to the terminal.
Criteria that reuse the solved trajectory are charged its solve time.
"""

import json
import os
import shutil
import subprocess
import sys

import pytest

from blowup_forge.checks import BUDGETS, NEEDS_TRAJECTORY, TITLES

pytestmark = pytest.mark.slow


def _command():
    exe = shutil.which("blowup-forge")
    return [exe] if exe else [sys.executable, "-m", "blowup_forge"]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = []
    for k in range(2):
        d = str(tmp_path_factory.mktemp(f"verify{k}"))
        proc = subprocess.run(_command() + ["verify-all", "--out-dir", d], capture_output=True, text=True)
        with open(os.path.join(d, "verdict.json")) as fh:
            verdict = json.load(fh)
        with open(os.path.join(d, "timings.json")) as fh:
            timings = json.load(fh)
        with open(os.path.join(d, "manifest.json"), "rb") as fh:
            manifest = fh.read()
        out.append({"dir": d, "returncode": proc.returncode, "stdout": proc.stdout,
                    "verdict": {c["criterion"]: c for c in verdict["criteria"]},
                    "timings": timings, "manifest": manifest})
    return out


def _runtime(run, k):
    t = run["timings"][f"criterion_{k}"]
    if k in NEEDS_TRAJECTORY:
        t += run["timings"]["trajectory"]
    return t


def _summary(res):
    bad = [name for name, ok in res["parts"].items() if not ok]
    shown = {}
    for k, v in res["metrics"].items():
        if isinstance(v, list):
            nums = [x for x in v if isinstance(x, (int, float))]
            if nums:
                shown["max_" + k] = float(max(nums))
        elif not isinstance(v, dict):
            shown[k] = v
    text = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(shown.items()))
    return text + (f"; failing: {', '.join(bad)}" if bad else "")


@pytest.mark.parametrize("k", sorted(BUDGETS))
def test_criterion(runs, k, capsys):
    first, second = runs
    res = first["verdict"][k]
    runtime = _runtime(first, k)
    in_budget = runtime < BUDGETS[k]
    ok = res["passed"] and in_budget
    if k == 12:
        identical = first["manifest"] == second["manifest"]
        ok = ok and identical
    with capsys.disabled():
        line = f"{'PASS' if ok else 'FAIL'} criterion {k:2d} ({TITLES[k]}): {_summary(res)}; runtime {runtime:.1f}s"
        if BUDGETS[k] != float("inf"):
            line += f" / budget {BUDGETS[k]:.0f}s"
        if k == 12:
            line += f"; manifests byte-identical across runs: {identical}"
        print("\n" + line)
    assert res["passed"], _summary(res)
    assert in_budget, f"runtime {runtime:.1f}s exceeds {BUDGETS[k]}s"
    if k == 12:
        assert identical


def test_exit_status_matches_verdict(runs):
    for run in runs:
        passed = all(c["passed"] for c in run["verdict"].values())
        assert run["returncode"] == (0 if passed else 1)
        assert sorted(run["verdict"]) == sorted(BUDGETS)
