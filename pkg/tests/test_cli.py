import json
import shutil
import subprocess
import sys

import pytest

from uiobs import registry
from uiobs.cli import main

SPURIOUS = """state x y z
known_input u
unknown_input w1 w2
drift = y, 0, 0
f u = 0, 1, 0
g w1 = 0, 1, 0
g w2 = 0, 0, 1
output h = x
"""


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return str(p)
    return _write


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_unicycle_case3(write, capsys):
    path = write("unicycle-case3.sys", registry.get("unicycle-case3").text)
    code, out, _ = run(["analyze", path, "--seed", "7"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["steps"][-1]["rank"] == 1
    assert doc["converged"] is True
    assert not any(doc["verdicts"].values())
    assert doc["unobs_dim"] == 2


def test_schema_keys(write, capsys):
    path = write("vio2d.sys", registry.get("vio2d-calibrated").text)
    code, out, _ = run(["analyze", path], capsys)
    doc = json.loads(out)
    assert code == 0
    for key in ("model_digest", "plan", "steps", "special_case", "m_prime", "m_star",
                "converged", "verdicts", "unobs_dim", "symmetry", "canonization", "timings"):
        assert key in doc
    assert set(doc["steps"][0]) >= {"m", "rank", "new_generators"}
    assert set(doc["symmetry"]) == {"numeric", "verified"}
    assert len(doc["canonization"]["augmentations"]) == 2
    assert doc["steps"][-1]["rank"] == 6


def test_spurious_input_exits_zero(write, capsys):
    path = write("spurious.sys", SPURIOUS)
    code, out, _ = run(["analyze", path], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["canonization"]["spurious"] == ["w2"]


def test_json_flag_writes_file(write, tmp_path, capsys):
    path = write("c1.sys", registry.get("unicycle-case1").text)
    target = tmp_path / "report.json"
    code, out, _ = run(["analyze", path, "--json", str(target)], capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["steps"]


def test_determinism_without_timings(write, capsys):
    path = write("c6.sys", registry.get("unicycle-case6").text)
    outs = []
    for _ in range(2):
        code, out, _ = run(["analyze", path, "--seed", "3", "--no-timings"], capsys)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    assert "timings" not in json.loads(outs[0])


def test_oracle(write, capsys):
    path = write("c1.sys", registry.get("unicycle-case1").text)
    code, out, _ = run(["oracle", path, "-k", "2", "-m", "2"], capsys)
    doc = json.loads(out)
    assert code == 0
    o = doc["oracle"]
    assert o["k"] == 2 and o["m"] == 2
    assert o["rank_extended"] == o["rank_embedded"]
    assert o["verdict"] == "equal"


def test_oracle_m_above_k(write, capsys):
    path = write("c1.sys", registry.get("unicycle-case1").text)
    code, _, err = run(["oracle", path, "-k", "1", "-m", "2"], capsys)
    assert code != 0 and "error" in err


def test_canonize(write, capsys):
    path = write("vio2d.sys", registry.get("vio2d-calibrated").text)
    code, out, _ = run(["canonize", path], capsys)
    doc = json.loads(out)
    assert code == 0
    assert len(doc["canonization"]["augmentations"]) == 2
    assert len(doc["canonization"]["coordinate_changes"]) == 1


def test_parse_error_exit_code(write, capsys):
    path = write("bad.sys", "state x y\nknown_input u\nf u = 1\noutput h = x\n")
    code, _, err = run(["analyze", path], capsys)
    assert code == 2
    assert "f u" in err


def test_missing_file(tmp_path, capsys):
    code, _, err = run(["analyze", str(tmp_path / "nope.sys")], capsys)
    assert code == 2 and "cannot read" in err


def test_nonconvergence_exit_code(write, capsys):
    path = write("c1.sys", registry.get("unicycle-case1").text)
    code, out, _ = run(["analyze", path, "--max-steps", "1"], capsys)
    assert code == 2
    assert json.loads(out)["error"]["type"] == "NonConvergence"


def test_internal_error_exit_code(write, capsys, monkeypatch):
    import uiobs.analysis as A

    def boom(*a, **k):
        raise RuntimeError("boom")
    monkeypatch.setattr(A, "orc", boom)
    path = write("nw.sys", registry.get("vehicle3d-nowind").text)
    code, out, _ = run(["analyze", path], capsys)
    assert code == 1
    assert "Traceback" in json.loads(out)["error"]["traceback"]


def test_example_list(capsys):
    code, out, _ = run(["example", "--list"], capsys)
    assert code == 0
    listed = [line.split()[0] for line in out.splitlines()]
    assert listed == registry.names()
    assert len(listed) == 18


def test_example_runs_assertions(capsys):
    code, out, err = run(["example", "unicycle-case6", "--no-timings"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["assertions"] and all(a["passed"] for a in doc["assertions"])
    assert "PASS" in err and "FAIL" not in err


def test_unknown_example(capsys):
    code, _, err = run(["example", "no-such-model"], capsys)
    assert code == 2 and "unicycle-case1" in err


def test_bad_plan_flag(write, capsys):
    path = write("c1.sys", registry.get("unicycle-case1").text)
    code, _, err = run(["analyze", path, "--samples", "1"], capsys)
    assert code == 2 and "error" in err


@pytest.mark.skipif(shutil.which("uiobs") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["uiobs", "example", "--list"], capture_output=True, text=True)
    assert res.returncode == 0 and "vio3d-uncalibrated" in res.stdout


def test_module_entry():
    res = subprocess.run([sys.executable, "-m", "uiobs.cli", "example", "--list"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "vehicle3d" in res.stdout
