"""Command line: reports, formats, exit codes, determinism."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from merlab import __version__
from merlab.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
DEMO = str(FIXTURES / "demo.mer")


def run_json(capsys, *argv):
    code = main(list(argv) + ["--format", "json"])
    out = capsys.readouterr().out
    return code, json.loads(out)


# -- reports ---------------------------------------------------------------

def test_check_er_holds(capsys):
    code, rep = run_json(capsys, "check-er", DEMO, "--mer", "AdjSets",
                         "--max", "P=2,Q=2")
    assert code == 0
    assert rep["verdict"] == "holds"
    assert rep["command"] == "check-er"
    assert rep["version"] == __version__
    assert rep["timing"] is None


def test_report_key_order(capsys):
    code, rep = run_json(capsys, "check-er", DEMO, "--mer", "AdjSets",
                         "--max", "P=2,Q=2")
    keys = list(rep)
    assert keys[0] == "command"
    assert keys[1] == "version"
    assert keys[-1] == "timing"
    assert "threads" not in keys


def test_check_er_failure_is_report_not_error(capsys):
    # the approx entry in the demo is an equivalence; build a failing one
    ws = FIXTURES / "nontrans.mer"
    code, rep = run_json(capsys, "check-er", str(ws), "--mer", "Band",
                         "--max", "3")
    assert code == 0
    assert rep["verdict"]["kind"] == "transitivity"
    assert len(rep["verdict"]["witnesses"]) == 3


def test_check_er_replay(capsys):
    ws = FIXTURES / "nontrans.mer"
    code, rep = run_json(capsys, "check-er", str(ws), "--mer", "Band",
                         "--max", "3", "--replay")
    assert code == 0
    assert rep["replay"] is True


def test_classes_count(capsys):
    code, rep = run_json(capsys, "classes", DEMO, "--mer", "AdjSets",
                         "--sizes", "P=2,Q=2")
    assert code == 0
    assert rep["count"] == 10
    assert len(rep["classes"]) == 10
    assert sum(len(c) for c in rep["classes"]) == 16


def test_classes_non_er_exits_zero(capsys):
    ws = FIXTURES / "nontrans.mer"
    code, rep = run_json(capsys, "classes", str(ws), "--mer", "Band",
                         "--sizes", "V=1")
    assert code == 0
    assert rep["error"] == "not-an-equivalence"
    assert rep["verdict"]["kind"] == "transitivity"
    assert rep["timing"] is None


def test_classify_mer(capsys):
    code, rep = run_json(capsys, "classify", DEMO, "--mer", "AdjSets")
    assert code == 0
    assert rep["prefix"] == "Pi3"


def test_classify_formula(capsys):
    code, rep = run_json(capsys, "classify", DEMO,
                         "--formula", "forall x:P. exists y:Q. G(x, y)")
    assert code == 0
    assert rep["prefix"] == "Pi2"


def test_groupoid_laws_hold(capsys):
    code, rep = run_json(capsys, "groupoid", DEMO, "--mer", "AdjSets",
                         "--max", "P=2,Q=2")
    assert code == 0
    assert rep["verdict"] == "holds"


def test_nset_command(capsys):
    code, rep = run_json(capsys, "nset", DEMO, "--structure", "M",
                         "--family", "G(x : y)")
    assert code == 0
    assert rep["depth"] == 2
    assert rep["size"] == 2  # rows {0} and {1}


def test_shelahize_command(capsys):
    code, rep = run_json(capsys, "shelahize", DEMO, "--structure", "M",
                         "--family", "G(x : y)")
    assert code == 0
    assert len(rep["rows"]) == 2
    assert rep["row_sort"] and rep["containment"]


def test_invariants_command(capsys):
    code, rep = run_json(capsys, "invariants", DEMO, "--mer", "Ident",
                         "--max", "2")
    assert code == 0
    assert set(rep) >= {"command", "version", "partition", "profiles",
                        "verdict", "scale", "timing"}


def test_density_command(capsys):
    code, rep = run_json(capsys, "density", DEMO, "--mer", "Cat",
                         "--structure", "K", "--tuple-len", "1")
    assert code == 0
    assert rep["refines"] is True


def test_catalog_list_and_show(capsys):
    code, rep = run_json(capsys, "catalog", "list")
    assert code == 0
    ids = [e["id"] for e in rep["entries"]]
    assert "adj-sets" in ids and "cofinal-rows" in ids
    code, rep = run_json(capsys, "catalog", "show", "adj-sets")
    assert code == 0
    assert rep["id"] == "adj-sets"


def test_catalog_generate(capsys):
    code, rep = run_json(capsys, "catalog", "generate",
                         "--sizes", "P=4,Q=4", "--k", "1", "--seed", "0")
    assert code == 0
    assert rep["axioms"] == "satisfied"
    assert rep["graph"]["sizes"] == {"P": 4, "Q": 4}


def test_swap_demo(capsys):
    code, rep = run_json(capsys, "swap-demo", "--sizes", "P=4,Q=4",
                         "--k", "1", "--seed", "0")
    assert code == 0
    assert rep["axioms"] == "satisfied"


def test_interp_command(capsys):
    code, rep = run_json(capsys, "interp", DEMO, "--mer", "Cat",
                         "--structure", "K")
    assert code == 0
    assert rep["roundtrip"] is True


# -- formats ---------------------------------------------------------------

def test_text_format_renders_same_fields(capsys):
    code = main(["classify", DEMO, "--mer", "AdjSets", "--format", "text"])
    out = capsys.readouterr().out
    assert code == 0
    assert "prefix: Pi3" in out
    assert "timing:" in out


def test_json_is_default(capsys):
    code = main(["classify", DEMO, "--mer", "AdjSets"])
    out = capsys.readouterr().out
    json.loads(out)
    assert code == 0


# -- exit codes ------------------------------------------------------------

def test_missing_file_exits_two(capsys):
    code = main(["check-er", "/no/such/file.mer", "--mer", "X", "--max", "2"])
    err = capsys.readouterr().err
    assert code == 2
    assert err.startswith("merlab:")


def test_unknown_mer_exits_two(capsys):
    code = main(["check-er", DEMO, "--mer", "Nope", "--max", "2"])
    assert code == 2
    assert "unknown" in capsys.readouterr().err


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["check-er", DEMO])  # --max is required
    assert exc.value.code == 2


def test_budget_exits_three(capsys):
    code = main(["check-er", DEMO, "--mer", "AdjSets", "--max", "P=2,Q=2",
                 "--budget", "50"])
    err = capsys.readouterr().err
    assert code == 3
    assert "ceiling" in err


# -- determinism -----------------------------------------------------------

def cli_bytes(*argv):
    proc = subprocess.run([sys.executable, "-m", "merlab.cli", *argv],
                          capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return proc.stdout


def test_threads_do_not_change_bytes():
    args = ["invariants", DEMO, "--mer", "Ident", "--max", "2",
            "--format", "json"]
    one = cli_bytes(*args, "--threads", "1")
    eight = cli_bytes(*args, "--threads", "8")
    assert one == eight


def test_repeat_runs_identical():
    args = ["classes", DEMO, "--mer", "AdjSets", "--sizes", "P=2,Q=2",
            "--format", "json"]
    assert cli_bytes(*args) == cli_bytes(*args)
