"""Workspace files: parsing, diagnostics, shorthand helpers."""

from pathlib import Path

import pytest

from merlab import (
    Builtin,
    ByApproxReduct,
    ByCofinalOrder,
    ByFamilyTower,
    ByReduct,
    BySentence,
    MerlabError,
    WorkspaceError,
    equivalent,
    family_shorthand,
    load_metric,
    load_workspace,
    order_shorthand,
    vocabulary,
)

FIXTURES = Path(__file__).parent / "fixtures"


def write(tmp_path, text):
    p = tmp_path / "case.mer"
    p.write_text(text, encoding="utf-8")
    return p


# -- a complete valid workspace --------------------------------------------

def test_demo_workspace_loads():
    ws = load_workspace(FIXTURES / "demo.mer")
    assert sorted(ws.vocabs) == ["D", "U", "V", "W"]
    assert sorted(ws.mers) == ["AdjSets", "Approx", "Cat", "Cof",
                               "Ident", "Red"]
    assert list(ws.theories) == ["HasEdge"]
    assert sorted(ws.structures) == ["K", "M", "N"]


def test_demo_mer_kinds():
    ws = load_workspace(FIXTURES / "demo.mer")
    kinds = {
        "AdjSets": ByFamilyTower,
        "Ident": BySentence,
        "Red": ByReduct,
        "Cof": ByCofinalOrder,
        "Cat": Builtin,
        "Approx": ByApproxReduct,
    }
    for name, cls in kinds.items():
        assert isinstance(ws.mers[name].spec, cls), name


def test_demo_structures_and_theory():
    ws = load_workspace(FIXTURES / "demo.mer")
    M = ws.structures["M"]
    assert M.size("P") == 2 and M.size("Q") == 2
    assert set(M.extent("G")) == {(0, 0), (1, 1)}
    assert ws.structures["N"].extent("G") == frozenset()
    assert len(ws.theories["HasEdge"].axioms) == 1


def test_demo_specs_evaluate():
    ws = load_workspace(FIXTURES / "demo.mer")
    M, N = ws.structures["M"], ws.structures["N"]
    assert equivalent(ws.mers["AdjSets"].spec, M, M)
    assert not equivalent(ws.mers["AdjSets"].spec, M, N)
    assert not equivalent(ws.mers["Red"].spec, M, N)


def test_lookup_unknown_names():
    ws = load_workspace(FIXTURES / "demo.mer")
    with pytest.raises(MerlabError) as exc:
        ws.mer("Nope")
    assert "unknown" in str(exc.value)


# -- diagnostics -----------------------------------------------------------

CASES = [
    ("mer X over NoSuch coupled(P) { sentence \"!\" }",
     "1:12", "unknown vocabulary 'NoSuch'"),
    ("vocab V { sort P; rel R(P); }\n"
     "mer X over V coupled(P) { reduct \"R(x)\"; }\n"
     "mer X over V coupled(P) { reduct \"R(x)\"; }",
     "3:5", "duplicate equivalence name 'X'"),
    ("vocab V { sort P; rel R(P); }\n"
     "theory T over V { axiom \"a\": forall x:P R(x); }",
     "2:30", "expected '.', found 'R' at line 1, column 12"),
    ("vocab V { sort P; rel R(P); }\n"
     "theory T over V { axiom \"a\": R(x); }",
     "2:30", "axioms must be closed sentences"),
    ("vocab V { sort P; rel R(P); }\n"
     "structure M over V { P = 2; R = {(5)}; }",
     "2:11", "tuple (5,) out of range for R"),
    ("vocab V { sort P; sort Q; rel R(P); }\n"
     "structure M over V { P = 2; }",
     "2:11", "no size for sorts ['Q']"),
    ("vocab V { sort P; rel R(P); }\n"
     "structure M over V { P = 2; Z = {(0)}; }",
     "2:29", "'Z' is neither a sort nor a relation"),
    ("vocab V { sort P; rel R(P); }\n"
     "mer X over V coupled(P) { wibble \"R(x)\"; }",
     "2:27", "unknown equivalence clause 'wibble'"),
    ("vocab V { sort P; rel R(P, P); }\n"
     "mer X over V coupled(P) { family \"R(x, y)\"; }",
     "2:34", "must look like REL(vars : vars : ...)"),
    ("vocab V { sort P; sort Q; rel G(P, Q); }\n"
     "mer X over V coupled(P) { reduct \"G(x, y)\"; }",
     "2:34", "variable 'y' on non-coupled sort 'Q'"),
    ("vocab V { sort P; rel R(P); } 17",
     "1:31", "expected a declaration, found '17'"),
    ("vocab V { sort P; rel R(P); }\n"
     "mer X over V coupled(P) { sentence \"R(x) }",
     "2:36", "unterminated string"),
]


@pytest.mark.parametrize("text,pos,message", CASES,
                         ids=[m.split("'")[0].strip()[:24] for _, _, m in CASES])
def test_diagnostics_carry_position(tmp_path, text, pos, message):
    path = write(tmp_path, text)
    with pytest.raises(WorkspaceError) as exc:
        load_workspace(path)
    s = str(exc.value)
    assert f"{path}:{pos}:" in s
    assert message in s


def test_missing_file_reports_path(tmp_path):
    with pytest.raises(MerlabError, match="cannot read workspace"):
        load_workspace(tmp_path / "absent.mer")


def test_builtin_signature_must_match(tmp_path):
    path = write(tmp_path,
                 "vocab W { sort V; rel R(V, V); rel LE(V, V); }\n"
                 "mer X over W coupled(V) { builtin identity; }")
    with pytest.raises(WorkspaceError) as exc:
        load_workspace(path)
    assert "different signature" in str(exc.value)


def test_comments_and_trailing_commas(tmp_path):
    path = write(tmp_path,
                 "# leading note\n"
                 "vocab V { sort P; rel R(P, P); }  # inline\n"
                 "structure M over V { P = 2; R = {(0, 1), (1, 0),}; }\n")
    ws = load_workspace(path)
    assert set(ws.structures["M"].extent("R")) == {(0, 1), (1, 0)}


# -- shorthand helpers -----------------------------------------------------

def test_family_shorthand_blocks():
    v = vocabulary(["P", "Q"], {"H": ["P", "P", "Q"]})
    pf = family_shorthand(v, "H(a, b : c)")
    assert pf.blocks == ((("a", "P"), ("b", "P")), (("c", "Q"),))


def test_family_shorthand_errors():
    v = vocabulary(["P", "Q"], {"G": ["P", "Q"]})
    with pytest.raises(MerlabError, match="arity"):
        family_shorthand(v, "G(x : y, z)")
    with pytest.raises(MerlabError, match="distinct"):
        v2 = vocabulary(["P"], {"R": ["P", "P"]})
        family_shorthand(v2, "R(x : x)")
    with pytest.raises(MerlabError, match="empty block"):
        family_shorthand(v, "G(x : )")
    with pytest.raises(MerlabError, match="REL"):
        family_shorthand(v, "G(x, y)")


def test_order_shorthand_first_occurrence():
    v = vocabulary(["V"], {"LE": ["V", "V"]})
    spec = order_shorthand(v, "LE(a, b)")
    assert (spec.left_var, spec.right_var) == ("a", "b")
    flipped = order_shorthand(v, "LE(b, a)")
    assert (flipped.left_var, flipped.right_var) == ("b", "a")


def test_order_shorthand_errors():
    v = vocabulary(["V", "W"], {"LE": ["V", "V"], "X": ["V", "W"]})
    with pytest.raises(MerlabError, match="exactly two"):
        order_shorthand(v, "LE(a, a)")
    with pytest.raises(MerlabError, match="one sort"):
        order_shorthand(v, "X(a, b)")


# -- metrics ---------------------------------------------------------------

def test_load_metric_valid():
    m = load_metric(FIXTURES / "disc.json")
    assert m.points == ("yes", "no")
    assert m.table[0][1] == 1


def test_load_metric_errors(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{"points": ["a"]}', encoding="utf-8")
    with pytest.raises(MerlabError, match='"points" and "table"'):
        load_metric(bad)
    bad.write_text('{"points": ["a", "b"], "table": [["0", "1"]]}',
                   encoding="utf-8")
    with pytest.raises(MerlabError, match="shape"):
        load_metric(bad)
    bad.write_text("not json", encoding="utf-8")
    with pytest.raises(MerlabError, match="valid JSON"):
        load_metric(bad)
    with pytest.raises(MerlabError, match="cannot read"):
        load_metric(tmp_path / "absent.json")
