"""Equivalence specs: evaluation, groupoids, law checks, quotients."""

import itertools

import pytest

from merlab import (
    Budget,
    BudgetExceeded,
    Builtin,
    BySentence,
    ByFamilyTower,
    FamilyTower,
    MerlabError,
    NotEquivalenceError,
    PartitionedFormula,
    SortError,
    approx_mer,
    base_order_relation,
    check_equivalence_relation,
    check_groupoid_laws,
    classify_prefix,
    coupled_families,
    coupled_signature,
    definable_set,
    empty_theory,
    equivalent,
    find_isomorphisms,
    groupoid_morphisms,
    identity_mer,
    is_morphism,
    mer_classes,
    metric_of,
    models_of,
    nset_leq,
    nset_value,
    parse_formula,
    recheck_er_verdict,
    recheck_groupoid_verdict,
    reduct_mer,
    scale_of,
    structure,
    tower_sentence,
    transport,
    trivial_mer,
    vocabulary,
)
from merlab.catalog import catalog_get
from merlab.mer import check_groupoid_laws_direct, pair_matrix

from conftest import all_digraphs


def dg_sig(vocab):
    return coupled_signature(vocab, ["V"])


def unary_setup():
    v = vocabulary(["V"], {"U": ["V"]})
    return v, coupled_signature(v, ["V"])


# -- evaluation per kind ---------------------------------------------------

def test_trivial_relates_everything(digraph_vocab):
    spec = trivial_mer(dg_sig(digraph_vocab))
    M = structure(digraph_vocab, {"V": 3}, {"R": [(0, 1)]})
    N = structure(digraph_vocab, {"V": 3}, {"R": [(2, 2), (1, 0)]})
    assert equivalent(spec, M, N)


def test_identity_is_literal_equality(digraph_vocab):
    spec = identity_mer(dg_sig(digraph_vocab))
    M = structure(digraph_vocab, {"V": 2}, {"R": [(0, 1)]})
    N = structure(digraph_vocab, {"V": 2}, {"R": [(1, 0)]})
    assert equivalent(spec, M, M)
    assert not equivalent(spec, M, N)  # isomorphic but not equal


def test_coupled_size_mismatch_rejected(digraph_vocab):
    spec = trivial_mer(dg_sig(digraph_vocab))
    M = structure(digraph_vocab, {"V": 1}, {})
    N = structure(digraph_vocab, {"V": 2}, {})
    with pytest.raises(SortError):
        equivalent(spec, M, N)


def test_reduct_compares_definable_relations(digraph_vocab):
    sig = dg_sig(digraph_vocab)
    f = parse_formula("exists y:V. R(x, y)", digraph_vocab)
    spec = reduct_mer(sig, [(f, (("x", "V"),))])
    models = all_digraphs(2)
    for M in models:
        for N in models:
            want = definable_set(M, f, [("x", "V")]) == \
                definable_set(N, f, [("x", "V")])
            assert equivalent(spec, M, N) == want


def test_reduct_on_full_relation_is_identity(digraph_vocab):
    sig = dg_sig(digraph_vocab)
    f = parse_formula("R(x, y)", digraph_vocab)
    spec = reduct_mer(sig, [(f, (("x", "V"), ("y", "V")))])
    models = all_digraphs(2)
    for M in models:
        for N in models:
            assert equivalent(spec, M, N) == (M.extent("R") == N.extent("R"))


def test_approx_label_mismatch():
    v, sig = unary_setup()
    met = metric_of(["a", "b"], [["0", "1"], ["1", "0"]])
    labels = [parse_formula("U(x)"), parse_formula("!U(x)")]
    spec = approx_mer(sig, [("x", "V")], labels, ["a", "b"], met, 1)
    M = structure(v, {"V": 1}, {"U": [(0,)]})
    N = structure(v, {"V": 1}, {})
    assert equivalent(spec, M, M)
    assert not equivalent(spec, M, N)  # distance 1 is not below eps 1


def test_approx_large_eps_is_trivial():
    v, sig = unary_setup()
    met = metric_of(["a", "b"], [["0", "1"], ["1", "0"]])
    labels = [parse_formula("U(x)"), parse_formula("!U(x)")]
    spec = approx_mer(sig, [("x", "V")], labels, ["a", "b"], met, 2)
    models = [structure(v, {"V": 2}, {"U": [(i,) for i in ext]})
              for ext in ([], [0], [1], [0, 1])]
    for M in models:
        for N in models:
            assert equivalent(spec, M, N)


# -- equivalence-relation checks -------------------------------------------

def test_er_holds_for_basic_specs(digraph_vocab):
    sig = dg_sig(digraph_vocab)
    th = empty_theory(digraph_vocab)
    for spec in (trivial_mer(sig), identity_mer(sig)):
        v = check_equivalence_relation(spec, th, scale_of(sig, 2))
        assert v.kind is None


def test_er_symmetry_counterexample():
    v, sig = unary_setup()
    spec = BySentence(sig, parse_formula("forall x:V. (U(x) -> U'(x))"))
    verdict = check_equivalence_relation(spec, empty_theory(v), scale_of(sig, 1))
    assert verdict.kind == "symmetry"
    assert len(verdict.witnesses) == 2
    M, N = verdict.witnesses
    assert equivalent(spec, M, N) and not equivalent(spec, N, M)
    assert recheck_er_verdict(spec, verdict)


def test_er_transitivity_counterexample():
    vocab = vocabulary(["V"], {"U": ["V"], "W": ["V"]})
    sig = coupled_signature(vocab, ["V"])
    met = metric_of(["a", "b", "c"],
                    [["0", "3/5", "6/5"],
                     ["3/5", "0", "3/5"],
                     ["6/5", "3/5", "0"]])
    labels = [parse_formula("!(exists x:V. U(x))"),
              parse_formula("(exists x:V. U(x)) & !(exists x:V. W(x))"),
              parse_formula("(exists x:V. U(x)) & (exists x:V. W(x))")]
    spec = approx_mer(sig, [], labels, ["a", "b", "c"], met, 1)
    verdict = check_equivalence_relation(spec, empty_theory(vocab),
                                         scale_of(sig, 1))
    assert verdict.kind == "transitivity"
    assert len(verdict.witnesses) == 3
    a, b, c = verdict.witnesses
    assert equivalent(spec, a, b) and equivalent(spec, b, c)
    assert not equivalent(spec, a, c)
    assert recheck_er_verdict(spec, verdict)


def test_er_not_well_defined():
    vocab = vocabulary(["V"], {"U": ["V"], "W": ["V"]})
    sig = coupled_signature(vocab, ["V"])
    met = metric_of(["a", "b"], [["0", "1"], ["1", "0"]])
    # overlapping labels: a structure with both U and W empty fits neither
    labels = [parse_formula("exists x:V. U(x)"),
              parse_formula("exists x:V. W(x)")]
    spec = approx_mer(sig, [], labels, ["a", "b"], met, 1)
    verdict = check_equivalence_relation(spec, empty_theory(vocab),
                                         scale_of(sig, 1))
    assert verdict.kind == "not-well-defined"
    assert recheck_er_verdict(spec, verdict)


def test_er_respects_budget(digraph_vocab):
    sig = dg_sig(digraph_vocab)
    with pytest.raises(BudgetExceeded):
        check_equivalence_relation(identity_mer(sig),
                                   empty_theory(digraph_vocab),
                                   scale_of(sig, 3), budget=Budget(10))


# -- groupoid morphisms ----------------------------------------------------

def test_trivial_morphisms_are_all_families(digraph_vocab):
    spec = trivial_mer(dg_sig(digraph_vocab))
    M = structure(digraph_vocab, {"V": 3}, {"R": [(0, 1)]})
    assert len(groupoid_morphisms(spec, M, M)) == 6


def test_identity_morphisms_are_automorphisms(digraph_vocab):
    spec = identity_mer(dg_sig(digraph_vocab))
    cyc = structure(digraph_vocab, {"V": 3}, {"R": [(0, 1), (1, 2), (2, 0)]})
    ms = groupoid_morphisms(spec, cyc, cyc)
    assert len(ms) == 3
    assert sorted(m["V"] for m in ms) == [(0, 1, 2), (1, 2, 0), (2, 0, 1)]


def test_adjacency_morphism_count(bip_vocab):
    spec = catalog_get("adj-sets").spec
    M = structure(bip_vocab, {"P": 2, "Q": 2}, {"G": [(0, 0), (1, 0), (1, 1)]})
    ms = groupoid_morphisms(spec, M, M)
    # rows {0} and {0,1} pin the Q side; the P side collapses
    assert len(ms) == 2
    assert all(m["Q"] == (0, 1) for m in ms)


def test_morphisms_defined_by_transport(digraph_vocab):
    spec = identity_mer(dg_sig(digraph_vocab))
    models = all_digraphs(2)
    fams = coupled_families(spec.sig, {"V": 2})
    for M in models[::3]:
        for N in models[::3]:
            got = {tuple(sorted(m.items())) for m in
                   groupoid_morphisms(spec, M, N)}
            want = {tuple(sorted(f.items())) for f in fams
                    if is_morphism(spec, M, N, f)}
            assert got == want


def test_identity_morphisms_equal_isomorphisms(digraph_vocab):
    spec = identity_mer(dg_sig(digraph_vocab))
    models = all_digraphs(2)
    for M in models:
        for N in models:
            ms = {tuple(sorted(m.items())) for m in
                  groupoid_morphisms(spec, M, N)}
            isos = {tuple(sorted(zip(M.vocab.sorts, f))) for f in
                    find_isomorphisms(M, N)}
            assert ms == isos


def test_isomorphisms_are_morphisms_for_every_entry():
    # conjugation invariance puts every isomorphism in every groupoid
    for ident in ("trivial", "adj-sets"):
        spec = catalog_get(ident).spec
        vocab = spec.sig.vocab
        sizes = {s: 2 for s in vocab.sorts}
        models = list(models_of(empty_theory(vocab), sizes))
        for M in models[::5]:
            for N in models[::5]:
                ms = {tuple(sorted(m.items())) for m in
                      groupoid_morphisms(spec, M, N)}
                for f in find_isomorphisms(M, N):
                    assert tuple(sorted(zip(vocab.sorts, f))) in ms


# -- groupoid laws ---------------------------------------------------------

def test_laws_pass_for_identity(digraph_vocab):
    sig = dg_sig(digraph_vocab)
    th = empty_theory(digraph_vocab)
    scale = scale_of(sig, 2)
    spec = identity_mer(sig)
    assert check_groupoid_laws(spec, th, scale).kind is None
    assert check_groupoid_laws_direct(spec, th, scale).kind is None


def test_laws_inverse_violation():
    v, sig = unary_setup()
    spec = BySentence(sig, parse_formula("forall x:V. (U(x) -> U'(x))"))
    th = empty_theory(v)
    scale = scale_of(sig, 1)
    fast = check_groupoid_laws(spec, th, scale)
    direct = check_groupoid_laws_direct(spec, th, scale)
    assert fast.kind == "inverse" == direct.kind
    assert fast.families
    assert recheck_groupoid_verdict(spec, fast)
    assert recheck_groupoid_verdict(spec, direct)


def test_laws_pass_for_adjacency():
    spec = catalog_get("adj-sets").spec
    th = empty_theory(spec.sig.vocab)
    scale = scale_of(spec.sig, 2)
    assert check_groupoid_laws(spec, th, scale).kind is None
    assert check_groupoid_laws_direct(spec, th, scale).kind is None


# -- quotients -------------------------------------------------------------

def test_classes_trivial(digraph_vocab):
    sig = dg_sig(digraph_vocab)
    classes = mer_classes(trivial_mer(sig), empty_theory(digraph_vocab),
                          {"V": 2})
    assert [len(c) for c in classes] == [16]


def test_classes_identity_singletons():
    v, sig = unary_setup()
    classes = mer_classes(identity_mer(sig), empty_theory(v), {"V": 1})
    assert len(classes) == 2
    assert all(len(c) == 1 for c in classes)


def test_classes_adjacency_count():
    entry = catalog_get("adj-sets")
    classes = mer_classes(entry.spec, empty_theory(entry.spec.sig.vocab),
                          {"P": 2, "Q": 2})
    assert len(classes) == 10
    assert sum(len(c) for c in classes) == 16


def test_classes_reject_non_er():
    v, sig = unary_setup()
    spec = BySentence(sig, parse_formula("forall x:V. (U(x) -> U'(x))"))
    with pytest.raises(NotEquivalenceError) as exc:
        mer_classes(spec, empty_theory(v), {"V": 1})
    assert exc.value.verdict.kind == "symmetry"


def test_classes_members_pairwise_equivalent():
    entry = catalog_get("adj-sets")
    classes = mer_classes(entry.spec, empty_theory(entry.spec.sig.vocab),
                          {"P": 2, "Q": 2})
    for cls in classes:
        rep = cls[0]
        for other in cls[1:]:
            assert equivalent(entry.spec, rep, other)
    reps = [c[0] for c in classes]
    for a, b in itertools.combinations(reps, 2):
        assert not equivalent(entry.spec, a, b)


# -- sentence classification -----------------------------------------------

def test_classify_examples(digraph_vocab):
    cases = [
        ("forall x:V. R(x, x)", "Pi1"),
        ("exists x:V. R(x, x)", "Sigma1"),
        ("forall x:V. exists y:V. R(x, y)", "Pi2"),
        ("forall x:V. forall y:V. R(x, y)", "Pi1"),
        ("forall x:V. (R(x, x) & exists y:V. R(x, y))", "Pi2"),
    ]
    for text, want in cases:
        assert classify_prefix(parse_formula(text, digraph_vocab)).name == want


def test_classify_invariances(digraph_vocab):
    a = parse_formula("forall x:V. (R(x, x) & exists y:V. R(x, y))",
                      digraph_vocab)
    b = parse_formula("forall u:V. (exists w:V. R(u, w) & R(u, u))",
                      digraph_vocab)
    assert classify_prefix(a).name == classify_prefix(b).name


def test_adjacency_sentence_is_pi3():
    spec = catalog_get("adj-sets").spec
    assert classify_prefix(tower_sentence(spec.tower)).name == "Pi3"


# -- approximate reducts vs exact ------------------------------------------

def test_discrete_eps_one_matches_reduct():
    entry = catalog_get("approx-discrete")
    spec = entry.spec
    vocab = spec.sig.vocab
    exact = reduct_mer(spec.sig, [(spec.labels[0], spec.label_vars)])
    for n in (1, 2):
        models = list(models_of(empty_theory(vocab), {"V": n}))
        for M in models:
            for N in models:
                assert equivalent(spec, M, N) == equivalent(exact, M, N)


# -- cofinal orders --------------------------------------------------------

def test_cofinal_agrees_with_direct_domination():
    entry = catalog_get("cofinal-rows")
    spec, th = entry.spec, entry.theory
    total = 0
    for n in (0, 1, 2):
        models = list(models_of(th, {"V": n}))
        for M in models:
            a = nset_value(M, spec.family)
            for N in models:
                total += 1
                if M.extent("LE") != N.extent("LE"):
                    direct = False
                else:
                    base = base_order_relation(M, spec.order)
                    b = nset_value(N, spec.family)
                    direct = nset_leq(a, b, base) and nset_leq(b, a, base)
                assert equivalent(spec, M, N) == direct
    assert total == 2309


def test_cofinal_needs_shared_order():
    entry = catalog_get("cofinal-rows")
    v = entry.spec.sig.vocab
    chain = [(0, 0), (1, 1), (0, 1)]
    anti = [(0, 0), (1, 1)]
    g = [(0, 1)]
    M = structure(v, {"V": 2}, {"LE": chain, "G": g})
    N = structure(v, {"V": 2}, {"LE": anti, "G": g})
    assert equivalent(entry.spec, M, M)
    assert not equivalent(entry.spec, M, N)


# -- builtins and determinism ----------------------------------------------

def test_builtin_resolves(digraph_vocab):
    M = structure(digraph_vocab, {"V": 2}, {"R": [(0, 1)]})
    N = structure(digraph_vocab, {"V": 2}, {"R": [(1, 0)]})
    assert equivalent(Builtin("identity"), M, M)
    assert not equivalent(Builtin("identity"), M, N)
    assert equivalent(Builtin("trivial"), M, N)


def test_unknown_builtin_rejected(digraph_vocab):
    M = structure(digraph_vocab, {"V": 1}, {})
    with pytest.raises(MerlabError):
        equivalent(Builtin("no-such-entry"), M, M)


def test_pair_matrix_thread_counts_agree(digraph_vocab):
    import numpy as np

    spec = identity_mer(dg_sig(digraph_vocab))
    models = all_digraphs(2)
    one = pair_matrix(spec, models, threads=1)
    many = pair_matrix(spec, models, threads=4)
    assert np.array_equal(one, many)


def test_transport_definition_of_morphism(digraph_vocab):
    # f is a morphism M -> N exactly when M is equivalent to N pulled back
    spec = catalog_get("adj-sets").spec
    vocab = spec.sig.vocab
    M = structure(vocab, {"P": 2, "Q": 2}, {"G": [(0, 0), (1, 1)]})
    N = structure(vocab, {"P": 2, "Q": 2}, {"G": [(0, 1), (1, 0)]})
    fams = coupled_families(spec.sig, {"P": 2, "Q": 2})
    for f in fams:
        inv = {s: tuple(p.index(i) for i in range(len(p)))
               for s, p in f.items()}
        pulled = transport(N, inv)
        assert is_morphism(spec, M, N, f) == equivalent(spec, M, pulled)
