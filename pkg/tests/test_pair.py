"""Two-copy language, transport, and the linked-triple language."""

import itertools

import pytest

from merlab import (
    MerlabError,
    SortError,
    coupled_signature,
    evaluate_pair,
    find_isomorphisms,
    make_double,
    parse_formula,
    prime_translate,
    structure,
    transport,
    validate_pair_formula,
    vocabulary,
)
from merlab.pair import TripleStructure, evaluate_triple

from conftest import all_digraphs


@pytest.fixture
def sig():
    return coupled_signature(vocabulary(["V"], {"P": ["V"], "E": ["V", "V"]}),
                             ["V"])


@pytest.fixture
def split_sig():
    # P coupled, Q decoupled
    return coupled_signature(vocabulary(["P", "Q"], {"G": ["P", "Q"]}), ["P"])


# -- doubles ---------------------------------------------------------------

def test_double_same_structure(sig):
    M = structure(sig.vocab, {"V": 2}, {"E": [(0, 1)]})
    make_double(sig, M, M)


def test_double_coupled_size_mismatch(sig):
    M = structure(sig.vocab, {"V": 2}, {})
    N = structure(sig.vocab, {"V": 3}, {})
    with pytest.raises(MerlabError):
        make_double(sig, M, N)


def test_double_decoupled_sizes_free(split_sig):
    M = structure(split_sig.vocab, {"P": 2, "Q": 1}, {})
    N = structure(split_sig.vocab, {"P": 2, "Q": 4}, {})
    make_double(split_sig, M, N)  # no error


# -- prime translation -----------------------------------------------------

def test_prime_translate_atom(sig):
    assert prime_translate(sig, parse_formula("P(x)")) == parse_formula("P'(x)")


def test_prime_translate_quantified(sig):
    f = parse_formula("forall x:V. E(x, x)")
    assert prime_translate(sig, f) == parse_formula("forall x:V. E'(x, x)")


def test_prime_translate_keeps_shape(sig):
    f = parse_formula("forall x:V. (P(x) -> exists y:V. (E(x, y) | x = y))")
    g = prime_translate(sig, f)
    assert type(g) is type(f)
    assert format_like(g) == format_like(f).replace("P(", "P'(").replace(
        "E(", "E'(")


def format_like(f):
    from merlab import format_formula

    return format_formula(f)


def test_prime_translate_rejects_primed(sig):
    with pytest.raises(SortError):
        prime_translate(sig, parse_formula("P'(x)"))


# -- pair evaluation -------------------------------------------------------

def test_pair_identity_sentence(sig):
    M = structure(sig.vocab, {"V": 2}, {"P": [(0,)]})
    d = make_double(sig, M, M)
    assert evaluate_pair(d, parse_formula("forall x:V. (P(x) <-> P'(x))"))


def test_pair_containment_fails_one_way(sig):
    L = structure(sig.vocab, {"V": 1}, {"P": [(0,)]})
    R = structure(sig.vocab, {"V": 1}, {"P": []})
    d = make_double(sig, L, R)
    assert not evaluate_pair(d, parse_formula("forall x:V. (P(x) -> P'(x))"))
    assert evaluate_pair(
        make_double(sig, R, L), parse_formula("forall x:V. (P(x) -> P'(x))"))


def test_pair_cross_component_equality_rejected(split_sig):
    # q lives on the right copy of decoupled Q, p on the left
    f = parse_formula("forall p:Q. forall q:Q'. p = q")
    with pytest.raises(MerlabError):
        validate_pair_formula(split_sig, f, {})


def test_pair_decoupled_primed_sort(split_sig):
    # right copy of a decoupled sort is quantified independently
    L = structure(split_sig.vocab, {"P": 1, "Q": 1}, {"G": [(0, 0)]})
    R = structure(split_sig.vocab, {"P": 1, "Q": 3}, {"G": [(0, 2)]})
    d = make_double(split_sig, L, R)
    f = parse_formula("forall x:P. (exists y:Q. G(x, y)) <-> (exists z:Q'. G'(x, z))")
    assert evaluate_pair(d, f)


# -- transport -------------------------------------------------------------

def test_transport_identity(sig):
    M = structure(sig.vocab, {"V": 3}, {"E": [(0, 1), (1, 2)]})
    assert transport(M, {"V": (0, 1, 2)}) == M
    assert transport(M, {}) == M


def test_transport_swap_unary(sig):
    M = structure(sig.vocab, {"V": 2}, {"P": [(0,)]})
    N = transport(M, {"V": (1, 0)})
    assert N.extent("P") == frozenset({(1,)})


def test_transport_round_trip(sig):
    M = structure(sig.vocab, {"V": 3}, {"E": [(0, 1), (2, 0)], "P": [(1,)]})
    f = {"V": (2, 0, 1)}
    inv = {"V": tuple(f["V"].index(i) for i in range(3))}
    assert transport(transport(M, f), inv) == M


def test_transport_functoriality(sig):
    M = structure(sig.vocab, {"V": 3}, {"E": [(0, 1), (1, 2), (2, 2)]})
    perms = list(itertools.permutations(range(3)))
    for f in perms:
        for g in perms:
            comp = tuple(g[f[i]] for i in range(3))
            assert transport(M, {"V": comp}) == transport(
                transport(M, {"V": f}), {"V": g})


def test_transport_rejects_non_bijection(sig):
    M = structure(sig.vocab, {"V": 2}, {})
    with pytest.raises(MerlabError):
        transport(M, {"V": (0, 0)})


# -- triples ---------------------------------------------------------------

def test_link_atom_identity(sig):
    M = structure(sig.vocab, {"V": 2}, {})
    t = TripleStructure(sig, M, M, {"V": (0, 1)})
    assert evaluate_triple(t, parse_formula("@f(x, y)"), {"x": 0, "y": 0},
                           {"x": "V", "y": "V'"})
    assert not evaluate_triple(t, parse_formula("@f(x, y)"), {"x": 0, "y": 1},
                               {"x": "V", "y": "V'"})


def test_link_maps_pred_onto_primed(sig):
    L = structure(sig.vocab, {"V": 2}, {"P": [(0,)]})
    R = structure(sig.vocab, {"V": 2}, {"P": [(1,)]})
    t = TripleStructure(sig, L, R, {"V": (1, 0)})
    f = parse_formula("forall x:V. exists y:V'. (@f(x, y) & (P(x) <-> P'(y)))")
    assert evaluate_triple(t, f)


def test_pair_triple_agreement(sig):
    """The triple (M,N,f) satisfies the same coupled sentences as the
    double (M, transport(N, f^-1))."""
    sentences = [
        parse_formula("forall x:V. (P(x) <-> P'(x))"),
        parse_formula("exists x:V. (E(x, x) & !E'(x, x))"),
        parse_formula("forall x:V. forall y:V. (E(x, y) -> E'(y, x))"),
    ]
    vocab = sig.vocab
    structs = []
    for pbits in itertools.product((0, 1), repeat=2):
        for e in ([(0, 1)], [(1, 0), (0, 0)]):
            structs.append(structure(
                vocab, {"V": 2},
                {"P": [(i,) for i, b in enumerate(pbits) if b], "E": e}))
    for M in structs:
        for N in structs:
            for fam in itertools.permutations(range(2)):
                link = {"V": tuple(fam)}
                inv = {"V": tuple(fam.index(i) for i in range(2))}
                t = TripleStructure(sig, M, N, link)
                d = make_double(sig, M, transport(N, inv))
                for s in sentences:
                    relativized = relativize(s)
                    assert evaluate_triple(t, relativized) == evaluate_pair(d, s)


def relativize(f):
    """Push primed atoms through an explicit link: each primed variable
    position x is replaced by a fresh y with @f(x, y)."""
    from merlab import Atom, Exists, Forall, Iff, Implies, Not, And, Or, LinkAtom

    counter = itertools.count()

    def walk(g):
        if isinstance(g, Atom) and g.primed:
            fresh = [f"w{next(counter)}" for _ in g.args]
            body = Atom(g.rel, tuple(fresh), True)
            for x, y in zip(g.args, fresh):
                body = And((LinkAtom(x, y), body))
            for y in reversed(fresh):
                body = Exists(y, "V'", body)
            return body
        if isinstance(g, Not):
            return Not(walk(g.body))
        if isinstance(g, (And, Or)):
            return type(g)(tuple(walk(p) for p in g.parts))
        if isinstance(g, (Implies, Iff)):
            return type(g)(walk(g.lhs), walk(g.rhs))
        if isinstance(g, (Forall, Exists)):
            return type(g)(g.var, g.sort, walk(g.body))
        return g

    return walk(f)


def test_identity_link_matches_plain_double(sig):
    M = structure(sig.vocab, {"V": 2}, {"E": [(0, 1)], "P": [(1,)]})
    t = TripleStructure(sig, M, M, {"V": (0, 1)})
    d = make_double(sig, M, M)
    for text in ["forall x:V. (P(x) <-> P'(x))",
                 "exists x:V. (E(x, x) | E'(x, x))"]:
        s = parse_formula(text)
        assert evaluate_triple(t, relativize(s)) == evaluate_pair(d, s)
