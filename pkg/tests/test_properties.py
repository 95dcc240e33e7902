"""Randomized laws with hypothesis; deterministic profiles only."""

import itertools

from hypothesis import given, settings, strategies as st

from merlab import (
    And,
    Atom,
    Bottom,
    Eq,
    Exists,
    Forall,
    Iff,
    Implies,
    NSetValue,
    Not,
    Or,
    OrderSpec,
    Top,
    classify_prefix,
    coupled_signature,
    equivalent,
    evaluate,
    format_formula,
    nset_equal,
    nset_leq,
    nset_value,
    parse_formula,
    reduct_mer,
    structure,
    transport,
    vocabulary,
    base_order_relation,
)
from merlab.catalog import adjacency_nset, swap_adjacency
from merlab.nsets import PartitionedFormula

from conftest import naive_eval

DG = vocabulary(["V"], {"R": ["V", "V"]})
VARS = ("x", "y", "z")


def atoms():
    v = st.sampled_from(VARS)
    return st.one_of(
        st.builds(Atom, st.just("R"), st.tuples(v, v), st.just(False)),
        st.builds(Eq, v, v),
        st.just(Top()),
        st.just(Bottom()),
    )


def formulas():
    def extend(children):
        v = st.sampled_from(VARS)
        return st.one_of(
            st.builds(Not, children),
            st.builds(lambda a, b: And((a, b)), children, children),
            st.builds(lambda a, b: Or((a, b)), children, children),
            st.builds(Implies, children, children),
            st.builds(Iff, children, children),
            st.builds(Forall, v, st.just("V"), children),
            st.builds(Exists, v, st.just("V"), children),
        )

    return st.recursive(atoms(), extend, max_leaves=8)


def digraphs(max_n=3):
    return st.integers(1, max_n).flatmap(
        lambda n: st.builds(
            lambda ext: structure(DG, {"V": n}, {"R": ext}),
            st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))),
        )
    )


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_format_parse_round_trip(f):
    assert parse_formula(format_formula(f)) == f


@settings(max_examples=150, deadline=None)
@given(digraphs(), formulas(), st.integers(0, 5))
def test_evaluate_matches_naive(M, f, pick):
    n = M.size("V")
    env = {v: (pick + i) % n for i, v in enumerate(VARS)}
    assert evaluate(M, f, env) == naive_eval(M, f, env)


@settings(max_examples=100, deadline=None)
@given(digraphs(), st.randoms(use_true_random=False))
def test_transport_functorial(M, rnd):
    n = M.size("V")
    f = list(range(n))
    g = list(range(n))
    rnd.shuffle(f)
    rnd.shuffle(g)
    comp = tuple(g[f[i]] for i in range(n))
    assert transport(M, {"V": comp}) == transport(
        transport(M, {"V": f}), {"V": g})


@settings(max_examples=60, deadline=None)
@given(st.lists(digraphs(2), min_size=3, max_size=3))
def test_reduct_is_equivalence(ms):
    ms = [M for M in ms if M.size("V") == ms[0].size("V")]
    sig = coupled_signature(DG, ["V"])
    f = parse_formula("exists y:V. R(x, y)", DG)
    spec = reduct_mer(sig, [(f, (("x", "V"),))])
    for M in ms:
        assert equivalent(spec, M, M)
    for M, N in itertools.permutations(ms, 2):
        assert equivalent(spec, M, N) == equivalent(spec, N, M)
    if len(ms) == 3:
        a, b, c = ms
        if equivalent(spec, a, b) and equivalent(spec, b, c):
            assert equivalent(spec, a, c)


def depth2_values(n=3):
    sets1 = st.frozensets(st.integers(0, n - 1), max_size=n)
    return st.frozensets(sets1, min_size=1, max_size=4).map(
        lambda ss: NSetValue.of_values(
            [NSetValue.of_tuples([(e,) for e in s]) for s in ss]))


CHAIN = structure(vocabulary(["V"], {"LE": ["V", "V"]}), {"V": 3},
                  {"LE": [(a, b) for a in range(3) for b in range(3)
                          if a <= b]})
CHAIN_LEQ = base_order_relation(
    CHAIN, OrderSpec("V", "a", "b",
                     parse_formula("LE(a, b)", CHAIN.vocab)))


@settings(max_examples=120, deadline=None)
@given(depth2_values(), depth2_values(), depth2_values())
def test_lifted_order_is_preorder(a, b, c):
    assert nset_leq(a, a, CHAIN_LEQ)
    if nset_leq(a, b, CHAIN_LEQ) and nset_leq(b, c, CHAIN_LEQ):
        assert nset_leq(a, c, CHAIN_LEQ)


BIP = vocabulary(["P", "Q"], {"G": ["P", "Q"]})


def bip_graphs(p=3, q=3):
    return st.builds(
        lambda ext: structure(BIP, {"P": p, "Q": q}, {"G": ext}),
        st.sets(st.tuples(st.integers(0, p - 1), st.integers(0, q - 1))),
    )


def disjoint_pairs(p=3):
    perms = [pairs for r in (0, 1)
             for pairs in itertools.combinations(
                 itertools.combinations(range(p), 2), r + 1)
             if len({e for pr in pairs for e in pr}) == 2 * (r + 1)]
    return st.sampled_from(perms)


@settings(max_examples=100, deadline=None)
@given(bip_graphs(), disjoint_pairs())
def test_swap_involution_and_value(G, pairs):
    swapped = swap_adjacency(G, pairs)
    assert swap_adjacency(swapped, pairs) == G
    assert nset_equal(adjacency_nset(G), adjacency_nset(swapped))


def rename_vars(f, table):
    if isinstance(f, Atom):
        return Atom(f.rel, tuple(table[a] for a in f.args), f.primed)
    if isinstance(f, Eq):
        return Eq(table[f.left], table[f.right])
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Not):
        return Not(rename_vars(f.body, table))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(rename_vars(p, table) for p in f.parts))
    if isinstance(f, (Implies, Iff)):
        return type(f)(rename_vars(f.lhs, table), rename_vars(f.rhs, table))
    return type(f)(table[f.var], f.sort, rename_vars(f.body, table))


@settings(max_examples=100, deadline=None)
@given(formulas())
def test_classify_ignores_bound_names(f):
    closed = Forall("x", "V", Forall("y", "V", Forall("z", "V", f)))
    renamed = rename_vars(closed, {"x": "u", "y": "v", "z": "w"})
    assert classify_prefix(closed).name == classify_prefix(renamed).name


@settings(max_examples=80, deadline=None)
@given(bip_graphs(2, 2), st.permutations(range(2)), st.permutations(range(2)))
def test_value_equivariance_random(G, pp, pq):
    pf = PartitionedFormula(parse_formula("G(x, y)", BIP),
                            ((("x", "P"),), (("y", "Q"),)))
    N = transport(G, {"P": tuple(pp), "Q": tuple(pq)})
    v1 = nset_value(N, pf)
    img = NSetValue.of_values([
        NSetValue.of_tuples([(pq[e],) for (e,) in row.value])
        for row in nset_value(G, pf).members()])
    assert nset_equal(v1, img)
