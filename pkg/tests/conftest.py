"""Shared vocabularies and independent oracle helpers.

The helpers here deliberately avoid the library's compiled paths: the
naive evaluator recurses over the AST directly, and the brute-force
helpers enumerate bijections by hand.  Tests compare library output
against these second routes.
"""

import itertools

import pytest

from merlab import (
    And,
    Atom,
    Bottom,
    Eq,
    Exists,
    FiniteStructure,
    Forall,
    Iff,
    Implies,
    Not,
    Or,
    Top,
    structure,
    vocabulary,
)


@pytest.fixture
def digraph_vocab():
    return vocabulary(["V"], {"R": ["V", "V"]})


@pytest.fixture
def bip_vocab():
    return vocabulary(["P", "Q"], {"G": ["P", "Q"]})


@pytest.fixture
def unary_vocab():
    return vocabulary(["V"], {"P": ["V"]})


def naive_eval(M: FiniteStructure, f, env):
    """Recursive truth definition, no compilation, no sharing."""
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, Atom):
        return tuple(env[a] for a in f.args) in M.extent(f.rel)
    if isinstance(f, Eq):
        return env[f.left] == env[f.right]
    if isinstance(f, Not):
        return not naive_eval(M, f.body, env)
    if isinstance(f, And):
        return all(naive_eval(M, p, env) for p in f.parts)
    if isinstance(f, Or):
        return any(naive_eval(M, p, env) for p in f.parts)
    if isinstance(f, Implies):
        return (not naive_eval(M, f.lhs, env)) or naive_eval(M, f.rhs, env)
    if isinstance(f, Iff):
        return naive_eval(M, f.lhs, env) == naive_eval(M, f.rhs, env)
    if isinstance(f, Forall):
        return all(
            naive_eval(M, f.body, {**env, f.var: v})
            for v in M.universe(f.sort)
        )
    if isinstance(f, Exists):
        return any(
            naive_eval(M, f.body, {**env, f.var: v})
            for v in M.universe(f.sort)
        )
    raise AssertionError(f"unhandled node {type(f).__name__}")


def brute_isomorphisms(M: FiniteStructure, N: FiniteStructure):
    """All isomorphism families by direct definition-checking."""
    if M.vocab != N.vocab or M.sizes != N.sizes:
        return []
    perms_per_sort = [
        itertools.permutations(range(n)) for n in M.sizes
    ]
    out = []
    for fam in itertools.product(*perms_per_sort):
        ok = True
        for rel, ext in zip(M.vocab.relations, M.extents):
            idx = [M.vocab.sort_index(s) for s in rel.profile]
            mapped = {
                tuple(fam[i][v] for i, v in zip(idx, t)) for t in ext
            }
            if mapped != set(N.extent(rel.name)):
                ok = False
                break
        if ok:
            out.append(tuple(tuple(p) for p in fam))
    return out


def all_digraphs(n: int):
    """Every structure over one binary relation on n points."""
    vocab = vocabulary(["V"], {"R": ["V", "V"]})
    pairs = list(itertools.product(range(n), repeat=2))
    out = []
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        ext = [p for p, b in zip(pairs, bits) if b]
        out.append(structure(vocab, {"V": n}, {"R": ext}))
    return out


def all_bipartite(p: int, q: int):
    vocab = vocabulary(["P", "Q"], {"G": ["P", "Q"]})
    pairs = list(itertools.product(range(p), range(q)))
    out = []
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        ext = [t for t, b in zip(pairs, bits) if b]
        out.append(structure(vocab, {"P": p, "Q": q}, {"G": ext}))
    return out
