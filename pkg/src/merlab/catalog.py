"""Ready-made vocabularies, theories and equivalence specs, plus the
constructions around them: a seeded generator for bipartite graphs
satisfying bounded extension axioms, adjacency-row swapping with witness
search, and the two-way passage between a graph and its powerset-of-edges
expansion carrying a derived comparison predicate.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .core import (
    And,
    Atom,
    Bottom,
    Budget,
    Eq,
    Formula,
    FiniteStructure,
    MerlabError,
    Not,
    Or,
    Theory,
    Top,
    Vocabulary,
    empty_theory,
    structure,
    vocabulary,
)
from .parser import parse_formula, infer_free_sorts
from .pair import coupled_signature
from .nsets import (
    FamilyTower,
    NSetValue,
    OrderSpec,
    PartitionedFormula,
    _fresh_name,
    expansion_vocabulary,
    nset_value,
)
from .mer import (
    ByCofinalOrder,
    ByFamilyTower,
    ErVerdict,
    MerSpec,
    Scale,
    approx_mer,
    check_equivalence_relation,
    equivalent,
    identity_mer,
    metric_of,
    reduct_mer,
    scale_of,
    trivial_mer,
    _nnf,
)


# --------------------------------------------------------------------------
# entries


@dataclass(frozen=True)
class CatalogEntry:
    ident: str
    doc: str
    theory: Theory
    spec: MerSpec
    reference_scale: Scale

    @property
    def vocab(self) -> Vocabulary:
        return self.theory.vocab


_ENTRIES: dict[str, CatalogEntry] = {}


def _digraph_vocab() -> Vocabulary:
    return vocabulary(["V"], {"R": ["V", "V"]})


def _bipartite_vocab() -> Vocabulary:
    return vocabulary(["P", "Q"], {"G": ["P", "Q"]})


def _build_entries() -> dict[str, CatalogEntry]:
    entries: list[CatalogEntry] = []

    dig = _digraph_vocab()
    dig_sig = coupled_signature(dig, ["V"])
    dig_th = empty_theory(dig)
    entries.append(CatalogEntry(
        "identity",
        "Literal agreement of every relation between the two copies; the "
        "finest spec, its classes are the structures themselves.",
        dig_th,
        identity_mer(dig_sig),
        scale_of(dig_sig, 3),
    ))
    entries.append(CatalogEntry(
        "trivial",
        "The always-true sentence; one class per comparable universe.",
        dig_th,
        trivial_mer(dig_sig),
        scale_of(dig_sig, 3),
    ))
    entries.append(CatalogEntry(
        "reduct-edge",
        "Equality of the edge relation's extent, as a one-formula reduct.",
        dig_th,
        reduct_mer(dig_sig, [(parse_formula("R(x, y)", dig),
                              [("x", "V"), ("y", "V")])]),
        scale_of(dig_sig, 3),
    ))

    bip = _bipartite_vocab()
    bip_sig = coupled_signature(bip, ["P", "Q"])
    entries.append(CatalogEntry(
        "adj-sets",
        "Same set of adjacency rows: the one-level family G(x : y) "
        "collapses each left vertex to its row of right neighbours and "
        "compares the resulting set of rows.",
        empty_theory(bip),
        ByFamilyTower(FamilyTower(bip_sig, (
            PartitionedFormula(parse_formula("G(x, y)", bip),
                               ((("x", "P"),), (("y", "Q"),))),
        ))),
        scale_of(bip_sig, 3),
    ))

    eqv = vocabulary(["V"], {"E": ["V", "V"]})
    eq_sig = coupled_signature(eqv, ["V"])
    eq_axioms = (
        ("reflexive", parse_formula("forall x:V. E(x, x)", eqv)),
        ("symmetric", parse_formula(
            "forall x:V. forall y:V. (E(x, y) -> E(y, x))", eqv)),
        ("transitive", parse_formula(
            "forall x:V. forall y:V. forall z:V. "
            "((E(x, y) & E(y, z)) -> E(x, z))", eqv)),
        ("classes-of-size-2", parse_formula(
            "forall x:V. exists y:V. (E(x, y) & !(x = y) & "
            "forall z:V. (E(x, z) -> (z = x | z = y)))", eqv)),
    )
    entries.append(CatalogEntry(
        "eqrel-size-2",
        "Identity spec over the theory of an equivalence relation all of "
        "whose classes have exactly two elements.",
        Theory("eqrel-size-2", eqv, eq_axioms),
        identity_mer(eq_sig),
        scale_of(eq_sig, 3),
    ))

    tow = vocabulary(["P0", "P1", "P2"],
                     {"G1": ["P0", "P1"], "G2": ["P1", "P2"]})
    tow_sig = coupled_signature(tow, ["P0"])
    level1 = PartitionedFormula(parse_formula("G1(p0, p1)", tow),
                                ((("p1", "P1"),), (("p0", "P0"),)))
    lvl2_vocab, sf_name, cf_name = expansion_vocabulary(tow, level1)
    level2 = PartitionedFormula(
        parse_formula(
            "exists p1:P1. (G2(p1, p2) & forall p0:P0. "
            f"({cf_name}(o, p0) <-> G1(p0, p1)))", lvl2_vocab),
        ((("p2", "P2"),), (("o", sf_name),)),
    )
    entries.append(CatalogEntry(
        "tower-p2",
        "Two-level tower over a three-layer bipartite chain: level one "
        "reifies the G1-rows indexed by P1, level two compares, per P2 "
        "point, the set of reified rows reached through G2.",
        empty_theory(tow),
        ByFamilyTower(FamilyTower(tow_sig, (level1, level2))),
        scale_of(tow_sig, 2, 2),
    ))

    orv = vocabulary(["V"], {"LE": ["V", "V"], "G": ["V", "V"]})
    or_sig = coupled_signature(orv, ["V"])
    po = Theory("partial-order", orv, (
        ("reflexive", parse_formula("forall x:V. LE(x, x)", orv)),
        ("antisymmetric", parse_formula(
            "forall x:V. forall y:V. ((LE(x, y) & LE(y, x)) -> x = y)", orv)),
        ("transitive", parse_formula(
            "forall x:V. forall y:V. forall z:V. "
            "((LE(x, y) & LE(y, z)) -> LE(x, z))", orv)),
    ))
    entries.append(CatalogEntry(
        "cofinal-rows",
        "Mutual domination of the set of G-rows under the order lifted "
        "from LE: each row of one model must sit below some row of the "
        "other, both ways, and the LE extents must agree.",
        po,
        ByCofinalOrder(
            or_sig,
            OrderSpec("V", "a", "b", parse_formula("LE(a, b)", orv)),
            PartitionedFormula(parse_formula("G(x, y)", orv),
                               ((("x", "V"),), (("y", "V"),))),
        ),
        scale_of(or_sig, 3, theory=po),
    ))

    lab = vocabulary(["V"], {"P": ["V"]})
    lab_sig = coupled_signature(lab, ["V"])
    entries.append(CatalogEntry(
        "approx-discrete",
        "Two exhaustive point labels under the discrete metric at "
        "threshold one: within-eps agreement degenerates to equality of "
        "the labeling, matching the corresponding reduct spec.",
        empty_theory(lab),
        approx_mer(
            lab_sig,
            [("x", "V")],
            [parse_formula("P(x)", lab), parse_formula("!P(x)", lab)],
            ["yes", "no"],
            metric_of(["yes", "no"], [["0", "1"], ["1", "0"]]),
            Fraction(1),
        ),
        scale_of(lab_sig, 3),
    ))

    return {e.ident: e for e in entries}


def catalog_ids() -> list[str]:
    if not _ENTRIES:
        _ENTRIES.update(_build_entries())
    return list(_ENTRIES)


def catalog_get(ident: str) -> CatalogEntry:
    if not _ENTRIES:
        _ENTRIES.update(_build_entries())
    entry = _ENTRIES.get(ident)
    if entry is None:
        known = ", ".join(sorted(_ENTRIES))
        raise MerlabError(f"unknown catalog entry {ident!r} (known: {known})")
    return entry


def validate_catalog(
    budget: Budget | None = None, threads: int = 1
) -> dict[str, ErVerdict]:
    """Equivalence-axiom verdict of every entry at its reference scale."""
    out: dict[str, ErVerdict] = {}
    for ident in catalog_ids():
        e = catalog_get(ident)
        out[ident] = check_equivalence_relation(
            e.spec, e.theory, e.reference_scale, budget, threads
        )
    return out


# --------------------------------------------------------------------------
# bipartite extension graphs


def _bipartite_shape(vocab: Vocabulary) -> tuple[str, str, str]:
    """(row sort, column sort, relation) of a two-sort one-relation
    bipartite vocabulary."""
    if len(vocab.relations) != 1:
        raise MerlabError("bipartite structure needs exactly one relation")
    rel = vocab.relations[0]
    if len(rel.profile) != 2 or rel.profile[0] == rel.profile[1]:
        raise MerlabError("bipartite relation must join two distinct sorts")
    return rel.profile[0], rel.profile[1], rel.name


@dataclass(frozen=True)
class ExtensionAxiom:
    """One level-k demand: a witness adjacent to every `positive`
    parameter and to no `negative` one.  `side` names the parameter
    sort; the witness lives on the other sort."""

    side: str
    positive: tuple[int, ...]
    negative: tuple[int, ...]


def _axiom_space(p: int, q: int, k: int) -> list[tuple[str, tuple[int, ...], tuple[int, ...]]]:
    out = []
    for side, n in (("rows", p), ("cols", q)):
        for size in range(k + 1):
            for union in itertools.combinations(range(n), size):
                for m in range(size + 1):
                    for pos in itertools.combinations(union, m):
                        neg = tuple(u for u in union if u not in pos)
                        out.append((side, pos, neg))
    return out


def check_extension_axioms(G: FiniteStructure, k: int) -> ExtensionAxiom | None:
    """First violated level-k extension axiom, scanning parameter sets in
    canonical order; None when all hold.  Direct definition unrolling,
    independent of the generator's internal search."""
    sp, sq, rel = _bipartite_shape(G.vocab)
    p, q = G.size(sp), G.size(sq)
    ext = G.extent(rel)
    for side, pos, neg in _axiom_space(p, q, k):
        if side == "rows":
            ok = any(
                all((a, w) in ext for a in pos)
                and all((a, w) not in ext for a in neg)
                for w in range(q)
            )
            if not ok:
                return ExtensionAxiom(sp, pos, neg)
        else:
            ok = any(
                all((w, a) in ext for a in pos)
                and all((w, a) not in ext for a in neg)
                for w in range(p)
            )
            if not ok:
                return ExtensionAxiom(sq, pos, neg)
    return None


def generate_extension_graph(
    sizes: Mapping[str, int] | tuple[int, int],
    k: int,
    seed: int,
    max_rounds: int = 4000,
) -> FiniteStructure:
    """Seeded search for a bipartite graph satisfying every extension
    axiom with parameter sets of size <= k, over the catalog's bipartite
    vocabulary.

    Starts from a uniformly random edge set and repeatedly repairs a
    randomly chosen violated axiom by overwriting a random witness
    candidate's adjacency on the parameters.  Identical arguments always
    return the identical graph (Mersenne Twister via random.Random).
    """
    if isinstance(sizes, tuple):
        p, q = sizes
    else:
        p, q = sizes.get("P", 0), sizes.get("Q", 0)
    if k < 0:
        raise MerlabError("extension level k must be >= 0")
    if 2 ** k > q:
        raise MerlabError(
            f"level-{k} extension over rows needs 2^{k} <= |Q|, got |Q|={q}"
        )
    if 2 ** k > p:
        raise MerlabError(
            f"level-{k} extension over columns needs 2^{k} <= |P|, got |P|={p}"
        )
    rng = random.Random(seed)
    edges = {
        (i, j) for i in range(p) for j in range(q) if rng.getrandbits(1)
    }
    axioms = _axiom_space(p, q, k)

    def violations() -> list[tuple[str, tuple[int, ...], tuple[int, ...]]]:
        bad = []
        for side, pos, neg in axioms:
            if side == "rows":
                ok = any(
                    all((a, w) in edges for a in pos)
                    and all((a, w) not in edges for a in neg)
                    for w in range(q)
                )
            else:
                ok = any(
                    all((w, a) in edges for a in pos)
                    and all((w, a) not in edges for a in neg)
                    for w in range(p)
                )
            if not ok:
                bad.append((side, pos, neg))
        return bad

    for _ in range(max_rounds):
        bad = violations()
        if not bad:
            graph = structure(
                _bipartite_vocab(), {"P": p, "Q": q}, {"G": sorted(edges)}
            )
            return graph
        side, pos, neg = bad[rng.randrange(len(bad))]
        if side == "rows":
            w = rng.randrange(q)
            for a in pos:
                edges.add((a, w))
            for a in neg:
                edges.discard((a, w))
        else:
            w = rng.randrange(p)
            for a in pos:
                edges.add((w, a))
            for a in neg:
                edges.discard((w, a))
    raise MerlabError(
        f"extension graph search exhausted after {max_rounds} rounds "
        f"(P={p}, Q={q}, k={k}, seed={seed})"
    )


# --------------------------------------------------------------------------
# adjacency-row swaps


def adjacency_family(G: FiniteStructure) -> PartitionedFormula:
    """The family collapsing each row vertex to its set of neighbours."""
    sp, sq, rel = _bipartite_shape(G.vocab)
    return PartitionedFormula(
        Atom(rel, ("x", "y"), False), ((("x", sp),), (("y", sq),))
    )


def adjacency_nset(G: FiniteStructure, budget: Budget | None = None) -> NSetValue:
    return nset_value(G, adjacency_family(G), budget)


def swap_adjacency(
    G: FiniteStructure, pairs: Sequence[tuple[int, int]]
) -> FiniteStructure:
    """Exchange the neighbour rows of each (c, c') pair of row vertices.

    The set of rows is preserved exactly; an element appearing in two
    pairs is rejected."""
    sp, sq, rel = _bipartite_shape(G.vocab)
    p = G.size(sp)
    flat = [c for pair in pairs for c in pair]
    if len(set(flat)) != len(flat):
        raise MerlabError("overlapping swap pairs")
    for c in flat:
        if not (0 <= c < p):
            raise MerlabError(f"swap element {c} outside the row sort")
    perm = list(range(p))
    for c, d in pairs:
        perm[c], perm[d] = d, c
    ext = frozenset((perm[x], y) for x, y in G.extent(rel))
    return G.with_extent(rel, ext)


def _dnf(f: Formula) -> list[list[tuple[bool, Formula]]]:
    """Disjunctive normal form of a quantifier-free formula in NNF;
    a disjunct is a list of signed atoms."""
    if isinstance(f, Top):
        return [[]]
    if isinstance(f, Bottom):
        return []
    if isinstance(f, Or):
        return [d for p in f.parts for d in _dnf(p)]
    if isinstance(f, And):
        out: list[list[tuple[bool, Formula]]] = [[]]
        for p in f.parts:
            out = [a + b for a in out for b in _dnf(p)]
        return out
    if isinstance(f, Not):
        return [[(False, f.body)]]
    if isinstance(f, (Atom, Eq)):
        return [[(True, f)]]
    raise MerlabError(f"quantifier-free formula required, found {type(f).__name__}")


@dataclass(frozen=True)
class SwapWitness:
    """A swapped graph falsifying the selected disjunct's relational
    literals on the same tuple, with the row set untouched."""

    graph: FiniteStructure
    pairs: tuple[tuple[int, int], ...]
    flipped: tuple[tuple[str, tuple[int, ...]], ...]


def find_swap_witness(
    G: FiniteStructure,
    phi: Formula,
    assignment: Mapping[str, int],
) -> SwapWitness | None:
    """A row swap killing the relational part of phi on a tuple.

    Takes the first disjunct of phi's disjunctive normal form that the
    assignment satisfies and contains a relational literal, then looks
    for partner rows (lexicographically least, by backtracking) whose
    exchange makes every relational literal of that disjunct false while
    the set of rows, hence the one-level family value, stays equal.
    Returns None when no satisfied relational disjunct or no partner
    assignment exists."""
    sp, sq, rel = _bipartite_shape(G.vocab)
    fs = infer_free_sorts(G.vocab, phi)
    missing = [v for v in fs if v not in assignment]
    if missing:
        raise MerlabError(f"assignment misses variables {missing}")
    for v, s in fs.items():
        if not (0 <= assignment[v] < G.size(s)):
            raise MerlabError(f"assignment for {v!r} outside sort {s!r}")
    ext = G.extent(rel)

    def atom_args(a: Atom) -> tuple[int, int]:
        return assignment[a.args[0]], assignment[a.args[1]]

    def literal_true(sign: bool, a: Formula) -> bool:
        if isinstance(a, Atom):
            return (atom_args(a) in ext) == sign
        if isinstance(a, Eq):
            return (assignment[a.left] == assignment[a.right]) == sign
        raise MerlabError("unexpected literal shape")

    chosen: list[tuple[bool, Formula]] | None = None
    for disjunct in _dnf(_nnf(phi, False)):
        rel_lits = [(s, a) for s, a in disjunct if isinstance(a, Atom)]
        if not rel_lits:
            continue
        if all(literal_true(s, a) for s, a in disjunct):
            chosen = rel_lits
            break
    if chosen is None:
        return None

    want_in: dict[int, set[int]] = {}
    want_out: dict[int, set[int]] = {}
    for sign, a in chosen:
        c, d = atom_args(a)
        # to falsify: a positive literal must lose its edge, a negative
        # one must gain it
        want_in.setdefault(c, set())
        want_out.setdefault(c, set())
        (want_out[c] if sign else want_in[c]).add(d)
    touched = sorted(want_in)
    rows = {c: frozenset(y for x, y in ext if x == c) for c in range(G.size(sp))}
    forbidden = {assignment[v] for v, s in fs.items() if s == sp} | set(touched)

    def candidates(c: int) -> list[int]:
        return [
            c2 for c2 in range(G.size(sp))
            if c2 not in forbidden
            and want_in[c] <= rows[c2]
            and not (want_out[c] & rows[c2])
        ]

    def search(i: int, used: set[int]) -> list[int] | None:
        if i == len(touched):
            return []
        for c2 in candidates(touched[i]):
            if c2 in used:
                continue
            rest = search(i + 1, used | {c2})
            if rest is not None:
                return [c2] + rest
        return None

    partners = search(0, set())
    if partners is None:
        return None
    pairs = tuple(zip(touched, partners))
    swapped = swap_adjacency(G, pairs)
    flipped = tuple(sorted({(rel, atom_args(a)) for _, a in chosen}))
    new_ext = swapped.extent(rel)
    for _, t in flipped:
        assert (t in ext) != (t in new_ext), "swap failed to flip a literal"
    return SwapWitness(swapped, pairs, flipped)


# --------------------------------------------------------------------------
# the graph <-> powerset interpretation


def _graph_shape(vocab: Vocabulary) -> tuple[str, str]:
    if len(vocab.sorts) == 1 and len(vocab.relations) == 1:
        rel = vocab.relations[0]
        if rel.profile == (vocab.sorts[0], vocab.sorts[0]):
            return vocab.sorts[0], rel.name
    raise MerlabError("graph structure required: one sort, one binary relation")


def expand_interpretation(M: FiniteStructure, spec: MerSpec) -> FiniteStructure:
    """Expand a graph (A, R) with a second sort holding every nonempty
    subset of A^2, a membership relation, and the derived predicate
    D = { b : (A, ext(b)) is spec-equivalent to (A, R) }.

    Capped at |A| <= 3 since the subset sort has 2^(|A|^2) - 1 elements.
    """
    sa, r = _graph_shape(M.vocab)
    if spec.sig.vocab != M.vocab:
        raise MerlabError("spec vocabulary differs from the graph's")
    n = M.size(sa)
    if n > 3:
        raise MerlabError(f"interpretation capped at |A| <= 3, got {n}")
    pairs = sorted(itertools.product(range(n), repeat=2))
    nb = 2 ** len(pairs) - 1
    sb = _fresh_name({sa}, "B")
    eps = _fresh_name({r}, "Eps")
    dd = _fresh_name({r, eps}, "D")
    out_vocab = vocabulary([sa, sb], {r: [sa, sa], eps: [sa, sa, sb], dd: [sb]})

    def subset(b: int) -> frozenset[tuple[int, int]]:
        mask = b + 1
        return frozenset(t for i, t in enumerate(pairs) if mask >> i & 1)

    eps_ext = [
        (a1, a2, b) for b in range(nb) for (a1, a2) in sorted(subset(b))
    ]
    d_ext = []
    for b in range(nb):
        cand = structure(M.vocab, {sa: n}, {r: sorted(subset(b))})
        if equivalent(spec, cand, M):
            d_ext.append((b,))
    return structure(
        out_vocab,
        {sa: n, sb: nb},
        {r: sorted(M.extent(r)), eps: eps_ext, dd: d_ext},
    )


def _interpretation_shape(vocab: Vocabulary) -> tuple[str, str, str, str, str]:
    """(A sort, B sort, edge rel, membership rel, derived rel)."""
    if len(vocab.sorts) == 2 and len(vocab.relations) == 3:
        sa, sb = vocab.sorts
        edge = membership = derived = None
        for rel in vocab.relations:
            if rel.profile == (sa, sa):
                edge = rel.name
            elif rel.profile == (sa, sa, sb):
                membership = rel.name
            elif rel.profile == (sb,):
                derived = rel.name
        if edge and membership and derived:
            return sa, sb, edge, membership, derived
    raise MerlabError(
        "interpretation shape required: sorts A, B with relations "
        "R(A,A), Eps(A,A,B), D(B)"
    )


def _member_sets(
    N: FiniteStructure,
) -> tuple[list[frozenset[tuple[int, int]]], str, str]:
    sa, sb, edge, membership, _ = _interpretation_shape(N.vocab)
    members: list[set[tuple[int, int]]] = [set() for _ in range(N.size(sb))]
    for a1, a2, b in N.extent(membership):
        members[b].add((a1, a2))
    return [frozenset(m) for m in members], sa, edge


def forget_interpretation(N: FiniteStructure) -> FiniteStructure:
    """Drop the subset sort, returning the plain graph (A, R); rejects
    structures whose subset sort is not extensional or misses a
    singleton or a binary union."""
    sa, sb, edge, membership, derived = _interpretation_shape(N.vocab)
    members, _, _ = _member_sets(N)
    index: dict[frozenset[tuple[int, int]], int] = {}
    for b, m in enumerate(members):
        if m in index:
            raise MerlabError(
                f"extensionality fails: elements {index[m]} and {b} of "
                f"{sb!r} have the same members"
            )
        index[m] = b
    n = N.size(sa)
    for t in itertools.product(range(n), repeat=2):
        if frozenset([t]) not in index:
            raise MerlabError(f"missing singleton {{{t}}} in sort {sb!r}")
    for m1 in index:
        for m2 in index:
            if m1 | m2 not in index:
                raise MerlabError(
                    f"missing binary union of {sorted(m1)} and {sorted(m2)}"
                )
    out_vocab = vocabulary([sa], {edge: [sa, sa]})
    return structure(out_vocab, {sa: n}, {edge: sorted(N.extent(edge))})


def lift_interpretation_isomorphism(
    N1: FiniteStructure,
    N2: FiniteStructure,
    perm: Sequence[int],
) -> tuple[tuple[int, ...], ...]:
    """Extend a graph isomorphism (an A-permutation) to the subset sort
    by matching member sets; returns the per-sort bijection family in
    N1's sort order.  Fails when some image set is missing on the
    other side."""
    if N1.vocab != N2.vocab:
        raise MerlabError("both structures must share the vocabulary")
    sa, sb, _, _, _ = _interpretation_shape(N1.vocab)
    members1, _, _ = _member_sets(N1)
    members2, _, _ = _member_sets(N2)
    index2 = {m: b for b, m in enumerate(members2)}
    if len(index2) != len(members2):
        raise MerlabError("target subset sort is not extensional")
    bmap = []
    for m in members1:
        image = frozenset((perm[a1], perm[a2]) for a1, a2 in m)
        if image not in index2:
            raise MerlabError(f"no element with members {sorted(image)}")
        bmap.append(index2[image])
    fam = [(), ()]
    fam[N1.vocab.sort_index(sa)] = tuple(perm)
    fam[N1.vocab.sort_index(sb)] = tuple(bmap)
    return tuple(fam)
