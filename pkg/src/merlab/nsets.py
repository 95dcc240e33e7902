"""Iterated definable set families and their expansions.

A partitioned formula splits its free variables into blocks, written
outermost first: the value of `phi(B1 : B2 : ... : Bk)` on a structure is
built by iterating B1 over the model, then B2, and so on; the innermost
block contributes plain tuples.  A two-block family therefore yields the
set of "rows" { {b : phi(a, b)} : a }, with equal rows collapsing.

Shelahization reifies a two-block family as a new sort: one element per
distinct row, ordered by least member set, with a containment relation
pairing each new element with the tuples of its row.  Towers chain this
construction; a two-level tower can be flattened back to the base
language by substituting the family for the reified sort.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

from .core import (
    And,
    Atom,
    Bottom,
    Budget,
    Eq,
    Exists,
    FiniteStructure,
    Forall,
    Formula,
    Iff,
    Implies,
    LinkAtom,
    MerlabError,
    Not,
    Or,
    RelationSymbol,
    SortError,
    Top,
    Vocabulary,
    compile_formula,
    free_variables,
    validate_formula,
    _budget,
)
from .pair import CoupledSignature


# --------------------------------------------------------------------------
# values


@dataclass(frozen=True, order=True)
class NSetValue:
    """Canonical hereditary set value.

    depth 1 wraps a set of int tuples; depth k+1 wraps a set of depth-k
    values.  The payload is kept as a sorted duplicate-free tuple, so
    equality and ordering are structural and deterministic.
    """

    depth: int
    value: tuple

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise MerlabError("n-set values have depth >= 1")

    @staticmethod
    def of_tuples(tuples) -> "NSetValue":
        return NSetValue(1, tuple(sorted(set(tuples))))

    @staticmethod
    def of_values(values) -> "NSetValue":
        vals = list(values)
        depths = {v.depth for v in vals}
        if len(depths) > 1:
            raise MerlabError(f"mixed depths {sorted(depths)} in one n-set")
        depth = (depths.pop() if depths else 1) + 1
        return NSetValue(depth, tuple(sorted({v.value for v in vals})))

    def members(self):
        """Depth-1: the tuples.  Deeper: the member values."""
        if self.depth == 1:
            return self.value
        return tuple(NSetValue(self.depth - 1, v) for v in self.value)

    def __len__(self) -> int:
        return len(self.value)


def nset_equal(a: NSetValue, b: NSetValue) -> bool:
    if a.depth != b.depth:
        raise MerlabError(f"comparing n-sets of depths {a.depth} and {b.depth}")
    return a.value == b.value


# --------------------------------------------------------------------------
# partitioned formulas


@dataclass(frozen=True)
class PartitionedFormula:
    """A formula with its free variables split into nonempty blocks.

    `blocks` lists (variable, sort) pairs, outermost block first; the
    innermost (last) block forms the base tuples of the value.
    """

    formula: Formula
    blocks: tuple[tuple[tuple[str, str], ...], ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        if not self.blocks:
            raise MerlabError("a partitioned formula needs at least one block")
        for block in self.blocks:
            if not block:
                raise MerlabError("blocks must be nonempty")
            for v, _ in block:
                if v in seen:
                    raise MerlabError(f"variable {v!r} appears in two blocks")
                seen.add(v)
        # unused block variables are fine: the value just ignores them
        missing = free_variables(self.formula) - seen
        if missing:
            raise MerlabError(
                f"blocks must cover the free variables (missing {sorted(missing)})"
            )

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def inner_block(self) -> tuple[tuple[str, str], ...]:
        return self.blocks[-1]

    def var_sorts(self) -> dict[str, str]:
        return {v: s for block in self.blocks for v, s in block}

    def validate(self, vocab: Vocabulary) -> None:
        validate_formula(vocab, self.formula, self.var_sorts())


def nset_value(
    struct: FiniteStructure,
    pf: PartitionedFormula,
    budget: Budget | None = None,
) -> NSetValue:
    """The canonical value of a partitioned formula on a structure."""
    pf.validate(struct.vocab)
    bud = _budget(budget)
    cost = 1
    for block in pf.blocks:
        for _, s in block:
            cost *= max(struct.size(s), 1)
    bud.charge(cost, "n-set evaluation")
    fn = compile_formula(pf.formula)
    env: dict[str, int] = {}
    spaces = [
        (
            [v for v, _ in block],
            [struct.universe(s) for _, s in block],
        )
        for block in pf.blocks
    ]

    def rec(i: int) -> NSetValue:
        names, unis = spaces[i]
        if i == len(spaces) - 1:
            members = []
            for combo in itertools.product(*unis):
                for n, val in zip(names, combo):
                    env[n] = val
                if fn(struct, env):
                    members.append(combo)
            return NSetValue.of_tuples(members)
        children = []
        for combo in itertools.product(*unis):
            for n, val in zip(names, combo):
                env[n] = val
            children.append(rec(i + 1))
        return NSetValue.of_values(children)

    return rec(0)


# --------------------------------------------------------------------------
# Shelahization


def _fresh_name(taken, stem: str) -> str:
    if stem not in taken:
        return stem
    i = 2
    while f"{stem}{i}" in taken:
        i += 1
    return f"{stem}{i}"


def expansion_vocabulary(
    vocab: Vocabulary, pf: PartitionedFormula
) -> tuple[Vocabulary, str, str]:
    """The vocabulary of the reified two-block family: (vocab', sort, relation).

    Deterministic given the inputs, so both sides of a comparison agree
    on the names.
    """
    if pf.depth != 2:
        raise MerlabError("only two-block families are reified")
    sf = _fresh_name(set(vocab.sorts), "Fam")
    cf = _fresh_name({r.name for r in vocab.relations}, "In")
    member_sorts = tuple(s for _, s in pf.inner_block)
    new_vocab = Vocabulary(
        vocab.sorts + (sf,),
        vocab.relations + (RelationSymbol(cf, (sf,) + member_sorts),),
    )
    return new_vocab, sf, cf


@dataclass(frozen=True)
class ShelahizedStructure:
    """A structure expanded by one reified family.

    `expanded` keeps every base sort and relation, adds the row sort
    (universe = distinct rows, ranked by least member set) and the
    containment relation pairing rank r with the tuples of row r.
    """

    base: FiniteStructure
    family: PartitionedFormula
    expanded: FiniteStructure
    sf_sort: str
    cf_rel: str
    rows: tuple[tuple[tuple[int, ...], ...], ...]
    param_rows: tuple[tuple[tuple[int, ...], int], ...]

    def row_count(self) -> int:
        return len(self.rows)


def shelahize(
    struct: FiniteStructure,
    pf: PartitionedFormula,
    budget: Budget | None = None,
) -> ShelahizedStructure:
    """Reify the distinct rows of a two-block family as a new sort."""
    if pf.depth != 2:
        raise MerlabError("only two-block families are reified")
    pf.validate(struct.vocab)
    bud = _budget(budget)
    param_names = [v for v, _ in pf.blocks[0]]
    param_spaces = [struct.universe(s) for _, s in pf.blocks[0]]
    member_names = [v for v, _ in pf.inner_block]
    member_spaces = [struct.universe(s) for _, s in pf.inner_block]
    cost = 1
    for sp in param_spaces + member_spaces:
        cost *= max(len(sp), 1)
    bud.charge(cost, "reifying a family")

    fn = compile_formula(pf.formula)
    env: dict[str, int] = {}
    row_by_param: dict[tuple[int, ...], tuple[tuple[int, ...], ...]] = {}
    for params in itertools.product(*param_spaces):
        for n, v in zip(param_names, params):
            env[n] = v
        members = []
        for combo in itertools.product(*member_spaces):
            for n, v in zip(member_names, combo):
                env[n] = v
            if fn(struct, env):
                members.append(combo)
        row_by_param[params] = tuple(sorted(members))

    rows = tuple(sorted(set(row_by_param.values())))
    rank = {row: i for i, row in enumerate(rows)}
    param_rows = tuple(sorted((p, rank[r]) for p, r in row_by_param.items()))

    new_vocab, sf, cf = expansion_vocabulary(struct.vocab, pf)
    cf_extent = frozenset(
        (i,) + member for i, row in enumerate(rows) for member in row
    )
    expanded = FiniteStructure(
        new_vocab,
        struct.sizes + (len(rows),),
        struct.extents + (cf_extent,),
    )
    return ShelahizedStructure(struct, pf, expanded, sf, cf, rows, param_rows)


# --------------------------------------------------------------------------
# towers


@dataclass(frozen=True)
class FamilyTower:
    """A chain of families, each over the expansion produced by the last.

    Level 1 is a two-block family over the signature's vocabulary (last
    level may have any depth >= 1 since it is never reified).  Each
    reified row sort joins the coupled sorts for the following level.
    """

    sig: CoupledSignature
    levels: tuple[PartitionedFormula, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise MerlabError("a tower needs at least one level")
        for sig, level, last in self.iter_signatures():
            level.validate(sig.vocab)
            for v, s in level.inner_block:
                if not sig.is_coupled(s):
                    raise MerlabError(
                        f"inner block variable {v!r} has non-coupled sort {s!r}"
                    )
            if not last and level.depth != 2:
                raise MerlabError("only the last level may have depth other than 2")

    def iter_signatures(self) -> Iterator[tuple[CoupledSignature, PartitionedFormula, bool]]:
        """Yield (signature at that level, family, is-last) down the chain."""
        sig = self.sig
        for i, level in enumerate(self.levels):
            last = i == len(self.levels) - 1
            yield sig, level, last
            if not last:
                new_vocab, sf, _ = expansion_vocabulary(sig.vocab, level)
                sig = CoupledSignature(new_vocab, sig.coupled | {sf})

    def level_signature(self, index: int) -> CoupledSignature:
        for i, (sig, _, _) in enumerate(self.iter_signatures()):
            if i == index:
                return sig
        raise MerlabError(f"no level {index}")


def tower_values(
    struct: FiniteStructure,
    tower: FamilyTower,
    budget: Budget | None = None,
) -> tuple[NSetValue, ...]:
    """Canonical per-level values along the expansion chain.

    Each level is evaluated on the structure expanded by all earlier
    levels; because row sorts are ranked by least member set, two
    structures with equal values at every earlier level have literally
    identical row sorts, which makes the later values comparable.
    """
    current = struct
    out = []
    for _, level, last in tower.iter_signatures():
        out.append(nset_value(current, level, budget))
        if not last:
            current = shelahize(current, level, budget).expanded
    return tuple(out)


def tower_equivalent(
    M: FiniteStructure,
    N: FiniteStructure,
    tower: FamilyTower,
    budget: Budget | None = None,
) -> bool:
    """Equal values at every level, aligning row sorts by their contents.

    Works level by level: if the current values differ the answer is
    False; otherwise both expansions carry the same ranked rows and the
    comparison continues on them.
    """
    cm, cn = M, N
    for _, level, last in tower.iter_signatures():
        if nset_value(cm, level, budget) != nset_value(cn, level, budget):
            return False
        if not last:
            cm = shelahize(cm, level, budget).expanded
            cn = shelahize(cn, level, budget).expanded
    return True


# --------------------------------------------------------------------------
# flattening a two-level tower


def _substitute_vars(f: Formula, mapping: Mapping[str, str], fresh_tag: str) -> Formula:
    """Rename free variables by `mapping`, renaming binders to avoid capture."""

    def walk(g: Formula, m: dict[str, str]) -> Formula:
        if isinstance(g, (Top, Bottom)):
            return g
        if isinstance(g, Atom):
            return Atom(g.rel, tuple(m.get(a, a) for a in g.args), g.primed)
        if isinstance(g, Eq):
            return Eq(m.get(g.left, g.left), m.get(g.right, g.right))
        if isinstance(g, LinkAtom):
            return LinkAtom(m.get(g.left, g.left), m.get(g.right, g.right))
        if isinstance(g, Not):
            return Not(walk(g.body, m))
        if isinstance(g, And):
            return And(tuple(walk(p, m) for p in g.parts))
        if isinstance(g, Or):
            return Or(tuple(walk(p, m) for p in g.parts))
        if isinstance(g, Implies):
            return Implies(walk(g.lhs, m), walk(g.rhs, m))
        if isinstance(g, Iff):
            return Iff(walk(g.lhs, m), walk(g.rhs, m))
        if isinstance(g, (Forall, Exists)):
            fresh = g.var + fresh_tag
            inner = dict(m)
            inner[g.var] = fresh
            return type(g)(fresh, g.sort, walk(g.body, inner))
        raise TypeError(f"unknown formula node {g!r}")

    return walk(f, dict(mapping))


def flatten_2ydlept(
    level1: PartitionedFormula,
    level2: PartitionedFormula,
    vocab: Vocabulary,
) -> PartitionedFormula:
    """Substitute a reified family out of a second-level formula.

    `level2` lives over the expansion of `vocab` by `level1`.  Every
    row-sort variable must sit in a non-innermost block and reach the
    containment relation only directly; such variables are replaced by a
    fresh copy of the family's parameter block, containment atoms by the
    family formula and row equalities by extensional equivalence.  The
    result is a base-language partitioned formula whose value equality,
    joined with level1's, coincides with the two-level tower comparison:
    reindexing a family by the parameter assignments that realize its
    rows does not change it as a set.

    Shapes that quantify over the row sort, or collect row variables in
    the innermost block, are rejected.
    """
    exp_vocab, sf, cf = expansion_vocabulary(vocab, level1)
    level2.validate(exp_vocab)
    for v, s in level2.inner_block:
        if s == sf:
            raise MerlabError(
                f"row variable {v!r} in the innermost block cannot be flattened; "
                "the reindexed value would depend on row multiplicity"
            )
    for g in _all_nodes(level2.formula):
        if isinstance(g, (Forall, Exists)) and g.sort == sf:
            raise MerlabError(
                "flattening does not support quantifiers over the row sort"
            )

    param_block = level1.blocks[0]
    member_names = [v for v, _ in level1.inner_block]
    row_vars = [
        (v, s) for block in level2.blocks for v, s in block if s == sf
    ]
    replacements: dict[str, tuple[tuple[str, str], ...]] = {}
    for i, (v, _) in enumerate(row_vars):
        replacements[v] = tuple(
            (f"{v}_{pv}", ps) for pv, ps in param_block
        )

    def family_instance(row_var: str, member_args: Sequence[str]) -> Formula:
        mapping = {pv: npv for (pv, _), (npv, _) in zip(param_block, replacements[row_var])}
        mapping.update({mv: arg for mv, arg in zip(member_names, member_args)})
        return _substitute_vars(level1.formula, mapping, f"_{row_var}")

    def row_equality(a: str, b: str) -> Formula:
        body: Formula = Iff(
            family_instance(a, member_names), family_instance(b, member_names)
        )
        for mv, ms in reversed(level1.inner_block):
            body = Forall(mv, ms, body)
        return body

    def walk(g: Formula) -> Formula:
        if isinstance(g, (Top, Bottom)):
            return g
        if isinstance(g, Atom):
            if g.rel == cf:
                row_var = g.args[0]
                if row_var not in replacements:
                    raise MerlabError(
                        f"containment atom reaches row variable {row_var!r} "
                        "outside the family parameterization"
                    )
                return family_instance(row_var, g.args[1:])
            if any(a in replacements for a in g.args):
                raise MerlabError(
                    "row variables may only appear in containment atoms "
                    "and row equalities"
                )
            return g
        if isinstance(g, Eq):
            li, ri = g.left in replacements, g.right in replacements
            if li and ri:
                return row_equality(g.left, g.right)
            if li or ri:
                raise MerlabError("equality between a row variable and a base one")
            return g
        if isinstance(g, Not):
            return Not(walk(g.body))
        if isinstance(g, And):
            return And(tuple(walk(p) for p in g.parts))
        if isinstance(g, Or):
            return Or(tuple(walk(p) for p in g.parts))
        if isinstance(g, Implies):
            return Implies(walk(g.lhs), walk(g.rhs))
        if isinstance(g, Iff):
            return Iff(walk(g.lhs), walk(g.rhs))
        if isinstance(g, (Forall, Exists)):
            return type(g)(g.var, g.sort, walk(g.body))
        if isinstance(g, LinkAtom):
            raise MerlabError("identification atoms cannot appear here")
        raise TypeError(f"unknown formula node {g!r}")

    new_blocks = []
    for block in level2.blocks:
        nb: list[tuple[str, str]] = []
        for v, s in block:
            if s == sf:
                nb.extend(replacements[v])
            else:
                nb.append((v, s))
        new_blocks.append(tuple(nb))
    out = PartitionedFormula(walk(level2.formula), tuple(new_blocks))
    out.validate(vocab)
    return out


def _all_nodes(f: Formula) -> Iterator[Formula]:
    from .core import subformulas

    yield from subformulas(f)


# --------------------------------------------------------------------------
# domination orders


@dataclass(frozen=True)
class OrderSpec:
    """A base order formula on one sort, lifted through set depth.

    The formula has exactly the two free variables given (left, right),
    both of the named sort.  On each checked structure the extent must be
    a partial order before any lifting happens.
    """

    sort: str
    left_var: str
    right_var: str
    formula: Formula

    def validate(self, vocab: Vocabulary) -> None:
        validate_formula(
            vocab, self.formula, {self.left_var: self.sort, self.right_var: self.sort}
        )
        if free_variables(self.formula) - {self.left_var, self.right_var}:
            raise MerlabError("order formula may only use its two variables")


def base_order_relation(
    struct: FiniteStructure, order: OrderSpec
) -> Callable[[tuple[int, ...], tuple[int, ...]], bool]:
    """The base order as a predicate on 1-tuples, with partial-order checks."""
    order.validate(struct.vocab)
    fn = compile_formula(order.formula)
    n = struct.size(order.sort)
    table = [[False] * n for _ in range(n)]
    env: dict[str, int] = {}
    for a in range(n):
        for b in range(n):
            env[order.left_var] = a
            env[order.right_var] = b
            table[a][b] = fn(struct, env)
    for a in range(n):
        if not table[a][a]:
            raise MerlabError(f"base order is not reflexive at {a}")
    for a in range(n):
        for b in range(n):
            if table[a][b] and table[b][a] and a != b:
                raise MerlabError(f"base order is not antisymmetric at ({a},{b})")
            if table[a][b]:
                for c in range(n):
                    if table[b][c] and not table[a][c]:
                        raise MerlabError(
                            f"base order is not transitive at ({a},{b},{c})"
                        )

    def leq(u: tuple[int, ...], v: tuple[int, ...]) -> bool:
        return table[u[0]][v[0]]

    return leq


def nset_leq(
    a: NSetValue,
    b: NSetValue,
    base_leq: Callable[[tuple[int, ...], tuple[int, ...]], bool],
) -> bool:
    """Domination lift: every member of `a` lies below some member of `b`.

    At depth 1 members are compared by the base order; deeper values
    recurse.  The lift of a reflexive transitive base is again reflexive
    and transitive.
    """
    if a.depth != b.depth:
        raise MerlabError(f"comparing depths {a.depth} and {b.depth}")
    if a.depth == 1:
        return all(
            any(base_leq(u, v) for v in b.members()) for u in a.members()
        )
    return all(
        any(nset_leq(u, v, base_leq) for v in b.members()) for u in a.members()
    )
