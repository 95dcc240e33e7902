"""Finite multi-sorted relational structures and first-order evaluation.

Everything downstream builds on four pieces defined here: vocabularies
(ordered sorts plus relation symbols), finite structures (universes are
initial segments 0..k-1 per sort), a formula AST with sorted quantifiers,
and a Tarskian evaluator.  Enumeration and isomorphism search are brute
force by design; the Budget type keeps them from silently eating the
machine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

DEFAULT_BUDGET_LIMIT = 10**8


class MerlabError(Exception):
    """Base class for errors raised by this package."""


class SortError(MerlabError):
    """A formula or structure is not well-sorted for its vocabulary."""


class BudgetExceeded(MerlabError):
    """A command asked for more elementary evaluations than its ceiling."""


@dataclass
class Budget:
    """Running count of elementary evaluations with a hard cap.

    Charges are coarse (one unit per structure, bijection or pair
    evaluation) and are made before the corresponding loop runs whenever
    the cost is predictable, so oversized requests fail fast instead of
    truncating.
    """

    limit: int = DEFAULT_BUDGET_LIMIT
    spent: int = 0

    def charge(self, amount: int, what: str = "") -> None:
        self.spent += amount
        if self.spent > self.limit:
            label = f" while {what}" if what else ""
            raise BudgetExceeded(
                f"resource ceiling exceeded{label}: "
                f"{self.spent} > {self.limit} elementary evaluations"
            )


def _budget(budget: Budget | None) -> Budget:
    return budget if budget is not None else Budget()


# --------------------------------------------------------------------------
# vocabularies and structures


@dataclass(frozen=True)
class RelationSymbol:
    name: str
    profile: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.profile)


@dataclass(frozen=True)
class Vocabulary:
    """Ordered sorts and relation symbols.  Purely relational."""

    sorts: tuple[str, ...]
    relations: tuple[RelationSymbol, ...]

    def __post_init__(self) -> None:
        if len(set(self.sorts)) != len(self.sorts):
            raise SortError(f"duplicate sort names in {self.sorts}")
        seen: set[str] = set()
        for rel in self.relations:
            if rel.name in seen:
                raise SortError(f"duplicate relation symbol {rel.name!r}")
            seen.add(rel.name)
            if rel.arity == 0:
                raise SortError(f"relation {rel.name!r} must have arity >= 1")
            for s in rel.profile:
                if s not in self.sorts:
                    raise SortError(
                        f"relation {rel.name!r} uses undeclared sort {s!r}"
                    )

    def sort_index(self, sort: str) -> int:
        try:
            return self.sorts.index(sort)
        except ValueError:
            raise SortError(f"undeclared sort {sort!r}") from None

    def relation(self, name: str) -> RelationSymbol:
        for rel in self.relations:
            if rel.name == name:
                return rel
        raise SortError(f"undeclared relation symbol {name!r}")

    def relation_index(self, name: str) -> int:
        for i, rel in enumerate(self.relations):
            if rel.name == name:
                return i
        raise SortError(f"undeclared relation symbol {name!r}")

    def has_relation(self, name: str) -> bool:
        return any(rel.name == name for rel in self.relations)


def vocabulary(sorts: Sequence[str], relations: Mapping[str, Sequence[str]]) -> Vocabulary:
    """Convenience constructor: vocabulary(["P","Q"], {"G": ["P","Q"]})."""
    rels = tuple(RelationSymbol(n, tuple(p)) for n, p in relations.items())
    return Vocabulary(tuple(sorts), rels)


@dataclass(frozen=True)
class FiniteStructure:
    """A finite structure; universe of sort i is range(sizes[i]).

    Extents are stored per relation, in declaration order, as frozensets
    of int tuples.  Structures are immutable and compared literally.
    """

    vocab: Vocabulary
    sizes: tuple[int, ...]
    extents: tuple[frozenset[tuple[int, ...]], ...]

    def __post_init__(self) -> None:
        if len(self.sizes) != len(self.vocab.sorts):
            raise SortError("one size per sort required")
        if any(n < 0 for n in self.sizes):
            raise SortError("sort sizes must be >= 0")
        if len(self.extents) != len(self.vocab.relations):
            raise SortError("one extent per relation symbol required")
        for rel, ext in zip(self.vocab.relations, self.extents):
            bounds = tuple(self.sizes[self.vocab.sort_index(s)] for s in rel.profile)
            for t in ext:
                if len(t) != rel.arity:
                    raise SortError(f"tuple {t} has wrong arity for {rel.name}")
                if any(not (0 <= v < b) for v, b in zip(t, bounds)):
                    raise SortError(f"tuple {t} out of range for {rel.name}")

    def size(self, sort: str) -> int:
        return self.sizes[self.vocab.sort_index(sort)]

    def universe(self, sort: str) -> range:
        return range(self.size(sort))

    def extent(self, relname: str) -> frozenset[tuple[int, ...]]:
        return self.extents[self.vocab.relation_index(relname)]

    def with_extent(self, relname: str, ext: frozenset[tuple[int, ...]]) -> "FiniteStructure":
        i = self.vocab.relation_index(relname)
        new = list(self.extents)
        new[i] = frozenset(ext)
        return FiniteStructure(self.vocab, self.sizes, tuple(new))


def structure(
    vocab: Vocabulary,
    sizes: Mapping[str, int],
    extents: Mapping[str, Sequence[Sequence[int]]] | None = None,
) -> FiniteStructure:
    """Convenience constructor from name-keyed sizes and extents."""
    extents = extents or {}
    for name in extents:
        vocab.relation(name)  # raises on unknown symbols
    size_vec = tuple(sizes.get(s, 0) for s in vocab.sorts)
    for s in sizes:
        vocab.sort_index(s)
    ext_vec = tuple(
        frozenset(tuple(t) for t in extents.get(rel.name, ()))
        for rel in vocab.relations
    )
    return FiniteStructure(vocab, size_vec, ext_vec)


# --------------------------------------------------------------------------
# formulas


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    rel: str
    args: tuple[str, ...]
    primed: bool = False


@dataclass(frozen=True)
class LinkAtom(Formula):
    """Identification atom of the decoupled two-copy language: @f(x, y)."""

    left: str
    right: str


@dataclass(frozen=True)
class Eq(Formula):
    left: str
    right: str


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    parts: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True)
class Iff(Formula):
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    sort: str
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    sort: str
    body: Formula


def conj(parts: Sequence[Formula]) -> Formula:
    parts = tuple(parts)
    if not parts:
        return Top()
    if len(parts) == 1:
        return parts[0]
    return And(parts)


def disj(parts: Sequence[Formula]) -> Formula:
    parts = tuple(parts)
    if not parts:
        return Bottom()
    if len(parts) == 1:
        return parts[0]
    return Or(parts)


def quantifier_rank(f: Formula) -> int:
    if isinstance(f, (Top, Bottom, Atom, Eq, LinkAtom)):
        return 0
    if isinstance(f, Not):
        return quantifier_rank(f.body)
    if isinstance(f, (And, Or)):
        return max((quantifier_rank(p) for p in f.parts), default=0)
    if isinstance(f, (Implies, Iff)):
        return max(quantifier_rank(f.lhs), quantifier_rank(f.rhs))
    if isinstance(f, (Forall, Exists)):
        return 1 + quantifier_rank(f.body)
    raise TypeError(f"unknown formula node {f!r}")


def subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    if isinstance(f, Not):
        yield from subformulas(f.body)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            yield from subformulas(p)
    elif isinstance(f, (Implies, Iff)):
        yield from subformulas(f.lhs)
        yield from subformulas(f.rhs)
    elif isinstance(f, (Forall, Exists)):
        yield from subformulas(f.body)


def free_variables(f: Formula) -> frozenset[str]:
    if isinstance(f, (Top, Bottom)):
        return frozenset()
    if isinstance(f, Atom):
        return frozenset(f.args)
    if isinstance(f, (Eq, LinkAtom)):
        return frozenset((f.left, f.right))
    if isinstance(f, Not):
        return free_variables(f.body)
    if isinstance(f, (And, Or)):
        out: frozenset[str] = frozenset()
        for p in f.parts:
            out |= free_variables(p)
        return out
    if isinstance(f, (Implies, Iff)):
        return free_variables(f.lhs) | free_variables(f.rhs)
    if isinstance(f, (Forall, Exists)):
        return free_variables(f.body) - {f.var}
    raise TypeError(f"unknown formula node {f!r}")


def validate_formula(
    vocab: Vocabulary,
    f: Formula,
    free_sorts: Mapping[str, str] | None = None,
) -> None:
    """Check well-sortedness of a plain (single-structure) formula.

    `free_sorts` assigns sorts to free variables.  Primed atoms and link
    atoms belong to the two-copy languages and are rejected here.
    """
    env = dict(free_sorts or {})

    def walk(g: Formula, env: dict[str, str]) -> None:
        if isinstance(g, (Top, Bottom)):
            return
        if isinstance(g, Atom):
            if g.primed:
                raise SortError(f"primed atom {g.rel}' outside a two-copy language")
            rel = vocab.relation(g.rel)
            if len(g.args) != rel.arity:
                raise SortError(
                    f"atom {g.rel} expects {rel.arity} arguments, got {len(g.args)}"
                )
            for v, s in zip(g.args, rel.profile):
                got = env.get(v)
                if got is None:
                    raise SortError(f"unbound variable {v!r} in atom {g.rel}")
                if got != s:
                    raise SortError(
                        f"variable {v!r} has sort {got}, {g.rel} needs {s}"
                    )
            return
        if isinstance(g, LinkAtom):
            raise SortError("link atom @f outside the two-copy language")
        if isinstance(g, Eq):
            for v in (g.left, g.right):
                if v not in env:
                    raise SortError(f"unbound variable {v!r} in equality")
            if env[g.left] != env[g.right]:
                raise SortError(
                    f"equality between sorts {env[g.left]} and {env[g.right]}"
                )
            return
        if isinstance(g, Not):
            walk(g.body, env)
            return
        if isinstance(g, (And, Or)):
            for p in g.parts:
                walk(p, env)
            return
        if isinstance(g, (Implies, Iff)):
            walk(g.lhs, env)
            walk(g.rhs, env)
            return
        if isinstance(g, (Forall, Exists)):
            vocab.sort_index(g.sort)
            saved = env.get(g.var)
            env[g.var] = g.sort
            walk(g.body, env)
            if saved is None:
                del env[g.var]
            else:
                env[g.var] = saved
            return
        raise TypeError(f"unknown formula node {g!r}")

    walk(f, env)


# --------------------------------------------------------------------------
# evaluation

_EMPTY_ENV: dict[str, int] = {}


def evaluate(
    struct: FiniteStructure,
    f: Formula,
    env: Mapping[str, int] | None = None,
) -> bool:
    """Tarskian truth of `f` in `struct` under `env`.

    Universal quantification over an empty sort is true, existential is
    false.  `env` maps free variables to elements.
    """
    e = dict(env) if env else dict(_EMPTY_ENV)
    return _eval(struct, f, e)


def _eval(struct: FiniteStructure, f: Formula, env: dict[str, int]) -> bool:
    if isinstance(f, Atom):
        if f.primed:
            raise SortError("primed atom outside a two-copy language")
        return tuple(env[a] for a in f.args) in struct.extent(f.rel)
    if isinstance(f, Eq):
        return env[f.left] == env[f.right]
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, Not):
        return not _eval(struct, f.body, env)
    if isinstance(f, And):
        return all(_eval(struct, p, env) for p in f.parts)
    if isinstance(f, Or):
        return any(_eval(struct, p, env) for p in f.parts)
    if isinstance(f, Implies):
        return (not _eval(struct, f.lhs, env)) or _eval(struct, f.rhs, env)
    if isinstance(f, Iff):
        return _eval(struct, f.lhs, env) == _eval(struct, f.rhs, env)
    if isinstance(f, Forall):
        saved = env.get(f.var)
        try:
            for v in struct.universe(f.sort):
                env[f.var] = v
                if not _eval(struct, f.body, env):
                    return False
            return True
        finally:
            if saved is None:
                env.pop(f.var, None)
            else:
                env[f.var] = saved
    if isinstance(f, Exists):
        saved = env.get(f.var)
        try:
            for v in struct.universe(f.sort):
                env[f.var] = v
                if _eval(struct, f.body, env):
                    return True
            return False
        finally:
            if saved is None:
                env.pop(f.var, None)
            else:
                env[f.var] = saved
    if isinstance(f, LinkAtom):
        raise SortError("link atom outside the two-copy language")
    raise TypeError(f"unknown formula node {f!r}")


CompiledFormula = Callable[[FiniteStructure, dict], bool]


def compile_formula(f: Formula) -> CompiledFormula:
    """Compile a plain formula to a closure tree.

    Same semantics as `evaluate`; used on hot paths where one formula is
    checked against many structures or assignments.
    """
    if isinstance(f, Atom):
        if f.primed:
            raise SortError("primed atom outside a two-copy language")
        rel, args = f.rel, f.args
        if len(args) == 1:
            a0 = args[0]
            return lambda s, env: (env[a0],) in s.extent(rel)
        if len(args) == 2:
            a0, a1 = args
            return lambda s, env: (env[a0], env[a1]) in s.extent(rel)
        return lambda s, env: tuple(env[a] for a in args) in s.extent(rel)
    if isinstance(f, Eq):
        l, r = f.left, f.right
        return lambda s, env: env[l] == env[r]
    if isinstance(f, Top):
        return lambda s, env: True
    if isinstance(f, Bottom):
        return lambda s, env: False
    if isinstance(f, Not):
        body = compile_formula(f.body)
        return lambda s, env: not body(s, env)
    if isinstance(f, And):
        parts = tuple(compile_formula(p) for p in f.parts)
        return lambda s, env: all(p(s, env) for p in parts)
    if isinstance(f, Or):
        parts = tuple(compile_formula(p) for p in f.parts)
        return lambda s, env: any(p(s, env) for p in parts)
    if isinstance(f, Implies):
        lhs, rhs = compile_formula(f.lhs), compile_formula(f.rhs)
        return lambda s, env: (not lhs(s, env)) or rhs(s, env)
    if isinstance(f, Iff):
        lhs, rhs = compile_formula(f.lhs), compile_formula(f.rhs)
        return lambda s, env: lhs(s, env) == rhs(s, env)
    if isinstance(f, Forall):
        var, sort = f.var, f.sort
        body = compile_formula(f.body)

        def run_forall(s: FiniteStructure, env: dict) -> bool:
            for v in range(s.size(sort)):
                env[var] = v
                if not body(s, env):
                    return False
            return True

        return run_forall
    if isinstance(f, Exists):
        var, sort = f.var, f.sort
        body = compile_formula(f.body)

        def run_exists(s: FiniteStructure, env: dict) -> bool:
            for v in range(s.size(sort)):
                env[var] = v
                if body(s, env):
                    return True
            return False

        return run_exists
    if isinstance(f, LinkAtom):
        raise SortError("link atom outside the two-copy language")
    raise TypeError(f"unknown formula node {f!r}")


def definable_set(
    struct: FiniteStructure,
    f: Formula,
    var_sorts: Sequence[tuple[str, str]],
) -> frozenset[tuple[int, ...]]:
    """Extent {(v1..vk) : struct |= f} with the given free variable order."""
    fn = compile_formula(f)
    env: dict[str, int] = {}
    names = [v for v, _ in var_sorts]
    spaces = [struct.universe(s) for _, s in var_sorts]
    out = []
    for combo in itertools.product(*spaces):
        for n, v in zip(names, combo):
            env[n] = v
        if fn(struct, env):
            out.append(combo)
    return frozenset(out)


# --------------------------------------------------------------------------
# theories


@dataclass(frozen=True)
class Theory:
    """A named list of sentences over a fixed vocabulary."""

    name: str
    vocab: Vocabulary
    axioms: tuple[tuple[str, Formula], ...] = ()

    def __post_init__(self) -> None:
        for axname, ax in self.axioms:
            if free_variables(ax):
                raise SortError(f"axiom {axname!r} has free variables")
            validate_formula(self.vocab, ax)


def empty_theory(vocab: Vocabulary, name: str = "empty") -> Theory:
    return Theory(name, vocab)


# --------------------------------------------------------------------------
# enumeration

def count_structures(vocab: Vocabulary, sizes: Mapping[str, int]) -> int:
    total_bits = 0
    size_of = {s: sizes.get(s, 0) for s in vocab.sorts}
    for rel in vocab.relations:
        t = 1
        for s in rel.profile:
            t *= size_of[s]
        total_bits += t
    return 1 << total_bits


def enumerate_structures(
    vocab: Vocabulary,
    sizes: Mapping[str, int],
    budget: Budget | None = None,
) -> Iterator[FiniteStructure]:
    """All structures on the given universes, exactly once, in a fixed order.

    The order is a single binary counter over the concatenated tuple lists:
    relations in declaration order, each relation's candidate tuples in
    lexicographic order, with the first declared relation's first tuple as
    the lowest-order bit.
    """
    bud = _budget(budget)
    size_vec = tuple(sizes.get(s, 0) for s in vocab.sorts)
    for s in sizes:
        vocab.sort_index(s)
    tuple_lists: list[list[tuple[int, ...]]] = []
    for rel in vocab.relations:
        spaces = [range(size_vec[vocab.sort_index(s)]) for s in rel.profile]
        tuple_lists.append(sorted(itertools.product(*spaces)))
    total = count_structures(vocab, sizes)
    bud.charge(total, f"enumerating structures at {dict(sizes)}")
    widths = [len(ts) for ts in tuple_lists]
    for m in range(total):
        exts = []
        shift = 0
        for ts, w in zip(tuple_lists, widths):
            mask = (m >> shift) & ((1 << w) - 1)
            exts.append(frozenset(ts[i] for i in range(w) if (mask >> i) & 1))
            shift += w
        yield FiniteStructure(vocab, size_vec, tuple(exts))


def models_of(
    theory: Theory,
    sizes: Mapping[str, int],
    budget: Budget | None = None,
) -> Iterator[FiniteStructure]:
    """Structures at the given sizes satisfying every axiom, in enumeration order."""
    compiled = [compile_formula(ax) for _, ax in theory.axioms]
    for st in enumerate_structures(theory.vocab, sizes, budget):
        env: dict[str, int] = {}
        if all(fn(st, env) for fn in compiled):
            yield st


# --------------------------------------------------------------------------
# isomorphism

BijectionFamily = tuple[tuple[int, ...], ...]
"""Per-sort bijections; family[i][v] is the image of element v of sort i."""


def identity_family(sizes: Sequence[int]) -> BijectionFamily:
    return tuple(tuple(range(n)) for n in sizes)


def compose_families(g: BijectionFamily, f: BijectionFamily) -> BijectionFamily:
    """Composition g after f, per sort."""
    return tuple(tuple(gs[v] for v in fs) for gs, fs in zip(g, f))


def invert_family(f: BijectionFamily) -> BijectionFamily:
    out = []
    for fs in f:
        inv = [0] * len(fs)
        for i, v in enumerate(fs):
            inv[v] = i
        out.append(tuple(inv))
    return tuple(out)


def apply_family(
    vocab: Vocabulary,
    f: BijectionFamily,
    profile: Sequence[str],
    t: tuple[int, ...],
) -> tuple[int, ...]:
    return tuple(f[vocab.sort_index(s)][v] for s, v in zip(profile, t))


def all_bijection_families(sizes: Sequence[int]) -> Iterator[BijectionFamily]:
    """All per-sort bijection families on fixed sizes, lexicographically."""
    per_sort = [itertools.permutations(range(n)) for n in sizes]
    for combo in itertools.product(*per_sort):
        yield tuple(combo)


def count_bijection_families(sizes: Sequence[int]) -> int:
    total = 1
    for n in sizes:
        for k in range(2, n + 1):
            total *= k
    return total


def is_isomorphism(M: FiniteStructure, N: FiniteStructure, f: BijectionFamily) -> bool:
    if M.vocab != N.vocab or M.sizes != N.sizes:
        return False
    vocab = M.vocab
    for rel, ext_m, ext_n in zip(vocab.relations, M.extents, N.extents):
        if len(ext_m) != len(ext_n):
            return False
        idx = tuple(vocab.sort_index(s) for s in rel.profile)
        for t in ext_m:
            if tuple(f[i][v] for i, v in zip(idx, t)) not in ext_n:
                return False
    return True


def find_isomorphisms(
    M: FiniteStructure,
    N: FiniteStructure,
    budget: Budget | None = None,
) -> list[BijectionFamily]:
    """All per-sort bijection families carrying M onto N, brute force.

    Returns the empty list when vocabularies or universe sizes differ.
    Families come out in lexicographic order.
    """
    if M.vocab != N.vocab or M.sizes != N.sizes:
        return []
    bud = _budget(budget)
    bud.charge(count_bijection_families(M.sizes), "isomorphism search")
    return [f for f in all_bijection_families(M.sizes) if is_isomorphism(M, N, f)]
