"""Two-copy languages for comparing structures over a shared vocabulary.

A coupled signature fixes which sorts the two copies share.  In the
equality-coupled language a formula talks about a left and a right
structure at once: unprimed atoms read the left structure, primed atoms
the right, and coupled sorts range over the single shared universe.
Decoupled sorts come in two copies, `S` (left) and `S'` (right).

The decoupled variant replaces the shared universe by an explicit
bijection per coupled sort: every sort is doubled and identification
atoms `@f(x, y)` assert that the link carries x (left) to y (right).
Cross-copy equality is a sort error there; identification only happens
through the link.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import (
    And,
    Atom,
    Bottom,
    Eq,
    Exists,
    FiniteStructure,
    Forall,
    Formula,
    Iff,
    Implies,
    LinkAtom,
    Not,
    Or,
    SortError,
    Top,
    Vocabulary,
    free_variables,
)


@dataclass(frozen=True)
class CoupledSignature:
    """A vocabulary with a distinguished set of coupled sorts."""

    vocab: Vocabulary
    coupled: frozenset[str]

    def __post_init__(self) -> None:
        for s in self.coupled:
            self.vocab.sort_index(s)

    @property
    def coupled_sorts(self) -> tuple[str, ...]:
        """Coupled sorts in vocabulary order."""
        return tuple(s for s in self.vocab.sorts if s in self.coupled)

    @property
    def decoupled_sorts(self) -> tuple[str, ...]:
        return tuple(s for s in self.vocab.sorts if s not in self.coupled)

    def is_coupled(self, sort: str) -> bool:
        return sort in self.coupled

    def primed_sort(self, sort: str) -> str:
        """Sort read by a primed atom position (identity on coupled sorts)."""
        self.vocab.sort_index(sort)
        return sort if sort in self.coupled else sort + "'"


def coupled_signature(vocab: Vocabulary, coupled: Sequence[str]) -> CoupledSignature:
    return CoupledSignature(vocab, frozenset(coupled))


def _split_sort(name: str) -> tuple[str, bool]:
    if name.endswith("'"):
        return name[:-1], True
    return name, False


@dataclass(frozen=True)
class DoubleStructure:
    """A left/right pair sharing its coupled universes."""

    sig: CoupledSignature
    left: FiniteStructure
    right: FiniteStructure

    def __post_init__(self) -> None:
        if self.left.vocab != self.sig.vocab or self.right.vocab != self.sig.vocab:
            raise SortError("both components must share the signature's vocabulary")
        for s in self.sig.coupled_sorts:
            if self.left.size(s) != self.right.size(s):
                raise SortError(
                    f"coupled sort {s!r} has universes of size "
                    f"{self.left.size(s)} and {self.right.size(s)}"
                )


def make_double(
    sig: CoupledSignature, left: FiniteStructure, right: FiniteStructure
) -> DoubleStructure:
    return DoubleStructure(sig, left, right)


@dataclass(frozen=True)
class TripleStructure:
    """Two fully separate copies identified by explicit link bijections.

    `links[s][v]` is the right-copy element identified with left-copy
    element v of coupled sort s.
    """

    sig: CoupledSignature
    left: FiniteStructure
    right: FiniteStructure
    links: Mapping[str, tuple[int, ...]]

    def __post_init__(self) -> None:
        if self.left.vocab != self.sig.vocab or self.right.vocab != self.sig.vocab:
            raise SortError("both components must share the signature's vocabulary")
        for s in self.sig.coupled_sorts:
            link = self.links.get(s)
            if link is None:
                raise SortError(f"missing link for coupled sort {s!r}")
            n, m = self.left.size(s), self.right.size(s)
            if n != m:
                raise SortError(f"link for {s!r} needs equal universe sizes")
            if sorted(link) != list(range(n)):
                raise SortError(f"link for {s!r} is not a bijection")
        for s in self.links:
            if not self.sig.is_coupled(s):
                raise SortError(f"link given for non-coupled sort {s!r}")


# --------------------------------------------------------------------------
# validation

def _pair_sort_exists(sig: CoupledSignature, name: str) -> None:
    base, primed = _split_sort(name)
    sig.vocab.sort_index(base)
    if primed and sig.is_coupled(base):
        raise SortError(f"coupled sort {base!r} has no primed copy")


def validate_pair_formula(
    sig: CoupledSignature,
    f: Formula,
    free_sorts: Mapping[str, str] | None = None,
) -> None:
    """Well-sortedness over the equality-coupled two-copy language."""
    env = dict(free_sorts or {})
    for s in env.values():
        _pair_sort_exists(sig, s)

    def expected_sort(rel_sort: str, primed: bool) -> str:
        return sig.primed_sort(rel_sort) if primed else rel_sort

    def walk(g: Formula, env: dict[str, str]) -> None:
        if isinstance(g, (Top, Bottom)):
            return
        if isinstance(g, Atom):
            rel = sig.vocab.relation(g.rel)
            if len(g.args) != rel.arity:
                raise SortError(
                    f"atom {g.rel} expects {rel.arity} arguments, got {len(g.args)}"
                )
            for v, s in zip(g.args, rel.profile):
                want = expected_sort(s, g.primed)
                got = env.get(v)
                if got is None:
                    raise SortError(f"unbound variable {v!r}")
                if got != want:
                    raise SortError(
                        f"variable {v!r} has sort {got}, "
                        f"{g.rel}{'′' if g.primed else ''} needs {want}"
                    )
            return
        if isinstance(g, LinkAtom):
            raise SortError(
                "identification atoms belong to the decoupled two-copy language"
            )
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
            _pair_sort_exists(sig, g.sort)
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


def validate_triple_formula(
    sig: CoupledSignature,
    f: Formula,
    free_sorts: Mapping[str, str] | None = None,
) -> None:
    """Well-sortedness over the decoupled two-copy language.

    Every sort is doubled; equality never crosses copies, and `@f` atoms
    identify a left coupled element with a right one.
    """
    env = dict(free_sorts or {})

    def sort_exists(name: str) -> None:
        base, _ = _split_sort(name)
        sig.vocab.sort_index(base)

    for s in env.values():
        sort_exists(s)

    def walk(g: Formula, env: dict[str, str]) -> None:
        if isinstance(g, (Top, Bottom)):
            return
        if isinstance(g, Atom):
            rel = sig.vocab.relation(g.rel)
            if len(g.args) != rel.arity:
                raise SortError(
                    f"atom {g.rel} expects {rel.arity} arguments, got {len(g.args)}"
                )
            for v, s in zip(g.args, rel.profile):
                want = s + "'" if g.primed else s
                got = env.get(v)
                if got is None:
                    raise SortError(f"unbound variable {v!r}")
                if got != want:
                    raise SortError(
                        f"variable {v!r} has sort {got}, atom needs {want}"
                    )
            return
        if isinstance(g, LinkAtom):
            for v in (g.left, g.right):
                if v not in env:
                    raise SortError(f"unbound variable {v!r} in @f")
            lbase, lprimed = _split_sort(env[g.left])
            rbase, rprimed = _split_sort(env[g.right])
            if lprimed or not rprimed or lbase != rbase:
                raise SortError(
                    f"@f identifies a left element with a right one of the same "
                    f"coupled sort; got {env[g.left]} and {env[g.right]}"
                )
            if not sig.is_coupled(lbase):
                raise SortError(f"@f on non-coupled sort {lbase!r}")
            return
        if isinstance(g, Eq):
            for v in (g.left, g.right):
                if v not in env:
                    raise SortError(f"unbound variable {v!r} in equality")
            if env[g.left] != env[g.right]:
                # cross-copy equality in particular lands here
                raise SortError(
                    f"equality between sorts {env[g.left]} and {env[g.right]}; "
                    "use @f to identify elements across copies"
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
            sort_exists(g.sort)
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
# translation helpers

def prime_translate(sig: CoupledSignature, f: Formula) -> Formula:
    """The primed copy of a plain formula: atoms primed, decoupled binders retyped."""
    if isinstance(f, (Top, Bottom)):
        return f
    if isinstance(f, Atom):
        if f.primed:
            raise SortError("formula is already primed")
        return Atom(f.rel, f.args, primed=True)
    if isinstance(f, Eq):
        return f
    if isinstance(f, LinkAtom):
        raise SortError("identification atoms cannot be primed")
    if isinstance(f, Not):
        return Not(prime_translate(sig, f.body))
    if isinstance(f, And):
        return And(tuple(prime_translate(sig, p) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(prime_translate(sig, p) for p in f.parts))
    if isinstance(f, Implies):
        return Implies(prime_translate(sig, f.lhs), prime_translate(sig, f.rhs))
    if isinstance(f, Iff):
        return Iff(prime_translate(sig, f.lhs), prime_translate(sig, f.rhs))
    if isinstance(f, Forall):
        return Forall(f.var, sig.primed_sort(f.sort), prime_translate(sig, f.body))
    if isinstance(f, Exists):
        return Exists(f.var, sig.primed_sort(f.sort), prime_translate(sig, f.body))
    raise TypeError(f"unknown formula node {f!r}")


# --------------------------------------------------------------------------
# evaluation

def evaluate_pair(
    double: DoubleStructure,
    f: Formula,
    env: Mapping[str, int] | None = None,
    free_sorts: Mapping[str, str] | None = None,
) -> bool:
    """Truth of an equality-coupled two-copy formula on a double structure."""
    validate_pair_formula(double.sig, f, free_sorts)
    fn = compile_pair_formula(f)
    return fn(double.left, double.right, dict(env or {}))


PairCompiled = "Callable[[FiniteStructure, FiniteStructure, dict], bool]"


def compile_pair_formula(f: Formula):
    """Compile an equality-coupled two-copy formula to fn(left, right, env).

    Unprimed atoms read the left structure, primed atoms the right;
    quantifiers over a primed sort range over the right universe,
    everything else over the left (which is shared when coupled).
    Validate separately; the compiled code assumes well-sortedness.
    """
    if isinstance(f, Atom):
        rel, args = f.rel, f.args
        if f.primed:
            return lambda L, R, env: tuple(env[a] for a in args) in R.extent(rel)
        return lambda L, R, env: tuple(env[a] for a in args) in L.extent(rel)
    if isinstance(f, Eq):
        l, r = f.left, f.right
        return lambda L, R, env: env[l] == env[r]
    if isinstance(f, Top):
        return lambda L, R, env: True
    if isinstance(f, Bottom):
        return lambda L, R, env: False
    if isinstance(f, Not):
        body = compile_pair_formula(f.body)
        return lambda L, R, env: not body(L, R, env)
    if isinstance(f, And):
        parts = tuple(compile_pair_formula(p) for p in f.parts)
        return lambda L, R, env: all(p(L, R, env) for p in parts)
    if isinstance(f, Or):
        parts = tuple(compile_pair_formula(p) for p in f.parts)
        return lambda L, R, env: any(p(L, R, env) for p in parts)
    if isinstance(f, Implies):
        lhs, rhs = compile_pair_formula(f.lhs), compile_pair_formula(f.rhs)
        return lambda L, R, env: (not lhs(L, R, env)) or rhs(L, R, env)
    if isinstance(f, Iff):
        lhs, rhs = compile_pair_formula(f.lhs), compile_pair_formula(f.rhs)
        return lambda L, R, env: lhs(L, R, env) == rhs(L, R, env)
    if isinstance(f, (Forall, Exists)):
        var = f.var
        base, primed = _split_sort(f.sort)
        body = compile_pair_formula(f.body)
        want_all = isinstance(f, Forall)

        def run(L: FiniteStructure, R: FiniteStructure, env: dict) -> bool:
            side = R if primed else L
            for v in range(side.size(base)):
                env[var] = v
                if body(L, R, env) != want_all:
                    return not want_all
            return want_all

        return run
    if isinstance(f, LinkAtom):
        raise SortError("identification atoms belong to the decoupled language")
    raise TypeError(f"unknown formula node {f!r}")


def evaluate_triple(
    triple: TripleStructure,
    f: Formula,
    env: Mapping[str, int] | None = None,
    free_sorts: Mapping[str, str] | None = None,
) -> bool:
    """Truth of a decoupled two-copy formula on a linked triple.

    `@f(x, y)` holds exactly when the link of x's coupled sort carries x
    to y.  Sorts of link arguments are resolved statically, so the
    formula is validated (with `free_sorts` for free variables) first.
    """
    sig = triple.sig
    validate_triple_formula(sig, f, free_sorts)
    sorts = dict(free_sorts or {})

    def walk(g: Formula, env: dict[str, int], sorts: dict[str, str]) -> bool:
        if isinstance(g, Top):
            return True
        if isinstance(g, Bottom):
            return False
        if isinstance(g, Atom):
            side = triple.right if g.primed else triple.left
            return tuple(env[a] for a in g.args) in side.extent(g.rel)
        if isinstance(g, Eq):
            return env[g.left] == env[g.right]
        if isinstance(g, LinkAtom):
            base, _ = _split_sort(sorts[g.left])
            return triple.links[base][env[g.left]] == env[g.right]
        if isinstance(g, Not):
            return not walk(g.body, env, sorts)
        if isinstance(g, And):
            return all(walk(p, env, sorts) for p in g.parts)
        if isinstance(g, Or):
            return any(walk(p, env, sorts) for p in g.parts)
        if isinstance(g, Implies):
            return (not walk(g.lhs, env, sorts)) or walk(g.rhs, env, sorts)
        if isinstance(g, Iff):
            return walk(g.lhs, env, sorts) == walk(g.rhs, env, sorts)
        if isinstance(g, (Forall, Exists)):
            base, primed = _split_sort(g.sort)
            side = triple.right if primed else triple.left
            saved_v = env.get(g.var)
            saved_s = sorts.get(g.var)
            sorts[g.var] = g.sort
            want_all = isinstance(g, Forall)
            result = want_all
            for v in range(side.size(base)):
                env[g.var] = v
                if walk(g.body, env, sorts) != want_all:
                    result = not want_all
                    break
            if saved_v is None:
                env.pop(g.var, None)
            else:
                env[g.var] = saved_v
            if saved_s is None:
                sorts.pop(g.var, None)
            else:
                sorts[g.var] = saved_s
            return result
        raise TypeError(f"unknown formula node {g!r}")

    return walk(f, dict(env or {}), sorts)


# --------------------------------------------------------------------------
# transport

def transport(
    M: FiniteStructure, f: Mapping[str, Sequence[int]]
) -> FiniteStructure:
    """Push M forward along per-sort bijections (identity where omitted).

    The result N has the same universes and R^N = { f(t) : t in R^M }
    componentwise, so f is an isomorphism M -> N by construction.
    """
    vocab = M.vocab
    maps: list[Sequence[int] | None] = [None] * len(vocab.sorts)
    for s, m in f.items():
        i = vocab.sort_index(s)
        n = M.sizes[i]
        if sorted(m) != list(range(n)):
            raise SortError(f"transport map for sort {s!r} is not a bijection")
        maps[i] = m
    new_exts = []
    for rel, ext in zip(vocab.relations, M.extents):
        idx = tuple(vocab.sort_index(s) for s in rel.profile)
        if all(maps[i] is None for i in idx):
            new_exts.append(ext)
            continue
        moved = set()
        for t in ext:
            moved.add(
                tuple(
                    v if maps[i] is None else maps[i][v]  # type: ignore[index]
                    for i, v in zip(idx, t)
                )
            )
        new_exts.append(frozenset(moved))
    return FiniteStructure(vocab, M.sizes, tuple(new_exts))


def coupled_transport_map(
    sig: CoupledSignature, family: Sequence[Sequence[int]]
) -> dict[str, Sequence[int]]:
    """Name-keyed transport map from a bijection family over the coupled sorts."""
    coupled = sig.coupled_sorts
    if len(family) != len(coupled):
        raise SortError(f"expected one bijection per coupled sort {coupled}")
    return {s: tuple(m) for s, m in zip(coupled, family)}


# --------------------------------------------------------------------------
# relating the two languages

def translate_pair_to_triple(
    sig: CoupledSignature, f: Formula
) -> Formula:
    """Rewrite an equality-coupled sentence into the decoupled language.

    Each coupled binder `Qx:S` becomes a pair of binders for x and a
    right-copy companion tied by `@f`; primed atoms then read the
    companion at coupled positions.  Only sentences are supported.
    """
    if free_variables(f):
        raise SortError("only sentences can be translated")

    def companion(v: str) -> str:
        return v + "__r"

    def walk(g: Formula, coupled_vars: set[str]) -> Formula:
        if isinstance(g, (Top, Bottom)):
            return g
        if isinstance(g, Atom):
            if not g.primed:
                return g
            rel = sig.vocab.relation(g.rel)
            args = tuple(
                companion(v) if sig.is_coupled(s) and v in coupled_vars else v
                for v, s in zip(g.args, rel.profile)
            )
            return Atom(g.rel, args, primed=True)
        if isinstance(g, Eq):
            return g
        if isinstance(g, Not):
            return Not(walk(g.body, coupled_vars))
        if isinstance(g, And):
            return And(tuple(walk(p, coupled_vars) for p in g.parts))
        if isinstance(g, Or):
            return Or(tuple(walk(p, coupled_vars) for p in g.parts))
        if isinstance(g, Implies):
            return Implies(walk(g.lhs, coupled_vars), walk(g.rhs, coupled_vars))
        if isinstance(g, Iff):
            return Iff(walk(g.lhs, coupled_vars), walk(g.rhs, coupled_vars))
        if isinstance(g, (Forall, Exists)):
            base, primed = _split_sort(g.sort)
            if primed or not sig.is_coupled(base):
                body = walk(g.body, coupled_vars - {g.var})
                return type(g)(g.var, g.sort, body)
            body = walk(g.body, coupled_vars | {g.var})
            link = LinkAtom(g.var, companion(g.var))
            if isinstance(g, Forall):
                inner = Forall(companion(g.var), base + "'", Implies(link, body))
            else:
                inner = Exists(companion(g.var), base + "'", And((link, body)))
            return type(g)(g.var, base, inner)
        if isinstance(g, LinkAtom):
            raise SortError("input already uses identification atoms")
        raise TypeError(f"unknown formula node {g!r}")

    return walk(f, set())
