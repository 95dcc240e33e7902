"""Model equivalence relations: specification forms and brute-force checks.

A spec names an equivalence candidate on structures that share universes
on the coupled sorts.  Variants: a closed two-copy sentence, equality of
definable extents, a family tower, threshold agreement of a labeling
into a finite metric space, or mutual domination under a lifted order.

Checking is exhaustive at a scale: models are enumerated per coupled
size vector (decoupled sizes vary freely inside a slice), pair matrices
are built either from per-model invariants or by direct evaluation, and
the equivalence axioms and groupoid laws are decided on those matrices.
Counterexamples are always the first in canonical enumeration order and
carry re-checkable witness structures.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np

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
    Theory,
    Top,
    Vocabulary,
    compile_formula,
    conj,
    free_variables,
    models_of,
    validate_formula,
    _budget,
)
from .pair import (
    CoupledSignature,
    coupled_transport_map,
    evaluate_pair,
    make_double,
    prime_translate,
    transport,
    validate_pair_formula,
)
from .nsets import (
    FamilyTower,
    NSetValue,
    OrderSpec,
    PartitionedFormula,
    base_order_relation,
    nset_leq,
    nset_value,
    tower_values,
)


# --------------------------------------------------------------------------
# scale


@dataclass(frozen=True)
class Scale:
    """Per-sort size bounds for exhaustive checking, plus an optional
    theory filter folded into every enumeration."""

    coupled: tuple[tuple[str, int], ...]
    decoupled: tuple[tuple[str, int], ...] = ()
    theory: Theory | None = None

    def __post_init__(self) -> None:
        for name, bound in self.coupled + self.decoupled:
            if bound < 0:
                raise MerlabError(f"negative bound for sort {name!r}")

    def bound(self, sort: str) -> int:
        for name, b in self.coupled + self.decoupled:
            if name == sort:
                return b
        raise MerlabError(f"no bound declared for sort {sort!r}")

    def as_dict(self) -> dict[str, int]:
        return dict(self.coupled + self.decoupled)


def scale_of(
    sig: CoupledSignature,
    coupled: Mapping[str, int] | int,
    decoupled: Mapping[str, int] | int | None = None,
    theory: Theory | None = None,
) -> Scale:
    """Build a Scale from mappings or uniform bounds, in vocabulary order."""
    cs = sig.coupled_sorts
    ds = sig.decoupled_sorts
    if isinstance(coupled, int):
        coupled = {s: coupled for s in cs}
    if decoupled is None:
        decoupled = {}
    if isinstance(decoupled, int):
        decoupled = {s: decoupled for s in ds}
    missing = [s for s in cs if s not in coupled]
    if missing:
        raise MerlabError(f"no bound for coupled sorts {missing}")
    missing = [s for s in ds if s not in decoupled]
    if missing:
        raise MerlabError(f"no bound for decoupled sorts {missing}")
    return Scale(
        tuple((s, coupled[s]) for s in cs),
        tuple((s, decoupled[s]) for s in ds),
        theory,
    )


# --------------------------------------------------------------------------
# metric spaces for the labeled-reduct variant


@dataclass(frozen=True)
class Metric:
    """A finite metric space with exact rational distances.

    Symmetry, zero diagonal, strict positivity off the diagonal and the
    triangle inequality are all verified at construction.
    """

    points: tuple[str, ...]
    table: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.points)
        if len(set(self.points)) != n:
            raise MerlabError("duplicate metric point names")
        if len(self.table) != n or any(len(r) != n for r in self.table):
            raise MerlabError("distance table shape does not match points")
        for i in range(n):
            if self.table[i][i] != 0:
                raise MerlabError(f"nonzero self-distance at {self.points[i]!r}")
            for j in range(n):
                if self.table[i][j] != self.table[j][i]:
                    raise MerlabError("distance table is not symmetric")
                if i != j and self.table[i][j] <= 0:
                    raise MerlabError("distinct points at distance <= 0")
                for k in range(n):
                    if self.table[i][k] > self.table[i][j] + self.table[j][k]:
                        raise MerlabError(
                            f"triangle inequality fails at "
                            f"({self.points[i]},{self.points[j]},{self.points[k]})"
                        )

    def distance(self, a: int, b: int) -> Fraction:
        return self.table[a][b]

    def min_positive(self) -> Fraction:
        n = len(self.points)
        return min(self.table[i][j] for i in range(n) for j in range(n) if i != j)


def metric_of(points: Sequence[str], rows: Sequence[Sequence[object]]) -> Metric:
    table = tuple(tuple(Fraction(x) for x in row) for row in rows)
    return Metric(tuple(points), table)


# --------------------------------------------------------------------------
# spec variants


@dataclass(frozen=True)
class BySentence:
    sig: CoupledSignature
    sentence: Formula

    def __post_init__(self) -> None:
        if free_variables(self.sentence):
            raise MerlabError("defining sentence must be closed")
        validate_pair_formula(self.sig, self.sentence, {})


@dataclass(frozen=True)
class ByReduct:
    """Equality of the definable extents of finitely many formulas.

    All variables, free and bound, live on coupled sorts; free-variable
    sorts are fixed at construction so extents are comparable."""

    sig: CoupledSignature
    formulas: tuple[tuple[Formula, tuple[tuple[str, str], ...]], ...]

    def __post_init__(self) -> None:
        for f, fv in self.formulas:
            sorts = dict(fv)
            if free_variables(f) != set(sorts):
                raise MerlabError("declared variables must match the free ones")
            validate_formula(self.sig.vocab, f, sorts)
            for v, s in fv:
                if not self.sig.is_coupled(s):
                    raise MerlabError(f"variable {v!r} on non-coupled sort {s!r}")
            for g in _subformulas(f):
                if isinstance(g, (Forall, Exists)) and not self.sig.is_coupled(g.sort):
                    raise MerlabError(
                        f"reduct formulas may not quantify over decoupled {g.sort!r}"
                    )


@dataclass(frozen=True)
class ByFamilyTower:
    tower: FamilyTower

    @property
    def sig(self) -> CoupledSignature:
        return self.tower.sig


@dataclass(frozen=True)
class ByApproxReduct:
    """Labels partition the coupled tuples; two structures agree when the
    labels of every tuple land within eps of each other in the metric."""

    sig: CoupledSignature
    label_vars: tuple[tuple[str, str], ...]
    labels: tuple[Formula, ...]
    label_points: tuple[str, ...]
    metric: Metric
    eps: Fraction

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise MerlabError("threshold must be positive")
        if len(self.labels) != len(self.label_points):
            raise MerlabError("each label needs a metric point")
        sorts = dict(self.label_vars)
        for v, s in self.label_vars:
            if not self.sig.is_coupled(s):
                raise MerlabError(f"label variable {v!r} on non-coupled sort {s!r}")
        for f in self.labels:
            if not free_variables(f) <= set(sorts):
                raise MerlabError("label formula uses an undeclared variable")
            validate_formula(self.sig.vocab, f, sorts)
        for p in self.label_points:
            if p not in self.metric.points:
                raise MerlabError(f"unknown metric point {p!r}")

    def point_index(self, label_index: int) -> int:
        return self.metric.points.index(self.label_points[label_index])


@dataclass(frozen=True)
class ByCofinalOrder:
    """Mutual domination of the family's values under the lifted order.

    The base order is shared data: both structures must carry the same
    order extent, which is what makes mutual domination transitive."""

    sig: CoupledSignature
    order: OrderSpec
    family: PartitionedFormula

    def __post_init__(self) -> None:
        self.order.validate(self.sig.vocab)
        self.family.validate(self.sig.vocab)
        if len(self.family.inner_block) != 1:
            raise MerlabError("the member block must be a single ordered variable")
        for v, s in self.family.inner_block:
            if s != self.order.sort:
                raise MerlabError(
                    f"member variable {v!r} must have the ordered sort"
                )
        if not self.sig.is_coupled(self.order.sort):
            raise MerlabError("the ordered sort must be coupled")


@dataclass(frozen=True)
class Builtin:
    ident: str

    @property
    def sig(self) -> CoupledSignature:
        return _resolve_builtin(self.ident).sig


MerSpec = (
    BySentence | ByReduct | ByFamilyTower | ByApproxReduct | ByCofinalOrder | Builtin
)


def _resolve_builtin(ident: str):
    from . import catalog

    return catalog.catalog_get(ident).spec


def _subformulas(f: Formula):
    from .core import subformulas

    return subformulas(f)


# --------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class ErVerdict:
    """Outcome of an exhaustive equivalence-relation check.

    kind None means the axioms held everywhere at the scale; otherwise
    kind is one of reflexivity, symmetry, transitivity, not-well-defined
    and witnesses re-check to the reported failure.
    """

    scale: Scale
    kind: str | None = None
    witnesses: tuple[FiniteStructure, ...] = ()
    detail: str = ""

    @property
    def holds(self) -> bool:
        return self.kind is None


@dataclass(frozen=True)
class GroupoidVerdict:
    """Outcome of the groupoid-law check.

    kind None = identity, inverse and composition laws all hold; else
    kind names the violated law (or not-well-defined), witnesses hold
    the structures and families the offending morphisms, as per-sort
    mappings on the coupled sorts.
    """

    scale: Scale
    kind: str | None = None
    witnesses: tuple[FiniteStructure, ...] = ()
    families: tuple[tuple[tuple[str, tuple[int, ...]], ...], ...] = ()
    detail: str = ""

    @property
    def holds(self) -> bool:
        return self.kind is None


class NotEquivalenceError(MerlabError):
    """Raised where an operation requires an equivalence and the spec
    fails the check; carries the verdict."""

    def __init__(self, verdict: ErVerdict):
        super().__init__(f"spec is not an equivalence at scale: {verdict.kind}")
        self.verdict = verdict


# --------------------------------------------------------------------------
# single-pair semantics


def _check_coupled_match(sig: CoupledSignature, M: FiniteStructure, N: FiniteStructure) -> None:
    if M.vocab is not N.vocab and M.vocab != N.vocab:
        raise SortError("structures over different vocabularies")
    for s in sig.coupled_sorts:
        if M.size(s) != N.size(s):
            raise SortError(
                f"coupled sort {s!r} has sizes {M.size(s)} and {N.size(s)}"
            )


def _approx_label_vector(
    spec: ByApproxReduct, M: FiniteStructure
) -> tuple[int, ...]:
    """Label index per coupled tuple, in lexicographic tuple order.

    Raises if the labels fail to be mutually exclusive and jointly
    exhaustive on M.
    """
    fns = [compile_formula(f) for f in spec.labels]
    spaces = [M.universe(s) for _, s in spec.label_vars]
    names = [v for v, _ in spec.label_vars]
    env: dict[str, int] = {}
    out = []
    for combo in itertools.product(*spaces):
        for n, v in zip(names, combo):
            env[n] = v
        hits = [i for i, fn in enumerate(fns) if fn(M, env)]
        if len(hits) != 1:
            raise MerlabError(
                f"labeling is not a partition at {combo}: "
                f"{len(hits)} labels hold"
            )
        out.append(hits[0])
    return tuple(out)


def _cofinal_data(spec: ByCofinalOrder, M: FiniteStructure):
    leq = base_order_relation(M, spec.order)
    value = nset_value(M, spec.family)
    return leq, value


def equivalent(
    spec: MerSpec,
    M: FiniteStructure,
    N: FiniteStructure,
    budget: Budget | None = None,
) -> bool:
    """Direct per-pair decision, without any invariant shortcuts."""
    if isinstance(spec, Builtin):
        return equivalent(_resolve_builtin(spec.ident), M, N, budget)
    _check_coupled_match(spec.sig, M, N)
    bud = _budget(budget)
    if isinstance(spec, BySentence):
        bud.charge(1, "pair sentence evaluation")
        return evaluate_pair(make_double(spec.sig, M, N), spec.sentence, {})
    if isinstance(spec, ByReduct):
        for f, fv in spec.formulas:
            if _extent(M, f, fv, bud) != _extent(N, f, fv, bud):
                return False
        return True
    if isinstance(spec, ByFamilyTower):
        from .nsets import tower_equivalent

        return tower_equivalent(M, N, spec.tower, bud)
    if isinstance(spec, ByApproxReduct):
        lm = _approx_label_vector(spec, M)
        ln = _approx_label_vector(spec, N)
        bud.charge(len(lm), "label comparison")
        for a, b in zip(lm, ln):
            d = spec.metric.distance(spec.point_index(a), spec.point_index(b))
            if d >= spec.eps:
                return False
        return True
    if isinstance(spec, ByCofinalOrder):
        fm = spec.order.formula
        fv = ((spec.order.left_var, spec.order.sort), (spec.order.right_var, spec.order.sort))
        if _extent(M, fm, fv, bud) != _extent(N, fm, fv, bud):
            return False
        leq, vm = _cofinal_data(spec, M)
        _, vn = _cofinal_data(spec, N)
        return nset_leq(vm, vn, leq) and nset_leq(vn, vm, leq)
    raise TypeError(f"unknown spec {spec!r}")


def _extent(M, f, fv, bud):
    from .core import definable_set

    bud.charge(1, "extent computation")
    return definable_set(M, f, tuple(fv))


# --------------------------------------------------------------------------
# per-model invariants (exact class fingerprints where the variant has one)

_INVARIANT_CACHE: dict[tuple[object, FiniteStructure], object] = {}
_SLICE_CACHE: dict[tuple[Theory, tuple[tuple[str, int], ...]], list[FiniteStructure]] = {}
_MATRIX_CACHE: dict[tuple[object, tuple[FiniteStructure, ...]], np.ndarray] = {}

# pair matrices above this many models are rebuilt rather than retained
_MATRIX_CACHE_LIMIT = 2048


def clear_caches() -> None:
    _INVARIANT_CACHE.clear()
    _SLICE_CACHE.clear()
    _MATRIX_CACHE.clear()


def _canon_leq(a: tuple, b: tuple, leq) -> bool:
    """Domination between canonical forms of equal depth."""
    if a[0] == 1:
        return all(any(leq(u, v) for v in b[1]) for u in a[1])
    return all(any(_canon_leq(u, v, leq) for v in b[1]) for u in a[1])


def _cofinal_canon(value: NSetValue, leq) -> tuple:
    """Canonical form under mutual domination: keep only the maximal
    members at every depth.

    Two values dominate each other exactly when these forms are equal:
    at depth one by antisymmetry of the base order, deeper by induction,
    since every member sits below some maximal member class.
    """
    if value.depth == 1:
        row = value.members()
        mx = [u for u in row if not any(v != u and leq(u, v) for v in row)]
        return (1, tuple(sorted(mx)))
    kids = sorted({_cofinal_canon(u, leq) for u in value.members()})
    keep = [
        c for c in kids
        if not any(
            d != c and _canon_leq(c, d, leq) and not _canon_leq(d, c, leq)
            for d in kids
        )
    ]
    return (value.depth, tuple(keep))


def spec_invariant(spec: MerSpec, M: FiniteStructure, budget: Budget | None = None):
    """A hashable value equal across two structures (sharing coupled
    universes) iff they are equivalent; None when the variant has no
    such reduction and pairs must be evaluated directly."""
    if isinstance(spec, Builtin):
        return spec_invariant(_resolve_builtin(spec.ident), M, budget)
    key = (spec, M)
    if key in _INVARIANT_CACHE:
        return _INVARIANT_CACHE[key]
    bud = _budget(budget)
    value: object
    if isinstance(spec, ByReduct):
        value = tuple(_extent(M, f, fv, bud) for f, fv in spec.formulas)
    elif isinstance(spec, ByFamilyTower):
        value = tower_values(M, spec.tower, bud)
    elif isinstance(spec, ByApproxReduct) and spec.eps <= spec.metric.min_positive():
        # below the smallest positive distance, "within eps" means equal
        pts = tuple(spec.point_index(i) for i in _approx_label_vector(spec, M))
        value = pts
    elif isinstance(spec, ByCofinalOrder):
        fv = ((spec.order.left_var, spec.order.sort), (spec.order.right_var, spec.order.sort))
        order_key = _extent(M, spec.order.formula, fv, bud)
        leq = base_order_relation(M, spec.order)
        value = (order_key, _cofinal_canon(nset_value(M, spec.family, bud), leq))
    else:
        value = None
    _INVARIANT_CACHE[key] = value
    return value


def spec_prescan(spec: MerSpec, M: FiniteStructure) -> str | None:
    """Well-definedness of the spec on one structure: a diagnostic
    string, or None when fine."""
    if isinstance(spec, Builtin):
        return spec_prescan(_resolve_builtin(spec.ident), M)
    try:
        if isinstance(spec, ByApproxReduct):
            _approx_label_vector(spec, M)
        elif isinstance(spec, ByCofinalOrder):
            base_order_relation(M, spec.order)
    except MerlabError as e:
        return str(e)
    return None


# --------------------------------------------------------------------------
# model slices

def _effective_theory(theory: Theory, scale: Scale) -> Theory:
    if scale.theory is None:
        return theory
    if scale.theory.vocab != theory.vocab:
        raise MerlabError("scale filter theory over a different vocabulary")
    return Theory(
        f"{theory.name}+{scale.theory.name}",
        theory.vocab,
        theory.axioms + scale.theory.axioms,
    )


def model_slices(
    sig: CoupledSignature,
    theory: Theory,
    scale: Scale,
    budget: Budget | None = None,
) -> Iterator[tuple[dict[str, int], list[FiniteStructure]]]:
    """Models grouped by coupled size vector, in canonical order.

    Inside a slice, decoupled size vectors run lexicographically and
    structures follow the enumeration order; any two models of one slice
    are comparable under every spec over sig.
    """
    if theory.vocab != sig.vocab:
        raise MerlabError("theory and signature vocabularies differ")
    theory = _effective_theory(theory, scale)
    cs = sig.coupled_sorts
    ds = sig.decoupled_sorts
    for cvec in itertools.product(*(range(scale.bound(s) + 1) for s in cs)):
        coupled_sizes = dict(zip(cs, cvec))
        models: list[FiniteStructure] = []
        for dvec in itertools.product(*(range(scale.bound(s) + 1) for s in ds)):
            sizes = dict(coupled_sizes)
            sizes.update(zip(ds, dvec))
            models.extend(_models_cached(theory, sizes, budget))
        yield coupled_sizes, models


def _models_cached(
    theory: Theory, sizes: Mapping[str, int], budget: Budget | None
) -> list[FiniteStructure]:
    key = (theory, tuple(sorted(sizes.items())))
    hit = _SLICE_CACHE.get(key)
    if hit is not None:
        _budget(budget).charge(len(hit) or 1, "cached enumeration")
        return hit
    out = list(models_of(theory, sizes, budget))
    _SLICE_CACHE[key] = out
    return out


# --------------------------------------------------------------------------
# pair matrices


def _chunks(n: int, parts: int) -> list[range]:
    parts = max(1, min(parts, n)) if n else 1
    step = -(-n // parts) if n else 1
    return [range(i, min(i + step, n)) for i in range(0, n, step)] or [range(0)]


def pair_matrix(
    spec: MerSpec,
    models: Sequence[FiniteStructure],
    budget: Budget | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Boolean n x n matrix of the relation on one slice.

    Uses the per-model invariant when the variant has one; otherwise
    evaluates every ordered pair, in parallel over row blocks with a
    canonical-order merge, so the result is independent of threads.
    """
    n = len(models)
    bud = _budget(budget)
    if n == 0:
        return np.zeros((0, 0), dtype=bool)
    inv0 = spec_invariant(spec, models[0], bud)
    if inv0 is not None:
        bud.charge(n, "invariant fingerprints")
        seen: dict[object, int] = {}
        cls = np.empty(n, dtype=np.int64)
        for i, m in enumerate(models):
            v = spec_invariant(spec, m, bud)
            cls[i] = seen.setdefault(v, len(seen))
        return cls[:, None] == cls[None, :]
    cache_key = None
    if n <= _MATRIX_CACHE_LIMIT:
        cache_key = (spec, tuple(models))
        hit = _MATRIX_CACHE.get(cache_key)
        if hit is not None:
            bud.charge(n, "cached pair matrix")
            return hit
    bud.charge(n * n, "pairwise evaluation")

    def rows(block: range) -> np.ndarray:
        out = np.zeros((len(block), n), dtype=bool)
        for bi, i in enumerate(block):
            for j in range(n):
                out[bi, j] = equivalent(spec, models[i], models[j], bud)
        return out

    if threads <= 1 or n < 2:
        C = rows(range(n))
    else:
        from concurrent.futures import ThreadPoolExecutor

        blocks = _chunks(n, threads)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(rows, blocks))
        C = np.concatenate(parts, axis=0)
    if cache_key is not None:
        C.flags.writeable = False
        _MATRIX_CACHE[cache_key] = C
    return C


def _class_labels(C: np.ndarray) -> np.ndarray:
    """Component labels of an equivalence matrix, in first-seen order."""
    n = C.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for i in range(n):
        if labels[i] < 0:
            members = np.flatnonzero(C[i])
            labels[members] = nxt
            labels[i] = nxt
            nxt += 1
    return labels


def _first_transitivity_witness(C: np.ndarray) -> tuple[int, int, int] | None:
    n = C.shape[0]
    F = C.astype(np.float32)
    reach = (F @ F) > 0
    bad = reach & ~C
    if not bad.any():
        return None
    for i in range(n):
        if not bad[i].any():
            continue
        for j in np.flatnonzero(C[i]):
            row = C[j] & ~C[i]
            if row.any():
                return i, int(j), int(np.flatnonzero(row)[0])
    return None


# --------------------------------------------------------------------------
# equivalence-relation checking


def check_equivalence_relation(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    budget: Budget | None = None,
    threads: int = 1,
) -> ErVerdict:
    """Reflexivity over all models, symmetry over all ordered pairs and
    transitivity over all triples, slice by slice; first failure in
    canonical order wins."""
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    bud = _budget(budget)
    for _, models in model_slices(spec.sig, theory, scale, bud):
        for m in models:
            bad = spec_prescan(spec, m)
            if bad is not None:
                return ErVerdict(scale, "not-well-defined", (m,), bad)
        C = pair_matrix(spec, models, bud, threads)
        diag = np.diagonal(C)
        if not diag.all():
            i = int(np.flatnonzero(~diag)[0])
            return ErVerdict(scale, "reflexivity", (models[i],))
        asym = C & ~C.T
        if asym.any():
            i, j = map(int, np.argwhere(asym)[0])
            return ErVerdict(
                scale, "symmetry", (models[i], models[j]),
                "first structure relates to the second but not conversely",
            )
        w = _first_transitivity_witness(C)
        if w is not None:
            i, j, k = w
            return ErVerdict(scale, "transitivity", (models[i], models[j], models[k]))
    return ErVerdict(scale)


def recheck_er_verdict(spec: MerSpec, v: ErVerdict) -> bool:
    """Replay a counterexample against the per-pair semantics."""
    if v.kind is None:
        return True
    if v.kind == "reflexivity":
        (m,) = v.witnesses
        return not equivalent(spec, m, m)
    if v.kind == "symmetry":
        m, n = v.witnesses
        return equivalent(spec, m, n) and not equivalent(spec, n, m)
    if v.kind == "transitivity":
        m, n, o = v.witnesses
        return (
            equivalent(spec, m, n)
            and equivalent(spec, n, o)
            and not equivalent(spec, m, o)
        )
    if v.kind == "not-well-defined":
        (m,) = v.witnesses
        return spec_prescan(spec, m) is not None
    raise MerlabError(f"unknown verdict kind {v.kind!r}")


# --------------------------------------------------------------------------
# groupoid


def coupled_families(
    sig: CoupledSignature, sizes: Mapping[str, int]
) -> list[dict[str, tuple[int, ...]]]:
    """All per-coupled-sort bijections at the given sizes, in the
    lexicographic product order."""
    cs = sig.coupled_sorts
    perm_lists = [
        [tuple(p) for p in itertools.permutations(range(sizes[s]))] for s in cs
    ]
    return [dict(zip(cs, combo)) for combo in itertools.product(*perm_lists)]


def invert_mapping(f: Mapping[str, tuple[int, ...]]) -> dict[str, tuple[int, ...]]:
    out = {}
    for s, perm in f.items():
        inv = [0] * len(perm)
        for i, v in enumerate(perm):
            inv[v] = i
        out[s] = tuple(inv)
    return out


def compose_mapping(
    g: Mapping[str, tuple[int, ...]], f: Mapping[str, tuple[int, ...]]
) -> dict[str, tuple[int, ...]]:
    """g after f, per sort."""
    return {s: tuple(g[s][x] for x in f[s]) for s in f}


def is_morphism(
    spec: MerSpec,
    M: FiniteStructure,
    N: FiniteStructure,
    fam: Mapping[str, tuple[int, ...]],
    budget: Budget | None = None,
) -> bool:
    """fam is a morphism from M to N when pushing N back along it lands
    in M's class."""
    return equivalent(spec, M, transport(N, invert_mapping(fam)), budget)


def groupoid_morphisms(
    spec: MerSpec,
    M: FiniteStructure,
    N: FiniteStructure,
    budget: Budget | None = None,
) -> list[dict[str, tuple[int, ...]]]:
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    _check_coupled_match(spec.sig, M, N)
    bud = _budget(budget)
    sizes = {s: M.size(s) for s in spec.sig.coupled_sorts}
    fams = coupled_families(spec.sig, sizes)
    bud.charge(len(fams), "morphism scan")
    return [f for f in fams if is_morphism(spec, M, N, f, bud)]


def _fam_key(fam: Mapping[str, tuple[int, ...]]) -> tuple[tuple[str, tuple[int, ...]], ...]:
    return tuple(sorted(fam.items()))


def check_groupoid_laws(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    budget: Budget | None = None,
    threads: int = 1,
) -> GroupoidVerdict:
    """Identity membership, inverse closure and composition closure.

    On each slice the relation matrix is built first.  Failures of the
    equivalence axioms translate directly into law violations under the
    identity family.  When the axioms hold, the laws reduce to every
    transport permutation descending to the quotient: if some transport
    maps two equivalent structures to inequivalent ones, the inverse law
    breaks at an explicit witness, and conversely descent of all
    transports implies both closure laws.  That reduction is what is
    checked, so the transports themselves are exercised rather than the
    pair matrix alone.
    """
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    bud = _budget(budget)
    ident_key = None
    for coupled_sizes, models in model_slices(spec.sig, theory, scale, bud):
        for m in models:
            bad = spec_prescan(spec, m)
            if bad is not None:
                return GroupoidVerdict(scale, "not-well-defined", (m,), (), bad)
        n = len(models)
        if n == 0:
            continue
        ident = {s: tuple(range(k)) for s, k in coupled_sizes.items()}
        ident_key = _fam_key(ident)
        C = pair_matrix(spec, models, bud, threads)
        diag = np.diagonal(C)
        if not diag.all():
            i = int(np.flatnonzero(~diag)[0])
            return GroupoidVerdict(
                scale, "identity", (models[i],), (ident_key,),
                "identity is not a morphism of the structure to itself",
            )
        asym = C & ~C.T
        if asym.any():
            i, j = map(int, np.argwhere(asym)[0])
            return GroupoidVerdict(
                scale, "inverse", (models[i], models[j]), (ident_key,),
                "identity is a morphism one way but its inverse is not",
            )
        w = _first_transitivity_witness(C)
        if w is not None:
            i, j, k = w
            return GroupoidVerdict(
                scale, "composition",
                (models[i], models[j], models[k]), (ident_key, ident_key),
                "identity morphisms fail to compose across the triple",
            )
        labels = _class_labels(C)
        index_of = {m: i for i, m in enumerate(models)}
        fams = coupled_families(spec.sig, coupled_sizes)
        bud.charge(len(fams) * n, "transport descent scan")
        for fam in fams:
            inv = invert_mapping(fam)
            mapping = {s: p for s, p in inv.items() if p}
            sigma = np.empty(n, dtype=np.int64)
            for i, m in enumerate(models):
                sigma[i] = index_of[transport(m, mapping)]
            img = labels[sigma]
            rep: dict[int, int] = {}
            for i in range(n):
                c = int(labels[i])
                if c in rep:
                    if img[rep[c]] != img[i]:
                        a, b = rep[c], i
                        return GroupoidVerdict(
                            scale, "inverse",
                            (models[a], models[int(sigma[b])]),
                            (_fam_key(invert_mapping(fam)),),
                            "the family maps equivalent structures to "
                            "inequivalent transports",
                        )
                else:
                    rep[c] = i
    return GroupoidVerdict(scale)


def recheck_groupoid_verdict(spec: MerSpec, v: GroupoidVerdict) -> bool:
    """Replay a law violation through is_morphism."""
    if v.kind is None:
        return True
    if v.kind == "identity":
        (m,) = v.witnesses
        (fk,) = v.families
        return not is_morphism(spec, m, m, dict(fk))
    if v.kind == "inverse":
        m, n = v.witnesses
        (fk,) = v.families
        fam = dict(fk)
        return is_morphism(spec, m, n, fam) and not is_morphism(
            spec, n, m, invert_mapping(fam)
        )
    if v.kind == "composition":
        m, n, o = v.witnesses
        fk, gk = v.families
        f, g = dict(fk), dict(gk)
        return (
            is_morphism(spec, m, n, f)
            and is_morphism(spec, n, o, g)
            and not is_morphism(spec, m, o, compose_mapping(g, f))
        )
    if v.kind == "not-well-defined":
        (m,) = v.witnesses
        return spec_prescan(spec, m) is not None
    raise MerlabError(f"unknown verdict kind {v.kind!r}")


def check_groupoid_laws_direct(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    budget: Budget | None = None,
) -> GroupoidVerdict:
    """Literal triple-loop law check; small scales only.  Kept as an
    independent route for cross-validating the reduction above."""
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    bud = _budget(budget)
    for coupled_sizes, models in model_slices(spec.sig, theory, scale, bud):
        for m in models:
            bad = spec_prescan(spec, m)
            if bad is not None:
                return GroupoidVerdict(scale, "not-well-defined", (m,), (), bad)
        ident = {s: tuple(range(k)) for s, k in coupled_sizes.items()}
        fams = coupled_families(spec.sig, coupled_sizes)
        bud.charge(len(fams) ** 2 * max(1, len(models)) ** 3, "direct law scan")
        morph: dict[tuple[int, int], list[int]] = {}
        for i, m in enumerate(models):
            for j, nn in enumerate(models):
                morph[i, j] = [
                    fi for fi, f in enumerate(fams) if is_morphism(spec, m, nn, f, bud)
                ]
        ident_index = fams.index(ident)
        for i, m in enumerate(models):
            if ident_index not in morph[i, i]:
                return GroupoidVerdict(scale, "identity", (m,), (_fam_key(ident),))
        inv_index = {
            fi: fams.index(invert_mapping(f)) for fi, f in enumerate(fams)
        }
        for (i, j), fs in sorted(morph.items()):
            for fi in fs:
                if inv_index[fi] not in morph[j, i]:
                    return GroupoidVerdict(
                        scale, "inverse", (models[i], models[j]),
                        (_fam_key(fams[fi]),),
                    )
        comp_index = {
            (gi, fi): fams.index(compose_mapping(g, f))
            for gi, g in enumerate(fams)
            for fi, f in enumerate(fams)
        }
        for i in range(len(models)):
            for j in range(len(models)):
                for fi in morph[i, j]:
                    for k in range(len(models)):
                        for gi in morph[j, k]:
                            if comp_index[gi, fi] not in morph[i, k]:
                                return GroupoidVerdict(
                                    scale, "composition",
                                    (models[i], models[j], models[k]),
                                    (_fam_key(fams[fi]), _fam_key(fams[gi])),
                                )
    return GroupoidVerdict(scale)


# --------------------------------------------------------------------------
# quotients


def mer_classes(
    spec: MerSpec,
    theory: Theory,
    sizes: Mapping[str, int],
    budget: Budget | None = None,
    threads: int = 1,
) -> list[list[FiniteStructure]]:
    """Partition of the models on fixed universes, classes ordered by
    least member; refuses with the verdict when the spec is not an
    equivalence on this slice."""
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    bud = _budget(budget)
    theory_models = list(models_of(theory, sizes, bud))
    scale = Scale(
        tuple((s, sizes.get(s, 0)) for s in spec.sig.coupled_sorts),
        tuple((s, sizes.get(s, 0)) for s in spec.sig.decoupled_sorts),
    )
    for m in theory_models:
        bad = spec_prescan(spec, m)
        if bad is not None:
            raise NotEquivalenceError(ErVerdict(scale, "not-well-defined", (m,), bad))
    C = pair_matrix(spec, theory_models, bud, threads)
    diag = np.diagonal(C)
    if not diag.all():
        i = int(np.flatnonzero(~diag)[0])
        raise NotEquivalenceError(ErVerdict(scale, "reflexivity", (theory_models[i],)))
    asym = C & ~C.T
    if asym.any():
        i, j = map(int, np.argwhere(asym)[0])
        raise NotEquivalenceError(
            ErVerdict(scale, "symmetry", (theory_models[i], theory_models[j]))
        )
    w = _first_transitivity_witness(C)
    if w is not None:
        i, j, k = w
        raise NotEquivalenceError(
            ErVerdict(
                scale, "transitivity",
                (theory_models[i], theory_models[j], theory_models[k]),
            )
        )
    labels = _class_labels(C)
    out: list[list[FiniteStructure]] = [[] for _ in range(labels.max() + 1 if len(labels) else 0)]
    for i, m in enumerate(theory_models):
        out[labels[i]].append(m)
    return out


# --------------------------------------------------------------------------
# prefix classification


@dataclass(frozen=True)
class PrefixClass:
    kind: str  # "Pi" | "Sigma"
    n: int

    def __post_init__(self) -> None:
        if self.kind not in ("Pi", "Sigma") or self.n < 0:
            raise MerlabError("malformed prefix class")

    @property
    def name(self) -> str:
        return f"{self.kind}{self.n}"

    def __str__(self) -> str:
        return self.name


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Top):
        return Bottom() if neg else f
    if isinstance(f, Bottom):
        return Top() if neg else f
    if isinstance(f, (Atom, Eq, LinkAtom)):
        return Not(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.body, not neg)
    if isinstance(f, And):
        parts = tuple(_nnf(p, neg) for p in f.parts)
        return Or(parts) if neg else And(parts)
    if isinstance(f, Or):
        parts = tuple(_nnf(p, neg) for p in f.parts)
        return And(parts) if neg else Or(parts)
    if isinstance(f, Implies):
        return _nnf(Or((Not(f.lhs), f.rhs)), neg)
    if isinstance(f, Iff):
        both = And((Implies(f.lhs, f.rhs), Implies(f.rhs, f.lhs)))
        return _nnf(both, neg)
    if isinstance(f, Forall):
        body = _nnf(f.body, neg)
        return Exists(f.var, f.sort, body) if neg else Forall(f.var, f.sort, body)
    if isinstance(f, Exists):
        body = _nnf(f.body, neg)
        return Forall(f.var, f.sort, body) if neg else Exists(f.var, f.sort, body)
    raise TypeError(f"unknown formula node {f!r}")


def _sigma_pi(f: Formula) -> tuple[int, int]:
    """Least levels at which an NNF formula prenexes into an
    existential-first / universal-first form, merging independent
    same-kind blocks."""
    if isinstance(f, (Top, Bottom, Atom, Eq, LinkAtom, Not)):
        return 0, 0
    if isinstance(f, (And, Or)):
        sp = [_sigma_pi(p) for p in f.parts]
        return max(s for s, _ in sp), max(p for _, p in sp)
    if isinstance(f, Exists):
        s, p = _sigma_pi(f.body)
        sig = min(max(s, 1), p + 1)
        return sig, sig + 1
    if isinstance(f, Forall):
        s, p = _sigma_pi(f.body)
        pi = min(max(p, 1), s + 1)
        return pi + 1, pi
    raise TypeError(f"unknown formula node {f!r}")


def classify_prefix(sentence: Formula) -> PrefixClass:
    """Quantifier alternation class of a closed sentence, atoms at rank
    zero; universal-first classes win ties, so quantifier-free input
    reports as Pi0."""
    if free_variables(sentence):
        raise MerlabError("prefix classification needs a closed sentence")
    s, p = _sigma_pi(_nnf(sentence, False))
    if p <= s:
        return PrefixClass("Pi", p)
    return PrefixClass("Sigma", s)


# --------------------------------------------------------------------------
# approx-reduct entry point


def check_approx_reduct(
    spec: ByApproxReduct,
    theory: Theory,
    scale: Scale,
    budget: Budget | None = None,
    threads: int = 1,
) -> ErVerdict:
    """Alias with its own name because near-threshold metrics genuinely
    fail transitivity; the witness triple re-checks like any other."""
    if not isinstance(spec, ByApproxReduct):
        raise MerlabError("check_approx_reduct wants a labeled-metric spec")
    return check_equivalence_relation(spec, theory, scale, budget, threads)


# --------------------------------------------------------------------------
# spec constructors


def identity_mer(sig: CoupledSignature) -> BySentence:
    """Agreement of every relation extent between the two copies.

    Only meaningful when every relation lives on coupled sorts; a shared
    variable cannot address both copies of a decoupled sort.
    """
    parts: list[Formula] = []
    for rel in sig.vocab.relations:
        for s in rel.profile:
            if not sig.is_coupled(s):
                raise MerlabError(
                    f"relation {rel.name!r} touches decoupled sort {s!r}; "
                    "extent agreement is not expressible"
                )
        varnames = [f"x{i}" for i in range(len(rel.profile))]
        body: Formula = Iff(
            Atom(rel.name, tuple(varnames), False),
            Atom(rel.name, tuple(varnames), True),
        )
        for v, s in reversed(list(zip(varnames, rel.profile))):
            body = Forall(v, s, body)
        parts.append(body)
    sentence = conj(parts) if parts else Top()
    return BySentence(sig, sentence)


def trivial_mer(sig: CoupledSignature) -> BySentence:
    return BySentence(sig, Top())


def reduct_mer(
    sig: CoupledSignature,
    formulas: Sequence[tuple[Formula, Sequence[tuple[str, str]]]],
) -> ByReduct:
    return ByReduct(sig, tuple((f, tuple(fv)) for f, fv in formulas))


def tower_sentence(tower: FamilyTower) -> Formula:
    """The two-copy sentence saying a one-level tower's value agrees:
    every row of one side appears as a row of the other, both ways.

    Universal over parameters, existential over matching parameters on
    the other side, universal over members: three blocks.
    """
    if len(tower.levels) != 1:
        raise MerlabError("only one-level towers have a stock sentence")
    level = tower.levels[0]
    if level.depth != 2:
        raise MerlabError("the stock sentence needs a two-block family")
    sig = tower.sig
    phi = level.formula
    phi_p = prime_translate(sig, phi)
    params = level.blocks[0]
    members = level.inner_block

    def rename(f: Formula, suffix: str, names) -> Formula:
        from .nsets import _substitute_vars

        return _substitute_vars(f, {v: v + suffix for v in names}, "_t" + suffix)

    pnames = [v for v, _ in params]
    left = rename(phi, "L", pnames)
    right = rename(phi_p, "R", pnames)

    def half(outer: Formula, outer_primed: bool, inner: Formula, inner_primed: bool) -> Formula:
        body: Formula = Iff(outer, inner)
        for v, s in reversed(members):
            body = Forall(v, s, body)
        for v, s in reversed(params):
            ss = s if not inner_primed else sig.primed_sort(s)
            body = Exists(v + ("R" if inner_primed else "L"), ss, body)
        for v, s in reversed(params):
            ss = s if not outer_primed else sig.primed_sort(s)
            body = Forall(v + ("R" if outer_primed else "L"), ss, body)
        return body

    return And((half(left, False, right, True), half(right, True, left, False)))


def approx_mer(
    sig: CoupledSignature,
    label_vars: Sequence[tuple[str, str]],
    labels: Sequence[Formula],
    label_points: Sequence[str],
    metric: Metric,
    eps: Fraction | int | str,
) -> ByApproxReduct:
    return ByApproxReduct(
        sig, tuple(label_vars), tuple(labels), tuple(label_points),
        metric, Fraction(eps),
    )


def cofinal_mer(order: OrderSpec, family: PartitionedFormula, sig: CoupledSignature) -> ByCofinalOrder:
    return ByCofinalOrder(sig, order, family)
