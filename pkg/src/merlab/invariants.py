"""Type-space quotients and per-structure invariant fingerprints.

A pointed type is the canonically least isomorphic copy of a structure
together with a tuple of coupled-sort elements.  For a spec that passes
the equivalence axioms at a scale, quotienting all pointed types by
reachability along the spec's groupoid yields the coarsest labeling the
morphisms preserve; reading the labels back per structure gives a
profile that is constant on equivalence classes.  ydlept_at_scale then
asks whether that profile already decides the relation at the scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .core import (
    Budget,
    FiniteStructure,
    MerlabError,
    Theory,
    all_bijection_families,
    count_bijection_families,
    empty_theory,
    models_of,
    _budget,
)
from .mer import (
    Builtin,
    MerSpec,
    NotEquivalenceError,
    Scale,
    _class_labels,
    _resolve_builtin,
    check_equivalence_relation,
    equivalent,
    groupoid_morphisms,
    model_slices,
    pair_matrix,
)
from .pair import CoupledSignature, coupled_signature, transport

# A point is a tuple of (sort, element) pairs.
Point = tuple[tuple[str, int], ...]


# --------------------------------------------------------------------------
# canonical pointed structures


def _struct_key(M: FiniteStructure) -> tuple:
    return (M.sizes, tuple(tuple(sorted(e)) for e in M.extents))


_RELABEL_CACHE: dict[FiniteStructure, tuple] = {}


def _relabelings(M: FiniteStructure, bud: Budget) -> tuple:
    """Every per-sort relabeling of M with its transported copy and key."""
    hit = _RELABEL_CACHE.get(M)
    if hit is not None:
        return hit
    bud.charge(count_bijection_families(M.sizes), "structure relabeling")
    out = []
    for fam in all_bijection_families(M.sizes):
        mapping = {s: fam[i] for i, s in enumerate(M.vocab.sorts)}
        moved = transport(M, mapping)
        out.append((mapping, moved, _struct_key(moved)))
    _RELABEL_CACHE[M] = tuple(out)
    return _RELABEL_CACHE[M]


@dataclass(frozen=True)
class TypePoint:
    """Least isomorphic copy of a pointed structure.

    Two pointed structures are isomorphic exactly when their TypePoints
    compare equal; the bare-structure case is the empty point.
    """

    struct: FiniteStructure
    point: Point

    @property
    def length(self) -> int:
        return len(self.point)


def _type_order(tp: TypePoint) -> tuple:
    return (tp.length, _struct_key(tp.struct), tp.point)


def pointed_type(
    M: FiniteStructure, point: Point, budget: Budget | None = None
) -> TypePoint:
    """Canonicalize (M, point) by brute force over all relabelings."""
    for s, e in point:
        if not (0 <= e < M.size(s)):
            raise MerlabError(f"point element {e} outside sort {s!r} of size {M.size(s)}")
    bud = _budget(budget)
    bud.charge(1, "pointed type")
    best_key: tuple | None = None
    best_struct: FiniteStructure | None = None
    for mapping, moved, skey in _relabelings(M, bud):
        cand = (skey, tuple((s, mapping[s][e]) for s, e in point))
        if best_key is None or cand < best_key:
            best_key = cand
            best_struct = moved
    assert best_key is not None and best_struct is not None
    return TypePoint(best_struct, best_key[1])


def _tuples_of(
    M: FiniteStructure, sorts: Sequence[str], max_len: int
) -> Iterator[Point]:
    """All points over the given sorts up to max_len, shortest first,
    sort combinations in declaration order, elements lexicographic."""
    for ln in range(max_len + 1):
        for combo in itertools.product(sorts, repeat=ln):
            for elems in itertools.product(*(M.universe(s) for s in combo)):
                yield tuple(zip(combo, elems))


def _scale_signature(vocab, scale: Scale) -> CoupledSignature:
    return coupled_signature(vocab, [s for s, _ in scale.coupled])


def _scaled_models(
    theory: Theory, scale: Scale | Mapping[str, int], bud: Budget
) -> Iterator[tuple[FiniteStructure, tuple[str, ...]]]:
    if isinstance(scale, Scale):
        sig = _scale_signature(theory.vocab, scale)
        for _, models in model_slices(sig, theory, scale, bud):
            for m in models:
                yield m, sig.coupled_sorts
    else:
        sorts = tuple(theory.vocab.sorts)
        for m in models_of(theory, dict(scale), bud):
            yield m, sorts


def type_space(
    theory: Theory,
    scale: Scale | Mapping[str, int],
    max_len: int = 2,
    budget: Budget | None = None,
) -> list[TypePoint]:
    """Canonical representatives of every pointed isomorphism class.

    A Scale ranges over all size vectors within its bounds and points
    use its coupled sorts; a plain per-sort size mapping enumerates those
    exact sizes with every sort pointable.  Output order: point length,
    then canonical structure key, then point.
    """
    if max_len < 0:
        raise MerlabError("max_len must be >= 0")
    bud = _budget(budget)
    seen: set[TypePoint] = set()
    out: list[TypePoint] = []
    for M, sorts in _scaled_models(theory, scale, bud):
        for pt in _tuples_of(M, sorts, max_len):
            tp = pointed_type(M, pt, bud)
            if tp not in seen:
                seen.add(tp)
                out.append(tp)
    out.sort(key=_type_order)
    return out


# --------------------------------------------------------------------------
# groupoid quotient


@dataclass(frozen=True)
class ProvenanceEdge:
    """One executed merge: carrying `point` across the identity morphism
    from `source` to the equivalent `target` united two classes."""

    left: TypePoint
    right: TypePoint
    source: FiniteStructure
    target: FiniteStructure
    point: Point


@dataclass(eq=False)
class TypePartition:
    """Pointed types at a scale, grouped by groupoid reachability."""

    spec: MerSpec
    scale: Scale
    max_len: int
    classes: tuple[tuple[TypePoint, ...], ...]
    provenance: tuple[ProvenanceEdge, ...]

    def __post_init__(self) -> None:
        self._index: dict[TypePoint, int] = {}
        for i, cls in enumerate(self.classes):
            for tp in cls:
                self._index[tp] = i

    def label(self, tp: TypePoint) -> int:
        got = self._index.get(tp)
        if got is None:
            raise MerlabError(
                "pointed type not covered; the structure lies outside this "
                "partition's scale or theory"
            )
        return got

    def points(self) -> Iterator[TypePoint]:
        for cls in self.classes:
            yield from cls

    def class_sets(self) -> set[frozenset[TypePoint]]:
        return {frozenset(cls) for cls in self.classes}


class _Union:
    """Deterministic union-find on type points; the root of a class is
    always its canonically least member."""

    def __init__(self) -> None:
        self.parent: dict[TypePoint, TypePoint] = {}
        self.order: list[TypePoint] = []

    def add(self, tp: TypePoint) -> None:
        if tp not in self.parent:
            self.parent[tp] = tp
            self.order.append(tp)

    def find(self, tp: TypePoint) -> TypePoint:
        root = tp
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[tp] != root:
            self.parent[tp], tp = root, self.parent[tp]
        return root

    def union(self, a: TypePoint, b: TypePoint) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        lo, hi = sorted((ra, rb), key=_type_order)
        self.parent[hi] = lo
        return True

    def classes(self) -> tuple[tuple[TypePoint, ...], ...]:
        groups: dict[TypePoint, list[TypePoint]] = {}
        for tp in self.order:
            groups.setdefault(self.find(tp), []).append(tp)
        out = [tuple(sorted(g, key=_type_order)) for g in groups.values()]
        out.sort(key=lambda cls: _type_order(cls[0]))
        return tuple(out)


def _checked_spec(spec, theory, scale, bud, threads):
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    if theory.vocab != spec.sig.vocab:
        raise MerlabError("theory and spec vocabularies differ")
    verdict = check_equivalence_relation(spec, theory, scale, bud, threads)
    if not verdict.holds:
        raise NotEquivalenceError(verdict)
    return spec


def groupoid_type_quotient(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    max_len: int = 2,
    budget: Budget | None = None,
    threads: int = 1,
) -> TypePartition:
    """Quotient the pointed types by reachability along spec's groupoid.

    Any morphism f between models on shared coupled universes merges the
    type of a tuple with the type of its image.  Transporting the target
    model along f turns every such merge into one along the identity map
    between two equivalent enumerated models, so it suffices to walk each
    slice's equivalence classes once, linking every member to the class
    representative.  Merging runs serialized in canonical order; raises
    NotEquivalenceError when the spec fails the axioms at scale.
    """
    bud = _budget(budget)
    spec = _checked_spec(spec, theory, scale, bud, threads)
    sig = spec.sig
    uf = _Union()
    edges: list[ProvenanceEdge] = []
    for _, models in model_slices(sig, theory, scale, bud):
        per_model: list[tuple[list[Point], list[TypePoint]]] = []
        for m in models:
            pts = list(_tuples_of(m, sig.coupled_sorts, max_len))
            tps = [pointed_type(m, p, bud) for p in pts]
            for tp in tps:
                uf.add(tp)
            per_model.append((pts, tps))
        if not models:
            continue
        labels = _class_labels(pair_matrix(spec, models, bud, threads))
        reps: dict[int, int] = {}
        for i in range(len(models)):
            lab = int(labels[i])
            if lab not in reps:
                reps[lab] = i
                continue
            r = reps[lab]
            rpts, rtps = per_model[r]
            itps = per_model[i][1]
            for pt, ta, tb in zip(rpts, rtps, itps):
                if uf.union(ta, tb):
                    edges.append(ProvenanceEdge(ta, tb, models[r], models[i], pt))
    return TypePartition(spec, scale, max_len, uf.classes(), tuple(edges))


def groupoid_type_quotient_direct(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    max_len: int = 2,
    budget: Budget | None = None,
) -> TypePartition:
    """Literal closure: enumerate every morphism of every model pair in
    every slice and merge each tuple's type with its image's type.  Far
    slower than the transported scan; kept as an independent route."""
    bud = _budget(budget)
    spec = _checked_spec(spec, theory, scale, bud, 1)
    sig = spec.sig
    uf = _Union()
    edges: list[ProvenanceEdge] = []
    for _, models in model_slices(sig, theory, scale, bud):
        for m in models:
            for pt in _tuples_of(m, sig.coupled_sorts, max_len):
                uf.add(pointed_type(m, pt, bud))
        for M in models:
            pts = list(_tuples_of(M, sig.coupled_sorts, max_len))
            for N in models:
                for fam in groupoid_morphisms(spec, M, N, bud):
                    for pt in pts:
                        image = tuple((s, fam[s][e]) for s, e in pt)
                        ta = pointed_type(M, pt, bud)
                        tb = pointed_type(N, image, bud)
                        if uf.union(ta, tb):
                            edges.append(ProvenanceEdge(ta, tb, M, N, pt))
    return TypePartition(spec, scale, max_len, uf.classes(), tuple(edges))


# --------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class InvariantProfile:
    """Class labels of every pointed type of one structure.

    `zero` labels the bare structure; tables[n] holds, for each length
    n+1 sort combination in declaration order, the labels of all element
    tuples in lexicographic order.  Profiles over shared coupled
    universes compare positionally.
    """

    zero: int
    tables: tuple[tuple[tuple[tuple[str, ...], tuple[int, ...]], ...], ...]


def invariant_profile(
    M: FiniteStructure,
    partition: TypePartition,
    max_len: int | None = None,
    budget: Budget | None = None,
) -> InvariantProfile:
    """Read M's labels off a partition; M must lie within its scale."""
    if max_len is None:
        max_len = partition.max_len
    if max_len > partition.max_len:
        raise MerlabError("profile length exceeds the partition's max_len")
    sig = partition.spec.sig
    if M.vocab != sig.vocab:
        raise MerlabError("structure vocabulary differs from the partition's")
    bud = _budget(budget)
    zero = partition.label(pointed_type(M, (), bud))
    tables = []
    for ln in range(1, max_len + 1):
        rows = []
        for combo in itertools.product(sig.coupled_sorts, repeat=ln):
            labels = tuple(
                partition.label(pointed_type(M, tuple(zip(combo, elems)), bud))
                for elems in itertools.product(*(M.universe(s) for s in combo))
            )
            rows.append((combo, labels))
        tables.append(tuple(rows))
    return InvariantProfile(zero, tuple(tables))


# --------------------------------------------------------------------------
# profile exactness at scale


@dataclass(frozen=True)
class YdleptVerdict:
    """Whether equal profiles imply equivalence at the scale.

    Empty witnesses mean determined; otherwise witnesses hold the first
    pair, in enumeration order, with equal profiles yet inequivalent.
    A determined verdict speaks only about this scale and max_len.
    """

    scale: Scale
    max_len: int
    witnesses: tuple[FiniteStructure, ...] = ()
    detail: str = ""

    @property
    def determined(self) -> bool:
        return not self.witnesses


def _ydlept_scan(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    max_len: int,
    partition: TypePartition,
    bud: Budget,
) -> YdleptVerdict:
    sig = spec.sig
    for _, models in model_slices(sig, theory, scale, bud):
        profs = [invariant_profile(m, partition, max_len, bud) for m in models]
        groups: dict[InvariantProfile, list[int]] = {}
        for i, p in enumerate(profs):
            groups.setdefault(p, []).append(i)
        for i in range(len(models)):
            for j in groups[profs[i]]:
                if j <= i:
                    continue
                if not equivalent(spec, models[i], models[j], bud):
                    return YdleptVerdict(
                        scale, max_len, (models[i], models[j]),
                        "equal invariant profiles but inequivalent",
                    )
    return YdleptVerdict(scale, max_len)


def ydlept_at_scale(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    max_len: int = 2,
    budget: Budget | None = None,
    threads: int = 1,
) -> YdleptVerdict:
    """Decide whether the profile determines the relation at this scale.

    Soundness holds by construction (equivalent models get equal
    profiles), so only the converse is searched: the first pair on
    shared coupled universes with equal profiles yet inequivalent.
    """
    bud = _budget(budget)
    partition = groupoid_type_quotient(spec, theory, scale, max_len, bud, threads)
    spec = partition.spec
    return _ydlept_scan(spec, theory, scale, max_len, partition, bud)


def recheck_ydlept_verdict(
    spec: MerSpec,
    theory: Theory,
    v: YdleptVerdict,
    budget: Budget | None = None,
) -> bool:
    """Replay a counterexample: equal profiles, inequivalent pair."""
    if v.determined:
        return True
    bud = _budget(budget)
    M, N = v.witnesses
    partition = groupoid_type_quotient(spec, theory, v.scale, v.max_len, bud)
    pm = invariant_profile(M, partition, v.max_len, bud)
    pn = invariant_profile(N, partition, v.max_len, bud)
    return pm == pn and not equivalent(spec, M, N, bud)


# --------------------------------------------------------------------------
# orbit density


@dataclass(frozen=True)
class DensityReport:
    """Self-morphism orbits of one structure's tuples next to their
    profile classes.  Orbits refine the classes by construction; whether
    the two partitions coincide is recorded as observed."""

    struct: FiniteStructure
    tuple_len: int
    orbits: tuple[tuple[Point, ...], ...]
    profile_classes: tuple[tuple[Point, ...], ...]
    refines: bool
    coincide: bool


def _partition_tuples(
    tuples: Sequence[Point], key: Mapping[Point, object]
) -> tuple[tuple[Point, ...], ...]:
    groups: dict[object, list[Point]] = {}
    for pt in tuples:
        groups.setdefault(key[pt], []).append(pt)
    out = [tuple(sorted(g)) for g in groups.values()]
    out.sort()
    return tuple(out)


def density_report(
    spec: MerSpec,
    M: FiniteStructure,
    tuple_len: int,
    theory: Theory | None = None,
    scale: Scale | None = None,
    budget: Budget | None = None,
    threads: int = 1,
) -> DensityReport:
    """Compare G(M,M)-orbits of M's length-`tuple_len` coupled tuples
    with their profile classes under the quotient at M's own sizes
    (or at an explicit scale)."""
    if isinstance(spec, Builtin):
        spec = _resolve_builtin(spec.ident)
    sig = spec.sig
    bud = _budget(budget)
    if theory is None:
        theory = empty_theory(sig.vocab)
    if scale is None:
        scale = Scale(
            tuple((s, M.size(s)) for s in sig.coupled_sorts),
            tuple((s, M.size(s)) for s in sig.decoupled_sorts),
        )
    partition = groupoid_type_quotient(spec, theory, scale, tuple_len, bud, threads)
    tuples = [
        pt for pt in _tuples_of(M, sig.coupled_sorts, tuple_len)
        if len(pt) == tuple_len
    ]
    uf_parent: dict[Point, Point] = {pt: pt for pt in tuples}

    def find(pt: Point) -> Point:
        while uf_parent[pt] != pt:
            uf_parent[pt] = uf_parent[uf_parent[pt]]
            pt = uf_parent[pt]
        return pt

    for fam in groupoid_morphisms(spec, M, M, bud):
        for pt in tuples:
            image = tuple((s, fam[s][e]) for s, e in pt)
            ra, rb = find(pt), find(image)
            if ra != rb:
                uf_parent[max(ra, rb)] = min(ra, rb)
    orbit_key = {pt: find(pt) for pt in tuples}
    orbits = _partition_tuples(tuples, orbit_key)
    label_key = {
        pt: partition.label(pointed_type(M, pt, bud)) for pt in tuples
    }
    profile_classes = _partition_tuples(tuples, label_key)
    refines = all(
        len({label_key[pt] for pt in orbit}) == 1 for orbit in orbits
    )
    coincide = set(orbits) == set(profile_classes)
    return DensityReport(M, tuple_len, orbits, profile_classes, refines, coincide)


# --------------------------------------------------------------------------
# report encoding


def struct_label(M: FiniteStructure) -> str:
    """Compact deterministic rendering, e.g. 'P=2,Q=1|G=(0,0),(1,0)'."""
    sizes = ",".join(f"{s}={n}" for s, n in zip(M.vocab.sorts, M.sizes))
    rels = ";".join(
        f"{rel.name}=" + ",".join(str(t) if len(t) > 1 else f"({t[0]})"
                                  for t in sorted(ext)).replace(" ", "")
        for rel, ext in zip(M.vocab.relations, M.extents)
    )
    return f"{sizes}|{rels}" if rels else sizes


def encode_structure(M: FiniteStructure) -> dict:
    return {
        "sizes": {s: n for s, n in zip(M.vocab.sorts, M.sizes)},
        "relations": {
            rel.name: [list(t) for t in sorted(ext)]
            for rel, ext in zip(M.vocab.relations, M.extents)
        },
    }


def encode_point(pt: Point) -> list:
    return [[s, e] for s, e in pt]


def encode_type_point(tp: TypePoint) -> dict:
    return {
        "structure": encode_structure(tp.struct),
        "point": encode_point(tp.point),
    }


def encode_profile(p: InvariantProfile) -> dict:
    return {
        "zero": p.zero,
        "tables": [
            {
                "length": ln + 1,
                "rows": [
                    {"sorts": list(combo), "labels": list(labels)}
                    for combo, labels in table
                ],
            }
            for ln, table in enumerate(p.tables)
        ],
    }


def invariants_report(
    spec: MerSpec,
    theory: Theory,
    scale: Scale,
    max_len: int = 2,
    budget: Budget | None = None,
    threads: int = 1,
) -> dict:
    """Partition, per-model profiles and the determinacy verdict, as one
    JSON-ready record with fixed key order."""
    bud = _budget(budget)
    partition = groupoid_type_quotient(spec, theory, scale, max_len, bud, threads)
    spec = partition.spec
    verdict = _ydlept_scan(spec, theory, scale, max_len, partition, bud)
    profiles: dict[str, dict] = {}
    for _, models in model_slices(spec.sig, theory, scale, bud):
        for m in models:
            profiles[struct_label(m)] = encode_profile(
                invariant_profile(m, partition, max_len, bud)
            )
    if verdict.determined:
        enc_verdict: object = "determined"
    else:
        enc_verdict = {
            "counterexample": [encode_structure(w) for w in verdict.witnesses]
        }
    return {
        "partition": [
            [encode_type_point(tp) for tp in cls] for cls in partition.classes
        ],
        "profiles": profiles,
        "verdict": enc_verdict,
        "scale": {
            "coupled": dict(scale.coupled),
            "decoupled": dict(scale.decoupled),
            "theory": theory.name,
            "max_len": max_len,
        },
    }


def clear_caches() -> None:
    _RELABEL_CACHE.clear()
