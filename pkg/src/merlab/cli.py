"""Command surface.

Every command reads a workspace file (except `catalog` and
`swap-demo`), runs one check, and prints one report.  JSON is the
format of record: key order is fixed, rationals are "p/q" strings,
seeds are echoed, and reruns with the same inputs and flags are
byte-identical, whatever `--threads` says.  `--format text` renders
the same report for reading.

Exit codes: 0 when the command ran, whatever its verdict; 2 on usage
or parse errors; 3 when the evaluation ceiling was hit.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import __version__
from .core import (
    Budget,
    BudgetExceeded,
    Eq,
    FiniteStructure,
    Forall,
    Iff,
    MerlabError,
    Theory,
    conj,
    empty_theory,
)
from .invariants import (
    density_report,
    encode_point,
    encode_structure,
    encode_type_point,
    invariants_report,
    struct_label,
    ydlept_at_scale,
)
from .mer import (
    Builtin,
    ByFamilyTower,
    ByReduct,
    BySentence,
    ErVerdict,
    GroupoidVerdict,
    NotEquivalenceError,
    Scale,
    check_equivalence_relation,
    check_groupoid_laws,
    classify_prefix,
    mer_classes,
    recheck_er_verdict,
    scale_of,
    tower_sentence,
)
from .nsets import NSetValue, nset_value, shelahize
from .pair import prime_translate
from .parser import parse_formula
from .workspace import Workspace, family_shorthand, load_workspace

_CATALOG_SIZES_DEFAULT = {"P": 4, "Q": 4}


# --------------------------------------------------------------------------
# flag parsing

def _bounds(text: str):
    """`3` for a uniform bound or `P=3,Q=2` per sort."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError(f"empty bound list {text!r}")
    try:
        if len(parts) == 1 and "=" not in parts[0]:
            return int(parts[0])
        out = {}
        for part in parts:
            name, eq, num = part.partition("=")
            if not eq or not name.strip():
                raise ValueError(part)
            out[name.strip()] = int(num)
        return out
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bounds look like '3' or 'P=3,Q=2', not {text!r}"
        ) from None


def _assignment(text: str) -> dict[str, int]:
    out = {}
    try:
        for part in text.split(","):
            name, eq, num = part.partition("=")
            if not eq or not name.strip():
                raise ValueError(part)
            out[name.strip()] = int(num)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"assignments look like 'x=0,y=1', not {text!r}"
        ) from None
    return out


def _sizes_map(value, sig=None) -> dict[str, int]:
    if isinstance(value, int):
        if sig is None:
            raise MerlabError("give per-sort sizes as NAME=N,...")
        return {s: value for s in sig.vocab.sorts}
    return dict(value)


# --------------------------------------------------------------------------
# encodings

def _enc_scale(scale: Scale) -> dict:
    return {
        "coupled": {s: n for s, n in scale.coupled},
        "decoupled": {s: n for s, n in scale.decoupled},
    }


def _enc_er(v: ErVerdict) -> object:
    if v.holds:
        return "holds"
    out: dict = {
        "kind": v.kind,
        "witnesses": [encode_structure(m) for m in v.witnesses],
    }
    if v.detail:
        out["detail"] = v.detail
    return out


def _enc_family(fam) -> dict:
    return {s: list(p) for s, p in fam}


def _enc_groupoid(v: GroupoidVerdict) -> object:
    if v.holds:
        return "holds"
    out: dict = {
        "kind": v.kind,
        "witnesses": [encode_structure(m) for m in v.witnesses],
        "families": [_enc_family(f) for f in v.families],
    }
    if v.detail:
        out["detail"] = v.detail
    return out


def _enc_nset(v: NSetValue) -> list:
    if v.depth == 1:
        return [list(t) for t in v.value]
    return [_enc_nset(m) for m in v.members()]


def _enc_fraction(x: Fraction) -> str:
    return str(x)


# --------------------------------------------------------------------------
# report plumbing

def _report(command: str, **fields) -> dict:
    out = {"command": command, "version": __version__}
    out.update(fields)
    out["timing"] = None
    return out


def _render_text(value, indent: str = "") -> list[str]:
    if isinstance(value, dict):
        lines = []
        for k, v in value.items():
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{indent}{k}:")
                lines.extend(_render_text(v, indent + "  "))
            else:
                lines.append(f"{indent}{k}: {_scalar(v)}")
        return lines
    if isinstance(value, list):
        lines = []
        for v in value:
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{indent}-")
                lines.extend(_render_text(v, indent + "  "))
            else:
                lines.append(f"{indent}- {_scalar(v)}")
        return lines
    return [f"{indent}{_scalar(value)}"]


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (dict, list)):
        return "{}" if isinstance(v, dict) else "[]"
    return str(v)


def _emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(report, indent=2))
    else:
        print("\n".join(_render_text(report)))


# --------------------------------------------------------------------------
# shared lookups

def _load(args) -> Workspace:
    return load_workspace(args.workspace)


def _mer_of(ws: Workspace, args):
    return ws.mer(args.mer)


def _theory_of(ws: Workspace, args, sig) -> Theory:
    if getattr(args, "theory", None):
        t = ws.theory(args.theory)
        if t.vocab != sig.vocab:
            raise MerlabError(
                f"theory {args.theory!r} is over a different vocabulary"
            )
        return t
    return empty_theory(sig.vocab)


def _scale_of_args(sig, args) -> Scale:
    return scale_of(sig, args.max, getattr(args, "decoupled_max", None))


def _budget_of(args) -> Budget | None:
    if getattr(args, "budget", None) is None:
        return None
    return Budget(args.budget)


# --------------------------------------------------------------------------
# commands

def _cmd_check_er(args) -> dict:
    ws = _load(args)
    decl = _mer_of(ws, args)
    theory = _theory_of(ws, args, decl.sig)
    scale = _scale_of_args(decl.sig, args)
    verdict = check_equivalence_relation(
        decl.spec, theory, scale, _budget_of(args), args.threads
    )
    replay = None
    if args.replay and not verdict.holds:
        replay = recheck_er_verdict(decl.spec, verdict)
    return _report(
        "check-er",
        workspace=args.workspace,
        mer=args.mer,
        theory=theory.name,
        scale=_enc_scale(scale),
        verdict=_enc_er(verdict),
        replay=replay,
    )


def _cmd_groupoid(args) -> dict:
    ws = _load(args)
    decl = _mer_of(ws, args)
    theory = _theory_of(ws, args, decl.sig)
    scale = _scale_of_args(decl.sig, args)
    verdict = check_groupoid_laws(
        decl.spec, theory, scale, _budget_of(args), args.threads
    )
    return _report(
        "groupoid",
        workspace=args.workspace,
        mer=args.mer,
        theory=theory.name,
        scale=_enc_scale(scale),
        verdict=_enc_groupoid(verdict),
    )


def _cmd_classes(args) -> dict:
    ws = _load(args)
    decl = _mer_of(ws, args)
    theory = _theory_of(ws, args, decl.sig)
    sizes = _sizes_map(args.sizes, decl.sig)
    classes = mer_classes(
        decl.spec, theory, sizes, _budget_of(args), args.threads
    )
    return _report(
        "classes",
        workspace=args.workspace,
        mer=args.mer,
        theory=theory.name,
        sizes={s: sizes.get(s, 0) for s in decl.sig.vocab.sorts},
        count=len(classes),
        classes=[[struct_label(m) for m in cls] for cls in classes],
    )


def _defining_sentence(ws: Workspace, decl):
    spec = decl.spec
    if isinstance(spec, Builtin):
        from .catalog import catalog_get

        spec = catalog_get(spec.ident).spec
    if isinstance(spec, BySentence):
        return spec.sentence
    if isinstance(spec, ByFamilyTower) and len(spec.tower.levels) == 1:
        return tower_sentence(spec.tower)
    if isinstance(spec, ByReduct):
        parts = []
        for f, fv in spec.formulas:
            body = Iff(f, prime_translate(spec.sig, f))
            for v, s in reversed(fv):
                body = Forall(v, s, body)
            parts.append(body)
        return conj(parts)
    raise MerlabError(
        "this equivalence kind has no single defining sentence to classify"
    )


def _cmd_classify(args) -> dict:
    if (args.formula is None) == (args.mer is None):
        raise MerlabError("give exactly one of --mer and --formula")
    if args.formula is not None:
        sentence = parse_formula(args.formula)
        source: dict = {"formula": args.formula}
    else:
        ws = _load(args)
        sentence = _defining_sentence(ws, _mer_of(ws, args))
        source = {"mer": args.mer}
    cls = classify_prefix(sentence)
    return _report(
        "classify",
        workspace=args.workspace,
        **source,
        prefix=cls.name,
    )


def _cmd_nset(args) -> dict:
    ws = _load(args)
    M = ws.structure(args.structure)
    pf = family_shorthand(M.vocab, args.family)
    value = nset_value(M, pf, _budget_of(args))
    return _report(
        "nset",
        workspace=args.workspace,
        structure=args.structure,
        family=args.family,
        depth=value.depth,
        size=len(value),
        value=_enc_nset(value),
    )


def _cmd_shelahize(args) -> dict:
    ws = _load(args)
    M = ws.structure(args.structure)
    pf = family_shorthand(M.vocab, args.family)
    sh = shelahize(M, pf, _budget_of(args))
    return _report(
        "shelahize",
        workspace=args.workspace,
        structure=args.structure,
        family=args.family,
        row_sort=sh.sf_sort,
        containment=sh.cf_rel,
        rows=[[list(t) for t in row] for row in sh.rows],
        expanded=encode_structure(sh.expanded),
    )


def _cmd_invariants(args) -> dict:
    ws = _load(args)
    decl = _mer_of(ws, args)
    theory = _theory_of(ws, args, decl.sig)
    scale = _scale_of_args(decl.sig, args)
    payload = invariants_report(
        decl.spec, theory, scale, args.tuple_len, _budget_of(args), args.threads
    )
    return _report(
        "invariants",
        workspace=args.workspace,
        mer=args.mer,
        theory=theory.name,
        **payload,
    )


def _cmd_ydlept(args) -> dict:
    ws = _load(args)
    decl = _mer_of(ws, args)
    theory = _theory_of(ws, args, decl.sig)
    scale = _scale_of_args(decl.sig, args)
    verdict = ydlept_at_scale(
        decl.spec, theory, scale, args.tuple_len, _budget_of(args), args.threads
    )
    return _report(
        "ydlept-test",
        workspace=args.workspace,
        mer=args.mer,
        theory=theory.name,
        scale=_enc_scale(scale),
        max_len=verdict.max_len,
        determined=verdict.determined,
        counterexample=(
            None
            if verdict.determined
            else [encode_structure(m) for m in verdict.witnesses]
        ),
    )


def _cmd_density(args) -> dict:
    ws = _load(args)
    decl = _mer_of(ws, args)
    M = ws.structure(args.structure)
    theory = _theory_of(ws, args, decl.sig)
    rep = density_report(
        decl.spec,
        M,
        args.tuple_len,
        theory,
        None,
        _budget_of(args),
        args.threads,
    )
    return _report(
        "density",
        workspace=args.workspace,
        mer=args.mer,
        structure=args.structure,
        tuple_len=rep.tuple_len,
        orbits=[[encode_point(p) for p in orb] for orb in rep.orbits],
        profile_classes=[
            [encode_point(p) for p in cls] for cls in rep.profile_classes
        ],
        refines=rep.refines,
        coincide=rep.coincide,
    )


def _cmd_swap_demo(args) -> dict:
    from .catalog import (
        adjacency_nset,
        check_extension_axioms,
        find_swap_witness,
        generate_extension_graph,
    )
    from .nsets import nset_equal

    sizes = _sizes_map(
        args.sizes if args.sizes is not None else dict(_CATALOG_SIZES_DEFAULT)
    )
    G = generate_extension_graph(sizes, args.k, args.seed)
    bad = check_extension_axioms(G, args.k)
    axioms: object = "satisfied" if bad is None else {
        "side": bad.side,
        "positive": [list(t) for t in sorted(bad.positive)],
        "negative": [list(t) for t in sorted(bad.negative)],
    }
    witness = None
    preserved = None
    if args.formula is not None:
        if args.assign is None:
            raise MerlabError("--formula needs --assign")
        phi = parse_formula(args.formula)
        w = find_swap_witness(G, phi, args.assign)
        if w is not None:
            preserved = nset_equal(adjacency_nset(G), adjacency_nset(w.graph))
            witness = {
                "pairs": [list(p) for p in w.pairs],
                "flipped": [[rel, list(t)] for rel, t in w.flipped],
                "swapped": encode_structure(w.graph),
            }
    return _report(
        "swap-demo",
        sizes=sizes,
        k=args.k,
        seed=args.seed,
        graph=encode_structure(G),
        axioms=axioms,
        formula=args.formula,
        assign=args.assign,
        witness=witness,
        preserved=preserved,
    )


def _cmd_interp(args) -> dict:
    from .catalog import expand_interpretation, forget_interpretation

    ws = _load(args)
    decl = _mer_of(ws, args)
    M = ws.structure(args.structure)
    N = expand_interpretation(M, decl.spec)
    back = forget_interpretation(N)
    sa, sb = N.vocab.sorts
    dd = N.vocab.relations[-1].name
    return _report(
        "interp",
        workspace=args.workspace,
        mer=args.mer,
        structure=args.structure,
        set_sort=sb,
        set_count=N.size(sb),
        distinguished={dd: [t[0] for t in sorted(N.extents[-1])]},
        expanded=encode_structure(N),
        roundtrip=(back == M),
    )


def _enc_vocab(vocab) -> dict:
    return {
        "sorts": list(vocab.sorts),
        "relations": {r.name: list(r.profile) for r in vocab.relations},
    }


def _cmd_catalog(args) -> dict:
    from .catalog import catalog_get, catalog_ids, generate_extension_graph
    from .catalog import check_extension_axioms

    if args.action == "list":
        entries = []
        for ident in catalog_ids():
            entries.append({"id": ident, "doc": catalog_get(ident).doc})
        return _report("catalog", action="list", entries=entries)
    if args.action == "show":
        if args.ident is None:
            raise MerlabError("catalog show needs an entry id")
        e = catalog_get(args.ident)
        return _report(
            "catalog",
            action="show",
            id=e.ident,
            doc=e.doc,
            kind=type(e.spec).__name__,
            vocabulary=_enc_vocab(e.vocab),
            coupled=sorted(e.spec.sig.coupled_sorts),
            theory=e.theory.name,
            axioms=[name for name, _ in e.theory.axioms],
            reference_scale=_enc_scale(e.reference_scale),
        )
    if args.action == "generate":
        sizes = _sizes_map(
            args.sizes if args.sizes is not None else dict(_CATALOG_SIZES_DEFAULT)
        )
        G = generate_extension_graph(sizes, args.k, args.seed)
        bad = check_extension_axioms(G, args.k)
        return _report(
            "catalog",
            action="generate",
            sizes=sizes,
            k=args.k,
            seed=args.seed,
            graph=encode_structure(G),
            axioms="satisfied" if bad is None else "violated",
        )
    raise MerlabError(f"unknown catalog action {args.action!r}")


# --------------------------------------------------------------------------
# argument surface

def _common(p, workspace=True) -> None:
    if workspace:
        p.add_argument("workspace", help="workspace file")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--budget", type=int, default=None,
                   help="elementary-evaluation ceiling")
    p.add_argument("--threads", type=int, default=1)


def _scaled(p) -> None:
    p.add_argument("--max", type=_bounds, required=True,
                   help="coupled-sort bounds, '3' or 'P=3,Q=2'")
    p.add_argument("--decoupled-max", type=_bounds, default=None,
                   help="decoupled-sort bounds")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="merlab",
        description="equivalence-relation workbench over finite structures",
    )
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-er", help="equivalence-relation axioms at a scale")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--theory", default=None)
    _scaled(p)
    p.add_argument("--replay", action="store_true",
                   help="re-validate any counterexample pairwise")
    p.set_defaults(run=_cmd_check_er)

    p = sub.add_parser("groupoid", help="identity, inverse and composition laws")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--theory", default=None)
    _scaled(p)
    p.set_defaults(run=_cmd_groupoid)

    p = sub.add_parser("classes", help="equivalence classes on fixed universes")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--theory", default=None)
    p.add_argument("--sizes", type=_bounds, required=True,
                   help="exact sizes, 'P=2,Q=2'")
    p.set_defaults(run=_cmd_classes)

    p = sub.add_parser("classify", help="quantifier prefix class of a sentence")
    _common(p)
    p.add_argument("--mer", default=None)
    p.add_argument("--formula", default=None, help="classify this sentence instead")
    p.set_defaults(run=_cmd_classify)

    p = sub.add_parser("nset", help="value of a family on a structure")
    _common(p)
    p.add_argument("--structure", required=True)
    p.add_argument("--family", required=True, help="shorthand REL(vars : vars)")
    p.set_defaults(run=_cmd_nset)

    p = sub.add_parser("shelahize", help="reify a family's rows as a sort")
    _common(p)
    p.add_argument("--structure", required=True)
    p.add_argument("--family", required=True)
    p.set_defaults(run=_cmd_shelahize)

    p = sub.add_parser("invariants", help="pointed-type quotient and profiles")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--theory", default=None)
    _scaled(p)
    p.add_argument("--tuple-len", type=int, default=2)
    p.set_defaults(run=_cmd_invariants)

    p = sub.add_parser("ydlept-test",
                       help="do equal profiles force equivalence here")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--theory", default=None)
    _scaled(p)
    p.add_argument("--tuple-len", type=int, default=2)
    p.set_defaults(run=_cmd_ydlept)

    p = sub.add_parser("density", help="self-morphism orbits against profiles")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--theory", default=None)
    p.add_argument("--structure", required=True)
    p.add_argument("--tuple-len", type=int, default=2)
    p.set_defaults(run=_cmd_density)

    p = sub.add_parser("swap-demo",
                       help="random bipartite graph, swap, literal flip")
    _common(p, workspace=False)
    p.add_argument("--sizes", type=_bounds, default=None, help="'P=4,Q=4'")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--formula", default=None)
    p.add_argument("--assign", type=_assignment, default=None)
    p.set_defaults(run=_cmd_swap_demo)

    p = sub.add_parser("interp", help="subset expansion with derived predicate")
    _common(p)
    p.add_argument("--mer", required=True)
    p.add_argument("--structure", required=True)
    p.set_defaults(run=_cmd_interp)

    p = sub.add_parser("catalog", help="stock equivalence notions")
    p.add_argument("action", choices=("list", "show", "generate"))
    p.add_argument("ident", nargs="?", default=None)
    _common(p, workspace=False)
    p.add_argument("--sizes", type=_bounds, default=None)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=_cmd_catalog)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = args.run(args)
    except BudgetExceeded as e:
        print(f"merlab: evaluation ceiling exceeded: {e}", file=sys.stderr)
        return 3
    except NotEquivalenceError as e:
        report = _report(
            args.command,
            error="not-an-equivalence",
            verdict=_enc_er(e.verdict),
        )
        _emit(report, args.format)
        return 0
    except MerlabError as e:
        print(f"merlab: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"merlab: {e}", file=sys.stderr)
        return 2
    _emit(report, args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
