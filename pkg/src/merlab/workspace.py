"""Workspace files: declarations the command surface operates on.

One UTF-8 text file holds any number of declarations, each usable by
later ones:

    vocab V { sort P; sort Q; rel G(P, Q); }
    theory T over V { axiom "some-edge": exists x:P. exists y:Q. G(x, y); }
    structure M over V { P = 2; Q = 2; G = {(0, 0), (1, 1)}; }
    mer E over V coupled(P, Q) { sentence "forall x:P. forall y:Q. (G(x, y) <-> G'(x, y))"; }

Relations in a structure default to the empty extent; sorts must all be
given a size.  A `#` starts a comment running to the end of the line.

Equivalence bodies, one per declaration:

    sentence "..."                   closed two-copy sentence, primes and @f(x, y) links
    reduct "f1"; "f2"; ...           definable-extent agreement
    family "G(x : y)"                one n-set family; repeat the clause for a tower
    approx metric "m.json" eps 1/2; labels "P(x)", "!P(x)"
    order "LE(a, b)"; family "G(x : y)"
    builtin some-id                  a catalog entry, signature re-declared here

Family shorthand partitions one relation's argument list into blocks
with `:`, outermost block first, last block the members.  The metric
file is JSON `{"points": [...], "table": [[...]]}` with "p/q" entries,
resolved relative to the workspace file.  Labels pair with the metric's
points by position.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .core import (
    Atom,
    FiniteStructure,
    MerlabError,
    Theory,
    Vocabulary,
    free_variables,
    structure,
    validate_formula,
    vocabulary,
)
from .mer import (
    Builtin,
    ByApproxReduct,
    ByCofinalOrder,
    ByFamilyTower,
    ByReduct,
    BySentence,
    MerSpec,
    Metric,
    metric_of,
)
from .nsets import FamilyTower, OrderSpec, PartitionedFormula, expansion_vocabulary
from .pair import CoupledSignature, coupled_signature
from .parser import infer_free_sorts, parse_formula


class WorkspaceError(MerlabError):
    """Load failure with a file:line:column prefix."""

    def __init__(self, path: str, src: str, pos: int, msg: str):
        line = src.count("\n", 0, pos) + 1
        col = pos - (src.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{path}:{line}:{col}: {msg}")
        self.path = path
        self.line = line
        self.column = col


# --------------------------------------------------------------------------
# family shorthand

_NAME_RE = re.compile(r"[A-Za-z_]\w*")


def family_shorthand(vocab: Vocabulary, text: str) -> PartitionedFormula:
    """`REL(vars : vars : ...)`: one atom, argument positions split into
    blocks by `:`, outermost block first.  Richer families are built
    with PartitionedFormula directly."""
    m = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*\((.*)\)\s*", text, flags=re.S)
    if m is None or ":" not in m.group(2):
        raise MerlabError(
            f"family shorthand {text!r} must look like REL(vars : vars : ...)"
        )
    rel = vocab.relation(m.group(1))
    blocks_vars: list[list[str]] = []
    for group in m.group(2).split(":"):
        names = [v.strip() for v in group.split(",") if v.strip()]
        if not names:
            raise MerlabError(f"empty block in family shorthand {text!r}")
        blocks_vars.append(names)
    args = [v for g in blocks_vars for v in g]
    for v in args:
        if not _NAME_RE.fullmatch(v):
            raise MerlabError(f"bad variable name {v!r} in family shorthand")
    if len(args) != rel.arity:
        raise MerlabError(
            f"family shorthand lists {len(args)} variables, "
            f"{rel.name} has arity {rel.arity}"
        )
    if len(set(args)) != len(args):
        raise MerlabError("family shorthand variables must be distinct")
    sorts = dict(zip(args, rel.profile))
    pf = PartitionedFormula(
        Atom(rel.name, tuple(args), False),
        tuple(tuple((v, sorts[v]) for v in g) for g in blocks_vars),
    )
    pf.validate(vocab)
    return pf


def _first_occurrence_order(text: str, names: set[str]) -> list[str]:
    hits = []
    for v in names:
        m = re.search(rf"\b{re.escape(v)}\b", text)
        hits.append((m.start() if m else len(text), v))
    return [v for _, v in sorted(hits)]


def order_shorthand(vocab: Vocabulary, text: str) -> OrderSpec:
    """A formula with exactly two free variables of one sort; the one
    appearing first in the text is the smaller side."""
    f = parse_formula(text)
    fv = infer_free_sorts(vocab, f)
    if len(fv) != 2:
        raise MerlabError(
            f"order formula needs exactly two free variables, got {sorted(fv)}"
        )
    left, right = _first_occurrence_order(text, set(fv))
    if fv[left] != fv[right]:
        raise MerlabError("both order variables must share one sort")
    return OrderSpec(fv[left], left, right, f)


# --------------------------------------------------------------------------
# declarations

@dataclass(frozen=True)
class MerDecl:
    name: str
    sig: CoupledSignature
    spec: MerSpec


@dataclass
class Workspace:
    path: str
    vocabs: dict[str, Vocabulary] = field(default_factory=dict)
    theories: dict[str, Theory] = field(default_factory=dict)
    structures: dict[str, FiniteStructure] = field(default_factory=dict)
    mers: dict[str, MerDecl] = field(default_factory=dict)

    def _pick(self, table: dict, kind: str, name: str):
        if name not in table:
            known = ", ".join(sorted(table)) or "none declared"
            raise MerlabError(f"unknown {kind} {name!r} in {self.path} ({known})")
        return table[name]

    def vocab(self, name: str) -> Vocabulary:
        return self._pick(self.vocabs, "vocabulary", name)

    def theory(self, name: str) -> Theory:
        return self._pick(self.theories, "theory", name)

    def structure(self, name: str) -> FiniteStructure:
        return self._pick(self.structures, "structure", name)

    def mer(self, name: str) -> MerDecl:
        return self._pick(self.mers, "equivalence", name)


# --------------------------------------------------------------------------
# lexer

_PUNCT = set("{}()=,;:/")
_WORD_STOP = set(' \t\r\n;{}()",') | {"#"}


@dataclass
class _Tok:
    kind: str  # name | number | string | punct | end
    text: str
    pos: int
    end: int


class _Lexer:
    def __init__(self, src: str, path: str):
        self.src = src
        self.path = path
        self.i = 0

    def fail(self, pos: int, msg: str) -> WorkspaceError:
        return WorkspaceError(self.path, self.src, pos, msg)

    def _skip(self, i: int) -> int:
        src, n = self.src, len(self.src)
        while i < n:
            c = src[i]
            if c in " \t\r\n":
                i += 1
            elif c == "#":
                j = src.find("\n", i)
                i = n if j < 0 else j + 1
            else:
                break
        return i

    def _scan(self) -> _Tok:
        src = self.src
        i = self._skip(self.i)
        if i >= len(src):
            return _Tok("end", "", i, i)
        c = src[i]
        if c.isalpha() or c == "_":
            j = i + 1
            while j < len(src) and (src[j].isalnum() or src[j] in "_'"):
                j += 1
            return _Tok("name", src[i:j], i, j)
        if c.isdigit():
            j = i + 1
            while j < len(src) and src[j].isdigit():
                j += 1
            return _Tok("number", src[i:j], i, j)
        if c == '"':
            j = i + 1
            out = []
            while j < len(src) and src[j] != '"':
                if src[j] == "\\" and j + 1 < len(src) and src[j + 1] in '\\"':
                    out.append(src[j + 1])
                    j += 2
                else:
                    out.append(src[j])
                    j += 1
            if j >= len(src):
                raise self.fail(i, "unterminated string")
            return _Tok("string", "".join(out), i, j + 1)
        if c in _PUNCT:
            return _Tok("punct", c, i, i + 1)
        raise self.fail(i, f"unexpected character {c!r}")

    def peek(self) -> _Tok:
        return self._scan()

    def take(self) -> _Tok:
        t = self._scan()
        self.i = t.end
        return t

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        t = self.take()
        want = text if text is not None else kind
        if t.kind != kind or (text is not None and t.text != text):
            got = t.text if t.kind != "end" else "end of file"
            raise self.fail(t.pos, f"expected {want!r}, found {got!r}")
        return t

    def at_punct(self, ch: str) -> bool:
        t = self.peek()
        return t.kind == "punct" and t.text == ch

    def skip_semi(self) -> None:
        if self.at_punct(";"):
            self.take()

    def raw_until_semicolon(self) -> tuple[str, int]:
        i = self._skip(self.i)
        j = self.src.find(";", i)
        if j < 0:
            raise self.fail(i, "missing ';' after formula")
        self.i = j + 1
        return self.src[i:j], i

    def raw_word(self) -> _Tok:
        i = self._skip(self.i)
        j = i
        while j < len(self.src) and self.src[j] not in _WORD_STOP:
            j += 1
        if j == i:
            raise self.fail(i, "expected a word")
        self.i = j
        return _Tok("name", self.src[i:j], i, j)


# --------------------------------------------------------------------------
# loader

def load_workspace(path: str | Path) -> Workspace:
    p = Path(path)
    try:
        src = p.read_text(encoding="utf-8")
    except OSError as e:
        raise MerlabError(f"cannot read workspace {p}: {e}") from None
    lex = _Lexer(src, str(p))
    ws = Workspace(str(p))
    while True:
        tok = lex.take()
        if tok.kind == "end":
            return ws
        if tok.kind != "name":
            raise lex.fail(tok.pos, f"expected a declaration, found {tok.text!r}")
        if tok.text == "vocab":
            _vocab_decl(lex, ws)
        elif tok.text == "theory":
            _theory_decl(lex, ws)
        elif tok.text == "structure":
            _structure_decl(lex, ws)
        elif tok.text == "mer":
            _mer_decl(lex, ws, p.parent)
        else:
            raise lex.fail(
                tok.pos,
                f"unknown declaration {tok.text!r} "
                "(vocab, theory, structure or mer)",
            )


def _declared_name(lex: _Lexer, table: dict, kind: str) -> _Tok:
    t = lex.expect("name")
    if t.text in table:
        raise lex.fail(t.pos, f"duplicate {kind} name {t.text!r}")
    return t


def _resolve(lex: _Lexer, ws: Workspace, tok: _Tok) -> Vocabulary:
    if tok.text not in ws.vocabs:
        raise lex.fail(
            tok.pos,
            f"unknown vocabulary {tok.text!r} (vocabularies must be "
            "declared before use)",
        )
    return ws.vocabs[tok.text]


def _wrap(lex: _Lexer, pos: int, what: str, exc: MerlabError) -> WorkspaceError:
    return lex.fail(pos, f"{what}: {exc}")


def _vocab_decl(lex: _Lexer, ws: Workspace) -> None:
    name = _declared_name(lex, ws.vocabs, "vocabulary")
    lex.expect("punct", "{")
    sorts: list[str] = []
    rels: dict[str, list[str]] = {}
    while True:
        t = lex.take()
        if t.kind == "punct" and t.text == "}":
            break
        if t.kind != "name" or t.text not in ("sort", "rel"):
            raise lex.fail(t.pos, f"expected 'sort', 'rel' or '}}', found {t.text!r}")
        if t.text == "sort":
            s = lex.expect("name")
            if s.text in sorts:
                raise lex.fail(s.pos, f"duplicate sort {s.text!r}")
            sorts.append(s.text)
            lex.expect("punct", ";")
        else:
            r = lex.expect("name")
            if r.text in rels:
                raise lex.fail(r.pos, f"duplicate relation {r.text!r}")
            lex.expect("punct", "(")
            profile = [lex.expect("name").text]
            while lex.at_punct(","):
                lex.take()
                profile.append(lex.expect("name").text)
            lex.expect("punct", ")")
            lex.expect("punct", ";")
            rels[r.text] = profile
    try:
        ws.vocabs[name.text] = vocabulary(sorts, rels)
    except MerlabError as e:
        raise _wrap(lex, name.pos, f"vocabulary {name.text!r}", e) from None


def _parse_axiom(lex: _Lexer, vocab: Vocabulary, label: _Tok) -> object:
    text, pos = lex.raw_until_semicolon()
    try:
        f = parse_formula(text)
        if free_variables(f):
            raise MerlabError("axioms must be closed sentences")
        validate_formula(vocab, f, {})
    except MerlabError as e:
        raise _wrap(lex, pos, f"axiom {label.text!r}", e) from None
    return f


def _theory_decl(lex: _Lexer, ws: Workspace) -> None:
    name = _declared_name(lex, ws.theories, "theory")
    lex.expect("name", "over")
    vocab = _resolve(lex, ws, lex.expect("name"))
    lex.expect("punct", "{")
    axioms: list[tuple[str, object]] = []
    while True:
        t = lex.take()
        if t.kind == "punct" and t.text == "}":
            break
        if t.kind != "name" or t.text != "axiom":
            raise lex.fail(t.pos, f"expected 'axiom' or '}}', found {t.text!r}")
        label = lex.expect("string")
        if any(label.text == seen for seen, _ in axioms):
            raise lex.fail(label.pos, f"duplicate axiom label {label.text!r}")
        lex.expect("punct", ":")
        axioms.append((label.text, _parse_axiom(lex, vocab, label)))
    ws.theories[name.text] = Theory(name.text, vocab, tuple(axioms))


def _tuple_literal(lex: _Lexer) -> tuple[int, ...]:
    lex.expect("punct", "(")
    elems = [int(lex.expect("number").text)]
    while lex.at_punct(","):
        lex.take()
        elems.append(int(lex.expect("number").text))
    lex.expect("punct", ")")
    return tuple(elems)


def _structure_decl(lex: _Lexer, ws: Workspace) -> None:
    name = _declared_name(lex, ws.structures, "structure")
    lex.expect("name", "over")
    vocab = _resolve(lex, ws, lex.expect("name"))
    lex.expect("punct", "{")
    sizes: dict[str, int] = {}
    extents: dict[str, list[tuple[int, ...]]] = {}
    while True:
        t = lex.take()
        if t.kind == "punct" and t.text == "}":
            break
        if t.kind != "name":
            raise lex.fail(t.pos, f"expected a sort or relation name, found {t.text!r}")
        lex.expect("punct", "=")
        if t.text in vocab.sorts:
            if t.text in sizes:
                raise lex.fail(t.pos, f"size of {t.text!r} given twice")
            sizes[t.text] = int(lex.expect("number").text)
        elif vocab.has_relation(t.text):
            if t.text in extents:
                raise lex.fail(t.pos, f"extent of {t.text!r} given twice")
            lex.expect("punct", "{")
            tuples: list[tuple[int, ...]] = []
            while not lex.at_punct("}"):
                tuples.append(_tuple_literal(lex))
                if lex.at_punct(","):
                    lex.take()
            lex.take()
            extents[t.text] = tuples
        else:
            raise lex.fail(t.pos, f"{t.text!r} is neither a sort nor a relation")
        lex.expect("punct", ";")
    missing = [s for s in vocab.sorts if s not in sizes]
    if missing:
        raise lex.fail(name.pos, f"no size for sorts {missing}")
    try:
        ws.structures[name.text] = structure(vocab, sizes, extents)
    except MerlabError as e:
        raise _wrap(lex, name.pos, f"structure {name.text!r}", e) from None


def _clause_formula(lex: _Lexer, what: str):
    tok = lex.expect("string")
    try:
        return parse_formula(tok.text), tok
    except MerlabError as e:
        raise _wrap(lex, tok.pos, what, e) from None


def _sentence_body(lex: _Lexer, sig: CoupledSignature) -> MerSpec:
    f, tok = _clause_formula(lex, "sentence")
    lex.skip_semi()
    try:
        return BySentence(sig, f)
    except MerlabError as e:
        raise _wrap(lex, tok.pos, "sentence", e) from None


def _reduct_body(lex: _Lexer, sig: CoupledSignature) -> MerSpec:
    rows = []
    first = lex.peek()
    while lex.peek().kind == "string":
        f, tok = _clause_formula(lex, "reduct formula")
        try:
            fv = infer_free_sorts(sig.vocab, f)
        except MerlabError as e:
            raise _wrap(lex, tok.pos, "reduct formula", e) from None
        rows.append((f, tuple(sorted(fv.items()))))
        lex.skip_semi()
    if not rows:
        raise lex.fail(first.pos, "reduct needs at least one formula")
    try:
        return ByReduct(sig, tuple(rows))
    except MerlabError as e:
        raise _wrap(lex, first.pos, "reduct", e) from None


def _family_strings(lex: _Lexer) -> list[_Tok]:
    out = [lex.expect("string")]
    lex.skip_semi()
    while True:
        t = lex.peek()
        if t.kind == "name" and t.text == "family":
            lex.take()
            out.append(lex.expect("string"))
            lex.skip_semi()
        else:
            return out


def _family_body(lex: _Lexer, sig: CoupledSignature) -> MerSpec:
    toks = _family_strings(lex)
    levels: list[PartitionedFormula] = []
    vocab = sig.vocab
    for tok in toks:
        try:
            pf = family_shorthand(vocab, tok.text)
        except MerlabError as e:
            raise _wrap(lex, tok.pos, "family", e) from None
        levels.append(pf)
        vocab, _, _ = expansion_vocabulary(vocab, pf)
    try:
        return ByFamilyTower(FamilyTower(sig, tuple(levels)))
    except MerlabError as e:
        raise _wrap(lex, toks[0].pos, "family tower", e) from None


def _rational(lex: _Lexer) -> Fraction:
    num = lex.expect("number")
    value = Fraction(int(num.text))
    if lex.at_punct("/"):
        lex.take()
        den = int(lex.expect("number").text)
        if den == 0:
            raise lex.fail(num.pos, "zero denominator")
        value = Fraction(int(num.text), den)
    return value


def load_metric(path: str | Path) -> Metric:
    """JSON {"points": [...], "table": [[...]]}; entries "p/q" or ints."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise MerlabError(f"cannot read metric {p}: {e}") from None
    except ValueError as e:
        raise MerlabError(f"metric {p} is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or set(doc) != {"points", "table"}:
        raise MerlabError(f'metric {p} must have exactly "points" and "table"')
    return metric_of(doc["points"], doc["table"])


def _approx_body(lex: _Lexer, sig: CoupledSignature, base: Path) -> MerSpec:
    lex.expect("name", "metric")
    ptok = lex.take()
    if ptok.kind != "string":
        raise lex.fail(ptok.pos, "metric path must be a quoted string")
    try:
        metric = load_metric(base / ptok.text)
    except MerlabError as e:
        raise _wrap(lex, ptok.pos, "metric", e) from None
    lex.expect("name", "eps")
    etok = lex.peek()
    eps = _rational(lex)
    lex.skip_semi()
    lex.expect("name", "labels")
    labels = []
    toks = []
    while True:
        f, tok = _clause_formula(lex, "label")
        labels.append(f)
        toks.append(tok)
        if lex.at_punct(","):
            lex.take()
        else:
            break
    lex.skip_semi()
    if len(labels) != len(metric.points):
        raise lex.fail(
            toks[0].pos,
            f"{len(labels)} labels for {len(metric.points)} metric points; "
            "give one per point, in the metric's order",
        )
    merged: dict[str, str] = {}
    for f, tok in zip(labels, toks):
        try:
            fv = infer_free_sorts(sig.vocab, f, presets=merged)
        except MerlabError as e:
            raise _wrap(lex, tok.pos, "label", e) from None
        merged.update(fv)
    try:
        return ByApproxReduct(
            sig,
            tuple(sorted(merged.items())),
            tuple(labels),
            tuple(metric.points),
            metric,
            eps,
        )
    except MerlabError as e:
        raise _wrap(lex, etok.pos, "approx", e) from None


def _cofinal_body(lex: _Lexer, sig: CoupledSignature) -> MerSpec:
    otok = lex.expect("string")
    try:
        order = order_shorthand(sig.vocab, otok.text)
    except MerlabError as e:
        raise _wrap(lex, otok.pos, "order", e) from None
    lex.skip_semi()
    lex.expect("name", "family")
    ftok = lex.expect("string")
    try:
        family = family_shorthand(sig.vocab, ftok.text)
        spec = ByCofinalOrder(sig, order, family)
    except MerlabError as e:
        raise _wrap(lex, ftok.pos, "family", e) from None
    lex.skip_semi()
    return spec


def _builtin_body(lex: _Lexer, sig: CoupledSignature) -> MerSpec:
    tok = lex.raw_word()
    from .catalog import catalog_get

    try:
        entry = catalog_get(tok.text)
    except MerlabError as e:
        raise _wrap(lex, tok.pos, "builtin", e) from None
    if entry.spec.sig != sig:
        raise lex.fail(
            tok.pos,
            f"builtin {tok.text!r} is declared over a different signature; "
            f"see `merlab catalog show {tok.text}`",
        )
    lex.skip_semi()
    return Builtin(tok.text)


def _mer_decl(lex: _Lexer, ws: Workspace, base: Path) -> None:
    name = _declared_name(lex, ws.mers, "equivalence")
    lex.expect("name", "over")
    vocab = _resolve(lex, ws, lex.expect("name"))
    ctok = lex.expect("name", "coupled")
    lex.expect("punct", "(")
    coupled = [lex.expect("name").text]
    while lex.at_punct(","):
        lex.take()
        coupled.append(lex.expect("name").text)
    lex.expect("punct", ")")
    for s in coupled:
        if s not in vocab.sorts:
            raise lex.fail(ctok.pos, f"coupled sort {s!r} is not in the vocabulary")
    sig = coupled_signature(vocab, coupled)
    lex.expect("punct", "{")
    kw = lex.expect("name")
    if kw.text == "sentence":
        spec = _sentence_body(lex, sig)
    elif kw.text == "reduct":
        spec = _reduct_body(lex, sig)
    elif kw.text == "family":
        spec = _family_body(lex, sig)
    elif kw.text == "approx":
        spec = _approx_body(lex, sig, base)
    elif kw.text == "order":
        spec = _cofinal_body(lex, sig)
    elif kw.text == "builtin":
        spec = _builtin_body(lex, sig)
    else:
        raise lex.fail(
            kw.pos,
            f"unknown equivalence clause {kw.text!r} (sentence, reduct, "
            "family, approx, order or builtin)",
        )
    lex.expect("punct", "}")
    ws.mers[name.text] = MerDecl(name.text, sig, spec)
