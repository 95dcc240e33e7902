"""Concrete syntax for formulas.

Grammar (binders take maximal scope, `!` binds tightest, then `&`, `|`,
`->` (right associative), `<->`):

    formula := 'forall' v ':' Sort '.' formula
             | 'exists' v ':' Sort '.' formula
             | formula ('&' | '|' | '->' | '<->') formula
             | '!' formula
             | '(' formula ')'
             | 'true' | 'false'
             | R '(' v ',' ... ')'        relation atom, R may carry a prime
             | '@' f '(' v ',' v ')'      identification atom of a link
             | v '=' v

Sort names may carry a trailing prime (the second decoupled copy).
Errors carry the offset, line and column where parsing stopped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .core import (
    And,
    Atom,
    Bottom,
    Eq,
    Exists,
    Forall,
    Formula,
    Iff,
    Implies,
    LinkAtom,
    MerlabError,
    Not,
    Or,
    Top,
    Vocabulary,
    conj,
)

KEYWORDS = {"forall", "exists", "true", "false"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*'?)
  | (?P<arrow2><->)
  | (?P<arrow>->)
  | (?P<punct>[().,:=&|!@])
    """,
    re.VERBOSE,
)


class ParseError(MerlabError):
    def __init__(self, message: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}")
        self.pos = pos
        self.line = line
        self.column = col


@dataclass
class _Token:
    kind: str  # name | arrow | arrow2 | punct | end
    text: str
    pos: int


def tokenize(text: str) -> list[_Token]:
    out: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup or ""
        if kind != "ws":
            out.append(_Token(kind, m.group(), pos))
        pos = m.end()
    out.append(_Token("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(
                f"expected {text!r}, found {tok.text!r}" if tok.kind != "end"
                else f"expected {text!r}, found end of input",
                self.text,
                tok.pos,
            )
        return tok

    def expect_name(self, what: str) -> _Token:
        tok = self.next()
        if tok.kind != "name" or tok.text in KEYWORDS:
            raise ParseError(f"expected {what}", self.text, tok.pos)
        return tok

    def fail(self, message: str) -> ParseError:
        return ParseError(message, self.text, self.peek().pos)

    # precedence-climbing entry points

    def formula(self) -> Formula:
        return self.iff()

    def iff(self) -> Formula:
        lhs = self.implies()
        while self.peek().text == "<->":
            self.next()
            lhs = Iff(lhs, self.implies())
        return lhs

    def implies(self) -> Formula:
        lhs = self.disjunction()
        if self.peek().text == "->":
            self.next()
            return Implies(lhs, self.implies())
        return lhs

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek().text == "|":
            self.next()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.peek().text == "&":
            self.next()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "!":
            self.next()
            return Not(self.unary())
        if tok.text in ("forall", "exists"):
            self.next()
            var = self.expect_name("a variable name")
            if var.text.endswith("'"):
                raise ParseError("variable names cannot carry primes", self.text, var.pos)
            self.expect(":")
            sort = self.expect_name("a sort name")
            self.expect(".")
            body = self.formula()
            node = Forall if tok.text == "forall" else Exists
            return node(var.text, sort.text, body)
        return self.primary()

    def primary(self) -> Formula:
        tok = self.peek()
        if tok.text == "(":
            self.next()
            f = self.formula()
            self.expect(")")
            return f
        if tok.text == "true":
            self.next()
            return Top()
        if tok.text == "false":
            self.next()
            return Bottom()
        if tok.text == "@":
            self.next()
            fname = self.expect_name("a link name")
            self.expect("(")
            left = self.expect_name("a variable name")
            self.expect(",")
            right = self.expect_name("a variable name")
            self.expect(")")
            del fname  # a single link per coupled sort; the name is decorative
            return LinkAtom(left.text, right.text)
        if tok.kind == "name":
            name = self.next()
            nxt = self.peek()
            if nxt.text == "(":
                self.next()
                args = [self.expect_name("a variable name").text]
                while self.peek().text == ",":
                    self.next()
                    args.append(self.expect_name("a variable name").text)
                self.expect(")")
                primed = name.text.endswith("'")
                rel = name.text[:-1] if primed else name.text
                return Atom(rel, tuple(args), primed)
            if nxt.text == "=":
                self.next()
                rhs = self.expect_name("a variable name")
                if name.text.endswith("'") or rhs.text.endswith("'"):
                    raise ParseError("variable names cannot carry primes", self.text, name.pos)
                return Eq(name.text, rhs.text)
            raise ParseError(
                f"expected '(' or '=' after {name.text!r}", self.text, nxt.pos
            )
        raise self.fail(
            "expected a formula" if tok.kind != "end" else "unexpected end of input"
        )


def parse_formula(
    text: str,
    vocab: Vocabulary | None = None,
    free_sorts: Mapping[str, str] | None = None,
) -> Formula:
    """Parse concrete syntax into a Formula; raises ParseError with position.

    With a vocabulary the result is also checked for well-sortedness;
    sorts of free variables are inferred from atom positions unless
    given.  Primed atoms are only checked through the coupled-signature
    validators, not here.
    """
    p = _Parser(text)
    f = p.formula()
    tok = p.peek()
    if tok.kind != "end":
        raise ParseError(f"trailing input {tok.text!r}", text, tok.pos)
    if vocab is not None:
        from .core import validate_formula

        fs = dict(free_sorts) if free_sorts is not None else infer_free_sorts(vocab, f)
        validate_formula(vocab, f, fs)
    return f


# --------------------------------------------------------------------------
# sort inference for free variables

def infer_free_sorts(
    vocab: Vocabulary,
    f: Formula,
    presets: Mapping[str, str] | None = None,
    primed_sort: "Mapping[str, str] | None" = None,
) -> dict[str, str]:
    """Assign sorts to free variables from their atom positions.

    Bound variables take their binder's sort.  A free variable whose sort
    is neither preset nor forced by some atom raises; so does a conflict.
    `primed_sort` maps each base sort to the sort its primed atom
    positions read (identity on coupled sorts); without it primed atoms
    cannot be inferred.
    """
    out: dict[str, str] = dict(presets or {})
    eq_pairs: list[tuple[str, str]] = []

    def note(v: str, s: str, bound: set[str]) -> None:
        if v in bound:
            return
        if v in out and out[v] != s:
            raise MerlabError(
                f"variable {v!r} used at sorts {out[v]} and {s}"
            )
        out[v] = s

    def walk(g: Formula, bound: set[str]) -> None:
        if isinstance(g, Atom):
            rel = vocab.relation(g.rel)
            for v, s in zip(g.args, rel.profile):
                if g.primed:
                    if primed_sort is None:
                        raise MerlabError(
                            f"primed atom {g.rel}' needs a coupled signature "
                            "to infer sorts"
                        )
                    s = primed_sort[s]
                note(v, s, bound)
            return
        if isinstance(g, Eq):
            eq_pairs.append((g.left, g.right))
            return
        if isinstance(g, LinkAtom):
            return
        if isinstance(g, Not):
            walk(g.body, bound)
        elif isinstance(g, (And, Or)):
            for p in g.parts:
                walk(p, bound)
        elif isinstance(g, (Implies, Iff)):
            walk(g.lhs, bound)
            walk(g.rhs, bound)
        elif isinstance(g, (Forall, Exists)):
            walk(g.body, bound | {g.var})

    walk(f, set())
    changed = True
    while changed:
        changed = False
        for a, b in eq_pairs:
            if a in out and b not in out:
                out[b] = out[a]
                changed = True
            elif b in out and a not in out:
                out[a] = out[b]
                changed = True
            elif a in out and b in out and out[a] != out[b]:
                raise MerlabError(
                    f"equality forces {a!r}:{out[a]} against {b!r}:{out[b]}"
                )
    from .core import free_variables

    for v in sorted(free_variables(f)):
        if v not in out:
            raise MerlabError(f"cannot infer a sort for free variable {v!r}")
    return out


# --------------------------------------------------------------------------
# printing

_PREC = {
    Iff: 1,
    Implies: 2,
    Or: 3,
    And: 4,
    Not: 5,
}


def _prec(f: Formula) -> int:
    if isinstance(f, (Forall, Exists)):
        return 0  # maximal scope: always parenthesized inside operators
    return _PREC.get(type(f), 6)


def format_formula(f: Formula) -> str:
    """Concrete syntax that parses back to the same tree."""

    def wrap(g: Formula, parent_prec: int, allow_equal: bool = False) -> str:
        s = fmt(g)
        p = _prec(g)
        if p < parent_prec or (p == parent_prec and not allow_equal):
            return f"({s})"
        return s

    def fmt(g: Formula) -> str:
        if isinstance(g, Top):
            return "true"
        if isinstance(g, Bottom):
            return "false"
        if isinstance(g, Atom):
            prime = "'" if g.primed else ""
            return f"{g.rel}{prime}({', '.join(g.args)})"
        if isinstance(g, LinkAtom):
            return f"@f({g.left}, {g.right})"
        if isinstance(g, Eq):
            return f"{g.left} = {g.right}"
        if isinstance(g, Not):
            return "!" + wrap(g.body, 5, allow_equal=True)
        if isinstance(g, And):
            return " & ".join(wrap(p, 4) for p in g.parts)
        if isinstance(g, Or):
            return " | ".join(wrap(p, 3) for p in g.parts)
        if isinstance(g, Implies):
            return f"{wrap(g.lhs, 2)} -> {wrap(g.rhs, 2, allow_equal=True)}"
        if isinstance(g, Iff):
            return f"{wrap(g.lhs, 1, allow_equal=True)} <-> {wrap(g.rhs, 1)}"
        if isinstance(g, Forall):
            return f"forall {g.var}:{g.sort}. {fmt(g.body)}"
        if isinstance(g, Exists):
            return f"exists {g.var}:{g.sort}. {fmt(g.body)}"
        raise TypeError(f"unknown formula node {g!r}")

    return fmt(f)
