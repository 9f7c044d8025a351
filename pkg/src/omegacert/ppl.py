"""Parser for the imperative probabilistic language.

Program files are made of sections::

    vars: x, y
    init: x ~ bernoulli(0.3); y := 0
    support: 0 <= x and x <= 1 and y = 0      # optional override of S_0
    invariant(head): 0 <= x and x <= 1 and y >= 0
    program:
      head: while flip(0.5) do
        if prob(0.6) then x := 1 - x fi;
        if x = 1 then y := y + 1 fi
      od

A source without section headers is taken as a bare program.  ``fi`` may be
omitted when the branch is closed by ``od``/``done``/``else`` or the end of
input.  ``flip(p)``, ``prob(p)`` and ``bernoulli(p)`` are interchangeable as
probabilistic conditions.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional

from . import conditions as cnd
from .conditions import Constraint, Formula
from .distributions import Distribution, UnsupportedDistribution, make_distribution
from .poly import Poly


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{msg} at line {line}, column {col}" if line else msg)
        self.line = line
        self.col = col
        self.msg = msg


# -- AST ------------------------------------------------------------------

_ids = itertools.count(1)


@dataclass(frozen=True)
class Pos:
    line: int
    col: int


@dataclass(frozen=True, eq=False)
class Stmt:
    pos: Pos
    sid: int = field(default_factory=lambda: next(_ids), init=False)


@dataclass(frozen=True, eq=False)
class Skip(Stmt):
    pass


@dataclass(frozen=True, eq=False)
class Assign(Stmt):
    var: str = ""
    expr: Poly = None


@dataclass(frozen=True, eq=False)
class Sample(Stmt):
    var: str = ""
    dist: Distribution = None


@dataclass(frozen=True, eq=False)
class ProbIf(Stmt):
    p: Fraction = Fraction(0)
    then: tuple = ()
    orelse: tuple = ()


@dataclass(frozen=True, eq=False)
class If(Stmt):
    cond: Formula = None
    then: tuple = ()
    orelse: tuple = ()


@dataclass(frozen=True, eq=False)
class While(Stmt):
    cond: object = None  # Formula, or Fraction for a probabilistic loop guard
    body: tuple = ()
    label: Optional[str] = None


@dataclass
class ProgramAst:
    variables: list[str]
    init: dict  # var -> Distribution | Fraction
    support: Optional[Formula]
    invariants: dict  # label -> Formula
    body: tuple
    declared_vars: bool = False

    def walk(self) -> Iterator[Stmt]:
        yield from walk(self.body)


def walk(stmts) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, (If, ProbIf)):
            yield from walk(s.then)
            yield from walk(s.orelse)
        elif isinstance(s, While):
            yield from walk(s.body)


# -- lexer ----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?|\.\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>:=|<=|>=|==|!=|<>|&&|\|\||[-+*/^()<>=;,:~!&|{}\[\]])
    """,
    re.VERBOSE,
)

_UNICODE = {"−": "-", "≤": "<=", "≥": ">=", "≠": "!=", "∧": "&", "∨": "|", "¬": "!", "×": "*", "·": "*"}

KEYWORDS = {
    "while", "do", "od", "done", "if", "then", "else", "fi", "skip", "true", "false",
    "and", "or", "not",
}
SECTIONS = {"vars", "init", "support", "invariant", "program"}
PROB_CONDS = {"prob", "flip", "bernoulli"}


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Tok]:
    for k, v in _UNICODE.items():
        source = source.replace(k, v)
    toks = []
    i, line, col = 0, 1, 1
    while i < len(source):
        m = _TOKEN.match(source, i)
        if not m:
            raise ParseError(f"unexpected character {source[i]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                if kind == "op":
                    text = {"&&": "&", "||": "|", "<>": "!="}.get(text, text)
                toks.append(Tok(kind, text, line, col))
            col += len(text)
        i = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


# -- parser ---------------------------------------------------------------


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("id", "op") and t.text in texts

    def error(self, msg: str, tok: Tok | None = None):
        tok = tok or self.tok
        where = repr(tok.text) if tok.kind != "eof" else "end of input"
        raise ParseError(f"{msg} (found {where})", tok.line, tok.col)

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self) -> Tok:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error("expected identifier")
        self.i += 1
        return t

    # expressions ------------------------------------------------------
    def expr(self) -> Poly:
        p = self.term()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Poly:
        p = self.unary()
        while self.at("*", "/"):
            op = self.tok.text
            tok = self.tok
            self.i += 1
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if not q.is_constant():
                    self.error("division by a non-constant expression is not polynomial", tok)
                c = q.constant_term()
                if c == 0:
                    self.error("division by zero", tok)
                p = p * (1 / Fraction(c))
        return p

    def unary(self) -> Poly:
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Poly:
        base = self.atom()
        if self.at("^"):
            tok = self.tok
            self.i += 1
            e = self.unary()
            if not e.is_constant() or Fraction(e.constant_term()).denominator != 1 or e.constant_term() < 0:
                self.error("exponent must be a non-negative integer constant", tok)
            return base ** int(e.constant_term())
        return base

    def atom(self) -> Poly:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Poly.const(Fraction(t.text))
        if self.accept("("):
            p = self.expr()
            self.expect(")")
            return p
        if t.kind == "id" and t.text not in KEYWORDS:
            if self.peek().text == "(" and self.peek().kind == "op":
                self.error(f"function call {t.text!r} is not a polynomial expression")
            self.i += 1
            return Poly.var(t.text)
        self.error("expected expression")

    def number(self) -> Fraction:
        t = self.tok
        p = self.expr()
        if not p.is_constant():
            self.error("expected a numeric constant", t)
        return Fraction(p.constant_term())

    # conditions -------------------------------------------------------
    def condition(self) -> Formula:
        f = self.conj()
        while self.at("or", "|"):
            self.i += 1
            f = cnd.Or((f, self.conj()))
        return f

    def conj(self) -> Formula:
        f = self.neg()
        while self.at("and", "&"):
            self.i += 1
            f = cnd.And((f, self.neg()))
        return f

    def neg(self) -> Formula:
        if self.at("not", "!"):
            self.i += 1
            return cnd.Not(self.neg())
        return self.cmp()

    def cmp(self) -> Formula:
        if self.accept("true"):
            return cnd.TrueF()
        if self.accept("false"):
            return cnd.FalseF()
        if self.at("("):
            # Either a parenthesized condition or an arithmetic sub-expression.
            save = self.i
            self.i += 1
            try:
                f = self.condition()
                self.expect(")")
                if not self.at("<=", ">=", "<", ">", "=", "==", "!="):
                    return f
            except ParseError:
                pass
            self.i = save
        if self.tok.kind == "id" and self.tok.text.lower() in PROB_CONDS and self.peek().text == "(":
            self.error("probabilistic condition must be the whole guard of if/while")
        lhs = self.expr()
        if not self.at("<=", ">=", "<", ">", "=", "==", "!="):
            self.error("expected comparison operator")
        op = self.tok.text
        self.i += 1
        rhs = self.expr()
        return Constraint.compare(lhs, op, rhs)

    def prob_cond(self) -> Optional[Fraction]:
        t = self.tok
        if t.kind == "id" and t.text.lower() in PROB_CONDS and self.peek().text == "(":
            self.i += 2
            p_tok = self.tok
            p = self.number()
            self.expect(")")
            if not 0 <= p <= 1:
                raise ParseError(f"probability {p} outside [0, 1]", p_tok.line, p_tok.col)
            return p
        return None

    # distributions ----------------------------------------------------
    def distribution(self) -> Distribution:
        t = self.ident()
        self.expect("(")
        args: list = []
        if t.text.lower() == "discrete":
            while True:
                v = self.number()
                self.expect(":")
                p = self.number()
                args.append((v, p))
                if not self.accept(","):
                    break
        else:
            while not self.at(")"):
                args.append(self.number())
                if not self.accept(","):
                    break
        self.expect(")")
        try:
            return make_distribution(t.text, args)
        except UnsupportedDistribution as e:
            raise ParseError(str(e), t.line, t.col) from None
        except ValueError as e:
            raise ParseError(str(e), t.line, t.col) from None

    # statements -------------------------------------------------------
    def block_end(self) -> bool:
        return self.tok.kind == "eof" or self.at("od", "done", "else", "fi") or self.at_section()

    def at_section(self) -> bool:
        t = self.tok
        if t.kind != "id" or t.text not in SECTIONS:
            return False
        nxt = self.peek().text
        return nxt == ":" or (t.text == "invariant" and nxt == "(")

    def seq(self) -> tuple:
        stmts = [self.stmt()]
        while self.accept(";"):
            if self.block_end():
                break
            stmts.append(self.stmt())
        return tuple(stmts)

    def stmt(self) -> Stmt:
        t = self.tok
        pos = Pos(t.line, t.col)
        if self.accept("skip"):
            return Skip(pos)
        if self.at("while"):
            return self.while_stmt(None)
        if self.at("if"):
            return self.if_stmt()
        if t.kind == "id" and t.text not in KEYWORDS:
            nxt = self.peek()
            if nxt.text == ":" and self.peek(2).text == "while":
                self.i += 2
                return self.while_stmt(t.text)
            self.i += 1
            if self.accept(":="):
                return Assign(pos, var=t.text, expr=self.expr())
            if self.accept("~"):
                return Sample(pos, var=t.text, dist=self.distribution())
            self.error("expected ':=' or '~'")
        self.error("expected statement")

    def while_stmt(self, label) -> While:
        t = self.expect("while")
        pos = Pos(t.line, t.col)
        if self.at("do"):
            self.error("missing loop condition")
        p = self.prob_cond()
        cond = p if p is not None else self.condition()
        self.expect("do")
        body = self.seq()
        if not self.accept("od") and not self.accept("done"):
            self.error("expected 'od' or 'done'")
        return While(pos, cond=cond, body=body, label=label)

    def if_stmt(self) -> Stmt:
        t = self.expect("if")
        pos = Pos(t.line, t.col)
        if self.at("then"):
            self.error("missing condition")
        p = self.prob_cond()
        cond = None if p is not None else self.condition()
        self.expect("then")
        then = self.seq()
        orelse: tuple = ()
        if self.accept("else"):
            orelse = self.seq()
        if not self.accept("fi"):
            if not (self.tok.kind == "eof" or self.at("od", "done", "else") or self.at_section()):
                self.error("expected 'fi'")
        if p is not None:
            return ProbIf(pos, p=p, then=then, orelse=orelse)
        return If(pos, cond=cond, then=then, orelse=orelse)

    # sections ---------------------------------------------------------
    def program(self) -> ProgramAst:
        variables: list[str] = []
        declared = False
        init: dict = {}
        support = None
        invariants: dict = {}
        body: tuple | None = None
        if not self.at_section():
            body = self.seq()
        while self.tok.kind != "eof":
            if not self.at_section():
                self.error("expected a section header")
            name = self.ident().text
            if name == "invariant":
                self.expect("(")
                label = self.ident().text
                self.expect(")")
                self.expect(":")
                if label in invariants:
                    self.error(f"duplicate invariant for {label!r}")
                invariants[label] = self.condition()
                self.accept(";")
                continue
            self.expect(":")
            if name == "vars":
                declared = True
                variables.append(self.ident().text)
                while self.accept(","):
                    variables.append(self.ident().text)
                self.accept(";")
            elif name == "init":
                while not self.at_section() and self.tok.kind != "eof":
                    vt = self.ident()
                    if self.accept(":="):
                        init[vt.text] = self.number()
                    elif self.accept("~"):
                        init[vt.text] = self.distribution()
                    else:
                        self.error("expected ':=' or '~' in init block")
                    if not self.accept(";") and not self.accept(","):
                        break
            elif name == "support":
                support = self.condition()
                self.accept(";")
            elif name == "program":
                if body is not None:
                    self.error("duplicate program section")
                body = self.seq()
        if body is None:
            raise ParseError("missing program section")
        ast = ProgramAst(variables, init, support, invariants, body, declared)
        validate(ast)
        return ast


def _formula_vars(f) -> set[str]:
    if isinstance(f, cnd.Atom):
        return f.c.variables()
    if isinstance(f, cnd.Not):
        return _formula_vars(f.f)
    if isinstance(f, (cnd.And, cnd.Or)):
        return set().union(*(_formula_vars(p) for p in f.parts)) if f.parts else set()
    return set()


def validate(ast: ProgramAst) -> None:
    """Check declarations; infers the variable list when ``vars:`` is absent."""
    used: list[str] = []

    def note(names, pos: Pos | None = None):
        for n in sorted(names):
            if ast.declared_vars and n not in ast.variables:
                raise ParseError(f"undeclared variable {n!r}", pos.line if pos else 0, pos.col if pos else 0)
            if n not in used:
                used.append(n)

    for s in ast.walk():
        if isinstance(s, Assign):
            note({s.var} | s.expr.variables(), s.pos)
        elif isinstance(s, Sample):
            note({s.var}, s.pos)
        elif isinstance(s, If):
            note(_formula_vars(s.cond), s.pos)
        elif isinstance(s, While) and not isinstance(s.cond, Fraction):
            note(_formula_vars(s.cond), s.pos)
    note(set(ast.init))
    for f in ast.invariants.values():
        note(_formula_vars(f))
    if ast.support is not None:
        note(_formula_vars(ast.support))
    if not ast.declared_vars:
        ast.variables = used
    labels = [s.label for s in ast.walk() if isinstance(s, While) and s.label]
    if len(labels) != len(set(labels)):
        raise ParseError("duplicate loop label")


def parse_program(source: str) -> ProgramAst:
    """Parse program text into a validated :class:`ProgramAst`."""
    return Parser(source).program()


def _parse_whole(source: str, fn):
    p = Parser(source)
    out = fn(p)
    if p.tok.kind != "eof":
        p.error("trailing input")
    return out


def parse_expression(source: str) -> Poly:
    return _parse_whole(source, Parser.expr)


def parse_condition(source: str) -> Formula:
    return _parse_whole(source, Parser.condition)


def parse_distribution(source: str) -> Distribution:
    return _parse_whole(source, Parser.distribution)
