"""Parser for the probabilistic-logic dialect.

Grammar (UTF-8 text, `%` comments to end of line)::

    program    : statement*
    statement  : ad | clause | fact | directive
    ad         : annot (';' annot)* '.'
    annot      : prob '::' atom
    prob       : FLOAT | INT | 'nn'          # 'nn' marks a learned slot
    clause     : atom ':-' body '.'
    fact       : atom '.'
    directive  : 'query' '(' atom ')' '.'
               | 'evidence' '(' literal ')' '.'
    body       : belem (',' belem)*
    belem      : VAR 'is' expr | expr CMP expr | atom
    CMP        : '=:=' | '=\\=' | '=<' | '>=' | '<' | '>'
    expr       : mul (('+'|'-') mul)*
    mul        : unary ('*' unary)*
    unary      : '-' unary | primary ('^' unary)?   # '^' right-associative
    primary    : INT | VAR | '(' expr ')'
    literal    : atom | '\\+' atom
    atom       : LIDENT ('(' term (',' term)* ')')?
    term       : LIDENT | VAR | INT | '-' INT

Constants are lowercase identifiers or integers; variables begin uppercase
(or underscore).  A single annotated fact ``p::f.`` desugars to the
two-choice group ``(f, complement)`` with probabilities ``(p, 1 - p)``.
"""
from __future__ import annotations

import re

from .errors import ParseError
from .syntax import (
    LEARNED,
    AnnotatedDisjunction,
    Atom,
    BinExpr,
    Clause,
    Comparison,
    Conj,
    IsConstraint,
    Neg,
    Var,
    conjunction,
    make_program,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<lident>[a-z][A-Za-z0-9_]*)
  | (?P<uident>[A-Z_][A-Za-z0-9_]*)
  | (?P<op>:-|::|=:=|=\\=|=<|>=|\\\+|[;.,()<>+\-*^])
    """,
    re.VERBOSE,
)

_CMP_OPS = ("=:=", "=\\=", "=<", ">=", "<", ">")


def _as_formula(arg):
    """Directive arguments: bare lowercase constants are propositional atoms."""
    if isinstance(arg, str):
        return Atom(arg)
    return arg


class _Token:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col

    def __repr__(self):
        return f"_Token({self.kind}, {self.value!r})"


def _tokenize(text):
    tokens = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, m.start() - line_start + 1))
        line += value.count("\n")
        if "\n" in value:
            line_start = m.start() + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0
        self.text = text

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead=0):
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self):
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            raise ParseError(f"expected {want!r}, found {tok.value or 'end of input'!r}", tok.line, tok.col)
        return tok

    def at_op(self, value):
        tok = self.peek()
        return tok.kind == "op" and tok.value == value

    def error(self, msg):
        tok = self.peek()
        raise ParseError(msg, tok.line, tok.col)

    # -- grammar ------------------------------------------------------------

    def parse_program(self):
        ads, clauses, queries = [], [], []
        evidence_parts = []
        while self.peek().kind != "eof":
            kind = self._statement_kind()
            if kind == "ad":
                ads.append(self._annotated_disjunction(group_id=len(ads)))
            else:
                atom = self._atom()
                if self.at_op(":-"):
                    self.next()
                    body = self._body()
                    self.expect("op", ".")
                    clauses.append(Clause(atom, tuple(body)))
                elif atom.pred == "query" and atom.arity == 1:
                    self.expect("op", ".")
                    queries.append(_as_formula(atom.args[0]))
                elif atom.pred == "evidence" and atom.arity == 1:
                    self.expect("op", ".")
                    evidence_parts.append(_as_formula(atom.args[0]))
                else:
                    self.expect("op", ".")
                    clauses.append(Clause(atom, ()))
        evidence = conjunction(evidence_parts) if evidence_parts else None
        return make_program(ads, clauses, queries, evidence, text=self.text)

    def _statement_kind(self):
        tok = self.peek()
        if tok.kind in ("float", "int") and self.peek(1).kind == "op" and self.peek(1).value == "::":
            return "ad"
        if tok.kind == "lident" and tok.value == "nn" and self.peek(1).kind == "op" and self.peek(1).value == "::":
            return "ad"
        return "other"

    def _annotated_disjunction(self, group_id):
        choices, probs = [], []
        while True:
            tok = self.peek()
            if tok.kind == "lident" and tok.value == "nn":
                self.next()
                probs.append(LEARNED)
            elif tok.kind in ("float", "int"):
                self.next()
                probs.append(float(tok.value))
            else:
                self.error("expected a probability annotation")
            self.expect("op", "::")
            choices.append(self._atom())
            if self.at_op(";"):
                self.next()
                continue
            self.expect("op", ".")
            break
        if len(choices) == 1:
            # single probabilistic fact: add the implicit complement choice
            p = probs[0]
            probs.append(LEARNED if p is LEARNED else 1.0 - p)
            choices.append(None)
        return AnnotatedDisjunction(tuple(choices), tuple(probs), group_id)

    def _body(self):
        elems = [self._body_element()]
        while self.at_op(","):
            self.next()
            elems.append(self._body_element())
        return elems

    def _body_element(self):
        tok = self.peek()
        if tok.kind == "uident":
            if self.peek(1).kind == "lident" and self.peek(1).value == "is":
                var = Var(self.next().value)
                self.next()  # 'is'
                return IsConstraint(var, self._expr())
            return self._comparison()
        if tok.kind == "int" or (tok.kind == "op" and tok.value in ("(", "-")):
            return self._comparison()
        if tok.kind == "lident":
            return self._atom()
        self.error("expected a body atom or constraint")

    def _comparison(self):
        left = self._expr()
        tok = self.peek()
        if tok.kind == "op" and tok.value in _CMP_OPS:
            self.next()
            right = self._expr()
            return Comparison(tok.value, left, right)
        self.error("expected a comparison operator")

    # expression parsing with the usual precedence; '^' binds tightest
    def _expr(self):
        left = self._mul()
        while self.peek().kind == "op" and self.peek().value in ("+", "-"):
            op = self.next().value
            left = BinExpr(op, left, self._mul())
        return left

    def _mul(self):
        left = self._unary()
        while self.at_op("*"):
            self.next()
            left = BinExpr("*", left, self._unary())
        return left

    def _unary(self):
        if self.at_op("-"):
            self.next()
            inner = self._unary()
            if isinstance(inner, int):
                return -inner
            return BinExpr("-", 0, inner)
        base = self._primary()
        if self.at_op("^"):
            self.next()
            return BinExpr("^", base, self._unary())
        return base

    def _primary(self):
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return int(tok.value)
        if tok.kind == "uident":
            self.next()
            return Var(tok.value)
        if self.at_op("("):
            self.next()
            e = self._expr()
            self.expect("op", ")")
            return e
        self.error("expected an integer, variable, or parenthesized expression")

    def _literal(self):
        if self.at_op("\\+"):
            self.next()
            return Neg(self._atom())
        return self._atom()

    def _atom(self):
        tok = self.expect("lident")
        if not self.at_op("("):
            return Atom(tok.value)
        self.next()
        args = [self._term()]
        while self.at_op(","):
            self.next()
            args.append(self._term())
        self.expect("op", ")")
        return Atom(tok.value, tuple(args))

    def _term(self):
        tok = self.peek()
        if tok.kind == "lident":
            # allow nested atoms only where a directive argument is expected
            if self.peek(1).kind == "op" and self.peek(1).value == "(":
                return self._atom()
            self.next()
            return tok.value
        if tok.kind == "uident":
            self.next()
            return Var(tok.value)
        if tok.kind == "int":
            self.next()
            return int(tok.value)
        if self.at_op("-") and self.peek(1).kind == "int":
            self.next()
            return -int(self.next().value)
        if self.at_op("\\+"):
            self.next()
            return Neg(self._atom())
        self.error("expected a term")


def parse_program(text: str):
    """Parse dialect source text into a validated Program."""
    return _Parser(text).parse_program()


def parse_formula(text: str):
    """Parse a comma-separated conjunction of (optionally negated) literals."""
    p = _Parser(text)
    parts = [p._literal()]
    while p.at_op(","):
        p.next()
        parts.append(p._literal())
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"unexpected trailing input {tok.value!r}", tok.line, tok.col)
    return conjunction(parts)


def parse_ground_atom(text: str):
    """Parse a single ground atom, e.g. ``add(img, 2)``."""
    f = parse_formula(text)
    if not isinstance(f, Atom):
        raise ParseError("expected a single positive atom", 1, 1)
    return f
