"""Grounding: instantiate every clause over the finite Herbrand domain.

Candidate ground atoms come from the annotated-disjunction choices, optional
caller-declared domain facts, and (in dependency order) the heads of already
grounded clauses.  Arithmetic (`is`) and comparison constraints are evaluated
during instantiation and eliminated; bindings violating them are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import GroundingError
from .syntax import (
    Atom,
    BinExpr,
    Clause,
    Comparison,
    IsConstraint,
    Program,
    Var,
    predicate_topo_order,
)


@dataclass(frozen=True)
class GroundClause:
    head: Atom
    body: tuple  # ground atoms only; constraints already evaluated away

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


@dataclass(frozen=True)
class GroundProgram:
    """A fully ground program plus cached inference state (see worlds.py)."""

    ads: tuple
    clauses: tuple  # GroundClause
    queries: tuple
    evidence: object
    domain_facts: tuple
    group_offsets: tuple
    text: str = ""
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_groups(self) -> int:
        return len(self.ads)

    @property
    def n_slots(self) -> int:
        return sum(ad.size for ad in self.ads)

    @property
    def known_predicates(self):
        preds = {(f.pred, f.arity) for f in self.domain_facts}
        for ad in self.ads:
            preds.update((a.pred, a.arity) for a in ad.choices if a is not None)
        preds.update((c.head.pred, c.head.arity) for c in self.clauses)
        return preds


def _eval_expr(expr, binding):
    if isinstance(expr, int):
        return expr
    if isinstance(expr, Var):
        val = binding[expr]
        if not isinstance(val, int):
            raise GroundingError(f"arithmetic on non-integer term {val!r} for {expr}")
        return val
    if isinstance(expr, BinExpr):
        left = _eval_expr(expr.left, binding)
        right = _eval_expr(expr.right, binding)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if expr.op == "^":
            return left**right  # 0^0 == 1 by Python convention, kept deliberately
        raise GroundingError(f"unknown arithmetic operator {expr.op!r}")
    raise GroundingError(f"cannot evaluate {expr!r}")


_CMP = {
    "=:=": lambda a, b: a == b,
    "=\\=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "=<": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}


def _unify_args(pattern, ground, binding):
    """Match pattern args against a ground atom's args; returns extended binding or None."""
    new = None
    for p, g in zip(pattern, ground):
        if isinstance(p, Var):
            bound = (new or binding).get(p)
            if bound is None:
                if new is None:
                    new = dict(binding)
                new[p] = g
            elif bound != g:
                return None
        elif p != g:
            return None
    return new if new is not None else binding


def _substitute(atom: Atom, binding) -> Atom:
    if atom.is_ground:
        return atom
    return Atom(atom.pred, tuple(binding[a] if isinstance(a, Var) else a for a in atom.args))


def _bindings(body, candidates, binding):
    """Yield every binding satisfying the body left to right."""
    if not body:
        yield binding
        return
    el, rest = body[0], body[1:]
    if isinstance(el, Atom):
        for cand in candidates.get((el.pred, el.arity), ()):
            b2 = _unify_args(el.args, cand.args, binding)
            if b2 is not None:
                yield from _bindings(rest, candidates, b2)
    elif isinstance(el, IsConstraint):
        val = _eval_expr(el.expr, binding)
        bound = binding.get(el.var)
        if bound is None:
            b2 = dict(binding)
            b2[el.var] = val
            yield from _bindings(rest, candidates, b2)
        elif bound == val:
            yield from _bindings(rest, candidates, binding)
    elif isinstance(el, Comparison):
        if _CMP[el.op](_eval_expr(el.left, binding), _eval_expr(el.right, binding)):
            yield from _bindings(rest, candidates, binding)
    else:
        raise GroundingError(f"unsupported body element {el!r}")


def ground(program: Program, domains=None) -> GroundProgram:
    """Ground a program.

    ``domains`` optionally maps predicate name -> iterable of argument tuples
    (or bare constants for arity 1); each entry becomes an always-true ground
    fact.  The restricted dialect rarely needs this: variable domains derive
    from the annotated-disjunction choice atoms.
    """
    domain_facts = []
    for pred, rows in (domains or {}).items():
        for row in rows:
            args = row if isinstance(row, tuple) else (row,)
            fact = Atom(pred, tuple(args))
            if not fact.is_ground:
                raise GroundingError(f"domain fact {fact} is not ground")
            domain_facts.append(fact)

    candidates = {}

    def add_candidate(atom):
        candidates.setdefault((atom.pred, atom.arity), []).append(atom)

    seen = set()

    def add_unique(atom):
        if atom not in seen:
            seen.add(atom)
            add_candidate(atom)

    for ad in program.ads:
        for choice in ad.choices:
            if choice is not None:
                add_unique(choice)
    for fact in domain_facts:
        add_unique(fact)

    head_preds = {c.head.pred for c in program.clauses}
    for clause in program.clauses:
        for el in clause.body:
            if isinstance(el, Atom):
                key = (el.pred, el.arity)
                if el.pred not in head_preds and key not in candidates:
                    raise GroundingError(
                        f"predicate {el.pred}/{el.arity} in `{clause}` has no declared domain"
                    )

    order = predicate_topo_order(program)
    by_head = {}
    for clause in program.clauses:
        by_head.setdefault(clause.head.pred, []).append(clause)

    ground_clauses = []
    seen_clauses = set()
    for pred in order:
        for clause in by_head[pred]:
            for binding in _bindings(clause.body, candidates, {}):
                head = _substitute(clause.head, binding)
                body_atoms = tuple(
                    _substitute(el, binding) for el in clause.body if isinstance(el, Atom)
                )
                gc = GroundClause(head, body_atoms)
                if gc not in seen_clauses:
                    seen_clauses.add(gc)
                    ground_clauses.append(gc)
                add_unique(head)

    return GroundProgram(
        ads=program.ads,
        clauses=tuple(ground_clauses),
        queries=program.queries,
        evidence=program.evidence,
        domain_facts=tuple(domain_facts),
        group_offsets=program.group_offsets,
        text=program.text,
    )
