"""Core syntax objects: terms, atoms, formulas, clauses, annotated disjunctions, programs.

Terms are plain Python values: `str` for constant symbols, `int` for integer
constants, and `Var` for variables.  Atoms and formulas are immutable and
hashable so they can key caches.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CyclicProgramError, LogicError, UnboundVariableError

PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


Term = "Var | str | int"


def term_str(t) -> str:
    return str(t)


def is_ground_term(t) -> bool:
    return not isinstance(t, Var)


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_ground(self) -> bool:
        return all(is_ground_term(a) for a in self.args)

    def __str__(self):
        if not self.args:
            return self.pred
        return f"{self.pred}({', '.join(term_str(a) for a in self.args)})"


# ---------------------------------------------------------------------------
# Formulas: an Atom is itself a formula; Neg/Conj/Disj build compound ones.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Neg:
    inner: "Formula"

    def __str__(self):
        return f"\\+{self.inner}"


@dataclass(frozen=True)
class Conj:
    parts: tuple

    def __str__(self):
        return ", ".join(str(p) for p in self.parts)


@dataclass(frozen=True)
class Disj:
    parts: tuple

    def __str__(self):
        return " ; ".join(str(p) for p in self.parts)


Formula = "Atom | Neg | Conj | Disj"


def formula_atoms(f):
    """Yield every atom occurring in the formula."""
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Neg):
        yield from formula_atoms(f.inner)
    elif isinstance(f, (Conj, Disj)):
        for p in f.parts:
            yield from formula_atoms(p)
    else:
        raise TypeError(f"not a formula: {f!r}")


def formula_is_ground(f) -> bool:
    return all(a.is_ground for a in formula_atoms(f))


def conjunction(parts) -> "Formula":
    parts = tuple(parts)
    if len(parts) == 1:
        return parts[0]
    return Conj(parts)


# ---------------------------------------------------------------------------
# Arithmetic expressions inside clause bodies (`is` and comparisons).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinExpr:
    op: str  # '+', '-', '*', '^'
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


Expr = "Var | int | BinExpr"


def expr_vars(e):
    if isinstance(e, Var):
        yield e
    elif isinstance(e, BinExpr):
        yield from expr_vars(e.left)
        yield from expr_vars(e.right)


@dataclass(frozen=True)
class IsConstraint:
    var: Var
    expr: "Expr"

    def __str__(self):
        return f"{self.var} is {self.expr}"


@dataclass(frozen=True)
class Comparison:
    op: str  # '=:=', '=\\=', '<', '>', '=<', '>='
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


BodyElement = "Atom | IsConstraint | Comparison"


@dataclass(frozen=True)
class Clause:
    head: Atom
    body: tuple = ()

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


LEARNED = None  # probability slot marker for `nn::...` annotations


@dataclass(frozen=True)
class AnnotatedDisjunction:
    """One mutually exclusive, exhaustive group of probabilistic choices.

    ``choices[i] is None`` encodes the implicit complement of a single
    probabilistic fact (``p::f.`` desugars to the two-choice group
    ``(f, None)``).  ``probs[i]`` is a float for a literal annotation or
    ``LEARNED`` for an ``nn`` slot supplied at inference time.
    """

    choices: tuple
    probs: tuple
    group_id: int

    @property
    def size(self) -> int:
        return len(self.choices)

    @property
    def is_learned(self) -> bool:
        return any(p is LEARNED for p in self.probs)


@dataclass(frozen=True)
class Program:
    ads: tuple
    clauses: tuple
    queries: tuple = ()
    evidence: "Formula | None" = None
    text: str = ""
    group_offsets: tuple = field(default=(), compare=False)

    @property
    def n_slots(self) -> int:
        return sum(ad.size for ad in self.ads)

    def default_probabilities(self):
        """Literal annotation vector; raises if any slot is learned."""
        values = []
        for ad in self.ads:
            if ad.is_learned:
                raise LogicError(
                    f"group {ad.group_id} has learned probability slots; no literal defaults exist"
                )
            values.extend(ad.probs)
        return values


def make_program(ads, clauses, queries=(), evidence=None, text="") -> Program:
    """Assemble and validate a Program; assigns contiguous slot offsets per group."""
    offsets = []
    off = 0
    for ad in ads:
        offsets.append(off)
        off += ad.size
    prog = Program(
        ads=tuple(ads),
        clauses=tuple(clauses),
        queries=tuple(queries),
        evidence=evidence,
        text=text,
        group_offsets=tuple(offsets),
    )
    _validate(prog)
    return prog


def _validate(prog: Program):
    seen_choice_atoms = set()
    for ad in prog.ads:
        lit = [p for p in ad.probs if p is not LEARNED]
        if lit and len(lit) != ad.size:
            raise LogicError(
                f"group {ad.group_id} mixes literal and learned probability annotations"
            )
        if lit:
            for p in lit:
                if not (0.0 <= p <= 1.0):
                    raise LogicError(f"probability {p} outside [0, 1] in group {ad.group_id}")
            if abs(sum(lit) - 1.0) > PROB_SUM_TOL:
                raise LogicError(
                    f"group {ad.group_id} probabilities sum to {sum(lit)}, expected 1"
                )
        for atom in ad.choices:
            if atom is None:
                continue
            if not atom.is_ground:
                raise LogicError(f"probabilistic choice {atom} is not ground")
            if atom in seen_choice_atoms:
                raise LogicError(f"probabilistic choice {atom} appears in more than one group")
            seen_choice_atoms.add(atom)

    _check_acyclic(prog)
    for clause in prog.clauses:
        _check_safety(clause)


def predicate_topo_order(prog: Program):
    """Topological order of clause-head predicates; raises on recursion."""
    heads = {}
    for c in prog.clauses:
        heads.setdefault(c.head.pred, []).append(c)
    deps = {p: set() for p in heads}
    for c in prog.clauses:
        for el in c.body:
            if isinstance(el, Atom) and el.pred in heads:
                deps[c.head.pred].add(el.pred)

    order, done, in_progress = [], set(), set()

    def visit(p):
        if p in done:
            return
        if p in in_progress:
            raise CyclicProgramError(f"recursive predicate dependency through `{p}`")
        in_progress.add(p)
        for q in sorted(deps[p]):
            visit(q)
        in_progress.discard(p)
        done.add(p)
        order.append(p)

    for p in sorted(heads):
        visit(p)
    return order


def _check_acyclic(prog: Program):
    predicate_topo_order(prog)


def _check_safety(clause: Clause):
    """Left-to-right safety: every constraint/head variable must already be bound."""
    bound = set()
    for el in clause.body:
        if isinstance(el, Atom):
            bound.update(a for a in el.args if isinstance(a, Var))
        elif isinstance(el, IsConstraint):
            for v in expr_vars(el.expr):
                if v not in bound:
                    raise UnboundVariableError(
                        f"variable {v} in `{el}` is not bound by an earlier body atom ({clause})"
                    )
            bound.add(el.var)
        elif isinstance(el, Comparison):
            for side in (el.left, el.right):
                for v in expr_vars(side):
                    if v not in bound:
                        raise UnboundVariableError(
                            f"variable {v} in `{el}` is not bound by an earlier body atom ({clause})"
                        )
    for a in clause.head.args:
        if isinstance(a, Var) and a not in bound:
            raise UnboundVariableError(
                f"head variable {a} of `{clause}` is not bound by the body"
            )
