"""Parser and grounding behavior of the logic dialect."""
import pytest

from vael.logic import (
    Atom,
    CyclicProgramError,
    GroundingError,
    LogicError,
    ParseError,
    UnboundVariableError,
    Var,
    addition_program,
    ground,
    parse_formula,
    parse_program,
)
from vael.logic.syntax import Neg


class TestParseProgram:
    def test_two_digit_addition_listing(self):
        prog = parse_program(
            "nn::digit(img,1,0); nn::digit(img,1,1).\n"
            "nn::digit(img,2,0); nn::digit(img,2,1).\n"
            "add(img,Z) :- digit(img,1,Y1), digit(img,2,Y2), Z is Y1 + Y2.\n"
        )
        assert len(prog.ads) == 2
        assert all(ad.size == 2 for ad in prog.ads)
        assert len(prog.clauses) == 1
        assert prog.clauses[0].head.pred == "add"
        assert prog.clauses[0].head.arity == 2
        # slot layout follows source order of the groups
        assert prog.group_offsets == (0, 2)

    def test_single_fact_gets_implicit_complement(self):
        prog = parse_program("0.5::f. q :- f.")
        assert len(prog.ads) == 1
        ad = prog.ads[0]
        assert ad.size == 2
        assert ad.choices[0] == Atom("f")
        assert ad.choices[1] is None
        assert ad.probs == (0.5, 0.5)
        assert len(prog.clauses) == 1

    def test_self_recursion_rejected(self):
        with pytest.raises(CyclicProgramError):
            parse_program("a :- a.")

    def test_mutual_recursion_rejected(self):
        with pytest.raises(CyclicProgramError):
            parse_program("a :- b. b :- a.")

    def test_syntax_error_carries_position(self):
        with pytest.raises(ParseError) as exc:
            parse_program("q :- .")
        assert exc.value.line == 1
        assert exc.value.column == 6

    def test_unbound_head_variable(self):
        with pytest.raises(UnboundVariableError):
            parse_program("0.5::f. q(X) :- f.")

    def test_unbound_constraint_variable(self):
        with pytest.raises(UnboundVariableError):
            parse_program("0.5::f. q :- f, X < 3.")

    def test_is_binds_left_to_right(self):
        prog = parse_program("0.5::f(1). q(Z) :- f(Y), Z is Y + 1.")
        assert len(prog.clauses) == 1

    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(LogicError):
            parse_program("0.5::a; 0.4::b.")

    def test_mixed_learned_and_literal_rejected(self):
        with pytest.raises(LogicError):
            parse_program("nn::a; 0.5::b.")

    def test_duplicate_choice_atom_rejected(self):
        with pytest.raises(LogicError):
            parse_program("0.5::a; 0.5::b. 0.5::a; 0.5::c.")

    def test_query_and_evidence_directives(self):
        prog = parse_program(
            "nn::a; nn::b.\nquery(a).\nevidence(\\+b).\n"
        )
        assert prog.queries == (Atom("a"),)
        assert prog.evidence == Neg(Atom("b"))

    def test_comments_and_negative_integers(self):
        prog = parse_program(
            "% a comment\n0.5::f(-3). q(Z) :- f(Y), Z is Y * 2.\nquery(q(-6)).\n"
        )
        assert prog.ads[0].choices[0] == Atom("f", (-3,))
        assert prog.queries == (Atom("q", (-6,)),)


class TestParseFormula:
    def test_conjunction_of_literals(self):
        f = parse_formula("digit(img,1,0), \\+add(img,2)")
        parts = f.parts
        assert parts[0] == Atom("digit", ("img", 1, 0))
        assert parts[1] == Neg(Atom("add", ("img", 2)))

    def test_single_atom(self):
        assert parse_formula("add(img,2)") == Atom("add", ("img", 2))

    def test_trailing_garbage_rejected(self):
        with pytest.raises(ParseError):
            parse_formula("add(img,2) extra")


class TestGround:
    def test_example_pair_body(self, binary_digits_gp):
        wanted = (
            Atom("add", ("img", 1)),
            (Atom("digit", ("img", 1, 0)), Atom("digit", ("img", 2, 1))),
        )
        assert any((gc.head, gc.body) == wanted for gc in binary_digits_gp.clauses)

    def test_ground_program_is_fixed_point(self):
        text = "0.5::f. q :- f. r :- q, f."
        gp1 = ground(parse_program(text))
        # grounding a variable-free program returns the same clauses
        assert [(gc.head, gc.body) for gc in gp1.clauses] == [
            (Atom("q"), (Atom("f"),)),
            (Atom("r"), (Atom("q"), Atom("f"))),
        ]

    def test_ten_digit_grounding(self, ten_digit_gp):
        add_clauses = [gc for gc in ten_digit_gp.clauses if gc.head.pred == "add"]
        # one body per ordered digit pair
        assert len(add_clauses) == 100
        sums = {gc.head.args[1] for gc in add_clauses}
        assert sums == set(range(19))

    def test_constraint_filtering(self):
        prog = parse_program(
            "nn::f(0); nn::f(1); nn::f(2).\nbig(Y) :- f(Y), Y > 0.\n"
        )
        gp = ground(prog)
        heads = {gc.head for gc in gp.clauses}
        assert heads == {Atom("big", (1,)), Atom("big", (2,))}

    def test_undeclared_predicate(self):
        with pytest.raises(GroundingError):
            ground(parse_program("0.5::f. q :- f, mystery(3)."))

    def test_domain_facts(self):
        prog = parse_program("0.5::f. q(Y) :- allowed(Y), f.")
        gp = ground(prog, domains={"allowed": [1, 2]})
        heads = {gc.head for gc in gp.clauses}
        assert heads == {Atom("q", (1,)), Atom("q", (2,))}

    def test_arithmetic_on_symbol_rejected(self):
        prog = parse_program("0.5::f(img). q(Z) :- f(Y), Z is Y + 1.")
        with pytest.raises(GroundingError):
            ground(prog)

    def test_power_convention_zero_to_zero(self):
        prog = parse_program(
            "nn::d(1,0); nn::d(1,1).\nnn::d(2,0); nn::d(2,1).\n"
            "pow(Z) :- d(1,Y1), d(2,Y2), Z is Y1 ^ Y2.\n"
        )
        gp = ground(prog)
        assert any(
            gc.head == Atom("pow", (1,))
            and gc.body == (Atom("d", (1, 0)), Atom("d", (2, 0)))
            for gc in gp.clauses
        )


def test_task_program_builders_share_digit_groups():
    from vael.logic import multiplication_program, power_program, subtraction_program

    digits = [0, 1, 2]
    base = parse_program(addition_program(digits))
    for builder in (multiplication_program, subtraction_program, power_program):
        other = parse_program(builder(digits))
        assert other.ads == base.ads
        assert len(other.queries) == 1


def test_subtraction_labels_can_be_negative():
    from vael.logic import subtraction_program

    gp = ground(parse_program(subtraction_program([0, 1, 2])))
    labels = {gc.head.args[1] for gc in gp.clauses if gc.head.pred == "sub"}
    assert labels == {-2, -1, 0, 1, 2}
