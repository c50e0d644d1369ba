"""Exact inference over possible worlds: probabilities, evidence, sampling."""
import numpy as np
import pytest

from logic_oracle import brute_force_success
from randprog import random_formula, random_ground_program, random_probabilities
from vael.logic import (
    Atom,
    Conj,
    Disj,
    InconsistentEvidenceError,
    NonGroundFormulaError,
    UnknownPredicateError,
    Var,
    WorldCapExceededError,
    entails,
    enumerate_worlds,
    evidence_conditional,
    ground,
    make_program,
    parse_ground_atom,
    parse_program,
    sample_world,
    success_gradient,
    success_probability,
    world_probabilities,
    world_probability,
)
from vael.logic.syntax import AnnotatedDisjunction

UNIFORM4 = np.array([0.5, 0.5, 0.5, 0.5])
SKEWED4 = np.array([0.3, 0.7, 0.6, 0.4])


class TestEnumerateWorlds:
    def test_binary_digits_four_worlds(self, binary_digits_gp):
        worlds = enumerate_worlds(binary_digits_gp)
        assert len(worlds) == 4
        w11 = worlds[3]
        assert w11.choices == (1, 1)
        assert Atom("add", ("img", 2)) in w11.closure

    def test_single_choice_group_single_world(self):
        ads = [AnnotatedDisjunction((Atom("f"),), (1.0,), 0)]
        gp = ground(make_program(ads, []))
        assert len(enumerate_worlds(gp)) == 1

    def test_ten_digit_worlds(self, ten_digit_gp):
        worlds = enumerate_worlds(ten_digit_gp)
        assert len(worlds) == 100
        for w in worlds:
            adds = [a for a in w.closure if a.pred == "add"]
            assert len(adds) == 1
            # choice index equals digit value for 0..9 groups in order
            assert adds[0] == Atom("add", ("img", w.choices[0] + w.choices[1]))

    def test_world_cap(self, ten_digit_gp):
        with pytest.raises(WorldCapExceededError):
            enumerate_worlds(
                ground(parse_program("nn::a;nn::b.nn::c;nn::d.nn::e;nn::f.")), cap=7
            )


class TestWorldProbability:
    def test_uniform(self, binary_digits_gp):
        for w in enumerate_worlds(binary_digits_gp):
            assert world_probability(binary_digits_gp, UNIFORM4, w) == pytest.approx(0.25)

    def test_hand_product(self, binary_digits_gp):
        w10 = enumerate_worlds(binary_digits_gp)[2]  # choices (1, 0)
        assert world_probability(binary_digits_gp, SKEWED4, w10) == pytest.approx(0.42)

    def test_sums_to_one(self, binary_digits_gp, rng):
        for _ in range(20):
            p = random_probabilities(rng, binary_digits_gp)
            assert world_probabilities(binary_digits_gp, p).sum() == pytest.approx(1.0, abs=1e-9)

    def test_mixed_radix_order(self, binary_digits_gp):
        probs = world_probabilities(binary_digits_gp, SKEWED4)
        assert np.allclose(probs, [0.18, 0.12, 0.42, 0.28])


class TestSuccessProbability:
    def test_uniform_sum_one(self, binary_digits_gp):
        q = parse_ground_atom("add(img,1)")
        assert success_probability(binary_digits_gp, UNIFORM4, q) == pytest.approx(0.5)

    def test_tautology(self, binary_digits_gp):
        q = Disj(tuple(Atom("add", ("img", s)) for s in range(3)))
        assert success_probability(binary_digits_gp, UNIFORM4, q) == pytest.approx(1.0)

    def test_deterministic_program(self, binary_digits_gp):
        one_hot = np.array([0.0, 1.0, 0.0, 1.0])
        q = parse_ground_atom("add(img,2)")
        assert success_probability(binary_digits_gp, one_hot, q) == pytest.approx(1.0)

    def test_unknown_predicate(self, binary_digits_gp):
        with pytest.raises(UnknownPredicateError):
            success_probability(binary_digits_gp, UNIFORM4, Atom("mystery"))

    def test_disjoint_additivity(self, binary_digits_gp, rng):
        q0 = parse_ground_atom("add(img,0)")
        q2 = parse_ground_atom("add(img,2)")
        for _ in range(10):
            p = random_probabilities(rng, binary_digits_gp)
            both = success_probability(binary_digits_gp, p, Disj((q0, q2)))
            split = success_probability(binary_digits_gp, p, q0) + success_probability(
                binary_digits_gp, p, q2
            )
            assert abs(both - split) <= 1e-12


class TestOracleAgreement:
    def test_randomized_programs_match_brute_force(self, rng):
        for _ in range(60):
            gp = random_ground_program(rng)
            p = random_probabilities(rng, gp)
            q = random_formula(rng, gp, depth=2)
            got = success_probability(gp, p, q)
            want = brute_force_success(gp, p, q)
            assert abs(got - want) <= 1e-12


class TestSuccessGradient:
    def test_matches_finite_differences(self, rng):
        h = 1e-6
        checked = 0
        while checked < 100:
            gp = random_ground_program(rng)
            p = random_probabilities(rng, gp)
            q = random_formula(rng, gp, depth=1)
            grad = success_gradient(gp, p, q)
            for slot in range(gp.n_slots):
                lo, hi = p.copy(), p.copy()
                lo[slot] -= h
                hi[slot] += h
                fd = (
                    success_probability(gp, hi, q, validate=False)
                    - success_probability(gp, lo, q, validate=False)
                ) / (2 * h)
                denom = max(abs(fd), abs(grad[slot]), 1.0)
                assert abs(grad[slot] - fd) / denom <= 1e-5
            checked += 1

    def test_monotone_in_supporting_choice(self, binary_digits_gp):
        # the choice digit(img,1,1) appears in every world entailing add(img,2)
        q = parse_ground_atom("add(img,2)")
        p = SKEWED4.copy()
        base = success_probability(binary_digits_gp, p, q)
        bumped = p.copy()
        bumped[1] += 0.2
        bumped[0] -= 0.2
        assert success_probability(binary_digits_gp, bumped, q) >= base


class TestEvidenceConditional:
    def test_point_mass_on_coherent_world(self, binary_digits_gp):
        dist = evidence_conditional(
            binary_digits_gp, UNIFORM4, parse_ground_atom("add(img,2)")
        )
        assert np.allclose(dist.probabilities, [0.0, 0.0, 0.0, 1.0])
        w = dist.worlds[3]
        assert Atom("digit", ("img", 1, 1)) in w.closure
        assert Atom("digit", ("img", 2, 1)) in w.closure

    def test_empty_evidence_is_unconditional(self, binary_digits_gp, rng):
        p = random_probabilities(rng, binary_digits_gp)
        dist = evidence_conditional(binary_digits_gp, p, None)
        assert np.allclose(dist.probabilities, world_probabilities(binary_digits_gp, p))

    def test_renormalization(self, binary_digits_gp):
        dist = evidence_conditional(
            binary_digits_gp, UNIFORM4, parse_ground_atom("add(img,1)")
        )
        assert np.allclose(dist.probabilities, [0.0, 0.5, 0.5, 0.0])
        assert dist.normalizer == pytest.approx(0.5)

    def test_zero_probability_evidence(self, binary_digits_gp):
        one_hot = np.array([0.0, 1.0, 0.0, 1.0])
        with pytest.raises(InconsistentEvidenceError):
            evidence_conditional(binary_digits_gp, one_hot, parse_ground_atom("add(img,0)"))

    def test_non_entailing_worlds_get_exactly_zero(self, binary_digits_gp, rng):
        q = parse_ground_atom("add(img,1)")
        for _ in range(10):
            p = random_probabilities(rng, binary_digits_gp)
            dist = evidence_conditional(binary_digits_gp, p, q)
            assert dist.probabilities[0] == 0.0
            assert dist.probabilities[3] == 0.0
            assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-9)


class TestSampleWorld:
    def test_point_mass(self, binary_digits_gp, rng):
        dist = evidence_conditional(
            binary_digits_gp, UNIFORM4, parse_ground_atom("add(img,2)")
        )
        for _ in range(20):
            assert sample_world(dist, rng).index == 3

    def test_uniform_frequencies(self, binary_digits_gp, rng):
        dist = evidence_conditional(binary_digits_gp, UNIFORM4, None)
        n = 100_000
        counts = np.zeros(4)
        for _ in range(n):
            counts[sample_world(dist, rng).index] += 1
        sigma = np.sqrt(0.25 * 0.75 / n)
        assert np.all(np.abs(counts / n - 0.25) <= 3 * sigma)

    def test_samples_respect_evidence(self, binary_digits_gp, rng):
        q = parse_ground_atom("add(img,1)")
        dist = evidence_conditional(binary_digits_gp, UNIFORM4, q)
        for _ in range(200):
            assert entails(sample_world(dist, rng), q)

    def test_deterministic_given_seed(self, binary_digits_gp):
        dist = evidence_conditional(binary_digits_gp, SKEWED4, None)
        a = [sample_world(dist, np.random.default_rng(7)).index for _ in range(1)]
        b = [sample_world(dist, np.random.default_rng(7)).index for _ in range(1)]
        assert a == b


class TestEntails:
    def test_closure_membership(self, binary_digits_gp):
        worlds = enumerate_worlds(binary_digits_gp)
        assert entails(worlds[3], parse_ground_atom("add(img,2)"))
        assert not entails(worlds[1], Atom("digit", ("img", 1, 1)))

    def test_empty_conjunction_is_true(self, binary_digits_gp):
        worlds = enumerate_worlds(binary_digits_gp)
        assert entails(worlds[0], Conj(()))

    def test_negation(self, binary_digits_gp):
        from vael.logic import Neg

        worlds = enumerate_worlds(binary_digits_gp)
        assert entails(worlds[0], Neg(Atom("add", ("img", 2))))

    def test_non_ground_formula_rejected(self, binary_digits_gp):
        worlds = enumerate_worlds(binary_digits_gp)
        with pytest.raises(NonGroundFormulaError):
            entails(worlds[0], Atom("add", ("img", Var("Y"))))
