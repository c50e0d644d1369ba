"""Independent brute-force reference for exact inference.

Deliberately shares no code with vael.logic beyond the parsed syntax objects:
it enumerates joint choices with itertools.product, runs its own fixpoint
chainer over ground clauses, and evaluates formulas with a local recursion.
Used to cross-check the engine on randomized programs.
"""
import itertools

from vael.logic.grounding import GroundProgram
from vael.logic.syntax import Atom, Conj, Disj, Neg


def _chain(true_atoms, clauses):
    """Naive fixpoint: keep sweeping until nothing new is derived."""
    derived = set(true_atoms)
    while True:
        added = False
        for gc in clauses:
            ok = True
            for b in gc.body:
                if b not in derived:
                    ok = False
                    break
            if ok and gc.head not in derived:
                derived.add(gc.head)
                added = True
        if not added:
            return derived


def _holds(atoms, formula):
    if isinstance(formula, Atom):
        return formula in atoms
    if isinstance(formula, Neg):
        return not _holds(atoms, formula.inner)
    if isinstance(formula, Conj):
        for part in formula.parts:
            if not _holds(atoms, part):
                return False
        return True
    if isinstance(formula, Disj):
        for part in formula.parts:
            if _holds(atoms, part):
                return True
        return False
    raise TypeError(formula)


def all_choice_combinations(gp: GroundProgram):
    return itertools.product(*[range(ad.size) for ad in gp.ads])


def brute_force_success(gp: GroundProgram, probs, query) -> float:
    """Sum of joint-choice probabilities whose deduced atom set satisfies the query."""
    total = 0.0
    for combo in all_choice_combinations(gp):
        weight = 1.0
        seed = list(gp.domain_facts)
        for ad, off, choice in zip(gp.ads, gp.group_offsets, combo):
            weight *= probs[off + choice]
            atom = ad.choices[choice]
            if atom is not None:
                seed.append(atom)
        if _holds(_chain(seed, gp.clauses), query):
            total += weight
    return total


def brute_force_world_table(gp: GroundProgram, probs):
    """(choice combo, probability, true atoms) for every joint choice."""
    rows = []
    for combo in all_choice_combinations(gp):
        weight = 1.0
        seed = list(gp.domain_facts)
        for ad, off, choice in zip(gp.ads, gp.group_offsets, combo):
            weight *= probs[off + choice]
            atom = ad.choices[choice]
            if atom is not None:
                seed.append(atom)
        rows.append((combo, weight, _chain(seed, gp.clauses)))
    return rows
