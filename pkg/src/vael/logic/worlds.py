"""Possible-world enumeration and exact inference over ground programs.

A world is one joint choice across all annotated-disjunction groups plus the
forward-chaining closure of everything the clauses derive from those choices.
World indices follow mixed-radix order over the group choices, first group
most significant, so slot layouts stay position-stable across runs.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    InconsistentEvidenceError,
    LogicError,
    NonGroundFormulaError,
    UnknownPredicateError,
    WorldCapExceededError,
)
from .grounding import GroundProgram
from .syntax import PROB_SUM_TOL, Atom, Conj, Disj, Neg, formula_atoms, formula_is_ground

DEFAULT_WORLD_CAP = 100_000

_ENGINE_LOCK = threading.Lock()


@dataclass(frozen=True)
class World:
    index: int
    choices: tuple  # one choice index per group
    closure: frozenset  # every ground atom true in this world


@dataclass(frozen=True)
class FactProbabilities:
    """Probability vector over all choice slots, grouped per annotated disjunction."""

    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class WorldDistribution:
    worlds: tuple
    probabilities: np.ndarray
    normalizer: float


def validate_probabilities(gp: GroundProgram, p) -> np.ndarray:
    values = np.asarray(p.values if isinstance(p, FactProbabilities) else p, dtype=np.float64)
    if values.shape != (gp.n_slots,):
        raise LogicError(f"expected {gp.n_slots} probability slots, got shape {values.shape}")
    if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise LogicError("probabilities must lie in [0, 1]")
    for ad, off in zip(gp.ads, gp.group_offsets):
        s = values[off : off + ad.size].sum()
        if abs(s - 1.0) > PROB_SUM_TOL:
            raise LogicError(f"group {ad.group_id} probabilities sum to {s}, expected 1")
    return values


def _closure(seed, clauses) -> frozenset:
    atoms = set(seed)
    changed = True
    while changed:
        changed = False
        for gc in clauses:
            if gc.head not in atoms and all(b in atoms for b in gc.body):
                atoms.add(gc.head)
                changed = True
    return frozenset(atoms)


def world_count(gp: GroundProgram) -> int:
    count = 1
    for ad in gp.ads:
        count *= ad.size
    return count


def enumerate_worlds(gp: GroundProgram, cap: int = DEFAULT_WORLD_CAP) -> tuple:
    """All possible worlds of ``gp`` in mixed-radix index order (cached)."""
    with _ENGINE_LOCK:
        cached = gp._cache.get("worlds")
        if cached is not None:
            return cached
    count = world_count(gp)
    if count > cap:
        raise WorldCapExceededError(f"{count} possible worlds exceed the cap of {cap}")
    sizes = [ad.size for ad in gp.ads]
    worlds = []
    for index in range(count):
        choices = []
        rem = index
        for size in reversed(sizes):
            rem, c = divmod(rem, size)
            choices.append(c)
        choices.reverse()
        seed = [ad.choices[c] for ad, c in zip(gp.ads, choices) if ad.choices[c] is not None]
        seed.extend(gp.domain_facts)
        worlds.append(World(index, tuple(choices), _closure(seed, gp.clauses)))
    worlds = tuple(worlds)
    with _ENGINE_LOCK:
        gp._cache.setdefault("worlds", worlds)
        return gp._cache["worlds"]


def _as_values(gp, p, validate):
    if validate:
        return validate_probabilities(gp, p)
    return np.asarray(p.values if isinstance(p, FactProbabilities) else p, dtype=np.float64)


def world_probability(gp: GroundProgram, p, world: World, validate: bool = True) -> float:
    """Product of the selected choice probabilities, one factor per group."""
    values = _as_values(gp, p, validate)
    prob = 1.0
    for off, ad, c in zip(gp.group_offsets, gp.ads, world.choices):
        prob *= values[off + c]
    return float(prob)


def entails(world: World, formula) -> bool:
    """Classical evaluation of a ground formula against the world's closure."""
    if not formula_is_ground(formula):
        raise NonGroundFormulaError(f"formula {formula} contains variables")
    return _eval_formula(world.closure, formula)


def _eval_formula(closure, f) -> bool:
    if isinstance(f, Atom):
        return f in closure
    if isinstance(f, Neg):
        return not _eval_formula(closure, f.inner)
    if isinstance(f, Conj):
        return all(_eval_formula(closure, p) for p in f.parts)
    if isinstance(f, Disj):
        return any(_eval_formula(closure, p) for p in f.parts)
    raise LogicError(f"not a formula: {f!r}")


def _check_known(gp: GroundProgram, formula):
    known = gp.known_predicates
    for atom in formula_atoms(formula):
        if (atom.pred, atom.arity) not in known:
            raise UnknownPredicateError(f"unknown predicate {atom.pred}/{atom.arity} in {formula}")


def entailment_mask(gp: GroundProgram, formula) -> np.ndarray:
    """Boolean vector over world index: does each world entail ``formula``? (cached)"""
    _check_known(gp, formula)
    with _ENGINE_LOCK:
        masks = gp._cache.setdefault("masks", {})
        cached = masks.get(formula)
        if cached is not None:
            return cached
    worlds = enumerate_worlds(gp)
    mask = np.fromiter((entails(w, formula) for w in worlds), dtype=bool, count=len(worlds))
    mask.setflags(write=False)
    with _ENGINE_LOCK:
        gp._cache["masks"].setdefault(formula, mask)
        return gp._cache["masks"][formula]


def world_probabilities(gp: GroundProgram, p, validate: bool = True) -> np.ndarray:
    """Probability of every world, in index order."""
    values = _as_values(gp, p, validate)
    worlds = enumerate_worlds(gp)
    out = np.empty(len(worlds), dtype=np.float64)
    for w in worlds:
        prob = 1.0
        for off, c in zip(gp.group_offsets, w.choices):
            prob *= values[off + c]
        out[w.index] = prob
    return out


def success_probability(gp: GroundProgram, p, query, validate: bool = True) -> float:
    """Total probability of the worlds entailing ``query``.

    ``validate=False`` skips the simplex check so callers may probe the
    underlying multilinear polynomial at off-simplex points (finite
    differences); the exact gradient path relies on this.
    """
    mask = entailment_mask(gp, query)
    return float(world_probabilities(gp, p, validate=validate)[mask].sum())


def success_gradient(gp: GroundProgram, p, query, validate: bool = True) -> np.ndarray:
    """Exact d(success)/d(slot) via leave-one-out products over entailing worlds."""
    values = _as_values(gp, p, validate)
    mask = entailment_mask(gp, query)
    worlds = enumerate_worlds(gp)
    grad = np.zeros_like(values)
    n = len(gp.ads)
    for w in worlds:
        if not mask[w.index]:
            continue
        factors = [values[off + c] for off, c in zip(gp.group_offsets, w.choices)]
        prefix = np.ones(n + 1)
        for i in range(n):
            prefix[i + 1] = prefix[i] * factors[i]
        suffix = np.ones(n + 1)
        for i in range(n - 1, -1, -1):
            suffix[i] = suffix[i + 1] * factors[i]
        for g, (off, c) in enumerate(zip(gp.group_offsets, w.choices)):
            grad[off + c] += prefix[g] * suffix[g + 1]
    return grad


def evidence_conditional(gp: GroundProgram, p, evidence) -> WorldDistribution:
    """Distribution over worlds conditioned on the evidence formula."""
    worlds = enumerate_worlds(gp)
    probs = world_probabilities(gp, p)
    if evidence is not None:
        probs = probs * entailment_mask(gp, evidence)
    z = float(probs.sum())
    if z <= 0.0:
        raise InconsistentEvidenceError(f"evidence {evidence} has zero probability")
    return WorldDistribution(worlds=worlds, probabilities=probs / z, normalizer=z)


def sample_world(dist: WorldDistribution, rng: np.random.Generator) -> World:
    """Draw one world from a normalized distribution; deterministic given the rng state."""
    index = int(rng.choice(len(dist.probabilities), p=dist.probabilities))
    return dist.worlds[index]
