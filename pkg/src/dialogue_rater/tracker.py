"""Factored belief tracker: per-slot discrete Bayes filters plus history flags.

Each constraint slot keeps a distribution over ``(none,) + values`` where
``none`` (index 0) means "no constraint expressed"; an observed
``dontcare`` is evidence for ``none``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import DONTCARE, DialogueAct, Ontology

METHODS = ("byconstraints", "byalternatives", "finished", "none")
DEFAULT_CONFIDENCE = 0.85
REQUEST_DECAY = 0.9

_METHOD_EVIDENCE = {
    "inform": "byconstraints", "confirm": "byconstraints", "affirm": "byconstraints",
    "negate": "byconstraints", "reqalts": "byalternatives", "bye": "finished",
}


@dataclass(frozen=True)
class BeliefState:
    ontology: Ontology
    slots: dict[str, np.ndarray]
    method: np.ndarray
    requested: np.ndarray
    offered: float = 0.0
    ignored: int = field(default=0, compare=False)

    def top_value(self, slot: str) -> str | None:
        """Most probable value, or None when ``none`` is (jointly) most probable."""
        dist = self.slots[slot]
        k = int(np.argmax(dist))
        return None if k == 0 else self.ontology.values(slot)[k - 1]

    def ranked_values(self, slot: str) -> list[str]:
        dist = self.slots[slot][1:]
        order = np.argsort(-dist, kind="stable")
        return [self.ontology.values(slot)[i] for i in order]


def init_belief(ontology: Ontology) -> BeliefState:
    slots = {}
    for s in ontology.constraint_slots:
        n = len(ontology.values(s)) + 1
        slots[s] = np.full(n, 1.0 / n)
    method = np.zeros(len(METHODS))
    method[METHODS.index("none")] = 1.0
    return BeliefState(ontology, slots, method, np.zeros(len(ontology.requestable_slots)))


def _bayes(prior: np.ndarray, k: int, confidence: float) -> np.ndarray:
    n = len(prior)
    if n == 1:
        return prior.copy()
    lik = np.full(n, (1.0 - confidence) / (n - 1))
    lik[k] = confidence
    post = lik * prior
    return post / post.sum()


def update_belief(belief: BeliefState, observed_act: DialogueAct | Sequence[DialogueAct],
                  last_system_act: DialogueAct | None = None,
                  confidence: float = DEFAULT_CONFIDENCE) -> BeliefState:
    """One turn of tracking; several acts in one turn are applied in order."""
    onto = belief.ontology
    slots = dict(belief.slots)
    method = belief.method
    requested = belief.requested * REQUEST_DECAY
    offered = belief.offered
    ignored = belief.ignored

    acts = [observed_act] if isinstance(observed_act, DialogueAct) else list(observed_act)
    for act in acts:
        if act.type in ("inform", "confirm", "affirm", "negate"):
            if act.slot in slots and (act.value == DONTCARE or act.value in onto.values(act.slot)):
                k = 0 if act.value == DONTCARE else onto.values(act.slot).index(act.value) + 1
                slots[act.slot] = _bayes(slots[act.slot], k, confidence)
            else:
                ignored += 1
        elif act.type == "request":
            if act.slot in onto.requestable_slots:
                requested = requested.copy()
                requested[onto.requestable_slots.index(act.slot)] = 1.0
            else:
                ignored += 1
        if act.type in _METHOD_EVIDENCE:
            method = _bayes(method, METHODS.index(_METHOD_EVIDENCE[act.type]), confidence)

    if last_system_act is not None and last_system_act.type in ("offer", "inform") \
            and last_system_act.venue is not None:
        offered = 1.0
    return BeliefState(onto, slots, method, requested, offered, ignored)


def belief_vector(belief: BeliefState) -> np.ndarray:
    """Slot blocks in ontology order, then method, then requested flags and offer flag."""
    parts = [belief.slots[s] for s in belief.ontology.constraint_slots]
    parts += [belief.method, belief.requested, np.array([belief.offered])]
    return np.concatenate(parts)


def belief_width(ontology: Ontology) -> int:
    return (sum(len(ontology.values(s)) + 1 for s in ontology.constraint_slots)
            + len(METHODS) + len(ontology.requestable_slots) + 1)
