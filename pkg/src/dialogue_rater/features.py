"""Per-turn feature vectors: user act one-hot | belief | system act one-hot | turn fraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DialogueAct, Ontology
from .simulator import DialogueOutcome
from .tracker import BeliefState, belief_vector, belief_width


def feature_width(ontology: Ontology) -> int:
    return ontology.n_user_acts + belief_width(ontology) + ontology.n_summary_actions + 1


@dataclass(frozen=True)
class FeatureLayout:
    """Offsets of the four sections inside a turn vector."""

    user_act: slice
    belief: slice
    sys_act: slice
    turn: int

    @classmethod
    def for_ontology(cls, ontology: Ontology) -> "FeatureLayout":
        u = ontology.n_user_acts
        b = u + belief_width(ontology)
        s = b + ontology.n_summary_actions
        return cls(slice(0, u), slice(u, b), slice(b, s), s)


def extract_turn_features(observed_user_act: DialogueAct, belief: BeliefState,
                          summary_action: int, t: int, max_turns: int) -> np.ndarray:
    if not 1 <= t <= max_turns:
        raise ValueError(f"turn index {t} outside [1, {max_turns}]")
    onto = belief.ontology
    user = np.zeros(onto.n_user_acts)
    user[onto.user_act_types.index(observed_user_act.type)] = 1.0
    sys = np.zeros(onto.n_summary_actions)
    sys[summary_action] = 1.0
    return np.concatenate([user, belief_vector(belief), sys, [t / max_turns]])


@dataclass
class DialogueFeatureSequence:
    turns: np.ndarray
    label: DialogueOutcome | None = None

    def __post_init__(self):
        self.turns = np.atleast_2d(np.asarray(self.turns, dtype=float))
        if len(self.turns) < 1:
            raise ValueError("a dialogue needs at least one turn")
        if self.label is not None and self.label.num_turns != len(self.turns):
            raise ValueError("sequence length disagrees with the outcome's turn count")

    def __len__(self) -> int:
        return len(self.turns)

    @property
    def width(self) -> int:
        return self.turns.shape[1]
