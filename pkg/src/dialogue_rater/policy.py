"""Summary action space, master-act grounding and a GP-SARSA policy.

The Q-function is a Gaussian process over (belief summary, action) pairs
with kernel ``k((b, a), (b', a')) = scale * (<b, b'> + bias) * [a == a']``.
Learning is done in the span of a sparse dictionary grown by approximate
linear dependence: a point joins when its kernel-space residual against
the dictionary exceeds ``nu``. Every other point is represented by its
projection onto the dictionary, so the posterior over the dictionary
values is a plain Gaussian that is updated once per episode with the
episode's temporal-difference system (noise ``sigma2 * H H^T``).
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .domain import DONTCARE, DialogueAct, Ontology, VenueDB, matching_venues
from .io import FormatError, read_container, write_container
from .tracker import BeliefState

logger = logging.getLogger(__name__)

POLICY_MAGIC = b"DRPOLICY"
POLICY_FORMAT_VERSION = 1


def summary_features(belief: BeliefState) -> np.ndarray:
    """Top value probability and entropy per slot, method, offer flag, request flags."""
    parts = []
    for s in belief.ontology.constraint_slots:
        p = belief.slots[s]
        nz = p[p > 0]
        parts += [p.max(), float(-(nz * np.log(nz)).sum())]
    return np.concatenate([np.array(parts), belief.method, [belief.offered], belief.requested])


def summary_width(ontology: Ontology) -> int:
    return 2 * len(ontology.constraint_slots) + 4 + 1 + len(ontology.requestable_slots)


def _belief_constraints(belief: BeliefState) -> dict[str, str]:
    cons = {}
    for s in belief.ontology.constraint_slots:
        v = belief.top_value(s)
        if v is not None:
            cons[s] = v
    return cons


def master_action(summary_action: int, belief: BeliefState, db: VenueDB,
                  offered_venue: str | None = None) -> tuple[DialogueAct, bool]:
    """Ground a summary action into a full system act.

    Returns ``(act, masked)``; ``masked`` is set when the action was not
    executable as chosen (an inform before any offer, or an offer with
    nothing matching) and a substitute was emitted.
    """
    onto = belief.ontology
    name = onto.summary_actions[summary_action]
    base, _, arg = name.partition("(")
    arg = arg.rstrip(")")

    if base == "request":
        return DialogueAct("request", arg), False
    if base == "confirm":
        v = belief.top_value(arg)
        return DialogueAct("confirm", arg, DONTCARE if v is None else v), False
    if base == "select":
        top2 = belief.ranked_values(arg)[:2]
        return DialogueAct("select", arg, "|".join(top2)), False
    if base in ("inform_offer", "inform_alternatives"):
        matches = sorted(matching_venues(db, _belief_constraints(belief)), key=lambda v: v.name)
        if not matches:
            return DialogueAct("no_match"), True
        if base == "inform_alternatives" and offered_venue is not None:
            names = [v.name for v in matches]
            later = [n for n in names if n > offered_venue]
            return DialogueAct("offer", venue=(later or names)[0]), False
        return DialogueAct("offer", venue=matches[0].name), False
    if base == "inform_requested":
        if offered_venue is None:
            act, _ = master_action(onto.summary_actions.index("inform_offer"), belief, db)
            return act, True
        return DialogueAct("inform", arg, db[offered_venue].get(arg), venue=offered_venue), False
    if base == "inform_no_match":
        return DialogueAct("no_match"), False
    return DialogueAct(base), False


def executable_mask(ontology: Ontology, offered_venue: str | None,
                    said_no_match: bool = False) -> np.ndarray:
    """Actions the system may take now; closing needs a result on the table."""
    mask = np.ones(ontology.n_summary_actions, dtype=bool)
    if offered_venue is None and not said_no_match:
        mask[ontology.summary_actions.index("bye")] = False
    return mask


@dataclass
class GPConfig:
    gamma: float = 1.0
    sigma2: float = 20.0
    nu: float = 0.1
    kernel_scale: float = 5.0
    kernel_bias: float = 1.0
    max_dict: int = 1000
    exploration: str = "thompson"
    explore_scale: float = 3.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.exploration not in ("thompson", "epsilon"):
            raise ValueError(f"unknown exploration scheme {self.exploration!r}")
        if self.sigma2 < 0 or self.nu < 0:
            raise ValueError("sigma2 and nu must be non-negative")


class GPPolicy:
    def __init__(self, n_actions: int, n_features: int, config: GPConfig | None = None):
        self.n_actions = n_actions
        self.n_features = n_features
        self.config = config or GPConfig()
        self.dict_x = np.zeros((0, n_features))
        self.dict_a = np.zeros(0, dtype=np.int64)
        self.mean = np.zeros(0)
        self.cov = np.zeros((0, 0))
        self._kinv = np.zeros((0, 0))
        self._refresh()

    def __len__(self) -> int:
        return len(self.dict_a)

    def _kx(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        c = self.config
        return c.kernel_scale * (X @ Y.T + c.kernel_bias)

    def kernel(self, x, a, y, b) -> float:
        if a != b:
            return 0.0
        return float(self._kx(np.atleast_2d(x), np.atleast_2d(y))[0, 0])

    def _kvec(self, x: np.ndarray, a: int) -> np.ndarray:
        if not len(self):
            return np.zeros(0)
        return self._kx(self.dict_x, x[None, :])[:, 0] * (self.dict_a == a)

    def _refresh(self) -> None:
        # Cached products for fast queries: Q mean = k^T w, var = k(x,x) + k^T B k.
        m = len(self)
        if m == 0:
            self._kinv = np.zeros((0, 0))
            self._w = np.zeros(0)
            self._B = np.zeros((0, 0))
            return
        K = self._kx(self.dict_x, self.dict_x) * (self.dict_a[:, None] == self.dict_a[None, :])
        self._kinv = np.linalg.inv(K)
        self._kinv = 0.5 * (self._kinv + self._kinv.T)
        self._w = self._kinv @ self.mean
        self._B = self._kinv @ self.cov @ self._kinv - self._kinv

    def _add_point(self, x: np.ndarray, a: int) -> bool:
        kv = self._kvec(x, a)
        proj = self._kinv @ kv
        novelty = self.kernel(x, a, x, a) - kv @ proj
        if not novelty > self.config.nu:
            return False
        m = len(self)
        cp = self.cov @ proj
        cov = np.empty((m + 1, m + 1))
        cov[:m, :m] = self.cov
        cov[:m, m] = cp
        cov[m, :m] = cp
        cov[m, m] = proj @ cp + novelty
        self.cov = cov
        self.mean = np.append(self.mean, proj @ self.mean)
        self.dict_x = np.vstack([self.dict_x, x])
        self.dict_a = np.append(self.dict_a, a)
        if len(self) > self.config.max_dict:
            self._evict(0)
        self._refresh()
        return True

    def _evict(self, i: int) -> None:
        keep = np.arange(len(self)) != i
        self.dict_x = self.dict_x[keep]
        self.dict_a = self.dict_a[keep]
        self.mean = self.mean[keep]
        self.cov = self.cov[np.ix_(keep, keep)]

    def q_values(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of Q(x, a) for every action."""
        x = np.asarray(x, dtype=float)
        prior = np.full(self.n_actions, self.kernel(x, 0, x, 0))
        if not len(self):
            return np.zeros(self.n_actions), prior
        base = self._kx(self.dict_x, x[None, :])[:, 0]
        Kq = base[None, :] * (self.dict_a[None, :] == np.arange(self.n_actions)[:, None])
        mean = Kq @ self._w
        var = prior + np.einsum("ij,jk,ik->i", Kq, self._B, Kq)
        return mean, np.maximum(var, 0.0)

    def update(self, episode: list[tuple[np.ndarray, int, float]]) -> None:
        """Condition on one episode of (features, action, reward) triples."""
        if not episode:
            raise ValueError("episode must be non-empty")
        rewards = np.array([r for _, _, r in episode], dtype=float)
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        for x, a, _ in episode:
            self._add_point(np.asarray(x, dtype=float), int(a))
        if not len(self):
            return
        T = len(episode)
        A = np.stack([self._kinv @ self._kvec(np.asarray(x, dtype=float), int(a))
                      for x, a, _ in episode])
        H = np.eye(T) - self.config.gamma * np.eye(T, k=1)
        G = H @ A
        S = G @ self.cov @ G.T + self.config.sigma2 * (H @ H.T)
        gain = np.linalg.solve(S, G @ self.cov).T
        self.mean = self.mean + gain @ (rewards - G @ self.mean)
        cov = self.cov - gain @ G @ self.cov
        self.cov = 0.5 * (cov + cov.T)
        self._refresh()

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"dict_x": self.dict_x, "dict_a": self.dict_a, "mean": self.mean, "cov": self.cov}

    @classmethod
    def from_arrays(cls, arrays: dict, n_actions: int, config: GPConfig) -> "GPPolicy":
        pol = cls(n_actions, arrays["dict_x"].shape[1], config)
        pol.dict_x = np.asarray(arrays["dict_x"], dtype=float)
        pol.dict_a = np.asarray(arrays["dict_a"], dtype=np.int64)
        pol.mean = np.asarray(arrays["mean"], dtype=float)
        pol.cov = np.asarray(arrays["cov"], dtype=float)
        pol._refresh()
        return pol

    def header(self) -> dict:
        return {"n_actions": self.n_actions, "n_features": self.n_features,
                "config": asdict(self.config)}


def _masked_argmax(values: np.ndarray, mask: np.ndarray | None) -> int:
    if mask is not None:
        values = np.where(mask, values, -np.inf)
    return int(np.argmax(values))


def select_action(policy: GPPolicy, features: np.ndarray, mode: str = "exploit",
                  rng: np.random.Generator | None = None, mask: np.ndarray | None = None) -> int:
    """Greedy (exploit) or posterior-sampled (explore) action; ties go to the lowest index."""
    mean, var = policy.q_values(features)
    if mode == "exploit":
        return _masked_argmax(mean, mask)
    if mode != "explore":
        raise ValueError(f"unknown mode {mode!r}")
    if policy.config.exploration == "epsilon":
        if rng.random() < policy.config.epsilon:
            allowed = np.flatnonzero(mask) if mask is not None else np.arange(policy.n_actions)
            return int(allowed[rng.integers(len(allowed))])
        return _masked_argmax(mean, mask)
    noise = rng.standard_normal(policy.n_actions)
    return _masked_argmax(mean + policy.config.explore_scale * np.sqrt(var) * noise, mask)


def gp_sarsa_update(policy: GPPolicy, episode) -> GPPolicy:
    policy.update(episode)
    return policy


def save_policy(path, policy: GPPolicy, ontology: Ontology) -> None:
    header = policy.header()
    header["ontology_hash"] = ontology.hash()
    write_container(path, POLICY_MAGIC, POLICY_FORMAT_VERSION, header, policy.to_arrays())


def load_policy(path, ontology: Ontology | None = None) -> GPPolicy:
    """Read a policy checkpoint; with ``ontology`` given, refuse a hash mismatch."""
    header, arrays = read_container(path, POLICY_MAGIC, POLICY_FORMAT_VERSION)
    if ontology is not None and header["ontology_hash"] != ontology.hash():
        raise FormatError("policy checkpoint was trained on a different ontology")
    return GPPolicy.from_arrays(arrays, header["n_actions"], GPConfig(**header["config"]))
