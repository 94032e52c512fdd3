"""Output heads: binary success, smoothed return classes, return regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax, xlogy

from ..simulator import MAX_TURNS, SUCCESS_REWARD, DialogueOutcome

HEAD_KINDS = ("binary", "class", "regress")


def n_return_classes(max_turns: int = MAX_TURNS) -> int:
    # Returns span -max_turns .. SUCCESS_REWARD - 1.
    return SUCCESS_REWARD + max_turns


def smooth_return_target(ret: int, n_classes: int | None = None, sigma: float = 1.0,
                         max_turns: int = MAX_TURNS) -> np.ndarray:
    """One-hot at the return's class convolved with a Gaussian cut at +-3 sigma."""
    K = n_return_classes(max_turns) if n_classes is None else n_classes
    k = int(ret) + max_turns
    if not 0 <= k < K:
        raise ValueError(f"return {ret} outside the class range")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    target = np.zeros(K)
    if sigma == 0:
        target[k] = 1.0
        return target
    reach = int(np.floor(3 * sigma))
    lo, hi = max(0, k - reach), min(K - 1, k + reach)
    d = np.arange(lo, hi + 1) - k
    target[lo:hi + 1] = np.exp(-0.5 * (d / sigma) ** 2)
    return target / target.sum()


@dataclass(frozen=True)
class Head:
    kind: str = "binary"
    max_turns: int = MAX_TURNS
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head {self.kind!r}")

    @property
    def n_classes(self) -> int:
        return n_return_classes(self.max_turns)

    @property
    def out_dim(self) -> int:
        return self.n_classes if self.kind == "class" else 1

    def activate(self, z: np.ndarray):
        if self.kind == "binary":
            return float(expit(z[0]))
        if self.kind == "class":
            return softmax(z)
        return float(z[0])

    def target(self, outcome: DialogueOutcome):
        if self.kind == "binary":
            return float(outcome.success)
        if self.kind == "class":
            return smooth_return_target(outcome.ret, self.n_classes, self.sigma, self.max_turns)
        return float(outcome.ret)

    def check_target(self, target) -> None:
        shape = np.shape(target)
        want = (self.n_classes,) if self.kind == "class" else ()
        if shape != want:
            raise ValueError(f"{self.kind} head expects target shape {want}, got {shape}")

    def loss_from_logits(self, z: np.ndarray, target) -> float:
        # Numpy scalars keep the logits' precision (grad_check may run in longdouble).
        if self.kind == "binary":
            # log(1 + e^z) - y z, stable in both tails
            return np.logaddexp(0.0, z[0]) - target * z[0]
        if self.kind == "class":
            return -(np.asarray(target) * log_softmax(z)).sum()
        return (z[0] - target) ** 2

    def grad_logits(self, z: np.ndarray, target) -> np.ndarray:
        if self.kind == "binary":
            return np.array([expit(z[0]) - target])
        if self.kind == "class":
            return softmax(z) - np.asarray(target)
        return np.array([2.0 * (z[0] - target)])


def loss(head: Head, output, target) -> float:
    """Loss from an activated output (probability, distribution or value)."""
    head.check_target(target)
    if head.kind == "binary":
        return float(-(xlogy(target, output) + xlogy(1 - target, 1 - output)))
    if head.kind == "class":
        out = np.asarray(output)
        if out.shape != np.shape(target):
            raise ValueError("output and target shapes differ")
        return float(-xlogy(target, out).sum())
    return float((output - target) ** 2)


def predict_from_output(head: Head, output, num_turns: int) -> tuple[bool, float]:
    """Map a head output to (success label, return estimate).

    Return heads label success when the return sits above the midpoint
    between the two attainable returns ``20 - N`` and ``-N``.
    """
    if head.kind == "binary":
        label = bool(output > 0.5)
        return label, float(SUCCESS_REWARD * label - num_turns)
    if head.kind == "class":
        ret = float(int(np.argmax(output)) - head.max_turns)
    else:
        ret = float(output)
    return bool(ret + num_turns > SUCCESS_REWARD / 2), ret
