"""Per-dialogue SGD with early stopping, evaluation and checkpoints."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..features import DialogueFeatureSequence
from ..io import read_container, write_container
from .heads import Head, predict_from_output
from .models import CNNRater, RaterModel, RNNRater

logger = logging.getLogger(__name__)

RATER_MAGIC = b"DRRATER\0"
RATER_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    clip: float = 5.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def predict_success(model: RaterModel, seq) -> tuple[bool, float]:
    """(success label, return estimate) for one dialogue."""
    X = seq.turns if isinstance(seq, DialogueFeatureSequence) else np.atleast_2d(seq)
    return predict_from_output(model.head, model.predict(X), len(X))


def evaluate(model: RaterModel, corpus: Sequence[DialogueFeatureSequence]) -> dict[str, float]:
    if not corpus:
        raise ValueError("empty corpus")
    hits, sq, total_loss = 0, 0.0, 0.0
    for d in corpus:
        z, _ = model.logits(d.turns)
        total_loss += model.head.loss_from_logits(z, model.head.target(d.label))
        label, ret = predict_from_output(model.head, model.head.activate(z), len(d))
        hits += label == d.label.success
        sq += (ret - d.label.ret) ** 2
    n = len(corpus)
    return {"loss": total_loss / n, "accuracy": hits / n, "rmse": float(np.sqrt(sq / n))}


def _clip(grads: dict[str, np.ndarray], bound: float) -> None:
    norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if bound > 0 and norm > bound:
        for g in grads.values():
            g *= bound / norm


def sgd_train(model: RaterModel, train: Sequence[DialogueFeatureSequence],
              val: Sequence[DialogueFeatureSequence], config: TrainConfig | None = None):
    """Train in place; returns the best-validation snapshot and the epoch history."""
    config = config or TrainConfig()
    if not train or not val:
        raise ValueError("training and validation corpora must be non-empty")
    widths = {d.width for d in train} | {d.width for d in val}
    if widths != {model.n_features}:
        raise ValueError(f"corpus feature widths {sorted(widths)} != model width {model.n_features}")
    rng = np.random.default_rng(config.seed)
    targets = [model.head.target(d.label) for d in train]
    best, best_loss, stale = model.copy(), np.inf, 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for i in rng.permutation(len(train)):
            loss, grads = model.loss_and_grads(train[i].turns, targets[i])
            total += loss
            _clip(grads, config.clip)
            for name, g in grads.items():
                model.params[name] -= config.learning_rate * g
        metrics = evaluate(model, val)
        history.append({"epoch": epoch, "train_loss": total / len(train),
                        "val_loss": metrics["loss"], "val_accuracy": metrics["accuracy"],
                        "val_rmse": metrics["rmse"]})
        logger.info("epoch %d train %.4f val %.4f acc %.3f rmse %.2f", epoch,
                    total / len(train), metrics["loss"], metrics["accuracy"], metrics["rmse"])
        if metrics["loss"] < best_loss:
            best, best_loss, stale = model.copy(), metrics["loss"], 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


def history_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["epoch", "train_loss", "val_loss", "val_accuracy", "val_rmse"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in history:
        w.writerow({k: row[k] for k in cols})
    return buf.getvalue()


def rater_header(model: RaterModel, ontology_hash: str) -> dict:
    return {"arch": model.arch, "head": model.head.kind, "F": model.n_features,
            "max_turns": model.head.max_turns, "K": model.head.n_classes,
            "sigma": model.head.sigma, "ontology_hash": ontology_hash,
            "param_order": list(model.params), **model.hyper()}


def save_rater(path, model: RaterModel, ontology_hash: str) -> None:
    write_container(path, RATER_MAGIC, RATER_VERSION, rater_header(model, ontology_hash),
                    model.params)


def load_rater(path) -> tuple[RaterModel, dict]:
    header, arrays = read_container(path, RATER_MAGIC, RATER_VERSION)
    head = Head(header["head"], header["max_turns"], header["sigma"])
    F = header["F"]
    if header["arch"] == "rnn":
        model = RNNRater(F, head, hidden=header["H"])
    elif header["arch"] == "cnn":
        model = CNNRater(F, head, n_filters=header["M"], width=header["W"], mlp_hidden=header["H1"])
    else:
        raise ValueError(f"unknown architecture {header['arch']!r}")
    for name in header["param_order"]:
        if arrays[name].shape != model.params[name].shape:
            raise ValueError(f"parameter {name} has shape {arrays[name].shape}")
        model.params[name] = arrays[name]
    return model, header
