"""Held-out evaluation: label accuracy, reconstruction likelihood, and
generative accuracy judged by an independent single-digit classifier.

The classifier only ever sees source digits (never model outputs) and must
clear its configured holdout-accuracy gate before generative accuracy may be
computed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import PairDataset
from .model import VaelModel


class EvaluationError(Exception):
    pass


class ClassifierGateError(EvaluationError):
    """The independent classifier has not cleared its accuracy gate."""


@dataclass
class ClassifierConfig:
    epochs: int = 15
    lr: float = 1e-2
    momentum: float = 0.5
    batch_size: int = 64
    seed: int = 0
    holdout_frac: float = 0.1
    accuracy_gate: float = 0.95  # 0.98 for 3-class runs, see train_eval_classifier


class EvalClassifier:
    """784 -> 128 -> 64 -> |digit set| MLP with a log-softmax head."""

    def __init__(self, digit_set, rng: np.random.Generator):
        self.digit_set = tuple(sorted(digit_set))
        k = len(self.digit_set)
        self.l1 = ad.Linear(784, 128, rng, "clf.l1")
        self.l2 = ad.Linear(128, 64, rng, "clf.l2")
        self.l3 = ad.Linear(64, k, rng, "clf.l3")
        self.params = self.l1.params + self.l2.params + self.l3.params
        self.holdout_accuracy = None
        self.accuracy_gate = None

    def log_probs(self, images) -> Tensor:
        x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
        h = ad.relu(self.l1(Tensor(x)))
        h = ad.relu(self.l2(h))
        return ad.log_softmax(self.l3(h), axis=1)

    def predict(self, images) -> np.ndarray:
        with ad.no_grad():
            lp = self.log_probs(images).data
        return np.array([self.digit_set[i] for i in lp.argmax(axis=1)])

    @property
    def gate_met(self) -> bool:
        return (
            self.holdout_accuracy is not None
            and self.accuracy_gate is not None
            and self.holdout_accuracy >= self.accuracy_gate
        )


def train_eval_classifier(images, labels, config: ClassifierConfig, digit_set=None) -> EvalClassifier:
    """SGD-with-momentum training on source digits; records holdout accuracy."""
    digit_set = tuple(sorted(digit_set if digit_set is not None else np.unique(labels)))
    index_of = {d: i for i, d in enumerate(digit_set)}
    keep = np.isin(labels, digit_set)
    images, labels = images[keep], labels[keep]
    targets = np.array([index_of[d] for d in labels])

    rng = np.random.default_rng(config.seed)
    clf = EvalClassifier(digit_set, rng)
    clf.accuracy_gate = config.accuracy_gate

    n = len(images)
    n_holdout = max(1, int(n * config.holdout_frac))
    perm = rng.permutation(n)
    holdout, train_idx = perm[:n_holdout], perm[n_holdout:]

    k = len(digit_set)
    for epoch in range(config.epochs):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            lp = clf.log_probs(images[batch])
            onehot = np.zeros((len(batch), k))
            onehot[np.arange(len(batch)), targets[batch]] = 1.0
            nll = ad.neg(ad.mean(ad.sum_(ad.mul(lp, Tensor(onehot)), axis=1)))
            ad.zero_grad(clf.params)
            ad.backward(nll)
            ad.sgd_step(clf.params, lr=config.lr, momentum=config.momentum)

    preds = clf.predict(images[holdout])
    clf.holdout_accuracy = float(np.mean(preds == labels[holdout]))
    return clf


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def compute_m_class(model: VaelModel, dataset: PairDataset, split="test", chunk=256):
    """Label accuracy of classify() on a held-out split."""
    idx = dataset.indices(split)
    hits = 0
    for start in range(0, len(idx), chunk):
        part = idx[start : start + chunk]
        res = model.classify(dataset.images[part])
        hits += int((res.predictions == dataset.label[part]).sum())
    return hits / len(idx), len(idx)


def compute_m_rec(model: VaelModel, dataset: PairDataset, split="test", chunk=256):
    """Mean per-image negative reconstruction log-likelihood (lower is better).

    Deterministic path: posterior mean, facts from the mean z_sym, decoder fed
    the exact world distribution as the relaxed world.  The Laplace constant
    is dropped, consistent with training.
    """
    idx = dataset.indices(split)
    total = 0.0
    for start in range(0, len(idx), chunk):
        part = idx[start : start + chunk]
        x = dataset.images[part]
        mu = model.reconstruct(x)
        total += float(np.abs(x - mu).sum())
    return total / len(idx), len(idx)


def compute_m_gen(
    model: VaelModel,
    classifier: EvalClassifier,
    rng: np.random.Generator,
    labels=None,
    n_per_label: int = 20,
):
    """Conditional-generation accuracy under the independent classifier.

    For each conditioning label: generate, split each image into its two
    halves (evaluation-only split), classify the halves, recombine them with
    the program's own digit->label mapping, and compare with the conditioning
    label.  Returns (accuracy, n evaluated, skipped labels).
    """
    if not classifier.gate_met:
        raise ClassifierGateError(
            f"classifier holdout accuracy {classifier.holdout_accuracy} below gate "
            f"{classifier.accuracy_gate}; refusing to compute generative accuracy"
        )
    if labels is None:
        labels = model.label_values
    half = model.config.image_w // 2
    hits, total, skipped = 0, 0, []
    for y in labels:
        try:
            evidence = model.label_atom(y)
        except Exception:
            skipped.append(y)
            continue
        samples = model.conditional_generate(evidence, rng, n=n_per_label)
        lefts = np.stack([s.image[:, :half] for s in samples])
        rights = np.stack([s.image[:, half:] for s in samples])
        d1 = classifier.predict(lefts)
        d2 = classifier.predict(rights)
        for a, b in zip(d1, d2):
            predicted = model.label_of_digits([int(a), int(b)])
            hits += int(predicted == y)
            total += 1
    if total == 0:
        raise EvaluationError("no conditioning label was satisfiable")
    return hits / total, total, skipped


@dataclass
class EvalReport:
    m_rec: float
    m_class: float
    m_gen: float
    n_rec: int
    n_class: int
    n_gen: int

    def half_width(self, acc, n) -> float:
        return 1.96 * np.sqrt(max(acc * (1 - acc), 1e-12) / n) if n else float("nan")

    def render(self) -> str:
        lines = [
            f"m_rec = {self.m_rec!r}",
            f"m_class = {self.m_class!r}",
            f"m_gen = {self.m_gen!r}",
            f"n_rec = {self.n_rec}",
            f"n_class = {self.n_class}",
            f"n_gen = {self.n_gen}",
            f"m_class_ci95 = {self.half_width(self.m_class, self.n_class)!r}",
            f"m_gen_ci95 = {self.half_width(self.m_gen, self.n_gen)!r}",
        ]
        return "\n".join(lines) + "\n"
