"""Loss, optimizers, stratified splitting, the training loop and metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .gnn import LayerSpec, ModelParams, backward, check_params, forward, init_params
from .featurize import GraphTensors

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


class TooFewSamples(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    fractions: tuple[float, float] = (0.8, 0.2)

    def __post_init__(self):
        self.fractions = tuple(self.fractions)
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if len(self.fractions) != 2 or any(f < 0 for f in self.fractions) or not math.isclose(sum(self.fractions), 1.0):
            raise ValueError("split fractions must be two non-negative numbers summing to 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d


def bce_loss(probability: float, label: int) -> tuple[float, float]:
    """Binary cross-entropy and its gradient with respect to the logit."""
    p = min(max(probability, PROB_CLAMP), 1.0 - PROB_CLAMP)
    loss = -(label * math.log(p) + (1 - label) * math.log(1.0 - p))
    return loss, probability - label


def stream(seed: int, name: str) -> np.random.Generator:
    """Named, independent random stream derived from one master seed."""
    tag = int.from_bytes(name.encode(), "little") % (2**63)
    return np.random.default_rng([seed, tag])


def split(corpus: list, fractions=(0.8, 0.2), seed: int = 0) -> tuple[list, list]:
    """Stratified, seeded train/test split over items carrying a ``label``."""
    train_frac, test_frac = fractions
    if not math.isclose(train_frac + test_frac, 1.0) or min(fractions) < 0:
        raise ValueError("fractions must be non-negative and sum to 1")
    rng = stream(seed, "split")
    groups: dict = {}
    for item in corpus:
        groups.setdefault(item.label, []).append(item)
    train, test = [], []
    for key in sorted(groups, key=lambda k: (k is None, k)):
        items = groups[key]
        order = rng.permutation(len(items))
        n_test = int(math.floor(len(items) * test_frac + 0.5))
        test += [items[i] for i in order[:n_test]]
        train += [items[i] for i in order[n_test:]]
    if not train or not test:
        raise TooFewSamples(f"split {fractions} of {len(corpus)} samples leaves an empty side")
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    return train, test


class Adam:
    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.named()}
        self.v = {k: np.zeros_like(v) for k, v in params.named()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, arr in params.named():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params: ModelParams, lr: float):
        self.lr = lr

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        for name, arr in params.named():
            arr -= self.lr * grads[name]


def make_optimizer(params: ModelParams, config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    return SGD(params, config.lr)


def train(
    data: list[GraphTensors],
    config: TrainConfig,
    specs: list[LayerSpec],
    params: ModelParams | None = None,
    vocab_size: int | None = None,
    train_embedding: bool = True,
) -> tuple[ModelParams, list[float]]:
    """Minibatch training; returns final params and per-epoch mean loss.

    When ``params`` is None they are initialized from the "init" stream,
    with an embedding table if ``vocab_size`` is given.
    """
    if not data:
        raise TooFewSamples("cannot train on an empty corpus")
    if params is None:
        params = init_params(specs, stream(config.seed, "init"), vocab_size, specs[0].in_dim)
    else:
        params = params.copy()
    check_params(params, specs)
    opt = make_optimizer(params, config)
    shuffle = stream(config.seed, "shuffle")
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(data))
        losses = np.zeros(len(data))
        for start in range(0, len(data), config.batch_size):
            idx = order[start : start + config.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in idx:
                g = data[i]
                trace = forward(g, params, specs)
                loss, dlogit = bce_loss(trace.probability, g.label)
                if not math.isfinite(loss):
                    raise NonFiniteLoss(step, loss)
                losses[i] = loss
                grads = backward(trace, g, params, specs, dlogit)
                for name, _ in params.named():
                    if name in acc:
                        acc[name] += grads[name]
                    else:
                        acc[name] = grads[name].copy()
            for name in acc:
                acc[name] /= len(idx)
            if "embedding" in acc and not train_embedding:
                acc["embedding"][:] = 0.0
            opt.step(params, acc)
            step += 1
        # summed in corpus order so the epoch mean does not depend on the shuffle
        history.append(float(losses.sum()) / len(data))
        log.debug("epoch %d loss %.6f", epoch + 1, history[-1])
    return params, history


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }

    def table(self) -> str:
        rows = [
            ("Acc", self.accuracy),
            ("Prec", self.precision),
            ("Rec", self.recall),
            ("F1", self.f1),
        ]
        head = " | ".join(f"{k:>7}" for k, _ in rows)
        vals = " | ".join(f"{100 * v:6.2f}%" for _, v in rows)
        counts = f"TP={self.tp} FP={self.fp} FN={self.fn} TN={self.tn}"
        return f"{head}\n{vals}\n{counts}"


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(accuracy, precision, recall, f1, tp, fp, fn, tn)


def confusion_metrics(predicted, labels) -> Metrics:
    p = np.asarray(predicted, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    return metrics_from_counts(
        int(np.sum(p & y)), int(np.sum(p & ~y)), int(np.sum(~p & y)), int(np.sum(~p & ~y))
    )


def evaluate(params: ModelParams, specs: list[LayerSpec], data: list[GraphTensors], threshold: float = 0.5) -> Metrics:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    probs = [forward(g, params, specs).probability for g in data]
    return confusion_metrics([p >= threshold for p in probs], [g.label for g in data])
