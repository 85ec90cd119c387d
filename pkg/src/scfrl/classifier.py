"""The black-box binary classifier whose target probability drives the environment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError, Diverged, NonFiniteLoss, SingleClassData
from .nn import NeuralNet, load_checkpoint, save_checkpoint


@dataclass
class ClassifierConfig:
    hidden: tuple = (64, 64)
    epochs: int = 30
    lr: float = 5e-3
    batch_size: int = 64
    threshold: float = 0.5


@dataclass
class BlackBoxClassifier:
    """Sigmoid-output net; ``predict_proba`` is P(target | x).

    A probability exactly equal to ``threshold`` counts as the target class.
    """

    net: NeuralNet
    threshold: float = 0.5
    target_class: str = "1"
    train_accuracy: float = field(default=float("nan"))

    def __post_init__(self):
        if self.net.layers[-1].activation != "sigmoid" or self.net.out_dim != 1:
            raise ValueError("classifier net must end in a single sigmoid unit")

    @property
    def n_features(self) -> int:
        return self.net.in_dim

    def predict_proba(self, x):
        out = self.net.forward(x)
        return float(out[0]) if np.ndim(x) == 1 else out[:, 0]

    def predict_label(self, x):
        """True where the input is classified as the target class."""
        p = self.predict_proba(x)
        return bool(p >= self.threshold) if np.ndim(x) == 1 else p >= self.threshold

    def accuracy(self, d: Dataset) -> float:
        return float(np.mean(self.predict_label(d.rows) == d.labels.astype(bool)))

    def save(self, path):
        save_checkpoint(path, {
            "kind": "classifier",
            "net": self.net.meta(),
            "threshold": self.threshold,
            "target_class": self.target_class,
            "train_accuracy": self.train_accuracy,
        }, self.net.state_arrays())

    @classmethod
    def load(cls, path) -> "BlackBoxClassifier":
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "classifier":
            raise ValueError(f"{path}: not a classifier checkpoint")
        return cls(NeuralNet.from_state(meta["net"], arrays), meta["threshold"],
                   meta["target_class"], meta["train_accuracy"])


def train_classifier(train: Dataset, config: ClassifierConfig | None = None, seed: int = 0) -> BlackBoxClassifier:
    """Mini-batch Adam on inverse-frequency weighted cross-entropy."""
    config = config or ClassifierConfig()
    if not train.normalized:
        raise DataError("train_classifier expects a normalized dataset")
    y = train.labels.astype(np.float64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise SingleClassData("training data contains a single class")
    rng = np.random.default_rng(seed)
    net = NeuralNet.build([train.n_features, *config.hidden, 1], hidden="relu", output="sigmoid", rng=rng)
    n = len(y)
    # inverse class frequency, normalized to mean 1
    w = np.where(y > 0, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    x = train.rows
    bs = min(config.batch_size, n)
    try:
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                net.train_step(x[idx], y[idx, None], loss="bce", lr=config.lr, sample_weight=w[idx])
    except NonFiniteLoss as e:
        raise Diverged(f"classifier training diverged: {e}") from e
    clf = BlackBoxClassifier(net, config.threshold, train.target_class)
    clf.train_accuracy = clf.accuracy(train)
    return clf
