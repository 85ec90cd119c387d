import numpy as np
import pytest

from scfrl.classifier import BlackBoxClassifier, train_classifier
from scfrl.data import CONTINUOUS, DISCRETE, FeatureSchema, apply_schema, fit_domains, make_synthetic, normalize, split
from scfrl.nn import Layer, NeuralNet


def logistic_classifier(weights, bias=0.0, thr=0.5):
    """P(x) = sigmoid(w . x + bias): a black box whose probabilities are easy to set by hand."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    return BlackBoxClassifier(NeuralNet([Layer(w, np.array([bias]), "sigmoid")]), thr, "1")


def continuous_schema(n, immutable=()):
    return tuple(FeatureSchema(f"x{i}", CONTINUOUS, i not in immutable, -1.0, 1.0) for i in range(n))


@pytest.fixture
def schema3():
    return continuous_schema(3)


@pytest.fixture
def mixed_schema():
    return (
        FeatureSchema("c0", CONTINUOUS, True, 0.0, 10.0),
        FeatureSchema("d0", DISCRETE, True, categories=("a", "b", "c", "d", "e")),
        FeatureSchema("imm", CONTINUOUS, False, 0.0, 1.0),
    )


@pytest.fixture(scope="session")
def bundled_splits():
    d = make_synthetic(250, 3, 1, 1, seed=0)
    sp = split(d, 0.8, 0)
    schema = fit_domains(sp.train)
    return normalize(apply_schema(sp.train, schema)), normalize(apply_schema(sp.test, schema))


@pytest.fixture(scope="session")
def bundled_classifier(bundled_splits):
    return train_classifier(bundled_splits[0], seed=0)
