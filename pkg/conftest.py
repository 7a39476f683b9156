import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from local_net import network

TOY_LIBRARY = ['id', 'square', 'cos']
TOY_OPTIMUM = (3.0, 2.5)


def make_toy_structure():
    """
    y = w1 * x1^2 * cos(w2 * x2): activation neurons 1 (x1 square) and 5 (x2 cos)
    feed one multiplication neuron, summed into one output.
    """
    z_mult = np.zeros((6, 1), dtype=np.int8)
    z_mult[1, 0] = 1
    z_mult[5, 0] = 1
    return network.standard_structure(TOY_LIBRARY, 2, 1, 1, z_mult=z_mult, z_sum=[[1]])


def toy_weights(structure, w1, w2):
    return network.vector_to_weights(structure, np.array([w1, w2]), base=network.init_weights(structure, 1.0))


def toy_targets(X):
    return (TOY_OPTIMUM[0] * X[:, 0] ** 2 * np.cos(TOY_OPTIMUM[1] * X[:, 1]))[:, None]


@pytest.fixture
def toy_structure():
    return make_toy_structure()


@pytest.fixture
def toy_data():
    rng = np.random.default_rng(0)
    X = rng.uniform(1.0, 2.0, size=(100, 2))
    return X, toy_targets(X)
