import numpy as np
import pytest
import torch

from icnn.minimizer import minimize_over_box
from icnn.network import IcnnNet
from utils.errors import ConfigError, ShapeError


def quadratic(center):
    c = torch.as_tensor(np.asarray(center, dtype=float))
    return lambda S, A: ((A - c) ** 2).sum(dim=1)


def test_interior_minimum():
    a, value = minimize_over_box(quadratic([0.3, 0.7, 0.5]), [0.0], np.zeros(3), np.ones(3))
    np.testing.assert_allclose(a, [0.3, 0.7, 0.5], atol=1e-6)
    assert value == pytest.approx(0.0, abs=1e-12)


def test_minimum_outside_the_box_is_projected():
    a, value = minimize_over_box(quadratic([1.5, -0.5]), [0.0], np.zeros(2), np.ones(2))
    np.testing.assert_allclose(a, [1.0, 0.0], atol=1e-6)
    assert value == pytest.approx(0.5, abs=1e-9)


def test_linear_objective_reaches_a_vertex():
    w = torch.tensor([1.0, -2.0, 0.5, -0.1])
    a, _ = minimize_over_box(lambda S, A: (A * w).sum(dim=1), [0.0], np.zeros(4), np.ones(4))
    np.testing.assert_allclose(a, [0.0, 1.0, 0.0, 1.0], atol=1e-9)


def test_state_enters_the_objective():
    a, _ = minimize_over_box(lambda S, A: ((A - S) ** 2).sum(dim=1), [0.2, 0.9], np.zeros(2), np.ones(2))
    np.testing.assert_allclose(a, [0.2, 0.9], atol=1e-6)


def test_fixed_coordinates():
    # lower == upper pins a coordinate
    lower, upper = np.array([1.0, 0.0]), np.array([1.0, 1.0])
    a, _ = minimize_over_box(quadratic([0.0, 0.4]), [0.0], lower, upper)
    np.testing.assert_allclose(a, [1.0, 0.4], atol=1e-6)


def test_restarts_agree_on_an_icnn():
    net = IcnnNet(5, seed=4)
    values = [minimize_over_box(net, [0.5, 1.0], np.zeros(3), np.ones(3), restarts=5, steps=2000, seed=s)[1]
              for s in range(3)]
    assert max(values) - min(values) < 1e-6


def test_bad_arguments():
    with pytest.raises(ConfigError):
        minimize_over_box(quadratic([0.5]), [0.0], np.zeros(1), np.ones(1), restarts=0)
    with pytest.raises(ConfigError):
        minimize_over_box(quadratic([0.5]), [0.0], np.ones(1), np.zeros(1))
    with pytest.raises(ShapeError):
        minimize_over_box(quadratic([0.5]), [0.0], np.zeros(2), np.ones(1))
