import numpy as np
import pytest

from conftest import TOY_OPTIMUM, make_toy_structure, toy_weights
from local_net import network
from utils import constant
from utils.errors import ShapeError, StructureError


def test_toy_forward_matches_closed_form(toy_structure, toy_data):
    X, Y = toy_data
    weights = toy_weights(toy_structure, *TOY_OPTIMUM)
    np.testing.assert_allclose(network.forward(toy_structure, weights, X), Y, rtol=1e-12)
    assert network.loss_value(toy_structure, weights, X, Y) == pytest.approx(0.0, abs=1e-20)


def test_single_sample_forward(toy_structure):
    weights = toy_weights(toy_structure, 3.0, 2.5)
    y = network.forward(toy_structure, weights, np.array([1.0, 1.0]))
    assert y.shape == (1,)
    assert y[0] == pytest.approx(3.0 * np.cos(2.5))


def test_parameter_slots_order(toy_structure):
    # summation weights first, then inner weights of weighted live neurons
    assert network.parameter_slots(toy_structure) == [(2, (0, 0)), (0, 5)]
    weights = toy_weights(toy_structure, 3.0, 2.5)
    np.testing.assert_array_equal(network.weights_to_vector(toy_structure, weights), [3.0, 2.5])
    with pytest.raises(ShapeError):
        network.vector_to_weights(toy_structure, np.array([1.0]))


def test_gradients_match_central_differences(toy_structure, toy_data):
    X, Y = toy_data
    weights = toy_weights(toy_structure, 1.2, 0.7)
    _, grad = network.gradients(toy_structure, weights, X, Y)
    g = network.weights_to_vector(toy_structure, grad)
    base = network.weights_to_vector(toy_structure, weights)
    h = 1e-6
    for p in range(len(base)):
        step = np.zeros_like(base)
        step[p] = h
        plus = network.loss_value(toy_structure, network.vector_to_weights(toy_structure, base + step, weights), X, Y)
        minus = network.loss_value(toy_structure, network.vector_to_weights(toy_structure, base - step, weights), X, Y)
        assert g[p] == pytest.approx((plus - minus) / (2 * h), rel=1e-5, abs=1e-8)


def test_gradients_are_zero_off_the_mask(toy_structure, toy_data):
    X, Y = toy_data
    _, grad = network.gradients(toy_structure, toy_weights(toy_structure, 1.2, 0.7), X, Y)
    inner = grad.layers[0]
    assert np.count_nonzero(inner) == 1 and inner[5] != 0.0
    assert grad.layers[1] is None


def test_unused_neurons_are_never_evaluated():
    # log of a negative input would fail, but no log neuron reaches the output
    z_mult = np.array([[1], [0]], dtype=np.int8)
    structure = network.standard_structure(['id', 'log'], 1, 1, 1, z_mult=z_mult, z_sum=[[1]])
    weights = network.init_weights(structure, 2.0)
    np.testing.assert_allclose(network.forward(structure, weights, np.array([[-1.0], [-3.0]])), [[-2.0], [-6.0]])
    assert network.live_masks(structure)[1].tolist() == [True, False]


def test_live_multiplication_neuron_without_inputs():
    structure = network.standard_structure(['id'], 2, 2, 1, z_mult=[[1, 0], [0, 0]], z_sum=[[1], [1]])
    with pytest.raises(StructureError):
        network.forward(structure, network.init_weights(structure, 1.0), np.ones((3, 2)))


def test_shape_errors(toy_structure):
    weights = network.init_weights(toy_structure, 1.0)
    with pytest.raises(ShapeError):
        network.forward(toy_structure, weights, np.ones((4, 3)))
    with pytest.raises(ShapeError):
        network.gradients(toy_structure, weights, np.ones((0, 2)), np.ones((0, 1)))


def test_activation_block_is_fixed():
    structure = make_toy_structure()
    bad = np.ones((2, 6), dtype=np.int8)
    with pytest.raises(StructureError):
        network.LocalStructure(structure.library, structure.layer_kinds, structure.layer_sizes,
                               (bad,) + structure.indicators[1:])
    with pytest.raises(ShapeError):
        structure.with_indicator(1, np.ones((5, 1)))


def test_standard_structure_layout():
    structure = network.standard_structure(constant.SYN1_LIBRARY, 3, 9, 3)
    assert structure.layer_kinds == (constant.ACTIVATION, constant.MULTIPLICATION, constant.SUMMATION)
    assert structure.layer_sizes == (3, 9, 9, 3)
    assert structure.depth == 3
    assert np.count_nonzero(structure.indicators[1]) == 0


def test_directional_jets_match_finite_differences(toy_structure, toy_data):
    X, _ = toy_data
    weights = toy_weights(toy_structure, 1.5, 1.1)
    direction = network.vector_to_weights(toy_structure, np.array([0.6, -0.8]))
    y, y1, y2 = network.directional_jets(toy_structure, weights, X, direction)
    base = network.weights_to_vector(toy_structure, weights)
    d = np.array([0.6, -0.8])

    def at(t):
        return network.forward(toy_structure, network.vector_to_weights(toy_structure, base + t * d, weights), X)

    h = 1e-4
    np.testing.assert_allclose(y, at(0.0))
    np.testing.assert_allclose(y1, (at(h) - at(-h)) / (2 * h), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(y2, (at(h) - 2 * at(0.0) + at(-h)) / h ** 2, rtol=1e-4, atol=1e-5)


def test_dict_round_trip(toy_structure):
    weights = toy_weights(toy_structure, 3.0, 2.5)
    again = network.structure_from_dict(network.structure_to_dict(toy_structure))
    assert again.signature() == toy_structure.signature()
    assert again.library.names == toy_structure.library.names
    w = network.weights_from_dict(network.weights_to_dict(weights))
    np.testing.assert_array_equal(network.weights_to_vector(again, w), [3.0, 2.5])
    assert network.describe(toy_structure) == '010001,1'


def random_case(seed, n_samples=40):
    """
    Random K=3 structure (1-3 inputs, 1-2 multiplication neurons, 1-2 outputs)
    with in-domain inputs from U(1, 2) and inner weights from U(0.5, 1.5).
    """
    rng = np.random.default_rng(seed)
    library = [str(name) for name in rng.choice(constant.SYMBOL_CATALOG, size=int(rng.integers(1, 4)), replace=False)]
    n_inputs, n_mult, n_outputs = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
    n_act = n_inputs * len(library)
    z_mult = np.zeros((n_act, n_mult), dtype=np.int8)
    for j in range(n_mult):
        z_mult[rng.choice(n_act, size=int(rng.integers(1, min(3, n_act) + 1)), replace=False), j] = 1
    z_sum = (rng.random((n_mult, n_outputs)) < 0.6).astype(np.int8)
    for o in range(n_outputs):
        z_sum[int(rng.integers(n_mult)), o] = 1
    structure = network.standard_structure(library, n_inputs, n_mult, n_outputs, z_mult=z_mult, z_sum=z_sum)
    slots = network.parameter_slots(structure)
    vector = np.array([rng.uniform(0.5, 1.5) if structure.layer_kinds[k] == constant.ACTIVATION
                       else rng.uniform(-2.0, 2.0) for k, _ in slots])
    weights = network.vector_to_weights(structure, vector, base=network.init_weights(structure, 1.0))
    X = rng.uniform(1.0, 2.0, size=(n_samples, n_inputs))
    Y = rng.normal(size=(n_samples, n_outputs))
    return structure, weights, X, Y


@pytest.mark.parametrize('seed', range(50))
def test_gradients_on_random_structures(seed):
    structure, weights, X, Y = random_case(seed)
    loss, grad = network.gradients(structure, weights, X, Y)
    assert loss == pytest.approx(network.loss_value(structure, weights, X, Y))
    g = network.weights_to_vector(structure, grad)
    base = network.weights_to_vector(structure, weights)
    h = 1e-6
    for p in range(len(base)):
        step = np.zeros_like(base)
        step[p] = h
        plus = network.loss_value(structure, network.vector_to_weights(structure, base + step, weights), X, Y)
        minus = network.loss_value(structure, network.vector_to_weights(structure, base - step, weights), X, Y)
        assert g[p] == pytest.approx((plus - minus) / (2 * h), rel=1e-5, abs=1e-6)


@pytest.mark.parametrize('seed', range(10))
def test_dropping_a_connection_only_changes_its_own_path(seed):
    structure, weights, X, _ = random_case(seed)
    hs, _, _ = network.forward_cache(structure, weights, X)
    z_mult, z_sum = structure.indicators[1], structure.indicators[2]
    w_sum = np.where(z_sum.astype(bool), weights.layers[2], 0.0)
    for i, j in zip(*np.nonzero(z_mult)):
        if z_mult[:, j].sum() < 2:
            continue
        flipped = z_mult.copy()
        flipped[i, j] = 0
        after, _, _ = network.forward_cache(structure.with_indicator(1, flipped), weights, X)
        others = [c for c in range(z_mult.shape[1]) if c != j]
        np.testing.assert_array_equal(after[2][:, others], hs[2][:, others])
        np.testing.assert_allclose(after[-1] - hs[-1], np.outer(after[2][:, j] - hs[2][:, j], w_sum[j]),
                                   rtol=1e-10, atol=1e-10)
    for j, o in zip(*np.nonzero(z_sum)):
        flipped = z_sum.copy()
        flipped[j, o] = 0
        y = network.forward(structure.with_indicator(2, flipped), weights, X)
        others = [c for c in range(z_sum.shape[1]) if c != o]
        np.testing.assert_allclose(y[:, others], hs[-1][:, others], rtol=1e-12, atol=1e-12)
