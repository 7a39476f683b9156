"""
LoCaL: a layered network of symbolic activations, multiplications and masked
weighted summations.

Layer k maps n_k neurons to n_{k+1} neurons through the binary indicator Z_k.
Activation layers fan every neuron out to |library| symbol neurons
(neuron i*|library| + op_id); that block is fixed, never searched.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from symbol_library.symbols import SymbolLibrary, build_library
from utils import constant
from utils.errors import StructureError, ShapeError


def fanout_indicator(n_in, library_size):
    z = np.zeros((n_in, n_in * library_size), dtype=np.int8)
    for i in range(n_in):
        z[i, i * library_size:(i + 1) * library_size] = 1
    return z


@dataclass(frozen=True, eq=False)
class LocalStructure:
    library: SymbolLibrary
    layer_kinds: tuple
    layer_sizes: tuple
    indicators: tuple

    def __post_init__(self):
        kinds, sizes, zs = self.layer_kinds, self.layer_sizes, self.indicators
        if len(kinds) < 1 or len(sizes) != len(kinds) + 1 or len(zs) != len(kinds):
            raise ShapeError(f'{len(kinds)} layer kinds, {len(sizes)} sizes and {len(zs)} indicators do not line up')
        if kinds[0] != constant.ACTIVATION:
            raise StructureError('the first non-input layer must be an activation layer')
        for k, kind in enumerate(kinds):
            if kind not in constant.LAYER_KINDS:
                raise StructureError(f'unknown layer kind {kind}')
            if sizes[k] < 1 or sizes[k + 1] < 1:
                raise ShapeError(f'layer sizes must be positive, got {sizes}')
            z = zs[k]
            if z.shape != (sizes[k], sizes[k + 1]):
                raise ShapeError(f'Z_{k} has shape {z.shape}, expected {(sizes[k], sizes[k + 1])}')
            if not np.all((z == 0) | (z == 1)):
                raise StructureError(f'Z_{k} has entries other than 0/1')
            if kind == constant.ACTIVATION:
                if sizes[k + 1] != sizes[k] * len(self.library):
                    raise ShapeError(f'activation layer {k} must have {sizes[k] * len(self.library)} neurons')
                if not np.array_equal(z, fanout_indicator(sizes[k], len(self.library))):
                    raise StructureError(f'Z_{k} of an activation layer must be the fixed fan-out block')

    @property
    def depth(self):
        return len(self.layer_kinds)

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_outputs(self):
        return self.layer_sizes[-1]

    def with_indicator(self, k, z):
        zs = list(self.indicators)
        zs[k] = np.asarray(z, dtype=np.int8)
        return LocalStructure(self.library, self.layer_kinds, self.layer_sizes, tuple(zs))

    def signature(self):
        """
        Hashable identity of the wiring.
        """
        return tuple(tuple(z.flatten().tolist()) for z in self.indicators)


def build_structure(library, n_inputs, hidden, n_outputs, indicators):
    """
    Assemble a structure from layer kinds after the input layer.

    `hidden` is a list of (kind, size) pairs for the layers between input and
    output; activation sizes may be None (derived). The output layer is a
    summation. `indicators` maps layer index -> Z for every non-activation layer.
    """
    if isinstance(library, (list, tuple)):
        library = build_library(library)
    kinds, sizes = [], [n_inputs]
    for kind, size in list(hidden) + [(constant.SUMMATION, n_outputs)]:
        if kind == constant.ACTIVATION:
            size = sizes[-1] * len(library)
        kinds.append(kind)
        sizes.append(size)
    zs = []
    for k, kind in enumerate(kinds):
        if kind == constant.ACTIVATION:
            zs.append(fanout_indicator(sizes[k], len(library)))
        else:
            z = indicators.get(k)
            if z is None:
                z = np.zeros((sizes[k], sizes[k + 1]), dtype=np.int8)
            zs.append(np.asarray(z, dtype=np.int8))
    return LocalStructure(library, tuple(kinds), tuple(sizes), tuple(zs))


def standard_structure(library, n_inputs, mult_neurons, n_outputs, z_mult=None, z_sum=None):
    """
    The K=3 stack: input -> activation -> multiplication -> summation.
    """
    indicators = {}
    if z_mult is not None:
        indicators[1] = z_mult
    if z_sum is not None:
        indicators[2] = z_sum
    return build_structure(library, n_inputs,
                           [(constant.ACTIVATION, None), (constant.MULTIPLICATION, mult_neurons)],
                           n_outputs, indicators)


@dataclass(frozen=True, eq=False)
class LocalWeights:
    """
    layers[k]: inner-weight vector (n_{k+1},) for activation layers, weight
    matrix (n_k, n_{k+1}) for summation layers, None for multiplication layers.
    """
    layers: tuple

    def copy(self):
        return LocalWeights(tuple(None if w is None else w.copy() for w in self.layers))


def weighted_neuron_mask(structure, k):
    library = structure.library
    n = structure.layer_sizes[k + 1]
    return np.array([library.neuron_op(j).has_inner_weight for j in range(n)], dtype=bool)


def live_masks(structure) -> List[np.ndarray]:
    """
    live[k][i] is True when neuron i of layer k has a path to an output.
    """
    K = structure.depth
    live = [None] * (K + 1)
    live[K] = np.ones(structure.layer_sizes[K], dtype=bool)
    for k in range(K - 1, -1, -1):
        z = structure.indicators[k].astype(bool)
        live[k] = (z & live[k + 1][None, :]).any(axis=1)
    return live


def trainable_masks(structure, live=None):
    if live is None:
        live = live_masks(structure)
    masks = []
    for k, kind in enumerate(structure.layer_kinds):
        if kind == constant.SUMMATION:
            masks.append(structure.indicators[k].astype(bool) & live[k + 1][None, :])
        elif kind == constant.ACTIVATION:
            masks.append(weighted_neuron_mask(structure, k) & live[k + 1])
        else:
            masks.append(None)
    return masks


def init_weights(structure, value) -> LocalWeights:
    layers = []
    for k, kind in enumerate(structure.layer_kinds):
        if kind == constant.SUMMATION:
            layers.append(np.full((structure.layer_sizes[k], structure.layer_sizes[k + 1]), float(value)))
        elif kind == constant.ACTIVATION:
            layers.append(np.full(structure.layer_sizes[k + 1], float(value)))
        else:
            layers.append(None)
    return LocalWeights(tuple(layers))


def parameter_slots(structure):
    """
    Ordered trainable parameters as (layer, index) pairs: summation weights
    first (layer order, row-major), then inner weights (layer order).
    """
    masks = trainable_masks(structure)
    slots = []
    for k, kind in enumerate(structure.layer_kinds):
        if kind == constant.SUMMATION:
            for i, j in zip(*np.nonzero(masks[k])):
                slots.append((k, (int(i), int(j))))
    for k, kind in enumerate(structure.layer_kinds):
        if kind == constant.ACTIVATION:
            for j in np.nonzero(masks[k])[0]:
                slots.append((k, int(j)))
    return slots


def weights_to_vector(structure, weights, slots=None):
    if slots is None:
        slots = parameter_slots(structure)
    return np.array([weights.layers[k][idx] for k, idx in slots], dtype=float)


def vector_to_weights(structure, vector, base=None, slots=None) -> LocalWeights:
    if slots is None:
        slots = parameter_slots(structure)
    if len(vector) != len(slots):
        raise ShapeError(f'parameter vector has {len(vector)} entries, structure has {len(slots)}')
    weights = (base if base is not None else init_weights(structure, 0.0)).copy()
    for (k, idx), value in zip(slots, vector):
        weights.layers[k][idx] = value
    return weights


def _check_input(structure, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != structure.n_inputs:
        raise ShapeError(f'input has {X.shape[1]} columns, structure expects {structure.n_inputs}')
    return X, single


def _activation_groups(structure, k, live):
    library = structure.library
    p = len(library)
    cols = np.nonzero(live[k + 1])[0]
    groups = []
    for op in library.ops:
        op_cols = cols[cols % p == op.id]
        if len(op_cols) > 0:
            groups.append((op, op_cols, op_cols // p))
    return groups


def _mult_inputs(structure, k, live):
    z = structure.indicators[k]
    result = []
    for j in np.nonzero(live[k + 1])[0]:
        idx = np.nonzero(z[:, j])[0]
        if len(idx) == 0:
            raise StructureError(f'multiplication neuron {j} of layer {k + 1} is used but has no inputs')
        result.append((int(j), idx))
    return result


def forward_cache(structure, weights, X):
    """
    Forward pass keeping every layer output and every activation argument.
    """
    X, _ = _check_input(structure, X)
    live = live_masks(structure)
    n = X.shape[0]
    hs, args = [X], [None] * structure.depth
    h = X
    for k, kind in enumerate(structure.layer_kinds):
        n_next = structure.layer_sizes[k + 1]
        out = np.zeros((n, n_next))
        if kind == constant.ACTIVATION:
            arg = np.zeros((n, n_next))
            w = weights.layers[k]
            for op, cols, src in _activation_groups(structure, k, live):
                z = h[:, src] * w[cols] if op.has_inner_weight else h[:, src]
                arg[:, cols] = z
                out[:, cols] = op.eval_raw(z)
            args[k] = arg
        elif kind == constant.MULTIPLICATION:
            for j, idx in _mult_inputs(structure, k, live):
                out[:, j] = np.prod(h[:, idx], axis=1)
        else:
            m = np.where(structure.indicators[k].astype(bool) & live[k + 1][None, :], weights.layers[k], 0.0)
            out = h @ m
        hs.append(out)
        h = out
    return hs, args, live


def forward(structure, weights, X):
    X, single = _check_input(structure, X)
    hs, _, _ = forward_cache(structure, weights, X)
    return hs[-1][0] if single else hs[-1]


def gradients(structure, weights, X, Y):
    """
    Loss 1/(2N) * sum of squared errors and its gradient shaped like the weights.
    """
    X, _ = _check_input(structure, X)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], structure.n_outputs)
    if X.shape[0] == 0:
        raise ShapeError('empty batch')
    hs, args, live = forward_cache(structure, weights, X)
    n = X.shape[0]
    err = hs[-1] - Y
    loss = float(np.sum(err * err) / (2.0 * n))
    g = err / n
    masks = trainable_masks(structure, live)
    grads = [None] * structure.depth
    for k in range(structure.depth - 1, -1, -1):
        kind = structure.layer_kinds[k]
        h = hs[k]
        g_prev = np.zeros_like(h)
        if kind == constant.SUMMATION:
            m = np.where(masks[k], weights.layers[k], 0.0)
            grads[k] = np.where(masks[k], h.T @ g, 0.0)
            g_prev = g @ m.T
        elif kind == constant.MULTIPLICATION:
            for j, idx in _mult_inputs(structure, k, live):
                for p in range(len(idx)):
                    others = np.delete(idx, p)
                    partial = np.prod(h[:, others], axis=1) if len(others) > 0 else np.ones(n)
                    g_prev[:, idx[p]] += g[:, j] * partial
        else:
            w = weights.layers[k]
            grad_w = np.zeros(structure.layer_sizes[k + 1])
            for op, cols, src in _activation_groups(structure, k, live):
                d_phi = op.eval_first(args[k][:, cols])
                upstream = g[:, cols] * d_phi
                if op.has_inner_weight:
                    grad_w[cols] = np.sum(upstream * h[:, src], axis=0)
                    np.add.at(g_prev, (slice(None), src), upstream * w[cols])
                else:
                    np.add.at(g_prev, (slice(None), src), upstream)
            grads[k] = np.where(masks[k], grad_w, 0.0)
        g = g_prev
    return loss, LocalWeights(tuple(grads))


def loss_value(structure, weights, X, Y):
    X, _ = _check_input(structure, X)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], structure.n_outputs)
    err = forward(structure, weights, X) - Y
    return float(np.sum(err * err) / (2.0 * X.shape[0]))


def directional_jets(structure, weights, X, direction):
    """
    Value, first and second derivative of the outputs along W + t*direction at t=0.

    Forward-mode second-order propagation; `direction` is LocalWeights-shaped.
    Returns three (N, n_out) arrays.
    """
    X, _ = _check_input(structure, X)
    live = live_masks(structure)
    masks = trainable_masks(structure, live)
    n = X.shape[0]
    h, h1, h2 = X, np.zeros_like(X), np.zeros_like(X)
    for k, kind in enumerate(structure.layer_kinds):
        n_next = structure.layer_sizes[k + 1]
        y, y1, y2 = np.zeros((n, n_next)), np.zeros((n, n_next)), np.zeros((n, n_next))
        if kind == constant.ACTIVATION:
            w = weights.layers[k]
            dw = np.where(masks[k], direction.layers[k], 0.0)
            for op, cols, src in _activation_groups(structure, k, live):
                if op.has_inner_weight:
                    z = h[:, src] * w[cols]
                    z1 = h1[:, src] * w[cols] + h[:, src] * dw[cols]
                    z2 = h2[:, src] * w[cols] + 2.0 * h1[:, src] * dw[cols]
                else:
                    z, z1, z2 = h[:, src], h1[:, src], h2[:, src]
                f1 = op.eval_first(z)
                y[:, cols] = op.eval_raw(z)
                y1[:, cols] = f1 * z1
                y2[:, cols] = op.eval_second(z) * z1 * z1 + f1 * z2
        elif kind == constant.MULTIPLICATION:
            for j, idx in _mult_inputs(structure, k, live):
                p, p1, p2 = np.ones(n), np.zeros(n), np.zeros(n)
                for i in idx:
                    f, f1, f2 = h[:, i], h1[:, i], h2[:, i]
                    p, p1, p2 = p * f, p1 * f + p * f1, p2 * f + 2.0 * p1 * f1 + p * f2
                y[:, j], y1[:, j], y2[:, j] = p, p1, p2
        else:
            m = np.where(masks[k], weights.layers[k], 0.0)
            dm = np.where(masks[k], direction.layers[k], 0.0)
            y = h @ m
            y1 = h1 @ m + h @ dm
            y2 = h2 @ m + 2.0 * h1 @ dm
        h, h1, h2 = y, y1, y2
    return h, h1, h2


def structure_to_dict(structure):
    return {
        'library': structure.library.names,
        'layer_kinds': list(structure.layer_kinds),
        'layer_sizes': list(structure.layer_sizes),
        'indicators': {str(k): structure.indicators[k].tolist()
                       for k, kind in enumerate(structure.layer_kinds) if kind != constant.ACTIVATION},
    }


def structure_from_dict(d):
    library = build_library(d['library'])
    kinds = list(d['layer_kinds'])
    sizes = list(d['layer_sizes'])
    zs = []
    for k, kind in enumerate(kinds):
        if kind == constant.ACTIVATION:
            zs.append(fanout_indicator(sizes[k], len(library)))
        else:
            z = d['indicators'].get(str(k))
            if z is None:
                raise StructureError(f'missing indicator for layer {k}')
            zs.append(np.array(z, dtype=np.int8).reshape(sizes[k], sizes[k + 1]))
    return LocalStructure(library, tuple(kinds), tuple(sizes), tuple(zs))


def weights_to_dict(weights):
    return {'layers': [None if w is None else w.tolist() for w in weights.layers]}


def weights_from_dict(d) -> LocalWeights:
    return LocalWeights(tuple(None if w is None else np.array(w, dtype=float) for w in d['layers']))


def describe(structure):
    bits = ','.join(''.join(str(int(b)) for b in z.flatten())
                    for k, z in enumerate(structure.indicators)
                    if structure.layer_kinds[k] != constant.ACTIVATION)
    return bits
