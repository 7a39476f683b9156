"""
Numerical convexity checks: segment tests on scalar fields, directional
second derivatives of the LoCaL loss, and the local convex region estimate
of a single activation/multiplication/summation block.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
from typing import List

import numpy as np
import pandas as pd

from local_net import network
from local_net.training import fit
from utils import constant
from utils import utils
from utils.errors import ConsistencyError, DegenerateError, DomainError, StructureError

FD_STEP = 1e-4
FD_ABS_TOL = 1e-6
SINGLE_BLOCK = (constant.ACTIVATION, constant.MULTIPLICATION, constant.SUMMATION)


def segment_convexity_test(f, lower, upper, n_triples=constant.SEGMENT_TRIPLES, tol=constant.SEGMENT_TOL, seed=0):
    """
    Count triples (u, v, lam) in the box with
    f(lam u + (1 - lam) v) > lam f(u) + (1 - lam) f(v) + tol.

    `f` maps an (n, d) array to n values.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise DegenerateError('segment test needs a finite box')
    rng = np.random.default_rng(seed)
    d = len(lower)
    U = lower + (upper - lower) * rng.random((n_triples, d))
    V = lower + (upper - lower) * rng.random((n_triples, d))
    lam = rng.random(n_triples)
    W = lam[:, None] * U + (1.0 - lam)[:, None] * V
    fu = np.asarray(f(U), dtype=float).reshape(-1)
    fv = np.asarray(f(V), dtype=float).reshape(-1)
    fw = np.asarray(f(W), dtype=float).reshape(-1)
    violations = int(np.sum(fw > lam * fu + (1.0 - lam) * fv + tol))
    logging.info(f'Segment test: {violations} violations in {n_triples} triples (tol {tol})')
    return violations


def direction_vector(structure, direction):
    """
    Direction as a vector over the trainable slots.
    """
    if isinstance(direction, network.LocalWeights):
        return network.weights_to_vector(structure, direction)
    return np.asarray(direction, dtype=float)


def random_unit_direction(structure, rng):
    x = rng.normal(size=len(network.parameter_slots(structure)))
    return x / np.linalg.norm(x)


def _along(structure, weights, x, t):
    slots = network.parameter_slots(structure)
    w = network.weights_to_vector(structure, weights, slots)
    return network.vector_to_weights(structure, w + t * x, base=weights, slots=slots)


def richardson_second(g, step=FD_STEP):
    """
    Central second difference at step h and h/2, combined to cancel the h^2 term.
    """
    g0 = g(0.0)

    def central(h):
        return (g(h) - 2.0 * g0 + g(-h)) / (h * h)

    return (4.0 * central(step / 2.0) - central(step)) / 3.0


def richardson_first(g, step=FD_STEP):
    def central(h):
        return (g(h) - g(-h)) / (2.0 * h)

    return (4.0 * central(step / 2.0) - central(step)) / 3.0


def _check_close(a, b, rel_tol, what):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    gap = np.abs(a - b)
    allowed = rel_tol * np.maximum(np.abs(a), np.abs(b)) + FD_ABS_TOL
    if np.any(gap > allowed):
        worst = int(np.argmax(gap - allowed))
        raise ConsistencyError(f'{what}: finite differences {a.reshape(-1)[worst]} vs analytic '
                               f'{b.reshape(-1)[worst]}')


def loss_second_derivative(structure, weights, X, Y, direction, rel_tol=constant.PROBE_REL_TOL, step=FD_STEP):
    """
    d^2/dt^2 L(W + t X) at t = 0 as (1/N) sum(y'^2 + e y''), checked against
    Richardson finite differences of L.
    """
    x = direction_vector(structure, direction)
    if not np.any(x != 0):
        raise DegenerateError('zero probe direction')
    X_in = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X_in.shape[0], structure.n_outputs)
    dir_weights = network.vector_to_weights(structure, x)
    y, y1, y2 = network.directional_jets(structure, weights, X_in, dir_weights)
    e = y - Y
    analytic = float(np.sum(y1 * y1 + e * y2) / X_in.shape[0])
    numeric = richardson_second(lambda t: network.loss_value(structure, _along(structure, weights, x, t), X_in, Y),
                                step)
    _check_close(numeric, analytic, rel_tol, 'loss second derivative')
    return analytic


def fd_directional_derivs(structure, weights, X, direction, step=FD_STEP):
    """
    Richardson finite-difference first and second derivative of the outputs.
    """
    x = direction_vector(structure, direction)

    def g(t):
        return network.forward(structure, _along(structure, weights, x, t), X)

    return richardson_first(g, step), richardson_second(g, step)


def _single_block_check(structure):
    if tuple(structure.layer_kinds) != SINGLE_BLOCK:
        raise StructureError(f'needs one activation, multiplication and summation layer, got {structure.layer_kinds}')


def _uvw(structure, weights, X, x):
    """
    Returns (P, Pv, Pw2, dW) for the block: products P, their first
    t-derivative P*v and second t-derivative P*(v*v + w), each (N, n_mult).
    """
    dir_weights = network.vector_to_weights(structure, x)
    live = network.live_masks(structure)
    masks = network.trainable_masks(structure, live)
    library = structure.library
    p = len(library)
    z_mult = structure.indicators[1]
    n, n_mult = X.shape[0], structure.layer_sizes[2]
    inner, d_inner = weights.layers[0], np.where(masks[0], dir_weights.layers[0], 0.0)
    P = np.zeros((n, n_mult))
    v = np.zeros((n, n_mult))
    w = np.zeros((n, n_mult))
    for j in range(n_mult):
        if not live[2][j]:
            continue
        log_abs = np.zeros(n)
        sign = np.ones(n)
        for i in np.nonzero(z_mult[:, j])[0]:
            op = library.neuron_op(i)
            src = X[:, i // p]
            if op.has_inner_weight:
                arg, d_arg = inner[i] * src, d_inner[i] * src
            else:
                arg, d_arg = src, np.zeros(n)
            phi = op.eval_raw(arg)
            if np.any(phi == 0):
                raise DomainError(f'factor {op.name} of neuron {j} vanishes, log form undefined', op_name=op.name)
            ratio1 = op.eval_first(arg) / phi
            ratio2 = op.eval_second(arg) / phi
            log_abs += np.log(np.abs(phi))
            sign *= np.sign(phi)
            v[:, j] += ratio1 * d_arg
            w[:, j] += (ratio2 - ratio1 * ratio1) * d_arg * d_arg
        P[:, j] = sign * np.exp(log_abs)
    W2 = np.where(masks[2], weights.layers[2], 0.0)
    dW2 = np.where(masks[2], dir_weights.layers[2], 0.0)
    return P, v, w, W2, dW2


def analytic_directional_derivs(structure, weights, X, direction):
    """
    y' and y'' along `direction` through the exp/log form of the products:

        u = exp(S^T log|phi|) (signed), v = S^T (phi'/phi dz), w = S^T ((phi''/phi - (phi'/phi)^2) dz^2)
        y'  = dW^T u + W^T (u v)
        y'' = 2 dW^T (u v) + W^T (u (v v + w))

    X may be one sample or a batch; outputs are (n_out,) or (N, n_out), floats for one scalar output.
    """
    _single_block_check(structure)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    x = direction_vector(structure, direction)
    if not np.any(x != 0):
        zeros = np.zeros((X2.shape[0], structure.n_outputs))
        y1, y2 = zeros, zeros.copy()
    else:
        P, v, w, W2, dW2 = _uvw(structure, weights, X2, x)
        y1 = P @ dW2 + (P * v) @ W2
        y2 = 2.0 * (P * v) @ dW2 + (P * (v * v + w)) @ W2
    if single:
        y1, y2 = y1[0], y2[0]
        if structure.n_outputs == 1:
            return float(y1[0]), float(y2[0])
    return y1, y2


@dataclass
class RegionEstimate:
    eta: float
    abs_y_prime: List[list] = field(default_factory=list)
    max_residual: float = 0.0
    membership: bool = False
    lhs: List[float] = field(default_factory=list)
    n_directions: int = 0

    def to_dict(self):
        return {
            'eta': self.eta,
            'max_residual': self.max_residual,
            'membership': self.membership,
            'lhs_per_direction': self.lhs,
            'min_abs_y_prime': [min(r) for r in self.abs_y_prime],
            'max_abs_y_prime': [max(r) for r in self.abs_y_prime],
            'n_directions': self.n_directions,
        }


def estimate_region(structure, weights, X, Y, n_directions=100, seed=0, guard=constant.DERIVATIVE_GUARD):
    """
    eta = max |y''| / |y'| over sampled unit directions and samples; the
    weights are inside the region when, for every direction,
    min |y'|^2 / (eta max |y'|) exceeds the largest residual.
    """
    _single_block_check(structure)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], structure.n_outputs)
    rng = np.random.default_rng(seed)
    residual = float(np.max(np.abs(network.forward(structure, weights, X) - Y)))
    eta = 0.0
    per_direction = []
    for _ in range(n_directions):
        x = random_unit_direction(structure, rng)
        y1, y2 = analytic_directional_derivs(structure, weights, X, x)
        a1, a2 = np.abs(y1).reshape(-1), np.abs(y2).reshape(-1)
        ok = a1 > guard
        if np.any(ok):
            eta = max(eta, float(np.max(a2[ok] / a1[ok])))
        per_direction.append(a1)
    if eta == 0.0 and not any(np.any(a > guard) for a in per_direction):
        raise DegenerateError(f'every |y\'| is below {guard}, no region estimate at these weights')
    if eta == 0.0:
        # second derivatives vanish everywhere: any positive eta bounds the ratio
        eta = guard
    lhs = [float(np.min(a) ** 2 / (eta * np.max(a))) if np.max(a) > 0 else 0.0 for a in per_direction]
    membership = all(value > residual for value in lhs)
    logging.info(f'Region estimate: eta {eta:.6g}, max residual {residual:.3g}, membership {membership}')
    return RegionEstimate(eta, [a.tolist() for a in per_direction], residual, membership, lhs, n_directions)


def _sweep_point(structure, X, Y, w0, train_cfg):
    cfg = replace(train_cfg, init_value=float(w0))
    try:
        _, loss = fit(structure, cfg, X, Y)
    except DomainError as e:
        logging.error(f'Sweep w0={w0}: domain failure {e}')
        loss = float('inf')
    if not np.isfinite(loss):
        loss = float('inf')
    logging.info(f'Sweep w0={w0}: final loss {loss:.6g}')
    return loss


def init_sweep(structure, X, Y, w0_grid, train_cfg, threads=None):
    """
    Final loss after fitting from every trainable weight set to w0, one row per grid point.
    """
    if len(w0_grid) == 0:
        raise DegenerateError('empty initialization grid')
    threads = threads or utils.get_thread_count()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        losses = list(pool.map(lambda w0: _sweep_point(structure, X, Y, w0, train_cfg), w0_grid))
    return pd.DataFrame({'w0': [float(w) for w in w0_grid], 'final_loss': losses})


def probe_table(structure, weights, X, Y, n_directions, seed=0, rel_tol=constant.PROBE_REL_TOL):
    """
    Per direction: mean y', mean y'' and the checked d^2L/dt^2.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for d in range(n_directions):
        x = random_unit_direction(structure, rng)
        _, y1, y2 = network.directional_jets(structure, weights, X, network.vector_to_weights(structure, x))
        rows.append({'direction': d, 'y_prime_mean': float(np.mean(y1)), 'y_doubleprime_mean': float(np.mean(y2)),
                     'd2_loss': loss_second_derivative(structure, weights, X, Y, x, rel_tol)})
    return pd.DataFrame(rows)
