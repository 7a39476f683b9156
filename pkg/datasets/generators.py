"""
Benchmark systems: two synthetic equation sets, power-flow injections in
rectangular voltage coordinates, and a linear mass-damper network.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Optional

import numpy as np

from local_net.equation import CanonicalEquation, Factor, Term, canonicalize
from utils import constant
from utils.errors import ConfigError, DegenerateError, ShapeError

POW_VOLTAGE_RANGE = (0.9, 1.1)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[0] != self.Y.shape[0]:
            raise ShapeError(f'X {self.X.shape} and Y {self.Y.shape} do not line up')
        if self.X.shape[0] == 0:
            raise ShapeError('empty dataset')
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise DegenerateError(f'dataset {self.meta.get("name")} has NaN or inf entries')

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def sigma_y(self):
        return self.Y.std(axis=0)

    @property
    def truth(self) -> Optional[CanonicalEquation]:
        if self.meta.get('truth') is None:
            return None
        return CanonicalEquation.from_json(self.meta['truth'])


def make_dataset(X, Y, name, seed, input_ranges=None, truth=None, library=None, **extra):
    meta = {
        'name': name,
        'seed': seed,
        'snr': None,
        'n_inputs': int(X.shape[1]),
        'n_outputs': int(Y.shape[1]),
        'input_ranges': input_ranges,
        'sigma_y': Y.std(axis=0).tolist(),
        'library': library,
        'truth': None if truth is None else truth.to_json(),
    }
    meta.update(extra)
    return Dataset(X, Y, meta)


def _equation(outputs):
    return canonicalize(CanonicalEquation(tuple(tuple(terms) for terms in outputs)), prune_threshold=0.0)


def syn1_outputs(X):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    return np.column_stack([3.0 * x1 ** 2 * np.cos(2.5 * x2), 4.0 * x1 * x3, 3.0 * x3 ** 2])


def syn2_outputs(X):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    return np.column_stack([
        np.sqrt(2.2 * x1) * x2 + x1 * x2 ** 2,
        np.sin(1.8 * x1) * (np.log(3.0 * x2) + np.sqrt(x3)),
        np.sqrt(3.7 * x3) * np.log(1.6 * x1) + x1 ** 2,
    ])


def syn1_truth():
    return _equation([
        [Term(3.0, (Factor(0, 'square'), Factor(1, 'cos', 2.5)))],
        [Term(4.0, (Factor(0, 'id'), Factor(2, 'id')))],
        [Term(3.0, (Factor(2, 'square'),))],
    ])


def syn2_truth():
    return _equation([
        [Term(math.sqrt(2.2), (Factor(0, 'sqrt'), Factor(1, 'id'))),
         Term(1.0, (Factor(0, 'id'), Factor(1, 'square')))],
        [Term(1.0, (Factor(0, 'sin', 1.8), Factor(1, 'log', 3.0))),
         Term(1.0, (Factor(0, 'sin', 1.8), Factor(2, 'sqrt')))],
        [Term(math.sqrt(3.7), (Factor(0, 'log', 1.6), Factor(2, 'sqrt'))),
         Term(1.0, (Factor(0, 'square'),))],
    ])


def gen_syn(which, n_train=constant.SYN_SAMPLES, n_test=constant.SYN_SAMPLES, seed=0):
    """
    Train inputs from U(1,2), test inputs from U(3,4), three inputs each.
    """
    if which not in (1, 2):
        raise ConfigError(f'unknown synthetic set {which}, expected 1 or 2')
    if n_train < 1 or n_test < 1:
        raise ConfigError(f'sample counts must be positive, got {n_train} and {n_test}')
    rng = np.random.default_rng(seed)
    X_train = rng.uniform(*constant.SYN_TRAIN_RANGE, size=(n_train, 3))
    X_test = rng.uniform(*constant.SYN_TEST_RANGE, size=(n_test, 3))
    outputs, truth, library, name = (syn1_outputs, syn1_truth(), constant.SYN1_LIBRARY, constant.SYN1) if which == 1 \
        else (syn2_outputs, syn2_truth(), constant.SYN2_LIBRARY, constant.SYN2)
    train = make_dataset(X_train, outputs(X_train), name, seed, [list(constant.SYN_TRAIN_RANGE)] * 3, truth, library,
                         split='train')
    test = make_dataset(X_test, outputs(X_test), name, seed, [list(constant.SYN_TEST_RANGE)] * 3, truth, library,
                        split='test')
    logging.info(f'Generated {name}: {n_train} train and {n_test} test samples, seed {seed}')
    return train, test


def toy_outputs(X):
    return (3.0 * X[:, 0] ** 2 * np.cos(2.5 * X[:, 1]))[:, None]


def toy_truth():
    return _equation([[Term(3.0, (Factor(0, 'square'), Factor(1, 'cos', 2.5)))]])


def gen_toy(n_train=constant.TOY_SAMPLES, n_test=constant.TOY_SAMPLES, seed=0):
    """
    y = 3 x1^2 cos(2.5 x2) on two inputs, train from U(1,2), test from U(3,4).
    """
    if n_train < 1 or n_test < 1:
        raise ConfigError(f'sample counts must be positive, got {n_train} and {n_test}')
    rng = np.random.default_rng(seed)
    X_train = rng.uniform(*constant.SYN_TRAIN_RANGE, size=(n_train, 2))
    X_test = rng.uniform(*constant.SYN_TEST_RANGE, size=(n_test, 2))
    truth = toy_truth()
    train = make_dataset(X_train, toy_outputs(X_train), constant.TOY, seed, [list(constant.SYN_TRAIN_RANGE)] * 2,
                         truth, constant.TOY_LIBRARY, split='train')
    test = make_dataset(X_test, toy_outputs(X_test), constant.TOY, seed, [list(constant.SYN_TEST_RANGE)] * 2, truth,
                        constant.TOY_LIBRARY, split='test')
    logging.info(f'Generated {constant.TOY}: {n_train} train and {n_test} test samples, seed {seed}')
    return train, test


@dataclass(frozen=True, eq=False)
class PowerSystemSpec:
    G: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        G, B = self.G, self.B
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape != B.shape:
            raise ShapeError(f'G {G.shape} and B {B.shape} must be equal square matrices')
        if not (np.array_equal(G, G.T) and np.array_equal(B, B.T)):
            raise ConfigError('G and B must be symmetric')

    @property
    def m(self):
        return self.G.shape[0]

    def to_dict(self):
        return {'G': self.G.tolist(), 'B': self.B.tolist()}

    @staticmethod
    def from_dict(d):
        return PowerSystemSpec(np.array(d['G'], dtype=float), np.array(d['B'], dtype=float))


def random_power_spec(m, seed=0, extra_line_prob=0.3):
    """
    Admittance-Laplacian G and B over a random connected topology (a random
    spanning path plus extra lines).
    """
    if m < 2:
        raise ConfigError(f'a power system needs at least 2 nodes, got {m}')
    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    lines = {tuple(sorted((int(order[i]), int(order[i + 1])))) for i in range(m - 1)}
    for i in range(m):
        for j in range(i + 1, m):
            if (i, j) not in lines and rng.random() < extra_line_prob:
                lines.add((i, j))
    G, B = np.zeros((m, m)), np.zeros((m, m))
    for i, j in sorted(lines):
        g, b = rng.uniform(1.0, 5.0), rng.uniform(2.0, 10.0)
        G[i, j] = G[j, i] = -g
        B[i, j] = B[j, i] = b
        G[i, i] += g
        G[j, j] += g
        B[i, i] -= b
        B[j, j] -= b
    return PowerSystemSpec(G, B)


def power_outputs(spec, X):
    """
    Columns (p_1, q_1, ..., p_M, q_M) from X columns (u_1, v_1, ..., u_M, v_M).
    """
    U, V = X[:, 0::2], X[:, 1::2]
    GU, GV, BU, BV = U @ spec.G.T, V @ spec.G.T, U @ spec.B.T, V @ spec.B.T
    P = U * GU + V * GV + V * BU - U * BV
    Q = V * GU - U * GV - U * BU - V * BV
    Y = np.empty((X.shape[0], 2 * spec.m))
    Y[:, 0::2], Y[:, 1::2] = P, Q
    return Y


def power_truth(spec):
    def u(i):
        return 2 * i

    def v(i):
        return 2 * i + 1

    outputs = []
    for i in range(spec.m):
        p, q = [], []
        for m in range(spec.m):
            g, b = spec.G[i, m], spec.B[i, m]
            p += [Term(g, (Factor(u(i), 'id'), Factor(u(m), 'id'))), Term(g, (Factor(v(i), 'id'), Factor(v(m), 'id'))),
                  Term(b, (Factor(v(i), 'id'), Factor(u(m), 'id'))), Term(-b, (Factor(u(i), 'id'), Factor(v(m), 'id')))]
            q += [Term(g, (Factor(v(i), 'id'), Factor(u(m), 'id'))), Term(-g, (Factor(u(i), 'id'), Factor(v(m), 'id'))),
                  Term(-b, (Factor(u(i), 'id'), Factor(u(m), 'id'))), Term(-b, (Factor(v(i), 'id'), Factor(v(m), 'id')))]
        outputs += [p, q]
    return _equation(outputs)


def gen_power(spec, n, voltage_range=POW_VOLTAGE_RANGE, seed=0):
    if n < 1:
        raise ConfigError(f'sample count must be positive, got {n}')
    rng = np.random.default_rng(seed)
    X = rng.uniform(voltage_range[0], voltage_range[1], size=(n, 2 * spec.m))
    Y = power_outputs(spec, X)
    logging.info(f'Generated pow: {spec.m} nodes, {n} samples, seed {seed}')
    return make_dataset(X, Y, constant.POW, seed, [list(voltage_range)] * (2 * spec.m), power_truth(spec),
                        constant.LINEAR_LIBRARY, system=spec.to_dict())


@dataclass(frozen=True, eq=False)
class MassDamperSpec:
    D: np.ndarray
    r: np.ndarray
    m: np.ndarray
    step: float = constant.MAS_STEP_SECONDS
    duration: float = constant.MAS_DURATION_SECONDS

    def __post_init__(self):
        if self.D.ndim != 2 or self.D.shape[0] != len(self.m) or self.D.shape[1] != len(self.r):
            raise ShapeError(f'incidence {self.D.shape} does not match {len(self.m)} masses and {len(self.r)} dampers')
        if np.any(self.r <= 0) or np.any(self.m <= 0):
            raise ConfigError('damping and mass entries must be positive')
        if not (self.step > 0 and self.duration >= self.step):
            raise ConfigError(f'bad step {self.step} / duration {self.duration}')

    @property
    def n_nodes(self):
        return len(self.m)

    @property
    def A(self):
        return -self.D @ np.diag(self.r) @ self.D.T @ np.diag(1.0 / self.m)

    def to_dict(self):
        return {'D': self.D.tolist(), 'r': self.r.tolist(), 'm': self.m.tolist(), 'step': self.step,
                'duration': self.duration}

    @staticmethod
    def from_dict(d):
        return MassDamperSpec(np.array(d['D'], dtype=float), np.array(d['r'], dtype=float),
                              np.array(d['m'], dtype=float), d['step'], d['duration'])


def random_massdamper_spec(n, seed=0, chord_prob=0.2, step=constant.MAS_STEP_SECONDS,
                           duration=constant.MAS_DURATION_SECONDS):
    """
    Ring of dampers (a single grounded damper for one node, a line for two),
    random chords, and a damper to ground at node 0.
    """
    if n < 1:
        raise ConfigError(f'need at least one node, got {n}')
    rng = np.random.default_rng(seed)
    edges = []
    if n == 2:
        edges.append((0, 1))
    elif n > 2:
        edges += [(i, (i + 1) % n) for i in range(n)]
        for i in range(n):
            for j in range(i + 2, n):
                if not (i == 0 and j == n - 1) and rng.random() < chord_prob:
                    edges.append((i, j))
    columns = []
    for i, j in edges:
        col = np.zeros(n)
        col[i], col[j] = 1.0, -1.0
        columns.append(col)
    ground = np.zeros(n)
    ground[0] = 1.0
    columns.append(ground)
    D = np.column_stack(columns)
    r = rng.uniform(0.5, 2.0, size=D.shape[1])
    m = rng.uniform(1.0, 3.0, size=n)
    return MassDamperSpec(D, r, m, step, duration)


def massdamper_truth(spec):
    A = spec.A
    return _equation([[Term(float(A[i, j]), (Factor(j, 'id'),)) for j in range(spec.n_nodes)]
                      for i in range(spec.n_nodes)])


def gen_massdamper(spec, seed=0, q0=None):
    """
    Forward-Euler trajectory of q' = A q; X rows are q(t), Y rows are A q(t).
    """
    rng = np.random.default_rng(seed)
    A = spec.A
    q = rng.uniform(-1.0, 1.0, size=spec.n_nodes) if q0 is None else np.asarray(q0, dtype=float)
    steps = int(round(spec.duration / spec.step))
    X = np.empty((steps, spec.n_nodes))
    for t in range(steps):
        X[t] = q
        q = q + spec.step * (A @ q)
    Y = X @ A.T
    logging.info(f'Generated mas: {spec.n_nodes} nodes, {steps} steps of {spec.step}s, seed {seed}')
    return make_dataset(X, Y, constant.MAS, seed, None, massdamper_truth(spec), constant.LINEAR_LIBRARY,
                        system=spec.to_dict())


def add_noise(ds, snr_db, seed=0):
    """
    Gaussian noise per output column with std rms(column) * 10^(-snr_db/20).
    """
    if snr_db is None or math.isinf(snr_db):
        return ds
    if math.isnan(snr_db):
        raise ConfigError('snr_db is NaN')
    rng = np.random.default_rng(seed)
    rms = np.sqrt(np.mean(ds.Y ** 2, axis=0))
    std = rms * 10.0 ** (-snr_db / 20.0)
    Y = ds.Y + rng.normal(size=ds.Y.shape) * std
    meta = dict(ds.meta, snr=snr_db, sigma_y=Y.std(axis=0).tolist())
    return Dataset(ds.X.copy(), Y, meta)


def split_dataset(ds, fraction=0.5):
    """
    Leading `fraction` of the rows for training, the rest for testing.
    """
    cut = int(round(ds.n * fraction))
    if cut < 1 or cut >= ds.n:
        raise ConfigError(f'split of {ds.n} rows at {fraction} leaves an empty part')
    parts = []
    for name, rows in (('train', slice(0, cut)), ('test', slice(cut, ds.n))):
        X, Y = ds.X[rows].copy(), ds.Y[rows].copy()
        parts.append(Dataset(X, Y, dict(ds.meta, split=name, sigma_y=Y.std(axis=0).tolist())))
    return parts[0], parts[1]


def subsample(ds, n, seed=0):
    """
    n rows drawn without replacement, kept in their original order.
    """
    if not 1 <= n <= ds.n:
        raise ConfigError(f'cannot take {n} of {ds.n} rows')
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(ds.n, size=n, replace=False))
    X, Y = ds.X[rows].copy(), ds.Y[rows].copy()
    return Dataset(X, Y, dict(ds.meta, sigma_y=Y.std(axis=0).tolist(), subsample=n))


def select_outputs(ds, outputs):
    """
    Keep the listed output columns (1-based), truth equation included.
    """
    cols = [o - 1 for o in outputs]
    if len(cols) == 0 or min(cols) < 0 or max(cols) >= ds.Y.shape[1]:
        raise ConfigError(f'outputs {outputs} outside 1..{ds.Y.shape[1]}')
    Y = ds.Y[:, cols].copy()
    meta = dict(ds.meta, n_outputs=len(cols), sigma_y=Y.std(axis=0).tolist(), outputs=list(outputs))
    truth = ds.truth
    if truth is not None:
        meta['truth'] = CanonicalEquation(tuple(truth.outputs[c] for c in cols)).to_json()
    return Dataset(ds.X.copy(), Y, meta)
