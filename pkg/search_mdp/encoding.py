"""
Structure search as an MDP.

The state at stage k counts, per neuron of layer k, the input-to-neuron paths
(zero padded to n_s). An action at stage k is the flattened indicator Z_k,
row-major (entry i*n_{k+1} + j is the connection i -> j), zero padded to n_a.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from local_net import network
from utils import constant
from utils.errors import ShapeError, StructureError


@dataclass(frozen=True, eq=False)
class StateVec:
    values: np.ndarray
    stage: int

    def key(self):
        return (self.stage, tuple(int(v) for v in self.values))


@dataclass(frozen=True, eq=False)
class Transition:
    s: StateVec
    a: np.ndarray
    s_next: StateVec
    reward: float
    terminal: bool
    # searched stage that acts on s_next; None when terminal
    next_stage: Optional[int] = None


@dataclass(frozen=True, eq=False)
class SearchSpace:
    """
    A structure template plus the stages whose indicators are searched.

    Activation stages are the fixed fan-out and never searched; other stages
    not listed keep the template's indicator.
    """
    template: network.LocalStructure
    searched: Tuple[int, ...]

    def __post_init__(self):
        if len(self.searched) == 0:
            raise StructureError('nothing to search')
        for k in self.searched:
            if k < 0 or k >= self.template.depth:
                raise StructureError(f'stage {k} outside 0..{self.template.depth - 1}')
            if self.template.layer_kinds[k] == constant.ACTIVATION:
                raise StructureError(f'stage {k} is an activation fan-out and cannot be searched')
        if list(self.searched) != sorted(set(self.searched)):
            raise StructureError(f'searched stages must be increasing, got {self.searched}')

    @property
    def n_s(self):
        return max(self.template.layer_sizes)

    @property
    def n_a(self):
        sizes = self.template.layer_sizes
        return max(sizes[k] * sizes[k + 1] for k in self.searched)

    def stage_shape(self, k):
        return self.template.layer_sizes[k], self.template.layer_sizes[k + 1]

    def layer_kind(self, k):
        return self.template.layer_kinds[k]

    def is_last_searched(self, k):
        return k == self.searched[-1]

    def next_searched(self, k):
        later = [j for j in self.searched if j > k]
        return later[0] if len(later) > 0 else None

    def initial_state(self):
        return StateVec(initial_values(self.n_s, self.template.n_inputs), 0)

    def advance_fixed(self, s, until):
        """
        Apply template transitions from s.stage up to (not including) stage `until`.
        """
        while s.stage < until:
            k = s.stage
            if k in self.searched:
                raise StructureError(f'stage {k} is searched, it needs an action')
            n_k, n_k1 = self.stage_shape(k)
            a = action_from_indicator(self.template.indicators[k], self.n_a_for(k))
            s = transition(s, a, n_k, n_k1, self.n_s)
        return s

    def n_a_for(self, k):
        n_k, n_k1 = self.stage_shape(k)
        return max(self.n_a, n_k * n_k1)

    def first_state(self):
        """
        State at the first searched stage.
        """
        return self.advance_fixed(self.initial_state(), self.searched[0])

    def build(self, indicators):
        """
        Template with the searched stages replaced by `indicators` {stage: Z}.
        """
        structure = self.template
        for k, z in indicators.items():
            structure = structure.with_indicator(k, z)
        return structure


def initial_values(n_s, n_inputs):
    values = np.zeros(n_s, dtype=np.int64)
    values[:n_inputs] = 1
    return values


def transition(s, a, n_k, n_k1, n_s=None):
    """
    s' = Mat(a)^T s, zero padded to n_s; stage advanced by one.
    """
    a = np.asarray(a)
    values = np.asarray(s.values)
    if n_s is None:
        n_s = len(values)
    if n_k * n_k1 > len(a):
        raise ShapeError(f'{n_k}x{n_k1} stage needs {n_k * n_k1} action entries, got {len(a)}')
    if n_k > len(values) or n_k1 > n_s:
        raise ShapeError(f'{n_k}x{n_k1} stage does not fit a state of length {n_s}')
    mat = a[:n_k * n_k1].reshape(n_k, n_k1)
    out = np.zeros(n_s, dtype=values.dtype)
    out[:n_k1] = mat.T @ values[:n_k]
    return StateVec(out, s.stage + 1)


def indicator_from_action(a, n_k, n_k1):
    a = np.asarray(a)
    if n_k * n_k1 > len(a):
        raise ShapeError(f'{n_k}x{n_k1} stage needs {n_k * n_k1} action entries, got {len(a)}')
    return a[:n_k * n_k1].reshape(n_k, n_k1).astype(np.int8)


def action_from_indicator(z, n_a):
    z = np.asarray(z)
    if z.size > n_a:
        raise ShapeError(f'indicator {z.shape} does not fit {n_a} action entries')
    a = np.zeros(n_a, dtype=np.int8)
    a[:z.size] = z.reshape(-1)
    return a


def discretize(a_relaxed):
    return (np.asarray(a_relaxed, dtype=float) >= 0.5).astype(np.int8)


def action_bits(a, n_k, n_k1):
    return ''.join(str(int(b)) for b in np.asarray(a)[:n_k * n_k1])
