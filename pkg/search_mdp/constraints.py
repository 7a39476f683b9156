"""
Static and dynamic symbolic constraints on search actions.

Static: every multiplication neuron takes at most `max_factors_per_neuron`
inputs and every summation neuron at most `max_terms_per_output`.
Dynamic: connections on the path to a neuron that tracks an output almost
linearly are frozen to 1 for the rest of the search.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import itertools
import logging
from math import comb
from typing import FrozenSet, Optional, Tuple

import numpy as np

from search_mdp.encoding import indicator_from_action, transition, action_from_indicator
from utils import constant
from utils.errors import ConfigError

STATIC = 'static'
FROZEN = 'frozen'
EMPTY_FANIN = 'empty_fanin'
DEAD_INPUT = 'dead_input'


@dataclass(frozen=True)
class ConstraintConfig:
    max_factors_per_neuron: int = constant.MAX_FACTORS_PER_NEURON
    corr_keep_threshold: float = constant.CORR_KEEP_THRESHOLD
    frozen_paths: FrozenSet[Tuple[int, int, int]] = field(default_factory=frozenset)
    # None means the same cap as max_factors_per_neuron
    max_terms_per_output: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.corr_keep_threshold <= 1:
            raise ConfigError(f'corr_keep_threshold must be in (0, 1], got {self.corr_keep_threshold}')
        if self.max_factors_per_neuron < 1:
            raise ConfigError(f'max_factors_per_neuron must be >= 1, got {self.max_factors_per_neuron}')
        if self.max_terms_per_output is not None and self.max_terms_per_output < 1:
            raise ConfigError(f'max_terms_per_output must be >= 1, got {self.max_terms_per_output}')

    def fanin_cap(self, layer_kind):
        if layer_kind == constant.SUMMATION and self.max_terms_per_output is not None:
            return self.max_terms_per_output
        return self.max_factors_per_neuron

    def frozen_at(self, stage):
        return sorted((i, j) for k, i, j in self.frozen_paths if k == stage)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Optional[str] = None
    detail: str = ''

    def __bool__(self):
        return self.accepted


ACCEPT = Verdict(True)


def check_constraints(s_next, a, cfg, stage, layer_kind, n_k, n_k1, s=None, is_last=False, next_indicator=None):
    """
    Accept or reject a discrete action at `stage`.

    Rejects on a fan-in above the static cap, a dropped frozen connection, a
    connection leaving a neuron with no input path (needs the current state
    `s`), an output with no input path when `is_last`, or a neuron without
    input path that the fixed next stage `next_indicator` reads from.
    """
    z = indicator_from_action(a, n_k, n_k1)
    if layer_kind != constant.ACTIVATION:
        cap = cfg.fanin_cap(layer_kind)
        fanin = z.sum(axis=0)
        over = np.nonzero(fanin > cap)[0]
        if len(over) > 0:
            return Verdict(False, STATIC, f'neuron {int(over[0])} of layer {stage + 1} has {int(fanin[over[0]])} inputs, cap {cap}')
    for i, j in cfg.frozen_at(stage):
        if i < n_k and j < n_k1 and z[i, j] == 0:
            return Verdict(False, FROZEN, f'frozen connection {i}->{j} at stage {stage} dropped')
    if s is not None:
        dead = np.asarray(s.values)[:n_k] == 0
        used_dead = np.nonzero(dead & (z.sum(axis=1) > 0))[0]
        if len(used_dead) > 0:
            return Verdict(False, DEAD_INPUT, f'neuron {int(used_dead[0])} of layer {stage} has no input path but is used')
    if is_last:
        empty = np.nonzero(np.asarray(s_next.values)[:n_k1] == 0)[0]
        if len(empty) > 0:
            return Verdict(False, EMPTY_FANIN, f'output {int(empty[0])} has no input path')
    if next_indicator is not None:
        used = np.asarray(next_indicator).sum(axis=1) > 0
        empty = np.nonzero(used & (np.asarray(s_next.values)[:n_k1] == 0))[0]
        if len(empty) > 0:
            return Verdict(False, EMPTY_FANIN, f'neuron {int(empty[0])} of layer {stage + 1} is read downstream but has no input path')
    return ACCEPT


def stage_context(space, stage):
    """
    (is_last, next_indicator) arguments of check_constraints for `stage`.
    """
    is_last = stage == space.template.depth - 1
    nxt = stage + 1
    next_indicator = None
    if not is_last and nxt not in space.searched:
        next_indicator = space.template.indicators[nxt]
    return is_last, next_indicator


def _paths_to(structure, layer, neuron):
    """
    (stage, i, j) connections lying on some input path to `neuron` of `layer`.
    """
    edges = set()
    frontier = {neuron}
    for k in range(layer - 1, -1, -1):
        z = structure.indicators[k]
        nxt = set()
        for j in frontier:
            for i in np.nonzero(z[:, j])[0]:
                edges.add((k, int(i), int(j)))
                nxt.add(int(i))
        frontier = nxt
    return edges


def _within_caps(cfg, structure, edges):
    fanin = {}
    for stage, _, j in edges:
        fanin[(stage, j)] = fanin.get((stage, j), 0) + 1
    return all(n <= cfg.fanin_cap(structure.layer_kinds[stage]) for (stage, _), n in fanin.items()
               if structure.layer_kinds[stage] != constant.ACTIVATION)


def update_frozen_paths(cfg, layer_outputs, targets, structure):
    """
    Freeze the full path to every neuron of the last hidden layer whose Pearson
    correlation with some output exceeds the keep threshold in magnitude,
    together with its connection to that output.
    A path is skipped when freezing it would push some fan-in over its cap.
    """
    H = np.asarray(layer_outputs, dtype=float)
    Y = np.asarray(targets, dtype=float).reshape(H.shape[0], -1)
    if H.shape[0] < 2:
        return cfg
    K = structure.depth
    live = np.nonzero(structure.indicators[K - 1].sum(axis=1) > 0)[0]
    frozen = set(cfg.frozen_paths)
    for j in live:
        h = H[:, j]
        if not np.all(np.isfinite(h)) or np.std(h) == 0:
            continue
        for o in range(Y.shape[1]):
            y = Y[:, o]
            if np.std(y) == 0:
                continue
            r = np.corrcoef(h, y)[0, 1]
            if abs(r) > cfg.corr_keep_threshold:
                edges = {e for e in _paths_to(structure, K - 1, int(j))
                         if structure.layer_kinds[e[0]] != constant.ACTIVATION}
                edges.add((K - 1, int(j), o))
                if not _within_caps(cfg, structure, frozen | edges):
                    logging.info(f'Not freezing path to neuron {int(j)} of layer {K - 1}: frozen fan-in would exceed the cap')
                    continue
                if not edges <= frozen:
                    logging.info(f'Freezing path to neuron {int(j)} of layer {K - 1}: corr {r:.5f} with y{o + 1}')
                frozen |= edges
    if frozen == set(cfg.frozen_paths):
        return cfg
    return replace(cfg, frozen_paths=frozenset(frozen))


def action_bounds(space, stage, cfg, s=None):
    """
    Box for the relaxed action: padding and connections from dead neurons are
    pinned to 0, frozen connections to 1.
    """
    n_k, n_k1 = space.stage_shape(stage)
    lower = np.zeros(space.n_a)
    upper = np.zeros(space.n_a)
    z_upper = np.ones((n_k, n_k1))
    if s is not None:
        z_upper[np.asarray(s.values)[:n_k] == 0, :] = 0.0
    z_lower = np.zeros((n_k, n_k1))
    for i, j in cfg.frozen_at(stage):
        if i < n_k and j < n_k1:
            z_lower[i, j] = 1.0
    upper[:n_k * n_k1] = np.maximum(z_upper, z_lower).reshape(-1)
    lower[:n_k * n_k1] = z_lower.reshape(-1)
    return lower, upper


def _random_column(rng, eligible, forced, cap, at_least_one):
    room = cap - len(forced)
    if room < 0:
        return list(forced)
    sizes = list(range(0, min(room, len(eligible)) + 1))
    if at_least_one and len(forced) == 0:
        sizes = [m for m in sizes if m >= 1]
        if len(sizes) == 0:
            return []
    # uniform over subsets: size m is drawn with weight C(|eligible|, m)
    weights = np.array([comb(len(eligible), m) for m in sizes], dtype=float)
    m = int(rng.choice(sizes, p=weights / weights.sum()))
    picked = rng.choice(eligible, size=m, replace=False) if m > 0 else []
    return list(forced) + [int(i) for i in picked]


def random_valid_action(space, stage, cfg, s, rng, draws=constant.RANDOM_ACTION_DRAWS):
    """
    Uniform draw among constraint-valid discrete actions by rejection
    sampling; None when `draws` attempts all fail.
    """
    n_k, n_k1 = space.stage_shape(stage)
    kind = space.layer_kind(stage)
    cap = cfg.fanin_cap(kind)
    alive = np.nonzero(np.asarray(s.values)[:n_k] > 0)[0]
    forced_by_col = {j: [] for j in range(n_k1)}
    for i, j in cfg.frozen_at(stage):
        if i < n_k and j < n_k1:
            forced_by_col[j].append(i)
    is_last, next_indicator = stage_context(space, stage)
    for _ in range(draws):
        z = np.zeros((n_k, n_k1), dtype=np.int8)
        for j in range(n_k1):
            forced = forced_by_col[j]
            eligible = np.array([i for i in alive if i not in forced], dtype=int)
            needed = is_last or (next_indicator is not None and next_indicator[j].sum() > 0)
            for i in _random_column(rng, eligible, forced, cap, needed):
                z[i, j] = 1
        a = action_from_indicator(z, space.n_a)
        s_next = transition(s, a, n_k, n_k1, space.n_s)
        if check_constraints(s_next, a, cfg, stage, kind, n_k, n_k1, s=s, is_last=is_last,
                             next_indicator=next_indicator):
            return a
    return None


def feasible_actions(space, stage, cfg, s, max_bits=constant.MAX_ENUMERATED_BITS):
    """
    Every constraint-valid discrete action at `stage` as (a, s_next), in
    lexicographic order of the flattened indicator.
    """
    n_k, n_k1 = space.stage_shape(stage)
    bits = n_k * n_k1
    if bits > max_bits:
        raise ConfigError(f'stage {stage} has {bits} connections, too many to enumerate')
    kind = space.layer_kind(stage)
    is_last, next_indicator = stage_context(space, stage)
    for combo in itertools.product((0, 1), repeat=bits):
        a = action_from_indicator(np.array(combo, dtype=np.int8).reshape(n_k, n_k1), space.n_a)
        s_next = transition(s, a, n_k, n_k1, space.n_s)
        if check_constraints(s_next, a, cfg, stage, kind, n_k, n_k1, s=s, is_last=is_last,
                             next_indicator=next_indicator):
            yield a, s_next
