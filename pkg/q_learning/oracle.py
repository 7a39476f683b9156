"""
Greedy decoding of a trained -Q and brute-force enumeration of tiny search spaces.
"""
from __future__ import annotations

import logging

from local_net.training import TrainConfig
from q_learning.agent import QLearnConfig, effective_constraints, score_structure, greedy_action
from search_mdp.constraints import check_constraints, feasible_actions, stage_context
from search_mdp.encoding import action_from_indicator, indicator_from_action, transition
from utils.errors import EpisodeAborted


def greedy_decode(objective, space, constraints, cfg=None, seed=0):
    """
    epsilon = 0 rollout without fitting: every searched stage takes the greedy
    action of `objective` (a Q network or a torch callable). Raises
    EpisodeAborted only when a stage has no valid action at all.
    Returns (structure, {stage: action}).
    """
    cfg = cfg or QLearnConfig()
    constraints = effective_constraints(cfg, constraints, space)
    s = space.first_state()
    actions, indicators = {}, {}
    for k in range(space.searched[0], space.template.depth):
        n_k, n_k1 = space.stage_shape(k)
        if k not in space.searched:
            s = transition(s, action_from_indicator(space.template.indicators[k], space.n_a_for(k)), n_k, n_k1,
                           space.n_s)
            continue
        a, _ = greedy_action(objective, cfg, space, k, constraints, s, seed + k)
        if a is None:
            raise EpisodeAborted(f'no valid action at stage {k}', stage=k, rejects=0)
        s_next = transition(s, a, n_k, n_k1, space.n_s)
        is_last, next_indicator = stage_context(space, k)
        verdict = check_constraints(s_next, a, constraints, k, space.layer_kind(k), n_k, n_k1, s=s,
                                    is_last=is_last, next_indicator=next_indicator)
        if not verdict.accepted:
            raise EpisodeAborted(f'greedy action rejected at stage {k}: {verdict.detail}', stage=k, rejects=1)
        actions[k] = a
        indicators[k] = indicator_from_action(a, n_k, n_k1)
        s = s_next
    return space.build(indicators), actions


def enumerate_structures(space, constraints):
    """
    Every constraint-valid assignment of the searched stages, as
    (structure, {stage: action}) pairs.
    """
    def walk(k, s, actions):
        if k == space.template.depth:
            indicators = {j: indicator_from_action(a, *space.stage_shape(j)) for j, a in actions.items()}
            yield space.build(indicators), dict(actions)
            return
        n_k, n_k1 = space.stage_shape(k)
        if k not in space.searched:
            a = action_from_indicator(space.template.indicators[k], space.n_a_for(k))
            yield from walk(k + 1, transition(s, a, n_k, n_k1, space.n_s), actions)
            return
        for a, s_next in feasible_actions(space, k, constraints, s):
            actions[k] = a
            yield from walk(k + 1, s_next, actions)
            del actions[k]

    yield from walk(space.searched[0], space.first_state(), {})


def exhaustive_search(space, constraints, X, Y, train_cfg=None):
    """
    Fit and score every valid structure; results sorted by reward, best first.
    """
    train_cfg = train_cfg or TrainConfig()
    results = []
    for structure, actions in enumerate_structures(space, constraints):
        weights, loss, value, reward = score_structure(structure, train_cfg, X, Y)
        results.append({'structure': structure, 'actions': actions, 'weights': weights, 'loss': loss,
                        'nrmse': value, 'reward': reward})
    results.sort(key=lambda r: -r['reward'])
    logging.info(f'Exhaustive search scored {len(results)} structures')
    return results
