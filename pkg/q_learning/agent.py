"""
Double convex deep Q-learning over LoCaL structures.

Both networks are ICNNs of the concatenated (state, action): `rnet` models
-R(s, a) and `qnet` models -Q(s, a). The greedy action at a state is the
minimizer of -Q over the relaxed action box, discretized at 0.5. With
`use_convex_q` off, Q is a plain MLP and its argmax runs over valid discrete
actions instead.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
import logging
import time
from typing import List, Optional

import numpy as np
import torch

from icnn.minimizer import minimize_over_box, objective_values
from icnn.network import IcnnNet, MlpNet, icnn_fit, icnn_forward, icnn_to_dict, as_input
from local_net import network
from local_net.equation import extract_equation
from local_net.training import TrainConfig, fit
from metrics.metrics import nrmse
from q_learning.replay import ReplayBuffer
from search_mdp.constraints import (ConstraintConfig, action_bounds, check_constraints, feasible_actions,
                                    random_valid_action, stage_context, update_frozen_paths)
from search_mdp.encoding import Transition, discretize, indicator_from_action, transition, action_bits, \
    action_from_indicator
from utils import constant
from utils.errors import ConfigError, DegenerateError, DomainError, EpisodeAborted

NRMSE_CAP = 1e12
GREEDY = 'greedy'
RANDOM = 'random'


@dataclass(frozen=True)
class QLearnConfig:
    gamma: float = constant.GAMMA
    epsilon: float = constant.EPSILON
    max_episodes: int = constant.MAX_EPISODES
    stop_lambda: float = constant.STOP_LAMBDA
    target_update_interval: int = constant.TARGET_UPDATE_INTERVAL
    buffer_capacity: int = constant.BUFFER_CAPACITY
    minibatch_size: int = constant.MINIBATCH_SIZE
    q_lr: float = constant.Q_LEARNING_RATE
    r_lr: float = constant.R_LEARNING_RATE
    q_epochs: int = constant.Q_EPOCHS
    r_epochs: int = constant.R_EPOCHS
    minimizer_restarts: int = constant.MINIMIZER_RESTARTS
    minimizer_steps: int = constant.MINIMIZER_STEPS
    retry_cap: int = constant.CONSTRAINT_RETRY_CAP
    icnn_hidden_layers: int = constant.ICNN_HIDDEN_LAYERS
    icnn_width: int = constant.ICNN_WIDTH
    polish_epochs: int = constant.POLISH_EPOCHS
    # None waits for a full minibatch
    min_buffer_size: Optional[int] = None
    use_epsilon_greedy: bool = True
    use_static_constraint: bool = True
    use_dynamic_constraint: bool = True
    use_convex_q: bool = True

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError(f'gamma must be in (0, 1), got {self.gamma}')
        if not 0 <= self.epsilon <= 1:
            raise ConfigError(f'epsilon must be in [0, 1], got {self.epsilon}')
        if not self.stop_lambda > 0:
            raise ConfigError(f'stop_lambda must be positive, got {self.stop_lambda}')
        if self.target_update_interval < 1:
            raise ConfigError(f'target_update_interval must be >= 1, got {self.target_update_interval}')
        if self.max_episodes < 1 or self.minibatch_size < 1 or self.buffer_capacity < 1:
            raise ConfigError('max_episodes, minibatch_size and buffer_capacity must be >= 1')
        if self.minimizer_restarts < 1 or self.retry_cap < 1:
            raise ConfigError('minimizer_restarts and retry_cap must be >= 1')
        if self.min_buffer_size is not None and self.min_buffer_size < 1:
            raise ConfigError(f'min_buffer_size must be >= 1, got {self.min_buffer_size}')


@dataclass
class EpisodeLog:
    episode: int
    reward: Optional[float] = None
    nrmse: Optional[float] = None
    actions: List[str] = field(default_factory=list)
    relaxed: List[list] = field(default_factory=list)
    branches: List[str] = field(default_factory=list)
    rejects: int = 0
    seconds: float = 0.0
    aborted: bool = False
    reason: str = ''
    best_reward: Optional[float] = None
    equation: str = ''

    def to_row(self):
        # wall time goes to a separate table so this row is reproducible
        return {
            'episode': self.episode,
            'reward': self.reward,
            'nrmse': self.nrmse,
            'best_reward': self.best_reward,
            'actions': ' '.join(self.actions),
            'branches': ' '.join(self.branches),
            'rejects': self.rejects,
            'aborted': int(self.aborted),
            'reason': self.reason,
        }


@dataclass
class Episode:
    structure: network.LocalStructure
    weights: network.LocalWeights
    transitions: List[Transition]
    relaxed_pairs: list
    reward: float
    nrmse: float
    log: EpisodeLog


@dataclass
class SearchResult:
    best_structure: Optional[network.LocalStructure]
    best_weights: Optional[network.LocalWeights]
    best_reward: float
    best_nrmse: float
    best_episode: int
    logs: List[EpisodeLog]
    snapshots: list
    qnet: torch.nn.Module
    rnet: IcnnNet
    constraints: ConstraintConfig
    final_loss: Optional[float] = None
    stopped_episode: int = 0


def reward_from_nrmse(value):
    return 1.0 / (1.0 + value)


def score_structure(structure, train_cfg, X, Y, init_weights=None):
    """
    Fit a candidate and score it; returns (weights, loss, nrmse, reward).

    A domain failure during the fit keeps the last in-domain weights; a
    candidate that cannot be evaluated at all, or whose NRMSE is undefined
    because a target column is constant, scores NRMSE_CAP.
    """
    try:
        weights, loss = fit(structure, train_cfg, X, Y, init_weights=init_weights)
    except DomainError as e:
        logging.error(f'Domain failure while fitting {network.describe(structure)}: {e}')
        weights = e.last_weights if e.last_weights is not None else network.init_weights(structure, train_cfg.init_value)
        loss = None
    try:
        pred = network.forward(structure, weights, X)
        if loss is None:
            loss = network.loss_value(structure, weights, X, Y)
        value = nrmse(pred, Y) if np.all(np.isfinite(pred)) else NRMSE_CAP
    except DomainError:
        value, loss = NRMSE_CAP, float('inf')
    except DegenerateError as e:
        logging.error(f'Cannot score {network.describe(structure)}: {e}')
        value = NRMSE_CAP
    value = min(float(value), NRMSE_CAP)
    return weights, loss, value, reward_from_nrmse(value)


def effective_constraints(cfg, constraints, space):
    if cfg.use_static_constraint:
        return constraints
    unbounded = max(space.template.layer_sizes)
    return replace(constraints, max_factors_per_neuron=unbounded, max_terms_per_output=unbounded)


def _is_valid(space, stage, constraints, s, a):
    n_k, n_k1 = space.stage_shape(stage)
    is_last, next_indicator = stage_context(space, stage)
    s_next = transition(s, a, n_k, n_k1, space.n_s)
    return bool(check_constraints(s_next, a, constraints, stage, space.layer_kind(stage), n_k, n_k1, s=s,
                                  is_last=is_last, next_indicator=next_indicator))


def candidate_actions(space, stage, constraints, s, rng):
    """
    Valid discrete actions at `stage`: all of them on small stages, otherwise
    up to GREEDY_SAMPLED_ACTIONS distinct random draws.
    """
    n_k, n_k1 = space.stage_shape(stage)
    if n_k * n_k1 <= constant.GREEDY_ENUMERATED_BITS:
        return [a for a, _ in feasible_actions(space, stage, constraints, s, max_bits=constant.GREEDY_ENUMERATED_BITS)]
    drawn = {}
    for _ in range(constant.GREEDY_SAMPLED_ACTIONS):
        a = random_valid_action(space, stage, constraints, s, rng)
        if a is not None:
            drawn.setdefault(a.tobytes(), a)
    return list(drawn.values())


def best_candidate(objective, s, candidates):
    """
    (a, value) of the candidate with the lowest objective, (None, inf) when
    there is none.
    """
    if len(candidates) == 0:
        return None, float('inf')
    A = torch.as_tensor(np.vstack(candidates).astype(float))
    S = torch.as_tensor(np.asarray(s.values, dtype=float)).reshape(1, -1).expand(A.shape[0], -1)
    with torch.no_grad():
        values = objective_values(objective, S, A).numpy()
    best = int(np.argmin(values))
    return candidates[best], float(values[best])


def greedy_action(qnet, cfg, space, stage, constraints, s, seed):
    """
    Greedy (discrete, relaxed) action at a state.

    A convex -Q is minimized over the relaxed box and rounded at 0.5. When the
    rounded action breaks a constraint, or Q is not convex, the valid discrete
    action with the lowest -Q is taken and is its own relaxation.
    """
    relaxed = None
    if cfg.use_convex_q:
        lower, upper = action_bounds(space, stage, constraints, s)
        relaxed, _ = minimize_over_box(qnet, s.values, lower, upper, cfg.minimizer_restarts, cfg.minimizer_steps,
                                       seed=seed)
        a = discretize(relaxed)
        if _is_valid(space, stage, constraints, s, a):
            return a, relaxed
        logging.debug(f'Stage {stage}: rounded minimizer {a.tolist()} is invalid, scoring valid actions')
    a, _ = best_candidate(qnet, s, candidate_actions(space, stage, constraints, s, np.random.default_rng(seed)))
    if a is None:
        return (None, None) if relaxed is None else (discretize(relaxed), relaxed)
    return a, a.astype(float)


def rollout_episode(qnet, cfg, space, X, Y, constraints, train_cfg, rng, episode=0):
    """
    One pass through the searched stages followed by a LoCaL fit.

    Raises EpisodeAborted when a stage keeps being rejected `retry_cap` times.
    """
    constraints = effective_constraints(cfg, constraints, space)
    log = EpisodeLog(episode)
    s = space.first_state()
    indicators = {}
    steps = []
    for k in range(space.searched[0], space.template.depth):
        n_k, n_k1 = space.stage_shape(k)
        if k not in space.searched:
            a = action_from_indicator(space.template.indicators[k], space.n_a_for(k))
            s = transition(s, a, n_k, n_k1, space.n_s)
            continue
        is_last, next_indicator = stage_context(space, k)
        rejects = 0
        force_random = False
        while True:
            if force_random or (cfg.use_epsilon_greedy and rng.random() < cfg.epsilon):
                branch = RANDOM
                a = random_valid_action(space, k, constraints, s, rng)
                relaxed = None if a is None else a.astype(float)
            else:
                branch = GREEDY
                a, relaxed = greedy_action(qnet, cfg, space, k, constraints, s, int(rng.integers(2 ** 31)))
            if a is not None:
                s_next = transition(s, a, n_k, n_k1, space.n_s)
                verdict = check_constraints(s_next, a, constraints, k, space.layer_kind(k), n_k, n_k1, s=s,
                                            is_last=is_last, next_indicator=next_indicator)
                if verdict.accepted:
                    break
                logging.debug(f'Episode {episode} stage {k}: {branch} action rejected ({verdict.reason}) {verdict.detail}')
            rejects += 1
            log.rejects += 1
            force_random = True
            if rejects >= cfg.retry_cap:
                raise EpisodeAborted(f'stage {k} rejected {rejects} times', stage=k, rejects=log.rejects)
        log.actions.append(action_bits(a, n_k, n_k1))
        log.relaxed.append([float(v) for v in relaxed])
        log.branches.append(branch)
        indicators[k] = indicator_from_action(a, n_k, n_k1)
        steps.append((k, s, a, relaxed, s_next))
        s = s_next

    structure = space.build(indicators)
    weights, _, value, reward = score_structure(structure, train_cfg, X, Y)
    transitions, relaxed_pairs = [], []
    for k, s, a, relaxed, s_next in steps:
        next_stage = space.next_searched(k)
        if next_stage is not None:
            s_next = space.advance_fixed(s_next, next_stage)
        terminal = next_stage is None
        transitions.append(Transition(s, a, s_next, reward, terminal, next_stage))
        relaxed_pairs.append(Transition(s, relaxed, s_next, reward, terminal, next_stage))
    log.reward, log.nrmse = reward, value
    log.equation = extract_equation(structure, weights).to_text() if value < NRMSE_CAP else ''
    return Episode(structure, weights, transitions, relaxed_pairs, reward, value, log)


def reward_net_update(rnet, transitions, reward, cfg, seed=0):
    """
    Regress -R on every (s, a) of the episode toward -reward.
    """
    inputs = np.vstack([as_input(t.s.values, t.a).numpy() for t in transitions])
    targets = np.full(len(transitions), -reward)
    return icnn_fit(rnet, inputs, targets, cfg.r_lr, cfg.r_epochs, batch_size=len(transitions), seed=seed)


def td_target(transition, target_qnet, cfg, space, constraints, seed=0):
    """
    R for terminal transitions, else R + gamma * max_a Q'(s', a). The max runs
    over the relaxed box for a convex Q and over valid discrete actions otherwise.
    """
    if transition.terminal:
        return transition.reward
    if cfg.use_convex_q:
        lower, upper = action_bounds(space, transition.next_stage, constraints, transition.s_next)
        _, neg_q = minimize_over_box(target_qnet, transition.s_next.values, lower, upper, cfg.minimizer_restarts,
                                     cfg.minimizer_steps, seed=seed)
    else:
        candidates = candidate_actions(space, transition.next_stage, constraints, transition.s_next,
                                       np.random.default_rng(seed))
        _, neg_q = best_candidate(target_qnet, transition.s_next, candidates)
        if not np.isfinite(neg_q):
            return transition.reward
    return transition.reward + cfg.gamma * (-neg_q)


def q_net_update(qnet, target_qnet, buffer, cfg, space, constraints, seed=0):
    """
    Fitted-Q step on a minibatch of up to `minibatch_size` transitions; a no-op
    while the buffer holds fewer than `min_buffer_size` (default `minibatch_size`).
    """
    threshold = cfg.minibatch_size if cfg.min_buffer_size is None else cfg.min_buffer_size
    if len(buffer) < threshold:
        return qnet
    batch = buffer.sample(min(cfg.minibatch_size, len(buffer)))
    inputs = np.vstack([as_input(t.s.values, t.a).numpy() for t in batch])
    targets = np.array([td_target(t, target_qnet, cfg, space, constraints, seed=seed + n)
                        for n, t in enumerate(batch)])
    return icnn_fit(qnet, inputs, -targets, cfg.q_lr, cfg.q_epochs, batch_size=len(batch), seed=seed)


def _last_hidden_outputs(structure, weights, X):
    try:
        hs, _, _ = network.forward_cache(structure, weights, X)
    except DomainError:
        return None
    return hs[structure.depth - 1]


def new_networks(cfg, space, seed):
    input_dim = space.n_s + space.n_a
    if cfg.use_convex_q:
        qnet = IcnnNet(input_dim, cfg.icnn_hidden_layers, cfg.icnn_width, seed=seed)
    else:
        qnet = MlpNet(input_dim, seed=seed)
    rnet = IcnnNet(input_dim, cfg.icnn_hidden_layers, cfg.icnn_width, seed=seed + 1)
    return qnet, rnet


def run_search(cfg, space, X, Y, train_cfg=None, constraints=None, seed=0):
    """
    Episode loop: roll out, train -R on the episode, insert the discrete and
    relaxed transitions, fit -Q on a replay minibatch, refresh the target
    every `target_update_interval` episodes, stop once |R - 1| <= stop_lambda.
    The best structure is refit with `polish_epochs` at the end.
    """
    train_cfg = train_cfg or TrainConfig()
    constraints = constraints or ConstraintConfig()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    if X.shape[0] == 0:
        raise ConfigError('empty training data')
    rng = np.random.default_rng(seed)
    qnet, rnet = new_networks(cfg, space, seed)
    target_qnet = copy.deepcopy(qnet)
    buffer = ReplayBuffer(cfg.buffer_capacity, seed=seed)
    logs, snapshots = [], []
    best = None
    stopped = cfg.max_episodes
    logging.info(f'Search: n_s {space.n_s}, n_a {space.n_a}, searched stages {list(space.searched)}, '
                 f'{cfg.max_episodes} episodes')
    for t in range(1, cfg.max_episodes + 1):
        start = time.perf_counter()
        try:
            episode = rollout_episode(qnet, cfg, space, X, Y, constraints, train_cfg, rng, episode=t)
        except EpisodeAborted as e:
            logging.error(f'Episode {t} aborted at stage {e.stage} after {e.rejects} rejections')
            log = EpisodeLog(t, rejects=e.rejects, aborted=True, reason=str(e),
                             best_reward=None if best is None else best.reward)
            log.seconds = time.perf_counter() - start
            logs.append(log)
            episode = None
        if episode is not None:
            torch_seed = int(rng.integers(2 ** 31))
            rnet = reward_net_update(rnet, episode.transitions, episode.reward, cfg, seed=torch_seed)
            for discrete, relaxed in zip(episode.transitions, episode.relaxed_pairs):
                buffer.push(discrete)
                if cfg.use_convex_q:
                    r_relaxed = -icnn_forward(rnet, relaxed.s.values, relaxed.a)
                    buffer.push(replace(relaxed, reward=r_relaxed))
            qnet = q_net_update(qnet, target_qnet, buffer, cfg, space, constraints, seed=torch_seed)
            if cfg.use_dynamic_constraint:
                hidden = _last_hidden_outputs(episode.structure, episode.weights, X)
                if hidden is not None:
                    constraints = update_frozen_paths(constraints, hidden, Y, episode.structure)
            if best is None or episode.reward > best.reward:
                best = episode
            episode.log.best_reward = best.reward
            episode.log.seconds = time.perf_counter() - start
            logs.append(episode.log)
            logging.info(f'Episode {t}: R {episode.reward:.6f} NRMSE {episode.nrmse:.6g} '
                         f'best {best.reward:.6f} actions {" ".join(episode.log.actions)}')
        if t % cfg.target_update_interval == 0:
            target_qnet = copy.deepcopy(qnet)
            snapshots.append({'episode': t, 'qnet': icnn_to_dict(qnet), 'rnet': icnn_to_dict(rnet)})
            logging.debug(f'Episode {t}: target network refreshed')
        if episode is not None and abs(episode.reward - 1.0) <= cfg.stop_lambda:
            logging.info(f'Episode {t}: |R - 1| <= {cfg.stop_lambda}, stopping')
            stopped = t
            break

    if best is None:
        logging.error('Every episode was aborted, no structure found')
        return SearchResult(None, None, 0.0, NRMSE_CAP, 0, logs, snapshots, qnet, rnet, constraints,
                            stopped_episode=stopped)
    polish = replace(train_cfg, epochs=cfg.polish_epochs)
    weights, loss, value, reward = score_structure(best.structure, polish, X, Y, init_weights=best.weights)
    if reward < best.reward:
        weights, value, reward = best.weights, best.nrmse, best.reward
        loss = network.loss_value(best.structure, weights, X, Y)
    logging.info(f'Best structure from episode {best.log.episode}: R {reward:.6f} after polish, loss {loss:.6g}')
    return SearchResult(best.structure, weights, reward, value, best.log.episode, logs, snapshots, qnet, rnet,
                        constraints, final_loss=loss, stopped_episode=stopped)
