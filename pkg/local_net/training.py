from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
from scipy.optimize import minimize

from local_net import network
from utils import constant
from utils.errors import DomainError, ConfigError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = constant.LOCAL_LEARNING_RATE
    epochs: int = constant.LOCAL_EPOCHS
    init_value: float = constant.LOCAL_INIT_VALUE
    optimizer: str = 'gd'

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f'learning_rate must be positive, got {self.learning_rate}')
        # 0 epochs is allowed: it reports the initial weights and loss.
        if self.epochs < 0:
            raise ConfigError(f'epochs must be non-negative, got {self.epochs}')
        if self.optimizer not in ('gd', 'bfgs'):
            raise ConfigError(f'unknown optimizer {self.optimizer}')


def _safe_gradients(structure, weights, X, Y):
    try:
        loss, grad = network.gradients(structure, weights, X, Y)
    except DomainError:
        return np.inf, None
    if not np.isfinite(loss):
        return np.inf, None
    return loss, grad


def _fit_gd(structure, config, X, Y, weights, history):
    slots = network.parameter_slots(structure)
    vec = network.weights_to_vector(structure, weights, slots)
    loss, grad = network.gradients(structure, weights, X, Y)
    lr = config.learning_rate
    halvings = 0
    for epoch in range(1, config.epochs + 1):
        step = network.weights_to_vector(structure, grad, slots)
        trial_vec = vec - lr * step
        trial = network.vector_to_weights(structure, trial_vec, base=weights, slots=slots)
        trial_loss, trial_grad = _safe_gradients(structure, trial, X, Y)
        if trial_loss <= loss:
            vec, weights, loss, grad = trial_vec, trial, trial_loss, trial_grad
            halvings = 0
        else:
            lr /= 2.0
            halvings += 1
            logging.debug(f'fit: epoch {epoch} loss would rise to {trial_loss}, learning rate halved to {lr}')
            if halvings > constant.MAX_LR_HALVINGS and trial_grad is None and not np.isfinite(trial_loss):
                raise DomainError(f'no in-domain step found at epoch {epoch}', epoch=epoch, last_weights=weights)
        if history is not None:
            history.append(loss)
        logging.debug(f'fit: epoch {epoch} loss {loss}')
    return weights, loss


def _fit_bfgs(structure, config, X, Y, weights, history):
    slots = network.parameter_slots(structure)
    base = weights

    def objective(vec):
        trial = network.vector_to_weights(structure, vec, base=base, slots=slots)
        loss, grad = _safe_gradients(structure, trial, X, Y)
        if grad is None:
            return 1e300, np.zeros_like(vec)
        return loss, network.weights_to_vector(structure, grad, slots)

    def callback(vec):
        if history is not None:
            history.append(objective(vec)[0])

    x0 = network.weights_to_vector(structure, weights, slots)
    if len(x0) == 0 or config.epochs == 0:
        return weights, network.loss_value(structure, weights, X, Y)
    result = minimize(objective, x0, jac=True, method='BFGS', callback=callback,
                      options={'maxiter': config.epochs})
    weights = network.vector_to_weights(structure, result.x, base=base, slots=slots)
    return weights, network.loss_value(structure, weights, X, Y)


def fit(structure, config, X, Y, init_weights=None, history=None):
    """
    Full-batch coefficient fit of a fixed structure.

    Plain gradient descent; a step that would raise the loss (or leave a
    symbol's domain) is rejected and the learning rate halved, so the loss
    sequence never increases. Returns (weights, final_loss).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], structure.n_outputs)
    if X.shape[0] == 0:
        raise ConfigError('cannot fit on an empty dataset')
    weights = init_weights.copy() if init_weights is not None else network.init_weights(structure, config.init_value)
    try:
        network.gradients(structure, weights, X, Y)
    except DomainError as e:
        raise DomainError(f'initial weights outside the symbol domain: {e}', op_name=e.op_name, epoch=0,
                          last_weights=None)
    if config.optimizer == 'bfgs':
        weights, loss = _fit_bfgs(structure, config, X, Y, weights, history)
    else:
        weights, loss = _fit_gd(structure, config, X, Y, weights, history)
    logging.debug(f'fit: {config.epochs} epochs, final loss {loss}')
    return weights, loss


def zero_gradient_slots(structure, weights, X, Y):
    """
    Trainable parameters whose gradient is exactly zero at `weights`.
    """
    slots = network.parameter_slots(structure)
    _, grad = network.gradients(structure, weights, X, Y)
    g = network.weights_to_vector(structure, grad, slots)
    return [slot for slot, value in zip(slots, g) if value == 0.0]
