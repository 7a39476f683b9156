"""
Projected gradient descent of a convex objective over a box, batched over restarts.
"""
from __future__ import annotations

import numpy as np
import torch

from utils import constant
from utils.errors import ConfigError, ShapeError

KKT_TOL = 1e-7
MAX_STEP = 1e4


def objective_values(objective, S, A):
    """
    Batched values of an nn.Module over concatenated (S, A) rows or of a torch callable.
    """
    if isinstance(objective, torch.nn.Module):
        return objective(torch.cat([S, A], dim=1))
    return objective(S, A)


def projected_gradient_residual(A, grad, lower, upper):
    """
    Norm per row of A - proj(A - grad), the first-order optimality residual on a box.
    """
    return torch.linalg.vector_norm(A - torch.clamp(A - grad, lower, upper), dim=1)


def minimize_over_box(objective, s, lower, upper, restarts=constant.MINIMIZER_RESTARTS,
                      steps=constant.MINIMIZER_STEPS, seed=0):
    """
    argmin_a objective(s, a) for lower <= a <= upper.

    `objective` is an IcnnNet over concatenated (s, a) or a callable
    (S: (B, n_s), A: (B, n_a)) -> (B,) built from torch ops. Each restart keeps
    its own step size: a trial step is accepted under the sufficient-decrease
    test of projected gradient, otherwise its step is halved. Returns
    (a_star, value) of the best restart as (numpy vector, float).
    """
    if restarts < 1:
        raise ConfigError(f'restarts must be >= 1, got {restarts}')
    lower = torch.as_tensor(np.asarray(lower, dtype=float))
    upper = torch.as_tensor(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or lower.dim() != 1:
        raise ShapeError(f'box bounds of shapes {tuple(lower.shape)} and {tuple(upper.shape)}')
    if bool((lower > upper).any()):
        raise ConfigError('empty box: some lower bound exceeds its upper bound')
    n_a = lower.shape[0]
    S = torch.as_tensor(np.asarray(s, dtype=float)).reshape(1, -1).expand(restarts, -1)

    gen = torch.Generator().manual_seed(int(seed))
    A = lower + (upper - lower) * torch.rand(restarts, n_a, generator=gen, dtype=torch.float64)
    # first restart from the box center
    A[0] = 0.5 * (lower + upper)
    step = torch.ones(restarts, dtype=torch.float64)

    def value_and_grad(A):
        A = A.detach().requires_grad_(True)
        f = objective_values(objective, S, A)
        g, = torch.autograd.grad(f.sum(), A)
        return f.detach(), g.detach()

    f, g = value_and_grad(A)
    for _ in range(steps):
        if bool((projected_gradient_residual(A, g, lower, upper) <= KKT_TOL).all()):
            break
        trial = torch.clamp(A - step[:, None] * g, lower, upper)
        with torch.no_grad():
            f_trial = objective_values(objective, S, trial)
        d = trial - A
        bound = f + (g * d).sum(dim=1) + (d * d).sum(dim=1) / (2.0 * step)
        ok = f_trial <= bound + 1e-15
        step = torch.where(ok, torch.clamp(step * 2.0, max=MAX_STEP), step / 2.0)
        if bool(ok.any()):
            A = torch.where(ok[:, None], trial, A)
            f_new, g_new = value_and_grad(A)
            f = torch.where(ok, f_new, f)
            g = torch.where(ok[:, None], g_new, g)
    best = int(torch.argmin(f))
    return A[best].numpy().copy(), float(f[best])
