"""
Fully input-convex network (torch, float64, CPU).

    z_1     = softplus(Wy_0 u + b_0)
    z_{l+1} = softplus(Wz_l z_l + Wy_l u + b_l)
    f(u)    = Wz_out z_L + Wy_out u + b_out

Every Wz is kept elementwise >= 0, so f is convex in u. MlpNet drops that
constraint and the skip connections.
"""
from __future__ import annotations

import copy
import logging

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from utils import constant
from utils.errors import ShapeError, ConfigError

torch.set_default_dtype(torch.float64)


class IcnnNet(nn.Module):
    def __init__(self, input_dim, hidden_layers=constant.ICNN_HIDDEN_LAYERS, width=constant.ICNN_WIDTH,
                 init_std=constant.ICNN_INIT_STD, seed=0):
        super().__init__()
        if input_dim < 1 or hidden_layers < 1 or width < 1:
            raise ConfigError(f'bad ICNN shape: input {input_dim}, {hidden_layers} hidden layers of width {width}')
        self.input_dim = input_dim
        self.hidden_layers = hidden_layers
        self.width = width
        gen = torch.Generator().manual_seed(int(seed))

        def gauss(*shape):
            return torch.randn(*shape, generator=gen, dtype=torch.float64) * init_std

        self.wy = nn.ParameterList()
        self.wz = nn.ParameterList()
        self.b = nn.ParameterList()
        for layer in range(hidden_layers + 1):
            out_dim = 1 if layer == hidden_layers else width
            self.wy.append(nn.Parameter(gauss(out_dim, input_dim)))
            self.b.append(nn.Parameter(torch.zeros(out_dim, dtype=torch.float64)))
            if layer > 0:
                self.wz.append(nn.Parameter(gauss(out_dim, width).abs()))

    def forward(self, u):
        z = F.softplus(F.linear(u, self.wy[0], self.b[0]))
        for layer in range(1, self.hidden_layers + 1):
            pre = F.linear(z, self.wz[layer - 1]) + F.linear(u, self.wy[layer], self.b[layer])
            z = pre if layer == self.hidden_layers else F.softplus(pre)
        return z.squeeze(-1)

    def clamp_(self):
        with torch.no_grad():
            for w in self.wz:
                w.clamp_(min=0.0)
        return self

    def is_certified(self):
        return all(bool((w >= 0).all()) for w in self.wz)


class MlpNet(nn.Module):
    """
    Plain softplus MLP over the same concatenated input, no sign constraints.
    Used as the Q network when convexity in the action is switched off.
    """
    def __init__(self, input_dim, hidden_layers=constant.MLP_HIDDEN_LAYERS, width=constant.MLP_WIDTH,
                 init_std=constant.ICNN_INIT_STD, seed=0):
        super().__init__()
        if input_dim < 1 or hidden_layers < 1 or width < 1:
            raise ConfigError(f'bad MLP shape: input {input_dim}, {hidden_layers} hidden layers of width {width}')
        self.input_dim = input_dim
        self.hidden_layers = hidden_layers
        self.width = width
        gen = torch.Generator().manual_seed(int(seed))
        self.layers = nn.ModuleList()
        for layer in range(hidden_layers + 1):
            in_dim = input_dim if layer == 0 else width
            out_dim = 1 if layer == hidden_layers else width
            linear = nn.Linear(in_dim, out_dim, dtype=torch.float64)
            with torch.no_grad():
                linear.weight.copy_(torch.randn(out_dim, in_dim, generator=gen, dtype=torch.float64) * init_std)
                linear.bias.zero_()
            self.layers.append(linear)

    def forward(self, u):
        z = u
        for layer in self.layers[:-1]:
            z = F.softplus(layer(z))
        return self.layers[-1](z).squeeze(-1)

    def clamp_(self):
        return self

    def is_certified(self):
        return False


def as_input(s, a):
    """
    Concatenated (s, a) rows as a float64 tensor; accepts vectors or matrices.
    """
    s = torch.as_tensor(np.asarray(s, dtype=float))
    a = torch.as_tensor(np.asarray(a, dtype=float))
    if s.dim() == 1:
        s = s.unsqueeze(0)
    if a.dim() == 1:
        a = a.unsqueeze(0)
    if s.shape[0] != a.shape[0]:
        s = s.expand(a.shape[0], -1)
    return torch.cat([s, a], dim=1)


def icnn_forward(net, s, a):
    u = as_input(s, a)
    if u.shape[1] != net.input_dim:
        raise ShapeError(f'ICNN expects {net.input_dim} inputs, got {u.shape[1]}')
    with torch.no_grad():
        out = net(u)
    if out.shape[0] == 1:
        return float(out[0])
    return out.numpy()


def icnn_fit(net, inputs, targets, lr, epochs, batch_size, seed=0):
    """
    MSE regression with Adam; Wz is projected back to >= 0 after every step.

    Returns a new network, `net` is left untouched.
    """
    inputs = torch.as_tensor(np.asarray(inputs, dtype=float))
    targets = torch.as_tensor(np.asarray(targets, dtype=float)).reshape(-1)
    if inputs.dim() != 2 or inputs.shape[1] != net.input_dim:
        raise ShapeError(f'ICNN expects {net.input_dim} inputs, got shape {tuple(inputs.shape)}')
    if inputs.shape[0] != targets.shape[0] or inputs.shape[0] == 0:
        raise ShapeError(f'{inputs.shape[0]} inputs and {targets.shape[0]} targets')
    net = copy.deepcopy(net)
    optimizer = torch.optim.Adam(net.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(int(seed))
    n = inputs.shape[0]
    batch_size = max(1, min(batch_size, n))
    loss = None
    for epoch in range(epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            optimizer.zero_grad()
            loss = F.mse_loss(net(inputs[idx]), targets[idx])
            loss.backward()
            optimizer.step()
            net.clamp_()
    if loss is not None:
        logging.debug(f'icnn_fit: {epochs} epochs on {n} samples, last batch mse {float(loss)}')
    return net


def training_mse(net, inputs, targets):
    inputs = torch.as_tensor(np.asarray(inputs, dtype=float))
    targets = torch.as_tensor(np.asarray(targets, dtype=float)).reshape(-1)
    with torch.no_grad():
        return float(F.mse_loss(net(inputs), targets))


def icnn_to_dict(net):
    layers = []
    for name, p in net.named_parameters():
        layers.append({'name': name, 'shape': list(p.shape), 'values': p.detach().reshape(-1).tolist()})
    kind = 'mlp' if isinstance(net, MlpNet) else 'icnn'
    return {'kind': kind, 'input_dim': net.input_dim, 'hidden_layers': net.hidden_layers, 'width': net.width,
            'layers': layers}


def icnn_from_dict(d):
    cls = MlpNet if d.get('kind') == 'mlp' else IcnnNet
    net = cls(d['input_dim'], d['hidden_layers'], d['width'])
    params = dict(net.named_parameters())
    with torch.no_grad():
        for layer in d['layers']:
            if layer['name'] not in params:
                raise ConfigError(f'unknown network parameter {layer["name"]}')
            p = params[layer['name']]
            if list(p.shape) != list(layer['shape']):
                raise ShapeError(f'{layer["name"]} has shape {layer["shape"]}, expected {list(p.shape)}')
            p.copy_(torch.tensor(layer['values'], dtype=torch.float64).reshape(p.shape))
    return net


def icnn_field(net, n_s):
    """
    Scalar field over the concatenated (s, a) box, numpy in and out.
    """
    def f(u):
        u = np.asarray(u, dtype=float)
        return icnn_forward(net, u[..., :n_s], u[..., n_s:])
    return f
