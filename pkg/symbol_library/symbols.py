"""
The activation pool of a LoCaL network.

Each op works on scalars and numpy arrays alike; arrays are evaluated
element-wise and the domain guard looks at every element.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from utils import constant
from utils.errors import DomainError, ConfigError


def _value(name, z):
    if name == 'id':
        return z * 1.0
    elif name == 'square':
        return z * z
    elif name == 'sqrt':
        return np.sqrt(z)
    elif name == 'log':
        return np.log(z)
    elif name == 'cos':
        return np.cos(z)
    elif name == 'sin':
        return np.sin(z)
    raise ConfigError(f'unknown symbol {name}')


def _first(name, z):
    if name == 'id':
        return np.ones_like(z * 1.0)
    elif name == 'square':
        return 2.0 * z
    elif name == 'sqrt':
        return 0.5 / np.sqrt(z)
    elif name == 'log':
        return 1.0 / z
    elif name == 'cos':
        return -np.sin(z)
    elif name == 'sin':
        return np.cos(z)
    raise ConfigError(f'unknown symbol {name}')


def _second(name, z):
    if name == 'id':
        return np.zeros_like(z * 1.0)
    elif name == 'square':
        return np.full_like(z * 1.0, 2.0)
    elif name == 'sqrt':
        return -0.25 * np.power(z, -1.5)
    elif name == 'log':
        return -1.0 / (z * z)
    elif name == 'cos':
        return -np.cos(z)
    elif name == 'sin':
        return -np.sin(z)
    raise ConfigError(f'unknown symbol {name}')


def _scalar_or_array(result, like):
    if np.ndim(like) == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class SymbolOp:
    id: int
    name: str
    has_inner_weight: bool
    domain_lower: Optional[float] = None

    @property
    def catalog_id(self):
        return constant.SYMBOL_CATALOG.index(self.name)

    def argument(self, inner_weight, v):
        if self.has_inner_weight:
            if inner_weight is None:
                raise ValueError(f'{self.name} needs an inner weight')
            return inner_weight * np.asarray(v, dtype=float)
        if inner_weight is not None:
            raise ValueError(f'{self.name} takes no inner weight')
        return np.asarray(v, dtype=float)

    def check_domain(self, z, strict=False):
        if self.domain_lower is None:
            return
        z = np.asarray(z)
        bad = (z <= self.domain_lower) if strict else (z < self.domain_lower)
        if np.any(bad) or np.any(np.isnan(z)):
            worst = float(np.nanmin(z)) if not np.all(np.isnan(z)) else float('nan')
            raise DomainError(f'{self.name} argument {worst} outside domain (lower bound {self.domain_lower})',
                              op_name=self.name)

    def eval(self, inner_weight, v):
        """
        phi(w*v) for weighted ops, phi(v) otherwise.
        """
        z = self.argument(inner_weight, v)
        self.check_domain(z)
        return _scalar_or_array(_value(self.name, z), v)

    def eval_grads(self, inner_weight, v):
        """
        Returns (d/dv, d/dw); d/dw is None for ops without an inner weight.
        """
        z = self.argument(inner_weight, v)
        # sqrt has an unbounded derivative at 0
        self.check_domain(z, strict=self.name == 'sqrt')
        d_phi = _first(self.name, z)
        if self.has_inner_weight:
            d_dv = inner_weight * d_phi
            d_dw = np.asarray(v, dtype=float) * d_phi
            return _scalar_or_array(d_dv, v), _scalar_or_array(d_dw, v)
        return _scalar_or_array(d_phi, v), None

    def eval_second(self, z):
        """
        phi''(z) at the (already scaled) argument z.
        """
        z = np.asarray(z, dtype=float)
        self.check_domain(z, strict=self.name == 'sqrt')
        return _scalar_or_array(_second(self.name, z), z)

    def eval_first(self, z):
        """
        phi'(z) at the (already scaled) argument z.
        """
        z = np.asarray(z, dtype=float)
        self.check_domain(z, strict=self.name == 'sqrt')
        return _scalar_or_array(_first(self.name, z), z)

    def eval_raw(self, z):
        """
        phi(z) at the (already scaled) argument z.
        """
        z = np.asarray(z, dtype=float)
        self.check_domain(z)
        return _scalar_or_array(_value(self.name, z), z)


def make_op(op_id, name):
    if name not in constant.SYMBOL_CATALOG:
        raise ConfigError(f'unknown symbol {name}, expected one of {constant.SYMBOL_CATALOG}')
    domain_lower = None
    if name == 'log':
        domain_lower = constant.LOG_DOMAIN_LOWER
    elif name == 'sqrt':
        domain_lower = constant.SQRT_DOMAIN_LOWER
    return SymbolOp(id=op_id, name=name, has_inner_weight=name in constant.WEIGHTED_SYMBOLS,
                    domain_lower=domain_lower)


@dataclass(frozen=True)
class SymbolLibrary:
    ops: tuple

    def __post_init__(self):
        ids = [op.id for op in self.ops]
        if ids != list(range(len(self.ops))):
            raise ConfigError(f'symbol ids must be 0..{len(self.ops) - 1}, got {ids}')
        names = [op.name for op in self.ops]
        if len(set(names)) != len(names):
            raise ConfigError(f'duplicated symbols in library {names}')

    def __len__(self):
        return len(self.ops)

    def __getitem__(self, op_id):
        return self.ops[op_id]

    @property
    def names(self) -> List[str]:
        return [op.name for op in self.ops]

    def by_name(self, name):
        for op in self.ops:
            if op.name == name:
                return op
        raise KeyError(name)

    def neuron_index(self, input_index, op_id):
        """
        Activation neuron fed by input `input_index` through op `op_id`.
        """
        return input_index * len(self.ops) + op_id

    def neuron_op(self, neuron_index):
        return self.ops[neuron_index % len(self.ops)]


def build_library(names) -> SymbolLibrary:
    return SymbolLibrary(ops=tuple(make_op(i, name) for i, name in enumerate(names)))
