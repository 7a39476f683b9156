"""
Sum-of-terms form of a LoCaL network.

A term is a coefficient times a sorted tuple of factors; a factor is a symbol
applied to an input (`arg` is the input index) or, in deeper stacks, to a
nested polynomial (`arg` is a tuple of terms).
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional, Tuple, Union

import numpy as np

from local_net import network
from utils import constant


@dataclass(frozen=True)
class Factor:
    arg: Union[int, tuple]
    symbol: str
    weight: Optional[float] = None

    def arg_key(self):
        if isinstance(self.arg, int):
            return (0, self.arg, '')
        return (1, -1, poly_text(self.arg))

    def sort_key(self):
        return (self.arg_key(), constant.SYMBOL_CATALOG.index(self.symbol),
                -math.inf if self.weight is None else self.weight)

    def match_key(self):
        return (self.arg_key(), self.symbol, self.weight is None)


@dataclass(frozen=True)
class Term:
    coefficient: float
    factors: Tuple[Factor, ...] = ()

    def signature(self):
        return tuple(f.match_key() for f in self.factors)

    def sort_key(self):
        return tuple(f.sort_key() for f in self.factors)


@dataclass(frozen=True)
class CanonicalEquation:
    outputs: Tuple[Tuple[Term, ...], ...]

    @property
    def n_outputs(self):
        return len(self.outputs)

    def to_text(self):
        return '\n'.join(f'y{o + 1} = {poly_text(terms)}' for o, terms in enumerate(self.outputs))

    def to_json(self):
        return {'outputs': [{'name': f'y{o + 1}', 'terms': _terms_to_json(terms)}
                            for o, terms in enumerate(self.outputs)]}

    @staticmethod
    def from_json(d):
        return CanonicalEquation(tuple(_terms_from_json(out['terms']) for out in d['outputs']))


def _terms_to_json(terms):
    return [{'coefficient': t.coefficient,
             'factors': [{'input': f.arg if isinstance(f.arg, int) else {'terms': _terms_to_json(f.arg)},
                          'symbol': f.symbol,
                          'weight': f.weight} for f in t.factors]}
            for t in terms]


def _terms_from_json(items):
    terms = []
    for item in items:
        factors = []
        for f in item['factors']:
            arg = f['input'] if isinstance(f['input'], int) else _terms_from_json(f['input']['terms'])
            weight = None if f['weight'] is None else float(f['weight'])
            factors.append(Factor(arg, f['symbol'], weight))
        terms.append(Term(float(item['coefficient']), tuple(factors)))
    return tuple(terms)


def _arg_text(arg):
    if isinstance(arg, int):
        return f'x{arg + 1}'
    return f'({poly_text(arg)})'


def factor_text(f):
    inner = _arg_text(f.arg)
    if f.symbol == 'id':
        return inner
    if f.symbol == 'square':
        return f'{inner}^2'
    if f.weight is None:
        return f'{f.symbol}({inner})'
    return f'{f.symbol}({f.weight:.3f}*{inner})'


def poly_text(terms):
    if len(terms) == 0:
        return '0'
    parts = []
    for n, t in enumerate(terms):
        c = t.coefficient
        body = '*'.join([f'{abs(c):.3f}'] + [factor_text(f) for f in t.factors])
        if n == 0:
            parts.append(f'-{body}' if c < 0 else body)
        else:
            parts.append(f'- {body}' if c < 0 else f'+ {body}')
    return ' '.join(parts)


# Polynomials during expansion are dicts {factors tuple: coefficient}.

def _poly_add(acc, poly, scale=1.0):
    for key, c in poly.items():
        acc[key] = acc.get(key, 0.0) + scale * c
    return acc


def _poly_mul(a, b):
    out = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            key = tuple(sorted(ka + kb, key=Factor.sort_key))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def _poly_terms(poly):
    return tuple(Term(c, key) for key, c in poly.items())


def _apply_symbol(poly, op, weight):
    if op.name == 'id':
        return dict(poly)
    if op.name == 'square':
        return _poly_mul(poly, poly)
    if len(poly) == 0:
        # symbol of a zero argument
        if op.name == 'cos':
            return {(): 1.0}
        if op.name == 'log':
            return {(Factor((), op.name, weight),): 1.0}
        return {}
    if len(poly) == 1:
        key, c = next(iter(poly.items()))
        if len(key) == 1 and key[0].symbol == 'id' and isinstance(key[0].arg, int):
            return {(Factor(key[0].arg, op.name, weight * c),): 1.0}
        return {(Factor((Term(1.0, key),), op.name, weight * c),): 1.0}
    return {(Factor(_poly_terms(poly), op.name, weight),): 1.0}


def expand(structure, weights):
    """
    Symbolic forward pass: one polynomial per neuron, layer by layer.
    """
    live = network.live_masks(structure)
    masks = network.trainable_masks(structure, live)
    library = structure.library
    p = len(library)
    h = [{(Factor(i, 'id', None),): 1.0} for i in range(structure.n_inputs)]
    for k, kind in enumerate(structure.layer_kinds):
        n_next = structure.layer_sizes[k + 1]
        z = structure.indicators[k]
        out = [{} for _ in range(n_next)]
        for j in range(n_next):
            if not live[k + 1][j]:
                continue
            if kind == constant.ACTIVATION:
                op = library.neuron_op(j)
                weight = float(weights.layers[k][j]) if op.has_inner_weight else None
                out[j] = _apply_symbol(h[j // p], op, weight)
            elif kind == constant.MULTIPLICATION:
                acc = {(): 1.0}
                for i in np.nonzero(z[:, j])[0]:
                    acc = _poly_mul(acc, h[i])
                out[j] = acc
            else:
                acc = {}
                for i in np.nonzero(masks[k][:, j])[0]:
                    _poly_add(acc, h[i], float(weights.layers[k][i, j]))
                out[j] = acc
        h = out
    return CanonicalEquation(tuple(_poly_terms(poly) for poly in h))


def _canonical_arg(arg):
    """
    Normalize a nested argument; returns (arg, scale) where the nested
    polynomial's single coefficient has been pulled out as `scale`.
    """
    if isinstance(arg, int):
        return arg, 1.0
    terms = _canonical_terms(arg, 0.0)
    if len(terms) == 1:
        t = terms[0]
        if len(t.factors) == 1 and t.factors[0].symbol == 'id' and isinstance(t.factors[0].arg, int):
            return t.factors[0].arg, t.coefficient
        return (Term(1.0, t.factors),), t.coefficient
    return terms, 1.0


def _canonical_factor(f, prune_threshold):
    """
    Returns (coefficient multiplier, replacement factors); multiplier 0 drops the term.
    """
    arg, scale = _canonical_arg(f.arg)
    if f.symbol == 'id':
        return scale, [Factor(arg, 'id')]
    if f.symbol == 'square':
        return scale * scale, [Factor(arg, 'square')]
    weight = scale if f.weight is None else f.weight * scale
    if f.symbol == 'cos':
        weight = abs(weight)
        if weight < prune_threshold:
            return 1.0, []
        return 1.0, [Factor(arg, 'cos', weight)]
    if f.symbol == 'sin':
        sign = 1.0
        if weight < 0:
            weight, sign = -weight, -1.0
        if weight < prune_threshold:
            return 0.0, []
        return sign, [Factor(arg, 'sin', weight)]
    if f.symbol == 'sqrt' and weight > 0:
        return math.sqrt(weight), _sqrt_rules(Factor(arg, 'sqrt'))
    return 1.0, [Factor(arg, f.symbol, weight)]


def _sqrt_rules(f):
    # sqrt(x^2) over a nonnegative input domain is x
    if not isinstance(f.arg, int) and len(f.arg) == 1:
        t = f.arg[0]
        if len(t.factors) == 1 and t.factors[0].symbol == 'square' and isinstance(t.factors[0].arg, int):
            return [Factor(t.factors[0].arg, 'id')]
    return [f]


def _merge_factors(coefficient, factors):
    """
    sqrt(x)*sqrt(x) -> x, sqrt(w x)*sqrt(w x) -> w x, x*x -> x^2.
    """
    changed = True
    factors = list(factors)
    while changed:
        changed = False
        counts = {}
        for f in factors:
            counts[f] = counts.get(f, 0) + 1
        for f, n in counts.items():
            if n < 2 or f.symbol not in ('sqrt', 'id') or (f.symbol == 'id' and not isinstance(f.arg, int)):
                continue
            factors.remove(f)
            factors.remove(f)
            if f.symbol == 'sqrt':
                if f.weight is not None:
                    coefficient *= f.weight
                factors.append(Factor(f.arg, 'id'))
            else:
                factors.append(Factor(f.arg, 'square'))
            changed = True
            break
    return coefficient, factors


def _canonical_terms(terms, prune_threshold):
    combined = {}
    for t in terms:
        coefficient = t.coefficient
        factors = []
        for f in t.factors:
            mult, replacement = _canonical_factor(f, prune_threshold)
            coefficient *= mult
            factors.extend(replacement)
        if coefficient == 0.0:
            continue
        coefficient, factors = _merge_factors(coefficient, factors)
        key = tuple(sorted(factors, key=Factor.sort_key))
        combined[key] = combined.get(key, 0.0) + coefficient
    out = [Term(c, key) for key, c in combined.items() if abs(c) >= prune_threshold and c != 0.0]
    return tuple(sorted(out, key=Term.sort_key))


def canonicalize(equation, prune_threshold=constant.PRUNE_THRESHOLD):
    return CanonicalEquation(tuple(_canonical_terms(terms, prune_threshold) for terms in equation.outputs))


def extract_equation(structure, weights, prune_threshold=constant.PRUNE_THRESHOLD):
    return canonicalize(expand(structure, weights), prune_threshold)
