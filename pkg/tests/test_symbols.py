import math

import numpy as np
import pytest

from symbol_library.symbols import build_library, make_op
from utils.errors import ConfigError, DomainError


def test_catalog_ids_and_weights():
    lib = build_library(['sqrt', 'id', 'square', 'log', 'sin'])
    assert lib.names == ['sqrt', 'id', 'square', 'log', 'sin']
    assert [op.id for op in lib.ops] == [0, 1, 2, 3, 4]
    assert [op.catalog_id for op in lib.ops] == [2, 0, 1, 3, 5]
    assert [op.has_inner_weight for op in lib.ops] == [True, False, False, True, True]
    assert lib.neuron_index(2, 3) == 13
    assert lib.neuron_op(13).name == 'log'


def test_unknown_and_duplicated_names():
    with pytest.raises(ConfigError):
        build_library(['id', 'tanh'])
    with pytest.raises(ConfigError):
        build_library(['id', 'id'])


def test_values():
    assert make_op(0, 'square').eval(None, 3.0) == 9.0
    assert make_op(0, 'cos').eval(2.5, 0.0) == 1.0
    assert make_op(0, 'sqrt').eval(4.0, 4.0) == pytest.approx(4.0)
    assert make_op(0, 'log').eval(1.0, math.e) == pytest.approx(1.0)
    np.testing.assert_allclose(make_op(0, 'sin').eval(2.0, np.array([0.0, math.pi / 4])), [0.0, 1.0], atol=1e-15)


def test_inner_weight_rules():
    with pytest.raises(ValueError):
        make_op(0, 'cos').eval(None, 1.0)
    with pytest.raises(ValueError):
        make_op(0, 'id').eval(2.0, 1.0)


def test_domain_guards():
    with pytest.raises(DomainError) as e:
        make_op(0, 'log').eval(1.0, np.array([1.0, -2.0]))
    assert e.value.op_name == 'log'
    with pytest.raises(DomainError):
        make_op(0, 'log').eval(1.0, 0.0)
    with pytest.raises(DomainError):
        make_op(0, 'sqrt').eval(1.0, -1.0)
    assert make_op(0, 'sqrt').eval(1.0, 0.0) == 0.0
    # the derivative of sqrt is unbounded at 0
    with pytest.raises(DomainError):
        make_op(0, 'sqrt').eval_grads(1.0, 0.0)


@pytest.mark.parametrize('name', ['id', 'square', 'sqrt', 'log', 'cos', 'sin'])
def test_grads_match_central_differences(name):
    op = make_op(0, name)
    w = 1.3 if op.has_inner_weight else None
    v, h = 1.7, 1e-6
    d_dv, d_dw = op.eval_grads(w, v)
    assert d_dv == pytest.approx((op.eval(w, v + h) - op.eval(w, v - h)) / (2 * h), rel=1e-6)
    if op.has_inner_weight:
        assert d_dw == pytest.approx((op.eval(w + h, v) - op.eval(w - h, v)) / (2 * h), rel=1e-6)
    else:
        assert d_dw is None


@pytest.mark.parametrize('name', ['id', 'square', 'sqrt', 'log', 'cos', 'sin'])
def test_second_derivative_matches_first(name):
    op = make_op(0, name)
    z, h = 1.4, 1e-5
    assert op.eval_second(z) == pytest.approx((op.eval_first(z + h) - op.eval_first(z - h)) / (2 * h), abs=1e-8)
    assert op.eval_raw(z) == pytest.approx(op.eval(1.0 if op.has_inner_weight else None, z))
