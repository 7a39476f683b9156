from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from datasets.generators import syn1_truth
from local_net.equation import CanonicalEquation, Factor, Term
from metrics.metrics import PE_CAP, e_c, metric_report, nrmse, percentage_error
from utils.errors import DegenerateError, ShapeError


def syn1_like(c1=3.0, w1=2.5, c2=4.0, c3=3.0, extra=()):
    return CanonicalEquation((
        (Term(c1, (Factor(0, 'square'), Factor(1, 'cos', w1))),),
        (Term(c2, (Factor(0, 'id'), Factor(2, 'id'))),) + tuple(extra),
        () if c3 is None else (Term(c3, (Factor(2, 'square'),)),),
    ))


def test_nrmse_uses_population_std():
    truth = np.array([0.0, 2.0, 0.0, 2.0])
    assert nrmse(truth + 1.0, truth) == pytest.approx(1.0)
    assert nrmse(truth, truth) == 0.0


def test_nrmse_averages_output_columns():
    truth = np.column_stack([[0.0, 2.0], [0.0, 4.0]])
    pred = truth + np.array([1.0, 1.0])
    assert nrmse(pred, truth) == pytest.approx((1.0 + 0.5) / 2.0)
    assert nrmse(pred, truth, sigma_y=[1.0, 1.0]) == pytest.approx(1.0)


def test_nrmse_errors():
    with pytest.raises(DegenerateError):
        nrmse(np.ones(5), np.full(5, 2.0))
    with pytest.raises(ShapeError):
        nrmse(np.ones(5), np.ones(4))
    with pytest.raises(ShapeError):
        nrmse(np.ones(0), np.ones(0))


def test_percentage_error_cap_and_zero_truth():
    assert percentage_error(4.0, 5.0) == pytest.approx(25.0)
    assert percentage_error(3.0, -400.0) == PE_CAP
    assert percentage_error(0.0, 0.0) == 0.0
    assert percentage_error(0.0, 1e-3) == PE_CAP


def test_exact_recovery_has_zero_error():
    e, per_output, matches, spurious = e_c(syn1_truth(), syn1_like())
    assert e == 0.0
    assert per_output == [0.0, 0.0, 0.0]
    assert len(matches) == 3 and spurious == []


def test_perturbed_coefficient():
    e, per_output, _, _ = e_c(syn1_truth(), syn1_like(c1=3.3))
    # four slots: 3, 2.5, 4, 3
    assert e == pytest.approx(10.0 / 4)
    assert per_output[0] == pytest.approx(5.0)


def test_missing_term_counts_at_the_cap():
    e, per_output, matches, _ = e_c(syn1_truth(), syn1_like(c3=None))
    assert e == pytest.approx(PE_CAP / 4)
    assert per_output[2] == PE_CAP
    assert matches[-1].learned_term is None
    assert matches[-1].to_dict()['learned'] is None


def test_spurious_terms_are_reported_not_averaged():
    extra = (Term(0.5, (Factor(1, 'id'),)),)
    e, _, _, spurious = e_c(syn1_truth(), syn1_like(extra=extra))
    assert e == 0.0
    assert spurious == [(1, extra[0])]


def test_output_count_mismatch():
    with pytest.raises(ShapeError):
        e_c(syn1_truth(), CanonicalEquation(((Term(1.0, (Factor(0, 'id'),)),),)))


def test_same_signature_terms_take_the_cheapest_assignment():
    truth = CanonicalEquation(((Term(1.0, (Factor(0, 'sin', 1.0),)), Term(2.0, (Factor(0, 'sin', 2.0),))),))
    learned = CanonicalEquation(((Term(2.0, (Factor(0, 'sin', 2.0),)), Term(1.0, (Factor(0, 'sin', 1.0),))),))
    e, _, _, spurious = e_c(truth, learned)
    assert e == 0.0 and spurious == []


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 5.0), min_size=3, max_size=3), st.permutations([0, 1, 2]))
def test_term_order_does_not_change_the_error(coeffs, order):
    truth = CanonicalEquation((tuple(Term(1.0 + k, (Factor(0, 'sin', 1.0 + k),)) for k in range(3)),))
    terms = [Term(c, (Factor(0, 'sin', 1.0 + k),)) for k, c in enumerate(coeffs)]
    base, _, _, _ = e_c(truth, CanonicalEquation((tuple(terms),)))
    shuffled, _, _, _ = e_c(truth, CanonicalEquation((tuple(terms[i] for i in order),)))
    assert shuffled == pytest.approx(base)


def test_metric_report_dict():
    X = np.linspace(1.0, 2.0, 20)
    y = (3.0 * X ** 2)[:, None]
    learned = CanonicalEquation(((Term(3.0, (Factor(0, 'square'),)),),))
    extra = CanonicalEquation(((Term(3.0, (Factor(0, 'square'),)), Term(0.1, (Factor(0, 'id'),))),))
    report = metric_report(extra, y, y, pred_test=y + 0.0, y_test=y, true_eq=learned).to_dict()
    assert set(report) == {'nrmse_train', 'nrmse_test', 'e_c_percent', 'e_c_per_output', 'matches',
                           'spurious_terms', 'equation', 'equation_terms'}
    assert report['nrmse_train'] == 0.0 and report['e_c_percent'] == 0.0
    assert report['spurious_terms'] == [{'output': 'y1', 'term': '0.100*x1'}]
    assert report['matches'][0]['output'] == 'y1'


def test_inner_weight_error_and_missing_slot():
    truth = CanonicalEquation(((Term(3.0, (Factor(0, 'square'), Factor(1, 'cos', 2.5))),),))
    learned = CanonicalEquation(((Term(3.0, (Factor(0, 'square'), Factor(1, 'cos', 2.525))),),))
    e, _, _, _ = e_c(truth, learned)
    assert e == pytest.approx(0.5)
    two = CanonicalEquation(((Term(2.0, (Factor(0, 'id'),)), Term(1.5, (Factor(1, 'square'),))),))
    e, _, _, _ = e_c(two, CanonicalEquation(((Term(2.0, (Factor(0, 'id'),)),),)))
    assert e == pytest.approx(50.0)
