from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import List, Optional

import numpy as np

from local_net.equation import poly_text
from utils.errors import DegenerateError, ShapeError

PE_CAP = 100.0


def _as_columns(v):
    v = np.asarray(v, dtype=float)
    return v.reshape(-1, 1) if v.ndim == 1 else v


def nrmse(pred, truth, sigma_y=None):
    """
    RMSE / sigma_y per output column, averaged over columns.

    sigma_y defaults to the population std of each truth column.
    """
    pred, truth = _as_columns(pred), _as_columns(truth)
    if pred.shape != truth.shape or pred.shape[0] == 0:
        raise ShapeError(f'prediction {pred.shape} and truth {truth.shape} do not match')
    if sigma_y is None:
        sigma_y = truth.std(axis=0)
    sigma_y = np.broadcast_to(np.asarray(sigma_y, dtype=float), (truth.shape[1],))
    if np.any(sigma_y == 0):
        raise DegenerateError(f'zero output std {sigma_y.tolist()}, NRMSE undefined')
    rmse = np.sqrt(np.mean((pred - truth) ** 2, axis=0))
    return float(np.mean(rmse / sigma_y))


def percentage_error(w, w_hat):
    if w == 0:
        return 0.0 if w_hat == 0 else PE_CAP
    return min(PE_CAP, 100.0 * abs(w_hat - w) / abs(w))


def term_slots(term):
    """
    Coefficient followed by the inner weights, in factor order.
    """
    return [term.coefficient] + [f.weight for f in term.factors if f.weight is not None]


def term_text(term):
    return poly_text((term,))


@dataclass
class TermMatch:
    output: int
    true_term: object
    learned_term: Optional[object]
    pe: List[float]

    def to_dict(self):
        return {
            'output': f'y{self.output + 1}',
            'true': term_text(self.true_term),
            'learned': None if self.learned_term is None else term_text(self.learned_term),
            'pe': self.pe,
        }


def _pair_pe(true_term, learned_term):
    return [percentage_error(w, w_hat) for w, w_hat in zip(term_slots(true_term), term_slots(learned_term))]


def _match_output(o, true_terms, learned_terms):
    matches = []
    used = set()
    groups = {}
    for t in true_terms:
        groups.setdefault(t.signature(), []).append(t)
    for sig, trues in groups.items():
        cands = [n for n, l in enumerate(learned_terms) if l.signature() == sig and n not in used]
        # several terms with one signature: pick the assignment with least total error
        best, best_cost = None, None
        k = min(len(trues), len(cands))
        for chosen in permutations(cands, k):
            cost = sum(sum(_pair_pe(t, learned_terms[n])) for t, n in zip(trues, chosen))
            cost += PE_CAP * sum(len(term_slots(t)) for t in trues[k:])
            if best_cost is None or cost < best_cost:
                best, best_cost = chosen, cost
        best = best or ()
        for idx, t in enumerate(trues):
            if idx < len(best):
                n = best[idx]
                used.add(n)
                matches.append(TermMatch(o, t, learned_terms[n], _pair_pe(t, learned_terms[n])))
            else:
                matches.append(TermMatch(o, t, None, [PE_CAP] * len(term_slots(t))))
    spurious = [l for n, l in enumerate(learned_terms) if n not in used]
    return matches, spurious


def e_c(true_eq, learned_eq):
    """
    Average coefficient percentage error over the slots of the true equation.

    Returns (e_c_percent, per_output, matches, spurious). Learned terms with no
    true counterpart are listed in `spurious` and left out of the average.
    """
    if true_eq.n_outputs != learned_eq.n_outputs:
        raise ShapeError(f'true equation has {true_eq.n_outputs} outputs, learned {learned_eq.n_outputs}')
    matches, spurious, per_output = [], [], []
    for o in range(true_eq.n_outputs):
        m, s = _match_output(o, true_eq.outputs[o], learned_eq.outputs[o])
        matches.extend(m)
        spurious.extend((o, t) for t in s)
        pes = [p for match in m for p in match.pe]
        per_output.append(float(np.mean(pes)) if len(pes) > 0 else None)
    all_pe = [p for match in matches for p in match.pe]
    if len(all_pe) == 0:
        raise DegenerateError('true equation has no coefficient slots')
    return float(np.mean(all_pe)), per_output, matches, spurious


@dataclass
class MetricReport:
    nrmse_train: float
    nrmse_test: Optional[float] = None
    e_c_percent: Optional[float] = None
    e_c_per_output: List[Optional[float]] = field(default_factory=list)
    matches: List[TermMatch] = field(default_factory=list)
    spurious: list = field(default_factory=list)
    equation_text: str = ''
    equation_terms: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'nrmse_train': self.nrmse_train,
            'nrmse_test': self.nrmse_test,
            'e_c_percent': self.e_c_percent,
            'e_c_per_output': self.e_c_per_output,
            'matches': [m.to_dict() for m in self.matches],
            # reported only, excluded from e_c_percent
            'spurious_terms': [{'output': f'y{o + 1}', 'term': term_text(t)} for o, t in self.spurious],
            'equation': self.equation_text,
            'equation_terms': self.equation_terms,
        }


def metric_report(learned_eq, pred_train, y_train, pred_test=None, y_test=None, true_eq=None):
    report = MetricReport(nrmse_train=nrmse(pred_train, y_train))
    if pred_test is not None and y_test is not None:
        report.nrmse_test = nrmse(pred_test, y_test)
    if true_eq is not None:
        report.e_c_percent, report.e_c_per_output, report.matches, report.spurious = e_c(true_eq, learned_eq)
    report.equation_text = learned_eq.to_text()
    report.equation_terms = learned_eq.to_json()
    return report
