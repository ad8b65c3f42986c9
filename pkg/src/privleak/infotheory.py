"""Entropy, mutual information, and their analytic gradients.

All quantities are exact over explicit distributions and measured in nats;
bits are a display conversion only.  Every log clips its argument at the
global probability floor, so gradients stay finite on (numerically)
degenerate inputs.
"""
from __future__ import annotations

import math

import numpy as np

from .core import (JointPrior, Mechanism, ProblemSpace, RecordView,
                   PROB_FLOOR, extract_view, output_channel, record_digits)

LN2 = math.log(2.0)


def flog(x) -> np.ndarray:
    """log with the probability floor applied."""
    return np.log(np.maximum(x, PROB_FLOOR))


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    return float(-(p * flog(p)).sum())


def binary_entropy(p: float) -> float:
    """Entropy in nats of a Bernoulli(p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability outside [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


def nats_to_bits(x: float) -> float:
    return x / LN2


def joint_entropy_via_chain(view: RecordView) -> float:
    """H(X) evaluated through the record factorization:
    H(X_i) plus the marginal-weighted conditional row entropies."""
    row_h = -(view.conditional * flog(view.conditional)).sum(axis=1)
    return entropy(view.marginal) + float(view.marginal @ row_h)


def conditional_row_entropies(view: RecordView) -> np.ndarray:
    """H(X_{-i}|x_i) per marginal symbol, shape (n_i,)."""
    return -(view.conditional * flog(view.conditional)).sum(axis=1)


def mutual_information(view: RecordView, mech: Mechanism) -> float:
    """I(X_i;Y) through the induced record channel p(y|x_i)."""
    cond, py = output_channel(view, mech)
    ratio = flog(cond) - flog(py)
    val = float(np.einsum("a,ay,ay->", view.marginal, cond, ratio))
    return max(val, 0.0)


def mutual_information_channel(marginal: np.ndarray, cond: np.ndarray) -> float:
    """I(X_i;Y) given the record channel directly (used by solvers)."""
    py = marginal @ cond
    ratio = flog(cond) - flog(py)
    val = float(np.einsum("a,ay,ay->", marginal, cond, ratio))
    return max(val, 0.0)


def max_record_leakage(space: ProblemSpace, prior: JointPrior,
                       mech: Mechanism) -> tuple[float, int]:
    """max over records of I(X_i;Y) for a fixed prior; ties favor the lowest index."""
    best, best_i = -1.0, -1
    for i in range(space.record_count):
        val = mutual_information(extract_view(space, prior, i), mech)
        if val > best:
            best, best_i = val, i
    return best, best_i


# ---------------------------------------------------------------------------
# Analytic gradients.  Shapes: mechanism gradient |X| x |Y|; marginal gradient
# n_i; conditional-row gradient n_{-i}.  All are the unconstrained partial
# derivatives (simplex coupling is handled by the projections downstream), and
# all match central finite differences at interior points.

def grad_mi_mechanism(space: ProblemSpace, prior: JointPrior, mech: Mechanism,
                      i: int) -> np.ndarray:
    """d I(X_i;Y) / d q(y|x) = p(x) log(p(y|x_i)/p(y))."""
    view = extract_view(space, prior, i)
    cond, py = output_channel(view, mech)
    ratio = flog(cond) - flog(py)
    return prior.probs[:, None] * ratio[record_digits(space, i)]


def grad_mi_marginal(view: RecordView, mech: Mechanism) -> np.ndarray:
    """d I / d p(x_i = a) = sum_y p(y|a) log(p(y|a)/p(y)) - 1.

    The -1 is normal to the simplex and gets projected out by the solvers;
    it is kept so the formula is the true unconstrained derivative.
    """
    cond, py = output_channel(view, mech)
    ratio = flog(cond) - flog(py)
    return np.einsum("ay,ay->a", cond, ratio) - 1.0


def grad_mi_conditional_row(view: RecordView, mech: Mechanism, k: int) -> np.ndarray:
    """d I / d p(x_{-i}|x_ik), the row-k gradient, shape (n_{-i},).

    Entry j equals p(x_ik) * sum_y q(y|x_ik, x_j) log(p(y|x_ik)/p(y)); the
    chain through p(y) cancels the remaining terms, and the whole row
    vanishes when the marginal entry is zero.
    """
    cond, py = output_channel(view, mech)
    q = mech.rows[view.dataset_index[k]]           # (n_{-i}, |Y|)
    ratio = flog(cond[k]) - flog(py)
    return view.marginal[k] * (q @ ratio)


def grad_entropy_joint(prior: JointPrior) -> np.ndarray:
    """d H(X) / d p(x) = -log p(x) - 1."""
    return -flog(prior.probs) - 1.0


def grad_entropy_marginal(view: RecordView) -> np.ndarray:
    """d H(X) / d p(x_i) = H(X_{-i}|x_i) - log p(x_i) - 1."""
    return conditional_row_entropies(view) - flog(view.marginal) - 1.0


def grad_entropy_conditional_row(view: RecordView, k: int) -> np.ndarray:
    """d H(X) / d p(x_{-i}|x_ik) = -p(x_ik) (log[p(x_ik) p(x_{-i}|x_ik)] + 1)."""
    pk = view.marginal[k]
    return -pk * (flog(pk * view.conditional[k]) + 1.0)
