import math

import numpy as np
import pytest

from conftest import central_difference, random_simplex, raw_mutual_information
from privleak.core import (JointPrior, Mechanism, ProblemSpace, Query,
                           RecordView, compose_view, extract_view,
                           record_index_map)
from privleak.infotheory import (binary_entropy, entropy,
                                 grad_entropy_conditional_row,
                                 grad_entropy_joint, grad_entropy_marginal,
                                 grad_mi_conditional_row, grad_mi_marginal,
                                 grad_mi_mechanism, joint_entropy_via_chain,
                                 mutual_information)
from privleak.mechanisms import build_bsc

LN2 = math.log(2.0)


def _random_instance(rng, sizes=(2, 2), m=2, i=0):
    """Interior (space, view, mech) triple for gradient checks."""
    space = ProblemSpace(sizes, m)
    idx = record_index_map(space, i)
    n_i, n_mi = idx.shape
    marg = random_simplex(rng, n_i)
    cond = np.stack([random_simplex(rng, n_mi) for _ in range(n_i)])
    rows = np.stack([random_simplex(rng, m) for _ in range(space.universe_size)])
    view = RecordView(i, marg, cond, idx)
    return space, view, Mechanism(rows)


def test_entropy_values():
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert abs(entropy(np.full(4, 0.25)) - math.log(4)) < 1e-12
    assert abs(entropy([0.3, 0.7]) - 0.6108643) < 1e-6
    assert abs(binary_entropy(0.3) - entropy([0.3, 0.7])) < 1e-12


def test_joint_entropy_via_chain():
    space = ProblemSpace.binary(2)
    u = extract_view(space, JointPrior.uniform(space), 0)
    assert abs(joint_entropy_via_chain(u) - math.log(4)) < 1e-12

    det = extract_view(space, JointPrior(np.array([0.5, 0.0, 0.0, 0.5])), 0)
    assert abs(joint_entropy_via_chain(det) - LN2) < 1e-9

    p = JointPrior(np.array([0.4, 0.1, 0.3, 0.2]))
    v = extract_view(space, p, 0)
    assert abs(joint_entropy_via_chain(v) - entropy(p.probs)) < 1e-9


def test_mutual_information_values():
    space = ProblemSpace.binary(2)
    query = Query.parity()
    const = Mechanism(np.tile([0.3, 0.7], (4, 1)))
    u = extract_view(space, JointPrior.uniform(space), 0)
    assert mutual_information(u, const) == 0.0

    # uniform prior + parity + flip channel: outputs carry nothing per-record
    bsc = build_bsc(space, query, 0.2)
    assert mutual_information(u, bsc) < 1e-12

    # two live datasets of opposite parity: the record determines the answer
    two = extract_view(space, JointPrior(np.array([0.5, 0.0, 0.5, 0.0])), 0)
    bsc3 = build_bsc(space, query, 0.3)
    assert abs(mutual_information(two, bsc3) - (LN2 - binary_entropy(0.3))) < 1e-12


def test_data_processing_bound(rng):
    space = ProblemSpace((2, 3), 3)
    for _ in range(20):
        p = JointPrior(rng.dirichlet(np.ones(space.universe_size)))
        rows = np.stack([random_simplex(rng, 3) for _ in range(6)])
        mech = Mechanism(rows)
        for i in range(2):
            v = extract_view(space, p, i)
            assert mutual_information(v, mech) <= entropy(v.marginal) + 1e-9


def _fd_check(analytic, fd, rel=1e-5, atol=1e-8):
    np.testing.assert_allclose(analytic, fd, rtol=rel, atol=atol)


def test_grad_mi_mechanism_matches_fd(rng):
    for _ in range(20):
        space, view, mech = _random_instance(rng)
        prior = compose_view(space, view)
        g = grad_mi_mechanism(space, prior, mech, 0)
        idx = view.dataset_index
        q_block = mech.rows[idx]

        def f(flat_rows):
            return raw_mutual_information(view.marginal, view.conditional,
                                          flat_rows.reshape(q_block.shape))

        fd = np.zeros_like(q_block)
        flat = q_block.copy().reshape(-1)
        for pos in range(flat.size):
            fd.reshape(-1)[pos] = central_difference(f, flat, pos)
        got = g[idx.reshape(-1)].reshape(q_block.shape)
        _fd_check(got, fd)


def test_grad_mi_mechanism_special_cases():
    space = ProblemSpace.binary(2)
    const = Mechanism(np.tile([0.4, 0.6], (4, 1)))
    prior = JointPrior(np.array([0.4, 0.1, 0.3, 0.2]))
    np.testing.assert_allclose(grad_mi_mechanism(space, prior, const, 0), 0.0,
                               atol=1e-12)

    sparse = JointPrior(np.array([0.5, 0.5, 0.0, 0.0]))
    mech = build_bsc(space, Query.parity(), 0.2)
    g = grad_mi_mechanism(space, sparse, mech, 0)
    np.testing.assert_allclose(g[2], 0.0, atol=1e-12)
    np.testing.assert_allclose(g[3], 0.0, atol=1e-12)


def test_grad_mi_marginal_matches_fd(rng):
    for _ in range(20):
        space, view, mech = _random_instance(rng, sizes=(3, 2), m=2)
        g = grad_mi_marginal(view, mech)
        q_block = mech.rows[view.dataset_index]

        def f(marg):
            return raw_mutual_information(marg, view.conditional, q_block)

        fd = np.array([central_difference(f, view.marginal.copy(), a)
                       for a in range(3)])
        _fd_check(g, fd)


def test_grad_mi_marginal_constant_mechanism():
    space = ProblemSpace.binary(2)
    const = Mechanism(np.tile([0.4, 0.6], (4, 1)))
    v = extract_view(space, JointPrior.uniform(space), 0)
    np.testing.assert_allclose(grad_mi_marginal(v, const), -1.0, atol=1e-12)


def test_grad_mi_conditional_row_matches_fd(rng):
    for _ in range(20):
        space, view, mech = _random_instance(rng, sizes=(2, 3), m=3, i=0)
        q_block = mech.rows[view.dataset_index]
        for k in range(2):
            g = grad_mi_conditional_row(view, mech, k)

            def f(row, k=k):
                cond = view.conditional.copy()
                cond[k] = row
                return raw_mutual_information(view.marginal, cond, q_block)

            fd = np.array([central_difference(f, view.conditional[k].copy(), j)
                           for j in range(3)])
            _fd_check(g, fd)


def test_grad_mi_conditional_row_zero_marginal():
    space = ProblemSpace.binary(2)
    mech = build_bsc(space, Query.parity(), 0.2)
    v = extract_view(space, JointPrior(np.array([0.6, 0.4, 0.0, 0.0])), 0)
    np.testing.assert_allclose(grad_mi_conditional_row(v, mech, 1), 0.0,
                               atol=1e-12)


def test_grad_mi_conditional_row_constant_mechanism_is_zero():
    # I(X_i;Y) is identically zero in the row for a constant mechanism, so
    # its derivative vanishes (and finite differences agree)
    space = ProblemSpace.binary(2)
    const = Mechanism(np.tile([0.4, 0.6], (4, 1)))
    v = extract_view(space, JointPrior(np.array([0.4, 0.1, 0.3, 0.2])), 0)
    np.testing.assert_allclose(grad_mi_conditional_row(v, const, 0), 0.0,
                               atol=1e-12)


def test_grad_entropy_joint(rng):
    space = ProblemSpace.binary(2)
    uniform = JointPrior.uniform(space)
    np.testing.assert_allclose(grad_entropy_joint(uniform),
                               math.log(4) - 1.0, atol=1e-12)
    for _ in range(10):
        p = JointPrior(random_simplex(rng, 4))
        g = grad_entropy_joint(p)

        def h(vec):
            return float(-(vec * np.log(vec)).sum())

        fd = np.array([central_difference(h, p.probs.copy(), x) for x in range(4)])
        _fd_check(g, fd)


def test_grad_entropy_marginal(rng):
    space = ProblemSpace.binary(2)
    det = extract_view(space, JointPrior(np.array([0.6, 0.0, 0.0, 0.4])), 0)
    np.testing.assert_allclose(
        grad_entropy_marginal(det),
        [-math.log(0.6) - 1.0, -math.log(0.4) - 1.0], atol=1e-9)

    for _ in range(10):
        _, view, _ = _random_instance(rng, sizes=(3, 2))
        g = grad_entropy_marginal(view)
        cond = view.conditional

        def h(marg):
            joint = marg[:, None] * cond
            return float(-(joint * np.log(joint)).sum())

        fd = np.array([central_difference(h, view.marginal.copy(), a)
                       for a in range(3)])
        _fd_check(g, fd)


def test_grad_entropy_conditional_row(rng):
    for _ in range(10):
        _, view, _ = _random_instance(rng, sizes=(2, 3), m=2)
        for k in range(2):
            g = grad_entropy_conditional_row(view, k)

            def h(row, k=k):
                cond = view.conditional.copy()
                cond[k] = row
                joint = view.marginal[:, None] * cond
                return float(-(joint * np.log(joint)).sum())

            fd = np.array([central_difference(h, view.conditional[k].copy(), j)
                           for j in range(3)])
            _fd_check(g, fd)


# ---------------------------------------------------------------------------
# convexity structure spot checks (full 200-triple versions run in acceptance)

def _mix_instances(rng, count, builder):
    for _ in range(count):
        yield builder(rng)


def test_concavity_in_marginal(rng):
    space = ProblemSpace((2, 3), 2)
    idx = record_index_map(space, 0)
    for _ in range(30):
        cond = np.stack([rng.dirichlet(np.ones(3)) for _ in range(2)])
        rows = rng.dirichlet(np.ones(2), size=6)
        q_block = rows[idx]
        p, q = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
        a = rng.uniform(0.05, 0.95)
        lhs = raw_mutual_information(a * p + (1 - a) * q, cond, q_block)
        rhs = (a * raw_mutual_information(p, cond, q_block)
               + (1 - a) * raw_mutual_information(q, cond, q_block))
        assert lhs >= rhs - 1e-9


def test_convexity_in_conditionals(rng):
    space = ProblemSpace((2, 3), 2)
    idx = record_index_map(space, 0)
    for _ in range(30):
        marg = rng.dirichlet(np.ones(2))
        rows = rng.dirichlet(np.ones(2), size=6)
        q_block = rows[idx]
        c1 = np.stack([rng.dirichlet(np.ones(3)) for _ in range(2)])
        c2 = np.stack([rng.dirichlet(np.ones(3)) for _ in range(2)])
        a = rng.uniform(0.05, 0.95)
        lhs = raw_mutual_information(marg, a * c1 + (1 - a) * c2, q_block)
        rhs = (a * raw_mutual_information(marg, c1, q_block)
               + (1 - a) * raw_mutual_information(marg, c2, q_block))
        assert lhs <= rhs + 1e-9


def test_convexity_in_mechanisms(rng):
    space = ProblemSpace((2, 3), 2)
    idx = record_index_map(space, 0)
    for _ in range(30):
        marg = rng.dirichlet(np.ones(2))
        cond = np.stack([rng.dirichlet(np.ones(3)) for _ in range(2)])
        r1 = rng.dirichlet(np.ones(2), size=6)[idx]
        r2 = rng.dirichlet(np.ones(2), size=6)[idx]
        a = rng.uniform(0.05, 0.95)
        lhs = raw_mutual_information(marg, cond, a * r1 + (1 - a) * r2)
        rhs = (a * raw_mutual_information(marg, cond, r1)
               + (1 - a) * raw_mutual_information(marg, cond, r2))
        assert lhs <= rhs + 1e-9


def test_entropy_superlevel_convexity(rng):
    for _ in range(30):
        p = rng.dirichlet(np.ones(6))
        q = rng.dirichlet(np.ones(6))
        b = min(entropy(p), entropy(q))
        a = rng.uniform(0.05, 0.95)
        assert entropy(a * p + (1 - a) * q) >= b - 1e-9
