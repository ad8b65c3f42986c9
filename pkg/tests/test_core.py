import itertools
import math

import numpy as np
import pytest

from privleak.core import (DistortionMetric, JointPrior, Mechanism,
                           ProblemSpace, Query, compose_view, decode_index,
                           encode_index, expected_distortion, extract_view,
                           load_matrix, load_prior, output_channel,
                           save_matrix)
from privleak.mechanisms import build_bsc


def test_encode_examples():
    s22 = ProblemSpace((2, 2), 2)
    assert encode_index(s22, (0, 0)) == 0
    assert encode_index(s22, (1, 0)) == 2   # record 0 is the slowest digit
    s23 = ProblemSpace((2, 3), 3)
    assert encode_index(s23, (1, 2)) == 5


def test_encode_decode_bijective_on_random_small_spaces(rng):
    for _ in range(8):
        n = rng.integers(1, 5)
        sizes = tuple(int(v) for v in rng.integers(2, 4, size=n))
        space = ProblemSpace(sizes, 2)
        seen = set()
        for symbols in itertools.product(*[range(k) for k in sizes]):
            idx = encode_index(space, symbols)
            assert decode_index(space, idx) == symbols
            seen.add(idx)
        assert seen == set(range(space.universe_size))


def test_encode_rejects_out_of_range():
    space = ProblemSpace((2, 3), 2)
    with pytest.raises(ValueError):
        encode_index(space, (2, 0))
    with pytest.raises(ValueError):
        encode_index(space, (0, -1))
    with pytest.raises(ValueError):
        decode_index(space, 6)


def test_space_validation():
    with pytest.raises(ValueError):
        ProblemSpace((1, 2), 2)
    with pytest.raises(ValueError):
        ProblemSpace((2, 2), 1)
    with pytest.raises(ValueError):
        ProblemSpace((2,) * 25, 2)   # 2^25 over the default cap
    ProblemSpace((2,) * 24, 2)       # exactly at the cap is allowed


def test_prior_validation():
    with pytest.raises(ValueError):
        JointPrior(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        JointPrior(np.array([1.1, -0.1]))


def test_extract_view_examples():
    space = ProblemSpace.binary(2)
    uniform = JointPrior.uniform(space)
    v = extract_view(space, uniform, 0)
    np.testing.assert_allclose(v.marginal, [0.5, 0.5])
    np.testing.assert_allclose(v.conditional, 0.5)

    point = JointPrior(np.array([1.0, 0.0, 0.0, 0.0]))
    v = extract_view(space, point, 0)
    np.testing.assert_allclose(v.marginal, [1.0, 0.0])
    np.testing.assert_allclose(v.conditional[0], [1.0, 0.0])
    np.testing.assert_allclose(v.conditional[1], [0.5, 0.5])  # zero-marginal convention

    p = JointPrior(np.array([0.4, 0.1, 0.3, 0.2]))
    v = extract_view(space, p, 0)
    np.testing.assert_allclose(v.marginal, [0.5, 0.5])
    np.testing.assert_allclose(v.conditional[0], [0.8, 0.2])
    np.testing.assert_allclose(v.conditional[1], [0.6, 0.4])


def test_compose_view_examples():
    space = ProblemSpace.binary(2)
    p = JointPrior(np.array([0.4, 0.1, 0.3, 0.2]))
    v = extract_view(space, p, 0)
    back = compose_view(space, v)
    np.testing.assert_allclose(back.probs, p.probs, atol=1e-12)

    v1 = extract_view(space, JointPrior(np.array([0.7, 0.3, 0.0, 0.0])), 0)
    joint = compose_view(space, v1)
    assert joint.probs[2] == 0.0 and joint.probs[3] == 0.0

    u = extract_view(space, JointPrior.uniform(space), 1)
    np.testing.assert_allclose(compose_view(space, u).probs, 0.25, atol=1e-12)


def test_round_trip_random_priors(rng):
    space = ProblemSpace((2, 3, 2), 2)
    for _ in range(10):
        p = JointPrior(rng.dirichlet(np.ones(space.universe_size)))
        for i in range(space.record_count):
            back = compose_view(space, extract_view(space, p, i))
            np.testing.assert_allclose(back.probs, p.probs, atol=1e-12)


def test_output_channel():
    space = ProblemSpace.binary(2)
    query = Query.parity()
    mech = build_bsc(space, query, 0.1)

    # deterministic conditionals pick out single mechanism rows
    v = extract_view(space, JointPrior(np.array([0.5, 0.0, 0.0, 0.5])), 0)
    ch = output_channel(v, mech)
    np.testing.assert_allclose(ch.cond[0], mech.rows[0])
    np.testing.assert_allclose(ch.cond[1], mech.rows[3])

    # constant mechanism: p(y|x_i) equals the shared row
    const = Mechanism(np.tile([0.2, 0.8], (4, 1)))
    ch = output_channel(v, const)
    np.testing.assert_allclose(ch.cond, [[0.2, 0.8], [0.2, 0.8]])
    np.testing.assert_allclose(ch.output, [0.2, 0.8])

    # uniform conditionals: parity of the other bit is uniform, flips keep it so
    u = extract_view(space, JointPrior.uniform(space), 0)
    ch = output_channel(u, mech)
    np.testing.assert_allclose(ch.cond, 0.5)


def test_expected_distortion():
    space = ProblemSpace.binary(2)
    query = Query.parity()
    metric = DistortionMetric.absolute_difference()
    p0 = JointPrior.uniform(space)

    exact = build_bsc(space, query, 0.0)
    assert expected_distortion(space, p0, exact, query, metric) == 0.0

    bsc = build_bsc(space, query, 0.3)
    assert abs(expected_distortion(space, p0, bsc, query, metric) - 0.3) < 1e-12

    # m=3 modular sum under BSC(0.3): brute-force double sum as the oracle
    space3 = ProblemSpace.binary(3, output_size=3)
    q3 = Query.modular_sum(3)
    mech3 = build_bsc(space3, q3, 0.3)
    p03 = JointPrior.uniform(space3)
    f = q3.outputs(space3)
    expected = 0.0
    for x in range(space3.universe_size):
        for y in range(3):
            expected += (1 / 8) * mech3.rows[x, y] * abs(y - f[x])
    got = expected_distortion(space3, p03, mech3, q3, metric)
    assert abs(got - expected) < 1e-12


def test_expected_distortion_linear_in_mechanism(rng):
    space = ProblemSpace.binary(2, output_size=2)
    query = Query.parity()
    metric = DistortionMetric.absolute_difference()
    p0 = JointPrior(rng.dirichlet(np.ones(4)))
    for _ in range(5):
        q1 = Mechanism(rng.dirichlet(np.ones(2), size=4))
        q2 = Mechanism(rng.dirichlet(np.ones(2), size=4))
        alpha = rng.uniform()
        mix = Mechanism(alpha * q1.rows + (1 - alpha) * q2.rows)
        lhs = expected_distortion(space, p0, mix, query, metric)
        rhs = (alpha * expected_distortion(space, p0, q1, query, metric)
               + (1 - alpha) * expected_distortion(space, p0, q2, query, metric))
        assert abs(lhs - rhs) < 1e-12


def test_queries():
    space = ProblemSpace.binary(3, output_size=2)
    f = Query.parity().outputs(space)
    assert list(f) == [0, 1, 1, 0, 1, 0, 0, 1]

    space3 = ProblemSpace.binary(3, output_size=4)
    g = Query.pairwise_product().outputs(space3)
    for idx in range(8):
        bits = decode_index(space3, idx)
        manual = sum(bits[i] * bits[j] for i in range(3) for j in range(i + 1, 3))
        assert g[idx] == manual

    with pytest.raises(ValueError):
        Query.modular_sum(3).outputs(ProblemSpace.binary(3, output_size=2))
    with pytest.raises(ValueError):
        Query.from_table([0, 1]).outputs(space)


def test_distortion_metric_validation():
    m = DistortionMetric.absolute_difference().matrix(3)
    np.testing.assert_allclose(m, [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    with pytest.raises(ValueError):
        DistortionMetric.from_table([[0, 1], [1, 0.5]])
    with pytest.raises(ValueError):
        DistortionMetric.from_table([[0, -1], [1, 0]])


def test_matrix_file_round_trip(tmp_path):
    path = tmp_path / "m.mat"
    mat = np.array([[0.25, 0.75], [0.5, 0.5]])
    save_matrix(path, mat)
    np.testing.assert_allclose(load_matrix(path), mat)

    bad = tmp_path / "bad.mat"
    bad.write_text("2\n0.5 0.5\n")
    with pytest.raises(ValueError):
        load_matrix(bad)
    bad.write_text("2 2\n0.5 0.5\n")
    with pytest.raises(ValueError, match="expected 2 rows"):
        load_matrix(bad)
    bad.write_text("1 2\n0.5 0.5 0.5\n")
    with pytest.raises(ValueError, match="expected 2 values"):
        load_matrix(bad)


def test_prior_file(tmp_path):
    space = ProblemSpace.binary(2)
    path = tmp_path / "p.mat"
    save_matrix(path, np.array([[0.4], [0.1], [0.3], [0.2]]))
    p = load_prior(path, space)
    np.testing.assert_allclose(p.probs, [0.4, 0.1, 0.3, 0.2])

    save_matrix(path, np.array([[0.4], [0.1]]))
    with pytest.raises(ValueError, match="shape"):
        load_prior(path, space)

    save_matrix(path, np.array([[0.4], [0.1], [0.3], [0.1]]))
    with pytest.raises(ValueError, match="mass"):
        load_prior(path, space)


def test_mechanism_validation():
    with pytest.raises(ValueError, match="row 1"):
        Mechanism(np.array([[0.5, 0.5], [0.4, 0.5]]))
    with pytest.raises(ValueError):
        Mechanism(np.array([[1.5, -0.5], [0.5, 0.5]]))
