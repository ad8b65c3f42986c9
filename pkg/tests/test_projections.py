import math

import numpy as np
import pytest

from conftest import random_simplex
from privleak.infotheory import binary_entropy, entropy
from privleak.projections import (EntropyProjectionConfig, ProjectionError,
                                  project_entropy, project_simplex)


def grid_nearest(v, steps=1000):
    """Brute-force nearest simplex point on a regular grid (2-D/3-D only)."""
    dim = len(v)
    best, best_d = None, np.inf
    if dim == 2:
        a = np.arange(steps + 1) / steps
        pts = np.stack([a, 1 - a], axis=1)
    else:
        pts = []
        for i in range(steps + 1):
            j = np.arange(steps + 1 - i)
            block = np.stack([np.full_like(j, i), j, steps - i - j], axis=1)
            pts.append(block / steps)
        pts = np.concatenate(pts)
    d = ((pts - np.asarray(v)) ** 2).sum(axis=1)
    k = int(np.argmin(d))
    return pts[k], d[k]


def test_project_simplex_examples():
    np.testing.assert_allclose(project_simplex([0.3, 0.3]), [0.5, 0.5])
    np.testing.assert_allclose(project_simplex([1.2, -0.2]), [1.0, 0.0])


def test_project_simplex_idempotent(rng):
    for _ in range(20):
        p = random_simplex(rng, 4)
        np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)


def test_project_simplex_invariants(rng):
    for _ in range(50):
        v = rng.normal(size=rng.integers(2, 6))
        out = project_simplex(v)
        assert out.min() >= 0.0
        assert abs(out.sum() - 1.0) < 1e-12


def test_project_simplex_against_grid_oracle(rng):
    for dim in (2, 3):
        for _ in range(10):
            v = rng.normal(scale=1.5, size=dim)
            out = project_simplex(v)
            _, best_d = grid_nearest(v)
            our_d = ((out - v) ** 2).sum()
            # grid resolution 1e-3: the true projection can beat the grid by
            # at most the grid cell diagonal
            assert our_d <= best_d + 1e-5


def test_project_entropy_examples():
    v = np.full(3, 1 / 3)
    np.testing.assert_allclose(project_entropy(v, math.log(3)), v)

    w = project_entropy(np.array([0.9, 0.1]), math.log(2))
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-7)

    # analytic point: 9**beta = 4 gives (0.8, 0.2); H_b(0.2) = 0.5004 nats
    target = binary_entropy(0.2)
    w = project_entropy(np.array([0.9, 0.1]), target)
    np.testing.assert_allclose(w, [0.8, 0.2], atol=1e-6)
    assert abs(entropy(w) - target) < 1e-8


def test_project_entropy_tolerance(rng):
    for _ in range(40):
        dim = int(rng.integers(2, 6))
        v = random_simplex(rng, dim, floor=1e-6)
        t = rng.uniform(0.02, 0.98) * math.log(dim)
        w = project_entropy(v, t)
        assert abs(entropy(w) - t) < 1e-8
        assert w.min() >= 0.0
        assert abs(w.sum() - 1.0) < 1e-12


def test_temperature_path_monotone(rng):
    for _ in range(10):
        v = np.maximum(random_simplex(rng, 4), 1e-10)
        v = v / v.sum()
        logv = np.log(v)
        betas = np.geomspace(1e-4, 1e4, 60)
        hs = []
        for b in betas:
            e = b * logv
            e -= e.max()
            w = np.exp(e)
            w /= w.sum()
            hs.append(entropy(w))
        assert all(h2 <= h1 + 1e-12 for h1, h2 in zip(hs, hs[1:]))


def test_project_entropy_unreachable_target():
    # a uniform input cannot lose entropy along the temperature path
    v = np.full(4, 0.25)
    with pytest.raises(ProjectionError, match="achievable range"):
        project_entropy(v, 0.5)


def test_project_entropy_target_validation():
    with pytest.raises(ValueError):
        project_entropy(np.array([0.5, 0.5]), math.log(2) + 1e-3)
    with pytest.raises(ValueError):
        project_entropy(np.array([0.5, 0.5]), -1e-3)


def test_config_validation():
    with pytest.raises(ValueError):
        EntropyProjectionConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        EntropyProjectionConfig(beta_bracket=(1.0, 0.5))
