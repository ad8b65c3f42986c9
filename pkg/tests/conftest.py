import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_simplex(rng, size, floor=1e-3):
    """Interior point of the simplex: every coordinate at least `floor`."""
    v = rng.dirichlet(np.ones(size))
    v = np.maximum(v, floor)
    return v / v.sum()


def raw_mutual_information(marg, cond, q_block):
    """Independent double-sum I(X_i;Y), no clamping or package helpers.

    q_block[a, j] is the mechanism row for dataset (x_i=a, x_{-i}=j); the
    expression stays well-defined slightly off the simplex, which is what
    the finite-difference checks need.
    """
    w = np.einsum("aj,ajy->ay", cond, q_block)
    py = marg @ w
    total = 0.0
    for a in range(w.shape[0]):
        for y in range(w.shape[1]):
            if marg[a] > 0 and w[a, y] > 0 and py[y] > 0:
                total += marg[a] * w[a, y] * np.log(w[a, y] / py[y])
    return total


def central_difference(fn, x, index, h=1e-6):
    xp = x.copy()
    xm = x.copy()
    xp[index] += h
    xm[index] -= h
    return (fn(xp) - fn(xm)) / (2.0 * h)
