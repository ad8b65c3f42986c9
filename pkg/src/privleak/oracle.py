"""Independent brute-force verifiers that ground the solver tests.

These deliberately avoid the solvers' record factorization: the leakage
oracle walks a grid over the FULL joint simplex so agreement between the
two routes is meaningful evidence.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .core import Mechanism, ProblemSpace, record_index_map
from .infotheory import LN2, binary_entropy, flog

_BF_UNIVERSE_CAP = 16
_BF_GRID_CAP = 50
_ENUM_CAP = 4096


def simplex_grid(dim: int, steps: int) -> np.ndarray:
    """All compositions of `steps` into `dim` parts, scaled to the simplex."""
    combos = itertools.combinations(range(steps + dim - 1), dim - 1)
    bars = np.fromiter(itertools.chain.from_iterable(combos),
                       dtype=np.int64).reshape(-1, dim - 1)
    full = np.empty((bars.shape[0], dim + 1), dtype=np.int64)
    full[:, 0] = -1
    full[:, 1:-1] = bars
    full[:, -1] = steps + dim - 1
    counts = np.diff(full, axis=1) - 1
    return counts / float(steps)


def brute_force_leakage(space: ProblemSpace, mech: Mechanism, b: float,
                        grid_steps: int) -> float:
    """Max of I(X_i;Y) over records and a simplex grid with H(p) >= b.

    A lower bound on the true constrained leakage by construction; tightens
    as the grid refines.
    """
    size = space.universe_size
    if size > _BF_UNIVERSE_CAP:
        raise ValueError(f"universe size {size} exceeds oracle cap {_BF_UNIVERSE_CAP}")
    if grid_steps > _BF_GRID_CAP:
        raise ValueError(f"grid_steps {grid_steps} exceeds cap {_BF_GRID_CAP}")

    grid = simplex_grid(size, grid_steps)
    h = -(grid * flog(grid)).sum(axis=1)
    grid = grid[h >= b - 1e-12]
    if grid.shape[0] == 0:
        return 0.0

    best = 0.0
    for i in range(space.record_count):
        idx = record_index_map(space, i)
        block = grid[:, idx]                              # (N, n_i, n_{-i})
        joint_y = np.einsum("naj,ajy->nay", block, mech.rows[idx])
        marg = block.sum(axis=2)                          # (N, n_i)
        py = joint_y.sum(axis=1)                          # (N, |Y|)
        terms = joint_y * (flog(joint_y) - flog(marg)[:, :, None]
                           - flog(py)[:, None, :])
        best = max(best, float(terms.sum(axis=(1, 2)).max()))
    return best


def enumerate_extreme_conditionals(space: ProblemSpace, mech: Mechanism, i: int,
                                   marginal_grid: int) -> float:
    """Max I(X_i;Y) over all deterministic conditionals and a marginal grid.

    Exact (up to marginal resolution) for the unconstrained case, where the
    optimum has every conditional row at a vertex.
    """
    n_i = space.alphabet_sizes[i]
    n_mi = space.complement_size(i)
    if n_mi ** n_i > _ENUM_CAP:
        raise ValueError(f"{n_mi}^{n_i} deterministic matrices exceed cap {_ENUM_CAP}")

    idx = record_index_map(space, i)
    margs = simplex_grid(n_i, marginal_grid)              # (G, n_i)
    best = 0.0
    for assign in itertools.product(range(n_mi), repeat=n_i):
        cond_y = np.stack([mech.rows[idx[a, j]] for a, j in enumerate(assign)])
        joint_y = margs[:, :, None] * cond_y[None, :, :]  # (G, n_i, |Y|)
        py = joint_y.sum(axis=1)
        terms = joint_y * (flog(cond_y)[None, :, :] - flog(py)[:, None, :])
        best = max(best, float(terms.sum(axis=(1, 2)).max()))
    return best


def bsc_distortion_inverse(leakage: float) -> float:
    """The flip probability p in [0, 1/2] with ln 2 - H_b(p) = leakage.

    Plain bisection to 1e-10; kept free of the solver stack on purpose.
    """
    if not -1e-12 <= leakage <= LN2 + 1e-12:
        raise ValueError("leakage outside [0, ln 2]")
    leakage = min(max(leakage, 0.0), LN2)
    lo, hi = 0.0, 0.5   # capacity decreasing in p: g(lo) >= 0 >= g(hi)
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if LN2 - binary_entropy(mid) - leakage >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def best_constant_distortion(space: ProblemSpace, p0, query, metric) -> float:
    """Distortion of the best constant prediction (the leakage-zero endpoint)."""
    from .core import distortion_profile
    prof = distortion_profile(space, query, metric)
    return float((p0.probs @ prof).min())
