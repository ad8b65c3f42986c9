"""Maximal per-record leakage under an entropy-constrained adversary.

Outer loop: alternate, for each record, a tempered Blahut-Arimoto update of
the marginal with the entropy constraint priced by an adaptive multiplier,
then either a search over deterministic conditionals (constraint slack) or
projected gradient coordinate ascent on the entropy boundary (constraint
binding).  A candidate replaces the incumbent only when it strictly
improves the objective, so the reported trace is nondecreasing.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import (JointPrior, Mechanism, ProblemSpace, RecordView,
                   record_index_map)
from .infotheory import entropy, flog, mutual_information_channel
from .projections import (DEFAULT_ENTROPY_CONFIG, EntropyProjectionConfig,
                          ProjectionError, project_entropy, project_simplex)

_ZERO_MARGINAL = 1e-12
_CASE_TOL = 1e-9           # b > H(X_i) + tol routes to the boundary ascent
_MIN_STEP = 1e-12


class InfeasibleError(RuntimeError):
    """No conditional assignment can satisfy the entropy constraint."""


@dataclasses.dataclass(frozen=True)
class LeakageConfig:
    """Knobs for the maximal-leakage solver."""

    entropy_bound: float                 # b, nats
    tolerance: float = 1e-6              # outer stop on the incumbent change
    max_outer_iterations: int = 1000
    ba_step_size: float = 0.1            # multiplier step in the marginal update
    gd_initial_step: float = 1.0
    backtrack_factor: float = 0.5
    entropy_tol: float = 1e-8            # tau_H for boundary projections
    restarts: int = 5
    rng_seed: int = 0
    inner_iterations: int = 200          # per-record budget for both sub-solvers

    def __post_init__(self):
        if self.entropy_bound < 0:
            raise ValueError("entropy bound must be nonnegative")
        for name in ("tolerance", "ba_step_size", "gd_initial_step",
                     "backtrack_factor", "entropy_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.restarts < 1:
            raise ValueError("need at least one restart")

    def entropy_cfg(self) -> EntropyProjectionConfig:
        if self.entropy_tol == DEFAULT_ENTROPY_CONFIG.tolerance:
            return DEFAULT_ENTROPY_CONFIG
        return EntropyProjectionConfig(tolerance=self.entropy_tol)


@dataclasses.dataclass(frozen=True)
class LeakageResult:
    leakage: float
    worst_record: int
    optimal_prior: JointPrior
    trace: tuple[float, ...]
    feasible: bool
    restarts_used: int


def compute_c_ik(view: RecordView, b: float, k: int) -> float:
    """Minimum entropy row k must carry so the joint entropy reaches b.

    May be negative (constraint inactive for this row) or exceed
    log n_{-i} (row cannot make up the deficit).
    """
    pk = view.marginal[k]
    if pk <= 0:
        raise ValueError("row has zero marginal; use the zero-marginal branch")
    row_h = -(view.conditional * flog(view.conditional)).sum(axis=1)
    others = float(view.marginal @ row_h) - view.marginal[k] * row_h[k]
    return (b - entropy(view.marginal)) / pk - others / pk


# ---------------------------------------------------------------------------
# Record-level working state: raw arrays, no dataclass wrappers, for speed.

class _RecordContext:
    """Per-record slices of the mechanism, fixed for a whole solve."""

    def __init__(self, space: ProblemSpace, mech: Mechanism, i: int):
        self.i = i
        self.index = record_index_map(space, i)
        self.q = mech.rows[self.index]               # (n_i, n_{-i}, |Y|)
        self.n_i = self.q.shape[0]
        self.n_mi = self.q.shape[1]
        self.cap = math.log(self.n_mi)

    def channel(self, cond: np.ndarray) -> np.ndarray:
        return np.einsum("aj,ajy->ay", cond, self.q)


def _mi(marg: np.ndarray, w: np.ndarray) -> float:
    return mutual_information_channel(marg, w)


def _ba_marginal(w: np.ndarray, row_h: np.ndarray, p_start: np.ndarray,
                 b: float, cfg: LeakageConfig) -> tuple[np.ndarray, float]:
    """Tempered Blahut-Arimoto ascent of I(p, w) subject to
    H(p) + p @ row_h >= b, with the multiplier adapted each sweep.

    Returns the best feasible iterate; if no iterate is feasible the
    entropy-maximizing marginal softmax(row_h) is returned so the caller's
    conditional update can restore joint feasibility.
    """
    p = np.maximum(p_start, 1e-10)
    p = p / p.sum()
    s = 0.0
    best_p, best_i = None, -math.inf
    prev_i = None
    for _ in range(cfg.inner_iterations):
        py = p @ w
        div = np.einsum("ay,ay->a", w, flog(w) - flog(py))   # BA divergence per symbol
        logp = (flog(p) + div + s * row_h) / (1.0 + s)
        logp -= logp.max()
        p_new = np.exp(logp)
        p_new /= p_new.sum()

        h_joint = entropy(p_new) + float(p_new @ row_h)
        s = max(0.0, s - cfg.ba_step_size * (h_joint - b))
        i_new = _mi(p_new, w)
        if h_joint >= b - 1e-9 and i_new > best_i:
            best_p, best_i = p_new, i_new
        p = p_new
        if prev_i is not None and abs(i_new - prev_i) < cfg.tolerance:
            break
        prev_i = i_new
    if best_p is None:
        # constraint unreachable with these conditionals: return the marginal
        # with maximal achievable joint entropy, logsumexp(row_h)
        e = np.exp(row_h - row_h.max())
        best_p = e / e.sum()
        best_i = _mi(best_p, w)
    return best_p, best_i


def optimize_marginal(view: RecordView, mech: Mechanism,
                      cfg: LeakageConfig) -> tuple[np.ndarray, float]:
    """Marginal maximizing I(X_i;Y) under the joint entropy bound,
    conditionals held fixed."""
    q = mech.rows[view.dataset_index]
    w = np.einsum("aj,ajy->ay", view.conditional, q)
    row_h = -(view.conditional * flog(view.conditional)).sum(axis=1)
    return _ba_marginal(w, row_h, view.marginal, cfg.entropy_bound, cfg)


def _allocate_row_entropy(marg: np.ndarray, row_h: np.ndarray, need: float,
                          cap: float) -> np.ndarray | None:
    """Targets T with marg @ T = need, proportional to the current row
    entropies, capped at log n_{-i}.  None when even all-caps falls short."""
    pos = marg > _ZERO_MARGINAL
    if need > cap * float(marg[pos].sum()) + 1e-9:
        return None
    targets = np.zeros_like(row_h)
    free = pos.copy()
    remaining = need
    for _ in range(len(marg) + 1):
        weight = float(marg[free] @ row_h[free])
        if weight <= 1e-15:
            mass = float(marg[free].sum())
            t = remaining / mass if mass > 0 else 0.0
            targets[free] = min(t, cap)
            return targets
        r = remaining / weight
        trial = r * row_h
        over = free & (trial > cap)
        if not over.any():
            targets[free] = trial[free]
            return targets
        targets[over] = cap
        remaining -= cap * float(marg[over].sum())
        free &= ~over
        if not free.any():
            return targets if remaining <= 1e-9 else None
    return None


def _best_unit_vector(ctx: _RecordContext, marg: np.ndarray, w: np.ndarray,
                      k: int) -> tuple[int, float]:
    """Best deterministic row k given the others; ties break to the lowest index."""
    best_j, best_i = 0, -math.inf
    w_try = w.copy()
    for j in range(ctx.n_mi):
        w_try[k] = ctx.q[k, j]
        val = _mi(marg, w_try)
        if val > best_i + 1e-15:
            best_j, best_i = j, val
    return best_j, best_i


def _unit_vector_search(ctx: _RecordContext, marg: np.ndarray,
                        cond: np.ndarray, cfg: LeakageConfig) -> tuple[np.ndarray, float]:
    """Coordinate search over deterministic conditionals (constraint slack)."""
    cond = cond.copy()
    w = ctx.channel(cond)
    current = np.full(ctx.n_i, -1)
    for _ in range(max(2, min(cfg.inner_iterations, 50))):
        changed = False
        for k in range(ctx.n_i):
            j, _ = _best_unit_vector(ctx, marg, w, k)
            if j != current[k]:
                current[k] = j
                cond[k] = 0.0
                cond[k, j] = 1.0
                w[k] = ctx.q[k, j]
                changed = True
        if not changed:
            break
    return cond, _mi(marg, w)


def _ascend_conditionals(ctx: _RecordContext, marg: np.ndarray,
                         cond_start: np.ndarray, b: float,
                         cfg: LeakageConfig) -> tuple[np.ndarray, float]:
    """Row-wise coordinate ascent on the entropy boundary (Case 2)."""
    ecfg = cfg.entropy_cfg()
    cond = cond_start.copy()
    row_h = -(cond * flog(cond)).sum(axis=1)
    h_i = entropy(marg)
    need = b - h_i

    # initialization: pull the rows onto a feasible entropy allocation
    # (skipped when the constraint is slack, need <= 0: all rows go through
    # the unit-vector branch below)
    if need > 0:
        targets = _allocate_row_entropy(marg, row_h, need, ctx.cap)
        if targets is None:
            raise InfeasibleError(
                f"record {ctx.i}: entropy deficit {need:.6g} exceeds "
                f"{ctx.cap:.6g} per row")
        for k in range(ctx.n_i):
            if marg[k] > _ZERO_MARGINAL and abs(row_h[k] - targets[k]) > cfg.entropy_tol:
                try:
                    cond[k] = project_entropy(cond[k], targets[k], ecfg)
                except ProjectionError as exc:
                    raise InfeasibleError(str(exc)) from exc
                row_h[k] = entropy(cond[k])

    w = ctx.channel(cond)
    i_cur = _mi(marg, w)
    best_cond, best_i = cond.copy(), i_cur

    for _ in range(cfg.inner_iterations):
        i_sweep_start = i_cur
        for k in range(ctx.n_i):
            if marg[k] <= _ZERO_MARGINAL:
                j, _ = _best_unit_vector(ctx, marg, w, k)
                cond[k] = 0.0
                cond[k, j] = 1.0
                w[k] = ctx.q[k, j]
                row_h[k] = 0.0
                continue
            others = float(marg @ row_h) - marg[k] * row_h[k]
            c = (need - others) / marg[k]
            if c > ctx.cap + 1e-9:
                raise InfeasibleError(
                    f"record {ctx.i}: row {k} needs entropy {c:.6g} > "
                    f"cap {ctx.cap:.6g}")
            if c <= 1e-12:
                j, val = _best_unit_vector(ctx, marg, w, k)
                cond[k] = 0.0
                cond[k, j] = 1.0
                w[k] = ctx.q[k, j]
                row_h[k] = 0.0
                i_cur = val
                continue
            c = min(c, ctx.cap)
            py = marg @ w
            grad = marg[k] * (ctx.q[k] @ (flog(w[k]) - flog(py)))
            eta = cfg.gd_initial_step
            while eta >= _MIN_STEP:
                cand = project_simplex(cond[k] + eta * grad)
                try:
                    cand = project_entropy(cand, c, ecfg)
                except ProjectionError:
                    eta *= cfg.backtrack_factor
                    continue
                w_try = w.copy()
                w_try[k] = cond_row_channel = ctx.q[k].T @ cand
                val = _mi(marg, w_try)
                if val >= i_cur - 1e-12:
                    cond[k] = cand
                    w[k] = cond_row_channel
                    row_h[k] = entropy(cand)
                    i_cur = val
                    break
                eta *= cfg.backtrack_factor
        if i_cur > best_i:
            best_cond, best_i = cond.copy(), i_cur
        if abs(i_cur - i_sweep_start) < cfg.tolerance:
            break
    return best_cond, best_i


def optimize_conditionals(view: RecordView, mech: Mechanism,
                          cfg: LeakageConfig) -> tuple[np.ndarray, float]:
    """Conditional matrix maximizing I(X_i;Y) with the marginal fixed.

    Rows whose boundary entropy c_i^k is nonpositive (and zero-marginal
    rows) become the best unit vectors; binding rows ride the entropy
    boundary H(row) = c_i^k.  Raises InfeasibleError when some row would
    need more than log n_{-i} of entropy.
    """
    space_like = _ViewContext(view, mech)
    return _ascend_conditionals(space_like, view.marginal, view.conditional,
                                cfg.entropy_bound, cfg)


class _ViewContext(_RecordContext):
    """Record context built straight from a view (public-op entry point)."""

    def __init__(self, view: RecordView, mech: Mechanism):
        self.i = view.record_index
        self.index = view.dataset_index
        self.q = mech.rows[self.index]
        self.n_i = self.q.shape[0]
        self.n_mi = self.q.shape[1]
        self.cap = math.log(self.n_mi)


def _compose(space: ProblemSpace, ctx: _RecordContext, marg: np.ndarray,
             cond: np.ndarray) -> np.ndarray:
    probs = np.empty(space.universe_size)
    probs[ctx.index] = marg[:, None] * cond
    return probs


def _random_feasible(space: ProblemSpace, b: float, rng: np.random.Generator,
                     ecfg: EntropyProjectionConfig) -> np.ndarray:
    p = rng.dirichlet(np.full(space.universe_size, 1.5))
    if entropy(p) < b:
        p = project_entropy(p, b, ecfg)
    return p


def _solve_from(space: ProblemSpace, contexts: list[_RecordContext],
                p0: np.ndarray, cfg: LeakageConfig) -> tuple[float, int, np.ndarray, list[float]]:
    b = cfg.entropy_bound
    ecfg = cfg.entropy_cfg()
    p_inc = p0
    l_max, i_max, p_max = -math.inf, -1, p0
    trace: list[float] = []
    for _ in range(cfg.max_outer_iterations):
        l_prev = l_max
        for ctx in contexts:
            block = p_inc[ctx.index]
            marg = block.sum(axis=1)
            cond = np.full_like(block, 1.0 / ctx.n_mi)
            pos = marg > 0
            cond[pos] = block[pos] / marg[pos, None]

            w = ctx.channel(cond)
            row_h = -(cond * flog(cond)).sum(axis=1)
            marg_new, _ = _ba_marginal(w, row_h, marg, b, cfg)
            if b > entropy(marg_new) + _CASE_TOL:
                try:
                    cond_new, i_val = _ascend_conditionals(ctx, marg_new, cond, b, cfg)
                except InfeasibleError:
                    continue
            else:
                cond_new, i_val = _unit_vector_search(ctx, marg_new, cond, cfg)

            candidate = _compose(space, ctx, marg_new, cond_new)
            if entropy(candidate) < b - 1e-7:
                candidate = project_entropy(candidate, b, ecfg)
                block = candidate[ctx.index]
                m2 = block.sum(axis=1)
                c2 = np.full_like(block, 1.0 / ctx.n_mi)
                pos2 = m2 > 0
                c2[pos2] = block[pos2] / m2[pos2, None]
                i_val = _mi(m2, ctx.channel(c2))
            if i_val > l_max:
                l_max, i_max, p_max = i_val, ctx.i, candidate
        trace.append(l_max)
        p_inc = p_max
        if abs(l_max - l_prev) < cfg.tolerance:
            break
    return l_max, i_max, p_max, trace


def max_leakage(space: ProblemSpace, mech: Mechanism,
                cfg: LeakageConfig) -> LeakageResult:
    """Worst-case per-record leakage over priors with H(X) >= b.

    Best-of-restarts with deterministic seeding; restart 0 starts from the
    uniform joint (always feasible), the rest from seeded random feasible
    points.
    """
    if mech.input_size != space.universe_size or mech.output_size != space.output_size:
        raise ValueError("mechanism shape does not match the space")
    b = cfg.entropy_bound
    max_h = math.log(space.universe_size)
    if b > max_h + 1e-9:
        raise ValueError(f"entropy bound {b} exceeds log|X| = {max_h:.6g}")
    b = min(b, max_h)

    contexts = [_RecordContext(space, mech, i) for i in range(space.record_count)]
    ecfg = cfg.entropy_cfg()
    uniform = np.full(space.universe_size, 1.0 / space.universe_size)

    best = None
    for r in range(cfg.restarts):
        if r == 0:
            p0 = uniform
        else:
            rng = np.random.default_rng([cfg.rng_seed, r])
            p0 = _random_feasible(space, b, rng, ecfg)
        leak, i_max, p_max, trace = _solve_from(space, contexts, p0, cfg)
        if best is None or leak > best[0]:
            best = (leak, i_max, p_max, trace)

    leak, i_max, p_max, trace = best
    prior = JointPrior(np.maximum(p_max, 0.0) / p_max.sum())
    feasible = entropy(prior.probs) >= b - 1e-6
    return LeakageResult(leakage=leak, worst_record=i_max, optimal_prior=prior,
                         trace=tuple(trace), feasible=feasible,
                         restarts_used=cfg.restarts)
