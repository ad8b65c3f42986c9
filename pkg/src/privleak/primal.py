"""Leakage-distortion tradeoff: smallest worst-case leakage under a distortion cap.

Outer alternation: audit the current mechanism (worst-case prior via the
leakage solver), then push the mechanism downhill on
max_i I(X_i;Y) + lambda * softplus(E - D)^2 with exponentiated-gradient
steps and an adaptively scaled penalty.  The returned point is the best
audited iterate that satisfies the distortion cap.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import expit

from .core import (JointPrior, Mechanism, ProblemSpace, Query, DistortionMetric,
                   PROB_FLOOR, distortion_profile, record_index_map)
from .infotheory import flog
from .leakage import LeakageConfig, max_leakage

_MIN_STEP = 1e-12


def softplus(z: float) -> float:
    return float(np.logaddexp(0.0, z))


@dataclasses.dataclass(frozen=True)
class PrimalConfig:
    """Inputs and knobs for the primal solver."""

    distortion_bound: float
    entropy_bound: float
    penalty_init: float = 1.0
    penalty_factor: float = 1.5
    constraint_margin: float = 0.01       # delta: allowed overshoot of E past D
    tolerance: float = 1e-4               # outer stop on audited leakage change
    min_outer_rounds: int = 3
    max_outer_rounds: int = 15
    mech_rounds: int = 25                 # penalty-adaptation rounds per update
    gd_steps: int = 40                    # exponentiated-gradient steps per round
    gd_initial_step: float = 1.0
    backtrack_factor: float = 0.5
    gd_tolerance: float = 1e-7            # L1 movement stop for the gradient loop
    rng_seed: int = 0
    leakage: LeakageConfig | None = None  # audit sub-config; derived when omitted

    def __post_init__(self):
        if self.distortion_bound < 0:
            raise ValueError("distortion bound must be nonnegative")
        if self.penalty_factor <= 1:
            raise ValueError("penalty factor must exceed 1")
        if self.constraint_margin <= 0:
            raise ValueError("constraint margin must be positive")
        if self.leakage is None:
            sub = LeakageConfig(entropy_bound=self.entropy_bound, restarts=3,
                                inner_iterations=120, tolerance=1e-5,
                                max_outer_iterations=80, rng_seed=self.rng_seed)
            object.__setattr__(self, "leakage", sub)
        elif abs(self.leakage.entropy_bound - self.entropy_bound) > 1e-12:
            raise ValueError("leakage sub-config entropy bound disagrees")


@dataclasses.dataclass(frozen=True)
class TradeoffPoint:
    """One point of a Pareto sweep; leakage and distortion are audited values
    for the returned mechanism."""

    bound_requested: float
    value_achieved: float
    constraint_residual: float
    leakage: float
    distortion: float
    mechanism: Mechanism
    prior: JointPrior
    iterations: int


class PriorSurrogate:
    """Fixed adversary prior, prepared for fast per-record MI evaluation."""

    def __init__(self, space: ProblemSpace, prior: JointPrior):
        self.space = space
        self.prior = prior
        self.blocks = []
        for i in range(space.record_count):
            idx = record_index_map(space, i)
            block = prior.probs[idx]
            self.blocks.append((idx, block, block.sum(axis=1)))

    def record_mi(self, rows: np.ndarray, i: int) -> float:
        idx, block, marg = self.blocks[i]
        joint_y = np.einsum("aj,ajy->ay", block, rows[idx])
        py = joint_y.sum(axis=0)
        terms = joint_y * (flog(joint_y) - flog(marg)[:, None] - flog(py))
        return max(float(terms.sum()), 0.0)

    def worst_record(self, rows: np.ndarray) -> tuple[float, int]:
        """max_i I(X_i;Y); ties go to the lowest record index."""
        best, best_i = -1.0, 0
        for i in range(self.space.record_count):
            val = self.record_mi(rows, i)
            if val > best:
                best, best_i = val, i
        return best, best_i

    def grad_mi(self, rows: np.ndarray, i: int) -> np.ndarray:
        """d I(X_i;Y) / d q = p(x) log(p(y|x_i)/p(y)), shape |X| x |Y|."""
        idx, block, marg = self.blocks[i]
        joint_y = np.einsum("aj,ajy->ay", block, rows[idx])
        py = joint_y.sum(axis=0)
        ratio = flog(joint_y) - flog(marg)[:, None] - flog(py)
        out = np.zeros_like(rows)
        out[idx] = block[:, :, None] * ratio[:, None, :]
        return out


# ---------------------------------------------------------------------------
# Penalties and objective

def penalty_distortion(space: ProblemSpace, mech: Mechanism, p0: JointPrior,
                       query: Query, metric: DistortionMetric,
                       bound: float) -> tuple[float, np.ndarray]:
    """Squared softplus of the distortion overshoot, with its mechanism gradient."""
    prof = distortion_profile(space, query, metric)
    e = float(np.einsum("x,xy,xy->", p0.probs, mech.rows, prof))
    z = e - bound
    sp = softplus(z)
    grad = 2.0 * sp * expit(z) * p0.probs[:, None] * prof
    return sp * sp, grad


def mechanism_objective_grad(space: ProblemSpace, prior: JointPrior,
                             mech: Mechanism, p0: JointPrior, lam: float,
                             bound: float, query: Query,
                             metric: DistortionMetric) -> tuple[float, np.ndarray]:
    """Penalized objective max_i I(X_i;Y) + lambda * P_distortion and its gradient."""
    surr = PriorSurrogate(space, prior)
    imax, istar = surr.worst_record(mech.rows)
    pval, pgrad = penalty_distortion(space, mech, p0, query, metric, bound)
    return imax + lam * pval, surr.grad_mi(mech.rows, istar) + lam * pgrad


# ---------------------------------------------------------------------------
# Exponentiated-gradient engine (shared with the dual solver)

def exp_gradient_step(mech: Mechanism, grad: np.ndarray, eta: float) -> Mechanism:
    """One row-wise multiplicative update q <- q * exp(-eta * grad), renormalized.

    Computed in the log domain; invariant to row-constant gradient shifts,
    so a zero or per-row-constant gradient leaves the mechanism unchanged.
    """
    return Mechanism(_exp_step(mech.rows, grad, eta))


def _exp_step(rows: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    logq = flog(rows) - eta * grad
    logq -= logq.max(axis=1, keepdims=True)
    q = np.exp(logq)
    return q / q.sum(axis=1, keepdims=True)


def _kl_grad_norm_sq(rows: np.ndarray, grad: np.ndarray) -> float:
    """Squared gradient norm in the local KL geometry: row-wise q-weighted
    variance.  This is the norm under which the multiplicative step's
    directional derivative equals -norm^2, making the Armijo test meaningful.

    Uses the same floored weights as the step itself, so revival gradients
    on (numerically) zero entries still register instead of reading as
    stationarity at a vertex.
    """
    w = np.maximum(rows, PROB_FLOOR)
    w = w / w.sum(axis=1, keepdims=True)
    mean = np.einsum("xy,xy->x", w, grad)
    sq = np.einsum("xy,xy->x", w, grad * grad)
    return float(np.maximum(sq - mean * mean, 0.0).sum())


def exp_gradient_descent(rows: np.ndarray, value_and_grad, value,
                         steps: int, eta0: float, beta: float, move_tol: float,
                         step_log: list | None = None) -> tuple[np.ndarray, bool]:
    """Backtracking exponentiated-gradient descent (the inner loop of both
    mechanism updates).

    A step at rate eta is accepted when J_new <= J - (eta/2) * ||grad||^2 in
    the KL-local norm; otherwise eta is cut by beta.  The base rate decays as
    eta0 / sqrt(t+1).  Returns (rows, stalled); stalled means backtracking
    exhausted without an acceptable step and the input is returned unchanged
    for that step.
    """
    stalled = False
    for t in range(steps):
        j_cur, grad = value_and_grad(rows)
        gnorm2 = _kl_grad_norm_sq(rows, grad)
        if gnorm2 <= 1e-20:
            break
        eta = eta0 / math.sqrt(t + 1.0)
        accepted = False
        while eta >= _MIN_STEP:
            cand = _exp_step(rows, grad, eta)
            j_new = value(cand)
            if j_new <= j_cur - 0.5 * eta * gnorm2:
                accepted = True
                break
            eta *= beta
        if not accepted:
            stalled = True
            break
        if step_log is not None:
            step_log.append((j_cur, j_new, eta, gnorm2))
        moved = float(np.abs(cand - rows).sum())
        rows = cand
        if moved < move_tol:
            break
    return rows, stalled


# ---------------------------------------------------------------------------
# Mechanism update (adaptive smooth penalty) and the outer alternation

def initial_feasible_mechanism(space: ProblemSpace, p0: JointPrior, query: Query,
                               metric: DistortionMetric, bound: float) -> Mechanism:
    """Convex mix of the exact release toward uniform, at the largest mixing
    weight keeping the expected distortion within the bound (closed form:
    distortion is linear in the mix)."""
    if bound < 0:
        raise ValueError("no mechanism can satisfy a negative distortion bound")
    f = query.outputs(space)
    m = space.output_size
    exact = np.zeros((space.universe_size, m))
    exact[np.arange(space.universe_size), f] = 1.0
    uniform = np.full_like(exact, 1.0 / m)
    prof = distortion_profile(space, query, metric)
    e_uniform = float(np.einsum("x,xy,xy->", p0.probs, uniform, prof))
    theta = 1.0 if e_uniform <= bound else bound / e_uniform
    return Mechanism((1.0 - theta) * exact + theta * uniform)


def update_mechanism(space: ProblemSpace, prior: JointPrior, p0: JointPrior,
                     query: Query, metric: DistortionMetric, cfg: PrimalConfig,
                     start: Mechanism | None = None, lam: float | None = None,
                     eta_scale: float = 1.0,
                     step_log: list | None = None) -> tuple[Mechanism, float]:
    """Penalty rounds of exponentiated-gradient descent for a fixed prior.

    Returns the best distortion-feasible iterate (smallest worst-record MI
    under the fixed prior with E <= D + margin) and the adapted penalty
    weight, for warm-starting the next outer round.  `eta_scale` shrinks the
    base step; the outer alternation anneals it so the prior-vs-mechanism
    game settles instead of cycling.
    """
    bound = cfg.distortion_bound
    delta = cfg.constraint_margin
    surr = PriorSurrogate(space, prior)
    prof = distortion_profile(space, query, metric)
    p0v = p0.probs

    def distortion_of(rows):
        return float(np.einsum("x,xy,xy->", p0v, rows, prof))

    def make_objective(lam_now):
        def value(rows):
            imax, _ = surr.worst_record(rows)
            sp = softplus(distortion_of(rows) - bound)
            return imax + lam_now * sp * sp

        def value_and_grad(rows):
            imax, istar = surr.worst_record(rows)
            z = distortion_of(rows) - bound
            sp = softplus(z)
            grad = surr.grad_mi(rows, istar) \
                + lam_now * 2.0 * sp * expit(z) * p0v[:, None] * prof
            return imax + lam_now * sp * sp, grad
        return value, value_and_grad

    rows = (start or initial_feasible_mechanism(space, p0, query, metric, bound)).rows
    lam = cfg.penalty_init if lam is None else lam
    history = []
    e_prev = None
    for _ in range(cfg.mech_rounds):
        value, vag = make_objective(lam)
        rows, _ = exp_gradient_descent(rows, vag, value, cfg.gd_steps,
                                       cfg.gd_initial_step * eta_scale,
                                       cfg.backtrack_factor,
                                       cfg.gd_tolerance, step_log)
        e = distortion_of(rows)
        imax, _ = surr.worst_record(rows)
        history.append((imax, e, rows))
        if e > bound + delta:
            lam *= cfg.penalty_factor
        elif e < bound - delta:
            lam /= cfg.penalty_factor
        if e_prev is not None and abs(e - e_prev) < cfg.tolerance and e <= bound + delta:
            break
        e_prev = e

    feasible = [(imax, e, r) for imax, e, r in history if e <= bound + delta]
    if feasible:
        best = min(feasible, key=lambda item: item[0])
    else:
        best = min(history, key=lambda item: item[0] + lam * softplus(item[1] - bound) ** 2)
    return Mechanism(best[2]), lam


def primal_tradeoff(space: ProblemSpace, p0: JointPrior, query: Query,
                    metric: DistortionMetric, cfg: PrimalConfig,
                    step_log: list | None = None) -> TradeoffPoint:
    """Alternate worst-case prior audits with mechanism updates until the
    audited leakage settles; return the best audited feasible point."""
    bound = cfg.distortion_bound
    delta = cfg.constraint_margin
    prof = distortion_profile(space, query, metric)

    q = initial_feasible_mechanism(space, p0, query, metric, bound)
    lam = None
    best = None       # (leakage, distortion, mechanism, prior)
    i_prev = None
    rounds = 0
    for k in range(cfg.max_outer_rounds):
        audit = max_leakage(space, q, cfg.leakage)
        e = float(np.einsum("x,xy,xy->", p0.probs, q.rows, prof))
        rounds = k + 1
        if e <= bound + delta and (best is None or audit.leakage < best[0]):
            best = (audit.leakage, e, q, audit.optimal_prior)
        if (i_prev is not None and k >= cfg.min_outer_rounds
                and abs(audit.leakage - i_prev) <= cfg.tolerance):
            break
        i_prev = audit.leakage
        q, lam = update_mechanism(space, audit.optimal_prior, p0, query, metric,
                                  cfg, start=q, lam=lam,
                                  eta_scale=1.0 / math.sqrt(k + 1.0),
                                  step_log=step_log)

    if best is None:
        # never landed inside the cap: report the last iterate honestly
        audit = max_leakage(space, q, cfg.leakage)
        e = float(np.einsum("x,xy,xy->", p0.probs, q.rows, prof))
        best = (audit.leakage, e, q, audit.optimal_prior)

    leak, dist, mech, prior = best
    return TradeoffPoint(bound_requested=bound, value_achieved=leak,
                         constraint_residual=dist - bound, leakage=leak,
                         distortion=dist, mechanism=mech, prior=prior,
                         iterations=rounds)
