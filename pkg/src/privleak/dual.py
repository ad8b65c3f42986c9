"""Minimal distortion under a leakage cap (the dual tradeoff).

Starts from the exact release (utility-optimal) and trades toward privacy:
alternate worst-case prior audits with penalty-weighted exponentiated
gradient descent on E + lambda * softplus(max_i I - L)^2.  A single penalty
weight is threaded through the outer loop and the inner update.  The
returned point is the lowest-distortion iterate whose audited leakage
satisfies the cap; the best constant prediction is the always-feasible
fallback.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import expit

from .core import (DistortionMetric, JointPrior, Mechanism, ProblemSpace, Query,
                   distortion_profile)
from .infotheory import LN2
from .leakage import LeakageConfig, max_leakage
from .mechanisms import exact_release
from .primal import (PriorSurrogate, TradeoffPoint, exp_gradient_descent,
                     softplus)


@dataclasses.dataclass(frozen=True)
class DualConfig:
    """Inputs and knobs for the dual solver."""

    leakage_bound: float
    entropy_bound: float
    outer_tolerance: float = 1e-3         # relative distortion change
    constraint_tolerance: float = 0.01    # allowed leakage overshoot
    penalty_init: float = 1.0
    penalty_factor: float = 1.5
    constraint_margin: float = 0.01       # delta inside the mechanism update
    min_outer_rounds: int = 60            # annealing needs room before the
    max_outer_rounds: int = 250           # relative-change stop may fire
    mech_rounds: int = 2                  # keep rounds light: the adversary must
    gd_steps: int = 10                    # re-audit often or dead rows get cleaned
    gd_initial_step: float = 1.0
    backtrack_factor: float = 0.5
    gd_tolerance: float = 1e-7
    inner_tolerance: float = 1e-4         # leakage change stop in the update
    zigzag_damping: bool = False          # average the penalty weight on flips
    rng_seed: int = 0
    leakage: LeakageConfig | None = None

    def __post_init__(self):
        if self.leakage_bound <= 0:
            raise ValueError("leakage bound must be positive")
        if self.penalty_factor <= 1:
            raise ValueError("penalty factor must exceed 1")
        if self.leakage is None:
            sub = LeakageConfig(entropy_bound=self.entropy_bound, restarts=3,
                                inner_iterations=120, tolerance=1e-5,
                                max_outer_iterations=80, rng_seed=self.rng_seed)
            object.__setattr__(self, "leakage", sub)
        elif abs(self.leakage.entropy_bound - self.entropy_bound) > 1e-12:
            raise ValueError("leakage sub-config entropy bound disagrees")


def penalty_leakage(space: ProblemSpace, prior: JointPrior, mech: Mechanism,
                    bound: float) -> tuple[float, np.ndarray]:
    """Squared softplus of the leakage overshoot under a fixed prior, with its
    mechanism gradient taken at the worst record."""
    surr = PriorSurrogate(space, prior)
    imax, istar = surr.worst_record(mech.rows)
    z = imax - bound
    sp = softplus(z)
    grad = 2.0 * sp * expit(z) * surr.grad_mi(mech.rows, istar)
    return sp * sp, grad


def dual_exp_gradient(mech: Mechanism, space: ProblemSpace, prior: JointPrior,
                      p0: JointPrior, query: Query, metric: DistortionMetric,
                      lam: float, bound: float, cfg: DualConfig,
                      step_log: list | None = None) -> Mechanism:
    """Exponentiated-gradient descent on E + lambda * P_leakage for a fixed
    prior; the worst record is refreshed at every step."""
    surr = PriorSurrogate(space, prior)
    prof = distortion_profile(space, query, metric)
    value, vag, _ = _make_dual_objective(surr, p0.probs, prof, bound, lam)
    rows, _ = exp_gradient_descent(mech.rows, vag, value, cfg.gd_steps,
                                   cfg.gd_initial_step, cfg.backtrack_factor,
                                   cfg.gd_tolerance, step_log)
    return Mechanism(rows)


def _make_dual_objective(surr: PriorSurrogate, p0v: np.ndarray, prof: np.ndarray,
                         bound: float, lam: float):
    def distortion_of(rows):
        return float(np.einsum("x,xy,xy->", p0v, rows, prof))

    def value(rows):
        imax, _ = surr.worst_record(rows)
        sp = softplus(imax - bound)
        return distortion_of(rows) + lam * sp * sp

    def value_and_grad(rows):
        imax, istar = surr.worst_record(rows)
        z = imax - bound
        sp = softplus(z)
        grad = p0v[:, None] * prof + lam * 2.0 * sp * expit(z) * surr.grad_mi(rows, istar)
        return distortion_of(rows) + lam * sp * sp, grad

    return value, value_and_grad, distortion_of


def dual_mechanism_update(space: ProblemSpace, prior: JointPrior, p0: JointPrior,
                          query: Query, metric: DistortionMetric, cfg: DualConfig,
                          start: Mechanism, lam: float, eta_scale: float = 1.0,
                          step_log: list | None = None) -> tuple[Mechanism, float]:
    """Penalty rounds of the dual gradient descent for a fixed prior.

    Returns the best penalized iterate (re-scored at the final penalty
    weight) and the adapted weight.  `eta_scale` is annealed by the outer
    loop so the adversary-vs-mechanism alternation settles.
    """
    bound = cfg.leakage_bound
    delta = cfg.constraint_margin
    surr = PriorSurrogate(space, prior)
    prof = distortion_profile(space, query, metric)
    p0v = p0.probs

    rows = start.rows
    history = []
    i_prev = None
    for _ in range(cfg.mech_rounds):
        value, vag, distortion_of = _make_dual_objective(surr, p0v, prof, bound, lam)
        rows, _ = exp_gradient_descent(rows, vag, value, cfg.gd_steps,
                                       cfg.gd_initial_step * eta_scale,
                                       cfg.backtrack_factor,
                                       cfg.gd_tolerance, step_log)
        imax, _ = surr.worst_record(rows)
        e = distortion_of(rows)
        history.append((imax, e, rows))
        # the fixed-prior leakage only lower-bounds the audited constraint:
        # raise the weight on violation, but leave decreases to the outer
        # loop, which sees the true audit
        if imax > bound + delta:
            lam *= cfg.penalty_factor
        if i_prev is not None and abs(imax - i_prev) < cfg.inner_tolerance \
                and imax <= bound + delta:
            break
        i_prev = imax

    best = min(history,
               key=lambda item: item[1] + lam * softplus(item[0] - bound) ** 2)
    return Mechanism(best[2]), lam


def best_constant_mechanism(space: ProblemSpace, p0: JointPrior, query: Query,
                            metric: DistortionMetric) -> Mechanism:
    """Constant-row mechanism with the smallest expected distortion.

    Leaks nothing for any prior, so it satisfies every positive leakage
    bound; the distortion is that of the best constant prediction.
    """
    prof = distortion_profile(space, query, metric)
    y_star = int(np.argmin(p0.probs @ prof))
    row = np.zeros(space.output_size)
    row[y_star] = 1.0
    return Mechanism(np.tile(row, (space.universe_size, 1)))


def dual_solve(space: ProblemSpace, p0: JointPrior, query: Query,
               metric: DistortionMetric, cfg: DualConfig,
               step_log: list | None = None) -> TradeoffPoint:
    """Alternate audits and penalized mechanism updates until the distortion
    settles with the leakage cap met; return the lowest-distortion audited
    feasible iterate."""
    bound = cfg.leakage_bound
    eps_c = cfg.constraint_tolerance
    prof = distortion_profile(space, query, metric)
    p0v = p0.probs

    q = exact_release(space, query)
    lam = cfg.penalty_init
    d_prev = None
    best = None            # (distortion, leakage, mechanism, prior)
    lam_up = lam_down = None
    prev_sign = 0
    rounds = 0
    for k in range(cfg.max_outer_rounds):
        audit = max_leakage(space, q, cfg.leakage)
        leak = audit.leakage
        e = float(np.einsum("x,xy,xy->", p0v, q.rows, prof))
        rounds = k + 1
        if leak <= bound + eps_c and (best is None or e < best[0]):
            best = (e, leak, q, audit.optimal_prior)
            if e <= 1e-15:
                break   # distortion floor reached; the cap never binds here

        # outer penalty adaptation on the audited leakage
        if leak > bound + 0.5 * eps_c:
            sign = 1
            lam_up = lam
        elif leak < bound - 0.5 * eps_c:
            sign = -1
            lam_down = lam
        else:
            sign = 0
        if (cfg.zigzag_damping and sign and prev_sign and sign != prev_sign
                and lam_up is not None and lam_down is not None):
            lam = 0.5 * (lam_up + lam_down)
        elif sign > 0:
            lam *= cfg.penalty_factor
        elif sign < 0:
            lam /= cfg.penalty_factor
        prev_sign = sign

        q, lam = dual_mechanism_update(space, audit.optimal_prior, p0, query,
                                       metric, cfg, start=q, lam=lam,
                                       eta_scale=1.0 / math.sqrt(k + 1.0),
                                       step_log=step_log)
        d_cur = float(np.einsum("x,xy,xy->", p0v, q.rows, prof))
        if d_prev is not None and k + 1 >= cfg.min_outer_rounds:
            change = abs(d_cur - d_prev)
            rel = change / d_prev if d_prev > 1e-9 else change
            if rel < cfg.outer_tolerance and abs(leak - bound) < eps_c:
                break
        d_prev = d_cur

    if best is None:
        fallback = best_constant_mechanism(space, p0, query, metric)
        e = float(np.einsum("x,xy,xy->", p0v, fallback.rows, prof))
        audit = max_leakage(space, fallback, cfg.leakage)
        best = (e, audit.leakage, fallback, audit.optimal_prior)

    dist, leak, mech, prior = best
    return TradeoffPoint(bound_requested=bound, value_achieved=dist,
                         constraint_residual=leak - bound, leakage=leak,
                         distortion=dist, mechanism=mech, prior=prior,
                         iterations=rounds)


def leakage_cap_trivial(space: ProblemSpace, bound: float) -> bool:
    """True when the cap can never bind for binary outputs (L >= ln 2)."""
    return space.output_size == 2 and bound >= LN2
