"""Simplex and entropy-target projections.

`project_simplex` is the exact Euclidean projection (sort-and-threshold).
`project_entropy` is an entropy-matching retraction along the temperature
path w ~ v**beta, not a Euclidean projection onto the entropy level set:
beta = 1 is the identity, beta -> 0 tends to uniform (max entropy),
beta -> inf tends to a point mass, so H(w(beta)) is monotone in beta and a
bracketed root finder pins the target.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.optimize import brentq

from .core import PROB_FLOOR
from .infotheory import entropy

_BRACKET_EXPANSIONS = 10


class ProjectionError(ArithmeticError):
    """Entropy target unreachable inside the (expanded) temperature bracket."""


@dataclasses.dataclass(frozen=True)
class EntropyProjectionConfig:
    tolerance: float = 1e-8
    max_iterations: int = 200
    beta_bracket: tuple[float, float] = (1e-6, 1e6)

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        lo, hi = self.beta_bracket
        if not 0 < lo < hi:
            raise ValueError("bracket must satisfy 0 < low < high")


DEFAULT_ENTROPY_CONFIG = EntropyProjectionConfig()


def project_simplex(v) -> np.ndarray:
    """Euclidean-nearest point of the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    support = u - css / k > 0
    rho = np.nonzero(support)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _power_scale(logv: np.ndarray, beta: float) -> np.ndarray:
    e = beta * logv
    e -= e.max()
    w = np.exp(e)
    return w / w.sum()


def _entropy_at_beta(logv: np.ndarray, beta: float) -> float:
    """H(softmax of beta*logv) without materializing the distribution twice."""
    e = beta * logv
    e -= e.max()
    w = np.exp(e)
    z = w.sum()
    return math.log(z) - float(w @ e) / z


def project_entropy(v, target: float,
                    cfg: EntropyProjectionConfig = DEFAULT_ENTROPY_CONFIG) -> np.ndarray:
    """Rescale a distribution along the temperature path until H(w) = target.

    The input is floored at the probability floor and renormalized so the
    beta -> 0 limit reaches full-support targets even from (numerically)
    deterministic inputs.  Raises ProjectionError when the target entropy is
    outside what the path can reach within the expanded bracket.
    """
    v = np.maximum(np.asarray(v, dtype=np.float64), PROB_FLOOR)
    v = v / v.sum()
    max_h = np.log(v.size)
    if target < -1e-12 or target > max_h + 1e-9:
        raise ValueError(f"target entropy {target} outside [0, log {v.size}]")
    target = min(max(target, 0.0), max_h)

    if abs(entropy(v) - target) < cfg.tolerance:
        return v

    logv = np.log(v)

    def f(beta: float) -> float:
        return _entropy_at_beta(logv, beta) - target

    lo, hi = cfg.beta_bracket
    f_lo, f_hi = f(lo), f(hi)
    # f is nonincreasing in beta; expand geometrically until it brackets zero
    for _ in range(_BRACKET_EXPANSIONS):
        if f_lo < 0.0:
            lo /= 10.0
            f_lo = f(lo)
        elif f_hi > 0.0:
            hi *= 10.0
            f_hi = f(hi)
        else:
            break
    if f_lo < 0.0 or f_hi > 0.0:
        reach = (_entropy_at_beta(logv, hi), _entropy_at_beta(logv, lo))
        raise ProjectionError(
            f"entropy target {target:.6g} unreachable; achievable range "
            f"[{reach[0]:.6g}, {reach[1]:.6g}] over beta in [{lo:.3g}, {hi:.3g}]")

    beta = brentq(f, lo, hi, xtol=1e-12, rtol=4e-15, maxiter=cfg.max_iterations)
    w = _power_scale(logv, beta)
    if abs(entropy(w) - target) >= cfg.tolerance:
        raise ProjectionError(
            f"root finder left residual {abs(entropy(w) - target):.3g} "
            f"above tolerance {cfg.tolerance:.3g}")
    return w
