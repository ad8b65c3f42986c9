"""Mechanism zoo: generalized flip channels, DP baselines, file loading.

For binary queries the thresholded Laplace and the exponential mechanism
both reduce to symmetric flip channels, so their leakage has the closed
form ln 2 - H_b(flip probability); those closed forms are the baselines the
solvers are audited against.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import FILE_SUM_TOL, Mechanism, ProblemSpace, Query, load_matrix
from .infotheory import LN2, binary_entropy


class UnsupportedMechanismError(ValueError):
    """Requested mechanism variant is not defined for this output alphabet."""


def build_bsc(space: ProblemSpace, query: Query, p: float) -> Mechanism:
    """Generalized symmetric channel: releases f(x) w.p. 1-p, spreads p evenly."""
    if not 0.0 <= p <= 0.5:
        raise ValueError("flip probability must lie in [0, 1/2]")
    f = query.outputs(space)
    m = space.output_size
    rows = np.full((space.universe_size, m), p / (m - 1))
    rows[np.arange(space.universe_size), f] = 1.0 - p
    return Mechanism(rows)


def exact_release(space: ProblemSpace, query: Query) -> Mechanism:
    return build_bsc(space, query, 0.0)


def constant_mechanism(space: ProblemSpace, row) -> Mechanism:
    """All rows equal; the output carries no information about the dataset."""
    row = np.asarray(row, dtype=np.float64)
    return Mechanism(np.tile(row, (space.universe_size, 1)))


def laplace_flip_probability(epsilon: float) -> float:
    """Flip probability of the 0.5-thresholded Laplace release of a binary query."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return 0.5 * math.exp(-epsilon / 2.0)


def exponential_flip_probability(epsilon: float, output_size: int = 2) -> float:
    """Total off-answer mass of the exponential mechanism with indicator utility."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return (output_size - 1) / (math.exp(epsilon / 2.0) + output_size - 1)


def build_laplace_thresholded(space: ProblemSpace, query: Query,
                              epsilon: float) -> Mechanism:
    """Laplace(0, 1/eps) noise on a binary query, thresholded at 0.5.

    Only the binary output case is defined; the discretization for larger
    output alphabets is not supported.
    """
    if space.output_size != 2:
        raise UnsupportedMechanismError(
            "thresholded Laplace is only defined for binary outputs")
    return build_bsc(space, query, laplace_flip_probability(epsilon))


def build_exponential_binary(space: ProblemSpace, query: Query, epsilon: float,
                             extended: bool = False) -> Mechanism:
    """Exponential mechanism with utility 1{y = f(x)}.

    The binary case is the derived baseline.  With extended=True the natural
    generalization P(y|x) ~ exp(eps * 1{y=f(x)} / 2) is built for larger
    output alphabets; it is excluded from baseline comparisons.
    """
    if space.output_size != 2 and not extended:
        raise UnsupportedMechanismError(
            "exponential mechanism baseline is binary-only; pass extended=True "
            "for the generalized variant")
    return build_bsc(space, query,
                     exponential_flip_probability(epsilon, space.output_size))


def bsc_capacity_closed_form(p: float) -> float:
    """ln 2 - H_b(p) in nats, the unconstrained per-record leakage of a flip channel."""
    if not 0.0 <= p <= 0.5:
        raise ValueError("flip probability must lie in [0, 1/2]")
    return LN2 - binary_entropy(p)


def load_mechanism(path, space: ProblemSpace) -> Mechanism:
    """Read a mechanism matrix file and validate it against the space."""
    m = load_matrix(path)
    expected = (space.universe_size, space.output_size)
    if m.shape != expected:
        raise ValueError(f"{path}: mechanism shape {m.shape} does not match "
                         f"space {expected}")
    if np.any(m < 0):
        r = int(np.argwhere(m < 0)[0][0])
        raise ValueError(f"{path}: row {r} has a negative entry")
    sums = m.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > FILE_SUM_TOL)[0]
    if bad.size:
        raise ValueError(f"{path}: row {bad[0]} sums to {sums[bad[0]]}, "
                         f"outside tolerance {FILE_SUM_TOL}")
    return Mechanism(m / sums[:, None])


@dataclasses.dataclass(frozen=True)
class MechanismSpec:
    """Parsed mechanism request, realized against a (space, query) pair."""

    kind: str                 # "bsc" | "laplace" | "exp" | "file"
    param: float | None = None
    path: str | None = None
    extended: bool = False

    @classmethod
    def parse(cls, text: str, extended: bool = False) -> "MechanismSpec":
        kind, sep, arg = text.partition(":")
        if not sep:
            raise ValueError(f"mechanism spec {text!r} must look like kind:arg")
        if kind == "file":
            return cls("file", path=arg)
        if kind not in ("bsc", "laplace", "exp"):
            raise ValueError(f"unknown mechanism kind {kind!r}")
        try:
            value = float(arg)
        except ValueError as exc:
            raise ValueError(f"bad numeric argument in {text!r}") from exc
        return cls(kind, param=value, extended=extended)

    def build(self, space: ProblemSpace, query: Query) -> Mechanism:
        if self.kind == "bsc":
            return build_bsc(space, query, self.param)
        if self.kind == "laplace":
            return build_laplace_thresholded(space, query, self.param)
        if self.kind == "exp":
            return build_exponential_binary(space, query, self.param,
                                            extended=self.extended)
        if self.kind == "file":
            return load_mechanism(self.path, space)
        raise ValueError(f"unknown mechanism kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "file":
            return f"file:{self.path}"
        return f"{self.kind}:{self.param:g}"
