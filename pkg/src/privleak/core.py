"""Domain types: dataset universes, priors, record views, mechanisms, queries, distortion.

A dataset is one joint assignment of all records; the universe is the
Cartesian product of per-record alphabets, flattened in mixed-radix order
with record 0 as the slowest-varying digit.  All probability objects are
plain dense numpy arrays wrapped in frozen dataclasses; every operation
here is a pure function.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from typing import NamedTuple

import numpy as np

MAX_UNIVERSE = 2 ** 24
PROB_FLOOR = 1e-10   # all log computations clip below this
SUM_TOL = 1e-9       # distributions must sum to 1 within this on construction
FILE_SUM_TOL = 1e-6  # looser tolerance for text files; rows renormalized


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclasses.dataclass(frozen=True)
class ProblemSpace:
    """Universe of datasets: per-record alphabet sizes and the output alphabet size."""

    alphabet_sizes: tuple[int, ...]
    output_size: int
    max_universe: int = MAX_UNIVERSE

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.alphabet_sizes)
        object.__setattr__(self, "alphabet_sizes", sizes)
        if len(sizes) < 1:
            raise ValueError("need at least one record")
        if any(k < 2 for k in sizes):
            raise ValueError("every record alphabet must have size >= 2")
        if self.output_size < 2:
            raise ValueError("output alphabet must have size >= 2")
        total = math.prod(sizes)
        if total > self.max_universe:
            raise ValueError(f"universe size {total} exceeds cap {self.max_universe}")

    @classmethod
    def binary(cls, n: int, output_size: int = 2) -> "ProblemSpace":
        return cls((2,) * n, output_size)

    @property
    def record_count(self) -> int:
        return len(self.alphabet_sizes)

    @property
    def universe_size(self) -> int:
        return math.prod(self.alphabet_sizes)

    def complement_size(self, i: int) -> int:
        """Size of the joint alphabet of all records except record i."""
        return self.universe_size // self.alphabet_sizes[i]


def encode_index(space: ProblemSpace, symbols) -> int:
    """Mixed-radix encoding of per-record symbol values (record 0 slowest-varying)."""
    if len(symbols) != space.record_count:
        raise ValueError("symbol count does not match record count")
    idx = 0
    for s, k in zip(symbols, space.alphabet_sizes):
        s = int(s)
        if not 0 <= s < k:
            raise ValueError(f"symbol {s} out of range [0, {k})")
        idx = idx * k + s
    return idx


def decode_index(space: ProblemSpace, index: int) -> tuple[int, ...]:
    """Inverse of encode_index."""
    index = int(index)
    if not 0 <= index < space.universe_size:
        raise ValueError(f"index {index} out of range [0, {space.universe_size})")
    out = []
    for k in reversed(space.alphabet_sizes):
        out.append(index % k)
        index //= k
    return tuple(reversed(out))


@functools.lru_cache(maxsize=None)
def record_index_map(space: ProblemSpace, i: int) -> np.ndarray:
    """Map (x_i, x_{-i}) pairs to dataset indices, shape (n_i, n_{-i}).

    Column j fixes one joint assignment of the other records, in their own
    mixed-radix order; used to slice mechanisms and joints record-wise.
    """
    if not 0 <= i < space.record_count:
        raise ValueError(f"record index {i} out of range")
    full = np.arange(space.universe_size).reshape(space.alphabet_sizes)
    m = np.moveaxis(full, i, 0).reshape(space.alphabet_sizes[i], -1)
    m.flags.writeable = False
    return m


@functools.lru_cache(maxsize=None)
def record_digits(space: ProblemSpace, i: int) -> np.ndarray:
    """digit[x] = value of record i inside dataset index x, shape (|X|,)."""
    stride = math.prod(space.alphabet_sizes[i + 1:])
    d = (np.arange(space.universe_size) // stride) % space.alphabet_sizes[i]
    d.flags.writeable = False
    return d


@dataclasses.dataclass(frozen=True)
class JointPrior:
    """Adversary belief p(x) over the universe, flat vector in mixed-radix order."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1:
            raise ValueError("prior must be a flat vector")
        if np.any(p < 0):
            raise ValueError("prior has negative mass")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"prior mass {p.sum()} not within {SUM_TOL} of 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, space: ProblemSpace) -> "JointPrior":
        n = space.universe_size
        return cls(np.full(n, 1.0 / n))


@dataclasses.dataclass(frozen=True)
class RecordView:
    """Per-record factorization of a joint prior: p(x_i) and p(x_{-i}|x_i).

    `dataset_index[a, j]` gives the universe index of the dataset with
    x_i = a and the j-th assignment of the remaining records.  Rows of the
    conditional whose marginal entry is zero hold the uniform row by
    convention; solvers overwrite them.
    """

    record_index: int
    marginal: np.ndarray
    conditional: np.ndarray
    dataset_index: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "marginal", _frozen(self.marginal))
        object.__setattr__(self, "conditional", _frozen(self.conditional))
        if self.conditional.shape[0] != self.marginal.shape[0]:
            raise ValueError("conditional rows must match marginal length")


def extract_view(space: ProblemSpace, prior: JointPrior, i: int) -> RecordView:
    """Factor a joint prior as p(x_i) * p(x_{-i}|x_i) for record i."""
    idx = record_index_map(space, i)
    block = prior.probs[idx]
    marginal = block.sum(axis=1)
    n_mi = block.shape[1]
    conditional = np.full_like(block, 1.0 / n_mi)
    pos = marginal > 0
    conditional[pos] = block[pos] / marginal[pos, None]
    return RecordView(i, marginal, conditional, idx)


def compose_view(space: ProblemSpace, view: RecordView) -> JointPrior:
    """Rebuild the joint prior from a record view (inverse of extract_view)."""
    probs = np.empty(space.universe_size)
    probs[view.dataset_index] = view.marginal[:, None] * view.conditional
    total = probs.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise ValueError("view does not compose to a distribution")
    return JointPrior(probs)


@dataclasses.dataclass(frozen=True)
class Mechanism:
    """Privacy channel q(y|x): row x is a distribution over outputs."""

    rows: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rows)
        if r.ndim != 2:
            raise ValueError("mechanism must be a 2-D matrix")
        if np.any(r < 0):
            raise ValueError("mechanism has negative entries")
        sums = r.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > SUM_TOL)[0]
        if bad.size:
            raise ValueError(f"mechanism row {bad[0]} sums to {sums[bad[0]]}")
        object.__setattr__(self, "rows", r)

    @property
    def input_size(self) -> int:
        return self.rows.shape[0]

    @property
    def output_size(self) -> int:
        return self.rows.shape[1]


class ChannelView(NamedTuple):
    """Induced record channel p(y|x_i) plus the output marginal p(y)."""

    cond: np.ndarray    # (n_i, |Y|)
    output: np.ndarray  # (|Y|,)


def output_channel(view: RecordView, mech: Mechanism) -> ChannelView:
    """p(y|x_i) = sum over x_{-i} of p(x_{-i}|x_i) q(y|x), and p(y)."""
    q = mech.rows[view.dataset_index]              # (n_i, n_{-i}, |Y|)
    cond = np.einsum("aj,ajy->ay", view.conditional, q)
    return ChannelView(cond, view.marginal @ cond)


@dataclasses.dataclass(frozen=True)
class Query:
    """Deterministic query f: X -> Y, evaluated by dataset index."""

    kind: str                      # "modular_sum" | "pairwise_product" | "table"
    modulus: int | None = None
    table: tuple[int, ...] | None = None

    @classmethod
    def modular_sum(cls, modulus: int) -> "Query":
        if modulus < 2:
            raise ValueError("modulus must be >= 2")
        return cls("modular_sum", modulus=modulus)

    @classmethod
    def parity(cls) -> "Query":
        return cls.modular_sum(2)

    @classmethod
    def pairwise_product(cls) -> "Query":
        return cls("pairwise_product")

    @classmethod
    def from_table(cls, values) -> "Query":
        return cls("table", table=tuple(int(v) for v in values))

    def outputs(self, space: ProblemSpace) -> np.ndarray:
        """f(x) for every dataset index, validated against the output alphabet."""
        if self.kind == "table":
            if len(self.table) != space.universe_size:
                raise ValueError("query table length does not match universe")
            f = np.asarray(self.table, dtype=np.int64)
        else:
            grid = np.indices(space.alphabet_sizes).reshape(space.record_count, -1)
            if self.kind == "modular_sum":
                f = grid.sum(axis=0) % self.modulus
            elif self.kind == "pairwise_product":
                s = grid.sum(axis=0)
                f = (s * s - (grid * grid).sum(axis=0)) // 2
            else:
                raise ValueError(f"unknown query kind {self.kind!r}")
        if f.min() < 0 or f.max() >= space.output_size:
            raise ValueError("query value outside the output alphabet")
        return f


@dataclasses.dataclass(frozen=True)
class DistortionMetric:
    """Distortion d(y, y') on the output alphabet; zero diagonal, nonnegative."""

    kind: str                       # "absolute" | "table"
    table: np.ndarray | None = None

    @classmethod
    def absolute_difference(cls) -> "DistortionMetric":
        return cls("absolute")

    @classmethod
    def from_table(cls, matrix) -> "DistortionMetric":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("distortion table must be square")
        if np.any(m < 0) or np.any(np.diag(m) != 0):
            raise ValueError("distortion must be nonnegative with zero diagonal")
        return cls("table", table=_frozen(m))

    def matrix(self, output_size: int) -> np.ndarray:
        if self.kind == "absolute":
            y = np.arange(output_size)
            return np.abs(y[:, None] - y[None, :]).astype(np.float64)
        if self.table.shape[0] != output_size:
            raise ValueError("distortion table size does not match output alphabet")
        return self.table


def expected_distortion(space: ProblemSpace, p0: JointPrior, mech: Mechanism,
                        query: Query, metric: DistortionMetric) -> float:
    """E over p0 and the mechanism of d(f(X), Y), as the exact double sum."""
    f = query.outputs(space)
    dmat = metric.matrix(space.output_size)
    return float(np.einsum("x,xy,xy->", p0.probs, mech.rows, dmat[f]))


def distortion_profile(space: ProblemSpace, query: Query,
                       metric: DistortionMetric) -> np.ndarray:
    """d(f(x), y) for every (x, y); the linear coefficients of the distortion."""
    return metric.matrix(space.output_size)[query.outputs(space)]


# ---------------------------------------------------------------------------
# Matrix file format: first line "|X| |Y|", then |X| rows of |Y| decimals.
# Priors use the same format with |Y| = 1.

def load_matrix(path) -> np.ndarray:
    """Read a matrix file; shape is taken from the header line."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be '<rows> <cols>'")
        try:
            rows, cols = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed header {header!r}") from exc
        data = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            values = line.split()
            if len(values) != cols:
                raise ValueError(f"{path}:{lineno}: expected {cols} values, got {len(values)}")
            data.append([float(v) for v in values])
    if len(data) != rows:
        raise ValueError(f"{path}: expected {rows} rows, got {len(data)}")
    return np.asarray(data, dtype=np.float64)


def save_matrix(path, matrix) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_prior(path, space: ProblemSpace) -> JointPrior:
    """Read a prior in the matrix format (|X| rows, one column)."""
    m = load_matrix(path)
    if m.shape != (space.universe_size, 1):
        raise ValueError(f"{path}: prior shape {m.shape} does not match universe "
                         f"({space.universe_size} x 1)")
    p = m[:, 0]
    if np.any(p < 0):
        raise ValueError(f"{path}: prior has negative mass")
    total = p.sum()
    if abs(total - 1.0) > FILE_SUM_TOL:
        raise ValueError(f"{path}: prior mass {total} not within {FILE_SUM_TOL} of 1")
    return JointPrior(p / total)
