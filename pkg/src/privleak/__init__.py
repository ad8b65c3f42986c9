"""Leakage auditing and mechanism design for entropy-constrained adversaries.

Three solvers over discrete channels: the maximal per-record leakage of a
fixed mechanism, the smallest worst-case leakage under a distortion cap
(primal), and the smallest distortion under a leakage cap (dual), plus
closed-form baselines and brute-force oracles to check them against.
"""

from .core import (DistortionMetric, JointPrior, Mechanism, ProblemSpace, Query,
                   RecordView, compose_view, decode_index, encode_index,
                   expected_distortion, extract_view, load_matrix, load_prior,
                   output_channel, save_matrix)
from .dual import DualConfig, dual_solve
from .infotheory import (binary_entropy, entropy, joint_entropy_via_chain,
                         mutual_information, nats_to_bits)
from .leakage import InfeasibleError, LeakageConfig, LeakageResult, max_leakage
from .mechanisms import (MechanismSpec, UnsupportedMechanismError, build_bsc,
                         build_exponential_binary, build_laplace_thresholded,
                         bsc_capacity_closed_form, exact_release, load_mechanism)
from .oracle import (brute_force_leakage, bsc_distortion_inverse,
                     enumerate_extreme_conditionals)
from .primal import PrimalConfig, TradeoffPoint, primal_tradeoff
from .projections import (EntropyProjectionConfig, ProjectionError,
                          project_entropy, project_simplex)

__all__ = [
    "DistortionMetric", "JointPrior", "Mechanism", "ProblemSpace", "Query",
    "RecordView", "compose_view", "decode_index", "encode_index",
    "expected_distortion", "extract_view", "load_matrix", "load_prior",
    "output_channel", "save_matrix",
    "DualConfig", "dual_solve",
    "binary_entropy", "entropy", "joint_entropy_via_chain",
    "mutual_information", "nats_to_bits",
    "InfeasibleError", "LeakageConfig", "LeakageResult", "max_leakage",
    "MechanismSpec", "UnsupportedMechanismError", "build_bsc",
    "build_exponential_binary", "build_laplace_thresholded",
    "bsc_capacity_closed_form", "exact_release", "load_mechanism",
    "brute_force_leakage", "bsc_distortion_inverse",
    "enumerate_extreme_conditionals",
    "PrimalConfig", "TradeoffPoint", "primal_tradeoff",
    "EntropyProjectionConfig", "ProjectionError", "project_entropy",
    "project_simplex",
]
