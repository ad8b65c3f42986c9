"""Batch experiment harness: audit mechanisms, sweep tradeoff curves, emit CSV.

Every command writes a headered CSV (stdout or --out) preceded by
``#``-prefixed provenance lines (timestamp and the effective configuration).
Data rows are deterministic given --seed, so reruns are byte-identical
outside the ``#`` lines.  Config precedence: flags > config file (flat
key=value text) > built-in defaults.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import datetime

import os
import sys

import numpy as np

from .core import (DistortionMetric, JointPrior, ProblemSpace, Query,
                   expected_distortion)
from .dual import DualConfig, dual_solve
from .infotheory import LN2, nats_to_bits
from .leakage import LeakageConfig, max_leakage
from .mechanisms import MechanismSpec, UnsupportedMechanismError
from .primal import PrimalConfig, primal_tradeoff

TABLE3_REFERENCE = {
    "laplace": {0.0: 0.079, 0.5: 0.062, 1.0: 0.041, 1.5: 0.022, 2.0: 0.009,
                2.77: 0.000},
    "exp": {0.0: 0.032, 0.5: 0.024, 1.0: 0.015, 1.5: 0.008, 2.0: 0.003,
            2.77: 0.000},
}

_SEED_STRIDE = 7919  # per-row seed offset, keeps rows independent of order


def _parse_query(text: str, n: int) -> tuple[Query, int]:
    """Query spec -> (query, output alphabet size) for n binary records."""
    if text == "parity":
        return Query.parity(), 2
    if text.startswith("modsum:"):
        m = int(text.split(":", 1)[1])
        return Query.modular_sum(m), m
    if text == "pairwise":
        return Query.pairwise_product(), n * (n - 1) // 2 + 1
    raise ValueError(f"unknown query {text!r} (expected parity, modsum:m, pairwise)")


def _parse_grid(text: str) -> list[float]:
    """Either a single value 'x' or a linear grid 'lo:hi:count'."""
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) == 3:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        return [float(v) for v in np.linspace(lo, hi, count)]
    raise ValueError(f"bad grid spec {text!r} (expected x or lo:hi:count)")


def _parse_log_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    return [float(v) for v in np.geomspace(lo, hi, count)]


def _load_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


_BOOL_KEYS = {"bits", "strict", "extended", "zigzag"}
_INT_KEYS = {"seed", "restarts", "jobs", "grid"}


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    if key in _BOOL_KEYS:
        return value.lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(value)
    return value


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    merged = dict(defaults)
    if getattr(args, "config", None):
        for key, val in _load_config_file(args.config).items():
            if key in merged:
                merged[key] = _coerce(key, val)
    for key in merged:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    if merged.get("seed") is None:
        merged["seed"] = int(os.environ.get("PRIVLEAK_SEED", "0"))
    return merged


# ---------------------------------------------------------------------------
# Row workers (top-level so the process pool can pickle them)

def _space_for(task: dict) -> tuple[ProblemSpace, Query]:
    query, m = _parse_query(task["query"], task["n"])
    return ProblemSpace.binary(task["n"], output_size=m), query


def _leakage_config(task: dict) -> LeakageConfig:
    return LeakageConfig(entropy_bound=task["b"], restarts=task["restarts"],
                         rng_seed=task["seed"])


def _audit_row(task: dict) -> dict:
    space, query = _space_for(task)
    spec = MechanismSpec.parse(task["mech"], extended=task.get("extended", False))
    mech = spec.build(space, query)
    res = max_leakage(space, mech, _leakage_config(task))
    assert all(b >= a for a, b in zip(res.trace, res.trace[1:])), \
        "incumbent trace must be nondecreasing"
    metric = DistortionMetric.absolute_difference()
    p0 = JointPrior.uniform(space)
    return {
        "mechanism": spec.label(), "n": task["n"], "b": task["b"],
        "leakage_nats": res.leakage, "leakage_bits": nats_to_bits(res.leakage),
        "worst_record": res.worst_record, "iterations": len(res.trace),
        "restarts": res.restarts_used, "feasible": res.feasible,
        "distortion": expected_distortion(space, p0, mech, query, metric),
    }


def _primal_row(task: dict) -> dict:
    space, query = _space_for(task)
    metric = DistortionMetric.absolute_difference()
    p0 = JointPrior.uniform(space)
    cfg = PrimalConfig(distortion_bound=task["D"], entropy_bound=task["b"],
                       rng_seed=task["seed"])
    pt = primal_tradeoff(space, p0, query, metric, cfg)
    row = {
        "D_requested": task["D"], "D_achieved": pt.distortion,
        "leakage_nats": pt.leakage, "iterations": pt.iterations,
        "feasible": pt.distortion <= task["D"] + cfg.constraint_margin,
    }
    for name, flip in _baseline_flips(pt.distortion):
        if flip is None:
            row[f"{name}_baseline_nats"] = ""
            continue
        baseline = MechanismSpec("bsc", param=flip).build(space, query)
        audit = max_leakage(space, baseline, _leakage_config(task))
        row[f"{name}_baseline_nats"] = audit.leakage
    return row


def _baseline_flips(distortion: float) -> list[tuple[str, float | None]]:
    """Flip probabilities of the closed-form families at matched distortion.

    For binary outputs all three are symmetric channels with flip = E, so
    the baselines share one audit value; they are emitted separately because
    the matched-epsilon interpretation differs per family.
    """
    e = min(max(distortion, 0.0), 0.5)
    return [("bsc", e), ("laplace", e), ("exp", e)]


def _dual_row(task: dict) -> dict:
    space, query = _space_for(task)
    metric = DistortionMetric.absolute_difference()
    p0 = JointPrior.uniform(space)
    cfg = DualConfig(leakage_bound=task["L"], entropy_bound=task["b"],
                     rng_seed=task["seed"], zigzag_damping=task.get("zigzag", False))
    pt = dual_solve(space, p0, query, metric, cfg)
    return {
        "L_requested": task["L"], "L_achieved": pt.leakage,
        "distortion": pt.distortion, "iterations": pt.iterations,
        "feasible": pt.leakage <= task["L"] + cfg.constraint_tolerance,
    }


_WORKERS = {"audit": _audit_row, "primal": _primal_row, "dual": _dual_row}


def _execute_task(task: dict) -> dict:
    try:
        return _WORKERS[task["op"]](task)
    except (ValueError, UnsupportedMechanismError, OSError) as exc:
        return {"error": str(exc)}


def _run_tasks(tasks: list[dict], jobs: int) -> list[dict]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_execute_task(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_execute_task, tasks))


# ---------------------------------------------------------------------------
# CSV plumbing

def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _emit(rows: list[dict], columns: list[str], cfg: dict, command: str,
          out_path: str | None) -> None:
    lines = [f"# privleak {command}",
             f"# generated {datetime.datetime.now(datetime.timezone.utc).isoformat()}"]
    for key in sorted(cfg):
        lines.append(f"# {key}={_format_value(cfg[key])}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_format_value(row.get(c, "")) for c in columns))
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _with_bits(columns: list[str], rows: list[dict], bits: bool) -> list[str]:
    """Values stay in nats; --bits appends converted display columns."""
    if not bits:
        return columns + ["units"]
    extra = []
    for col in columns:
        if col.endswith("_nats"):
            bcol = col.replace("_nats", "_bits_display")
            extra.append(bcol)
            for row in rows:
                if isinstance(row.get(col), float):
                    row[bcol] = nats_to_bits(row[col])
    for row in rows:
        row["units"] = "bits"
    return columns + extra + ["units"]


def _finish(rows: list[dict], columns: list[str], cfg: dict, command: str) -> int:
    errors = [r for r in rows if "error" in r]
    for r in errors:
        print(f"error: {r['error']}", file=sys.stderr)
    if errors:
        return 1
    for row in rows:
        row.setdefault("units", "nats")
    columns = _with_bits(columns, rows, cfg.get("bits", False))
    _emit(rows, columns, cfg, command, cfg.get("out"))
    if cfg.get("strict") and any(r.get("feasible") is False for r in rows):
        return 3
    return 0


# ---------------------------------------------------------------------------
# Subcommands

_COMMON_DEFAULTS = {"seed": None, "restarts": 5, "jobs": os.cpu_count() or 1,
                    "out": None, "strict": False, "bits": False}


def _cmd_audit(args) -> int:
    cfg = _effective(args, {**_COMMON_DEFAULTS, "n": 4, "query": "parity",
                            "mech": "bsc:0.3", "b": "0", "extended": False})
    b_values = _parse_grid(str(cfg["b"]))
    tasks = [{"op": "audit", "mech": cfg["mech"], "n": int(cfg["n"]),
              "query": cfg["query"], "b": b, "restarts": int(cfg["restarts"]),
              "extended": cfg["extended"],
              "seed": cfg["seed"] + _SEED_STRIDE * i}
             for i, b in enumerate(b_values)]
    rows = _run_tasks(tasks, int(cfg["jobs"]))
    cols = ["mechanism", "n", "b", "leakage_nats", "leakage_bits",
            "worst_record", "iterations", "restarts", "feasible", "distortion"]
    return _finish(rows, cols, cfg, "audit")


def _cmd_sweep_b(args) -> int:
    cfg = _effective(args, {**_COMMON_DEFAULTS, "n": "4", "query": "parity",
                            "mech": "bsc:0.1,bsc:0.2,bsc:0.3,bsc:0.4",
                            "grid": 20, "extended": False})
    ns = [int(v) for v in str(cfg["n"]).split(",")]
    mechs = str(cfg["mech"]).split(",")
    tasks = []
    for n in ns:
        b_grid = np.linspace(0.0, n * LN2, int(cfg["grid"]))
        for mech in mechs:
            for b in b_grid:
                tasks.append({"op": "audit", "mech": mech, "n": n,
                              "query": cfg["query"], "b": float(b),
                              "restarts": int(cfg["restarts"]),
                              "extended": cfg["extended"],
                              "seed": cfg["seed"] + _SEED_STRIDE * len(tasks)})
    rows = _run_tasks(tasks, int(cfg["jobs"]))
    out_rows = []
    for task, row in zip(tasks, rows):
        if "error" in row:
            out_rows.append(row)
            continue
        out_rows.append({"n": task["n"],
                         "p_or_eps": task["mech"].split(":", 1)[1],
                         "b": task["b"], "leakage_nats": row["leakage_nats"],
                         "restarts_used": row["restarts"],
                         "feasible": row["feasible"]})
    cols = ["n", "p_or_eps", "b", "leakage_nats", "restarts_used", "feasible"]
    return _finish(out_rows, cols, cfg, "sweep-b")


def _cmd_primal(args) -> int:
    cfg = _effective(args, {**_COMMON_DEFAULTS, "n": 3, "query": "parity",
                            "b": 1.5, "D": "0.05:0.45:9"})
    d_values = _parse_grid(str(cfg["D"]))
    tasks = [{"op": "primal", "n": int(cfg["n"]), "query": cfg["query"],
              "b": float(cfg["b"]), "D": d, "restarts": int(cfg["restarts"]),
              "seed": cfg["seed"] + _SEED_STRIDE * i}
             for i, d in enumerate(d_values)]
    rows = _run_tasks(tasks, int(cfg["jobs"]))
    cols = ["D_requested", "D_achieved", "leakage_nats", "iterations",
            "bsc_baseline_nats", "laplace_baseline_nats", "exp_baseline_nats",
            "feasible"]
    return _finish(rows, cols, cfg, "primal")


def _cmd_dual(args) -> int:
    cfg = _effective(args, {**_COMMON_DEFAULTS, "n": 2, "query": "parity",
                            "b": 0.0, "L": f"0.05:{LN2 - 0.05:.6f}:9",
                            "zigzag": False})
    l_values = _parse_grid(str(cfg["L"]))
    tasks = [{"op": "dual", "n": int(cfg["n"]), "query": cfg["query"],
              "b": float(cfg["b"]), "L": lv, "restarts": int(cfg["restarts"]),
              "zigzag": cfg["zigzag"],
              "seed": cfg["seed"] + _SEED_STRIDE * i}
             for i, lv in enumerate(l_values)]
    rows = _run_tasks(tasks, int(cfg["jobs"]))
    cols = ["L_requested", "L_achieved", "distortion", "iterations", "feasible"]
    return _finish(rows, cols, cfg, "dual")


def _cmd_table3(args) -> int:
    cfg = _effective(args, {**_COMMON_DEFAULTS, "n": 4, "query": "parity",
                            "eps": 1.0})
    tasks, refs = [], []
    for mech_kind in ("laplace", "exp"):
        for b, ref in TABLE3_REFERENCE[mech_kind].items():
            tasks.append({"op": "audit", "mech": f"{mech_kind}:{cfg['eps']}",
                          "n": int(cfg["n"]), "query": cfg["query"], "b": b,
                          "restarts": int(cfg["restarts"]),
                          "seed": cfg["seed"] + _SEED_STRIDE * len(tasks)})
            refs.append((mech_kind, b, ref))
    rows = _run_tasks(tasks, int(cfg["jobs"]))
    out_rows = []
    for (mech_kind, b, ref), row in zip(refs, rows):
        if "error" in row:
            out_rows.append(row)
            continue
        out_rows.append({"mechanism": mech_kind, "b": b,
                         "leakage_nats": row["leakage_nats"],
                         "reference_nats": ref,
                         "delta_nats": row["leakage_nats"] - ref,
                         "feasible": row["feasible"]})
    cols = ["mechanism", "b", "leakage_nats", "reference_nats", "delta_nats",
            "feasible"]
    return _finish(out_rows, cols, cfg, "table3")


def _cmd_compare(args) -> int:
    cfg = _effective(args, {**_COMMON_DEFAULTS, "n": 4, "query": "parity",
                            "b": 0.0, "eps": "0.1:10:13", "p": "0.3"})
    tasks, meta = [], []
    for eps in _parse_log_grid(str(cfg["eps"])):
        for kind in ("laplace", "exp"):
            tasks.append({"op": "audit", "mech": f"{kind}:{eps:.10g}",
                          "n": int(cfg["n"]), "query": cfg["query"],
                          "b": float(cfg["b"]), "restarts": int(cfg["restarts"]),
                          "seed": cfg["seed"] + _SEED_STRIDE * len(tasks)})
            meta.append((kind, eps))
    for p in str(cfg["p"]).split(","):
        tasks.append({"op": "audit", "mech": f"bsc:{p}", "n": int(cfg["n"]),
                      "query": cfg["query"], "b": float(cfg["b"]),
                      "restarts": int(cfg["restarts"]),
                      "seed": cfg["seed"] + _SEED_STRIDE * len(tasks)})
        meta.append(("bsc", float(p)))
    rows = _run_tasks(tasks, int(cfg["jobs"]))
    out_rows = []
    for (kind, param), row in zip(meta, rows):
        if "error" in row:
            out_rows.append(row)
            continue
        # DP mechanisms spend their stated budget; the flip channel's budget
        # is the leakage it actually achieves
        budget = param if kind != "bsc" else row["leakage_nats"]
        out_rows.append({"mechanism": kind, "param": param, "b": float(cfg["b"]),
                         "epsilon_budget": budget,
                         "leakage_nats": row["leakage_nats"],
                         "distortion": row["distortion"],
                         "feasible": row["feasible"]})
    cols = ["mechanism", "param", "b", "epsilon_budget", "leakage_nats",
            "distortion", "feasible"]
    return _finish(out_rows, cols, cfg, "compare")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privleak",
        description="Audit privacy mechanisms and sweep leakage-distortion "
                    "tradeoffs under entropy-constrained adversaries.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (fallback: PRIVLEAK_SEED, then 0)")
        p.add_argument("--restarts", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes for sweep rows")
        p.add_argument("--out", default=None, help="CSV output path (default stdout)")
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--strict", action="store_const", const=True, default=None,
                       help="nonzero exit if any row is infeasible")
        p.add_argument("--bits", action="store_const", const=True, default=None,
                       help="append bit-converted display columns")

    p = sub.add_parser("audit", help="maximal per-record leakage of one mechanism")
    p.add_argument("--mech", default=None, help="bsc:p | laplace:eps | exp:eps | file:path")
    p.add_argument("--n", type=int, default=None, help="number of binary records")
    p.add_argument("--query", default=None, help="parity | modsum:m | pairwise")
    p.add_argument("--b", default=None, help="entropy bound (nats), or lo:hi:count")
    p.add_argument("--extended", action="store_const", const=True, default=None,
                   help="allow the generalized exponential mechanism for m>2")
    common(p)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("sweep-b", help="leakage vs entropy bound curves")
    p.add_argument("--mech", default=None, help="comma-separated mechanism specs")
    p.add_argument("--n", default=None, help="comma-separated record counts")
    p.add_argument("--query", default=None)
    p.add_argument("--grid", type=int, default=None, help="number of b points")
    p.add_argument("--extended", action="store_const", const=True, default=None)
    common(p)
    p.set_defaults(func=_cmd_sweep_b)

    p = sub.add_parser("primal", help="leakage-distortion tradeoff sweep")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--query", default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--D", default=None, help="distortion bound, or lo:hi:count")
    common(p)
    p.set_defaults(func=_cmd_primal)

    p = sub.add_parser("dual", help="minimal distortion under leakage caps")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--query", default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--L", default=None, help="leakage bound, or lo:hi:count")
    p.add_argument("--zigzag", action="store_const", const=True, default=None,
                   help="damp penalty oscillation by averaging on sign flips")
    common(p)
    p.set_defaults(func=_cmd_dual)

    p = sub.add_parser("table3", help="reference-table reproduction for eps=1, n=4")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--query", default=None)
    p.add_argument("--eps", type=float, default=None)
    common(p)
    p.set_defaults(func=_cmd_table3)

    p = sub.add_parser("compare", help="leakage/distortion of DP baselines vs flip channels")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--query", default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--eps", default=None, help="epsilon log-grid lo:hi:count")
    p.add_argument("--p", default=None, help="comma-separated flip probabilities")
    common(p)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, UnsupportedMechanismError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
