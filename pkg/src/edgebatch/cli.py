"""Experiment runner: scenario files, parameter sweeps, CSV/JSON emission.

A scenario lives in a YAML (or JSON) file; unset fields take the built-in
defaults, and the fully resolved configuration is hashed into every output
row so any row can be reproduced exactly from its seed and hash.  Sweeps
vary one axis over a list of values with a configurable number of seeds
per value, and emit one data row per (value, seed) plus mean/std aggregate
rows per value.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import mean, stdev

import yaml

from .feasibility import Request, derive_coefficients
from .radio import UserLink, dbm_to_watts
from .sim import (ConfigError, Scenario, SimMetrics, build_context,
                  complexity_reduction, resolved_mapping, run)

SWEEP_AXES = ("arrival_rate", "deadline_scale", "tolerance_cap",
              "quant_profile", "model", "scheduler")

_NUMERIC_AXES = {"arrival_rate", "deadline_scale", "tolerance_cap"}

COLUMNS = (
    "kind", "axis", "value", "seed", "scheduler", "model", "quant_profile",
    "throughput", "completed", "scheduled", "missed", "dropped", "still_queued",
    "generated", "nodes_visited", "nodes_pruned", "cmp_nodes_with",
    "cmp_nodes_without", "reduction_pct", "oracle_checks", "oracle_mismatches",
    "error", "config_hash",
)

_AGGREGATE_FIELDS = (
    "throughput", "completed", "scheduled", "missed", "dropped", "still_queued",
    "generated", "nodes_visited", "nodes_pruned", "cmp_nodes_with",
    "cmp_nodes_without", "reduction_pct",
)


@dataclass(frozen=True)
class SweepSpec:
    """One swept axis: which scenario knob, its values, seeds per value."""

    axis: str
    values: tuple
    repetitions: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis: must be one of {SWEEP_AXES}")
        if not self.values:
            raise ConfigError("sweep.values: must be nonempty")
        if self.repetitions < 1:
            raise ConfigError("sweep.repetitions: must be >= 1")


_SCENARIO_SECTIONS = {
    "radio": {
        "uplink_bandwidth_hz": float, "downlink_bandwidth_hz": float,
        "uplink_power_dbm": float, "downlink_power_dbm": float,
        "noise_density_dbm_hz": float, "uplink_slot_s": float,
        "downlink_slot_s": float, "bits_per_token": int,
        "mean_channel_gain": float, "channel_mode": str,
    },
    "node": {
        "gpu_count": int, "flops_per_gpu": float,
        "memory_per_gpu_bytes": float,
    },
    "workload": {
        "arrival_rate": float, "duration": float,
        "output_classes": "int_list", "prompt_choices": "int_list",
        "deadline_range_s": "float_pair", "deadline_scale": float,
        "tolerance_cap": float,
    },
    "flags": {
        "pruning": bool, "inclusive_prune_bound": bool, "exact_tau": bool,
        "accuracy_check": bool, "admission_prefilter": bool,
        "compute_slot_cap": bool, "compare_pruning": bool,
        "compare_stride": int, "verify_oracle": bool, "oracle_cap": int,
        "debug_checks": bool,
    },
}

_TOP_LEVEL = {
    "model": str, "quant_profile": str, "scheduler": str, "seed": int,
    "epoch_s": float,
}


def _coerce(value, kind, where):
    try:
        if kind is float:
            return float(value)
        if kind is int:
            out = int(float(value))
            if out != float(value):
                raise ValueError("not an integer")
            return out
        if kind is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                if value.lower() in ("true", "yes", "1"):
                    return True
                if value.lower() in ("false", "no", "0"):
                    return False
            raise ValueError("not a boolean")
        if kind is str:
            return str(value)
        if kind == "int_list":
            return tuple(_coerce(v, int, where) for v in value)
        if kind == "float_pair":
            pair = tuple(_coerce(v, float, where) for v in value)
            if len(pair) != 2:
                raise ValueError("expected exactly two values")
            return pair
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise AssertionError(f"unhandled kind {kind}")


def scenario_from_mapping(mapping: dict) -> Scenario:
    """Build and validate a Scenario from a parsed config mapping."""
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError("scenario: top level must be a mapping")
    kwargs: dict = {}
    seen = set()
    for name, kind in _TOP_LEVEL.items():
        if name in mapping:
            kwargs[name] = _coerce(mapping[name], kind, name)
            seen.add(name)
    for section, schema in _SCENARIO_SECTIONS.items():
        sub = mapping.get(section, {}) or {}
        if not isinstance(sub, dict):
            raise ConfigError(f"{section}: must be a mapping")
        seen.add(section)
        for name, kind in schema.items():
            if name in sub:
                kwargs[name] = _coerce(sub[name], kind, f"{section}.{name}")
        unknown = set(sub) - set(schema)
        if unknown:
            raise ConfigError(f"{section}.{sorted(unknown)[0]}: unknown field")
    if "catalog" in mapping:
        if not isinstance(mapping["catalog"], dict):
            raise ConfigError("catalog: must be a mapping")
        kwargs["catalog_config"] = mapping["catalog"]
        seen.add("catalog")
    unknown = set(mapping) - seen - set(_TOP_LEVEL)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    sc = Scenario(**kwargs)
    sc.validate()
    return sc


def scenario_to_mapping(sc: Scenario) -> dict:
    """Inverse of scenario_from_mapping over the documented file schema."""
    flat = resolved_mapping(sc)
    out: dict = {name: flat[name] for name in _TOP_LEVEL}
    for section, schema in _SCENARIO_SECTIONS.items():
        out[section] = {name: flat[name] for name in schema}
    if sc.catalog_config:
        out["catalog"] = sc.catalog_config
    return out


def parse_scenario(path) -> Scenario:
    """Load, default-fill and validate a scenario file."""
    text = Path(path).read_text()
    try:
        mapping = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return scenario_from_mapping(mapping)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_hash(sc: Scenario) -> str:
    """Stable short hash of the fully resolved scenario (seed excluded)."""
    payload = resolved_mapping(sc)
    payload.pop("seed", None)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fmt6(x):
    """Round a float to 6 significant digits (stable emission precision)."""
    if x is None:
        return None
    if isinstance(x, bool) or isinstance(x, int):
        return x
    return float(f"{float(x):.6g}")


def _metrics_row(axis, value, sc: Scenario, metrics: SimMetrics | None,
                 error: str = "") -> dict:
    row = {name: None for name in COLUMNS}
    row.update(kind="data", axis=axis, value=value, seed=sc.seed,
               scheduler=sc.scheduler, model=sc.model,
               quant_profile=sc.quant_profile, error=error,
               config_hash=config_hash(sc))
    if metrics is not None:
        red = complexity_reduction(metrics.cmp_nodes_with_pruning,
                                   metrics.cmp_nodes_without_pruning)
        row.update(
            throughput=_fmt6(metrics.throughput),
            completed=metrics.completed_total,
            scheduled=metrics.scheduled_total,
            missed=metrics.missed_total,
            dropped=metrics.dropped_total,
            still_queued=metrics.still_queued,
            generated=metrics.generated,
            nodes_visited=metrics.nodes_visited_total,
            nodes_pruned=metrics.nodes_pruned_total,
            cmp_nodes_with=metrics.cmp_nodes_with_pruning,
            cmp_nodes_without=metrics.cmp_nodes_without_pruning,
            reduction_pct=_fmt6(red),
            oracle_checks=metrics.oracle_checks,
            oracle_mismatches=metrics.oracle_mismatches,
        )
    return row


def apply_axis(sc: Scenario, axis: str, value) -> Scenario:
    """Scenario with one sweep axis overridden."""
    if axis in _NUMERIC_AXES:
        value = float(value)
    else:
        value = str(value)
    return replace(sc, **{axis: value})


def _run_point(args):
    axis, value, sc = args
    try:
        metrics = run(sc)
        return _metrics_row(axis, value, sc, metrics)
    except Exception as exc:  # per-row failure: recorded, sweep continues
        return _metrics_row(axis, value, sc, None, error=str(exc))


def run_sweep(sc: Scenario, sweep: SweepSpec, parallelism: int = 1) -> list[dict]:
    """Run every (value, seed) point and append per-value aggregate rows."""
    points = []
    for value in sweep.values:
        varied = apply_axis(sc, sweep.axis, value)
        for rep in range(sweep.repetitions):
            points.append((sweep.axis, value, replace(varied, seed=sc.seed + rep)))
    if parallelism > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_run_point, points))
    else:
        rows = [_run_point(p) for p in points]
    rows.sort(key=lambda r: (str(r["axis"]), str(r["value"]), r["seed"]))
    out: list[dict] = []
    for value in sweep.values:
        group = [r for r in rows if r["value"] == value]
        out.extend(group)
        good = [r for r in group if not r["error"]]
        for kind, fn in (("mean", mean), ("std", lambda v: stdev(v) if len(v) > 1 else 0.0)):
            agg = {name: None for name in COLUMNS}
            agg.update(kind=kind, axis=sweep.axis, value=value, seed=None,
                       scheduler=sc.scheduler if sweep.axis != "scheduler" else value,
                       model=sc.model if sweep.axis != "model" else value,
                       quant_profile=(sc.quant_profile
                                      if sweep.axis != "quant_profile" else value),
                       error="", config_hash=group[0]["config_hash"] if group else "")
            for name in _AGGREGATE_FIELDS:
                values = [r[name] for r in good if r[name] is not None]
                agg[name] = _fmt6(fn(values)) if values else None
            out.append(agg)
    return out


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def emit(table: list[dict], fmt: str, path) -> None:
    """Write a result table as CSV or JSON with stable bytes."""
    if not table:
        raise ValueError("refusing to emit an empty table")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    if fmt == "csv":
        lines = [",".join(COLUMNS)]
        for row in table:
            lines.append(",".join(_cell(row[name]) for name in COLUMNS))
        path.write_text("\n".join(lines) + "\n")
    else:
        payload = {"columns": list(COLUMNS),
                   "rows": [{name: row[name] for name in COLUMNS} for row in table]}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def emit_trace(metrics: SimMetrics, path) -> None:
    """Write the per-epoch trace of a single run as CSV."""
    cols = ("epoch", "t_s", "queue_len", "candidates", "batch", "nodes_visited",
            "nodes_pruned", "nodes_visited_noprune", "memory_bytes", "latency_s",
            "completed", "missed_expired", "missed_late")
    lines = [",".join(cols)]
    for row in metrics.trace:
        lines.append(",".join(_cell(_fmt6(getattr(row, c))) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def coefficient_report(sc: Scenario) -> dict:
    """Reduced-form coefficients for a reference request, for auditing.

    Uses the scenario's largest prompt choice as the padded length and a
    link at the mean channel gain, so the derived constants match what the
    scheduler works with on a typical epoch.
    """
    ctx, _ = build_context(sc)
    link = UserLink(sc.mean_channel_gain, dbm_to_watts(sc.uplink_power_dbm))
    padded = max(sc.prompt_choices)
    ref = Request(id=0, prompt_tokens=padded,
                  output_tokens=max(sc.output_classes), deadline_s=1.0,
                  tolerance=1.0, link=link)
    co = derive_coefficients(ctx, padded, [ref])
    return {
        "padded_len": co.padded_len,
        "k_up_per_token": co.k_up[0],
        "k_down_per_token": co.k_down[0],
        "k2": co.k2, "k3": co.k3, "k4": co.k4, "k5": co.k5,
        "mem_budget_z1": co.mem_budget(1),
    }


def _parse_sweep_arg(text: str, seeds: int) -> SweepSpec:
    if "=" not in text:
        raise ConfigError("sweep: expected axis=v1,v2,...")
    axis, _, raw = text.partition("=")
    axis = axis.strip()
    values: list = []
    for piece in raw.split(","):
        piece = piece.strip()
        if not piece:
            continue
        values.append(float(piece) if axis in _NUMERIC_AXES else piece)
    return SweepSpec(axis=axis, values=tuple(values), repetitions=seeds)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="edgebatch",
        description="Run edge-inference batch scheduling experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one scenario or a sweep")
    runp.add_argument("scenario", help="scenario YAML/JSON file")
    runp.add_argument("--sweep", help="axis=v1,v2,... (one swept scenario knob)")
    runp.add_argument("--seeds", type=int, default=1,
                      help="seeds per sweep value (default 1)")
    runp.add_argument("--scheduler", help="override the scheduler")
    runp.add_argument("--no-prune", action="store_true",
                      help="disable search pruning")
    runp.add_argument("--compare-pruning", action="store_true",
                      help="also count nodes of the unpruned search")
    runp.add_argument("--verify-oracle", action="store_true",
                      help="cross-check the search on down-sampled epochs")
    runp.add_argument("--format", choices=("csv", "json"), default="csv")
    runp.add_argument("--out", default="results.csv", help="output path")
    runp.add_argument("--emit-trace", help="per-epoch trace CSV (single runs only)")
    runp.add_argument("--dump-coefficients", action="store_true",
                      help="print the derived feasibility coefficients")
    runp.add_argument("--parallel", type=int, default=1,
                      help="concurrent sweep points")
    args = parser.parse_args(argv)

    try:
        sc = parse_scenario(args.scenario)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.scheduler:
        sc = replace(sc, scheduler=args.scheduler)
    if args.no_prune:
        sc = replace(sc, pruning=False)
    if args.compare_pruning:
        sc = replace(sc, compare_pruning=True)
    if args.verify_oracle:
        sc = replace(sc, verify_oracle=True)
    try:
        sc.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"resolved config hash: {config_hash(sc)}")
    print(f"resolved scenario: {json.dumps(scenario_to_mapping(sc), sort_keys=True)}")
    if args.dump_coefficients:
        print(f"feasibility coefficients: "
              f"{json.dumps(coefficient_report(sc), sort_keys=True)}")

    if args.sweep:
        try:
            sweep = _parse_sweep_arg(args.sweep, args.seeds)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.emit_trace:
            print("error: --emit-trace needs a single run, not a sweep",
                  file=sys.stderr)
            return 2
        table = run_sweep(sc, sweep, parallelism=args.parallel)
    else:
        try:
            metrics = run(sc)
        except Exception as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        table = [_metrics_row("", "", sc, metrics)]
        if args.emit_trace:
            emit_trace(metrics, args.emit_trace)

    emit(table, args.format, args.out)
    failures = [r for r in table if r["kind"] == "data" and r["error"]]
    for row in failures:
        print(f"failed: {row['axis']}={row['value']} seed={row['seed']}: "
              f"{row['error']}", file=sys.stderr)
    print(f"wrote {len(table)} rows to {args.out}")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
