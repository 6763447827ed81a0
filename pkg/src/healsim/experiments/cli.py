"""Command-line interface.

Subcommands: profile (cost profiling of one setting), aggregate (actual vs
estimated sums over time), sweep (a Cartesian grid of settings), calibrate
and predict (cost-to-error models), gen-data (synthetic consumption CSV).

Exit codes: 0 success, 2 configuration error, 3 data error. The HEALSIM_OUT
environment variable overrides --out for the directory-producing commands;
--seed overrides the seed found in any configuration file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import calibration
from ..faultmodel import classify_scenario, relative_costs, FP_STREAMS, SCENARIO_STREAMS
from ..simkernel import build_fault_plan, run
from . import runner
from .config import (
    ConfigError,
    DataError,
    RunSpec,
    load_json,
    parse_run_config,
    parse_sweep_spec,
)
from .data import load_consumption_csv, resolve_dataset, synthesize_consumption, write_consumption_csv


def _resolve_out(path: str) -> Path:
    out = Path(os.environ.get("HEALSIM_OUT", path))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_seed(spec: RunSpec, seed: int | None) -> RunSpec:
    if seed is None:
        return spec
    return RunSpec(
        sim=replace(spec.sim, seed=seed),
        profile=spec.profile,
        fault_scale=spec.fault_scale,
    )


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _metadata(spec: RunSpec, extra: dict | None = None) -> dict:
    meta = {
        "n_nodes": spec.sim.n_nodes,
        "epochs": spec.sim.epochs,
        "bootstrap_epochs": spec.sim.bootstrap_epochs,
        "seed": spec.sim.seed,
        "threshold": spec.sim.threshold,
        "epoch_duration_label": spec.sim.epoch_duration_label,
        "profile": spec.profile,
        "fault_scale": spec.fault_scale,
        "batch_epochs": list(spec.fault_spec().batch_epochs()),
        "max_threshold_equivalent": spec.sim.max_threshold(),
        "gossip": {
            "view_capacity": spec.sim.gossip.view_capacity,
            "healer_h": spec.sim.gossip.healer_h,
            "swap_s": spec.sim.gossip.swap_s,
            "peer_selection": spec.sim.gossip.peer_selection,
            "buffer_fraction": spec.sim.gossip.buffer_fraction,
        },
        "quantile_population": "scenario-class pairs, zero-cost pairs included",
    }
    if extra:
        meta.update(extra)
    return meta


# ---------------------------------------------------------------- profile --


def cmd_profile(args) -> int:
    spec = _apply_seed(parse_run_config(load_json(args.config, "config")), args.seed)
    out = _resolve_out(args.out)
    analysis, trace = runner.profile_setting(spec, keep_trace=args.emit_pairs)

    runner.write_csv(
        out / "frequencies.csv",
        runner.FREQ_HEADER,
        runner.frequency_rows(analysis, args.freq_normalization),
    )
    per_pair = analysis.c_total / analysis.pairs if analysis.pairs else 0.0
    runner.write_csv(
        out / "cost_summary.csv",
        ["profile", "scale", "threshold", "seed", "c_fp", "c_fn", "c_total", "c_total_per_pair"],
        [
            (
                analysis.profile,
                analysis.scale,
                analysis.threshold,
                analysis.seed,
                analysis.c_fp,
                analysis.c_fn,
                analysis.c_total,
                per_pair,
            )
        ],
    )
    if args.emit_pairs:
        rows = []
        for monitor, target, rec in _pair_iter(trace):
            scenario = classify_scenario(rec)
            costs = relative_costs(rec)
            rho_fp = sum(costs[s] for s in SCENARIO_STREAMS[scenario] if s in FP_STREAMS)
            rho_fn = sum(costs[s] for s in SCENARIO_STREAMS[scenario] if s not in FP_STREAMS)
            rows.append(
                (
                    monitor,
                    target,
                    scenario.value,
                    rec.monitor_fault if rec.monitor_fault is not None else "",
                    rec.target_fault if rec.target_fault is not None else "",
                    rec.detection if rec.detection is not None else "",
                    rho_fp,
                    rho_fn,
                )
            )
        runner.write_csv(
            out / "pair_costs.csv",
            ["monitor", "target", "scenario", "monitor_fault", "target_fault", "detection", "rho_fp", "rho_fn"],
            rows,
        )
    else:
        runner.write_csv(
            out / "pair_cost_hist.csv",
            ["stream", "bin", "bin_lo", "bin_hi", "count"],
            runner.histogram_rows(analysis.populations),
        )
    _write_json(
        out / "metadata.json",
        _metadata(spec, {"frequency_normalization": args.freq_normalization}),
    )
    print(f"profiled {analysis.pairs} pairs: c_total={analysis.c_total:.6g} "
          f"(per pair {per_pair:.6g})")
    return 0


def _pair_iter(trace):
    n = trace.config.n_nodes
    it = trace.iter_records()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            yield i, j, next(it)


# -------------------------------------------------------------- aggregate --


def cmd_aggregate(args) -> int:
    spec = _apply_seed(parse_run_config(load_json(args.config, "config")), args.seed)
    out = _resolve_out(args.out)
    sim = spec.sim
    dataset = resolve_dataset(args.data, sim.n_nodes, sim.seed)
    plan = build_fault_plan(spec.fault_spec(), sim.n_nodes, sim.seed)
    trace = run(sim, plan, dataset=dataset, detect_all_pairs=False)
    runner.write_csv(
        out / "timeseries.csv",
        runner.TIMESERIES_HEADER,
        [
            (
                p.epoch,
                p.actual_sum,
                p.faulty_estimate_mean,
                p.corrective_estimate_mean,
                p.avg_rel_error_faulty,
                p.avg_rel_error_corrective,
            )
            for p in trace.timeseries
        ],
    )
    _write_json(
        out / "metadata.json",
        _metadata(
            spec,
            {
                "data": args.data,
                "avg_rel_error_faulty": trace.app_error_faulty,
                "avg_rel_error_corrective": trace.app_error_corrective,
            },
        ),
    )
    print(
        f"aggregate run done: mean rel. error faulty={trace.app_error_faulty:.6g} "
        f"corrective={trace.app_error_corrective:.6g}"
    )
    return 0


# ------------------------------------------------------------------ sweep --


def cmd_sweep(args) -> int:
    spec = parse_sweep_spec(load_json(args.spec, "spec"))
    if args.seed is not None:
        spec = replace(spec, base=_apply_seed(spec.base, args.seed))
    out = _resolve_out(args.out)
    analyses = runner.run_sweep(spec, out, parallel=args.parallel)
    failed = [a for a in analyses if a.failed is not None]
    _write_json(
        out / "metadata.json",
        _metadata(
            spec.base,
            {
                "fault_scales": list(spec.fault_scales),
                "profiles": list(spec.profiles),
                "thresholds": list(spec.thresholds),
                "data": spec.data,
                "settings": len(analyses),
                "failed": len(failed),
            },
        ),
    )
    print(f"sweep finished: {len(analyses) - len(failed)} ok, {len(failed)} failed")
    return 0


# -------------------------------------------------------------- calibrate --


def _read_features(path: str) -> tuple[list[str], np.ndarray]:
    header, rows = runner.read_csv(path)
    if not header or header[0] != "setting_key":
        raise DataError(f"{path}: expected a setting_key column first")
    keys = [r[0] for r in rows]
    X = np.array([[float(c) for c in r[1:]] for r in rows], dtype=float)
    return keys, X


def _read_targets(path: str) -> dict[str, float]:
    header, rows = runner.read_csv(path)
    if header[:2] != ["setting_key", "target"]:
        raise DataError(f"{path}: expected header setting_key,target")
    return {r[0]: float(r[1]) for r in rows}


def _read_costs(path: str) -> dict[str, dict]:
    header, rows = runner.read_csv(path)
    if header != runner.COSTS_HEADER:
        raise DataError(f"{path}: unexpected header")
    out = {}
    for r in rows:
        rec = dict(zip(header, r))
        out[rec["setting_key"]] = {
            "profile": rec["profile"],
            "scale": float(rec["scale"]),
            "threshold": int(rec["threshold"]),
            "c_fp": float(rec["c_fp"]),
            "c_fn_unit": float(rec["c_fn_unit"]),
            "c_fn_rest": float(rec["c_fn_rest"]),
            "c_total": float(rec["c_total"]),
            "pairs": int(rec["pairs"]),
        }
    return out


def _align(keys: list[str], targets: dict[str, float]) -> np.ndarray:
    missing = [k for k in keys if k not in targets]
    if missing:
        raise DataError("targets missing for keys: " + ", ".join(missing))
    return np.array([targets[k] for k in keys], dtype=float)


def _report_json(report: calibration.PredictionReport) -> dict:
    return {
        "method": report.method,
        "rmse": report.rmse,
        "pearson_r": report.pearson_r,
        "accuracy_loss": report.accuracy_loss,
        "rows": [
            {"setting_key": k, "predicted": float(p), "target": float(t)}
            for k, p, t in zip(report.keys, report.predicted, report.target)
        ],
        **({"extra": report.extra} if report.extra else {}),
    }


def _profile_of_key(key: str) -> str:
    return key.split("-s", 1)[0]


def cmd_calibrate(args) -> int:
    targets = _read_targets(args.targets)
    method = args.method
    model: dict
    if method in ("none", "fn-lambda"):
        if not args.costs:
            raise ConfigError("costs", f"method {method} needs --costs")
        costs = _read_costs(args.costs)
        keys = sorted(costs)
        y = _align(keys, targets)
        parts = [
            calibration.CostParts(
                key=k,
                fault_scale=costs[k]["scale"],
                c_fp=costs[k]["c_fp"],
                c_fn_unit=costs[k]["c_fn_unit"],
                c_fn_rest=costs[k]["c_fn_rest"],
                n_pairs=costs[k]["pairs"],
            )
            for k in keys
        ]
        if method == "none":
            predictions = np.array([p.predict(1.0) for p in parts])
            model = {"method": "none"}
        else:
            grid = args.lambda_grid or list(calibration.DEFAULT_LAMBDA_GRID)
            by_scale = calibration.fit_lambda(parts, y, grid)
            predictions = np.array(
                [p.predict(by_scale[p.fault_scale]) for p in parts]
            )
            model = {
                "method": "fn-lambda",
                "lambda_by_scale": {f"{s:g}": lam for s, lam in by_scale.items()},
                "lambda_grid": list(grid),
            }
        report = calibration.PredictionReport(
            method=method,
            keys=keys,
            predicted=predictions,
            target=y,
            rmse=calibration.rmse(predictions, y),
            pearson_r=calibration.pearson(predictions, y) if len(keys) >= 2 else None,
        )
    elif method == "ols":
        keys, X = _read_features(args.features)
        y = _align(keys, targets)
        coef, intercept = calibration.ols_fit(X, y)
        predictions = calibration.ols_predict(X, coef, intercept)
        model = {
            "method": "ols",
            "coefficients": [float(c) for c in coef],
            "intercept": intercept,
        }
        report = calibration.PredictionReport(
            method=method,
            keys=keys,
            predicted=predictions,
            target=y,
            rmse=calibration.rmse(predictions, y),
            pearson_r=calibration.pearson(predictions, y) if len(keys) >= 2 else None,
        )
    elif method == "elastic-net":
        keys, X = _read_features(args.features)
        y = _align(keys, targets)
        profiles = [_profile_of_key(k) for k in keys]
        if args.train_profiles:
            report = calibration.generalized_regression(
                X,
                y,
                profiles,
                args.train_profiles,
                alpha=args.alpha,
                l1_ratio=args.l1_ratio,
                keys=keys,
            )
            train_idx = [i for i, p in enumerate(profiles) if p in set(args.train_profiles)]
            fit = calibration.elastic_net_fit(X[train_idx], y[train_idx], args.alpha, args.l1_ratio)
        else:
            fit = calibration.elastic_net_fit(X, y, args.alpha, args.l1_ratio)
            predictions = calibration.ols_predict(X, fit.coef, fit.intercept)
            report = calibration.PredictionReport(
                method=method,
                keys=keys,
                predicted=predictions,
                target=y,
                rmse=calibration.rmse(predictions, y),
                pearson_r=calibration.pearson(predictions, y) if len(keys) >= 2 else None,
            )
        model = {
            "method": "elastic-net",
            "coefficients": [float(c) for c in fit.coef],
            "intercept": fit.intercept,
            "standardization": {
                "mean": [float(v) for v in fit.feature_mean],
                "scale": [float(v) for v in fit.feature_scale],
            },
            "alpha": args.alpha,
            "l1_ratio": args.l1_ratio,
            "train_profiles": args.train_profiles or sorted(set(profiles)),
            "converged": fit.converged,
        }
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError("method", f"unknown method {method}")

    _write_json(Path(args.out), model)
    report_path = Path(args.out).with_suffix(".report.json")
    _write_json(report_path, _report_json(report))
    pearson_str = "n/a" if report.pearson_r is None else f"{report.pearson_r:.4f}"
    print(f"{method}: rmse={report.rmse:.6g} pearson={pearson_str}"
          + (f" accuracy_loss={report.accuracy_loss:.6g}" if report.accuracy_loss is not None else ""))
    return 0


def cmd_predict(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        model = json.load(fh)
    method = model.get("method")
    if method in ("ols", "elastic-net"):
        if not args.features:
            raise ConfigError("features", f"method {method} needs --features")
        keys, X = _read_features(args.features)
        coef = np.asarray(model["coefficients"], dtype=float)
        predictions = calibration.ols_predict(X, coef, float(model["intercept"]))
    elif method in ("none", "fn-lambda"):
        if not args.costs:
            raise ConfigError("costs", f"method {method} needs --costs")
        costs = _read_costs(args.costs)
        keys = sorted(costs)
        lam_by_scale = model.get("lambda_by_scale", {})
        predictions = []
        for k in keys:
            rec = costs[k]
            lam = 1.0
            if method == "fn-lambda":
                lookup = f"{rec['scale']:g}"
                if lookup not in lam_by_scale:
                    raise DataError(f"model has no factor for fault scale {lookup}")
                lam = float(lam_by_scale[lookup])
            value = (rec["c_fp"] + rec["c_fn_rest"] + lam * rec["c_fn_unit"]) / rec["pairs"]
            predictions.append(value)
        predictions = np.array(predictions)
    else:
        raise ConfigError("model", f"unknown model method {method!r}")
    runner.write_csv(
        Path(args.out),
        ["setting_key", "prediction"],
        [(k, float(p)) for k, p in zip(keys, predictions)],
    )
    print(f"wrote {len(keys)} predictions")
    return 0


# --------------------------------------------------------------- gen-data --


def cmd_gen_data(args) -> int:
    if args.nodes < 1:
        raise ConfigError("nodes", "must be at least 1")
    values = synthesize_consumption(args.nodes, args.seed)
    write_consumption_csv(Path(args.out), values)
    print(f"wrote {args.nodes} x {values.shape[1]} consumption records")
    return 0


# ------------------------------------------------------------------ parser --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="healsim",
        description="Epoch-driven fault-correction vs. fault-tolerance simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="profile inconsistency costs for one setting")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--emit-pairs", action="store_true")
    p.add_argument(
        "--freq-normalization",
        choices=["all_pairs", "per_scenario"],
        default="all_pairs",
    )
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("aggregate", help="run the aggregation application")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="consumption CSV path or 'synthetic'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sweep", help="run a grid of experimental settings")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit a cost-to-error model")
    p.add_argument("--features", default=None)
    p.add_argument("--targets", required=True)
    p.add_argument("--costs", default=None)
    p.add_argument(
        "--method",
        required=True,
        choices=["none", "fn-lambda", "ols", "elastic-net"],
    )
    p.add_argument("--train-profiles", nargs="*", default=None)
    p.add_argument("--alpha", type=float, default=0.07)
    p.add_argument("--l1-ratio", type=float, default=0.05)
    p.add_argument("--lambda-grid", nargs="*", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="apply a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--costs", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gen-data", help="generate synthetic consumption data")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
