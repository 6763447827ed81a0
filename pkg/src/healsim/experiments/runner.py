"""Sweep orchestration, per-setting analysis and CSV emission.

Every setting (profile, fault scale, threshold) runs in an isolated context
with a seed derived from the base seed and the setting key, so results are
identical no matter how many workers execute the grid or in which order.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..calibration import extract_features, stream_populations
from ..faultmodel import (
    FP_STREAMS,
    STREAMS,
    SCENARIO_STREAMS,
    Scenario,
    UNIT_FN_STREAMS,
    classify_scenario,
    relative_costs,
    scenario_frequencies,
)
from ..simkernel import SimTrace, build_fault_plan, run
from .config import RunSpec, SweepSpec
from .data import resolve_dataset

RESULTS_HEADER = ["profile", "scale", "threshold", "seed", "c_fp", "c_fn", "c_total", "app_error"]
COSTS_HEADER = [
    "setting_key",
    "profile",
    "scale",
    "threshold",
    "c_fp",
    "c_fn_unit",
    "c_fn_rest",
    "c_total",
    "pairs",
]
FREQ_HEADER = ["profile", "scale", "threshold", "scenario", "state", "count", "rel_freq"]
TIMESERIES_HEADER = [
    "epoch",
    "actual_sum",
    "faulty_estimate_mean",
    "corrective_estimate_mean",
    "avg_rel_error_faulty",
    "avg_rel_error_corrective",
]
TARGETS_HEADER = ["setting_key", "target"]


def features_header() -> list[str]:
    return ["setting_key"] + [f"f{i:02d}" for i in range(60)] + ["rel_threshold", "scale"]


def fmt(value) -> str:
    """Canonical cell formatting: shortest round-trip repr for floats."""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader if row]


def setting_key(profile: str, scale: float, threshold: int) -> str:
    return f"{profile}-s{scale:g}-t{threshold}"


def derive_seed(base_seed: int, key: str) -> int:
    digest = hashlib.blake2b(
        f"{base_seed}|{key}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") % (1 << 63)


@dataclass
class SettingAnalysis:
    """Everything extracted from one setting's trace."""

    key: str
    profile: str
    scale: float
    threshold: int
    seed: int
    c_fp: float
    c_fn_unit: float
    c_fn_rest: float
    pairs: int
    features: np.ndarray
    class_counts: dict[str, int]
    nonzero_counts: dict[str, int]
    app_error: float | None
    app_error_faulty: float | None
    failed: str | None = None
    populations: dict[str, list[float]] | None = None

    @property
    def c_fn(self) -> float:
        return self.c_fn_unit + self.c_fn_rest

    @property
    def c_total(self) -> float:
        return self.c_fp + self.c_fn


def analyze_trace(
    trace: SimTrace,
    key: str,
    profile: str,
    scale: float,
    threshold: int,
    seed: int,
    *,
    keep_populations: bool = False,
) -> SettingAnalysis:
    """One pass over the pair records: class counts, cost sums, features."""
    pops: dict[str, list[float]] = {stream: [] for stream in STREAMS}
    class_counts = {k: 0 for k in ("S1", "S2", "S3", "S4", "S5", "S6")}
    nonzero = {stream: 0 for stream in STREAMS}
    c_fp = c_unit = c_rest = 0.0
    pairs = 0
    for rec in trace.iter_records(threshold):
        pairs += 1
        scenario = classify_scenario(rec)
        merged = "S5" if scenario in (Scenario.S5_1, Scenario.S5_2) else scenario.value
        class_counts[merged] += 1
        costs = relative_costs(rec)
        for stream in SCENARIO_STREAMS[scenario]:
            value = costs[stream]
            pops[stream].append(value)
            if value > 0.0:
                nonzero[stream] += 1
            if stream in FP_STREAMS:
                c_fp += value
            elif stream in UNIT_FN_STREAMS:
                c_unit += value
            else:
                c_rest += value
    features = extract_features(
        pops, threshold, trace.config.max_threshold(), scale
    )
    return SettingAnalysis(
        key=key,
        profile=profile,
        scale=scale,
        threshold=threshold,
        seed=seed,
        c_fp=c_fp,
        c_fn_unit=c_unit,
        c_fn_rest=c_rest,
        pairs=pairs,
        features=features,
        class_counts=class_counts,
        nonzero_counts=nonzero,
        app_error=trace.app_error_corrective,
        app_error_faulty=trace.app_error_faulty,
        populations=pops if keep_populations else None,
    )


def profile_setting(
    spec: RunSpec, *, keep_trace: bool = False
) -> tuple[SettingAnalysis, SimTrace | None]:
    """Cost profiling only: no application, no agents."""
    key = setting_key(spec.profile, spec.fault_scale, spec.sim.threshold)
    plan = build_fault_plan(spec.fault_spec(), spec.sim.n_nodes, spec.sim.seed)
    trace = run(spec.sim, plan, dataset=None)
    analysis = analyze_trace(
        trace,
        key,
        spec.profile,
        spec.fault_scale,
        spec.sim.threshold,
        spec.sim.seed,
        keep_populations=True,
    )
    return analysis, (trace if keep_trace else None)


def run_setting(
    base: RunSpec,
    profile: str,
    scale: float,
    threshold: int,
    *,
    data_source: str = "synthetic",
    with_app: bool = True,
) -> SettingAnalysis:
    """Simulate one setting with its own derived seed and analyze it."""
    key = setting_key(profile, scale, threshold)
    seed = derive_seed(base.sim.seed, key)
    sim = replace(base.sim, threshold=threshold, seed=seed)
    spec = replace(base.fault_spec(), profile_id=profile, fault_scale=scale)
    plan = build_fault_plan(spec, sim.n_nodes, seed)
    dataset = None
    if with_app:
        dataset = resolve_dataset(data_source, sim.n_nodes, base.sim.seed)
    trace = run(sim, plan, dataset=dataset)
    return analyze_trace(trace, key, profile, scale, threshold, seed)


def _worker(args) -> SettingAnalysis:
    base, profile, scale, threshold, data_source = args
    try:
        return run_setting(
            base, profile, scale, threshold, data_source=data_source
        )
    except Exception as exc:  # marked failed, the sweep continues
        key = setting_key(profile, scale, threshold)
        return SettingAnalysis(
            key=key,
            profile=profile,
            scale=scale,
            threshold=threshold,
            seed=derive_seed(base.sim.seed, key),
            c_fp=0.0,
            c_fn_unit=0.0,
            c_fn_rest=0.0,
            pairs=0,
            features=np.zeros(62),
            class_counts={},
            nonzero_counts={},
            app_error=None,
            app_error_faulty=None,
            failed=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(
    spec: SweepSpec, out_dir: str | Path, parallel: int | None = None
) -> list[SettingAnalysis]:
    """Run the full grid and write results/features/costs/targets CSVs.

    Failed settings are recorded in failures.csv and skipped in the result
    files. Rows are emitted in grid order regardless of scheduling.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = parallel if parallel is not None else spec.parallelism
    tasks = [
        (spec.base, profile, scale, threshold, spec.data)
        for profile, scale, threshold in spec.settings()
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            analyses = list(pool.map(_worker, tasks, chunksize=1))
    else:
        analyses = [_worker(task) for task in tasks]

    ok = [a for a in analyses if a.failed is None]
    write_csv(
        out / "results.csv",
        RESULTS_HEADER,
        [
            (a.profile, a.scale, a.threshold, a.seed, a.c_fp, a.c_fn, a.c_total,
             a.app_error if a.app_error is not None else "")
            for a in ok
        ],
    )
    write_csv(
        out / "features.csv",
        features_header(),
        [[a.key] + [float(x) for x in a.features] for a in ok],
    )
    write_csv(
        out / "costs.csv",
        COSTS_HEADER,
        [
            (a.key, a.profile, a.scale, a.threshold, a.c_fp, a.c_fn_unit,
             a.c_fn_rest, a.c_total, a.pairs)
            for a in ok
        ],
    )
    write_csv(
        out / "targets.csv",
        TARGETS_HEADER,
        [(a.key, a.app_error) for a in ok if a.app_error is not None],
    )
    failures = [a for a in analyses if a.failed is not None]
    if failures:
        write_csv(
            out / "failures.csv",
            ["setting_key", "error"],
            [(a.key, a.failed) for a in failures],
        )
    return analyses


def frequency_rows(
    analysis: SettingAnalysis, normalization: str = "all_pairs"
) -> list[tuple]:
    """Class totals (state=ALL) plus nonzero-cost counts per stream.

    ``normalization`` picks the denominator of rel_freq for stream rows:
    all ordered pairs, or the pair count of the stream's own scenario class.
    """
    total = analysis.pairs
    rows: list[tuple] = []
    for klass in ("S1", "S2", "S3", "S4", "S5", "S6"):
        count = analysis.class_counts.get(klass, 0)
        rows.append(
            (
                analysis.profile,
                analysis.scale,
                analysis.threshold,
                klass,
                "ALL",
                count,
                count / total if total else 0.0,
            )
        )
    for stream in STREAMS:
        scenario, _, state = stream.partition("-")
        scenario_id = {
            "S5.1": "S5_1",
            "S5.2": "S5_2",
        }.get(scenario, scenario)
        count = analysis.nonzero_counts.get(stream, 0)
        if normalization == "per_scenario":
            merged = "S5" if scenario_id.startswith("S5") else scenario_id
            denom = analysis.class_counts.get(merged, 0)
        else:
            denom = total
        rows.append(
            (
                analysis.profile,
                analysis.scale,
                analysis.threshold,
                scenario_id,
                state,
                count,
                count / denom if denom else 0.0,
            )
        )
    return rows


def theorem_counts(n: int, profile_m: int, scale: float) -> dict[str, int]:
    total = round(scale * n)
    return scenario_frequencies(n, profile_m, total // profile_m)


def histogram_rows(
    populations: dict[str, list[float]], bins: int = 100
) -> list[tuple]:
    rows = []
    edges = np.linspace(0.0, 1.0, bins + 1)
    for stream in STREAMS:
        pop = populations.get(stream, [])
        counts, _ = np.histogram(pop, bins=edges)
        for i, count in enumerate(counts):
            if count:
                rows.append((stream, i, edges[i], edges[i + 1], int(count)))
    return rows
