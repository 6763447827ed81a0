"""Consumption datasets: CSV ingestion and a seeded synthetic generator.

A dataset is one row per node with 48 half-hourly nonnegative power values
(kW). The synthetic generator stands in for non-redistributable metering
data: per node, a base load plus two daily sinusoidal harmonics with random
phases and a little noise, clamped at zero.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .config import DataError

RECORDS_PER_DAY = 48


def synthesize_consumption(n: int, seed: int) -> np.ndarray:
    """Deterministic synthetic daily profiles, shape (n, 48), all >= 0."""
    if n < 1:
        raise ValueError("need at least one node")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
    base = rng.uniform(0.25, 0.75, size=n)
    amp1 = base * rng.uniform(0.05, 0.12, size=n)
    amp2 = base * rng.uniform(0.02, 0.06, size=n)
    phase1 = rng.uniform(0.0, 2.0 * np.pi, size=n)
    phase2 = rng.uniform(0.0, 2.0 * np.pi, size=n)
    slots = np.arange(RECORDS_PER_DAY)
    daily = 2.0 * np.pi * slots / RECORDS_PER_DAY
    values = (
        base[:, None]
        + amp1[:, None] * np.sin(daily[None, :] + phase1[:, None])
        + amp2[:, None] * np.sin(2.0 * daily[None, :] + phase2[:, None])
        + rng.normal(0.0, 0.01, size=(n, RECORDS_PER_DAY))
    )
    return np.clip(values, 0.0, None)


def write_consumption_csv(path: str | Path, values: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"v{i:02d}" for i in range(RECORDS_PER_DAY)])
        for row in values:
            writer.writerow([repr(float(x)) for x in row])


def load_consumption_csv(path: str | Path) -> np.ndarray:
    """Parse a consumption CSV; every data row must hold exactly 48 values."""
    rows: list[list[float]] = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and any(not _is_number(cell) for cell in row):
                continue  # header row
            if len(row) != RECORDS_PER_DAY:
                raise DataError(
                    f"row {lineno}: expected {RECORDS_PER_DAY} values, got {len(row)}"
                )
            try:
                parsed = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataError(f"row {lineno}: {exc}") from exc
            if any(v < 0 for v in parsed):
                raise DataError(f"row {lineno}: negative consumption value")
            rows.append(parsed)
    if not rows:
        raise DataError(f"no data rows in {path}")
    return np.asarray(rows, dtype=np.float64)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def resolve_dataset(source: str, n: int, seed: int) -> np.ndarray:
    """Either the literal "synthetic" or a path to a consumption CSV."""
    if source == "synthetic":
        return synthesize_consumption(n, seed)
    values = load_consumption_csv(source)
    if values.shape[0] < n:
        raise DataError(
            f"dataset has {values.shape[0]} nodes, the run needs {n}"
        )
    return values
