"""Fault scenarios and inconsistency costs for monitor/target node pairs.

Every ordered pair of nodes (one monitoring the health of the other) runs
over a discrete epoch clock 1..runtime. Either node may crash once, and the
monitor may raise at most one detection against the target. Depending on
which crashes happen and when the detection fires, the pair spends parts of
the runtime in a false-positive state (healthy target treated as faulty) or
a false-negative state (faulty target tolerated, or the monitor itself dead
and unable to correct). This module classifies pairs into scenarios, turns
the state windows into relative costs in [0, 1], aggregates them into a
weighted total, and provides the closed-form pair counts per scenario for
batch fault plans.

Conventions, applied uniformly:

* Half-open windows: an event at epoch e takes effect from epoch e+1, so a
  window opened by an event at a and closed by an event at b contains the
  epochs a+1..b and has length b-a.
* Detections are recorded only while the monitor is alive, hence
  detection < monitor_fault whenever both are present.
* An undetected target fault costs the full false-negative window (the
  missing detection is treated as arriving at the latest possible epoch).
* A window whose maximum length is zero contributes cost 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping


class Scenario(str, Enum):
    """Joint health/ordering class of one monitor/target pair."""

    S1 = "S1"      # both nodes stay healthy
    S2 = "S2"      # only the target fails
    S3 = "S3"      # only the monitor fails
    S4 = "S4"      # monitor fails first, then the target
    S5_1 = "S5_1"  # target fails first, detection no later than the target fault
    S5_2 = "S5_2"  # target fails first, detection after the fault (or never)
    S6 = "S6"      # both fail at the same epoch


class PairState(str, Enum):
    """Outcome of the pair at a single epoch."""

    TN = "TN"
    TP = "TP"
    FN = "FN"
    FP = "FP"
    NONE = "NONE"  # target healthy but the monitor is gone; nothing to observe


#: The twelve cost streams, in canonical order. Each scenario owns at most
#: one false-positive stream and up to two false-negative streams.
STREAMS: tuple[str, ...] = (
    "S1-FP",
    "S2-FP",
    "S2-FN",
    "S3-FP",
    "S4-FP",
    "S4-FN",
    "S5.1-FP",
    "S5.1-FN",
    "S5.2-FN-lag",
    "S5.2-FN-post",
    "S6-FP",
    "S6-FN",
)

STREAM_SCENARIO: Mapping[str, Scenario] = {
    "S1-FP": Scenario.S1,
    "S2-FP": Scenario.S2,
    "S2-FN": Scenario.S2,
    "S3-FP": Scenario.S3,
    "S4-FP": Scenario.S4,
    "S4-FN": Scenario.S4,
    "S5.1-FP": Scenario.S5_1,
    "S5.1-FN": Scenario.S5_1,
    "S5.2-FN-lag": Scenario.S5_2,
    "S5.2-FN-post": Scenario.S5_2,
    "S6-FP": Scenario.S6,
    "S6-FN": Scenario.S6,
}

SCENARIO_STREAMS: Mapping[Scenario, tuple[str, ...]] = {
    Scenario.S1: ("S1-FP",),
    Scenario.S2: ("S2-FP", "S2-FN"),
    Scenario.S3: ("S3-FP",),
    Scenario.S4: ("S4-FP", "S4-FN"),
    Scenario.S5_1: ("S5.1-FP", "S5.1-FN"),
    Scenario.S5_2: ("S5.2-FN-lag", "S5.2-FN-post"),
    Scenario.S6: ("S6-FP", "S6-FN"),
}

FP_STREAMS = frozenset(s for s in STREAMS if s.endswith("-FP"))

#: False-negative streams whose closed form is identically 1 whenever the
#: window is non-empty: the monitor (or both nodes) died, so the target's
#: fault can never be corrected for the rest of the runtime.
UNIT_FN_STREAMS = frozenset({"S4-FN", "S5.1-FN", "S5.2-FN-post", "S6-FN"})


@dataclass(frozen=True)
class PairRecord:
    """Fault/detection timeline of one ordered monitor/target pair.

    ``detection`` is the first epoch at which the monitor's staleness
    criterion fired while the monitor was alive; ``None`` if it never did.
    """

    runtime: int
    threshold: int
    monitor_fault: int | None = None
    target_fault: int | None = None
    detection: int | None = None

    def __post_init__(self) -> None:
        if self.runtime < 1:
            raise ValueError("runtime must be at least 1")
        if not 1 <= self.threshold <= self.runtime:
            raise ValueError("threshold must lie in [1, runtime]")
        for name in ("monitor_fault", "target_fault", "detection"):
            value = getattr(self, name)
            if value is not None and not 1 <= value <= self.runtime:
                raise ValueError(f"{name} must lie in [1, runtime]")
        if self.detection is not None:
            if self.detection < self.threshold:
                raise ValueError("detection cannot precede the threshold")
            if self.monitor_fault is not None and self.detection >= self.monitor_fault:
                raise ValueError("detection must precede the monitor fault")


@dataclass(frozen=True)
class CostWeights:
    """Per-scenario weights for false-positive / false-negative streams.

    Any scenario missing from a mapping gets weight 1. Both streams of
    scenario S5_2 share that scenario's false-negative weight.
    """

    false_positive: Mapping[Scenario, float] = field(default_factory=dict)
    false_negative: Mapping[Scenario, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for mapping in (self.false_positive, self.false_negative):
            for scenario, weight in mapping.items():
                if weight < 0:
                    raise ValueError(f"negative weight for {scenario}")

    def fp(self, scenario: Scenario) -> float:
        return float(self.false_positive.get(scenario, 1.0))

    def fn(self, scenario: Scenario) -> float:
        return float(self.false_negative.get(scenario, 1.0))


DEFAULT_WEIGHTS = CostWeights()


@dataclass(frozen=True)
class CostSummary:
    """Total inconsistency cost split by state, c_total = c_fn + c_fp."""

    c_total: float
    c_fn: float
    c_fp: float


@dataclass(frozen=True)
class FaultPlan:
    """Batched node-crash schedule: m batches of k nodes each.

    ``batches[i]`` holds the node ids that fail at ``batch_epochs[i]``.
    ``recoveries`` optionally maps a node id to the epoch at which it
    rejoins (alive again from the epoch after).
    """

    n: int
    batch_epochs: tuple[int, ...]
    batches: tuple[tuple[int, ...], ...]
    recoveries: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.batch_epochs) != len(self.batches):
            raise ValueError("batch_epochs and batches must align")
        if any(e2 <= e1 for e1, e2 in zip(self.batch_epochs, self.batch_epochs[1:])):
            raise ValueError("batch_epochs must be strictly increasing")
        sizes = {len(batch) for batch in self.batches}
        if len(sizes) > 1:
            raise ValueError("all batches must have the same size")
        seen: set[int] = set()
        for batch in self.batches:
            for node in batch:
                if not 0 <= node < self.n:
                    raise ValueError(f"node id {node} out of range")
                if node in seen:
                    raise ValueError(f"node {node} assigned to more than one batch")
                seen.add(node)
        if len(seen) > self.n:
            raise ValueError("more faulty nodes than nodes")
        for node, epoch in self.recoveries.items():
            if node not in seen:
                raise ValueError(f"recovery listed for non-faulty node {node}")
            if epoch < self.fault_epoch_of(node):
                raise ValueError(f"node {node} recovers before it fails")

    @property
    def m(self) -> int:
        return len(self.batches)

    @property
    def k(self) -> int:
        return len(self.batches[0]) if self.batches else 0

    def fault_epoch_of(self, node: int) -> int | None:
        for epoch, batch in zip(self.batch_epochs, self.batches):
            if node in batch:
                return epoch
        return None

    def fault_epochs(self) -> "np.ndarray":
        """Per-node fault epoch as an int32 array, 0 meaning never."""
        import numpy as np

        out = np.zeros(self.n, dtype=np.int32)
        for epoch, batch in zip(self.batch_epochs, self.batches):
            out[list(batch)] = epoch
        return out

    def recovery_epochs(self) -> "np.ndarray":
        import numpy as np

        out = np.zeros(self.n, dtype=np.int32)
        for node, epoch in self.recoveries.items():
            out[node] = epoch
        return out


@dataclass(frozen=True)
class RecoveryModel:
    """Timing parameters deciding whether tolerating a fault is free."""

    correction_duration: int
    recovery_epoch: int
    propagation_time: int

    def __post_init__(self) -> None:
        if min(self.correction_duration, self.recovery_epoch, self.propagation_time) < 0:
            raise ValueError("recovery model parameters must be nonnegative")


def classify_scenario(rec: PairRecord) -> Scenario:
    """Assign the unique scenario of a pair record.

    The split of the target-fails-first case follows the detection: if it
    fired no later than the target fault it is S5_1 (the detection was an
    early false positive); a late or missing detection is S5_2, where the
    missing case is the limiting "never corrected" form of detecting late.
    """
    a, b, d = rec.monitor_fault, rec.target_fault, rec.detection
    if a is None and b is None:
        return Scenario.S1
    if a is None:
        return Scenario.S2
    if b is None:
        return Scenario.S3
    if a < b:
        return Scenario.S4
    if b < a:
        if d is not None and d <= b:
            return Scenario.S5_1
        return Scenario.S5_2
    return Scenario.S6


def pair_state_at(rec: PairRecord, epoch: int) -> PairState:
    """Outcome of the pair at one epoch, under the half-open convention."""
    if not 1 <= epoch <= rec.runtime:
        raise ValueError("epoch out of range")
    a, b, d = rec.monitor_fault, rec.target_fault, rec.detection
    target_faulty = b is not None and epoch > b
    monitor_alive = a is None or epoch <= a
    detection_active = d is not None and d < epoch
    if target_faulty:
        if d is None or epoch <= d or not monitor_alive:
            return PairState.FN
        return PairState.TP
    if not monitor_alive:
        return PairState.NONE
    if detection_active:
        return PairState.FP
    return PairState.TN


def _ratio(num: int, den: int) -> float:
    # Empty maximum window: the stream cannot accrue cost.
    if den <= 0:
        return 0.0
    return num / den


def relative_costs(rec: PairRecord) -> dict[str, float]:
    """Relative cost of each stream for one record.

    Streams outside the record's scenario are 0. All values are exact
    ratios of epoch counts and lie in [0, 1].
    """
    T, t = rec.runtime, rec.threshold
    a, b, d = rec.monitor_fault, rec.target_fault, rec.detection
    costs = dict.fromkeys(STREAMS, 0.0)
    scenario = classify_scenario(rec)
    if scenario is Scenario.S1:
        if d is not None:
            costs["S1-FP"] = _ratio(T - d, T - t)
    elif scenario is Scenario.S2:
        if d is not None and d < b:
            costs["S2-FP"] = _ratio(b - d, b - t)
        else:
            effective = T if d is None else d
            costs["S2-FN"] = _ratio(effective - b, T - b)
    elif scenario is Scenario.S3:
        if d is not None:
            costs["S3-FP"] = _ratio(a - d, a - t)
    elif scenario is Scenario.S4:
        if d is not None:
            costs["S4-FP"] = _ratio(a - d, a - t)
        costs["S4-FN"] = _ratio(T - b, T - b)
    elif scenario is Scenario.S5_1:
        if d is not None and d < b:
            costs["S5.1-FP"] = _ratio(b - d, b - t)
        costs["S5.1-FN"] = _ratio(T - a, T - a)
    elif scenario is Scenario.S5_2:
        effective = a if d is None else d
        costs["S5.2-FN-lag"] = _ratio(effective - b, a - b)
        costs["S5.2-FN-post"] = _ratio(T - a, T - a)
    else:  # S6
        if d is not None:
            costs["S6-FP"] = _ratio(b - d, b - t)
        costs["S6-FN"] = _ratio(T - a, T - a)
    return costs


def total_cost(
    records: Iterable[PairRecord], weights: CostWeights = DEFAULT_WEIGHTS
) -> CostSummary:
    """Weighted sum of all stream costs over a set of records."""
    c_fp = 0.0
    c_fn = 0.0
    for rec in records:
        scenario = classify_scenario(rec)
        costs = relative_costs(rec)
        for stream in SCENARIO_STREAMS[scenario]:
            value = costs[stream]
            if stream in FP_STREAMS:
                c_fp += weights.fp(scenario) * value
            else:
                c_fn += weights.fn(scenario) * value
    return CostSummary(c_total=c_fn + c_fp, c_fn=c_fn, c_fp=c_fp)


def cost_components(
    records: Iterable[PairRecord], weights: CostWeights = DEFAULT_WEIGHTS
) -> tuple[float, float, float]:
    """Split the weighted cost into (fp, unit-fn, remaining-fn) parts.

    The unit part collects the false-negative streams that are identically
    1 (dead-monitor windows); calibration rescales exactly that part.
    """
    c_fp = 0.0
    c_fn_unit = 0.0
    c_fn_rest = 0.0
    for rec in records:
        scenario = classify_scenario(rec)
        costs = relative_costs(rec)
        for stream in SCENARIO_STREAMS[scenario]:
            value = costs[stream]
            if stream in FP_STREAMS:
                c_fp += weights.fp(scenario) * value
            elif stream in UNIT_FN_STREAMS:
                c_fn_unit += weights.fn(scenario) * value
            else:
                c_fn_rest += weights.fn(scenario) * value
    return c_fp, c_fn_unit, c_fn_rest


def scenario_frequencies(n: int, m: int, k: int) -> dict[str, int]:
    """Closed-form ordered-pair counts per scenario class.

    Nodes fail in ``m`` batches of ``k`` each out of ``n`` nodes; every node
    monitors every other node. The two target-fails-first sub-scenarios are
    merged into the "S5" class. Counts always sum to n^2 - n.
    """
    for name, value in (("n", n), ("m", m), ("k", k)):
        if not isinstance(value, int):
            raise TypeError(f"{name} must be an integer")
    if n < 2:
        raise ValueError("need at least two nodes")
    if m < 1 or k < 0:
        raise ValueError("m must be >= 1 and k >= 0")
    if m * k > n:
        raise ValueError(f"m*k = {m * k} exceeds n = {n}")
    healthy = n - m * k
    cross = m * k * healthy
    split = m * k * k * (m - 1) // 2
    return {
        "S1": healthy * (healthy - 1),
        "S2": cross,
        "S3": cross,
        "S4": split,
        "S5": split,
        "S6": m * k * (k - 1),
    }


def tolerance_is_costless(
    target_fault: int, threshold: int, model: RecoveryModel
) -> bool:
    """Whether waiting out the fault beats correcting it.

    True when the target would recover and re-announce itself before a
    detection plus the corrective work could complete.
    """
    if target_fault < 0 or threshold < 0:
        raise ValueError("inputs must be nonnegative")
    return target_fault + threshold + model.correction_duration > (
        model.recovery_epoch + model.propagation_time
    )
