"""Deterministic epoch-driven simulation kernel.

One `run` advances a global epoch clock over a network of nodes that
gossip partial views, crash according to a fault plan, aggregate each
other's records, and (optionally) heal themselves through remote agents
that roll failed suppliers' contributions back out of the aggregates.

The kernel keeps one integer per ordered pair (the epoch a monitor last saw
the target's descriptor in its own view), which makes all-pairs monitoring
feasible at thousands of nodes. Detection is a strict staleness test: the
first epoch at which `epoch - last_sighting > threshold` while the monitor
is alive. Everything is reproducible bit for bit from (config, plan):
gossip, application and agent randomness come from separate streams derived
from the config seed, so enabling corrections never perturbs the gossip
trace.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from . import healing
from .faultmodel import FaultPlan, PairRecord, Scenario, classify_scenario
from .gossip import GossipConfig, PeerSampling

REFERENCE_RUNTIME = 3200
REFERENCE_MAX_THRESHOLD = 800

PROFILE_BATCH_EPOCHS: dict[str, tuple[int, ...]] = {
    "P1": (1600,),
    "P2": (1332, 2264),
    "P3": (1060, 1620, 2180, 2740),
}

RECORDS_PER_DAY = 48


@dataclass(frozen=True)
class SimConfig:
    """Static parameters of one simulation run."""

    n_nodes: int
    epochs: int
    bootstrap_epochs: int = 0
    seed: int = 0
    threshold: int = 100
    monitoring_mode: str = "all_pairs"  # or "agent_per_node"
    epoch_duration_label: str = "250 ms"
    gossip: GossipConfig = field(default_factory=GossipConfig)
    # Extra thresholds profiled against the same trace, on top of `threshold`.
    threshold_grid: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be at least 2")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0 <= self.bootstrap_epochs < self.epochs:
            raise ValueError("bootstrap_epochs must lie in [0, epochs)")
        if not 1 <= self.threshold <= self.epochs:
            raise ValueError("threshold must lie in [1, epochs]")
        for t in self.threshold_grid:
            if not 1 <= t <= self.epochs:
                raise ValueError("threshold_grid entries must lie in [1, epochs]")
        if self.monitoring_mode not in ("all_pairs", "agent_per_node"):
            raise ValueError("monitoring_mode must be 'all_pairs' or 'agent_per_node'")

    def all_thresholds(self) -> tuple[int, ...]:
        return tuple(sorted({self.threshold, *self.threshold_grid}))

    def max_threshold(self) -> int:
        """The runtime-scaled equivalent of the reference maximum threshold."""
        return max(1, round(REFERENCE_MAX_THRESHOLD * self.epochs / REFERENCE_RUNTIME))


@dataclass(frozen=True)
class FaultProfileSpec:
    """Which batches of failures hit the system, and how large they are.

    Profiles P1/P2/P3 fail the chosen fraction of nodes in 1, 2 or 4 equal
    batches at fixed epochs, scaled proportionally when the runtime differs
    from the 3200-epoch reference.
    """

    profile_id: str
    fault_scale: float
    epochs: int = REFERENCE_RUNTIME

    def __post_init__(self) -> None:
        if self.profile_id not in PROFILE_BATCH_EPOCHS:
            raise ValueError(f"unknown profile {self.profile_id!r}")
        if not 0.0 <= self.fault_scale <= 1.0:
            raise ValueError("fault_scale must lie in [0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")

    @property
    def batch_count(self) -> int:
        return len(PROFILE_BATCH_EPOCHS[self.profile_id])

    def batch_epochs(self) -> tuple[int, ...]:
        scale = self.epochs / REFERENCE_RUNTIME
        return tuple(round(e * scale) for e in PROFILE_BATCH_EPOCHS[self.profile_id])


def build_fault_plan(spec: FaultProfileSpec, n: int, seed: int) -> FaultPlan:
    """Draw the faulty nodes for a profile: k per batch, disjoint, uniform."""
    m = spec.batch_count
    exact_total = spec.fault_scale * n
    total = round(exact_total)
    if abs(exact_total - total) > 1e-9:
        raise ValueError(
            f"fault scale {spec.fault_scale} does not yield a whole number "
            f"of nodes at n={n}"
        )
    if total > n:
        raise ValueError("fault scale exceeds the node count")
    k, remainder = divmod(total, m)
    if remainder:
        raise ValueError(
            f"{total} faulty nodes cannot be split into {m} equal batches"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, m, total]))
    chosen = rng.choice(n, size=total, replace=False)
    batches = tuple(
        tuple(sorted(int(x) for x in chosen[i * k : (i + 1) * k])) for i in range(m)
    )
    return FaultPlan(n=n, batch_epochs=spec.batch_epochs(), batches=batches)


def record_index(epoch: int, bootstrap: int, total_epochs: int) -> int:
    """Which of the 48 daily records is live at a measurement epoch."""
    span = total_epochs - bootstrap
    return min(RECORDS_PER_DAY - 1, (epoch - bootstrap - 1) * RECORDS_PER_DAY // span)


class _World:
    """One consumer-side universe: per-(consumer, supplier) memory plus sums.

    ``tomb`` marks suppliers a consumer rolled back; a tombstoned supplier
    re-enters only through the slow refresh rotation, not discovery, which
    mirrors that the consumer was explicitly told the supplier departed.
    """

    __slots__ = ("present", "tomb", "mem_val", "mem_ver", "touch", "sums", "counts")

    def __init__(self, n: int):
        self.present = np.zeros((n, n), dtype=bool)
        self.tomb = np.zeros((n, n), dtype=bool)
        self.mem_val = np.zeros((n, n), dtype=np.float64)
        self.mem_ver = np.full((n, n), -1, dtype=np.int16)
        self.touch = np.zeros((n, n), dtype=np.int32)
        self.sums = np.zeros(n, dtype=np.float64)
        self.counts = np.zeros(n, dtype=np.int64)

    def rollback(self, consumer: int, supplier: int, now: int) -> bool:
        if not self.present[consumer, supplier]:
            return False
        self.sums[consumer] -= self.mem_val[consumer, supplier]
        self.counts[consumer] -= 1
        self.present[consumer, supplier] = False
        self.tomb[consumer, supplier] = True
        self.touch[consumer, supplier] = now
        return True


class _AppState:
    """Vectorized aggregation application: a no-correction world and a
    corrective world fed by identical exchange decisions."""

    def __init__(self, n: int, data: np.ndarray):
        self.n = n
        self.data = data
        self.cur_ver = -1
        self.cur_val = np.zeros(n, dtype=np.float64)
        self.faulty = _World(n)
        self.corrective = _World(n)
        self.worlds = (self.faulty, self.corrective)

    def advance(self, ver: int, alive_idx: np.ndarray, now: int) -> None:
        if ver != self.cur_ver:
            self.cur_ver = ver
            self.cur_val = self.data[:, ver].astype(np.float64)
        val = self.cur_val[alive_idx]
        for w in self.worlds:
            old = w.mem_val[alive_idx, alive_idx]
            first = ~w.present[alive_idx, alive_idx]
            w.sums[alive_idx] += val - np.where(first, 0.0, old)
            w.counts[alive_idx] += first
            w.present[alive_idx, alive_idx] = True
            w.mem_val[alive_idx, alive_idx] = val
            w.mem_ver[alive_idx, alive_idx] = ver
            w.touch[alive_idx, alive_idx] = now

    def exchange_epoch(
        self,
        now: int,
        alive: np.ndarray,
        rows: np.ndarray,
        idmat: np.ndarray,
        rng: np.random.Generator,
    ) -> None:
        """Two exchange slots per consumer: discover one unseen supplier and
        refresh the longest-untouched remembered (or tombstoned) one."""
        if rows.size == 0:
            return
        n = self.n
        safe = np.where(idmat >= 0, idmat, 0)
        valid = (idmat >= 0) & alive[safe]
        row_range = np.arange(rows.size)
        scores = rng.random(idmat.shape)
        big = np.iinfo(np.int64).max
        for w in self.worlds:
            pres = w.present[rows[:, None], safe]
            tomb = w.tomb[rows[:, None], safe]
            # discovery slot
            cand = valid & ~pres & ~tomb
            masked = np.where(cand, scores, -1.0)
            pick = masked.argmax(axis=1)
            has = masked[row_range, pick] >= 0.0
            if has.any():
                cr = rows[has]
                cs = safe[row_range[has], pick[has]]
                v = self.cur_val[cs]
                w.sums[cr] += v
                w.counts[cr] += 1
                w.present[cr, cs] = True
                w.mem_val[cr, cs] = v
                w.mem_ver[cr, cs] = self.cur_ver
                w.touch[cr, cs] = now
            # refresh slot
            cand = valid & (pres | tomb)
            key = w.touch[rows[:, None], safe].astype(np.int64) * n + safe
            key = np.where(cand, key, big)
            pick = key.argmin(axis=1)
            has = key[row_range, pick] < big
            if has.any():
                cr = rows[has]
                cs = safe[row_range[has], pick[has]]
                was_tomb = w.tomb[cr, cs]
                if was_tomb.any():
                    tr, ts = cr[was_tomb], cs[was_tomb]
                    v = self.cur_val[ts]
                    w.sums[tr] += v
                    w.counts[tr] += 1
                    w.present[tr, ts] = True
                    w.tomb[tr, ts] = False
                    w.mem_val[tr, ts] = v
                    w.mem_ver[tr, ts] = self.cur_ver
                keep = ~was_tomb
                if keep.any():
                    ur, us = cr[keep], cs[keep]
                    newer = w.mem_ver[ur, us] < self.cur_ver
                    if newer.any():
                        ur, us = ur[newer], us[newer]
                        v = self.cur_val[us]
                        w.sums[ur] += v - w.mem_val[ur, us]
                        w.mem_val[ur, us] = v
                        w.mem_ver[ur, us] = self.cur_ver
                w.touch[cr, cs] = now


@dataclass
class TimePoint:
    epoch: int
    actual_sum: float
    faulty_estimate_mean: float
    corrective_estimate_mean: float
    avg_rel_error_faulty: float
    avg_rel_error_corrective: float


@dataclass
class SimTrace:
    """Everything a run produced, reproducible from (config, plan)."""

    config: SimConfig
    plan: FaultPlan
    fault_at: np.ndarray
    recover_at: np.ndarray
    detection: dict[int, np.ndarray]
    firing_counts: dict[int, np.ndarray] | None
    timeseries: list[TimePoint]
    events: list[tuple]
    agent_summaries: list[dict]
    app_error_corrective: float | None
    app_error_faulty: float | None

    def detection_count(self, threshold: int | None = None) -> int:
        det = self.detection[threshold if threshold is not None else self.config.threshold]
        return int(np.count_nonzero(det))

    def iter_records(self, threshold: int | None = None) -> Iterator[PairRecord]:
        if self.config.monitoring_mode == "agent_per_node":
            yield from self._agent_records()
            return
        t = threshold if threshold is not None else self.config.threshold
        det = self.detection[t]
        T = self.config.epochs
        n = self.config.n_nodes
        faults = [int(x) if x else None for x in self.fault_at]
        for i in range(n):
            fi = faults[i]
            row = det[i]
            for j in range(n):
                if i == j:
                    continue
                d = int(row[j])
                yield PairRecord(
                    runtime=T,
                    threshold=t,
                    monitor_fault=fi,
                    target_fault=faults[j],
                    detection=d if d else None,
                )

    def _agent_records(self) -> Iterator[PairRecord]:
        T = self.config.epochs
        t = self.config.threshold
        for summary in self.agent_summaries:
            parent_fault = summary["parent_fault"]
            monitor_fault = parent_fault if summary["lost"] else None
            yield PairRecord(
                runtime=T,
                threshold=t,
                monitor_fault=monitor_fault,
                target_fault=parent_fault,
                detection=summary["first_detection"],
            )

    def records(self, threshold: int | None = None) -> list[PairRecord]:
        return list(self.iter_records(threshold))

    def class_counts(self, threshold: int | None = None) -> dict[str, int]:
        """Scenario-class sizes observed in the trace, S5 sub-cases merged."""
        counts = {key: 0 for key in ("S1", "S2", "S3", "S4", "S5", "S6")}
        for rec in self.iter_records(threshold):
            scenario = classify_scenario(rec)
            key = "S5" if scenario in (Scenario.S5_1, Scenario.S5_2) else scenario.value
            counts[key] += 1
        return counts

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.fault_at.astype(np.int64).tobytes())
        h.update(self.recover_at.astype(np.int64).tobytes())
        for t in sorted(self.detection):
            h.update(str(t).encode())
            h.update(self.detection[t].astype(np.int64).tobytes())
        for point in self.timeseries:
            h.update(repr(
                (
                    point.epoch,
                    point.actual_sum,
                    point.faulty_estimate_mean,
                    point.corrective_estimate_mean,
                    point.avg_rel_error_faulty,
                    point.avg_rel_error_corrective,
                )
            ).encode())
        for event in self.events:
            h.update(repr(event).encode())
        return h.hexdigest()


def _derive_rngs(seed: int) -> tuple[random.Random, np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(seed)
    s_gossip, s_app, s_agents = ss.spawn(3)
    gossip_seed = int(s_gossip.generate_state(2, np.uint64)[0])
    return (
        random.Random(gossip_seed),
        np.random.default_rng(s_app),
        np.random.default_rng(s_agents),
    )


def _mean_relative_error(estimates: np.ndarray, actual: float) -> float:
    if estimates.size == 0:
        return 0.0
    if actual == 0.0:
        return float(np.mean(estimates != 0.0))
    return float(np.mean(np.abs(estimates - actual) / abs(actual)))


def run(
    config: SimConfig,
    plan: FaultPlan,
    *,
    dataset: np.ndarray | None = None,
    enable_correction: bool = True,
    detect_all_pairs: bool = True,
    track_firing_counts: bool = False,
    log_agent_sightings: bool = False,
) -> SimTrace:
    """Execute one simulation and collect its trace.

    ``dataset`` (rows of 48 record values, one row per node) switches the
    aggregation application on; ``enable_correction`` additionally deploys
    one self-healing agent per node. Without a dataset the run only drives
    gossip and pairwise detection.
    """
    n, T, B = config.n_nodes, config.epochs, config.bootstrap_epochs
    if plan.n != n:
        raise ValueError("plan and config disagree on the node count")
    if plan.batch_epochs and max(plan.batch_epochs) > T:
        raise ValueError("fault plan extends past the runtime")
    thresholds = config.all_thresholds()
    rng_gossip, rng_app, rng_agents = _derive_rngs(config.seed)

    fault_at = plan.fault_epochs()
    recover_at = plan.recovery_epochs()
    has_recoveries = bool(plan.recoveries)

    ps = PeerSampling(n, config.gossip, rng_gossip)
    ps.bootstrap()

    last = np.zeros((n, n), dtype=np.int32)
    detection = {t: np.zeros((n, n), dtype=np.int32) for t in thresholds}
    firing_counts = (
        {t: np.zeros((n, n), dtype=np.int32) for t in thresholds}
        if track_firing_counts
        else None
    )

    app: _AppState | None = None
    agents: list[healing.SelfHealingAgent] = []
    if dataset is not None:
        if dataset.shape[0] < n or dataset.shape[1] != RECORDS_PER_DAY:
            raise ValueError("dataset must provide 48 records for every node")
        app = _AppState(n, np.asarray(dataset[:n], dtype=np.float64))
        if enable_correction:
            agents = [
                healing.SelfHealingAgent(
                    parent=i,
                    threshold=config.threshold,
                    host=None,
                    sighting_log=[] if log_agent_sightings else None,
                )
                for i in range(n)
            ]

    events: list[tuple] = []
    timeseries: list[TimePoint] = []
    never_faulty = fault_at == 0
    capacity = config.gossip.view_capacity
    idmat = np.full((n, capacity), -1, dtype=np.int64)

    for tau in range(1, T + 1):
        alive = never_faulty | (tau <= fault_at)
        if has_recoveries:
            alive |= (recover_at > 0) & (tau > recover_at)
        monitor_active = never_faulty | (tau < fault_at)

        order = np.flatnonzero(alive)
        for a in order:
            ps.gossip_round(int(a), tau, alive)

        # Sightings: a monitor saw whoever is in its view at the end of the
        # epoch. Rows of crashed monitors freeze.
        idmat[: order.size].fill(-1)
        for i, a in enumerate(order):
            view = ps.views[a]
            if not view:
                continue
            ids = np.fromiter(view.keys(), dtype=np.int64, count=len(view))
            if firing_counts is not None:
                gaps = tau - last[a, ids] - 1
                for t in thresholds:
                    hits = ids[gaps > t]
                    if hits.size:
                        firing_counts[t][a, hits] += 1
            last[a, ids] = tau
            idmat[i, : ids.size] = ids

        if detect_all_pairs and tau > B:
            stale = tau - last
            for t in thresholds:
                mask = (stale > t) & (detection[t] == 0) & monitor_active[:, None]
                np.fill_diagonal(mask, False)
                if mask.any():
                    detection[t][mask] = tau

        if app is not None and tau > B:
            alive_idx = order
            ver = record_index(tau, B, T)
            app.advance(ver, alive_idx, tau)
            app.exchange_epoch(tau, alive, order, idmat[: order.size], rng_app)

            for agent in agents:
                _step_agent(
                    agent, ps, app, alive, fault_at, tau, rng_agents, events,
                    has_recoveries,
                )

            actual = float(app.cur_val[alive_idx].sum())
            est_f = app.faulty.sums[alive_idx]
            est_c = app.corrective.sums[alive_idx]
            timeseries.append(
                TimePoint(
                    epoch=tau,
                    actual_sum=actual,
                    faulty_estimate_mean=float(est_f.mean()) if alive_idx.size else 0.0,
                    corrective_estimate_mean=float(est_c.mean()) if alive_idx.size else 0.0,
                    avg_rel_error_faulty=_mean_relative_error(est_f, actual),
                    avg_rel_error_corrective=_mean_relative_error(est_c, actual),
                )
            )

    if track_firing_counts:
        # Close excursions still open at the end of the observable window.
        end_active = np.where(fault_at > 0, np.minimum(fault_at - 1, T), T)
        tail = end_active[:, None] - last
        for t in thresholds:
            mask = tail > t
            np.fill_diagonal(mask, False)
            firing_counts[t][mask] += 1

    agent_summaries = [
        {
            "parent": agent.parent,
            "parent_fault": int(fault_at[agent.parent]) or None,
            "first_detection": agent.first_detection,
            "lost": agent.state == healing.LOST,
            "rollbacks": agent.contacted,
            "sightings": agent.sighting_log,
        }
        for agent in agents
    ]

    app_error_c = app_error_f = None
    if timeseries:
        app_error_c = float(np.mean([p.avg_rel_error_corrective for p in timeseries]))
        app_error_f = float(np.mean([p.avg_rel_error_faulty for p in timeseries]))

    return SimTrace(
        config=config,
        plan=plan,
        fault_at=fault_at,
        recover_at=recover_at,
        detection=detection,
        firing_counts=firing_counts,
        timeseries=timeseries,
        events=events,
        agent_summaries=agent_summaries,
        app_error_corrective=app_error_c,
        app_error_faulty=app_error_f,
    )


def _step_agent(
    agent: healing.SelfHealingAgent,
    ps: PeerSampling,
    app: _AppState,
    alive: np.ndarray,
    fault_at: np.ndarray,
    tau: int,
    rng: np.random.Generator,
    events: list[tuple],
    has_recoveries: bool,
) -> None:
    if agent.state == healing.LOST:
        return
    parent = agent.parent
    if agent.host is None:
        # Initial placement, or a fresh start after returning home.
        if not alive[parent]:
            agent.state = healing.LOST
            events.append((tau, "agent_lost", parent, -1))
            return
        if healing.migrate(agent, ps.views[parent], tau, rng):
            events.append((tau, "migrate", parent, agent.host))
        return

    if not alive[agent.host]:
        # Consecutive migration off the crashed host's frozen view. The new
        # host may itself be dead, in which case the agent hops again next
        # epoch. Monitoring restarts from the new migration baseline.
        source_view = ps.views[agent.host]
        was_correcting = agent.state == healing.CORRECTING
        pending = agent.pending
        if healing.migrate(agent, source_view, tau, rng):
            events.append((tau, "remigrate", parent, agent.host))
            if was_correcting:
                # Keep correcting from the new host: the queue survives.
                agent.state = healing.CORRECTING
                agent.pending = pending
        return

    departed = int(fault_at[parent]) if fault_at[parent] else None
    decision = healing.monitor_step(agent, ps.views[agent.host], tau, departed_at=departed)
    if decision == healing.CORRECT:
        if agent.first_detection is None:
            agent.first_detection = tau
        holders = np.flatnonzero(app.corrective.present[:, parent])
        holders = holders[holders != parent]
        healing.start_correction(agent, holders.tolist())
        events.append((tau, "detect", parent, agent.host, len(agent.pending)))
    elif decision == healing.RETURN:
        events.append((tau, "return", parent, agent.host))
        agent.host = None  # re-migrates proactively next epoch
        return

    if agent.state == healing.CORRECTING:
        target = healing.next_rollback_target(
            agent, lambda c: bool(alive[c]), retry_faulty=has_recoveries
        )
        if target is not None:
            app.corrective.rollback(target, parent, tau)
        if healing.correction_complete(agent):
            healing.finish_correction(agent)
            events.append((tau, "correction_done", parent, agent.host))
