"""Self-healing agents: remote monitors that trigger or withhold rollback.

Each node (the parent) plants an agent on a random remote host picked from
its partial view. The agent watches for fresh parent descriptors in the
host's view; when none has been seen for longer than the threshold it
declares the parent faulty and starts correcting: it contacts, one per
epoch, every consumer that currently counts the parent's record and asks it
to roll that record back. A descriptor created after the parent's actual
departure interrupts the correction and sends the agent home.

Detection is edge-triggered: once the staleness criterion fires, it cannot
fire again until a fresh sighting has re-armed it, so one staleness
excursion yields at most one correction.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

MONITORING = "monitoring"
CORRECTING = "correcting"
RETURNED = "returned"
LOST = "lost"

TOLERATE = "tolerate"
CORRECT = "correct"
RETURN = "return"


@dataclass
class SelfHealingAgent:
    """State of one agent monitoring its parent from a remote host."""

    parent: int
    threshold: int
    host: int | None = None
    migrated_at: int = 0
    last_fresh_sighting: int = 0
    state: str = MONITORING
    armed: bool = True
    detected_at: int | None = None
    first_detection: int | None = None
    pending: deque = field(default_factory=deque)
    contacted: int = 0
    # Set by the simulation when it wants the raw sighting epochs for audit.
    sighting_log: list[int] | None = None


def migrate(agent: SelfHealingAgent, view: Mapping[int, int], now: int, rng) -> bool:
    """Place the agent on a host drawn uniformly from a partial view.

    Returns False when the view offers no candidate (retry next epoch). The
    parent itself is never picked. The monitoring baseline restarts at the
    migration epoch: only descriptors created after it count as fresh.
    """
    candidates = sorted(nid for nid in view if nid != agent.parent)
    if not candidates:
        return False
    agent.host = candidates[int(rng.integers(len(candidates)))]
    agent.migrated_at = now
    agent.last_fresh_sighting = now
    agent.state = MONITORING
    agent.armed = True
    return True


def monitor_step(
    agent: SelfHealingAgent,
    host_view: Mapping[int, int],
    now: int,
    departed_at: int | None = None,
) -> str:
    """Advance the agent one epoch and return its decision.

    ``departed_at`` is the epoch the parent actually left, when it has; a
    parent descriptor created after it proves the parent is back and turns
    an ongoing correction into a return home.
    """
    ts = host_view.get(agent.parent)
    fresh = ts is not None and ts > agent.migrated_at
    if fresh:
        if agent.sighting_log is not None:
            agent.sighting_log.append(now)
        agent.last_fresh_sighting = now
        agent.armed = True
    if (
        agent.state == CORRECTING
        and departed_at is not None
        and ts is not None
        and ts > departed_at
    ):
        agent.state = RETURNED
        agent.pending.clear()
        return RETURN
    if agent.state == MONITORING and agent.armed:
        if now - agent.last_fresh_sighting > agent.threshold:
            agent.state = CORRECTING
            agent.detected_at = now
            agent.armed = False
            return CORRECT
    return TOLERATE


def start_correction(agent: SelfHealingAgent, holders: Iterable[int]) -> None:
    """Queue every consumer currently counting the parent's record."""
    agent.pending = deque(sorted(holders))


def next_rollback_target(
    agent: SelfHealingAgent,
    is_alive: Callable[[int], bool],
    retry_faulty: bool = False,
) -> int | None:
    """Pop the next consumer to contact this epoch, skipping crashed ones.

    Crashed consumers are re-queued only when ``retry_faulty`` is set (they
    may recover later); otherwise they are dropped. At most one consumer is
    returned per call, which is what paces corrections to one contact per
    agent per epoch.
    """
    for _ in range(len(agent.pending)):
        consumer = agent.pending.popleft()
        if is_alive(consumer):
            agent.contacted += 1
            return consumer
        if retry_faulty:
            agent.pending.append(consumer)
    return None


def correction_complete(agent: SelfHealingAgent) -> bool:
    return agent.state == CORRECTING and not agent.pending


def finish_correction(agent: SelfHealingAgent) -> None:
    """Back to monitoring; stays quiet until a fresh sighting re-arms it."""
    agent.state = MONITORING
    agent.pending.clear()


def reference_detection(
    sighting_epochs: Iterable[int], baseline: int, threshold: int, horizon: int
) -> int | None:
    """Batch re-derivation of the first detection epoch from raw sightings.

    Independent of the incremental agent logic: walks the epochs after
    ``baseline`` and returns the first one whose distance from the latest
    sighting so far exceeds the threshold. Used to audit `monitor_step`.
    """
    sightings = sorted(set(sighting_epochs))
    last = baseline
    index = 0
    for now in range(baseline + 1, horizon + 1):
        while index < len(sightings) and sightings[index] <= now:
            last = sightings[index]
            index += 1
        if now - last > threshold:
            return now
    return None
