"""Peer sampling over partial views, the substrate for fault detection.

Each node holds a bounded partial view: a mapping from node id to the
freshest creation epoch seen for that node's descriptor. Views are refreshed
by push-pull exchanges; a node that has crashed neither initiates nor
answers, so its descriptors decay out of circulation instead of being
renewed. Staleness of a node's descriptor in someone's view is what drives
fault detection.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence


class Descriptor(NamedTuple):
    node_id: int
    created_at: int


@dataclass(frozen=True)
class GossipConfig:
    """Knobs of the peer sampling service.

    ``healer_h`` entries with the oldest timestamps are dropped on every
    merge; up to ``swap_s`` of the entries a node just sent away are dropped
    when the merged view overflows, before random truncation.
    """

    view_capacity: int = 50
    healer_h: int = 1
    swap_s: int = 24
    peer_selection: str = "random"  # or "oldest"
    exchange_mode: str = "push-pull"
    # Fraction of the view copied into each exchange buffer.
    buffer_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.view_capacity < 1:
            raise ValueError("view_capacity must be positive")
        if self.healer_h < 0 or self.swap_s < 0:
            raise ValueError("healer_h and swap_s must be nonnegative")
        if self.healer_h + self.swap_s > self.view_capacity:
            raise ValueError("healer_h + swap_s must not exceed view_capacity")
        if self.peer_selection not in ("random", "oldest"):
            raise ValueError("peer_selection must be 'random' or 'oldest'")
        if self.exchange_mode != "push-pull":
            raise ValueError("only push-pull exchanges are supported")
        if not 0.0 < self.buffer_fraction <= 1.0:
            raise ValueError("buffer_fraction must be in (0, 1]")


class PeerSampling:
    """All partial views of one simulated network plus the exchange logic.

    The caller owns the clock and node liveness; one `gossip_round` per
    alive node per epoch keeps the protocol deterministic for a fixed rng.
    """

    def __init__(self, n: int, config: GossipConfig, rng: random.Random):
        if n < 2:
            raise ValueError("need at least two nodes")
        self.n = n
        self.config = config
        self.rng = rng
        self.views: list[dict[int, int]] = [dict() for _ in range(n)]

    def bootstrap(self) -> None:
        """Fill every view with uniformly random other nodes at epoch 0."""
        size = min(self.config.view_capacity, self.n - 1)
        pool = list(range(self.n))
        for node in range(self.n):
            picked = self.rng.sample(pool, size + 1)
            view = {}
            for nid in picked:
                if nid != node and len(view) < size:
                    view[nid] = 0
            self.views[node] = view

    def select_peer(self, node: int) -> int | None:
        view = self.views[node]
        if not view:
            return None
        if self.config.peer_selection == "oldest":
            oldest_id = -1
            oldest_ts = None
            for nid, ts in view.items():
                if oldest_ts is None or ts < oldest_ts or (ts == oldest_ts and nid < oldest_id):
                    oldest_id = nid
                    oldest_ts = ts
            return oldest_id
        return self.rng.choice(list(view))

    def make_buffer(self, node: int, now: int) -> tuple[list[tuple[int, int]], list[int]]:
        """Fresh own descriptor plus a random slice of the view."""
        view = self.views[node]
        size = int(len(view) * self.config.buffer_fraction)
        if size:
            sample = self.rng.sample(list(view.items()), size)
            buffer = [(node, now)]
            buffer.extend(sample)
            return buffer, [nid for nid, _ in sample]
        return [(node, now)], []

    def merge(
        self,
        owner: int,
        incoming: Iterable[Descriptor],
        sent_ids: Sequence[int],
        counterpart: int,
        now: int,
    ) -> None:
        """Fold an exchange buffer into a view.

        Dedup keeps the freshest descriptor per node; the healer drops the
        oldest entries; overflow is resolved by first dropping entries the
        owner just sent, then uniformly at random. The counterpart's fresh
        entry is never dropped here: the owner just heard from it.
        """
        cfg = self.config
        view = self.views[owner]
        get = view.get
        for nid, ts in incoming:
            if nid == owner:
                continue
            if ts > get(nid, -1):
                view[nid] = ts
        for _ in range(cfg.healer_h):
            if len(view) <= 1:
                break
            oldest_id = -1
            oldest_ts = None
            for nid, ts in view.items():
                if oldest_ts is None or ts < oldest_ts or (ts == oldest_ts and nid < oldest_id):
                    oldest_id = nid
                    oldest_ts = ts
            del view[oldest_id]
        removed = 0
        for nid in sent_ids:
            if len(view) <= cfg.view_capacity or removed >= cfg.swap_s:
                break
            if nid != counterpart and nid in view:
                del view[nid]
                removed += 1
        excess = len(view) - cfg.view_capacity
        if excess > 0:
            candidates = [nid for nid in view if nid != counterpart]
            for nid in self.rng.sample(candidates, min(excess, len(candidates))):
                del view[nid]

    def gossip_round(self, node: int, now: int, alive) -> int | None:
        """One push-pull exchange initiated by `node`.

        Returns the contacted peer, or None when the view is empty or the
        chosen peer has crashed (the message is simply lost).
        """
        if not self.views[node]:
            return None
        peer = self.select_peer(node)
        if peer is None or not alive[peer]:
            return None
        buffer_a, sent_a = self.make_buffer(node, now)
        buffer_b, sent_b = self.make_buffer(peer, now)
        self.merge(node, buffer_b, sent_a, peer, now)
        self.merge(peer, buffer_a, sent_b, node, now)
        return peer


def freshest_seen(
    view_history: Sequence[tuple[int, Mapping[int, int]]],
    target: int,
    since: int,
) -> int | None:
    """Most recent epoch at which a view held a fresh descriptor of target.

    ``view_history`` is a sequence of (epoch, view) snapshots; only
    descriptors created strictly after ``since`` count. Returns None when
    no snapshot qualifies.
    """
    best: int | None = None
    for epoch, view in view_history:
        ts = view.get(target)
        if ts is not None and ts > since and (best is None or epoch > best):
            best = epoch
    return best
