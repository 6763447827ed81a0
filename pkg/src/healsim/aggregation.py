"""Decentralized aggregation primitives: running sums with reversible memory.

Every node is both a data supplier (publishing a slowly changing numeric
record) and a data consumer (folding other suppliers' records into running
sum/count/min/max aggregates). A consumer remembers what it counted per
supplier so that a newer record replaces the old one and so that a
supplier's contribution can be rolled back when it leaves the network.

Memory comes in two flavours: exact (a per-supplier map, the verification
oracle) and bloom (a pair of counting Bloom filters over supplier ids and
(supplier, version) pairs, trading exactness for constant space). In bloom
mode the numeric value to subtract is recovered from the supplier's record
history, which rollback initiators carry with them.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class BloomUnderflowError(RuntimeError):
    """Raised in debug mode when removing an item that was never inserted."""


class CountingBloomFilter:
    """Counting Bloom filter with insert/remove/contains.

    Items are hashed with double hashing over a keyed blake2b digest, so
    membership is deterministic for a fixed salt. Counters are uint8;
    removal of an item whose counters would underflow is a no-op (and an
    error in debug mode, which keeps an exact shadow multiset and counts
    observed false positives).
    """

    def __init__(self, m_bits: int, k_hashes: int, salt: int = 0, debug: bool = False):
        if m_bits < 1 or k_hashes < 1:
            raise ValueError("m_bits and k_hashes must be positive")
        self.m_bits = m_bits
        self.k_hashes = k_hashes
        self.salt = salt
        self.counters = np.zeros(m_bits, dtype=np.uint8)
        self.debug = debug
        self._shadow: Counter | None = Counter() if debug else None
        self.false_positive_count = 0

    def _index_counts(self, item) -> Counter:
        data = repr(item).encode()
        digest = hashlib.blake2b(
            data, digest_size=16, key=self.salt.to_bytes(8, "little")
        ).digest()
        h1 = int.from_bytes(digest[:8], "little")
        h2 = int.from_bytes(digest[8:], "little") | 1
        return Counter((h1 + i * h2) % self.m_bits for i in range(self.k_hashes))

    def insert(self, item) -> None:
        for idx, count in self._index_counts(item).items():
            total = int(self.counters[idx]) + count
            self.counters[idx] = min(total, 255)
        if self._shadow is not None:
            self._shadow[item] += 1

    def contains(self, item) -> bool:
        present = all(
            self.counters[idx] >= count for idx, count in self._index_counts(item).items()
        )
        if self._shadow is not None and present and self._shadow[item] == 0:
            self.false_positive_count += 1
        return present

    def remove(self, item) -> bool:
        """Decrement the item's counters; returns False if it looks absent."""
        counts = self._index_counts(item)
        if self._shadow is not None and self._shadow[item] == 0:
            raise BloomUnderflowError(f"remove of absent item {item!r}")
        if any(self.counters[idx] < count for idx, count in counts.items()):
            return False
        for idx, count in counts.items():
            self.counters[idx] -= count
        if self._shadow is not None:
            self._shadow[item] -= 1
        return True

    @staticmethod
    def theoretical_fpr(m_bits: int, k_hashes: int, n_items: int) -> float:
        return float((1.0 - np.exp(-k_hashes * n_items / m_bits)) ** k_hashes)


@dataclass
class SupplierState:
    """A supplier's current record plus the history rollbacks rely on."""

    node_id: int
    current_value: float = 0.0
    version: int = -1
    history: list[float] = field(default_factory=list)

    def publish(self, version: int, value: float) -> None:
        if version < self.version:
            raise ValueError("versions must be non-decreasing")
        if version == self.version:
            self.history[version] = float(value)
        else:
            # Fill any skipped versions with the previous value.
            while len(self.history) < version:
                self.history.append(self.current_value)
            self.history.append(float(value))
        self.version = version
        self.current_value = float(value)

    def value_at(self, version: int) -> float:
        return self.history[version]


class _ValueMultiset:
    """Counter-backed multiset giving exact extrema under removals."""

    def __init__(self):
        self._counts: Counter = Counter()

    def add(self, value: float) -> None:
        self._counts[value] += 1

    def remove(self, value: float) -> None:
        count = self._counts.get(value, 0)
        if count <= 1:
            self._counts.pop(value, None)
        else:
            self._counts[value] = count - 1

    def min(self) -> float | None:
        return min(self._counts) if self._counts else None

    def max(self) -> float | None:
        return max(self._counts) if self._counts else None

    def values(self) -> list[float]:
        return sorted(self._counts.elements())


class AggregateState:
    """A consumer's running aggregates with reversible per-supplier memory."""

    def __init__(
        self,
        mode: str = "exact",
        *,
        bloom_bits: int = 1 << 14,
        bloom_hashes: int = 7,
        salt: int = 0,
        debug: bool = False,
    ):
        if mode not in ("exact", "bloom"):
            raise ValueError("mode must be 'exact' or 'bloom'")
        self.mode = mode
        self.sum = 0.0
        self.count = 0
        self._extrema = _ValueMultiset()
        self._memory: dict[int, tuple[float, int]] = {}
        if mode == "bloom":
            self.id_filter = CountingBloomFilter(bloom_bits, bloom_hashes, salt, debug)
            self.version_filter = CountingBloomFilter(
                bloom_bits, bloom_hashes, salt + 1, debug
            )

    # -- exact-mode internals ------------------------------------------------

    def _exact_exchange(self, supplier: SupplierState) -> None:
        held = self._memory.get(supplier.node_id)
        if held is not None:
            old_value, old_version = held
            if old_version >= supplier.version:
                return
            self.sum += supplier.current_value - old_value
            self._extrema.remove(old_value)
            self._extrema.add(supplier.current_value)
        else:
            self.sum += supplier.current_value
            self.count += 1
            self._extrema.add(supplier.current_value)
        self._memory[supplier.node_id] = (supplier.current_value, supplier.version)

    def _exact_rollback(self, supplier_id: int) -> bool:
        held = self._memory.pop(supplier_id, None)
        if held is None:
            return False
        value, _ = held
        self.sum -= value
        self.count -= 1
        self._extrema.remove(value)
        return True

    # -- bloom-mode internals ------------------------------------------------

    def _bloom_held_version(self, supplier_id: int, up_to: int) -> int | None:
        for version in range(up_to, -1, -1):
            if self.version_filter.contains((supplier_id, version)):
                return version
        return None

    def _bloom_exchange(self, supplier: SupplierState) -> None:
        key = (supplier.node_id, supplier.version)
        if self.version_filter.contains(key):
            return  # same record already counted (or a filter false positive)
        if self.id_filter.contains(supplier.node_id):
            old_version = self._bloom_held_version(supplier.node_id, supplier.version - 1)
            if old_version is not None:
                old_value = supplier.value_at(old_version)
                self.sum += supplier.current_value - old_value
                self._extrema.remove(old_value)
                self._extrema.add(supplier.current_value)
                self.version_filter.remove((supplier.node_id, old_version))
                self.version_filter.insert(key)
                return
        self.sum += supplier.current_value
        self.count += 1
        self._extrema.add(supplier.current_value)
        self.id_filter.insert(supplier.node_id)
        self.version_filter.insert(key)

    def _bloom_rollback(self, supplier_id: int, history: Sequence[float]) -> bool:
        if not self.id_filter.contains(supplier_id):
            return False
        version = self._bloom_held_version(supplier_id, len(history) - 1)
        if version is None:
            return False
        value = history[version]
        self.sum -= value
        self.count -= 1
        self._extrema.remove(value)
        self.version_filter.remove((supplier_id, version))
        self.id_filter.remove(supplier_id)
        return True

    # -- public operations ---------------------------------------------------

    def exchange(self, supplier: SupplierState) -> None:
        """Fold the supplier's current record in: add, replace, or no-op."""
        if self.mode == "exact":
            self._exact_exchange(supplier)
        else:
            self._bloom_exchange(supplier)

    def rollback(self, supplier_id: int, history: Sequence[float] | None = None) -> bool:
        """Remove whatever is remembered for the supplier; no-op if nothing is."""
        if self.mode == "exact":
            return self._exact_rollback(supplier_id)
        if history is None:
            raise ValueError("bloom-mode rollback needs the supplier's history")
        return self._bloom_rollback(supplier_id, history)

    @property
    def mean(self) -> float:
        return self.sum / self.count if self.count else 0.0

    @property
    def min(self) -> float | None:
        return self._extrema.min()

    @property
    def max(self) -> float | None:
        return self._extrema.max()

    def memory_snapshot(self) -> dict[int, tuple[float, int]]:
        if self.mode != "exact":
            raise ValueError("only exact mode exposes its memory")
        return dict(self._memory)


def exchange(supplier: SupplierState, consumer: AggregateState) -> AggregateState:
    consumer.exchange(supplier)
    return consumer


def rollback(
    consumer: AggregateState, supplier_id: int, history: Sequence[float] | None = None
) -> AggregateState:
    consumer.rollback(supplier_id, history)
    return consumer


def actual_aggregate(values: Iterable[float], alive: Iterable[bool]) -> float:
    """Ground-truth sum: contributions of suppliers on alive nodes only."""
    return float(sum(v for v, ok in zip(values, alive) if ok))


def relative_approx_error(estimates: Sequence[float], actual: float) -> float:
    """Mean relative deviation of consumer estimates from the true aggregate.

    A zero true aggregate makes the ratio degenerate: an estimate of zero is
    counted as error 0, anything else as error 1.
    """
    if not len(estimates):
        return 0.0
    if actual == 0.0:
        return float(np.mean([0.0 if e == 0.0 else 1.0 for e in estimates]))
    arr = np.asarray(estimates, dtype=float)
    return float(np.mean(np.abs(arr - actual) / abs(actual)))
