"""In-process partitioned message log with offset-based polling and retention.

Records published to a topic are routed to a partition by a stable key hash,
assigned a monotonically increasing per-partition offset, and retained until a
retention sweep removes entries older than the retention window. Consumers
poll by (partition, offset) and own their committed positions.
"""

from __future__ import annotations

import threading
from bisect import bisect_left
from dataclasses import dataclass

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def stable_hash64(key: str) -> int:
    """FNV-1a 64-bit hash. Stable across processes and Python versions."""
    h = _FNV_OFFSET
    for byte in key.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


class BrokerError(RuntimeError):
    """Topic registry misuse: duplicate create, unknown topic, bad partition."""


@dataclass(frozen=True)
class Record:
    key: str
    payload: bytes
    produce_timestamp: float
    offset: int


class _Partition:
    __slots__ = ("offsets", "records", "next_offset", "lock")

    def __init__(self) -> None:
        self.offsets: list[int] = []
        self.records: list[Record] = []
        self.next_offset = 0
        self.lock = threading.Lock()


class TopicLog:
    """One topic: a fixed set of partitions, each an append-only offset log."""

    def __init__(self, name: str, num_partitions: int, retention_seconds: float) -> None:
        if num_partitions < 1:
            raise BrokerError(f"topic {name!r} needs at least one partition, got {num_partitions}")
        if retention_seconds <= 0:
            raise BrokerError(f"topic {name!r} needs positive retention, got {retention_seconds}")
        self.name = name
        self.num_partitions = num_partitions
        self.retention_seconds = retention_seconds
        self._partitions = [_Partition() for _ in range(num_partitions)]

    def partition_for(self, key: str) -> int:
        return stable_hash64(key) % self.num_partitions

    def produce(self, key: str, payload: bytes, produce_timestamp: float) -> tuple[int, int]:
        """Append one record; returns (partition, offset)."""
        p = self.partition_for(key)
        part = self._partitions[p]
        with part.lock:
            offset = part.next_offset
            part.next_offset += 1
            part.offsets.append(offset)
            part.records.append(Record(key, payload, produce_timestamp, offset))
        return p, offset

    def poll(self, partition: int, from_offset: int, max_records: int | None = None) -> list[Record]:
        """Records with offset >= from_offset, in offset order.

        Offsets freed by retention are simply absent; polling across a gap
        resumes at the first surviving offset.
        """
        if not 0 <= partition < self.num_partitions:
            raise BrokerError(f"topic {self.name!r} has no partition {partition}")
        part = self._partitions[partition]
        with part.lock:
            i = bisect_left(part.offsets, from_offset)
            j = len(part.offsets) if max_records is None else min(len(part.offsets), i + max_records)
            return part.records[i:j]

    def end_offset(self, partition: int) -> int:
        if not 0 <= partition < self.num_partitions:
            raise BrokerError(f"topic {self.name!r} has no partition {partition}")
        return self._partitions[partition].next_offset

    def retention_sweep(self, now: float) -> int:
        """Drop every record with produce_timestamp < now - retention. Returns count dropped."""
        horizon = now - self.retention_seconds
        dropped = 0
        for part in self._partitions:
            with part.lock:
                keep = [r for r in part.records if r.produce_timestamp >= horizon]
                dropped += len(part.records) - len(keep)
                part.records = keep
                part.offsets = [r.offset for r in keep]
        return dropped

    def record_count(self) -> int:
        return sum(len(part.records) for part in self._partitions)


class Broker:
    """Registry of topics."""

    def __init__(self) -> None:
        self._topics: dict[str, TopicLog] = {}

    def create_topic(self, name: str, num_partitions: int, retention_seconds: float) -> TopicLog:
        if name in self._topics:
            raise BrokerError(f"topic {name!r} already exists")
        topic = TopicLog(name, num_partitions, retention_seconds)
        self._topics[name] = topic
        return topic

    def topic(self, name: str) -> TopicLog:
        try:
            return self._topics[name]
        except KeyError:
            raise BrokerError(f"unknown topic {name!r}") from None

    def topics(self) -> list[str]:
        return sorted(self._topics)
