"""Queue items and the deterministic NEXT selection strategies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

NUM_QUEUES = 16
QUEUE_CAPACITY = 256


@dataclass
class QueueItem:
    """One request as replicated in both nodes' distributed queues."""

    qid: int
    qseq: int
    origin: str
    create_id: int
    kind: str
    num_pairs: int
    min_fidelity: float
    purpose_id: int
    priority: int
    schedule_cycle: int
    timeout_cycle: int = 0  # 0 means no timeout
    consecutive: bool = True
    atomic: bool = False
    random_basis: bool = False
    virtual_finish: int = 0
    est_cycles_per_pair: int = 0
    create_time_ns: int = 0
    pairs_left: int = field(default=-1)
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.pairs_left < 0:
            self.pairs_left = self.num_pairs

    @property
    def aid(self) -> tuple[int, int]:
        return (self.qid, self.qseq)

    def ready(self, cycle: int) -> bool:
        return self.schedule_cycle <= cycle and not self.timed_out(cycle)

    def timed_out(self, cycle: int) -> bool:
        return self.timeout_cycle > 0 and cycle > self.timeout_cycle


class FcfsScheduler:
    """First come first served across all queues."""

    name = "fcfs"

    def select(self, items: Iterable[QueueItem]) -> QueueItem | None:
        best = None
        best_key = None
        for it in items:
            key = (it.schedule_cycle, it.qid, it.qseq)
            if best_key is None or key < best_key:
                best, best_key = it, key
        return best

    def assign_finish(self, qid: int, pairs: int, est_cycles: int) -> int:
        return 0

    def on_service(self, item: QueueItem) -> None:
        pass


class WfqScheduler:
    """Strict priority for some queues, weighted fair queuing among the rest.

    Finish tags are assigned once by the master when a request is added and
    replicated through the queue; selection is by smallest tag, ties broken
    by absolute queue ID. Virtual time follows the tag of the item most
    recently put into service (self-clocked).
    """

    name = "wfq"

    def __init__(self, strict: Iterable[int] = (1,), weights: dict[int, float] | None = None):
        self.strict = tuple(sorted(strict))
        self.weights = dict(weights if weights is not None else {2: 10.0, 3: 1.0})
        for q, w in self.weights.items():
            if w <= 0:
                raise ValueError(f"weight of queue {q} must be positive")
        self.virtual_time = 0
        self._last_finish: dict[int, int] = {}

    def assign_finish(self, qid: int, pairs: int, est_cycles: int) -> int:
        if qid in self.strict:
            return 0
        w = self.weights.get(qid, 1.0)
        start = max(self.virtual_time, self._last_finish.get(qid, 0))
        finish = start + int(math.ceil(pairs * max(est_cycles, 1) / w))
        self._last_finish[qid] = finish
        return finish

    def select(self, items: Iterable[QueueItem]) -> QueueItem | None:
        strict_best = None
        strict_key = None
        fair_best = None
        fair_key = None
        for it in items:
            if it.qid in self.strict:
                key = (self.strict.index(it.qid), it.schedule_cycle, it.qseq)
                if strict_key is None or key < strict_key:
                    strict_best, strict_key = it, key
            else:
                key = (it.virtual_finish, it.qid, it.qseq)
                if fair_key is None or key < fair_key:
                    fair_best, fair_key = it, key
        return strict_best if strict_best is not None else fair_best

    def on_service(self, item: QueueItem) -> None:
        if item.qid not in self.strict and item.virtual_finish > self.virtual_time:
            self.virtual_time = item.virtual_finish


def make_scheduler(name: str, weights: dict[int, float] | None = None):
    if name == "fcfs":
        return FcfsScheduler()
    if name == "wfq":
        return WfqScheduler(weights=weights)
    raise ValueError(f"unknown scheduler {name!r}")
