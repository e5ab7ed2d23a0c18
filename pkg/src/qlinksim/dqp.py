"""Distributed queue: master/slave replicated request queues.

Node A is master and assigns every queue sequence number. Each side keeps
at most ``window`` of its own ADDs unacknowledged; further adds wait
locally, which interleaves the two nodes' requests fairly. Unanswered
ADDs are retransmitted and eventually time out, after which a cancelling
REJ asks the peer to drop any copy it inserted.
"""
from __future__ import annotations

import logging
import math
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable

from qlinksim import packets as pk
from qlinksim.des import EventHandle, Simulator
from qlinksim.scheduler import NUM_QUEUES, QUEUE_CAPACITY, QueueItem

log = logging.getLogger(__name__)

DUP_WINDOW = 128

ADD_OK = "ok"
ADD_REJECTED = "rejected"
ADD_TIMEOUT = "timeout"

ResultCallback = Callable[[str, QueueItem | None], None]
Policy = Callable[[QueueItem], bool]


def quantize_fidelity(f: float) -> float:
    """The value a minimum fidelity takes after a trip through its wire field."""
    return pk.from_fixed_point(pk.fixed_point(f, 32), 32)


@dataclass
class _Outstanding:
    cseq: int
    packet: pk.Packet
    item: QueueItem
    on_result: ResultCallback
    retries: int = 0
    timer: EventHandle | None = None


class DistributedQueue:
    def __init__(self, sim: Simulator, node: str, is_master: bool, send: Callable[[pk.Packet], None],
                 delay_ab_ns: int, cycle_ns: int, scheduler, window: int = 8, max_retries: int = 10,
                 policy: Policy | None = None):
        if window <= 0:
            raise ValueError("window must be positive")
        self.sim = sim
        self.node = node
        self.is_master = is_master
        self._send = send
        self.delay_ab_ns = delay_ab_ns
        self.cycle_ns = cycle_ns
        self.scheduler = scheduler
        self.window = window
        self.max_retries = max_retries
        self.policy = policy
        self.retransmit_ns = 2 * (2 * delay_ab_ns) + cycle_ns
        self.queues: list[dict[int, QueueItem]] = [dict() for _ in range(NUM_QUEUES)]
        self._next_qseq = [0] * NUM_QUEUES
        self._next_cseq = 0
        self._outstanding: dict[int, _Outstanding] = {}
        self._waiting: deque[tuple[QueueItem, ResultCallback]] = deque()
        self._seen: OrderedDict[int, tuple[pk.Packet, tuple[int, int] | None]] = OrderedDict()
        self._newest_seen: int | None = None
        self.retransmissions = 0
        self.listeners: list[Callable[[str, QueueItem], None]] = []

    # queue access

    def items(self):
        for q in self.queues:
            yield from q.values()

    def get(self, aid: tuple[int, int]) -> QueueItem | None:
        qid, qseq = aid
        if not 0 <= qid < NUM_QUEUES:
            return None
        return self.queues[qid].get(qseq)

    def remove(self, aid: tuple[int, int]) -> QueueItem | None:
        it = self.queues[aid[0]].pop(aid[1], None)
        if it is not None:
            self._notify("remove", it)
        return it

    def __len__(self) -> int:
        return sum(len(q) for q in self.queues)

    def queue_length(self, qid: int) -> int:
        return len(self.queues[qid])

    def busy(self) -> bool:
        """True while any own ADD awaits an answer."""
        return bool(self._outstanding or self._waiting)

    def _notify(self, what: str, item: QueueItem) -> None:
        for cb in self.listeners:
            cb(what, item)

    def _insert(self, item: QueueItem) -> None:
        self.queues[item.qid][item.qseq] = item
        self._notify("insert", item)

    def _alloc_qseq(self, qid: int) -> int | None:
        q = self.queues[qid]
        if len(q) >= QUEUE_CAPACITY:
            return None
        s = self._next_qseq[qid]
        while s in q:
            s = (s + 1) % QUEUE_CAPACITY
        self._next_qseq[qid] = (s + 1) % QUEUE_CAPACITY
        return s

    def _schedule_cycle(self) -> int:
        return int(math.ceil((self.sim.now + self.delay_ab_ns) / self.cycle_ns))

    # adding

    def add(self, item: QueueItem, on_result: ResultCallback) -> None:
        """Replicate a locally created request; ``on_result(status, item)`` reports the outcome."""
        if not 0 <= item.qid < NUM_QUEUES:
            raise ValueError(f"queue index {item.qid} out of range")
        item.min_fidelity = quantize_fidelity(item.min_fidelity)
        self._waiting.append((item, on_result))
        self._pump()

    def _pump(self) -> None:
        while self._waiting and len(self._outstanding) < self.window:
            item, cb = self._waiting.popleft()
            self._start(item, cb)

    def _start(self, item: QueueItem, cb: ResultCallback) -> None:
        if self.is_master:
            qseq = self._alloc_qseq(item.qid)
            if qseq is None:
                cb(ADD_REJECTED, None)
                return
            item.qseq = qseq
            item.schedule_cycle = self._schedule_cycle()
            item.virtual_finish = self.scheduler.assign_finish(item.qid, item.num_pairs, item.est_cycles_per_pair)
            self._insert(item)
        cseq = self._next_cseq
        self._next_cseq = (cseq + 1) % 256
        pkt = item_to_packet(item, pk.FT_ADD, cseq, master_request=self.is_master)
        o = _Outstanding(cseq, pkt, item, cb)
        self._outstanding[cseq] = o
        self._transmit(o)

    def _transmit(self, o: _Outstanding) -> None:
        self._send(o.packet)
        o.timer = self.sim.schedule(self.sim.now + self.retransmit_ns, self._on_timer, o.cseq)

    def _on_timer(self, cseq: int) -> None:
        o = self._outstanding.get(cseq)
        if o is None:
            return
        if o.retries >= self.max_retries:
            del self._outstanding[cseq]
            if self.is_master:
                self.remove(o.item.aid)
            cancel = dict(o.packet.fields)
            cancel["ft"] = pk.FT_REJ
            cancel["opt"] |= pk.OPT_CANCEL
            self._send(pk.Packet("DQP", cancel))
            o.on_result(ADD_TIMEOUT, None)
            self._pump()
            return
        o.retries += 1
        self.retransmissions += 1
        self._transmit(o)

    # receiving

    def handle(self, pkt: pk.Packet) -> None:
        ft = pkt["ft"]
        if ft == pk.FT_ADD:
            self._handle_add(pkt)
        elif ft == pk.FT_ACK:
            self._handle_ack(pkt)
        elif ft == pk.FT_REJ:
            if pkt["opt"] & pk.OPT_CANCEL:
                self._handle_cancel(pkt)
            else:
                self._handle_rej(pkt)

    def _is_stale(self, cseq: int) -> bool:
        if self._newest_seen is None:
            return False
        behind = (self._newest_seen - cseq) % 256
        return 2 * self.window <= behind <= DUP_WINDOW

    def _remember(self, cseq: int, response: pk.Packet, aid: tuple[int, int] | None) -> None:
        self._seen[cseq] = (response, aid)
        self._seen.move_to_end(cseq)
        while len(self._seen) > DUP_WINDOW:
            self._seen.popitem(last=False)
        if self._newest_seen is None or 0 < (cseq - self._newest_seen) % 256 < DUP_WINDOW:
            self._newest_seen = cseq

    def _handle_add(self, pkt: pk.Packet) -> None:
        cseq = pkt["cseq"]
        seen = self._seen.get(cseq)
        if seen is not None:
            self._send(seen[0])
            return
        if self._is_stale(cseq):
            log.debug("%s: dropping stale ADD cseq=%d", self.node, cseq)
            return
        item = packet_to_item(pkt, origin="A" if pkt["master_request"] else "B")
        accepted = self.policy is None or self.policy(item)
        if accepted and self.is_master:
            qseq = self._alloc_qseq(item.qid)
            if qseq is None:
                accepted = False
            else:
                item.qseq = qseq
                item.schedule_cycle = self._schedule_cycle()
                item.virtual_finish = self.scheduler.assign_finish(item.qid, item.num_pairs,
                                                                   item.est_cycles_per_pair)
        elif accepted and (self.get(item.aid) is not None or len(self.queues[item.qid]) >= QUEUE_CAPACITY):
            accepted = False
        if accepted:
            self._insert(item)
            resp = item_to_packet(item, pk.FT_ACK, cseq, master_request=bool(pkt["master_request"]))
            self._remember(cseq, resp, item.aid)
        else:
            fields = dict(pkt.fields)
            fields["ft"] = pk.FT_REJ
            resp = pk.Packet("DQP", fields)
            self._remember(cseq, resp, None)
        self._send(resp)

    def _finish(self, cseq: int) -> _Outstanding | None:
        o = self._outstanding.pop(cseq, None)
        if o is not None and o.timer is not None:
            o.timer.cancel()
        return o

    def _handle_ack(self, pkt: pk.Packet) -> None:
        o = self._finish(pkt["cseq"])
        if o is None:
            return
        item = o.item
        if not self.is_master:
            item.qseq = pkt["qseq"]
            item.schedule_cycle = pkt["schedule_cycle"]
            item.virtual_finish = pkt["initial_virtual_finish"]
            if self.get(item.aid) is None:
                self._insert(item)
        o.on_result(ADD_OK, item)
        self._pump()

    def _handle_rej(self, pkt: pk.Packet) -> None:
        o = self._finish(pkt["cseq"])
        if o is None:
            return
        if self.is_master:
            self.remove(o.item.aid)
        o.on_result(ADD_REJECTED, None)
        self._pump()

    def _handle_cancel(self, pkt: pk.Packet) -> None:
        seen = self._seen.get(pkt["cseq"])
        if seen is None:
            return
        aid = seen[1]
        if aid is not None:
            self.remove(aid)
        fields = dict(pkt.fields)
        fields["ft"] = pk.FT_REJ
        self._seen[pkt["cseq"]] = (pk.Packet("DQP", fields), None)


def item_to_packet(item: QueueItem, ft: int, cseq: int, master_request: bool) -> pk.Packet:
    opt = (pk.OPT_CONSECUTIVE if item.consecutive else 0) | (pk.OPT_RANDOM_BASIS if item.random_basis else 0)
    return pk.make(
        "DQP", opt=opt, ft=ft, cseq=cseq, qid=item.qid, qseq=item.qseq,
        schedule_cycle=item.schedule_cycle, timeout=item.timeout_cycle,
        min_fidelity=pk.fixed_point(item.min_fidelity, 32), purpose_id=item.purpose_id,
        create_id=item.create_id, num_pairs=item.num_pairs, priority=item.priority,
        initial_virtual_finish=item.virtual_finish, est_cycles_per_pair=item.est_cycles_per_pair,
        store=int(item.kind == "K"), atomic=int(item.atomic), measure_directly=int(item.kind == "M"),
        master_request=int(master_request),
    )


def packet_to_item(pkt: pk.Packet, origin: str) -> QueueItem:
    return QueueItem(
        qid=pkt["qid"], qseq=pkt["qseq"], origin=origin, create_id=pkt["create_id"],
        kind="M" if pkt["measure_directly"] else "K", num_pairs=pkt["num_pairs"],
        min_fidelity=pk.from_fixed_point(pkt["min_fidelity"], 32), purpose_id=pkt["purpose_id"],
        priority=pkt["priority"], schedule_cycle=pkt["schedule_cycle"], timeout_cycle=pkt["timeout"],
        consecutive=bool(pkt["opt"] & pk.OPT_CONSECUTIVE), atomic=bool(pkt["atomic"]),
        random_basis=bool(pkt["opt"] & pk.OPT_RANDOM_BASIS), virtual_finish=pkt["initial_virtual_finish"],
        est_cycles_per_pair=pkt["est_cycles_per_pair"],
    )
