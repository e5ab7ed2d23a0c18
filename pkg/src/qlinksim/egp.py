"""Entanglement generation protocol: request lifecycle on top of the MHP.

Each node runs one :class:`EGP`. Requests enter through :meth:`EGP.create`,
are replicated by the distributed queue, selected deterministically on
every MHP poll, and answered with OK or error records. Sequence numbers
from the midpoint are tracked per node; gaps and pairs that cannot be
delivered are closed with EXPIRE messages to the peer.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

from qlinksim import feu as feu_mod
from qlinksim import packets as pk
from qlinksim import physmodel as pm
from qlinksim.des import EventHandle, Simulator
from qlinksim.dqp import ADD_OK, ADD_REJECTED, DistributedQueue, quantize_fidelity
from qlinksim.mhp import NO_ATTEMPT, LinkHardware, MhpResult, PollResponse, seq_diff, SEQ_MOD
from qlinksim.rng import Streams
from qlinksim.scheduler import NUM_QUEUES, QueueItem

log = logging.getLogger(__name__)

NODE_IDS = {"A": 1, "B": 2}
BASIS_LIST = ("X", "Y", "Z")


class ErrorCode(enum.IntEnum):
    UNSUPP = 1
    MEMEXCEEDED = 2
    OUTOFMEM = 3
    DENIED = 4
    ERR_NOTIME = 5
    ERR_TIMEOUT = 6
    ERR_EXPIRE = 7
    ERR_OTHER = 8


@dataclass(frozen=True)
class CreateRequest:
    """Parameters of a CREATE call."""

    kind: str
    num_pairs: int
    min_fidelity: float = 0.0
    max_time_ns: int = 0  # 0: no deadline
    purpose_id: int = 0
    priority: int = 1
    atomic: bool = False
    consecutive: bool = True
    random_basis: bool = False
    remote_node_id: int = 0

    def as_packet(self) -> pk.Packet:
        return pk.make(
            "CREATE", remote_node_id=self.remote_node_id, min_fidelity=pk.fixed_point(self.min_fidelity, 16),
            max_time=min(int(self.max_time_ns // 1_000_000), 0xFFFF), purpose_id=self.purpose_id,
            number=self.num_pairs, priority=self.priority, type=int(self.kind == "M"),
            atomic=int(self.atomic), consecutive=int(self.consecutive),
        )


@dataclass
class OkRecord:
    node: str
    kind: str
    create_id: int
    origin: str
    seq: int
    aid: tuple[int, int]
    goodness: float
    time_ns: int
    directional: bool
    outcome: int | None = None
    basis: str | None = None
    alpha: float = 0.0

    @property
    def entanglement_id(self) -> tuple[int, int, int]:
        return (NODE_IDS["A"], NODE_IDS["B"], self.seq)

    def as_packet(self) -> pk.Packet:
        good = pk.fixed_point(min(max(self.goodness, 0.0), 1.0), 16)
        if self.kind == "K":
            return pk.make("OK_K", type=pk.TYPE_OK_K, create_id=self.create_id, lqid=1,
                           directional=int(self.directional), seq=self.seq, purpose_id=0,
                           remote_node_id=NODE_IDS["B" if self.node == "A" else "A"], goodness=good,
                           goodness_time=(self.time_ns // 1_000_000) & 0xFFFF)
        return pk.make("OK_M", type=pk.TYPE_OK_M, create_id=self.create_id, outcome=self.outcome or 0,
                       basis=BASIS_LIST.index(self.basis) if self.basis else 0, directional=int(self.directional),
                       seq=self.seq, purpose_id=0, remote_node_id=NODE_IDS["B" if self.node == "A" else "A"],
                       goodness=good)


@dataclass
class ErrRecord:
    node: str
    code: ErrorCode
    create_id: int
    origin: str
    time_ns: int
    seq_low: int = 0
    seq_high: int = 0

    def as_packet(self) -> pk.Packet:
        return pk.make("ERR", type=pk.TYPE_ERR, create_id=self.create_id, err=int(self.code),
                       seq_range=int(self.seq_high != self.seq_low), seq_low=self.seq_low,
                       seq_high=self.seq_high, origin_id=NODE_IDS[self.origin])


@dataclass
class EgpConfig:
    test_fraction: float = 0.05
    qber_window: int = 2000
    cycles_per_attempt: dict[str, float] = field(default_factory=lambda: {"K": 1.1, "M": 1.0})
    processing_ns: int = 1_000
    mux_bound: int = 16
    expire_max_retries: int = 50
    storage_qubits: int = 1


class UpperLayer:
    """Receiver of OK and error records; override to consume them."""

    def on_ok(self, rec: OkRecord) -> None:
        pass

    def on_error(self, rec: ErrRecord) -> None:
        pass

    def on_request_done(self, node: str, create_id: int, time_ns: int) -> None:
        pass


@dataclass
class _Origin:
    """Bookkeeping the originating node keeps for its own requests."""

    request: CreateRequest
    create_time_ns: int
    item: QueueItem | None = None
    held: list[OkRecord] = field(default_factory=list)


@dataclass
class _PendingExpire:
    packet: pk.Packet
    retries: int = 0
    timer: EventHandle | None = None


@dataclass(frozen=True)
class AttemptPlan:
    """What a node intends to do from a given cycle on, absent new events."""

    item: QueueItem | None
    next_allowed: int

    def key(self):
        if self.item is None:
            return (None, self.next_allowed)
        return (self.item.aid, self.item.kind, self.item.alpha, self.next_allowed)


class EGP:
    def __init__(self, name: str, sim: Simulator, lp: pm.LinkPhysics, hw: LinkHardware,
                 dqp: DistributedQueue, scheduler, feu: feu_mod.Feu, streams: Streams,
                 send_peer: Callable[[pk.Packet], None], cfg: EgpConfig | None = None,
                 upper: UpperLayer | None = None):
        self.name = name
        self.peer = "B" if name == "A" else "A"
        self.sim = sim
        self.lp = lp
        self.hw = hw
        self.device = hw.devices[name]
        self.dqp = dqp
        self.scheduler = scheduler
        self.feu = feu
        self.streams = streams
        self._send_peer = send_peer
        self.cfg = cfg or EgpConfig()
        self.upper = upper or UpperLayer()
        T = lp.cycle_ns
        self.k_stride = max(1, math.ceil((2 * lp.delay_max_ns + self.cfg.processing_ns) / T))
        self.seq_expected = 0
        self.next_allowed = 0
        self.pending: dict[int, PollResponse] = {}
        self.disposition: dict[int, str] = {}
        self.delivered: dict[int, tuple[tuple[int, int], int, str]] = {}
        self._pre_expired: set[int] = set()
        self._expires: dict[int, _PendingExpire] = {}
        self._next_create_id = 0
        self.origin_requests: dict[int, _Origin] = {}
        self.peer_memory: tuple[int, int] | None = None
        self.retained = 0
        self._mem_timer: EventHandle | None = None
        self._mem_retries = 0
        self.carbon_seq: int | None = None
        self._moving: dict[int, tuple[QueueItem, int, int]] = {}
        self.stats = {"attempts": 0, "successes": 0, "stale": 0, "gaps": 0, "tests": 0, "unknown": 0,
                      "timeouts": 0, "expire_sent": 0, "expire_received": 0, "gen_fail": 0}

    # ---- CREATE ---------------------------------------------------------

    def create(self, req: CreateRequest) -> tuple[int | None, ErrorCode | None]:
        """Validate and enqueue a request; returns (create_id, None) or (None, error)."""
        if req.kind not in ("K", "M") or req.num_pairs < 1 or req.num_pairs >= 1 << 16:
            return None, ErrorCode.UNSUPP
        if not 0.0 <= req.min_fidelity <= 1.0 or not 1 <= req.priority < NUM_QUEUES:
            return None, ErrorCode.UNSUPP
        storage = self.cfg.storage_qubits
        if req.kind == "K" and (req.atomic or not req.consecutive) and req.num_pairs > storage:
            return None, ErrorCode.MEMEXCEEDED
        f_min = quantize_fidelity(req.min_fidelity)
        alpha = self.feu.alpha_for(req.kind, f_min)
        if alpha is None:
            return None, ErrorCode.UNSUPP
        e = self.cfg.cycles_per_attempt[req.kind]
        if req.max_time_ns > 0:
            if self.feu.min_completion_ns(req.kind, f_min, req.num_pairs, e) > req.max_time_ns:
                return None, ErrorCode.UNSUPP
        cid = self._next_create_id
        self._next_create_id = (cid + 1) % (1 << 16)
        T = self.lp.cycle_ns
        now_cycle = self.sim.now // T
        item = QueueItem(
            qid=req.priority, qseq=0, origin=self.name, create_id=cid, kind=req.kind,
            num_pairs=req.num_pairs, min_fidelity=f_min, purpose_id=req.purpose_id, priority=req.priority,
            schedule_cycle=0,
            timeout_cycle=now_cycle + math.ceil(req.max_time_ns / T) if req.max_time_ns > 0 else 0,
            consecutive=req.consecutive, atomic=req.atomic, random_basis=req.random_basis,
            est_cycles_per_pair=int(math.ceil(self.feu.cycles_per_pair(alpha, e))),
            create_time_ns=self.sim.now,
        )
        self.origin_requests[cid] = _Origin(req, self.sim.now, item)
        self.dqp.add(item, lambda status, it, cid=cid: self._on_add(cid, status, it))
        return cid, None

    def _on_add(self, cid: int, status: str, item: QueueItem | None) -> None:
        if status == ADD_OK:
            return
        code = ErrorCode.DENIED if status == ADD_REJECTED else ErrorCode.ERR_NOTIME
        self.origin_requests.pop(cid, None)
        self.upper.on_error(ErrRecord(self.name, code, cid, self.name, self.sim.now))

    # ---- memory advertisement ------------------------------------------

    def free_storage(self) -> int:
        return max(0, self.cfg.storage_qubits - self.retained)

    def start(self) -> None:
        self.advertise_memory()

    def advertise_memory(self) -> None:
        if self._mem_timer is not None:
            self._mem_timer.cancel()
        self._mem_retries = 0
        self._send_mem()

    def _send_mem(self) -> None:
        self._send_peer(pk.make("MEM", type=pk.MEM_REQ, cms=1, strg=min(self.free_storage(), 15)))
        wait = 2 * (2 * self.lp.delay_ab_ns) + self.lp.cycle_ns
        self._mem_timer = self.sim.schedule(self.sim.now + wait, self._mem_timeout)

    def _mem_timeout(self) -> None:
        self._mem_retries += 1
        self._send_mem()

    def retain(self) -> None:
        """Mark one storage qubit as held by the application."""
        if self.retained >= self.cfg.storage_qubits:
            raise ValueError("no storage qubit left to retain")
        self.retained += 1
        self.advertise_memory()

    def release(self) -> None:
        if self.retained == 0:
            raise ValueError("no retained storage qubit")
        self.retained -= 1
        self.advertise_memory()

    def _handle_mem(self, pkt: pk.Packet) -> None:
        self.peer_memory = (pkt["cms"], pkt["strg"])
        if pkt["type"] == pk.MEM_REQ:
            self._send_peer(pk.make("MEM", type=pk.MEM_ACK, cms=1, strg=min(self.free_storage(), 15)))
        elif self._mem_timer is not None:
            self._mem_timer.cancel()
            self._mem_timer = None

    # ---- polling --------------------------------------------------------

    def reinit_blocked(self, cycle: int) -> bool:
        """True if a keep-type attempt at ``cycle`` would overlap a carbon re-init window."""
        d = self.lp.device
        T = self.lp.cycle_ns
        start = cycle * T
        end = start + self.k_stride * T
        n = (end - 1) // d.reinit_period_ns
        return n * d.reinit_period_ns + d.reinit_cost_ns > start

    def first_unblocked(self, cycle: int) -> int:
        d = self.lp.device
        T = self.lp.cycle_ns
        while self.reinit_blocked(cycle):
            n = (cycle * T + self.k_stride * T - 1) // d.reinit_period_ns
            cycle = max(cycle + 1, -(-(n * d.reinit_period_ns + d.reinit_cost_ns) // T))
        return cycle

    def _eligible(self, item: QueueItem) -> bool:
        if item.kind == "K":
            return self.free_storage() > 0 and self.peer_memory is not None and self.peer_memory[1] > 0
        return True

    def _alpha(self, item: QueueItem) -> float:
        if item.alpha is None:
            item.alpha = self.feu.alpha_for(item.kind, item.min_fidelity)
            if item.alpha is None:
                item.alpha = self.feu.table.alphas[0]
        return item.alpha

    def selected(self, cycle: int) -> QueueItem | None:
        """The request NEXT would serve at ``cycle`` (no timing constraints applied)."""
        ready = [it for it in self.dqp.items() if it.ready(cycle) and self._eligible(it)]
        item = self.scheduler.select(ready)
        if item is not None:
            self._alpha(item)
        return item

    def plan(self, cycle: int) -> AttemptPlan:
        return AttemptPlan(self.selected(cycle), self.next_allowed)

    def _expire_timeouts(self, cycle: int) -> None:
        for it in [it for it in self.dqp.items() if it.timed_out(cycle)]:
            self.dqp.remove(it.aid)
            self._request_ended(it, ErrorCode.ERR_TIMEOUT)

    def next_change_cycle(self, cycle: int) -> int | None:
        """Earliest cycle after ``cycle`` at which queue readiness or timeouts change."""
        best = None
        for it in self.dqp.items():
            for c in (it.schedule_cycle, it.timeout_cycle + 1 if it.timeout_cycle > 0 else None):
                if c is not None and c > cycle and (best is None or c < best):
                    best = c
        return best

    def test_round(self, cycle: int) -> bool:
        q = self.cfg.test_fraction
        return q > 0.0 and self.streams.u("test", cycle) < q

    def poll(self, cycle: int) -> PollResponse:
        self._expire_timeouts(cycle)
        if cycle < self.next_allowed:
            return NO_ATTEMPT
        item = self.selected(cycle)
        if item is None:
            return NO_ATTEMPT
        if item.kind == "K" and self.reinit_blocked(cycle):
            return NO_ATTEMPT
        test = self.test_round(cycle)
        if test:
            mechanics = "M"
            basis = BASIS_LIST[int(self.streams.u("testbasis", cycle) * 3)]
        elif item.kind == "M":
            mechanics = "M"
            basis = BASIS_LIST[int(self.streams.u(f"basis:{self.name}", cycle) * 3)] if item.random_basis else "Z"
        else:
            mechanics = "K"
            basis = "Z"
        if mechanics == "M" and item.kind == "M" and len(self.pending) >= self.cfg.mux_bound:
            return NO_ATTEMPT
        self.scheduler.on_service(item)
        if item.kind == "K":
            self.next_allowed = cycle + self.k_stride
        resp = PollResponse(True, item.aid, mechanics, item.alpha, basis, test, cycle % 1024)
        self.pending[cycle] = resp
        self.stats["attempts"] += 1
        return resp

    def skipped(self, plan: AttemptPlan, count: int, last_cycle: int | None) -> None:
        """Apply the effect of ``count`` quiet attempts under ``plan`` that were skipped."""
        if count <= 0 or plan.item is None:
            return
        self.scheduler.on_service(plan.item)
        self.stats["attempts"] += count
        if plan.item.kind == "K" and last_cycle is not None:
            self.next_allowed = last_cycle + self.k_stride

    def handle_gen_fail(self, cycle: int) -> None:
        self.pending.pop(cycle, None)
        self.stats["gen_fail"] += 1

    # ---- results --------------------------------------------------------

    def handle_result(self, res: MhpResult) -> None:
        attempt = self.pending.pop(res.cycle, None)
        for c in [c for c in self.pending if c < res.cycle]:
            del self.pending[c]
        if attempt is not None and attempt.test:
            shared = self.hw.shared_outcomes(res.cycle)
        else:
            shared = None
        if res.error or res.outcome == 0:
            self._gap(res.seq, res.aid)
            return
        s = res.seq
        if seq_diff(s, self.seq_expected) < 0:
            self.stats["stale"] += 1
            return
        self._gap(s, res.aid)
        self.seq_expected = (s + 1) % SEQ_MOD
        self.stats["successes"] += 1
        if s in self._pre_expired:
            self._pre_expired.discard(s)
            self.disposition[s] = "expire"
            return
        if attempt is not None and attempt.test:
            self.disposition[s] = "test"
            self.stats["tests"] += 1
            if shared is not None:
                kind = "K"
                item = self.dqp.get(res.aid)
                if item is not None:
                    kind = item.kind
                self.feu.record_test(kind, attempt.basis, feu_mod.OUTCOME_BELL[res.outcome], *shared)
            if self.name == "B":
                self.hw.forget_outcomes(res.cycle)
            return
        item = self.dqp.get(res.aid)
        if item is None or attempt is None:
            self.stats["unknown"] += 1
            self._discard(s, res.aid)
            return
        if item.timed_out(res.cycle):
            self.dqp.remove(item.aid)
            self._request_ended(item, ErrorCode.ERR_TIMEOUT, seq=s)
            self._discard(s, res.aid, item)
            return
        self.delivered[s] = (item.aid, item.create_id, item.origin)
        self.disposition[s] = "ok"
        item.pairs_left -= 1
        if item.kind == "K":
            self._deliver_keep(res, item, s)
        else:
            self._deliver_measure(res, item, attempt, s)
        if item.pairs_left <= 0:
            self.dqp.remove(item.aid)

    def _discard(self, s: int, aid: tuple[int, int], item: QueueItem | None = None) -> None:
        self.disposition[s] = "discard"
        if self.device.electron.occupied:
            self.hw.registry.discard(self.device.electron)
        self._send_expire(s, aid, item)

    def _gap(self, seq: int, aid: tuple[int, int]) -> None:
        if seq_diff(seq, self.seq_expected) <= 0:
            return
        item = self.dqp.get(aid)
        low = self.seq_expected
        x = low
        while x != seq:
            if x in self._pre_expired:
                self._pre_expired.discard(x)
            self.disposition[x] = "expire"
            self._send_expire(x, aid if item is not None else (0, 0), item)
            x = (x + 1) % SEQ_MOD
        self.stats["gaps"] += 1
        self.seq_expected = seq
        origin = item.origin if item is not None else self.name
        cid = item.create_id if item is not None else 0
        self.upper.on_error(ErrRecord(self.name, ErrorCode.ERR_EXPIRE, cid, origin, self.sim.now,
                                      low, (seq - 1) % SEQ_MOD))

    def _resume_cycle(self, cycle: int, outcome: int) -> int:
        d = self.lp.device
        wait = 2 * self.lp.delay_max_ns + d.move_ns + d.reinit_cost_ns
        if outcome == 2:
            wait += self.device.gate("electron_single").duration_ns + self.lp.delay_ab_ns
        return cycle + math.ceil(wait / self.lp.cycle_ns)

    def _deliver_keep(self, res: MhpResult, item: QueueItem, s: int) -> None:
        self.next_allowed = max(self.next_allowed, self._resume_cycle(res.cycle, res.outcome))
        if not self.device.electron.occupied:
            # the heralded state is gone; count the pair as undeliverable
            self.disposition[s] = "discard"
            self.delivered.pop(s, None)
            self._send_expire(s, item.aid, item)
            return
        t = self.sim.now
        if item.origin == self.name and res.outcome == 2:
            t = self.device.correct(t)
        t_end = self.device.move_to_memory(t)
        self.carbon_seq = s
        self._moving[s] = (item, res.outcome, t_end)
        self.sim.schedule(t_end, self._move_done, s, item, res.outcome)

    def _move_done(self, s: int, item: QueueItem, outcome: int) -> None:
        self._moving.pop(s, None)
        if self.disposition.get(s) != "ok":
            if self.carbon_seq == s:
                self.release_carbon(s)
            return
        rec = OkRecord(self.name, "K", item.create_id, item.origin, s, item.aid,
                       self.feu.predicted_fidelity("K", item.alpha), self.sim.now,
                       directional=item.origin == self.name, alpha=item.alpha)
        self._emit_ok(item, rec)

    def _deliver_measure(self, res: MhpResult, item: QueueItem, attempt: PollResponse, s: int) -> None:
        m = res.measurement if res.measurement is not None else 0
        if item.origin == self.name and res.outcome == 2 and attempt.basis in ("X", "Y"):
            m ^= 1
        rec = OkRecord(self.name, "M", item.create_id, item.origin, s, item.aid,
                       self.feu.predicted_fidelity("M", item.alpha), self.sim.now,
                       directional=item.origin == self.name, outcome=m, basis=attempt.basis, alpha=item.alpha)
        self._emit_ok(item, rec)

    def _emit_ok(self, item: QueueItem, rec: OkRecord) -> None:
        if item.consecutive:
            self.upper.on_ok(rec)
        else:
            held = self._held(item)
            held.append(rec)
        if item.pairs_left <= 0 and not self._moving_for(item):
            self._request_ended(item, None)

    def _moving_for(self, item: QueueItem) -> bool:
        return any(it is item for it, _, _ in self._moving.values())

    def _held(self, item: QueueItem) -> list[OkRecord]:
        if not hasattr(item, "_held"):
            item._held = []  # type: ignore[attr-defined]
        return item._held  # type: ignore[attr-defined]

    def _request_ended(self, item: QueueItem, code: ErrorCode | None, seq: int = 0) -> None:
        for rec in self._held(item):
            self.upper.on_ok(rec)
        self._held(item).clear()
        if code is not None:
            self.stats["timeouts"] += code == ErrorCode.ERR_TIMEOUT
            self.upper.on_error(ErrRecord(self.name, code, item.create_id, item.origin, self.sim.now, seq, seq))
        if item.origin == self.name:
            self.origin_requests.pop(item.create_id, None)
        self.upper.on_request_done(self.name, item.create_id if item.origin == self.name else -1, self.sim.now)

    def release_carbon(self, seq: int) -> None:
        """Free the memory qubit if it still holds pair ``seq``."""
        if self.carbon_seq == seq:
            self.hw.registry.discard(self.device.carbon)
            self.carbon_seq = None

    # ---- EXPIRE ---------------------------------------------------------

    def _send_expire(self, s: int, aid: tuple[int, int], item: QueueItem | None) -> None:
        self.stats["expire_sent"] += 1
        origin = item.origin if item is not None else self.name
        pkt = pk.make("EXPIRE", qid=aid[0], qseq=aid[1], origin_id=NODE_IDS[origin],
                      create_id=item.create_id if item is not None else 0, seq=s)
        pe = self._expires.get(s)
        if pe is not None and pe.timer is not None:
            pe.timer.cancel()
        pe = self._expires[s] = _PendingExpire(pkt)
        self._transmit_expire(s, pe)

    def _transmit_expire(self, s: int, pe: _PendingExpire) -> None:
        self._send_peer(pe.packet)
        wait = 2 * (2 * self.lp.delay_ab_ns) + self.lp.cycle_ns
        pe.timer = self.sim.schedule(self.sim.now + wait, self._expire_timeout, s)

    def _expire_timeout(self, s: int) -> None:
        pe = self._expires.get(s)
        if pe is None:
            return
        if pe.retries >= self.cfg.expire_max_retries:
            log.warning("%s: EXPIRE for seq %d never acknowledged", self.name, s)
            del self._expires[s]
            return
        pe.retries += 1
        self._transmit_expire(s, pe)

    def _handle_expire(self, pkt: pk.Packet) -> None:
        s = pkt["seq"]
        self.stats["expire_received"] += 1
        ack_aid = (0, 0)
        if seq_diff(s, self.seq_expected) < 0:
            if self.disposition.get(s) == "ok":
                aid, cid, origin = self.delivered[s]
                ack_aid = aid
                self.disposition[s] = "expire"
                self.release_carbon(s)
                self.upper.on_error(ErrRecord(self.name, ErrorCode.ERR_EXPIRE, cid, origin, self.sim.now, s, s))
        else:
            self._pre_expired.add(s)
        self._send_peer(pk.make("EXPIRE_ACK", qid=ack_aid[0], qseq=ack_aid[1], seq=s))

    def _handle_expire_ack(self, pkt: pk.Packet) -> None:
        s = pkt["seq"]
        pe = self._expires.pop(s, None)
        if pe is None:
            return
        if pe.timer is not None:
            pe.timer.cancel()
        aid = (pkt["qid"], pkt["qseq"])
        if aid == (0, 0) or self.disposition.get(s) == "ok":
            return
        item = self.dqp.get(aid)
        if item is None:
            return
        # The peer counted this pair against the request; count it here too.
        item.pairs_left -= 1
        if item.pairs_left <= 0:
            self.dqp.remove(item.aid)
            if not self._moving_for(item):
                self._request_ended(item, None)

    # ---- control plane ---------------------------------------------------

    def handle_peer(self, pkt: pk.Packet) -> None:
        if pkt.kind == "DQP":
            self.dqp.handle(pkt)
        elif pkt.kind == "EXPIRE":
            self._handle_expire(pkt)
        elif pkt.kind == "EXPIRE_ACK":
            self._handle_expire_ack(pkt)
        elif pkt.kind == "MEM":
            self._handle_mem(pkt)
        else:
            log.warning("%s: unexpected %s packet", self.name, pkt.kind)

    def quiescent(self) -> bool:
        """No request, handshake or recovery message outstanding."""
        return (len(self.dqp) == 0 and not self.dqp.busy() and not self._expires and not self._moving
                and self._mem_timer is None)
