"""Midpoint heralding protocol: node cycles, GEN/REPLY exchange, midpoint matching.

:class:`LinkHardware` stands in for the physical world shared by both nodes
and the heralding station: it records what each node emitted in a cycle,
decides the heralding outcome and places the resulting electron state in
the joint-state registry. Protocol entities only exchange packets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from qlinksim import packets as pk
from qlinksim import physmodel as pm
from qlinksim.channel import ClassicalChannel
from qlinksim.des import Simulator
from qlinksim.rng import Streams

SEQ_MOD = 1 << 16
NODES = ("A", "B")


def seq_diff(a: int, b: int) -> int:
    """Signed distance a - b on the 16-bit sequence circle (half-range rule)."""
    d = (a - b) % SEQ_MOD
    return d - SEQ_MOD if d >= SEQ_MOD // 2 else d


@dataclass(frozen=True)
class PollResponse:
    """An EGP's answer to the per-cycle poll."""

    flag: bool
    aid: tuple[int, int] = (0, 0)
    mechanics: str = "K"  # "K": keep the electron; "M": measure it right after emission
    alpha: float = 0.0
    basis: str = "Z"
    test: bool = False
    pseq: int = 0

    def as_packet(self) -> pk.Packet:
        return pk.make("POLL", gen=int(self.flag), qid=self.aid[0], qseq=self.aid[1], pseq=self.pseq % 1024,
                       params=pk.fixed_point(self.alpha, 8) if self.flag else 0)


NO_ATTEMPT = PollResponse(False)


@dataclass(frozen=True)
class MhpResult:
    """What the MHP hands the EGP for each REPLY."""

    cycle: int
    outcome: int
    seq: int
    aid: tuple[int, int]
    error: int
    peer_aid: tuple[int, int]
    measurement: int | None = None

    def as_packet(self) -> pk.Packet:
        return pk.make("MHP_RESULT", ot=min(self.outcome, 3), seq=self.seq, qid=self.aid[0], qseq=self.aid[1],
                       err=self.error, qidp=self.peer_aid[0], qseqp=self.peer_aid[1])


@dataclass
class Emission:
    alpha: float
    mechanics: str
    basis: str


class LinkHardware:
    """Physical state of both nodes and the beam-splitter station."""

    def __init__(self, lp: pm.LinkPhysics, streams: Streams):
        self.lp = lp
        self.streams = streams
        self.registry = pm.Registry()
        self.devices = {n: pm.NodeDevice(n, lp.device, self.registry) for n in NODES}
        self.table = lp.herald_table()
        self._emissions: dict[int, dict[str, Emission]] = {}
        self._outcomes: dict[tuple[str, int], int] = {}
        self._test_outcomes: dict[int, tuple[int, int]] = {}
        self._results: dict[int, int] = {}
        self.heralds = 0
        self.attempts = {n: 0 for n in NODES}

    def _nuclear(self, node: str, alpha: float, count: int) -> None:
        carbon = self.devices[node].carbon
        if carbon.occupied and count > 0:
            p = pm.nuclear_dephasing_probability(alpha, self.lp.emission_a if node == "A" else self.lp.emission_b)
            self.registry.add_dephasing_factor(carbon, (1.0 - 2.0 * p) ** count)

    def emit(self, node: str, cycle: int, resp: PollResponse) -> None:
        """Record an emission; keep-type attempts reinitialize the electron."""
        self.attempts[node] += 1
        if resp.mechanics == "K":
            self.registry.discard(self.devices[node].electron)
        self._nuclear(node, resp.alpha, 1)
        self._emissions.setdefault(cycle, {})[node] = Emission(resp.alpha, resp.mechanics, resp.basis)

    def skip_attempts(self, node: str, count: int, alpha: float) -> None:
        """Account for ``count`` failed attempts that were not simulated one by one."""
        self.attempts[node] += count
        self._nuclear(node, alpha, count)

    def drop(self, cycle: int) -> None:
        """Forget a cycle's emissions without heralding (photon discarded)."""
        self._emissions.pop(cycle, None)

    def herald(self, cycle: int, now_ns: int) -> int:
        """Outcome of the midpoint measurement for a matched two-sided cycle."""
        em = self._emissions.pop(cycle)
        a, b = em["A"], em["B"]
        u = self.streams.u("herald", cycle)
        r = self.table.sample(a.alpha, b.alpha, u)
        self._results[cycle] = r
        if r == 0:
            return 0
        self.heralds += 1
        state = self.table.get(a.alpha, b.alpha).states[r]
        t_emit = cycle * self.lp.cycle_ns
        if a.mechanics == "K" and b.mechanics == "K":
            ea, eb = self.devices["A"].electron, self.devices["B"].electron
            self.registry.discard(ea)
            self.registry.discard(eb)
            self.registry.place(state, [ea, eb], t_emit)
        else:
            m_a, m_b = pm.sample_measure_pair(state, a.basis, b.basis, self.lp.device,
                                              self.streams.u("meas", 2 * cycle),
                                              self.streams.u("meas", 2 * cycle + 1))
            self._outcomes[("A", cycle)] = m_a
            self._outcomes[("B", cycle)] = m_b
            self._test_outcomes[cycle] = (m_a, m_b)
        return r

    def quiet(self, cycle: int) -> bool:
        """True if the attempt of ``cycle`` cannot herald a pair."""
        r = self._results.get(cycle)
        if r is not None:
            return r == 0
        em = self._emissions.get(cycle)
        if em is None or len(em) < 2:
            return True
        return self.table.sample(em["A"].alpha, em["B"].alpha, self.streams.u("herald", cycle)) == 0

    def take_outcome(self, node: str, cycle: int) -> int | None:
        """The node's own readout result for a measured attempt."""
        return self._outcomes.pop((node, cycle), None)

    def shared_outcomes(self, cycle: int) -> tuple[int, int] | None:
        """Both readout results of a test round, as exchanged between the nodes."""
        return self._test_outcomes.get(cycle)

    def forget_outcomes(self, cycle: int) -> None:
        self._test_outcomes.pop(cycle, None)

    def prune(self, before_cycle: int) -> None:
        """Discard records of cycles that can no longer be answered."""
        for c in [c for c in self._emissions if c < before_cycle]:
            del self._emissions[c]
        for k in [k for k in self._outcomes if k[1] < before_cycle]:
            del self._outcomes[k]
        for c in [c for c in self._test_outcomes if c < before_cycle]:
            del self._test_outcomes[c]
        for c in [c for c in self._results if c < before_cycle]:
            del self._results[c]


class Midpoint:
    """Heralding station: matches GENs per detection window and answers with REPLYs."""

    def __init__(self, sim: Simulator, hw: LinkHardware, lp: pm.LinkPhysics,
                 reply_channels: dict[str, ClassicalChannel]):
        self.sim = sim
        self.hw = hw
        self.lp = lp
        self.reply = reply_channels
        self.counter = 0
        self._windows: dict[int, dict[str, tuple[int, int]]] = {}
        self._last_processed = -1
        self.errors = {pk.ERR_QUEUE_MISMATCH: 0, pk.ERR_TIME_MISMATCH: 0, pk.ERR_NO_MESSAGE_OTHER: 0}
        self.successes = 0

    def on_gen(self, node: str, pkt: pk.Packet) -> None:
        cycle = (self.sim.now - self.lp.delay_ns(node)) // self.lp.cycle_ns
        aid = (pkt["qid"], pkt["qseq"])
        if cycle <= self._last_processed and cycle not in self._windows:
            self.hw.drop(cycle)
            self._send(node, cycle, pk.reply_ot(error=pk.ERR_TIME_MISMATCH), self.counter, aid, (0, 0))
            return
        win = self._windows.get(cycle)
        if win is None:
            win = self._windows[cycle] = {}
            deadline = cycle * self.lp.cycle_ns + self.lp.delay_max_ns
            self.sim.schedule(deadline, self._process, cycle, priority=2, target=("attempt", cycle))
        win[node] = aid

    def _process(self, cycle: int) -> None:
        win = self._windows.pop(cycle)
        self._last_processed = max(self._last_processed, cycle)
        if len(win) == 1:
            (node, aid), = win.items()
            self.hw.drop(cycle)
            self._send(node, cycle, pk.reply_ot(error=pk.ERR_NO_MESSAGE_OTHER), self.counter, aid, (0, 0))
            return
        a, b = win["A"], win["B"]
        if a != b:
            self.hw.drop(cycle)
            ot = pk.reply_ot(error=pk.ERR_QUEUE_MISMATCH)
            self._send("A", cycle, ot, self.counter, a, b)
            self._send("B", cycle, ot, self.counter, b, a)
            return
        r = self.hw.herald(cycle, self.sim.now)
        seq = self.counter
        if r:
            self.successes += 1
            self.counter = (self.counter + 1) % SEQ_MOD
        self._send("A", cycle, r, seq, a, b)
        self._send("B", cycle, r, seq, b, a)

    def _send(self, node: str, cycle: int, ot: int, seq: int, aid, peer) -> None:
        if ot & pk.OT_ERROR:
            self.errors[ot & 0b111] += 1
        pkt = pk.make("REPLY", ot=ot, seq=seq, qid=aid[0], qseq=aid[1], qidp=peer[0], qseqp=peer[1])
        self.reply[node].send(pkt, cycle=cycle)


class NodeMHP:
    """Per-node MHP: polls the EGP each cycle, emits, forwards REPLY results."""

    def __init__(self, name: str, sim: Simulator, hw: LinkHardware, lp: pm.LinkPhysics,
                 gen_channel: ClassicalChannel, streams: Streams, p_gen_fail: float = 0.0):
        self.name = name
        self.sim = sim
        self.hw = hw
        self.lp = lp
        self.gen_channel = gen_channel
        self.streams = streams
        self.p_gen_fail = p_gen_fail
        self.poll: Callable[[int], PollResponse] | None = None
        self.on_result: Callable[[MhpResult], None] | None = None
        self.on_gen_fail: Callable[[int], None] | None = None
        self.gen_failures = 0

    def gen_fails(self, cycle: int) -> bool:
        return self.p_gen_fail > 0.0 and self.streams.u(f"genfail:{self.name}", cycle) < self.p_gen_fail

    def cycle(self, cycle: int) -> PollResponse:
        resp = self.poll(cycle)
        if not resp.flag:
            return resp
        if self.gen_fails(cycle):
            self.gen_failures += 1
            self.on_gen_fail(cycle)
            return resp
        self.hw.emit(self.name, cycle, resp)
        self.gen_channel.send(pk.make("GEN", qid=resp.aid[0], qseq=resp.aid[1]), cycle=cycle)
        return resp

    def on_reply(self, pkt: pk.Packet) -> None:
        wait = self.lp.reply_wait_ns(self.name)
        cycle = (self.sim.now - wait) // self.lp.cycle_ns
        outcome, err = pk.split_reply_ot(pkt["ot"])
        m = self.hw.take_outcome(self.name, cycle) if outcome else None
        self.on_result(MhpResult(cycle, outcome, pkt["seq"], (pkt["qid"], pkt["qseq"]), err,
                                 (pkt["qidp"], pkt["qseqp"]), m))
