"""Classical control channels: fixed delay, Bernoulli loss, CSV trace."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, TextIO

from qlinksim import packets
from qlinksim.des import Simulator
from qlinksim.rng import Streams

SPEED_OF_LIGHT_FIBER_KM_S = 206_753.0


def fiber_delay_ns(length_km: float) -> int:
    """One-way propagation delay over ``length_km`` of fiber, rounded to ns."""
    if length_km < 0:
        raise ValueError("fiber length must be non-negative")
    return int(round(length_km / SPEED_OF_LIGHT_FIBER_KM_S * 1e9))


@dataclass(frozen=True)
class ChannelConfig:
    delay_ns: int
    p_loss: float = 0.0

    def __post_init__(self):
        if self.delay_ns < 0:
            raise ValueError("delay must be non-negative")
        if not 0.0 <= self.p_loss <= 1.0:
            raise ValueError("p_loss must lie in [0, 1]")


class Trace:
    """In-memory record of channel events, exportable as CSV."""

    COLUMNS = ("time_ns", "channel", "packet", "disposition")

    def __init__(self):
        self.rows: list[tuple[int, str, str, str]] = []

    def record(self, time: int, channel: str, kind: str, disposition: str) -> None:
        self.rows.append((time, channel, kind, disposition))

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.COLUMNS)
        w.writerows(self.rows)


Receiver = Callable[[packets.Packet], None]


class ClassicalChannel:
    """Unidirectional channel delivering encoded packets after a fixed delay.

    Loss is drawn from a counter-indexed stream. Messages tied to an attempt
    cycle pass that cycle as ``index`` so the draw does not depend on how
    many other messages were sent; other messages use a per-channel counter.
    Fixed delay keeps delivery FIFO.
    """

    def __init__(self, sim: Simulator, name: str, cfg: ChannelConfig, streams: Streams,
                 receiver: Receiver | None = None, trace: Trace | None = None):
        self.sim = sim
        self.name = name
        self.cfg = cfg
        self.receiver = receiver
        self.trace = trace
        self._attempt_stream = f"loss:{name}:attempt"
        self._control_stream = f"loss:{name}:control"
        self._streams = streams
        self._control_count = 0
        self.sent = 0
        self.dropped = 0
        self.delivered = 0
        self.decode_errors = 0

    @property
    def delay(self) -> int:
        return self.cfg.delay_ns

    def attempt_lost(self, cycle: int) -> bool:
        """Loss decision for the attempt message of ``cycle`` (pure, no side effects)."""
        p = self.cfg.p_loss
        return p > 0.0 and self._streams.u(self._attempt_stream, cycle) < p

    def send(self, pkt: packets.Packet, cycle: int | None = None) -> bool:
        """Encode and send ``pkt``. Returns False if the message is lost."""
        data = packets.encode(pkt)
        self.sent += 1
        p = self.cfg.p_loss
        if cycle is not None:
            lost = p > 0.0 and self._streams.u(self._attempt_stream, cycle) < p
        else:
            idx = self._control_count
            self._control_count += 1
            lost = p > 0.0 and self._streams.u(self._control_stream, idx) < p
        if self.trace is not None:
            self.trace.record(self.sim.now, self.name, pkt.kind, "drop" if lost else "send")
        if lost:
            self.dropped += 1
            return False
        self.sim.schedule(self.sim.now + self.cfg.delay_ns, self._deliver, pkt.kind, data,
                          target=None if cycle is None else ("attempt", cycle))
        return True

    def _deliver(self, kind: str, data: bytes) -> None:
        try:
            pkt = packets.decode(kind, data)
        except packets.CodecError:
            self.decode_errors += 1
            if self.trace is not None:
                self.trace.record(self.sim.now, self.name, kind, "decode_error")
            return
        self.delivered += 1
        if self.trace is not None:
            self.trace.record(self.sim.now, self.name, kind, "deliver")
        if self.receiver is not None:
            self.receiver(pkt)
