"""Wiring of one A-H-B link and the MHP cycle driver.

Long stretches of failed attempts are the bulk of any run. When both
nodes are in step and follow the same plan, the driver looks ahead with
the vectorized hit scan: every cycle before the first herald, loss or
generation-failure draw is known to fail quietly, so its only effects
(attempt counts and nuclear dephasing) are applied in one step. The
result is identical to running every cycle; ``fast_forward=False``
does exactly that.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qlinksim import feu as feu_mod
from qlinksim import kernels
from qlinksim import physmodel as pm
from qlinksim.channel import ChannelConfig, ClassicalChannel, Trace
from qlinksim.des import Simulator
from qlinksim.dqp import DistributedQueue
from qlinksim.egp import EGP, AttemptPlan, EgpConfig, UpperLayer
from qlinksim.mhp import NODES, LinkHardware, Midpoint, NodeMHP
from qlinksim.rng import Streams
from qlinksim.scheduler import make_scheduler

CYCLE_PRIORITY = 0
PRUNE_EVERY = 4096


@dataclass
class LinkOptions:
    scheduler: str = "fcfs"
    wfq_weights: dict[int, float] | None = None
    p_loss: float = 0.0
    p_gen_fail: float = 0.0
    alpha_override: float | None = None
    fast_forward: bool = True
    dqp_window: int = 8
    egp: EgpConfig | None = None


class Link:
    def __init__(self, lp: pm.LinkPhysics, seed: int, options: LinkOptions | None = None,
                 upper: UpperLayer | None = None, trace: Trace | None = None,
                 feu_table: feu_mod.FeuTable | None = None):
        self.lp = lp
        self.options = opt = options or LinkOptions()
        self.sim = Simulator()
        self.streams = Streams(seed)
        self.hw = LinkHardware(lp, self.streams)
        self.trace = trace
        T = lp.cycle_ns
        self.T = T
        delays = {"A>H": lp.delay_a_ns, "B>H": lp.delay_b_ns, "H>A": lp.delay_a_ns, "H>B": lp.delay_b_ns,
                  "A>B": lp.delay_ab_ns, "B>A": lp.delay_ab_ns}
        self.channels = {name: ClassicalChannel(self.sim, name, ChannelConfig(d, opt.p_loss), self.streams,
                                                trace=trace)
                         for name, d in delays.items()}
        self.midpoint = Midpoint(self.sim, self.hw, lp, {"A": self.channels["H>A"], "B": self.channels["H>B"]})
        table = feu_table if feu_table is not None else feu_mod.build_table(lp)
        egp_cfg = opt.egp or EgpConfig()
        self.mhp: dict[str, NodeMHP] = {}
        self.egp: dict[str, EGP] = {}
        for n in NODES:
            peer = "B" if n == "A" else "A"
            sched = make_scheduler(opt.scheduler, opt.wfq_weights)
            to_peer = self.channels[f"{n}>{peer}"]
            dqp = DistributedQueue(self.sim, n, n == "A", to_peer.send, lp.delay_ab_ns, T, sched,
                                   window=opt.dqp_window)
            feu = feu_mod.Feu(lp, table=table, alpha_override=opt.alpha_override, window=egp_cfg.qber_window)
            egp = EGP(n, self.sim, lp, self.hw, dqp, sched, feu, self.streams, to_peer.send, egp_cfg, upper)
            mhp = NodeMHP(n, self.sim, self.hw, lp, self.channels[f"{n}>H"], self.streams, opt.p_gen_fail)
            mhp.poll = egp.poll
            mhp.on_result = egp.handle_result
            mhp.on_gen_fail = egp.handle_gen_fail
            self.channels[f"{n}>H"].receiver = lambda pkt, n=n: self.midpoint.on_gen(n, pkt)
            self.channels[f"H>{n}"].receiver = mhp.on_reply
            self.channels[f"{peer}>{n}"].receiver = egp.handle_peer
            self.mhp[n] = mhp
            self.egp[n] = egp
        self.end_cycle = 0
        self.cycles_run = 0
        self.cycles_skipped = 0
        self.next_mismatches = 0
        self._last_prune = 0
        self._started = False
        self._stopped_at: int | None = None

    # ---- running --------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for n in NODES:
            self.egp[n].start()
        self.sim.schedule(0, self._on_cycle, 0, priority=CYCLE_PRIORITY, target=("cycle", 0))

    def run(self, duration_ns: int) -> None:
        """Run until ``duration_ns`` of simulated time (cumulative)."""
        self.start()
        self.end_cycle = max(self.end_cycle, -(-int(duration_ns) // self.T))
        self._resume_cycles()
        self.sim.run_until(int(duration_ns))

    def _resume_cycles(self) -> None:
        # a driver that stopped at the previous end resumes here
        if self._stopped_at is not None and self._stopped_at < self.end_cycle:
            c = self._stopped_at
            self._stopped_at = None
            self.sim.schedule(max(self.sim.now, c * self.T), self._on_cycle, c, priority=CYCLE_PRIORITY,
                              target=("cycle", c))

    def _schedule_cycle(self, c: int) -> None:
        if c >= self.end_cycle:
            self._stopped_at = c
            return
        self.sim.schedule(c * self.T, self._on_cycle, c, priority=CYCLE_PRIORITY, target=("cycle", c))

    def _on_cycle(self, c: int) -> None:
        if c >= self.end_cycle:
            self._stopped_at = c
            return
        if c - self._last_prune >= PRUNE_EVERY:
            self.hw.prune(c - PRUNE_EVERY)
            self._last_prune = c
        if self.options.fast_forward:
            nxt = self._fast_forward(c)
            if nxt is not None:
                self._schedule_cycle(nxt)
                return
        self._run_cycle(c)
        self._schedule_cycle(c + 1)

    def _run_cycle(self, c: int) -> None:
        self.cycles_run += 1
        ra = self.mhp["A"].cycle(c)
        rb = self.mhp["B"].cycle(c)
        if ra.flag and rb.flag and ra.aid != rb.aid:
            self.next_mismatches += 1

    # ---- fast forward ---------------------------------------------------

    def _horizon(self, c: int) -> int:
        """First cycle that cannot be skipped because something else happens before it."""
        h = self.end_cycle
        for ev in self.sim.pending():
            if isinstance(ev.target, tuple):
                if ev.target[0] == "cycle":
                    continue
                # in-flight messages of a failed attempt change nothing the skip depends on
                if ev.target[0] == "attempt" and self.hw.quiet(ev.target[1]):
                    continue
            hc = -(-ev.time // self.T) if ev.priority < CYCLE_PRIORITY else ev.time // self.T + 1
            h = min(h, hc)
        for n in NODES:
            nc = self.egp[n].next_change_cycle(c)
            if nc is not None:
                h = min(h, nc)
        return max(h, c)

    def _grid(self, egp: EGP, plan: AttemptPlan, c: int, horizon: int) -> np.ndarray:
        start = max(c, plan.next_allowed)
        if start >= horizon:
            return np.empty(0, dtype=np.int64)
        if plan.item.kind == "M":
            return np.arange(start, horizon, dtype=np.int64)
        stride = egp.k_stride
        d = self.lp.device
        out = []
        x = egp.first_unblocked(start)
        while x < horizon:
            # attempts run at a fixed stride until the next re-init window blocks them
            n = (x * self.T + stride * self.T - 1) // d.reinit_period_ns
            period_end = (n + 1) * d.reinit_period_ns
            last = (period_end - stride * self.T) // self.T  # last start whose span ends in this period
            stop = min(horizon, last + 1)
            if stop > x:
                seg = np.arange(x, stop, stride, dtype=np.int64)
                out.append(seg)
                x = int(seg[-1]) + stride
            x = egp.first_unblocked(x)
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def _fast_forward(self, c: int) -> int | None:
        """Skip quiet cycles from ``c``; returns the next cycle to process, or None to run ``c``."""
        ea, eb = self.egp["A"], self.egp["B"]
        if not (ea.seq_expected == eb.seq_expected == self.midpoint.counter):
            return None
        ea._expire_timeouts(c)
        eb._expire_timeouts(c)
        pa, pb = ea.plan(c), eb.plan(c)
        if pa.key() != pb.key():
            return None
        horizon = self._horizon(c)
        if horizon <= c:
            return None
        if pa.item is None:
            self.cycles_skipped += horizon - c
            return horizon
        item = pa.item
        if item.kind == "M":
            # replies still outstanding at a poll; the bound must never bind while skipping
            outstanding = max(self.lp.reply_wait_ns(n) for n in NODES) // self.T
            if outstanding >= ea.cfg.mux_bound:
                return None
        grid = self._grid(ea, pa, c, horizon)
        if grid.size == 0:
            self.cycles_skipped += horizon - c
            return horizon
        keys, thresholds = self._hit_keys(item.alpha)
        first = kernels.first_hit(keys, thresholds, grid)
        if first == 0:
            if grid[0] == c:
                return None
            self.cycles_skipped += int(grid[0]) - c
            return int(grid[0])
        count = grid.size if first < 0 else first
        last = int(grid[count - 1])
        for n, egp in (("A", ea), ("B", eb)):
            self.hw.skip_attempts(n, count, item.alpha)
            egp.skipped(pa, count, last)
        for name in ("A>H", "B>H", "H>A", "H>B"):
            ch = self.channels[name]
            ch.sent += count
            ch.delivered += count
        nxt = horizon if first < 0 else int(grid[first])
        self.cycles_skipped += nxt - c
        return nxt

    def _hit_keys(self, alpha: float) -> tuple[list[int], list[float]]:
        s = self.streams
        keys = [s.key("herald")]
        thr = [self.hw.table.p_success(alpha)]
        if self.options.p_loss > 0.0:
            for name in ("A>H", "B>H", "H>A", "H>B"):
                keys.append(s.key(f"loss:{name}:attempt"))
                thr.append(self.options.p_loss)
        if self.options.p_gen_fail > 0.0:
            for n in NODES:
                keys.append(s.key(f"genfail:{n}"))
                thr.append(self.options.p_gen_fail)
        return keys, thr

    # ---- inspection -----------------------------------------------------

    def quiescent(self) -> bool:
        return all(self.egp[n].quiescent() for n in NODES)
