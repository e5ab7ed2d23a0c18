"""Runs one scenario end to end and returns its report."""
from __future__ import annotations

import logging

from qlinksim.channel import Trace
from qlinksim.egp import EgpConfig
from qlinksim.harness.config import CLASSES, CYCLES_PER_ATTEMPT, ScenarioConfig, WorkloadConfig
from qlinksim.harness.metrics import Collector, MetricsReport, build_report
from qlinksim.harness.workload import WorkloadGenerator
from qlinksim.link import Link, LinkOptions

log = logging.getLogger(__name__)

SETTLE_NS = 50_000_000  # lets replies, moves and EXPIRE retransmissions finish after the last cycle
QUEUE_SAMPLE_PRIORITY = 3


def make_link(scn: ScenarioConfig, collector: Collector | None = None, trace: Trace | None = None) -> Link:
    egp_cfg = EgpConfig(test_fraction=scn.test_fraction, qber_window=scn.qber_window,
                        cycles_per_attempt=dict(CYCLES_PER_ATTEMPT[scn.preset]))
    opts = LinkOptions(scheduler=scn.scheduler, p_loss=scn.p_loss, p_gen_fail=scn.p_gen_fail,
                       alpha_override=scn.alpha_override, fast_forward=scn.fast_forward, egp=egp_cfg)
    link = Link(scn.physics(), scn.seed, opts, upper=collector, trace=trace)
    if collector is not None:
        collector.attach(link)
    return link


def run_scenario(scn: ScenarioConfig, wl: WorkloadConfig, trace: Trace | None = None) -> MetricsReport:
    """Simulate ``scn.duration_s`` with ``wl``, then drain the queues for up to ``scn.drain_s``."""
    col = Collector()
    link = make_link(scn, col, trace)
    duration_ns = int(round(scn.duration_s * 1e9))
    end_ns = duration_ns + int(round(scn.drain_s * 1e9))

    def on_create(arrival, cid, err):
        kind = CLASSES[arrival.cls][0]
        col.register(arrival.origin, cid, arrival.cls, kind, arrival.request.num_pairs, link.sim.now, err)

    gen = WorkloadGenerator(link, scn, wl, on_create)
    link.start()
    gen.start(-(-duration_ns // link.T))
    sample_ns = int(round(scn.queue_sample_s * 1e9))
    if sample_ns > 0:
        def sample():
            col.sample_queues()
            if link.sim.now + sample_ns <= end_ns:
                link.sim.schedule(link.sim.now + sample_ns, sample, priority=QUEUE_SAMPLE_PRIORITY)
        link.sim.schedule(0, sample, priority=QUEUE_SAMPLE_PRIORITY)
    link.run(duration_ns)
    if end_ns > duration_ns:
        _drain(link, col, end_ns)
    link.end_cycle = link.sim.now // link.T  # no further attempts
    link.sim.run_until(link.sim.now + SETTLE_NS)
    return build_report(col, link, scn.seed, scn.duration_s)


def _drain(link: Link, col: Collector, end_ns: int) -> None:
    """Keep cycling without new requests until every request has ended or time runs out."""
    step = max(link.T, 10_000_000)
    t = link.sim.now
    while t < end_ns:
        if all(r.status != "live" for r in col.requests.values()) and link.quiescent():
            return
        t = min(end_ns, t + step)
        link.run(t)
