"""Per-cycle Bernoulli request generator.

In every MHP cycle a class issues a CREATE for k pairs with probability
f * p_succ / (E * k). Arrivals are found by scanning the class's
counter-indexed uniforms for the k = 1 bound and thinning by the drawn k,
so the generator costs nothing on cycles without arrivals and its draws do
not depend on how the rest of the simulation advances.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from qlinksim import kernels
from qlinksim.egp import CreateRequest
from qlinksim.harness.config import CLASSES, ScenarioConfig, WorkloadConfig
from qlinksim.link import Link

WORKLOAD_PRIORITY = -1  # before the cycle's polls
SCAN_CHUNK = 1 << 20


@dataclass(frozen=True)
class Arrival:
    cycle: int
    cls: str
    origin: str
    request: CreateRequest


class WorkloadGenerator:
    def __init__(self, link: Link, scenario: ScenarioConfig, workload: WorkloadConfig,
                 on_create: Callable[[Arrival, int | None, object], None]):
        self.link = link
        self.workload = workload
        self.on_create = on_create
        self.rates: dict[str, float] = {}
        cpa = link.egp["A"].cfg.cycles_per_attempt
        feu = link.egp["A"].feu
        for cls, load in workload.loads.items():
            if load.fraction <= 0:
                continue
            kind = CLASSES[cls][0]
            alpha = feu.alpha_for(kind, workload.min_fidelity)
            if alpha is None:
                continue
            self.rates[cls] = load.fraction * feu.p_success(alpha) / cpa[kind]
        self.issued = 0

    def start(self, end_cycle: int) -> None:
        self.end_cycle = end_cycle
        for cls in sorted(self.rates):
            self._schedule_next(cls, 0)

    def _schedule_next(self, cls: str, start: int) -> None:
        s = self.link.streams
        key = s.key(f"workload:{cls}")
        q = min(1.0, self.rates[cls])
        c = start
        while c < self.end_cycle:
            stop = min(self.end_cycle, c + SCAN_CHUNK)
            hit = kernels.first_below_range(key, c, stop, q)
            if hit < 0:
                c = stop
                continue
            k = self._pairs(cls, hit)
            if s.u(f"workload:{cls}", hit) < q / k:
                self.link.sim.schedule(hit * self.link.T, self._fire, cls, hit, k, priority=WORKLOAD_PRIORITY,
                                       target=("workload", cls))
                return
            c = hit + 1

    def _pairs(self, cls: str, cycle: int) -> int:
        load = self.workload.loads[cls]
        if load.fixed_k or load.k_max == 1:
            return load.k_max
        u = self.link.streams.u(f"workload:{cls}:k", cycle)
        return 1 + min(load.k_max - 1, int(u * load.k_max))

    def _origin(self, cls: str, cycle: int) -> str:
        if self.workload.origin != "random":
            return self.workload.origin
        return "A" if self.link.streams.u(f"workload:{cls}:origin", cycle) < 0.5 else "B"

    def _fire(self, cls: str, cycle: int, k: int) -> None:
        kind, priority = CLASSES[cls]
        wl = self.workload
        req = CreateRequest(kind=kind, num_pairs=k, min_fidelity=wl.min_fidelity,
                            max_time_ns=int(round(wl.max_time_s * 1e9)), purpose_id=priority,
                            priority=priority, random_basis=kind == "M")
        origin = self._origin(cls, cycle)
        cid, err = self.link.egp[origin].create(req)
        self.issued += 1
        self.on_create(Arrival(cycle, cls, origin, req), cid, err)
        self._schedule_next(cls, cycle + 1)


def expected_rate(rate_k1: float, k_max: int, fixed: bool) -> float:
    """Mean CREATEs per cycle for a class with k = 1 rate ``rate_k1``."""
    if fixed or k_max == 1:
        return rate_k1 / k_max
    return rate_k1 * sum(1.0 / k for k in range(1, k_max + 1)) / k_max

