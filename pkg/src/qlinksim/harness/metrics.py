"""Metric collection over one run: OK/error records, pair fidelity, invariants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from qlinksim import feu as feu_mod
from qlinksim import qstate as qs
from qlinksim.egp import ErrorCode, ErrRecord, OkRecord, UpperLayer
from qlinksim.mhp import NODES, SEQ_MOD

TERMINAL_ERRORS = {ErrorCode.UNSUPP, ErrorCode.MEMEXCEEDED, ErrorCode.OUTOFMEM, ErrorCode.DENIED,
                   ErrorCode.ERR_NOTIME, ErrorCode.ERR_TIMEOUT}

REQUEST_COLUMNS = ("origin", "create_id", "cls", "kind", "num_pairs", "create_time_s", "end_time_s", "status",
                   "error", "pairs_ok", "latency_s", "scaled_latency_s")
PAIR_COLUMNS = ("seq", "cls", "kind", "origin", "create_id", "time_s", "fidelity", "basis_a", "basis_b",
                "outcome_a", "outcome_b", "alpha")


@dataclass
class RequestRecord:
    origin: str
    create_id: int
    cls: str
    kind: str
    num_pairs: int
    create_time_ns: int
    end_time_ns: int | None = None
    status: str = "live"  # live, done, error
    error: int = 0
    pairs_ok: int = 0

    def row(self) -> dict:
        latency = None if self.end_time_ns is None or self.status != "done" else (
            (self.end_time_ns - self.create_time_ns) / 1e9)
        return {
            "origin": self.origin, "create_id": self.create_id, "cls": self.cls, "kind": self.kind,
            "num_pairs": self.num_pairs, "create_time_s": self.create_time_ns / 1e9,
            "end_time_s": None if self.end_time_ns is None else self.end_time_ns / 1e9,
            "status": self.status, "error": self.error, "pairs_ok": self.pairs_ok,
            "latency_s": latency, "scaled_latency_s": None if latency is None else latency / self.num_pairs,
        }


@dataclass
class PairRecord:
    seq: int
    cls: str
    kind: str
    origin: str
    create_id: int
    time_ns: int
    fidelity: float | None = None
    basis_a: str | None = None
    basis_b: str | None = None
    outcome_a: int | None = None
    outcome_b: int | None = None
    alpha: float = 0.0

    def row(self) -> dict:
        return {"seq": self.seq, "cls": self.cls, "kind": self.kind, "origin": self.origin,
                "create_id": self.create_id, "time_s": self.time_ns / 1e9, "fidelity": self.fidelity,
                "basis_a": self.basis_a, "basis_b": self.basis_b, "outcome_a": self.outcome_a,
                "outcome_b": self.outcome_b, "alpha": self.alpha}


class Collector(UpperLayer):
    """Receives both nodes' upward records and keeps what the report needs."""

    def __init__(self):
        self.link = None
        self.requests: dict[tuple[str, int], RequestRecord] = {}
        self.oks: dict[str, dict[int, OkRecord]] = {n: {} for n in NODES}
        self.pairs: dict[int, PairRecord] = {}
        self.errors: list[ErrRecord] = []
        self.error_counts: dict[str, int] = {}
        self.queue_series: list[tuple[float, int, int, int]] = []
        self.ok_count = {n: 0 for n in NODES}

    def attach(self, link) -> None:
        self.link = link

    def register(self, origin: str, cid: int | None, cls: str, kind: str, k: int, now: int,
                 err: ErrorCode | None) -> None:
        if cid is None:
            # rejected synchronously; keyed by a negative id so it still counts
            cid = -1 - len(self.requests)
        rec = RequestRecord(origin, cid, cls, kind, k, now)
        if err is not None:
            rec.status, rec.error, rec.end_time_ns = "error", int(err), now
            self._count_error(err)
        self.requests[(origin, cid)] = rec

    def _count_error(self, code: ErrorCode) -> None:
        name = ErrorCode(code).name
        self.error_counts[name] = self.error_counts.get(name, 0) + 1

    # upward interface

    def on_ok(self, rec: OkRecord) -> None:
        self.ok_count[rec.node] += 1
        self.oks[rec.node][rec.seq] = rec
        other = self.oks["B" if rec.node == "A" else "A"].get(rec.seq)
        if rec.node == rec.origin:
            req = self.requests.get((rec.origin, rec.create_id))
            if req is not None:
                req.pairs_ok += 1
        if other is None or other.aid != rec.aid:
            return
        req = self.requests.get((rec.origin, rec.create_id))
        cls = req.cls if req is not None else "?"
        a, b = (rec, other) if rec.node == "A" else (other, rec)
        pair = PairRecord(rec.seq, cls, rec.kind, rec.origin, rec.create_id, self.link.sim.now, alpha=rec.alpha)
        if rec.kind == "K":
            pair.fidelity = self._keep_fidelity(rec.seq)
        else:
            pair.basis_a, pair.basis_b = a.basis, b.basis
            pair.outcome_a, pair.outcome_b = a.outcome, b.outcome
        self.pairs[rec.seq] = pair

    def _keep_fidelity(self, seq: int) -> float | None:
        ea, eb = self.link.egp["A"], self.link.egp["B"]
        if ea.carbon_seq != seq or eb.carbon_seq != seq:
            return None
        dev = self.link.hw.devices
        rho = self.link.hw.registry.state([dev["A"].carbon, dev["B"].carbon], self.link.sim.now)
        f = qs.fidelity(rho, feu_mod.PSI_PLUS)
        ea.release_carbon(seq)
        eb.release_carbon(seq)
        return f

    def on_error(self, rec: ErrRecord) -> None:
        self.errors.append(rec)
        self._count_error(rec.code)
        if rec.code == ErrorCode.ERR_EXPIRE and rec.seq_low == rec.seq_high:
            # a delivered pair withdrawn after the fact
            self.pairs.pop(rec.seq_low, None)
        if rec.code in TERMINAL_ERRORS and rec.node == rec.origin:
            req = self.requests.get((rec.origin, rec.create_id))
            if req is not None and req.status == "live":
                req.status, req.error, req.end_time_ns = "error", int(rec.code), rec.time_ns

    def on_request_done(self, node: str, create_id: int, time_ns: int) -> None:
        if create_id < 0:
            return
        req = self.requests.get((node, create_id))
        if req is not None and req.status == "live":
            req.status, req.end_time_ns = "done", time_ns

    def sample_queues(self) -> None:
        dqp = self.link.egp["A"].dqp
        self.queue_series.append((self.link.sim.now / 1e9, dqp.queue_length(1), dqp.queue_length(2),
                                  dqp.queue_length(3)))


# ---- summaries ---------------------------------------------------------

def mean(xs) -> float | None:
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def stderr(xs) -> float | None:
    xs = [x for x in xs if x is not None]
    if len(xs) < 2:
        return None
    m = sum(xs) / len(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1) / len(xs))


def qber_fidelity(pairs: list[PairRecord]) -> tuple[float | None, dict[str, float | None], int]:
    """Fidelity with psi+ from basis-matched measured pairs, plus per-basis QBERs."""
    n = {b: 0 for b in feu_mod.BASES}
    err = {b: 0 for b in feu_mod.BASES}
    for p in pairs:
        if p.basis_a is None or p.basis_a != p.basis_b:
            continue
        n[p.basis_a] += 1
        err[p.basis_a] += feu_mod.is_error("psi+", p.basis_a, p.outcome_a, p.outcome_b)
    q = {b: (err[b] / n[b] if n[b] else None) for b in feu_mod.BASES}
    total = sum(n.values())
    if any(v is None for v in q.values()):
        return None, q, total
    return feu_mod.qber_to_fidelity(q["X"], q["Y"], q["Z"]), q, total


def relative_difference(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    m = max(abs(a), abs(b))
    return 0.0 if m == 0 else abs(a - b) / m


@dataclass
class MetricsReport:
    seed: int
    summary: dict = field(default_factory=dict)
    requests: list[dict] = field(default_factory=list)
    pairs: list[dict] = field(default_factory=list)
    queue_series: list[tuple[float, int, int, int]] = field(default_factory=list)
    invariants: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(bool(v) for k, v in self.invariants.items() if k.startswith("check_"))


def class_summary(pairs: list[PairRecord], requests: list[RequestRecord], duration_s: float, cls_filter,
                  origin: str | None = None) -> dict:
    ps = [p for p in pairs if cls_filter(p.cls) and p.time_ns <= duration_s * 1e9
          and (origin is None or p.origin == origin)]
    rs = [r for r in requests if cls_filter(r.cls) and r.status == "done" and (origin is None or r.origin == origin)]
    kinds = {p.kind for p in ps}
    out = {"pairs": len(ps), "throughput": len(ps) / duration_s if duration_s > 0 else None}
    if kinds == {"M"}:
        f, q, n = qber_fidelity(ps)
        out.update(fidelity=f, qber_x=q["X"], qber_y=q["Y"], qber_z=q["Z"], basis_matched=n)
    else:
        out["fidelity"] = mean(p.fidelity for p in ps if p.kind == "K")
    lat = [r.row()["latency_s"] for r in rs]
    out["latency"] = mean(lat)
    out["scaled_latency"] = mean(r.row()["scaled_latency_s"] for r in rs)
    out["requests_done"] = len(rs)
    return out


def build_report(col: Collector, link, seed: int, duration_s: float) -> MetricsReport:
    pairs = sorted(col.pairs.values(), key=lambda p: p.time_ns)
    requests = list(col.requests.values())
    rep = MetricsReport(seed)
    rep.requests = [r.row() for r in sorted(requests, key=lambda r: (r.create_time_ns, r.origin, r.create_id))]
    rep.pairs = [p.row() for p in pairs]
    rep.queue_series = list(col.queue_series)
    summary = {"duration_s": duration_s, "seed": seed, "classes": {}}
    for cls in sorted({r.cls for r in requests}):
        summary["classes"][cls] = class_summary(pairs, requests, duration_s, lambda c, cls=cls: c == cls)
        summary["classes"][cls]["by_origin"] = {
            o: class_summary(pairs, requests, duration_s, lambda c, cls=cls: c == cls, origin=o) for o in NODES}
    for kind in ("K", "M"):
        summary[f"fidelity_{kind}"] = class_summary(
            [p for p in pairs if p.kind == kind], requests, duration_s, lambda c: True)["fidelity"]
    summary["throughput_total"] = sum(1 for p in pairs if p.time_ns <= duration_s * 1e9) / duration_s \
        if duration_s > 0 else None
    summary["ok_counts"] = dict(col.ok_count)
    summary["error_counts"] = dict(sorted(col.error_counts.items()))
    summary["heralds"] = link.midpoint.successes
    summary["attempts"] = dict(link.hw.attempts)
    summary["test_estimate"] = {k: link.egp["A"].feu.estimate(k) for k in ("K", "M")}
    summary["cycles_run"] = link.cycles_run
    summary["cycles_skipped"] = link.cycles_skipped
    summary["requests"] = {
        s: sum(1 for r in requests if r.status == s) for s in ("live", "done", "error")}
    rep.summary = summary
    rep.invariants = check_invariants(col, link)
    return rep


def check_invariants(col: Collector, link) -> dict:
    """Post-run conservation and consistency checks."""
    ea, eb = link.egp["A"], link.egp["B"]
    heralds = link.midpoint.successes
    res: dict = {"heralds": heralds}
    unaccounted = []
    mismatched = []
    if heralds <= SEQ_MOD:
        for s in range(heralds):
            da, db = ea.disposition.get(s), eb.disposition.get(s)
            if da is None or db is None:
                unaccounted.append(s)
            elif da == "ok" and db == "ok" and ea.delivered[s][0] != eb.delivered[s][0]:
                mismatched.append(s)
        res["seq_checked"] = True
    else:
        res["seq_checked"] = False
    res["unaccounted_seqs"] = len(unaccounted)
    res["mismatched_ok"] = len(mismatched)
    matched = sum(1 for s, d in ea.disposition.items() if d == "ok" and eb.disposition.get(s) == "ok")
    res["matched_pairs"] = matched
    res["live_requests"] = sum(1 for r in col.requests.values() if r.status == "live")
    res["next_mismatches"] = link.next_mismatches
    res["check_conservation"] = not unaccounted and matched <= heralds
    res["check_ok_consistency"] = not mismatched
    res["check_no_decode_errors"] = all(ch.decode_errors == 0 for ch in link.channels.values())
    return res
