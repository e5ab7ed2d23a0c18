"""Fidelity estimation: model predictions, alpha selection and test-round QBER."""
from __future__ import annotations

import bisect
import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from qlinksim import physmodel as pm
from qlinksim import qstate as qs

log = logging.getLogger(__name__)

PSI_PLUS = qs.bell_state("psi+")
PSI_MINUS = qs.bell_state("psi-")
BASES = ("X", "Y", "Z")

# Expected product of the two outcomes' parities (+1 equal, -1 opposite) per basis.
BELL_CORRELATION = {
    "psi+": {"X": +1, "Y": +1, "Z": -1},
    "psi-": {"X": -1, "Y": -1, "Z": -1},
}
OUTCOME_BELL = {1: "psi+", 2: "psi-"}


def is_error(bell: str, basis: str, m_a: int, m_b: int) -> bool:
    """True when outcomes violate the ideal correlation of ``bell`` in ``basis``."""
    equal = m_a == m_b
    return equal != (BELL_CORRELATION[bell][basis] > 0)


def qber_to_fidelity(qx: float, qy: float, qz: float) -> float:
    """Fidelity with the reference Bell state from its three QBERs, clamped to [0, 1]."""
    for q in (qx, qy, qz):
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"QBER {q} outside [0, 1]")
    f = 1.0 - (qx + qy + qz) / 2.0
    if f < 0.0 or f > 1.0:
        log.info("clamping fidelity estimate %.4f into [0, 1]", f)
        f = min(1.0, max(0.0, f))
    return f


class QberWindow:
    """Rolling per-basis error counts over the last ``size`` test outcomes."""

    def __init__(self, size: int = 2000):
        if size <= 0:
            raise ValueError("window size must be positive")
        self.size = size
        self._samples: deque[tuple[str, bool]] = deque()
        self._n = {b: 0 for b in BASES}
        self._err = {b: 0 for b in BASES}

    def __len__(self) -> int:
        return len(self._samples)

    def add(self, basis: str, error: bool) -> None:
        if basis not in self._n:
            raise ValueError(f"unknown basis {basis!r}")
        self._samples.append((basis, bool(error)))
        self._n[basis] += 1
        self._err[basis] += int(error)
        if len(self._samples) > self.size:
            b, e = self._samples.popleft()
            self._n[b] -= 1
            self._err[b] -= int(e)

    def count(self, basis: str) -> int:
        return self._n[basis]

    def qber(self, basis: str) -> float | None:
        n = self._n[basis]
        return self._err[basis] / n if n else None

    def fidelity(self) -> float | None:
        qs_ = [self.qber(b) for b in BASES]
        if any(q is None for q in qs_):
            return None
        return qber_to_fidelity(*qs_)

    def fidelity_std(self) -> float | None:
        """Binomial standard error of :meth:`fidelity`."""
        var = 0.0
        for b in BASES:
            n = self._n[b]
            if not n:
                return None
            q = self._err[b] / n
            var += q * (1 - q) / n
        return 0.5 * math.sqrt(var)


def _herald(lp: pm.LinkPhysics, alpha: float) -> pm.HeraldDistribution:
    return lp.herald_table().get(alpha, alpha)


def predict_herald_fidelity(lp: pm.LinkPhysics, alpha: float) -> float:
    """Fidelity of the heralded electron pair with its announced Bell state."""
    d = _herald(lp, alpha)
    p1, p2 = d.probabilities[1], d.probabilities[2]
    f = p1 * qs.fidelity(d.states[1], PSI_PLUS) + p2 * qs.fidelity(d.states[2], PSI_MINUS)
    return float(f / (p1 + p2))


def predict_keep_fidelity(lp: pm.LinkPhysics, alpha: float, origin: str = "A") -> float:
    """Fidelity of a stored pair when the second node finishes its move.

    Heralded state, idle wait for the REPLY at each node, origin-side
    correction of psi-, then the move into memory at both nodes.
    """
    d = _herald(lp, alpha)
    total = 0.0
    for r in (1, 2):
        reg = pm.Registry()
        nodes = {n: pm.NodeDevice(n, lp.device, reg) for n in ("A", "B")}
        reg.place(d.states[r], [nodes["A"].electron, nodes["B"].electron], 0)
        ends = []
        for n, dev in nodes.items():
            t = lp.reply_wait_ns(n)
            if r == 2 and n == origin:
                t = dev.correct(t)
            ends.append(dev.move_to_memory(t))
        rho = reg.state([nodes["A"].carbon, nodes["B"].carbon], max(ends))
        total += d.probabilities[r] * qs.fidelity(rho, PSI_PLUS)
    return float(total / (d.probabilities[1] + d.probabilities[2]))


def analytic_qbers(rho: np.ndarray, bell: str, f0: float, f1: float) -> dict[str, float]:
    """Exact per-basis QBER of a two-qubit state under noisy readout."""
    out = {}
    for b in BASES:
        p = qs.measure_basis_povm(b, f0, f1)
        err = 0.0
        for ma, ea in enumerate(p.elements):
            for mb, eb in enumerate(p.elements):
                if is_error(bell, b, ma, mb):
                    err += float(np.real(np.trace(np.kron(ea, eb) @ rho)))
        out[b] = min(1.0, max(0.0, err))
    return out


def predict_measure_fidelity(lp: pm.LinkPhysics, alpha: float) -> float:
    """QBER-derived fidelity of measure-directly pairs, readout noise included."""
    d = _herald(lp, alpha)
    total = 0.0
    for r in (1, 2):
        q = analytic_qbers(d.states[r], OUTCOME_BELL[r], lp.device.readout_f0, lp.device.readout_f1)
        total += d.probabilities[r] * qber_to_fidelity(q["X"], q["Y"], q["Z"])
    return float(total / (d.probabilities[1] + d.probabilities[2]))


DEFAULT_ALPHAS = tuple(float(a) for a in np.round(np.geomspace(0.005, 0.5, 48), 6))


@dataclass(frozen=True)
class FeuTable:
    """Predicted success probability and fidelities on an alpha grid."""

    alphas: tuple[float, ...]
    p_success: tuple[float, ...]
    fidelity_keep: tuple[float, ...]
    fidelity_measure: tuple[float, ...]

    def rows(self) -> list[dict[str, float]]:
        return [
            {"alpha": a, "p_success": p, "fidelity_keep": fk, "fidelity_measure": fm}
            for a, p, fk, fm in zip(self.alphas, self.p_success, self.fidelity_keep, self.fidelity_measure)
        ]


@lru_cache(maxsize=16)
def build_table(lp: pm.LinkPhysics, alphas: tuple[float, ...] = DEFAULT_ALPHAS) -> FeuTable:
    table = lp.herald_table()
    return FeuTable(
        alphas=tuple(alphas),
        p_success=tuple(table.p_success(a) for a in alphas),
        fidelity_keep=tuple(predict_keep_fidelity(lp, a) for a in alphas),
        fidelity_measure=tuple(predict_measure_fidelity(lp, a) for a in alphas),
    )


class Feu:
    """Maps requested minimum fidelity to a bright-state population.

    Predictions come from the calibration table, linearly interpolated in
    alpha; the inverse is a binary search for the largest alpha whose
    predicted fidelity still meets the request.
    """

    def __init__(self, lp: pm.LinkPhysics, table: FeuTable | None = None, alpha_override: float | None = None,
                 window: int = 2000):
        self.lp = lp
        self.table = table if table is not None else build_table(lp)
        self.alpha_override = alpha_override
        self.windows = {"K": QberWindow(window), "M": QberWindow(window)}
        self._alpha_cache: dict[tuple[str, float], float | None] = {}

    def _series(self, kind: str) -> tuple[float, ...]:
        if kind == "K":
            return self.table.fidelity_keep
        if kind == "M":
            return self.table.fidelity_measure
        raise ValueError(f"unknown request type {kind!r}")

    def predicted_fidelity(self, kind: str, alpha: float) -> float:
        return _interp(self.table.alphas, self._series(kind), alpha)

    def p_success(self, alpha: float) -> float:
        return self.lp.herald_table().p_success(alpha)

    def alpha_for(self, kind: str, f_min: float) -> float | None:
        """Largest alpha meeting ``f_min``, or None if no alpha does."""
        if self.alpha_override is not None:
            return self.alpha_override
        key = (kind, float(f_min))
        if key in self._alpha_cache:
            return self._alpha_cache[key]
        # fidelity is not monotone at small alpha (dark counts), so scan down from the top
        alphas = self.table.alphas
        series = self._series(kind)
        ok = [i for i, f in enumerate(series) if f >= f_min]
        if not ok:
            result = None
        elif ok[-1] == len(alphas) - 1:
            result = alphas[-1]
        else:
            lo, hi = alphas[ok[-1]], alphas[ok[-1] + 1]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if self.predicted_fidelity(kind, mid) >= f_min:
                    lo = mid
                else:
                    hi = mid
            result = round(lo, 9)
        self._alpha_cache[key] = result
        return result

    def cycles_per_pair(self, alpha: float, cycles_per_attempt: float) -> float:
        return cycles_per_attempt / self.p_success(alpha)

    def min_completion_ns(self, kind: str, f_min: float, pairs: int, cycles_per_attempt: float) -> float | None:
        alpha = self.alpha_for(kind, f_min)
        if alpha is None:
            return None
        return pairs * self.cycles_per_pair(alpha, cycles_per_attempt) * self.lp.cycle_ns

    def record_test(self, kind: str, basis: str, bell: str, m_a: int, m_b: int) -> None:
        self.windows[kind].add(basis, is_error(bell, basis, m_a, m_b))

    def estimate(self, kind: str) -> float | None:
        return self.windows[kind].fidelity()


def _interp(xs: tuple[float, ...], ys: tuple[float, ...], x: float) -> float:
    if x <= xs[0]:
        return ys[0]
    if x >= xs[-1]:
        return ys[-1]
    i = bisect.bisect_right(xs, x)
    x0, x1 = xs[i - 1], xs[i]
    w = (x - x0) / (x1 - x0)
    return ys[i - 1] * (1 - w) + ys[i] * w
