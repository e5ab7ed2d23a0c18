"""Hardware-style validation: correlations of fixed-basis measurements on heralded pairs.

Every cycle both nodes attempt at the same alpha. Heralded pairs are
measured right away; node A first applies a Z rotation by a fixed angle.
Bases cycle X, Y, Z over successive pairs. The outcome correlations give
Pr(m_A != m_B) per basis and the fidelity with the heralded Bell state.
Readout errors are inverted using the known readout fidelities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qlinksim import feu as feu_mod
from qlinksim import kernels
from qlinksim import physmodel as pm
from qlinksim import qstate as qs
from qlinksim.rng import Streams

BASES = ("X", "Y", "Z")
SIGN = {1: +1, 2: -1}  # psi+ for r = 1, psi- for r = 2


@dataclass
class BasisCorrelation:
    n: int
    p_unequal: float
    p_unequal_std: float
    correlation: float
    correlation_std: float


@dataclass
class ValidationResult:
    alpha: float
    pairs: int
    attempts: int
    p_success: float
    p_success_std: float
    fidelity: float
    fidelity_std: float
    predicted_fidelity: float
    correlations: dict[int, dict[str, BasisCorrelation]] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for r, per in sorted(self.correlations.items()):
            for b, c in per.items():
                out.append({"alpha": self.alpha, "herald": r, "basis": b, "n": c.n, "p_unequal": c.p_unequal,
                            "p_unequal_std": c.p_unequal_std, "correlation": c.correlation,
                            "correlation_std": c.correlation_std})
        return out


def correlation_fidelity(sign: int, xx: float, yy: float, zz: float) -> float:
    """Fidelity with psi+ (sign +1) or psi- (sign -1) from the three correlators."""
    return 0.25 * (1 + sign * xx + sign * yy - zz)


def _corrected(m_a: np.ndarray, m_b: np.ndarray, f0: float, f1: float) -> tuple[float, float, float, float]:
    """Readout-corrected <AB> with its std, plus raw Pr(unequal) and its std."""
    n = m_a.size
    a = f0 + f1 - 1.0
    b = f0 - f1
    ea, eb, eab = m_a.mean(), m_b.mean(), (m_a * m_b).mean()
    ta = (ea - b) / a
    tb = (eb - b) / a
    corr = (eab - a * b * (ta + tb) - b * b) / (a * a)
    p_neq = float(np.mean(m_a != m_b))
    p_std = math.sqrt(max(p_neq * (1 - p_neq), 1e-12) / n)
    corr_std = 2 * p_std / (a * a)
    return float(corr), corr_std, p_neq, p_std


def validation_experiment(lp: pm.LinkPhysics, alpha: float, n_pairs: int, seed: int = 0,
                          rotation_rad: float = 0.0, max_cycles: int = 10**9) -> ValidationResult:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n_pairs < 3:
        raise ValueError("need at least one pair per basis")
    streams = Streams(seed)
    table = lp.herald_table()
    dist = table.get(alpha, alpha)
    p = dist.probabilities[1] + dist.probabilities[2]
    key = streams.key("herald")
    dev = lp.device
    rot = np.diag([1.0, np.exp(1j * rotation_rad)]).astype(complex)
    samples: dict[int, dict[str, list[tuple[int, int]]]] = {1: {b: [] for b in BASES}, 2: {b: [] for b in BASES}}
    c = 0
    found = 0
    while found < n_pairs:
        c = kernels.first_below_range(key, c, max_cycles, p)
        if c < 0:
            raise RuntimeError("cycle budget exhausted before collecting the pairs")
        r = table.sample(alpha, alpha, streams.u("herald", c))
        basis = BASES[found % 3]
        reg = pm.Registry()
        ea, eb = pm.Qubit("A.e", dev.electron_t1_ns, dev.electron_t2_ns), pm.Qubit(
            "B.e", dev.electron_t1_ns, dev.electron_t2_ns)
        reg.place(dist.states[r], [ea, eb], 0)
        if rotation_rad:
            reg.unitary([ea], rot, 0)
        rho = reg.state([ea, eb], max(lp.reply_wait_ns("A"), lp.reply_wait_ns("B")))
        m_a, m_b = pm.sample_measure_pair(rho, basis, basis, dev, streams.u("meas", 2 * c),
                                          streams.u("meas", 2 * c + 1))
        samples[r][basis].append((1 - 2 * m_a, 1 - 2 * m_b))
        found += 1
        c += 1
    attempts = c
    corr: dict[int, dict[str, BasisCorrelation]] = {}
    fids = []
    for r in (1, 2):
        per = {}
        for b in BASES:
            arr = np.array(samples[r][b], dtype=float).reshape(-1, 2)
            if arr.shape[0] == 0:
                continue
            v, v_std, pn, pn_std = _corrected(arr[:, 0], arr[:, 1], dev.readout_f0, dev.readout_f1)
            per[b] = BasisCorrelation(arr.shape[0], pn, pn_std, v, v_std)
        corr[r] = per
        if len(per) == 3:
            f = correlation_fidelity(SIGN[r], per["X"].correlation, per["Y"].correlation, per["Z"].correlation)
            f_std = 0.25 * math.sqrt(sum(per[b].correlation_std ** 2 for b in BASES))
            weight = sum(per[b].n for b in BASES)
            fids.append((f, f_std, weight))
    total = sum(w for _, _, w in fids)
    fidelity = sum(f * w for f, _, w in fids) / total
    fidelity_std = math.sqrt(sum((s * w / total) ** 2 for _, s, w in fids))
    ps = n_pairs / attempts
    return ValidationResult(
        alpha=alpha, pairs=n_pairs, attempts=attempts, p_success=ps,
        p_success_std=math.sqrt(ps * (1 - ps) / attempts), fidelity=fidelity, fidelity_std=fidelity_std,
        predicted_fidelity=feu_mod.predict_herald_fidelity(lp, alpha), correlations=corr,
    )


def ideal_correlations(rho: np.ndarray) -> dict[str, float]:
    """Exact <B x B> of a two-qubit state for B in X, Y, Z."""
    paulis = {"X": qs.X, "Y": qs.Y, "Z": qs.Z}
    return {b: float(np.real(np.trace(np.kron(p, p) @ rho))) for b, p in paulis.items()}
