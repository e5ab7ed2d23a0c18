"""NV-centre node hardware and single-click heralding optics.

Qubit states live in a :class:`Registry` of joint density matrices. Each
node owns one communication qubit (electron spin) and one memory qubit
(carbon spin) tracked by :class:`NodeDevice`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from qlinksim import qstate as qs

NS_PER_S = 1_000_000_000


@dataclass(frozen=True)
class Gate:
    fidelity: float
    duration_ns: int


def _default_gates() -> dict[str, Gate]:
    return {
        "electron_single": Gate(1.0, 5),
        "ec_sqrt_x": Gate(0.992, 500_000),
        "carbon_rot_z": Gate(0.999, 20_000),
        "electron_init": Gate(0.95, 2_000),
        "carbon_init": Gate(0.95, 310_000),
    }


@dataclass(frozen=True)
class DeviceConfig:
    """Coherence times, gate table and memory bookkeeping durations (ns)."""

    electron_t1_ns: float = 2.86e6
    electron_t2_ns: float = 1.00e6
    carbon_t1_ns: float = math.inf
    carbon_t2_ns: float = 3.5e6
    gates: dict[str, Gate] = field(default_factory=_default_gates)
    readout_f0: float = 0.95
    readout_f1: float = 0.995
    readout_ns: int = 3_700
    move_ns: int = 1_040_000
    reinit_period_ns: int = 3_500_000
    reinit_cost_ns: int = 330_000

    def __post_init__(self) -> None:
        for name, g in self.gates.items():
            if g.duration_ns <= 0 or not 0.0 <= g.fidelity <= 1.0:
                raise ValueError(f"bad gate entry {name}: {g}")
        for v in (self.readout_ns, self.move_ns, self.reinit_period_ns, self.reinit_cost_ns):
            if v <= 0:
                raise ValueError("durations must be positive")
        for f in (self.readout_f0, self.readout_f1):
            if not 0.0 <= f <= 1.0:
                raise ValueError("readout fidelities must lie in [0, 1]")

    def __hash__(self) -> int:
        return hash((self.electron_t1_ns, self.electron_t2_ns, self.carbon_t1_ns, self.carbon_t2_ns,
                     tuple(sorted(self.gates.items())), self.readout_f0, self.readout_f1))


@dataclass(frozen=True)
class EmissionConfig:
    """Optical parameters of one node's arm plus the shared detectors."""

    two_photon_prob: float = 0.04
    tau_e_ns: float = 12.0
    t_w_ns: float = 25.0
    p_zero_phonon: float = 0.03
    p_collection: float = 0.014
    fiber_db_per_km: float = 5.0
    fiber_km: float = 0.001
    p_detection: float = 0.8
    dark_rate_per_s: float = 20.0
    sigma_phi_rad: float = math.radians(14.3) / math.sqrt(2)
    delta_omega_rad_per_s: float = 2 * math.pi * 377e3
    tau_d_ns: float = 82.0
    visibility: float = 0.9

    def __post_init__(self) -> None:
        for name in ("two_photon_prob", "p_zero_phonon", "p_collection", "p_detection", "visibility"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.fiber_km < 0:
            raise ValueError("fiber length must be non-negative")

    @property
    def p_two_photon_dephase(self) -> float:
        # A second emission reveals which-path information half the time.
        return self.two_photon_prob / 2

    @property
    def p_phase(self) -> float:
        return qs.phase_dephasing_param(self.sigma_phi_rad)

    @property
    def p_emission_loss(self) -> float:
        return math.exp(-self.t_w_ns / self.tau_e_ns)

    @property
    def p_collection_loss(self) -> float:
        return 1.0 - self.p_zero_phonon * self.p_collection

    @property
    def p_fiber_loss(self) -> float:
        return fiber_loss_probability(self.fiber_km, self.fiber_db_per_km)

    @property
    def p_dark(self) -> float:
        return -math.expm1(-self.t_w_ns * 1e-9 * self.dark_rate_per_s)

    @property
    def mu(self) -> float:
        return math.sqrt(self.visibility)

    @property
    def photon_efficiency(self) -> float:
        """Probability that an emitted photon reaches the beam splitter."""
        return (1 - self.p_emission_loss) * (1 - self.p_collection_loss) * (1 - self.p_fiber_loss)


def nuclear_dephasing_probability(alpha: float, cfg: EmissionConfig) -> float:
    """Per-attempt dephasing of a stored carbon spin."""
    x = cfg.delta_omega_rad_per_s * cfg.tau_d_ns * 1e-9
    return (alpha / 2) * (1 - math.exp(-(x**2) / 2))


def fiber_loss_probability(length_km: float, db_per_km: float) -> float:
    if length_km < 0:
        raise ValueError("fiber length must be non-negative")
    return 1.0 - 10 ** (-length_km * db_per_km / 10)


def spin_photon_state(alpha: float) -> np.ndarray:
    """sqrt(a)|0>_e|1>_p + sqrt(1-a)|1>_e|0>_p on (electron, photon)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha={alpha} must lie strictly between 0 and 1")
    psi = math.sqrt(alpha) * qs.ket(0, 1) + math.sqrt(1 - alpha) * qs.ket(1, 0)
    return qs.dm(psi)


def emit(alpha: float, cfg: EmissionConfig) -> np.ndarray:
    """Electron-photon state leaving the node, before the fiber."""
    rho = spin_photon_state(alpha)
    rho = qs.apply_kraus(rho, qs.kraus_dephasing(cfg.p_two_photon_dephase), [0])
    rho = qs.apply_kraus(rho, qs.kraus_dephasing(cfg.p_phase), [1])
    rho = qs.apply_kraus(rho, qs.kraus_amplitude_damping(cfg.p_emission_loss), [1])
    rho = qs.apply_kraus(rho, qs.kraus_amplitude_damping(cfg.p_collection_loss), [1])
    return rho


def fiber_damp(rho: np.ndarray, length_km: float, db_per_km: float, photon: int = 1) -> np.ndarray:
    """Photon loss in fiber as amplitude damping on ``photon``."""
    p = fiber_loss_probability(length_km, db_per_km)
    if p == 0.0:
        return rho
    return qs.apply_kraus(rho, qs.kraus_amplitude_damping(p), [photon])


def arm_state(alpha: float, cfg: EmissionConfig) -> np.ndarray:
    """Electron-photon state arriving at the beam splitter."""
    return fiber_damp(emit(alpha, cfg), cfg.fiber_km, cfg.fiber_db_per_km)


def joint_arrival_state(rho_a: np.ndarray, rho_b: np.ndarray) -> np.ndarray:
    """Combine two (electron, photon) states into (eA, eB, pA, pB)."""
    return qs.permute_qubits(np.kron(rho_a, rho_b), [0, 2, 1, 3])


def click_transition(p_detection: float, p_dark: float) -> np.ndarray:
    """T[ideal, observed] over click patterns (none, left, right, both)."""
    def one(clicked: bool) -> tuple[float, float]:
        # (P silent, P click) for a single detector.
        if clicked:
            return (1 - p_detection) * (1 - p_dark), 1 - (1 - p_detection) * (1 - p_dark)
        return 1 - p_dark, p_dark

    patterns = [(0, 0), (1, 0), (0, 1), (1, 1)]
    t = np.zeros((4, 4))
    for i, (l, r) in enumerate(patterns):
        pl = one(bool(l))
        pr = one(bool(r))
        for j, (ol, orr) in enumerate(patterns):
            t[i, j] = pl[ol] * pr[orr]
    return t


# Observed click pattern -> heralded outcome: left only is psi+, right only is psi-.
PATTERN_TO_OUTCOME = (0, 1, 2, 0)


@dataclass(frozen=True)
class HeraldDistribution:
    probabilities: tuple[float, float, float]
    states: tuple[np.ndarray | None, np.ndarray, np.ndarray]


def herald_distribution(joint: np.ndarray, cfg: EmissionConfig) -> HeraldDistribution:
    """Exact outcome probabilities and conditional electron states.

    ``joint`` is ordered (eA, eB, pA, pB). Returned states are on (eA, eB).
    """
    povm = qs.beamsplitter_povm(cfg.mu, photon_counting=False)
    trans = click_transition(cfg.p_detection, cfg.p_dark)
    branch = []
    for e in povm.elements:
        full = qs.embed(e, [2, 3], 4)
        sub = qs.partial_trace(full @ joint, [0, 1])
        branch.append((sub + sub.conj().T) / 2)
    probs = [0.0, 0.0, 0.0]
    unnorm: list[np.ndarray] = [np.zeros((4, 4), dtype=complex) for _ in range(3)]
    for i, b in enumerate(branch):
        for j in range(4):
            w = trans[i, j]
            if w == 0.0:
                continue
            r = PATTERN_TO_OUTCOME[j]
            unnorm[r] = unnorm[r] + w * b
    for r in range(3):
        probs[r] = float(np.real(np.trace(unnorm[r])))
    states: list[np.ndarray | None] = []
    for r in range(3):
        states.append(unnorm[r] / probs[r] if probs[r] > 0 else None)
    return HeraldDistribution((probs[0], probs[1], probs[2]), (states[0], states[1], states[2]))


def midpoint_detect(joint: np.ndarray, cfg: EmissionConfig, rng) -> tuple[int, np.ndarray | None]:
    """Sample one heralding event.

    The ideal click pattern is drawn from the beam-splitter POVM, then each
    detector is independently suppressed (efficiency) or triggered (dark
    count). The returned electron state is conditioned on the observed
    pattern only, since the ideal pattern is not observable.
    """
    povm = qs.beamsplitter_povm(cfg.mu, photon_counting=False)
    ideal, _ = qs.measure_povm(joint, povm, rng, targets=[2, 3])
    trans = click_transition(cfg.p_detection, cfg.p_dark)
    observed = qs.sample_index(trans[ideal], rng.random())
    r = PATTERN_TO_OUTCOME[observed]
    dist = herald_distribution(joint, cfg)
    return r, dist.states[r]


class HeraldTable:
    """Cached herald distributions keyed by (alpha_A, alpha_B)."""

    def __init__(self, cfg_a: EmissionConfig, cfg_b: EmissionConfig):
        self.cfg_a = cfg_a
        self.cfg_b = cfg_b
        self._cache: dict[tuple[float, float], HeraldDistribution] = {}

    def get(self, alpha_a: float, alpha_b: float) -> HeraldDistribution:
        key = (alpha_a, alpha_b)
        d = self._cache.get(key)
        if d is None:
            joint = joint_arrival_state(arm_state(alpha_a, self.cfg_a), arm_state(alpha_b, self.cfg_b))
            d = self._cache[key] = herald_distribution(joint, self.cfg_a)
        return d

    def p_success(self, alpha_a: float, alpha_b: float | None = None) -> float:
        p = self.get(alpha_a, alpha_a if alpha_b is None else alpha_b).probabilities
        return p[1] + p[2]

    def sample(self, alpha_a: float, alpha_b: float, u: float) -> int:
        p = self.get(alpha_a, alpha_b).probabilities
        if u < p[1]:
            return 1
        if u < p[1] + p[2]:
            return 2
        return 0


def calibrate_collection(cfg_a: EmissionConfig, cfg_b: EmissionConfig, alpha: float,
                         target: float) -> tuple[EmissionConfig, EmissionConfig]:
    """Scale both arms' collection efficiency so p_succ(alpha) equals ``target``."""
    from scipy.optimize import brentq

    def scaled(s: float) -> tuple[EmissionConfig, EmissionConfig]:
        return (replace(cfg_a, p_collection=cfg_a.p_collection * s),
                replace(cfg_b, p_collection=cfg_b.p_collection * s))

    def gap(s: float) -> float:
        a, b = scaled(s)
        return HeraldTable(a, b).p_success(alpha) - target

    hi = 1.0 / max(cfg_a.p_collection, cfg_b.p_collection)
    if gap(hi) < 0:
        raise ValueError(f"target p_succ {target} unreachable at alpha={alpha}")
    s = brentq(gap, 1e-6, hi, xtol=1e-12, rtol=1e-12)
    return scaled(s)


def decohere(rho: np.ndarray, qubit: int, dt_ns: float, t1_ns: float, t2_ns: float) -> np.ndarray:
    """Idle decoherence of one qubit for ``dt_ns``."""
    if dt_ns == 0:
        return rho
    return qs.apply_kraus(rho, qs.kraus_t1t2(dt_ns, t1_ns, t2_ns), [qubit])


# Correction taking psi- to psi+ (phase flip on one side).
CORRECTION = qs.Z


class RegistryError(RuntimeError):
    """Raised for inconsistent qubit bookkeeping."""


class Qubit:
    """A physical qubit slot with its own coherence times."""

    __slots__ = ("name", "t1_ns", "t2_ns", "group", "last_ns", "pending_coherence")

    def __init__(self, name: str, t1_ns: float, t2_ns: float):
        self.name = name
        self.t1_ns = t1_ns
        self.t2_ns = t2_ns
        self.group: JointState | None = None
        self.last_ns = 0
        # Accumulated XY shrink factor from per-attempt dephasing, applied lazily.
        self.pending_coherence = 1.0

    @property
    def occupied(self) -> bool:
        return self.group is not None


class JointState:
    __slots__ = ("rho", "qubits")

    def __init__(self, rho: np.ndarray, qubits: list[Qubit]):
        self.rho = rho
        self.qubits = qubits


class Registry:
    """Joint density matrices over named qubit slots with lazy decoherence."""

    MAX_QUBITS = 4

    def place(self, rho: np.ndarray, qubits: list[Qubit], time_ns: int) -> None:
        """Put ``qubits`` (which must be free) into state ``rho`` at ``time_ns``."""
        for q in qubits:
            if q.group is not None:
                raise RegistryError(f"qubit {q.name} already holds a state")
        g = JointState(np.array(rho, dtype=complex), list(qubits))
        for q in qubits:
            q.group = g
            q.last_ns = int(time_ns)
            q.pending_coherence = 1.0

    def _index(self, q: Qubit) -> int:
        if q.group is None:
            raise RegistryError(f"qubit {q.name} is empty")
        return q.group.qubits.index(q)

    def sync(self, q: Qubit, now_ns: int) -> None:
        """Bring one qubit's idle decoherence up to ``now_ns``."""
        g = q.group
        if g is None:
            q.last_ns = int(now_ns)
            return
        dt = int(now_ns) - q.last_ns
        if dt < 0:
            raise RegistryError(f"qubit {q.name} synced backwards")
        i = g.qubits.index(q)
        if dt > 0:
            g.rho = decohere(g.rho, i, dt, q.t1_ns, q.t2_ns)
        if q.pending_coherence != 1.0:
            p = (1.0 - q.pending_coherence) / 2
            g.rho = qs.apply_kraus(g.rho, qs.kraus_dephasing(p), [i])
            q.pending_coherence = 1.0
        q.last_ns = int(now_ns)

    def touch(self, q: Qubit, now_ns: int) -> None:
        """Advance a qubit's clock without idle decoherence (protected window)."""
        q.last_ns = int(now_ns)

    def _merge(self, qubits: list[Qubit]) -> JointState:
        groups: list[JointState] = []
        for q in qubits:
            if q.group is None:
                raise RegistryError(f"qubit {q.name} is empty")
            if q.group not in groups:
                groups.append(q.group)
        if len(groups) == 1:
            return groups[0]
        rho = groups[0].rho
        members = list(groups[0].qubits)
        for g in groups[1:]:
            rho = np.kron(rho, g.rho)
            members += g.qubits
        if len(members) > self.MAX_QUBITS:
            raise RegistryError("joint state would exceed the tracked qubit limit")
        merged = JointState(rho, members)
        for q in members:
            q.group = merged
        return merged

    def apply(self, qubits: list[Qubit], kraus: list[np.ndarray], now_ns: int) -> None:
        """Apply a channel on ``qubits`` after syncing them to ``now_ns``."""
        for q in qubits:
            self.sync(q, now_ns)
        g = self._merge(qubits)
        g.rho = qs.apply_kraus(g.rho, kraus, [g.qubits.index(q) for q in qubits])

    def unitary(self, qubits: list[Qubit], u: np.ndarray, now_ns: int) -> None:
        self.apply(qubits, [u], now_ns)

    def add_dephasing_factor(self, q: Qubit, factor: float) -> None:
        """Queue an XY shrink by ``factor`` on an occupied qubit."""
        if q.group is not None:
            q.pending_coherence *= factor

    def discard(self, q: Qubit) -> None:
        """Trace a qubit out of its joint state and free the slot."""
        g = q.group
        if g is None:
            return
        i = g.qubits.index(q)
        keep = [j for j in range(len(g.qubits)) if j != i]
        if keep:
            g.rho = qs.partial_trace(g.rho, keep)
        g.qubits.pop(i)
        q.group = None
        q.pending_coherence = 1.0

    def measure(self, q: Qubit, povm: qs.Povm, u: float, now_ns: int) -> int:
        """Measure one qubit with a single uniform; the qubit is freed afterwards."""
        self.sync(q, now_ns)
        g = q.group
        i = g.qubits.index(q)
        outcome, post = qs.measure_povm(g.rho, povm, _OneUniform(u), targets=[i])
        g.rho = post
        self.discard(q)
        return outcome

    def state(self, qubits: list[Qubit], now_ns: int) -> np.ndarray:
        """Reduced state of ``qubits`` in the given order, synced to ``now_ns``."""
        for q in qubits:
            self.sync(q, now_ns)
        g = qubits[0].group
        if g is None or any(q.group is not g for q in qubits):
            raise RegistryError("qubits are not in one joint state")
        return qs.partial_trace(g.rho, [g.qubits.index(q) for q in qubits])


class _OneUniform:
    def __init__(self, u: float):
        self._u = u

    def random(self) -> float:
        return self._u


class NodeDevice:
    """One node's electron and carbon spins with the gate table."""

    def __init__(self, name: str, device: DeviceConfig, registry: Registry):
        self.name = name
        self.device = device
        self.registry = registry
        self.electron = Qubit(f"{name}.e", device.electron_t1_ns, device.electron_t2_ns)
        self.carbon = Qubit(f"{name}.c", device.carbon_t1_ns, device.carbon_t2_ns)

    def gate(self, name: str) -> Gate:
        try:
            return self.device.gates[name]
        except KeyError:
            raise RegistryError(f"unknown gate {name}") from None

    def _noisy(self, qubits: list[Qubit], u: np.ndarray, gate: Gate, now_ns: int) -> int:
        """Perfect unitary then gate dephasing on each participant; returns end time."""
        for q in qubits:
            if q.group is None:
                raise RegistryError(f"gate on empty qubit {q.name}")
        self.registry.unitary(qubits, u, now_ns)
        if gate.fidelity < 1.0:
            for q in qubits:
                self.registry.apply([q], qs.kraus_gate_dephasing(gate.fidelity), now_ns)
        end = now_ns + gate.duration_ns
        for q in qubits:
            self.registry.touch(q, end)
        return end

    def init_carbon(self, now_ns: int) -> int:
        """Reset the carbon to a depolarized |0>; returns completion time."""
        g = self.gate("carbon_init")
        self.registry.discard(self.carbon)
        rho = qs.apply_kraus(qs.dm(qs.KET0), qs.kraus_depolarizing(g.fidelity), [0])
        end = now_ns + g.duration_ns
        self.registry.place(rho, [self.carbon], end)
        return end

    def init_electron(self, now_ns: int) -> int:
        g = self.gate("electron_init")
        self.registry.discard(self.electron)
        rho = qs.apply_kraus(qs.dm(qs.KET0), qs.kraus_depolarizing(g.fidelity), [0])
        end = now_ns + g.duration_ns
        self.registry.place(rho, [self.electron], end)
        return end

    def correct(self, now_ns: int) -> int:
        """Phase flip on the electron turning psi- into psi+."""
        return self._noisy([self.electron], CORRECTION, self.gate("electron_single"), now_ns)

    def move_to_memory(self, now_ns: int) -> int:
        """Transfer the electron state into a freshly initialized carbon.

        Any state still held by the carbon is discarded first.
        Two electron-carbon entangling gates (each followed by gate noise on
        both spins) plus ideal single-qubit gates; the electron is released.
        Returns the completion time, which spans the full move duration.
        """
        if self.electron.group is None:
            raise RegistryError("move_to_memory with an empty electron")
        self.registry.discard(self.carbon)
        self.registry.place(_carbon_ground(self.gate("carbon_init").fidelity), [self.carbon], now_ns)
        ec = self.gate("ec_sqrt_x")
        e, c = self.electron, self.carbon
        t = self._noisy([e, c], qs.CNOT, ec, now_ns)
        t = self._noisy([c, e], qs.CNOT, ec, t)
        end = now_ns + self.device.move_ns
        self.registry.touch(c, end)
        self.registry.discard(e)
        return end

    def measure_electron(self, basis: str, u: float, now_ns: int) -> int:
        povm = qs.measure_basis_povm(basis, self.device.readout_f0, self.device.readout_f1)
        return self.registry.measure(self.electron, povm, u, now_ns)

    def free(self) -> None:
        self.registry.discard(self.electron)
        self.registry.discard(self.carbon)


@lru_cache(maxsize=8)
def _carbon_ground_cached(f: float) -> bytes:
    rho = qs.apply_kraus(qs.dm(qs.KET0), qs.kraus_depolarizing(f), [0])
    return rho.tobytes()


def _carbon_ground(f: float) -> np.ndarray:
    return np.frombuffer(_carbon_ground_cached(f), dtype=complex).reshape(2, 2).copy()


def sample_measure_pair(rho_ee: np.ndarray, basis_a: str, basis_b: str, device: DeviceConfig,
                        u_a: float, u_b: float) -> tuple[int, int]:
    """Joint noisy readout of a two-qubit state in the given bases."""
    pa = qs.measure_basis_povm(basis_a, device.readout_f0, device.readout_f1)
    pb = qs.measure_basis_povm(basis_b, device.readout_f0, device.readout_f1)
    ma, post = qs.measure_povm(rho_ee, pa, _OneUniform(u_a), targets=[0])
    mb, _ = qs.measure_povm(post, pb, _OneUniform(u_b), targets=[1])
    return ma, mb


@dataclass(frozen=True)
class LinkPhysics:
    """Both arms, the node hardware and the heralding geometry of one link."""

    emission_a: EmissionConfig
    emission_b: EmissionConfig
    device: DeviceConfig
    delay_a_ns: int
    delay_b_ns: int
    cycle_ns: int = 10_120

    def __post_init__(self) -> None:
        if self.cycle_ns <= 0:
            raise ValueError("cycle period must be positive")
        if self.delay_a_ns < 0 or self.delay_b_ns < 0:
            raise ValueError("delays must be non-negative")

    @property
    def delay_max_ns(self) -> int:
        return max(self.delay_a_ns, self.delay_b_ns)

    @property
    def delay_ab_ns(self) -> int:
        return self.delay_a_ns + self.delay_b_ns

    def delay_ns(self, node: str) -> int:
        return self.delay_a_ns if node == "A" else self.delay_b_ns

    def reply_wait_ns(self, node: str) -> int:
        """Time from emission until the REPLY reaches ``node``."""
        return self.delay_max_ns + self.delay_ns(node)

    def herald_table(self) -> HeraldTable:
        return _herald_table(self.emission_a, self.emission_b)


@lru_cache(maxsize=16)
def _herald_table(a: EmissionConfig, b: EmissionConfig) -> HeraldTable:
    return HeraldTable(a, b)
