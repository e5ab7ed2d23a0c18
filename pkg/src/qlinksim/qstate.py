"""Small-dimension density-matrix tools: states, channels, POVMs, fidelity.

Qubit ``0`` is the most significant factor of the Kronecker product, so a
basis label ``|ab>`` on qubits (0, 1) has index ``2*a + b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)

PHI_PLUS = "phi+"
PHI_MINUS = "phi-"
PSI_PLUS = "psi+"
PSI_MINUS = "psi-"

_BELL = {
    PHI_PLUS: np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2),
    PHI_MINUS: np.array([1, 0, 0, -1], dtype=complex) / math.sqrt(2),
    PSI_PLUS: np.array([0, 1, 1, 0], dtype=complex) / math.sqrt(2),
    PSI_MINUS: np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2),
}

# Measurement bases as the unitary that rotates the basis onto Z.
BASIS_ROTATION = {
    "Z": I2,
    "X": H,
    "Y": H @ S.conj().T,
}
BASIS_CODE = {"Z": 0, "X": 1, "Y": 2}
BASIS_NAME = {v: k for k, v in BASIS_CODE.items()}


class StateError(ValueError):
    """Raised for malformed states, channels or measurements."""


def bell_state(kind: str) -> np.ndarray:
    """Two-qubit Bell vector: ``phi+``, ``phi-``, ``psi+`` or ``psi-``."""
    try:
        return _BELL[kind].copy()
    except KeyError:
        raise StateError(f"unknown Bell state {kind!r}") from None


def basis_state(basis: str, outcome: int) -> np.ndarray:
    """Eigenvector of the X, Y or Z basis for outcome 0 (+1 eigenvalue) or 1."""
    ket = KET1 if outcome else KET0
    return BASIS_ROTATION[basis].conj().T @ ket


def ket(*bits: int) -> np.ndarray:
    """Computational basis vector ``|b0 b1 ...>``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(str(b) for b in bits), 2) if bits else 0] = 1.0
    return v


def dm(psi: np.ndarray) -> np.ndarray:
    """Density matrix of a pure state."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def num_qubits(rho: np.ndarray) -> int:
    d = rho.shape[0]
    n = d.bit_length() - 1
    if rho.ndim != 2 or rho.shape[1] != d or 2**n != d:
        raise StateError(f"not a qubit operator: shape {rho.shape}")
    return n


def check_density(rho: np.ndarray, tol_psd: float = PSD_TOL) -> None:
    """Raise StateError unless rho is Hermitian, unit trace and PSD."""
    num_qubits(rho)
    if np.max(np.abs(rho - rho.conj().T)) > HERM_TOL:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TRACE_TOL:
        raise StateError(f"trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -tol_psd:
        raise StateError("density matrix is not positive semidefinite")


def _embed(op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Lift an operator on ``targets`` to the full n-qubit space."""
    k = len(targets)
    if op.shape != (2**k, 2**k):
        raise StateError(f"operator of shape {op.shape} does not act on {k} qubits")
    if len(set(targets)) != k or any(t < 0 or t >= n for t in targets):
        raise StateError(f"bad targets {targets} for {n} qubits")
    if k == n and list(targets) == list(range(n)):
        return op
    full = np.kron(op, np.eye(2 ** (n - k), dtype=complex))
    rest = [q for q in range(n) if q not in targets]
    order = list(targets) + rest
    # full acts on qubits in `order`; permute axes back to natural order.
    inv = np.argsort(order)
    t = full.reshape([2] * (2 * n))
    t = t.transpose(list(inv) + [n + i for i in inv])
    return t.reshape(2**n, 2**n)


def embed(op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Public form of operator lifting."""
    return _embed(np.asarray(op, dtype=complex), list(targets), n)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return (rho + rho.conj().T) / 2


def apply_unitary(rho: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    n = num_qubits(rho)
    full = _embed(np.asarray(u, dtype=complex), list(targets), n)
    return _hermitize(full @ rho @ full.conj().T)


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray], targets: Sequence[int]) -> np.ndarray:
    """Apply the channel sum_k K rho K^dagger on ``targets``."""
    n = num_qubits(rho)
    out = np.zeros_like(rho, dtype=complex)
    for k in kraus:
        full = _embed(np.asarray(k, dtype=complex), list(targets), n)
        out += full @ rho @ full.conj().T
    return _hermitize(out)


def is_trace_preserving(kraus: Sequence[np.ndarray], tol: float = 1e-10) -> bool:
    acc = sum(k.conj().T @ k for k in kraus)
    return bool(np.max(np.abs(acc - np.eye(acc.shape[0]))) <= tol)


def kraus_dephasing(p: float) -> list[np.ndarray]:
    """(1-p) rho + p Z rho Z."""
    if not 0.0 <= p <= 1.0:
        raise StateError(f"dephasing probability {p} outside [0, 1]")
    return [math.sqrt(1 - p) * I2, math.sqrt(p) * Z]


def kraus_gate_dephasing(f: float) -> list[np.ndarray]:
    """Gate noise f rho + (1-f) Z rho Z."""
    return kraus_dephasing(1.0 - f)


def kraus_depolarizing(f: float) -> list[np.ndarray]:
    """f rho + (1-f)/3 (X rho X + Y rho Y + Z rho Z)."""
    if not 0.0 <= f <= 1.0:
        raise StateError(f"fidelity {f} outside [0, 1]")
    q = math.sqrt((1 - f) / 3)
    return [math.sqrt(f) * I2, q * X, q * Y, q * Z]


def kraus_amplitude_damping(gamma: float) -> list[np.ndarray]:
    """|1> decays to |0> with probability gamma."""
    if not 0.0 <= gamma <= 1.0:
        raise StateError(f"damping parameter {gamma} outside [0, 1]")
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return [k0, k1]


def t1t2_parameters(dt: float, t1: float, t2: float) -> tuple[float, float]:
    """(amplitude damping gamma, extra dephasing p) for idle time dt.

    Times share one unit; ``math.inf`` disables a process. Total
    off-diagonal decay is exp(-dt/t2).
    """
    if dt < 0:
        raise StateError("negative idle time")
    if t1 <= 0 or t2 <= 0 or t2 > 2 * t1:
        raise StateError(f"unphysical coherence times T1={t1}, T2={t2}")
    gamma = 0.0 if math.isinf(t1) else -math.expm1(-dt / t1)
    half_t1 = 0.0 if math.isinf(t1) else dt / (2 * t1)
    total = 0.0 if math.isinf(t2) else dt / t2
    lam = math.exp(-(total - half_t1))
    return gamma, (1.0 - lam) / 2.0


def kraus_t1t2(dt: float, t1: float, t2: float) -> list[np.ndarray]:
    """Idle decoherence: amplitude damping then the dephasing that completes T2."""
    gamma, p = t1t2_parameters(dt, t1, t2)
    ad = kraus_amplitude_damping(gamma)
    dp = kraus_dephasing(p)
    return [d @ a for d in dp for a in ad]


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced state on ``keep`` (in the given order)."""
    n = num_qubits(rho)
    keep = list(keep)
    drop = [q for q in range(n) if q not in keep]
    t = rho.reshape([2] * (2 * n))
    order = keep + drop
    t = t.transpose(order + [n + q for q in order])
    dk, dd = 2 ** len(keep), 2 ** len(drop)
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def permute_qubits(rho: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Reorder qubits so that new qubit i is old qubit order[i]."""
    n = num_qubits(rho)
    t = rho.reshape([2] * (2 * n))
    t = t.transpose(list(order) + [n + q for q in order])
    return t.reshape(2**n, 2**n)


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """<psi| rho |psi> for a pure target."""
    target = np.asarray(target, dtype=complex)
    if rho.shape[0] != target.shape[0]:
        raise StateError("dimension mismatch between state and target")
    f = float(np.real(target.conj() @ rho @ target))
    return min(1.0, max(0.0, f))


def bessel_quotient(x: float, tol: float = 1e-12) -> float:
    """I1(x) / I0(x) from the continued fraction of Bessel ratios.

    Uses the modified Lentz evaluation of
    I1/I0 = 1 / (2/x + 1 / (4/x + 1 / (6/x + ...))).
    Very large arguments use the asymptotic expansion instead.
    """
    if not x > 0:
        raise StateError(f"Bessel quotient needs x > 0, got {x}")
    if x > 1e3:
        inv = 1.0 / x
        return 1.0 - inv / 2 - inv**2 / 8 - inv**3 / 8 - 25 * inv**4 / 128
    tiny = 1e-300
    f = tiny
    c = f
    d = 0.0
    k = 1
    while True:
        b = 2.0 * k / x
        d = b + d
        d = 1.0 / (d if d != 0 else tiny)
        c = b + 1.0 / c
        if c == 0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < tol:
            break
        k += 1
        if k > 100000:
            raise StateError("Bessel continued fraction did not converge")
    # Lentz with a0 = 0 and a_k = 1 yields the reciprocal chain directly.
    return f if f != tiny else 0.0


def phase_dephasing_param(sigma_phi: float) -> float:
    """Dephasing probability for a Gaussian phase error of std ``sigma_phi`` (rad)."""
    if not sigma_phi >= 0:
        raise StateError(f"phase std must be non-negative, got {sigma_phi}")
    if sigma_phi == 0:
        return 0.0
    return (1.0 - bessel_quotient(sigma_phi**-2)) / 2.0


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


@dataclass
class Povm:
    """Measurement with named outcomes and optional Kraus operators."""

    elements: list[np.ndarray]
    kraus: list[np.ndarray] | None = None
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.labels:
            self.labels = [str(i) for i in range(len(self.elements))]

    def check(self, tol: float = 1e-10) -> None:
        d = self.elements[0].shape[0]
        acc = sum(self.elements)
        if np.max(np.abs(acc - np.eye(d))) > tol:
            raise StateError("POVM elements do not sum to identity")
        for e in self.elements:
            if np.linalg.eigvalsh(_hermitize(e)).min() < -PSD_TOL:
                raise StateError("POVM element is not PSD")

    def kraus_ops(self) -> list[np.ndarray]:
        return self.kraus if self.kraus is not None else [_psd_sqrt(e) for e in self.elements]


# Ordering of the two-mode photon basis used in the optics literature,
# |00>, |10>, |01>, |11>, mapped onto Kronecker indices of (left, right).
MODE_ORDER = [0, 2, 1, 3]


def _from_mode_order(m: np.ndarray) -> np.ndarray:
    p = np.zeros((4, 4))
    for i, j in enumerate(MODE_ORDER):
        p[j, i] = 1.0
    return p @ m @ p.T


def beamsplitter_povm(mu: complex, photon_counting: bool = False) -> Povm:
    """Click statistics behind a 50:50 beam splitter for partially distinguishable photons.

    Acts on (left photon, right photon) presence qubits. ``mu`` is the
    overlap of the two photon wave packets. Photon-counting outcomes are
    00, 10, 01, 11, 20, 02 (counts at the two detectors); otherwise
    00, 10, 01, 11 record which detectors clicked.
    """
    mu = complex(mu)
    if abs(mu) > 1 + 1e-12:
        raise StateError(f"|mu| = {abs(mu)} exceeds 1")
    m2 = min(abs(mu) ** 2, 1.0)

    def mat(entries: dict[tuple[int, int], complex]) -> np.ndarray:
        a = np.zeros((4, 4), dtype=complex)
        for (i, j), v in entries.items():
            a[i, j] = v
        return _from_mode_order(a)

    e00 = mat({(0, 0): 1})
    e10 = mat({(1, 1): 0.5, (1, 2): mu / 2, (2, 1): mu.conjugate() / 2, (2, 2): 0.5})
    e01 = mat({(1, 1): 0.5, (1, 2): -mu / 2, (2, 1): -mu.conjugate() / 2, (2, 2): 0.5})
    e11 = mat({(3, 3): (1 - m2) / 2})
    e_two = mat({(3, 3): (1 + m2) / 4})
    if photon_counting:
        return Povm([e00, e10, e01, e11, e_two, e_two.copy()], labels=["00", "10", "01", "11", "20", "02"])

    c10 = e10 + e_two
    c01 = e01 + e_two
    kraus = None
    if abs(mu.imag) < 1e-15:
        r = mu.real
        a = (math.sqrt(1 + r) + math.sqrt(1 - r)) / (2 * math.sqrt(2))
        b = (math.sqrt(1 + r) - math.sqrt(1 - r)) / (2 * math.sqrt(2))
        both = math.sqrt(1 + r * r) / 2
        k10 = mat({(1, 1): a, (1, 2): b, (2, 1): b, (2, 2): a, (3, 3): both})
        k01 = mat({(1, 1): a, (1, 2): -b, (2, 1): -b, (2, 2): a, (3, 3): both})
        k11 = mat({(3, 3): math.sqrt(1 - r * r) / math.sqrt(2)})
        kraus = [e00.copy(), k10, k01, k11]
    return Povm([e00, c10, c01, e11], kraus=kraus, labels=["00", "10", "01", "11"])


def readout_povm(f0: float, f1: float) -> Povm:
    """Noisy Z readout: reports 0 on |0> with prob f0 and 1 on |1> with prob f1."""
    if not (0.0 <= f0 <= 1.0 and 0.0 <= f1 <= 1.0):
        raise StateError("readout fidelities must lie in [0, 1]")
    m0 = np.diag([math.sqrt(f0), math.sqrt(1 - f1)]).astype(complex)
    m1 = np.diag([math.sqrt(1 - f0), math.sqrt(f1)]).astype(complex)
    return Povm([m0.conj().T @ m0, m1.conj().T @ m1], kraus=[m0, m1], labels=["0", "1"])


def born_probabilities(rho: np.ndarray, povm: Povm, targets: Sequence[int] | None = None) -> np.ndarray:
    n = num_qubits(rho)
    targets = list(range(n)) if targets is None else list(targets)
    probs = np.array([np.real(np.trace(_embed(e, targets, n) @ rho)) for e in povm.elements])
    if abs(probs.sum() - 1.0) > 1e-9:
        raise StateError(f"outcome probabilities sum to {probs.sum()}")
    return np.clip(probs, 0.0, None)


def sample_index(probs: Sequence[float], u: float) -> int:
    """Inverse-CDF sample of an index from one uniform."""
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def measure_povm(rho: np.ndarray, povm: Povm, rng, targets: Sequence[int] | None = None) -> tuple[int, np.ndarray]:
    """Sample an outcome by the Born rule; return it with the normalized post-state.

    ``rng`` needs a ``random()`` method.
    """
    n = num_qubits(rho)
    targets = list(range(n)) if targets is None else list(targets)
    probs = born_probabilities(rho, povm, targets)
    i = sample_index(probs, rng.random())
    k = _embed(povm.kraus_ops()[i], targets, n)
    post = k @ rho @ k.conj().T
    return i, _hermitize(post / np.real(np.trace(post)))


def measure_basis_povm(basis: str, f0: float = 1.0, f1: float = 1.0) -> Povm:
    """Readout in the X, Y or Z basis: rotate onto Z, then noisy Z readout."""
    ro = readout_povm(f0, f1)
    u = BASIS_ROTATION[basis]
    kraus = [k @ u for k in ro.kraus]
    return Povm([k.conj().T @ k for k in kraus], kraus=kraus, labels=["0", "1"])


def bloch_vector(rho1: np.ndarray) -> np.ndarray:
    """(x, y, z) of a single-qubit state."""
    return np.real([np.trace(rho1 @ p) for p in (X, Y, Z)])
