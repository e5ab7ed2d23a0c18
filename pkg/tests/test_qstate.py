import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from qlinksim import qstate as qs

BELLS = ("phi+", "phi-", "psi+", "psi-")


def random_density(rng, n_qubits, rank=None):
    d = 2**n_qubits
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_channel(rng, n_ops=3):
    """Kraus operators of a random single-qubit channel (slices of a random isometry)."""
    g = rng.normal(size=(2 * n_ops, 2)) + 1j * rng.normal(size=(2 * n_ops, 2))
    q, _ = np.linalg.qr(g)
    return [q[2 * i:2 * i + 2, :] for i in range(n_ops)]


def bessel_integral(n, x):
    """I_n(x) = (1/pi) int_0^pi exp(x cos t) cos(n t) dt."""
    val, _ = integrate.quad(lambda t: math.exp(x * math.cos(t)) * math.cos(n * t), 0.0, math.pi,
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val / math.pi


# ---- Bell states and fidelity ------------------------------------------

def test_psi_minus_vector():
    np.testing.assert_allclose(qs.bell_state("psi-"), np.array([0, 1, -1, 0]) / math.sqrt(2))


def test_unknown_bell_state_is_rejected():
    with pytest.raises(qs.StateError):
        qs.bell_state("chi")


def test_fidelity_of_pure_bell_with_itself_is_one():
    psi = qs.bell_state("psi-")
    assert qs.fidelity(qs.dm(psi), psi) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", BELLS)
def test_maximally_mixed_has_quarter_fidelity_with_every_bell(kind):
    assert qs.fidelity(np.eye(4) / 4, qs.bell_state(kind)) == pytest.approx(0.25, abs=1e-12)


def test_bit_flip_mixture_fidelity():
    psi = qs.bell_state("psi-")
    rho = qs.dm(psi)
    flipped = qs.apply_unitary(rho, qs.X, [0])
    mix = 0.9 * rho + 0.1 * flipped
    assert qs.fidelity(mix, psi) == pytest.approx(0.9, abs=1e-12)


def test_fidelity_dimension_mismatch():
    with pytest.raises(qs.StateError):
        qs.fidelity(np.eye(2) / 2, qs.bell_state("psi+"))


# ---- channels ----------------------------------------------------------

def test_zero_dephasing_is_identity():
    rng = np.random.default_rng(1)
    rho = random_density(rng, 2)
    np.testing.assert_allclose(qs.apply_kraus(rho, qs.kraus_dephasing(0.0), [1]), rho, atol=1e-14)


def test_half_dephasing_of_plus_is_maximally_mixed():
    plus = qs.dm(np.array([1, 1]) / math.sqrt(2))
    np.testing.assert_allclose(qs.apply_kraus(plus, qs.kraus_dephasing(0.5), [0]), np.eye(2) / 2, atol=1e-14)


def test_perfect_depolarizing_keeps_ground_state():
    g = qs.dm(qs.KET0)
    np.testing.assert_allclose(qs.apply_kraus(g, qs.kraus_depolarizing(1.0), [0]), g, atol=1e-14)


@pytest.mark.parametrize("make", [
    lambda: qs.kraus_dephasing(0.3), lambda: qs.kraus_depolarizing(0.7),
    lambda: qs.kraus_amplitude_damping(0.4), lambda: qs.kraus_t1t2(100.0, 300.0, 200.0),
])
def test_library_channels_are_trace_preserving(make):
    assert qs.is_trace_preserving(make())


def test_channel_parameters_out_of_range_are_rejected():
    for bad in (lambda: qs.kraus_dephasing(1.5), lambda: qs.kraus_depolarizing(-0.1),
                lambda: qs.kraus_amplitude_damping(2.0), lambda: qs.t1t2_parameters(1.0, 1.0, 3.0)):
        with pytest.raises(qs.StateError):
            bad()


def test_kraus_targets_act_on_the_named_qubit():
    rho = qs.dm(qs.ket(0, 0))
    out = qs.apply_unitary(rho, qs.X, [1])
    np.testing.assert_allclose(out, qs.dm(qs.ket(0, 1)), atol=1e-14)


def test_partial_trace_of_bell_is_maximally_mixed():
    rho = qs.dm(qs.bell_state("phi+"))
    np.testing.assert_allclose(qs.partial_trace(rho, [0]), np.eye(2) / 2, atol=1e-14)


def test_permute_qubits_swaps_labels():
    rho = qs.dm(qs.ket(0, 1, 1))
    np.testing.assert_allclose(qs.permute_qubits(rho, [2, 0, 1]), qs.dm(qs.ket(1, 0, 1)), atol=1e-14)


@pytest.mark.property
def test_density_invariants_over_1e5_random_channel_applications():
    rng = np.random.default_rng(20240101)
    states = [random_density(rng, n) for n in (1, 2, 3, 4)]
    channels = [random_channel(rng, k) for k in (1, 2, 3, 4) for _ in range(8)]
    worst_trace = worst_herm = 0.0
    min_eig = 0.0
    for i in range(100_000):
        j = i % 4
        rho = states[j]
        n = j + 1
        ch = channels[i % len(channels)]
        rho = qs.apply_kraus(rho, ch, [int(rng.integers(n))])
        states[j] = rho
        worst_trace = max(worst_trace, abs(np.trace(rho) - 1.0))
        worst_herm = max(worst_herm, np.max(np.abs(rho - rho.conj().T)))
        if i % 997 == 0:
            min_eig = min(min_eig, np.linalg.eigvalsh(rho).min())
    assert worst_trace < 1e-10
    assert worst_herm < 1e-10
    assert min_eig > -1e-9
    for rho in states:
        qs.check_density(rho)


@pytest.mark.property
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_fidelity_lies_in_unit_interval(seed, n):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, n)
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    psi /= np.linalg.norm(psi)
    f = qs.fidelity(rho, psi)
    assert 0.0 <= f <= 1.0
    assert qs.fidelity(qs.dm(psi), psi) == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_fidelity_one_only_for_the_target_itself(seed):
    rng = np.random.default_rng(seed)
    psi = qs.bell_state(BELLS[seed % 4])
    rho = random_density(rng, 2)
    f = qs.fidelity(rho, psi)
    if f > 1 - 1e-9:
        np.testing.assert_allclose(rho, qs.dm(psi), atol=1e-4)
    else:
        assert np.max(np.abs(rho - qs.dm(psi))) > 1e-6


# ---- Bessel quotient and phase dephasing -------------------------------

def test_bessel_quotient_small_argument_limit():
    assert qs.bessel_quotient(1e-8) == pytest.approx(5e-9, rel=1e-6)


def test_bessel_quotient_large_argument_limit():
    assert qs.bessel_quotient(1e6) == pytest.approx(1.0, abs=1e-6)
    assert qs.bessel_quotient(1e6) < 1.0


def test_bessel_quotient_at_two_matches_quadrature():
    oracle = bessel_integral(1, 2.0) / bessel_integral(0, 2.0)
    assert qs.bessel_quotient(2.0) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("x", [0.1, 0.5, 3.7, 24.0, 100.0])
def test_bessel_quotient_matches_quadrature(x):
    oracle = bessel_integral(1, x) / bessel_integral(0, x)
    assert qs.bessel_quotient(x) == pytest.approx(oracle, rel=1e-10)


def test_bessel_quotient_rejects_nonpositive():
    with pytest.raises(qs.StateError):
        qs.bessel_quotient(0.0)


def test_phase_dephasing_limits():
    assert qs.phase_dephasing_param(1e-3) == pytest.approx(0.0, abs=1e-6)
    assert qs.phase_dephasing_param(1e3) == pytest.approx(0.5, abs=1e-6)


def test_phase_dephasing_at_per_arm_sigma():
    sigma = math.radians(14.3) / math.sqrt(2)
    x = sigma**-2
    oracle = (1 - bessel_integral(1, x) / bessel_integral(0, x)) / 2
    assert qs.phase_dephasing_param(sigma) == pytest.approx(oracle, rel=1e-9)


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_phase_dephasing_monotone_in_sigma(a, b):
    lo, hi = sorted((a, b))
    assert qs.phase_dephasing_param(lo) <= qs.phase_dephasing_param(hi) + 1e-15


# ---- POVMs --------------------------------------------------------------

def test_indistinguishable_photons_never_split():
    povm = qs.beamsplitter_povm(1.0, photon_counting=True)
    np.testing.assert_allclose(povm.elements[3], 0.0, atol=1e-15)


def test_visibility_point_nine_gives_chi_point_zero_five():
    povm = qs.beamsplitter_povm(math.sqrt(0.9), photon_counting=True)
    both = qs.dm(qs.ket(1, 1))
    chi = float(np.real(np.trace(povm.elements[3] @ both)))
    assert chi == pytest.approx(0.05, abs=1e-12)


def test_vacuum_always_gives_no_click():
    povm = qs.beamsplitter_povm(math.sqrt(0.9))
    p = qs.born_probabilities(qs.dm(qs.ket(0, 0)), povm)
    np.testing.assert_allclose(p, [1, 0, 0, 0], atol=1e-15)


def test_perfect_readout_of_one_always_reads_one():
    povm = qs.readout_povm(1.0, 1.0)
    for u in np.linspace(0, 0.999999, 50):
        m, _ = qs.measure_povm(qs.dm(qs.KET1), povm, _Fixed(u))
        assert m == 1


def test_perfect_readout_is_projective():
    povm = qs.readout_povm(1.0, 1.0)
    np.testing.assert_allclose(povm.elements[0], qs.dm(qs.KET0), atol=1e-15)
    np.testing.assert_allclose(povm.elements[1], qs.dm(qs.KET1), atol=1e-15)


def test_electron_readout_probability_of_zero():
    p = qs.born_probabilities(qs.dm(qs.KET0), qs.readout_povm(0.95, 0.995))
    assert p[0] == pytest.approx(0.95, abs=1e-12)


@pytest.mark.property
def test_povm_completeness_for_1000_random_mu():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        r = math.sqrt(rng.random())
        mu = r * np.exp(2j * math.pi * rng.random())
        for counting in (False, True):
            qs.beamsplitter_povm(mu, photon_counting=counting).check()


@pytest.mark.property
def test_kraus_povm_consistency_for_real_mu():
    rng = np.random.default_rng(6)
    for mu in np.concatenate([[0.0, 1.0, math.sqrt(0.9)], rng.random(200)]):
        povm = qs.beamsplitter_povm(mu)
        assert povm.kraus is not None
        for k, e in zip(povm.kraus, povm.elements):
            np.testing.assert_allclose(k.conj().T @ k, e, atol=1e-10)


def test_mu_outside_unit_disk_is_rejected():
    with pytest.raises(qs.StateError):
        qs.beamsplitter_povm(1.1)


@pytest.mark.property
@given(st.integers(0, 2**32 - 1), st.sampled_from(["X", "Y", "Z"]))
def test_measurement_post_state_is_valid(seed, basis):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 2)
    m, post = qs.measure_povm(rho, qs.measure_basis_povm(basis, 0.95, 0.995), rng, targets=[1])
    assert m in (0, 1)
    qs.check_density(post)


def test_basis_states_are_eigenvectors():
    paulis = {"X": qs.X, "Y": qs.Y, "Z": qs.Z}
    for b, p in paulis.items():
        for m, ev in ((0, 1), (1, -1)):
            v = qs.basis_state(b, m)
            np.testing.assert_allclose(p @ v, ev * v, atol=1e-14)


class _Fixed:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u
