import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlinksim import physmodel as pm
from qlinksim import qstate as qs
from qlinksim.qstate import ket

NOISELESS = pm.EmissionConfig(
    two_photon_prob=0.0, sigma_phi_rad=0.0, t_w_ns=1e9, p_zero_phonon=1.0, p_collection=1.0,
    fiber_km=0.0, p_detection=1.0, dark_rate_per_s=0.0, visibility=1.0,
)
STILL = pm.DeviceConfig(electron_t1_ns=math.inf, electron_t2_ns=math.inf, carbon_t1_ns=math.inf,
                        carbon_t2_ns=math.inf)


def xy_length(rho):
    r = qs.bloch_vector(rho)
    return math.hypot(r[0], r[1])


# ---- emission -------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_spin_photon_state_rejects_degenerate_alpha(alpha):
    with pytest.raises(ValueError):
        pm.spin_photon_state(alpha)


def test_photon_branch_vanishes_as_alpha_goes_to_zero():
    for a in (1e-2, 1e-4, 1e-8):
        rho = pm.spin_photon_state(a)
        photon = qs.partial_trace(rho, [1])
        assert photon[1, 1].real == pytest.approx(a, rel=1e-12)


@pytest.mark.property
@given(st.floats(0.001, 0.999))
@settings(max_examples=60)
def test_emission_pipeline_yields_valid_state(alpha):
    for cfg in (pm.EmissionConfig(), NOISELESS, pm.EmissionConfig(fiber_km=25.0, fiber_db_per_km=0.5)):
        qs.check_density(pm.arm_state(alpha, cfg))


def test_nuclear_dephasing_zero_without_bright_population():
    assert pm.nuclear_dephasing_probability(0.0, pm.EmissionConfig()) == 0.0


def test_nuclear_dephasing_value():
    # x = 2 pi 377 kHz * 82 ns
    x = 2 * math.pi * 377e3 * 82e-9
    expected = 0.25 * (1 - math.exp(-x * x / 2))
    assert pm.nuclear_dephasing_probability(0.5, pm.EmissionConfig()) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.004671, rel=1e-3)


def test_hundred_attempts_shrink_equals_repeated_channel():
    p = pm.nuclear_dephasing_probability(0.3, pm.EmissionConfig())
    plus = qs.dm(qs.basis_state("X", 0))
    brute = plus
    for _ in range(100):
        brute = qs.apply_kraus(brute, qs.kraus_dephasing(p), [0])

    reg = pm.Registry()
    q = pm.Qubit("c", math.inf, math.inf)
    reg.place(plus, [q], 0)
    reg.add_dephasing_factor(q, (1 - 2 * p) ** 100)
    lazy = reg.state([q], 0)
    np.testing.assert_allclose(lazy, brute, atol=1e-12)
    assert xy_length(brute) == pytest.approx((1 - 2 * p) ** 100, rel=1e-10)


def test_dephasing_factor_ignored_on_empty_qubit():
    reg = pm.Registry()
    q = pm.Qubit("c", math.inf, math.inf)
    reg.add_dephasing_factor(q, 0.5)
    assert q.pending_coherence == 1.0


# ---- fiber ------------------------------------------------------------------

def test_fiber_loss_formula_value():
    assert pm.fiber_loss_probability(10.0, 0.5) == pytest.approx(0.68377, abs=1e-5)


def test_zero_length_fiber_is_identity():
    rho = pm.emit(0.3, pm.EmissionConfig())
    assert pm.fiber_damp(rho, 0.0, 5.0) is rho


def test_negative_fiber_length_rejected():
    with pytest.raises(ValueError):
        pm.fiber_loss_probability(-1.0, 0.5)
    with pytest.raises(ValueError):
        pm.EmissionConfig(fiber_km=-1.0)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.1, 10))
def test_fiber_loss_monotone_in_length(a, b, gamma):
    lo, hi = sorted((a, b))
    assert pm.fiber_loss_probability(lo, gamma) <= pm.fiber_loss_probability(hi, gamma)


def test_fiber_damp_removes_photon_population():
    rho = pm.spin_photon_state(0.4)
    out = pm.fiber_damp(rho, 10.0, 0.5)
    photon = qs.partial_trace(out, [1])
    assert photon[1, 1].real == pytest.approx(0.4 * 10**-0.5, rel=1e-12)


# ---- heralding --------------------------------------------------------------

def vacuum_joint():
    return qs.dm(ket(0, 0, 0, 0))


def test_vacuum_without_dark_counts_never_heralds():
    cfg = replace(NOISELESS, dark_rate_per_s=0.0)
    dist = pm.herald_distribution(vacuum_joint(), cfg)
    assert dist.probabilities[0] == pytest.approx(1.0, abs=1e-15)
    rng = np.random.default_rng(5)
    assert all(pm.midpoint_detect(vacuum_joint(), cfg, rng)[0] == 0 for _ in range(200))


@pytest.mark.property
def test_single_photon_input_heralds_exact_bell_states():
    # One photon shared between the arms: bright electron (|0>) paired with the emitted photon.
    psi = (ket(0, 1, 1, 0) + ket(1, 0, 0, 1)) / math.sqrt(2)
    dist = pm.herald_distribution(qs.dm(psi), NOISELESS)
    assert dist.probabilities[1] == pytest.approx(0.5, abs=1e-12)
    assert dist.probabilities[2] == pytest.approx(0.5, abs=1e-12)
    assert qs.fidelity(dist.states[1], qs.bell_state("psi+")) == pytest.approx(1.0, abs=1e-9)
    assert qs.fidelity(dist.states[2], qs.bell_state("psi-")) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.3, 0.5])
def test_noiseless_single_click_fidelity(alpha):
    # Both-bright branch bunches into one detector half the time: F = (1 - a) / (1 - a/2).
    joint = pm.joint_arrival_state(pm.arm_state(alpha, NOISELESS), pm.arm_state(alpha, NOISELESS))
    dist = pm.herald_distribution(joint, NOISELESS)
    expected = (1 - alpha) / (1 - alpha / 2)
    assert qs.fidelity(dist.states[1], qs.bell_state("psi+")) == pytest.approx(expected, abs=1e-9)
    assert qs.fidelity(dist.states[2], qs.bell_state("psi-")) == pytest.approx(expected, abs=1e-9)
    assert dist.probabilities[1] + dist.probabilities[2] == pytest.approx(
        2 * alpha * (1 - alpha) + alpha**2, abs=1e-12)


def test_click_transition_rows_are_distributions():
    t = pm.click_transition(0.8, 0.01)
    np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-15)
    assert (t >= 0).all()


@pytest.mark.property
def test_dark_count_rate_matches_exponential_law():
    # Raised dark rate so 4 sigma is a meaningful band; one herald per window.
    cfg = replace(pm.EmissionConfig(), dark_rate_per_s=4e6)
    p_dark = 1 - math.exp(-cfg.t_w_ns * 1e-9 * cfg.dark_rate_per_s)
    assert cfg.p_dark == pytest.approx(p_dark, rel=1e-12)
    t = pm.click_transition(cfg.p_detection, cfg.p_dark)
    n = 10**6
    rng = np.random.default_rng(11)
    patterns = np.searchsorted(np.cumsum(t[0]), rng.random(n), side="right")
    any_click = np.mean(patterns != 0)
    expected = 1 - (1 - p_dark) ** 2
    assert abs(any_click - expected) < 4 * math.sqrt(expected * (1 - expected) / n)


def test_midpoint_detect_dark_clicks_on_vacuum():
    cfg = replace(pm.EmissionConfig(), dark_rate_per_s=4e6)
    rng = np.random.default_rng(3)
    n = 4000
    heralds = sum(pm.midpoint_detect(vacuum_joint(), cfg, rng)[0] != 0 for _ in range(n))
    expected = 2 * cfg.p_dark * (1 - cfg.p_dark)
    assert abs(heralds / n - expected) < 4 * math.sqrt(expected * (1 - expected) / n)


def test_herald_table_sample_follows_probabilities():
    table = pm.HeraldTable(NOISELESS, NOISELESS)
    p = table.get(0.2, 0.2).probabilities
    assert table.sample(0.2, 0.2, 0.0) == 1
    assert table.sample(0.2, 0.2, p[1] + 1e-12) == 2
    assert table.sample(0.2, 0.2, p[1] + p[2] + 1e-12) == 0


@pytest.mark.parametrize("alpha", [0.1, 0.2, 0.3, 0.5])
def test_lab_success_close_to_alpha_times_1e3(lab, alpha):
    p = lab.herald_table().p_success(alpha)
    assert abs(p / (alpha * 1e-3) - 1) <= 0.15


def test_lab_calibration_point_is_exact(lab):
    assert lab.herald_table().p_success(0.1) == pytest.approx(1e-4, rel=1e-8)


def test_success_linear_in_small_alpha(lab):
    alphas = np.linspace(0.01, 0.05, 9)
    ps = np.array([lab.herald_table().p_success(a) for a in alphas])
    slope, icpt = np.polyfit(alphas, ps, 1)
    resid = ps - (slope * alphas + icpt)
    assert np.max(np.abs(resid / ps)) < 1e-2


def test_calibrate_collection_rejects_unreachable_target():
    cfg = pm.EmissionConfig()
    with pytest.raises(ValueError):
        pm.calibrate_collection(cfg, cfg, 0.1, 0.5)


def test_lab_predicted_fidelity_decreases_with_alpha(lab):
    from qlinksim import feu
    alphas = [0.1, 0.2, 0.3, 0.4, 0.5]
    fs = [feu.predict_herald_fidelity(lab, a) for a in alphas]
    assert all(a > b for a, b in zip(fs, fs[1:]))


@pytest.mark.parametrize("alpha", [0.1, 0.2, 0.3])
def test_lab_predicted_fidelity_near_one_minus_alpha(lab, alpha):
    from qlinksim import feu
    assert abs(feu.predict_herald_fidelity(lab, alpha) - (1 - alpha)) <= 0.07


# ---- decoherence -------------------------------------------------------------

def test_decohere_zero_time_is_identity():
    rho = qs.dm(qs.basis_state("X", 0))
    assert pm.decohere(rho, 0, 0, 1e6, 1e6) is rho


def test_pure_dephasing_shrinks_coherence_by_e():
    rho = qs.dm(qs.basis_state("X", 0))
    out = pm.decohere(rho, 0, 1e6, math.inf, 1e6)
    assert abs(out[0, 1]) == pytest.approx(0.5 * math.exp(-1), rel=1e-12)
    assert out[0, 0].real == pytest.approx(0.5, abs=1e-15)


def test_unphysical_coherence_times_rejected():
    with pytest.raises(qs.StateError):
        pm.decohere(qs.dm(ket(0)), 0, 10, 1.0, 3.0)


def test_stored_bell_fidelity_never_increases(lab):
    reg = pm.Registry()
    d = lab.device
    qa, qb = pm.Qubit("a", d.electron_t1_ns, d.electron_t2_ns), pm.Qubit("b", d.carbon_t1_ns, d.carbon_t2_ns)
    reg.place(qs.dm(qs.bell_state("psi+")), [qa, qb], 0)
    last = 1.0
    for t in range(0, 5_000_000, 250_000):
        f = qs.fidelity(reg.state([qa, qb], t), qs.bell_state("psi+"))
        assert f <= last + 1e-12
        last = f


# ---- registry and gates ----------------------------------------------------------

def bell_on_nodes(device=STILL, bell="psi+"):
    reg = pm.Registry()
    a, b = pm.NodeDevice("A", device, reg), pm.NodeDevice("B", device, reg)
    reg.place(qs.dm(qs.bell_state(bell)), [a.electron, b.electron], 0)
    return reg, a, b


def test_electron_single_gate_keeps_fidelity():
    reg, a, b = bell_on_nodes()
    end = a._noisy([a.electron], qs.I2, a.gate("electron_single"), 0)
    assert end == 5
    rho = reg.state([a.electron, b.electron], end)
    assert qs.fidelity(rho, qs.bell_state("psi+")) == pytest.approx(1.0, abs=1e-12)


def test_local_z_converts_psi_minus_to_psi_plus():
    reg, a, b = bell_on_nodes(bell="psi-")
    end = a.correct(0)
    rho = reg.state([a.electron, b.electron], end)
    assert qs.fidelity(rho, qs.bell_state("psi+")) == pytest.approx(1.0, abs=1e-12)


def test_carbon_init_depolarizes_ground_state_and_takes_310us():
    reg = pm.Registry()
    node = pm.NodeDevice("A", STILL, reg)
    end = node.init_carbon(1000)
    assert end == 1000 + 310_000
    rho = reg.state([node.carbon], end)
    # f |0><0| + (1-f)/3 (|1><1| + |1><1| + |0><0|)
    assert rho[0, 0].real == pytest.approx(0.95 + 0.05 / 3, abs=1e-12)


def test_move_to_memory_transfers_pair_with_gate_noise():
    reg, a, b = bell_on_nodes()
    end = a.move_to_memory(0)
    assert end == STILL.move_ns
    assert not a.electron.occupied and a.carbon.occupied
    f = qs.fidelity(reg.state([a.carbon, b.electron], end), qs.bell_state("psi+"))
    # Noiseless gates would give 1; init and two noisy E-C gates lower it.
    assert 0.85 < f < 1.0
    ideal = replace(STILL, gates={**STILL.gates, "ec_sqrt_x": pm.Gate(1.0, 500_000),
                                  "carbon_init": pm.Gate(1.0, 310_000)})
    reg, a, b = bell_on_nodes(ideal)
    a.move_to_memory(0)
    assert qs.fidelity(reg.state([a.carbon, b.electron], ideal.move_ns), qs.bell_state("psi+")) == pytest.approx(
        1.0, abs=1e-12)


def test_gate_on_empty_qubit_rejected():
    reg = pm.Registry()
    node = pm.NodeDevice("A", STILL, reg)
    with pytest.raises(pm.RegistryError):
        node.correct(0)
    with pytest.raises(pm.RegistryError):
        node.move_to_memory(0)
    with pytest.raises(pm.RegistryError):
        node.gate("teleport")


def test_registry_rejects_double_occupancy_and_backwards_sync():
    reg = pm.Registry()
    q = pm.Qubit("q", 1e6, 1e6)
    reg.place(qs.dm(ket(0)), [q], 100)
    with pytest.raises(pm.RegistryError):
        reg.place(qs.dm(ket(1)), [q], 100)
    with pytest.raises(pm.RegistryError):
        reg.sync(q, 50)


def test_measure_frees_qubit_and_leaves_partner_collapsed():
    reg, a, b = bell_on_nodes()
    m = a.measure_electron("Z", 0.3, 0)
    assert not a.electron.occupied
    rho_b = reg.state([b.electron], 0)
    # psi+ anticorrelates in Z; readout noise only affects the reported bit.
    assert rho_b[1 - m, 1 - m].real > 0.9 or rho_b[m, m].real > 0.9


def test_sample_measure_pair_is_deterministic_in_uniforms(lab):
    rho = qs.dm(qs.bell_state("psi+"))
    a = pm.sample_measure_pair(rho, "X", "X", lab.device, 0.2, 0.7)
    b = pm.sample_measure_pair(rho, "X", "X", lab.device, 0.2, 0.7)
    assert a == b


def test_device_config_validation():
    with pytest.raises(ValueError):
        pm.DeviceConfig(readout_f0=1.5)
    with pytest.raises(ValueError):
        pm.DeviceConfig(gates={"bad": pm.Gate(0.9, 0)})
    with pytest.raises(ValueError):
        pm.EmissionConfig(p_detection=1.2)


def test_link_delays(lab, qlink):
    assert lab.reply_wait_ns("A") == lab.delay_max_ns + lab.delay_a_ns
    assert qlink.delay_ab_ns == qlink.delay_a_ns + qlink.delay_b_ns
    assert qlink.cycle_ns == 10_120
