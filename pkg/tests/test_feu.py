import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qlinksim import feu
from qlinksim import qstate as qs
from qlinksim.harness.config import link_physics

LAB = link_physics("Lab")
QLINK = link_physics("QLink")


def sample_window(rho, bell, f0, f1, n, seed, size=2000):
    """Feed ``n`` simulated test rounds on ``rho`` into a window, bases drawn uniformly."""
    rng = np.random.default_rng(seed)
    joint = {}
    for b in feu.BASES:
        p = qs.measure_basis_povm(b, f0, f1)
        joint[b] = [float(np.real(np.trace(np.kron(ea, eb) @ rho))) for ea in p.elements for eb in p.elements]
    w = feu.QberWindow(size)
    for _ in range(n):
        b = feu.BASES[rng.integers(3)]
        k = rng.choice(4, p=np.array(joint[b]) / sum(joint[b]))
        w.add(b, feu.is_error(bell, b, k // 2, k % 2))
    return w


def test_perfect_and_random_qbers():
    assert feu.qber_to_fidelity(0, 0, 0) == 1.0
    assert feu.qber_to_fidelity(0.5, 0.5, 0.5) == 0.25
    assert feu.qber_to_fidelity(1, 1, 1) == 0.0  # clamped
    with pytest.raises(ValueError):
        feu.qber_to_fidelity(-0.1, 0, 0)


@pytest.mark.parametrize("bell", ["psi+", "psi-"])
def test_ideal_bell_state_shows_no_errors(bell):
    q = feu.analytic_qbers(qs.dm(qs.bell_state(bell)), bell, 1.0, 1.0)
    assert q == pytest.approx({"X": 0.0, "Y": 0.0, "Z": 0.0}, abs=1e-12)


def test_wrong_bell_label_flips_x_and_y():
    q = feu.analytic_qbers(qs.dm(qs.bell_state("psi-")), "psi+", 1.0, 1.0)
    assert q == pytest.approx({"X": 1.0, "Y": 1.0, "Z": 0.0}, abs=1e-12)


@given(st.floats(0.25, 1.0))
def test_qber_fidelity_of_werner_state_is_exact(f):
    bell = qs.dm(qs.bell_state("psi+"))
    werner = f * bell + (1 - f) / 3 * (np.eye(4) - bell)
    q = feu.analytic_qbers(werner, "psi+", 1.0, 1.0)
    assert feu.qber_to_fidelity(q["X"], q["Y"], q["Z"]) == pytest.approx(f, abs=1e-9)


def test_window_rolls_over():
    w = feu.QberWindow(4)
    for b, e in [("X", True), ("Y", False), ("Z", False), ("X", False), ("Z", True)]:
        w.add(b, e)
    assert len(w) == 4
    assert w.count("X") == 1 and w.qber("X") == 0.0
    assert w.qber("Z") == 0.5
    assert w.fidelity() == pytest.approx(1 - (0 + 0 + 0.5) / 2)
    with pytest.raises(ValueError):
        w.add("W", True)
    with pytest.raises(ValueError):
        feu.QberWindow(0)


def test_window_needs_every_basis():
    w = feu.QberWindow()
    w.add("X", False)
    w.add("Z", False)
    assert w.qber("Y") is None and w.fidelity() is None and w.fidelity_std() is None


def test_estimate_within_three_sigma_of_channel_fidelity():
    rho = qs.dm(qs.bell_state("psi+"))
    rho = qs.apply_kraus(rho, qs.kraus_depolarizing(0.85), [0])
    rho = qs.apply_kraus(rho, qs.kraus_dephasing(0.1), [1])
    q = feu.analytic_qbers(rho, "psi+", 0.95, 0.995)
    truth = feu.qber_to_fidelity(q["X"], q["Y"], q["Z"])
    w = sample_window(rho, "psi+", 0.95, 0.995, 2000, seed=11)
    assert abs(w.fidelity() - truth) <= 3 * w.fidelity_std()


def test_lab_predictions_at_point_one():
    assert feu.predict_herald_fidelity(LAB, 0.1) == pytest.approx(0.8238, abs=1e-4)
    assert feu.predict_measure_fidelity(LAB, 0.1) == pytest.approx(0.7638, abs=1e-4)
    assert feu.predict_keep_fidelity(LAB, 0.1) == pytest.approx(0.7416, abs=1e-4)


@pytest.mark.parametrize("lp,kind,alpha", [
    (LAB, "K", 0.2333), (LAB, "M", 0.2605), (QLINK, "K", 0.0959), (QLINK, "M", 0.2461),
])
def test_alpha_for_default_fidelity(lp, kind, alpha):
    f = feu.Feu(lp)
    a = f.alpha_for(kind, 0.64)
    assert a == pytest.approx(alpha, abs=1e-4)
    assert f.predicted_fidelity(kind, a) >= 0.64 - 1e-9
    assert f.predicted_fidelity(kind, a * 1.01) < 0.64


def test_alpha_for_unreachable_and_override():
    assert feu.Feu(LAB).alpha_for("K", 0.99) is None
    assert feu.Feu(LAB, alpha_override=0.3).alpha_for("K", 0.99) == 0.3
    with pytest.raises(ValueError):
        feu.Feu(LAB).alpha_for("Q", 0.5)


def test_alpha_search_handles_non_monotone_low_end():
    f = feu.Feu(QLINK)
    series = f.table.fidelity_keep
    peak = int(np.argmax(series))
    assert 0 < peak < len(series) - 1  # rises from the dark-count floor, then falls
    target = (series[0] + series[peak]) / 2
    a = f.alpha_for("K", target)
    assert a > f.table.alphas[peak]
    assert f.predicted_fidelity("K", a) >= target - 1e-9


def test_minimum_completion_time():
    f = feu.Feu(LAB)
    a = f.alpha_for("K", 0.64)
    expected = 3 * 1.1 / f.p_success(a) * LAB.cycle_ns
    assert f.min_completion_ns("K", 0.64, 3, 1.1) == pytest.approx(expected)
    assert f.min_completion_ns("K", 0.99, 3, 1.1) is None


def test_record_test_updates_estimate():
    f = feu.Feu(LAB, window=10)
    for b in feu.BASES:
        f.record_test("M", b, "psi+", 0, 1 if b == "Z" else 0)
    assert f.estimate("M") == 1.0
    assert f.estimate("K") is None
    assert math.isclose(f.windows["M"].fidelity_std(), 0.0)
