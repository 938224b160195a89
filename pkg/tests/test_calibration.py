import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from qudit_compiler.calibration import (
    CalibrationParams,
    ConfusionMatrix,
    RepetitionObjective,
    apply_calibration,
    calibrate,
    spam_correct,
)
from qudit_compiler.compiler import CompileRequest, compile_gate
from qudit_compiler.core import SSW02, haar_random_unitary, unitary_superoperator
from qudit_compiler.qpu import VirtualQpu
from qudit_compiler.readout import SingularConfusionError, sample_counts
from qudit_compiler.transmon import ControlPulse, qudit_device

from oracles import simplex_least_squares_grid

OMEGA_C = -104.5
pos = st.floats(min_value=0.2, max_value=5.0)


def random_pulse(seed, n=512, rate=4.0):
    rng = np.random.default_rng(seed)
    return ControlPulse(rng.normal(0, 5, n), rng.normal(0, 5, n), rate)


def tone(freq_mhz, n=1000, rate=1.0):
    t = np.arange(n) / rate
    return ControlPulse.from_signal(np.exp(2j * np.pi * freq_mhz * 1e-3 * t), rate)


# ---- spectral transform -----------------------------------------------------


def test_identity_transform():
    pulse = random_pulse(0)
    out = apply_calibration(pulse, CalibrationParams(1.0, 1.0, OMEGA_C))
    np.testing.assert_allclose(out.p, pulse.p, atol=1e-10)
    np.testing.assert_allclose(out.q, pulse.q, atol=1e-10)
    assert out.sample_rate == pulse.sample_rate and out.n_samples == pulse.n_samples


def test_tone_in_01_band_unaffected_by_sigma():
    pulse = tone(0.0)
    out = apply_calibration(pulse, CalibrationParams(2.0, 1.8, OMEGA_C))
    np.testing.assert_allclose(out.signal, 2.0 * pulse.signal, atol=1e-10)


def test_tone_in_12_band_scaled_by_sigma():
    pulse = tone(-209.0)
    out = apply_calibration(pulse, CalibrationParams(1.0, 1.8, OMEGA_C))
    np.testing.assert_allclose(out.signal, 1.8 * pulse.signal, atol=1e-10)


@given(st.integers(0, 1000), pos, pos)
@settings(max_examples=30, deadline=None)
def test_inverse_round_trip(seed, gamma, sigma):
    pulse = random_pulse(seed)
    cal = CalibrationParams(gamma, sigma, OMEGA_C)
    back = apply_calibration(apply_calibration(pulse, cal), cal.inverse())
    np.testing.assert_allclose(back.p, pulse.p, atol=1e-9)
    np.testing.assert_allclose(back.q, pulse.q, atol=1e-9)


@given(st.integers(0, 1000), pos, pos, st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_linearity(seed, gamma, sigma, a, b):
    x, y = random_pulse(seed), random_pulse(seed + 1)
    cal = CalibrationParams(gamma, sigma, OMEGA_C)
    combo = ControlPulse.from_signal(a * x.signal + b * y.signal, x.sample_rate)
    lhs = apply_calibration(combo, cal).signal
    rhs = a * apply_calibration(x, cal).signal + b * apply_calibration(y, cal).signal
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_params_validation():
    with pytest.raises(ValueError):
        CalibrationParams(0.0, 1.0)
    with pytest.raises(ValueError):
        CalibrationParams(1.0, float("inf"))
    with pytest.raises(ValueError):
        apply_calibration(ControlPulse(np.zeros(0), np.zeros(0), 1.0), CalibrationParams())
    assert CalibrationParams.for_device(qudit_device()).omega_c == pytest.approx(OMEGA_C)


# ---- SPAM correction --------------------------------------------------------


def test_confusion_validation():
    ConfusionMatrix.symmetric(3, 0.05)
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[0.9, 0.2], [0.2, 0.8]]))
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[1.1, 0.0], [-0.1, 1.0]]))
    c = ConfusionMatrix.symmetric(3, 0.05).matrix
    np.testing.assert_allclose(c.sum(axis=0), 1, atol=1e-12)


def test_spam_identity():
    np.testing.assert_allclose(spam_correct([50, 30, 20], ConfusionMatrix.identity(3)), [0.5, 0.3, 0.2], atol=1e-15)


def test_spam_recovers_population():
    conf = ConfusionMatrix.symmetric(3, 0.05)
    rng = np.random.default_rng(0)
    for p in ([0.6, 0.3, 0.1], [0.2, 0.0, 0.8], [1 / 3, 1 / 3, 1 / 3]):
        counts = sample_counts(conf.apply(np.array(p)), 1_000_000, rng)
        np.testing.assert_allclose(spam_correct(counts, conf), p, atol=5e-3)


def test_spam_projects_negative_solution():
    conf = ConfusionMatrix.symmetric(3, 0.05)
    counts = np.array([960, 40, 0])  # inverts to a negative third component
    assert np.linalg.solve(conf.matrix, counts / 1000).min() < 0
    p = spam_correct(counts, conf)
    assert p.min() >= 0 and p.sum() == pytest.approx(1, abs=1e-12)


@given(st.lists(st.integers(0, 10_000), min_size=3, max_size=3).filter(lambda c: sum(c) > 0), st.floats(0.0, 0.2))
@settings(max_examples=60, deadline=None)
def test_spam_output_on_simplex_and_optimal(counts, err):
    conf = ConfusionMatrix.symmetric(3, err)
    p = spam_correct(counts, conf)
    assert p.min() >= 0 and p.sum() == pytest.approx(1, abs=1e-12)
    f = np.array(counts, dtype=float) / sum(counts)
    _, grid_cost = simplex_least_squares_grid(conf.matrix, f, n=120)
    assert np.sum((conf.matrix @ p - f) ** 2) <= grid_cost + 1e-12


def test_spam_singular_confusion():
    c = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularConfusionError):
        spam_correct([1, 2, 3], ConfusionMatrix(c))


def test_confusion_from_counts():
    true = ConfusionMatrix.symmetric(3, 0.03)
    rng = np.random.default_rng(4)
    counts = np.stack([sample_counts(true.matrix[:, j], 200_000, rng) for j in range(3)], axis=1)
    est = ConfusionMatrix.from_counts(counts)
    np.testing.assert_allclose(est.matrix, true.matrix, atol=3e-3)


# ---- closed-loop identification ---------------------------------------------


@pytest.fixture(scope="module")
def ssw02_pulse(ssw02_result):
    return ssw02_result.synthesis_pulse


def make_qpu(distortion=None, seed=1):
    dev = qudit_device()
    cal = None if distortion is None else CalibrationParams.for_device(dev, *distortion)
    return VirtualQpu(dev, confusion=ConfusionMatrix.symmetric(3, 0.03), hidden_distortion=cal, seed=seed)


def test_objective_zero_at_truth_without_shot_noise(ssw02_pulse):
    qpu = make_qpu((0.93, 1.8))
    obj = RepetitionObjective(ssw02_pulse, qpu, n_reps=4, shots=None)
    assert obj(0.93, 1.8) < 1e-18
    assert obj(1.0, 1.0) > 1e-3


def test_calibrate_rejects_bad_inputs(ssw02_pulse):
    qpu = make_qpu()
    with pytest.raises(ValueError):
        calibrate(ssw02_pulse, np.eye(3), qpu)
    with pytest.raises(ValueError):
        calibrate(ssw02_pulse, SSW02, qpu, CalibrationParams(2.0, 1.0, OMEGA_C))
    with pytest.raises(ValueError):
        calibrate(ssw02_pulse, SSW02, qpu, fit=("omega_c",))


@pytest.fixture(scope="module")
def distorted_report(ssw02_pulse):
    return calibrate(ssw02_pulse, SSW02, make_qpu((0.93, 1.8)), shots=200_000)


@pytest.mark.slow
def test_calibrate_undistorted(ssw02_pulse):
    rep = calibrate(ssw02_pulse, SSW02, make_qpu(), shots=200_000)
    assert rep.converged
    assert rep.params.gamma == pytest.approx(1.0, rel=1e-2)
    assert rep.params.sigma == pytest.approx(1.0, rel=1e-2)


@pytest.mark.slow
def test_calibrate_distorted_trace(distorted_report):
    rep = distorted_report
    assert rep.converged, rep.message
    residuals = [r for _, _, r in rep.trace]
    assert all(b <= a for a, b in zip(residuals, residuals[1:]))
    assert rep.params.gamma == pytest.approx(0.93, rel=2e-2)
    assert rep.params.sigma == pytest.approx(1.8, rel=2e-2)


@pytest.mark.slow
def test_sigma_only_refinement(ssw02_pulse):
    init = CalibrationParams(0.93, 1.5, OMEGA_C)
    rep = calibrate(ssw02_pulse, SSW02, make_qpu((0.93, 1.8), seed=5), init, fit=("sigma",), shots=200_000)
    assert rep.params.gamma == 0.93
    assert all(g == 0.93 for g, _, _ in rep.trace)
    assert rep.params.sigma == pytest.approx(1.8, rel=2e-2)


def exact_fidelity(qpu, pulse, target):
    """Entanglement fidelity tr(S_U^dag S)/d^2 of the played channel."""
    s = qpu.channel(pulse)
    su = unitary_superoperator(target)
    return float(np.real(np.trace(su.conj().T @ s))) / target.shape[0] ** 2


@pytest.mark.slow
def test_calibration_transfer(distorted_report):
    """Shared sSW02 parameters lose little against per-gate optimal ones."""
    dev = qudit_device()
    qpu = make_qpu((0.93, 1.8), seed=9)
    shared = distorted_report.params
    f_shared, f_best = [], []
    for i in range(4):
        u = haar_random_unitary(3, seed=100 + i, special=True)
        pulse = compile_gate(CompileRequest(u, 220.0, seed=i), dev).synthesis_pulse

        def loss(x):
            g, s = x
            if g <= 0 or s <= 0:
                return 1.0
            return -exact_fidelity(qpu, apply_calibration(pulse, CalibrationParams(g, s, OMEGA_C)), u)

        f_shared.append(-loss([shared.gamma, shared.sigma]))
        opt = minimize(loss, [shared.gamma, shared.sigma], method="Nelder-Mead", options={"xatol": 1e-4, "fatol": 1e-8})
        f_best.append(max(-opt.fun, f_shared[-1]))
    gap = np.mean(f_best) - np.mean(f_shared)
    print(f"mean fidelity shared {np.mean(f_shared):.5f} per-gate {np.mean(f_best):.5f} gap {gap:.2e}")
    assert gap <= 0.015
