import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvecho.echo import (EchoRecord, EchoReport, FitError, PulseSpec, build_2pe, default_window, detect_echoes,
                         efficiency_prefactor, fit_biexp_decay, onset_power, retrieval_efficiency, shift_refocus)
from nvecho.model import TimeTrace
from nvecho.params import BiExp, ValidationError
from nvecho.units import TWO_PI

KAPPA = TWO_PI * 18e6
TIMES = [2.0e-6, 3.4e-6, 4.8e-6]
PHASES = [-0.7, 0.2, 1.1]


def _seq(detuning=TWO_PI * 2e6, tau=12e-6, phi_r=0.1):
    thetas = [(t, 40.0, p, 0.5e-6) for t, p in zip(TIMES, PHASES)]
    return build_2pe(thetas, (tau, 1e5, phi_r, 1e-6), detuning=detuning)


def _mirror_trace(seq, gains, dt=2e-9, noise=0.0):
    """Reflected field holding scaled copies of every input pulse at its echo time."""
    t = np.arange(0.0, 2 * seq.tau, dt)
    aR = np.zeros(t.size, complex)
    rng = np.random.default_rng(0)
    for p, te, k in zip(seq.thetas, seq.expected_times, gains):
        seg = PulseSpec(te, p.duration, p.amplitude, -(p.phase - seq.refocus.phase), p.ramp).segment()
        env = seg.envelope(t)
        aR += np.sqrt(k) * seg.beta * env
    aR = aR * np.exp(-1j * seq.detuning * t) + noise * (rng.normal(size=t.size) + 1j * rng.normal(size=t.size))
    z = np.zeros(t.size)
    return TimeTrace(t, z, z, np.zeros(t.size, complex), aR, KAPPA, dt)


def test_sequence_ordering_and_times():
    seq = build_2pe([(4.8e-6, 1.0, 0.0, 0.5e-6), (2.0e-6, 1.0, 0.0, 0.5e-6)], (10e-6, 1.0, 0.0, 1e-6))
    assert [p.t_center for p in seq.thetas] == [2.0e-6, 4.8e-6]
    assert np.allclose(seq.expected_times, [18e-6, 15.2e-6])
    assert seq.tau == 10e-6
    with pytest.raises(ValidationError):
        build_2pe([(9.8e-6, 1.0, 0.0, 0.5e-6)], (10e-6, 1.0, 0.0, 1e-6))
    with pytest.raises(ValidationError):
        build_2pe([], (10e-6, 1.0, 0.0, 1e-6))
    moved = shift_refocus(seq, 12e-6)
    assert moved.tau == pytest.approx(14e-6) and moved.thetas == seq.thetas
    assert np.all(seq.scaled(0.0).input_energies() == 0)


def test_default_window():
    seq = _seq()
    assert default_window(seq, KAPPA) == pytest.approx(0.5e-6)
    assert default_window(seq, 1e6) == pytest.approx(3e-6)


def test_mirror_echoes_have_unit_efficiency():
    seq = _seq()
    rep = detect_echoes(_mirror_trace(seq, [1.0, 1.0, 1.0]), seq)
    assert np.allclose(rep.efficiencies, 1.0, rtol=1e-3)
    assert np.allclose(retrieval_efficiency(rep), rep.efficiencies)
    for e in rep.echoes:
        assert abs(e.echo_time - e.expected_time) <= 0.5 * 0.5e-6
        want = -(e.phase_input - rep.phase_refocus)
        assert np.angle(np.exp(1j * (e.echo_phase - want))) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(1e-4, 1.0), min_size=3, max_size=3))
def test_efficiency_scales_with_echo_energy(gains):
    seq = _seq()
    rep = detect_echoes(_mirror_trace(seq, gains), seq)
    assert np.allclose(rep.efficiencies, gains, rtol=1e-3)


def test_reference_subtraction_removes_background():
    seq = _seq()
    clean = _mirror_trace(seq, [0.5, 0.3, 0.2])
    t = clean.t
    tail = 50.0 * np.exp(-(t - seq.refocus.t_end) / 3e-6) * (t > seq.refocus.t_end) * np.exp(-1j * seq.detuning * t)
    z = np.zeros(t.size)
    ref = TimeTrace(t, z, z, clean.beta, tail, KAPPA, clean.dt)
    dirty = TimeTrace(t, z, z, clean.beta, clean.a_R + tail, KAPPA, clean.dt)
    a = detect_echoes(dirty, seq, reference=ref)
    b = detect_echoes(clean, seq)
    assert np.allclose(a.efficiencies, b.efficiencies, rtol=1e-12)
    other = TimeTrace(t[:-1], z[:-1], z[:-1], clean.beta[:-1], tail[:-1], KAPPA, clean.dt)
    with pytest.raises(ValidationError):
        detect_echoes(dirty, seq, reference=other)


def test_zero_trace_gives_zero_echoes():
    seq = _seq()
    rep = detect_echoes(_mirror_trace(seq, [0.0, 0.0, 0.0]), seq)
    assert np.all(rep.efficiencies == 0)
    assert all(e.echo_area == 0 for e in rep.echoes)


def test_window_checks():
    seq = _seq()
    tr = _mirror_trace(seq, [1.0, 1.0, 1.0])
    with pytest.raises(ValidationError):
        detect_echoes(tr, seq, window=0.0)
    with pytest.raises(ValidationError):
        detect_echoes(tr, seq, window=0.5e-6, phase_window=0.6e-6)
    with pytest.raises(ValidationError, match="overlaps"):
        detect_echoes(tr, seq, window=7e-6)
    short = TimeTrace(tr.t[:3000], tr.X[:3000], tr.P[:3000], tr.beta[:3000], tr.a_R[:3000], KAPPA, tr.dt)
    with pytest.raises(ValidationError, match="outside"):
        detect_echoes(short, seq)


def test_retrieval_efficiency_needs_input():
    rec = EchoRecord(0, 1e-6, 0.0, 0.0, 2e-6, 2e-6, 1.0, 1.0, 0.0, np.nan)
    with pytest.raises(ValidationError):
        retrieval_efficiency(EchoReport(1e-6, 0.0, 1e-7, [rec]))


def test_report_to_dict():
    seq = _seq()
    d = detect_echoes(_mirror_trace(seq, [1.0, 1.0, 1.0]), seq).to_dict()
    assert set(d) == {"tau", "phase_refocus", "window", "echoes"}
    assert len(d["echoes"]) == 3 and "efficiency" in d["echoes"][0]


def test_biexp_fit_recovers_parameters():
    tau = np.linspace(2e-6, 40e-6, 25)
    truth = BiExp(4.7e-6, 14.3e-6, 0.78, 0.22)
    y = 3.0 * (0.78 * np.exp(-2 * tau / 4.7e-6) + 0.22 * np.exp(-2 * tau / 14.3e-6))
    fit = fit_biexp_decay(tau, y)
    assert not fit.single
    assert fit.T2A == pytest.approx(truth.T2A, rel=1e-4)
    assert fit.T2B == pytest.approx(truth.T2B, rel=1e-4)
    assert fit.A == pytest.approx(0.78, rel=1e-4)
    assert fit.scale == pytest.approx(3.0, rel=1e-4)
    assert fit(0.0) == pytest.approx(1.0)


def test_biexp_fit_prefers_single_exponential():
    tau = np.linspace(2e-6, 20e-6, 12)
    y = 2.0 * np.exp(-2 * tau / 6e-6) * (1 + 1e-4 * np.random.default_rng(0).normal(size=tau.size))
    fit = fit_biexp_decay(tau, y)
    assert fit.single and fit.B == 0.0
    assert fit.T2A == pytest.approx(6e-6, rel=1e-3)


def test_biexp_fit_rejects_bad_input():
    with pytest.raises(ValidationError):
        fit_biexp_decay(np.arange(5.0), np.ones(5))
    with pytest.raises(ValidationError):
        fit_biexp_decay(np.arange(6.0), np.array([1, 2, np.nan, 4, 5, 6.0]))
    assert issubclass(FitError, RuntimeError)


def test_prefactor_of_exact_decay():
    seq = _seq()
    f = lambda tau: np.exp(-2 * np.asarray(tau) / 4.7e-6)
    gains = [0.21 * f(0.5 * (te - p.t_center)) ** 2 for p, te in zip(seq.thetas, seq.expected_times)]
    rep = detect_echoes(_mirror_trace(seq, gains), seq)
    c, ratios = efficiency_prefactor([rep], f)
    assert c == pytest.approx(0.21, rel=1e-3)
    assert ratios.shape == (3,)


def test_onset_power_interpolates():
    p = np.array([-50.0, -45.0, -40.0, -35.0])
    a = np.array([0.0, 2.0, 6.0, 8.0])
    assert onset_power(p, a) == pytest.approx(-42.5)
    assert onset_power(p, np.array([5.0, 6.0, 7.0, 8.0])) == -50.0
