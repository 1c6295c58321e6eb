"""Two-pulse echo sequences, echo detection, efficiencies and sweeps."""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import f as f_dist

from .dynamics import bi_T2_run, integrate
from .model import DriveWaveform, Segment, segment_energy
from .params import ValidationError
from .units import drive_amplitude


@dataclass(frozen=True)
class PulseSpec:
    """Rectangular pulse with raised-cosine edges.

    ``amplitude`` is ``|beta|`` in sqrt(photons/s); ``phase`` in radians is
    referenced to the drive carrier.
    """

    t_center: float
    duration: float
    amplitude: float
    phase: float = 0.0
    ramp: float = 10e-9

    @property
    def t_start(self):
        return self.t_center - 0.5 * self.duration

    @property
    def t_end(self):
        return self.t_center + 0.5 * self.duration

    def segment(self, detuning=0.0):
        return Segment(self.t_start, self.duration, self.amplitude * math.cos(self.phase),
                       self.amplitude * math.sin(self.phase), detuning, self.ramp)


def _as_pulse(p, ramp):
    if isinstance(p, PulseSpec):
        return p
    t, amp, phase, duration = p
    return PulseSpec(float(t), float(duration), float(amp), float(phase), ramp)


@dataclass(frozen=True)
class TwoPulseEcho:
    """Stored pulses followed by one refocusing pulse.

    ``detuning`` is the drive carrier relative to the frame frequency
    (rad/s). The refocusing pulse centre defines ``tau``; the echo of a
    pulse centred at ``t_i`` is expected at ``2 tau - t_i``.
    """

    thetas: Tuple[PulseSpec, ...]
    refocus: PulseSpec
    detuning: float = 0.0
    waveform: DriveWaveform = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        thetas = tuple(sorted(self.thetas, key=lambda p: p.t_center))
        object.__setattr__(self, "thetas", thetas)
        if not thetas:
            raise ValidationError("thetas", "need at least one stored pulse")
        if thetas[-1].t_end > self.refocus.t_start:
            raise ValidationError("refocus", "stored pulses must end before the refocusing pulse")
        segs = [p.segment(self.detuning) for p in thetas] + [self.refocus.segment(self.detuning)]
        object.__setattr__(self, "waveform", DriveWaveform(tuple(segs)))

    @property
    def tau(self):
        return self.refocus.t_center

    @property
    def expected_times(self):
        return np.array([2.0 * self.tau - p.t_center for p in self.thetas])

    def input_energies(self):
        """Photon number of each stored pulse."""
        return np.array([segment_energy(p.segment()) for p in self.thetas])

    def with_refocus(self, **changes):
        return replace(self, refocus=replace(self.refocus, **changes))

    def scaled(self, factor):
        """All stored-pulse amplitudes multiplied by ``factor``."""
        return replace(self, thetas=tuple(replace(p, amplitude=p.amplitude * factor) for p in self.thetas))


def build_2pe(thetas, refocus, detuning=0.0, ramp=10e-9):
    """Assemble a two-pulse echo sequence.

    Parameters
    ----------
    thetas : sequence of PulseSpec or (t_i, amplitude, phi_i, duration)
        Stored pulses; ``t_i`` is the pulse centre (s).
    refocus : PulseSpec or (tau, amplitude, phi_r, duration)
    detuning : float
        Carrier relative to the frame frequency (rad/s).
    ramp : float
        Edge length used for tuple inputs (s).

    Returns
    -------
    TwoPulseEcho
    """
    return TwoPulseEcho(tuple(_as_pulse(p, ramp) for p in thetas), _as_pulse(refocus, ramp), float(detuning))


@dataclass
class EchoRecord:
    """Input pulse and the echo detected for it."""

    index: int
    t_input: float
    phase_input: float
    input_energy: float
    expected_time: float
    echo_time: float
    echo_energy: float
    echo_area: float
    echo_phase: float
    efficiency: float


@dataclass
class EchoReport:
    """Echoes of one sequence, listed in input order."""

    tau: float
    phase_refocus: float
    window: float
    echoes: List[EchoRecord]

    def to_dict(self):
        return {"tau": self.tau, "phase_refocus": self.phase_refocus, "window": self.window,
                "echoes": [asdict(e) for e in self.echoes]}

    @property
    def efficiencies(self):
        return np.array([e.efficiency for e in self.echoes])


def default_window(seq, kappa):
    """Half-width of the echo window: ``max(pulse duration, 3 / kappa)``."""
    return max(max(p.duration for p in seq.thetas), 3.0 / kappa)


def demodulated(trace, detuning):
    """Reflected field referred to the drive carrier."""
    return trace.a_R * np.exp(1j * detuning * trace.t)


def detect_echoes(trace, seq, window=None, reference=None, phase_window=None):
    """Integrate the reflected field around every expected echo time.

    A complex baseline, the mean field before the first pulse, is removed
    first. Energy is the integral of ``|a_R|**2`` and area the integral of
    ``|a_R|`` over the full window. The phase is the argument of the
    integral of ``a_R`` over the central ``+-phase_window``.

    Parameters
    ----------
    trace : TimeTrace
    seq : TwoPulseEcho
    window : float, optional
        Half-width (s) of each detection window.
    reference : TimeTrace, optional
        Run of the same sequence with the stored pulses switched off. Its
        reflected field, mostly the free decay after the refocusing pulse,
        is subtracted before analysis.
    phase_window : float, optional
        Half-width (s) used for the phase; defaults to half the window.

    Returns
    -------
    EchoReport
    """
    half = default_window(seq, trace.kappa) if window is None else float(window)
    if not half > 0:
        raise ValidationError("window", "window must be positive")
    hp = 0.5 * half if phase_window is None else float(phase_window)
    if not 0 < hp <= half:
        raise ValidationError("phase_window", "phase window must lie in (0, window]")
    r = seq.refocus
    s = demodulated(trace, seq.detuning)
    if reference is not None:
        if not np.array_equal(reference.t, trace.t):
            raise ValidationError("reference", "reference run must share the time grid")
        s = s - demodulated(reference, seq.detuning)
    pre = trace.t < seq.thetas[0].t_start
    if np.any(pre):
        s = s - np.mean(s[pre])
    energies = seq.input_energies()
    records = []
    for i, (p, te) in enumerate(zip(seq.thetas, seq.expected_times)):
        lo, hi = te - half, te + half
        if lo < r.t_end and hi > r.t_start:
            raise ValidationError("window", f"echo window of pulse {i} overlaps the refocusing pulse")
        m = (trace.t >= lo) & (trace.t <= hi)
        if np.count_nonzero(m) < 2:
            raise ValidationError("window", f"echo window of pulse {i} lies outside the trace")
        t, x = trace.t[m], s[m]
        p2 = np.abs(x) ** 2
        energy = float(np.trapezoid(p2, t))
        area = float(np.trapezoid(np.abs(x), t))
        t_echo = float(t[np.argmax(p2)])
        c = np.abs(t - te) <= hp
        phase = float(np.angle(np.trapezoid(x[c], t[c]))) if np.count_nonzero(c) > 1 else float(np.angle(x[0]))
        eff = energy / energies[i] if energies[i] > 0 else float("nan")
        records.append(EchoRecord(i, p.t_center, p.phase, float(energies[i]), float(te), t_echo, energy, area, phase,
                                  eff))
    return EchoReport(seq.tau, r.phase, half, records)


def retrieval_efficiency(report):
    """Echo energy over input energy for every stored pulse."""
    out = []
    for e in report.echoes:
        if not e.input_energy > 0:
            raise ValidationError("input_energy", f"pulse {e.index} carries no energy")
        out.append(e.echo_energy / e.input_energy)
    return np.array(out)


# ---------------------------------------------------------------------------
# decay fits


class FitError(RuntimeError):
    """Decay fit failed for every starting point."""


@dataclass
class BiExpFit:
    """``f(tau) = A exp(-2 tau / T2A) + B exp(-2 tau / T2B)`` with ``A + B = 1``.

    ``scale`` is the fitted ``f(0)`` of the raw data; ``cov`` is the
    covariance of ``(scale, A, T2A, T2B)`` (or of ``(scale, T2)`` when
    ``single`` is set, in which case ``B = 0`` and ``T2B = T2A``).
    """

    A: float
    B: float
    T2A: float
    T2B: float
    scale: float
    cov: np.ndarray
    single: bool
    rss: float

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.A * np.exp(-2 * tau / self.T2A) + self.B * np.exp(-2 * tau / self.T2B)


def _biexp(tau, s, a, t1, t2):
    return s * (a * np.exp(-2 * tau / t1) + (1 - a) * np.exp(-2 * tau / t2))


def _single(tau, s, t1):
    return s * np.exp(-2 * tau / t1)


def fit_biexp_decay(tau, amplitude, sigma=None, n_restarts=12, seed=0, alpha=0.01):
    """Least-squares bi-exponential fit of echo amplitude versus ``tau``.

    Restarts from random time constants spread over the data range. The
    single-exponential model is kept when an F-test of the residual
    reduction is not significant at level ``alpha``, when the two time
    constants merge, or when one weight vanishes.

    Parameters
    ----------
    tau : array_like
        Delays (s); the echo appears at ``2 tau``.
    amplitude : array_like
        Echo amplitudes, any scale.
    sigma : array_like, optional
        Per-point uncertainties.

    Returns
    -------
    BiExpFit
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(amplitude, dtype=float)
    if tau.size < 6:
        raise ValidationError("tau", "need at least 6 points")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(tau)):
        raise ValidationError("amplitude", "non-finite data")
    rng = np.random.default_rng(seed)
    span = 2 * (tau.max() - tau.min()) if tau.max() > tau.min() else 2 * tau.max()
    s0 = float(y[np.argmin(tau)]) * 1.2 if y[np.argmin(tau)] > 0 else float(np.max(np.abs(y)))
    lo_t, hi_t = 1e-3 * span, 1e3 * span

    try:
        p1, c1 = curve_fit(_single, tau, y, p0=(s0, span), sigma=sigma, bounds=([0, lo_t], [np.inf, hi_t]))
        rss1 = float(np.sum(((_single(tau, *p1) - y) / (1 if sigma is None else sigma)) ** 2))
    except (RuntimeError, ValueError):
        p1, c1, rss1 = None, None, np.inf

    best = None
    for _ in range(n_restarts):
        t1, t2 = np.sort(np.exp(rng.uniform(np.log(0.05 * span), np.log(5 * span), 2)))
        p0 = (s0, rng.uniform(0.2, 0.9), t1, t2 * 1.5)
        try:
            p, c = curve_fit(_biexp, tau, y, p0=p0, sigma=sigma, maxfev=20000,
                             bounds=([0, 0, lo_t, lo_t], [np.inf, 1, hi_t, hi_t]))
        except (RuntimeError, ValueError):
            continue
        rss = float(np.sum(((_biexp(tau, *p) - y) / (1 if sigma is None else sigma)) ** 2))
        if best is None or rss < best[2]:
            best = (p, c, rss)

    if best is None and p1 is None:
        raise FitError("decay fit did not converge")
    if best is not None:
        p, c, rss = best
        s, a, t1, t2 = p
        if t1 > t2:
            a, t1, t2 = 1 - a, t2, t1
            c = c[np.ix_([0, 1, 3, 2], [0, 1, 3, 2])]
        merged = abs(t2 - t1) < 0.02 * t2 or min(a, 1 - a) < 1e-3
        if rss > 0 and np.isfinite(rss1) and tau.size > 4:
            F = 0.5 * (rss1 - rss) / (rss / (tau.size - 4))
            p_value = float(f_dist.sf(F, 2, tau.size - 4))
        else:
            p_value = 0.0
        if p1 is None or not (merged or p_value > alpha):
            return BiExpFit(float(a), float(1 - a), float(t1), float(t2), float(s), c, False, rss)
    s, t = p1
    return BiExpFit(1.0, 0.0, float(t), float(t), float(s), c1, True, rss1)


def biexp_envelope(biexp):
    """Callable ``f(tau) = A exp(-2 tau / T2A) + B exp(-2 tau / T2B)``."""
    A, B, T2A, T2B = biexp.weight_A, biexp.weight_B, biexp.T2A, biexp.T2B
    return lambda tau: A * np.exp(-2 * np.asarray(tau) / T2A) + B * np.exp(-2 * np.asarray(tau) / T2B)


def efficiency_prefactor(reports, f):
    """Per-echo ``efficiency / f(tau_i)**2`` and its mean.

    ``tau_i`` is half the storage time of each pulse, ``echo time - t_i``.
    """
    ratios = []
    for rep in reports:
        for e in rep.echoes:
            ratios.append(e.efficiency / float(f(0.5 * (e.expected_time - e.t_input))) ** 2)
    ratios = np.array(ratios)
    return float(np.mean(ratios)), ratios


# ---------------------------------------------------------------------------
# simulation driver and sweeps


@dataclass
class EchoSimulation:
    """Everything needed to simulate a sequence besides the sequence itself."""

    grid: object
    cavity: object
    dec: object
    dt: float
    p_prime: float = 1.0
    backend: Optional[str] = None
    tail: float = 0.5e-6

    def t_end(self, seq, window=None):
        half = default_window(seq, self.cavity.kappa) if window is None else window
        return float(np.max(seq.expected_times)) + half + self.tail

    def run(self, seq, t_end=None):
        """Trace of one sequence and the bi-T2 diagnostic (NaN for a single T2)."""
        t_end = self.t_end(seq) if t_end is None else t_end
        if self.dec.biexp is not None:
            res = bi_T2_run(seq.waveform, self.grid, self.cavity, self.dec, self.dt, t_end,
                            window=(seq.refocus.t_start, seq.refocus.t_end), p_prime=self.p_prime,
                            backend=self.backend)
            return res.trace, res.diagnostic
        trace = integrate(seq.waveform, self.grid, self.cavity, self.dec, self.dt, t_end, p_prime=self.p_prime,
                          backend=self.backend)
        return trace, float("nan")

    def report(self, seq, window=None, subtract_reference=True, phase_window=None):
        """Echo report; by default the run without stored pulses is subtracted."""
        t_end = self.t_end(seq, window)
        trace, _ = self.run(seq, t_end)
        ref = self.run(seq.scaled(0.0), t_end)[0] if subtract_reference else None
        return detect_echoes(trace, seq, window, reference=ref, phase_window=phase_window)


@dataclass
class PowerSweep:
    powers_dBm: np.ndarray
    areas: np.ndarray
    energies: np.ndarray
    reports: list


def sweep_refocus_power(sim, seq, powers_dBm, window=None, **options):
    """Echo area and energy (summed over echoes) versus refocusing power.

    ``options`` are passed to :meth:`EchoSimulation.report`.
    """
    powers = np.asarray(powers_dBm, dtype=float)
    if powers.size < 3:
        raise ValidationError("powers", "need at least 3 powers")
    omega_d = sim.grid.omega_s + seq.detuning
    reports = []
    for p in powers:
        s = seq.with_refocus(amplitude=drive_amplitude(p, omega_d))
        reports.append(sim.report(s, window, **options))
    areas = np.array([sum(e.echo_area for e in r.echoes) for r in reports])
    energies = np.array([sum(e.echo_energy for e in r.echoes) for r in reports])
    return PowerSweep(powers, areas, energies, reports)


def onset_power(powers_dBm, areas, level=0.5):
    """Power (dBm) where the area first reaches ``level`` of its maximum.

    Linear interpolation in dBm between the bracketing sweep points.
    """
    p = np.asarray(powers_dBm, dtype=float)
    a = np.asarray(areas, dtype=float)
    target = level * np.max(a)
    k = int(np.argmax(a >= target))
    if k == 0:
        return float(p[0])
    return float(p[k - 1] + (target - a[k - 1]) * (p[k] - p[k - 1]) / (a[k] - a[k - 1]))


@dataclass
class TauSweep:
    taus: np.ndarray
    reports: list
    prefactor: float
    ratios: np.ndarray

    @property
    def efficiencies(self):
        return np.array([r.efficiencies for r in self.reports])


def shift_refocus(seq, tau):
    """Same pulses with the refocusing pulse ``tau`` after the first stored pulse."""
    return seq.with_refocus(t_center=seq.thetas[0].t_center + tau)


def sweep_tau(sim, seq, taus, f: Optional[Callable] = None, window=None, **options):
    """Echo reports versus delay and the least-squares prefactor against ``f``.

    ``taus`` are delays from the first stored pulse to the refocusing
    pulse centre. ``c`` minimizes ``sum (E_i - c f(tau_i)**2)**2``; without
    ``f`` it is fitted against 1. ``options`` go to :meth:`EchoSimulation.report`.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.size < 3:
        raise ValidationError("taus", "need at least 3 delays")
    reports = [sim.report(shift_refocus(seq, t), window, **options) for t in taus]
    f = (lambda t: np.ones_like(np.asarray(t, dtype=float))) if f is None else f
    eff = np.array([e.efficiency for r in reports for e in r.echoes])
    fv = np.array([float(f(0.5 * (e.expected_time - e.t_input))) for r in reports for e in r.echoes])
    c = float(np.sum(eff * fv**2) / np.sum(fv**4))
    return TauSweep(taus, reports, c, eff / fv**2)
