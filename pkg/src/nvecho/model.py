"""Core state containers: sub-ensemble grid, drive waveform, state and traces."""

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .params import ValidationError, _require


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubEnsembleGrid:
    """Discrete homogeneous spin bins.

    Attributes
    ----------
    delta : ndarray
        Detuning of each bin from ``omega_s`` (rad/s).
    g : ndarray
        Single-spin coupling of each bin (rad/s), non-negative.
    N : ndarray
        Spin count of each bin (real, non-negative).
    omega_s : float
        Rotating-frame reference (rad/s).
    M_delta, M_g : int
        Frequency and coupling bin counts; bins are stored frequency-major.
    g_ens2 : float
        Sum of ``N g**2``; recomputed when omitted.
    """

    delta: np.ndarray
    g: np.ndarray
    N: np.ndarray
    omega_s: float
    M_delta: int = 0
    M_g: int = 1
    g_ens2: float = -1.0

    def __post_init__(self):
        object.__setattr__(self, "delta", _frozen(self.delta))
        object.__setattr__(self, "g", _frozen(self.g))
        object.__setattr__(self, "N", _frozen(self.N))
        m = self.delta.size
        _require(self.delta.ndim == 1 and self.g.shape == (m,) and self.N.shape == (m,),
                 "bins", "delta, g and N must be 1-D arrays of equal length")
        _require(np.all(np.isfinite(self.delta)) and np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.N)),
                 "bins", "non-finite bin parameter")
        _require(np.all(self.N >= 0), "N", "spin counts must be non-negative")
        _require(np.all(self.g >= 0), "g", "couplings must be non-negative")
        if self.M_delta == 0:
            object.__setattr__(self, "M_delta", m // max(self.M_g, 1))
        _require(self.M_delta * self.M_g == m, "M_delta", "M_delta * M_g must equal the bin count")
        total = float(np.sum(self.N * self.g**2))
        if self.g_ens2 < 0:
            object.__setattr__(self, "g_ens2", total)
        _require(abs(total - self.g_ens2) <= 1e-9 * max(total, self.g_ens2, 1e-300),
                 "g_ens2", "inconsistent with sum of N g^2")

    @property
    def size(self):
        return self.delta.size

    @property
    def g_ens(self):
        return math.sqrt(self.g_ens2)

    @property
    def omega(self):
        return self.omega_s + self.delta

    def scaled(self, g_factor=1.0, N_factor=1.0):
        """Grid with couplings and spin counts multiplied by constants."""
        return SubEnsembleGrid(self.delta, self.g * g_factor, self.N * N_factor, self.omega_s,
                               self.M_delta, self.M_g)


@dataclass(frozen=True)
class Segment:
    """One drive pulse.

    ``beta = beta_R + 1j beta_I`` in sqrt(photons/s); ``detuning`` (rad/s) is
    relative to the frame frequency; ``ramp`` is the raised-cosine edge
    length (s), clipped to half the duration.
    """

    t_start: float
    duration: float
    beta_R: float
    beta_I: float = 0.0
    detuning: float = 0.0
    ramp: float = 10e-9

    def __post_init__(self):
        for name in ("t_start", "duration", "beta_R", "beta_I", "detuning", "ramp"):
            _require(math.isfinite(getattr(self, name)), name, "non-finite value")
        _require(self.t_start >= 0, "t_start", "pulse must start at t >= 0")
        _require(self.duration > 0, "duration", "duration must be positive")
        _require(self.ramp >= 0, "ramp", "edge length must be non-negative")

    @property
    def t_end(self):
        return self.t_start + self.duration

    @property
    def beta(self):
        return complex(self.beta_R, self.beta_I)

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        u = t - self.t_start
        inside = (u >= 0) & (u < self.duration)
        env = inside.astype(float)
        r = min(self.ramp, 0.5 * self.duration)
        if r > 0:
            rise = inside & (u < r)
            env[rise] = 0.5 * (1.0 - np.cos(np.pi * u[rise] / r))
            v = self.duration - u
            fall = inside & (v < r)
            env[fall] = 0.5 * (1.0 - np.cos(np.pi * v[fall] / r))
        return env


@dataclass(frozen=True)
class DriveWaveform:
    """Piecewise drive beta(t) built from non-overlapping segments."""

    segments: Tuple[Segment, ...] = ()

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for i in range(1, len(segs)):
            if segs[i].t_start < segs[i - 1].t_end - 1e-15:
                raise ValidationError("segments", f"segment {i} overlaps or precedes segment {i - 1}")

    def __call__(self, t):
        """Complex drive amplitude at times ``t`` (array or scalar)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for s in self.segments:
            env = s.envelope(t)
            on = env > 0
            if np.any(on):
                out[on] += s.beta * env[on] * np.exp(-1j * s.detuning * t[on])
        return out

    @property
    def t_end(self):
        return self.segments[-1].t_end if self.segments else 0.0

    def energy(self):
        """Input photon number, integral of |beta|^2 over all segments."""
        total = 0.0
        for s in self.segments:
            total += segment_energy(s)
        return total


def segment_energy(seg, n=20001):
    t = np.linspace(seg.t_start, seg.t_end, n)
    # envelope is zero at t_end by the half-open convention; close it smoothly
    env = seg.envelope(t)
    env[-1] = 0.0 if seg.ramp > 0 else 1.0
    return abs(seg.beta) ** 2 * np.trapezoid(env**2, t)


@dataclass
class SystemState:
    """Cavity quadratures and per-bin collective spin components."""

    X: float
    P: float
    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray
    t: float = 0.0

    def copy(self):
        return SystemState(self.X, self.P, self.Sx.copy(), self.Sy.copy(), self.Sz.copy(), self.t)

    @property
    def a_c(self):
        return (self.X + 1j * self.P) / math.sqrt(2.0)

    def bloch_norm(self):
        return np.sqrt(self.Sx**2 + self.Sy**2 + self.Sz**2)

    def as_vector(self):
        return np.concatenate([[self.X, self.P], self.Sx, self.Sy, self.Sz])

    @classmethod
    def from_vector(cls, v, t=0.0):
        m = (v.size - 2) // 3
        return cls(float(v[0]), float(v[1]), v[2:2 + m].copy(), v[2 + m:2 + 2 * m].copy(), v[2 + 2 * m:].copy(), t)


@dataclass
class TimeTrace:
    """Uniformly sampled cavity and reflected-field record."""

    t: np.ndarray
    X: np.ndarray
    P: np.ndarray
    beta: np.ndarray
    a_R: np.ndarray
    kappa: float
    dt: float
    final: SystemState = None
    snapshots: Dict[float, SystemState] = field(default_factory=dict)

    @property
    def a_c(self):
        return (self.X + 1j * self.P) / math.sqrt(2.0)
