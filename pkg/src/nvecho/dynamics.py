"""Mean-value dynamics of the driven cavity and the spin bins.

The frame rotates at the grid frequency ``omega_s``. Per bin ``m``:

    dX/dt  = -kappa X + dcs P - sum g Sy / sqrt2 + 2 sqrt(kappa) beta_R
    dP/dt  = -kappa P - dcs X - sum g Sx / sqrt2 + 2 sqrt(kappa) beta_I
    dSx/dt = -gamma Sx - Delta Sy - sqrt2 g Sz P
    dSy/dt = -gamma Sy + Delta Sx - sqrt2 g Sz X
    dSz/dt = sqrt2 g (Sx P + Sy X) - gamma_par (Sz + N)

with ``dcs = omega_c - omega_s``. The reflected field is
``a_R = sqrt(2 kappa) a_c - beta``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kernels import rhs_arrays, run_rk4
from .model import SystemState, TimeTrace
from .params import ValidationError

SQRT2 = math.sqrt(2.0)


class IntegrationError(RuntimeError):
    """The state became non-finite; ``step`` and ``t`` locate the first bad step."""

    def __init__(self, step, t):
        super().__init__(f"non-finite state at step {step} (t = {t:.6e} s)")
        self.step = step
        self.t = t


def max_stable_dt(grid, cavity):
    """Largest step allowed: ``min(0.1/kappa, 0.1/max|Delta|, 0.1/g_ens)``."""
    limits = [0.1 / cavity.kappa]
    dmax = float(np.max(np.abs(grid.delta))) if grid.size else 0.0
    if dmax > 0:
        limits.append(0.1 / dmax)
    if grid.g_ens > 0:
        limits.append(0.1 / grid.g_ens)
    return min(limits)


def init_state(grid, p_prime=1.0):
    """Empty cavity and spins polarized to ``Sz = -N p_prime``."""
    if not 0 < p_prime <= 1:
        raise ValidationError("p_prime", "polarization must lie in (0, 1]")
    z = np.zeros(grid.size)
    return SystemState(0.0, 0.0, z.copy(), z.copy(), -p_prime * np.asarray(grid.N, dtype=float), 0.0)


def rhs(state, t, drive, grid, cavity, dec):
    """Time derivative of ``state`` as a :class:`SystemState`."""
    beta = complex(drive(np.array([t]))[0]) if drive is not None else 0j
    dX, dP, dsx, dsy, dsz = rhs_arrays(state.X, state.P, state.Sx, state.Sy, state.Sz, grid.g, grid.delta,
                                       grid.N, cavity.kappa, cavity.omega_c - grid.omega_s, dec.gamma_perp,
                                       dec.gamma_par, beta.real, beta.imag)
    return SystemState(float(dX), float(dP), dsx, dsy, dsz, t)


def jacobian(state, grid, cavity, dec):
    """Dense Jacobian of :func:`rhs` in the ordering of :meth:`SystemState.as_vector`."""
    M = grid.size
    n = 2 + 3 * M
    J = np.zeros((n, n))
    g = np.asarray(grid.g)
    gs = SQRT2 * g
    dcs = cavity.omega_c - grid.omega_s
    ix = np.arange(M)
    sx, sy, sz = 2 + ix, 2 + M + ix, 2 + 2 * M + ix
    J[0, 0] = J[1, 1] = -cavity.kappa
    J[0, 1] = dcs
    J[1, 0] = -dcs
    J[0, sy] = -g / SQRT2
    J[1, sx] = -g / SQRT2
    J[sx, sx] = J[sy, sy] = -dec.gamma_perp
    J[sx, sy] = -grid.delta
    J[sy, sx] = grid.delta
    J[sx, sz] = -gs * state.P
    J[sx, 1] = -gs * state.Sz
    J[sy, sz] = -gs * state.X
    J[sy, 0] = -gs * state.Sz
    J[sz, sx] = gs * state.P
    J[sz, sy] = gs * state.X
    J[sz, sz] = -dec.gamma_par
    J[sz, 1] = gs * state.Sx
    J[sz, 0] = gs * state.Sy
    return J


def integrate(seq, grid, cavity, dec, dt, t_end, p_prime=1.0, state0=None, snapshot_times=(), backend=None,
              strict=True):
    """Fixed-step RK4 integration of the mean-value equations.

    Parameters
    ----------
    seq : DriveWaveform
        Drive in the rotating frame.
    grid : SubEnsembleGrid
    cavity : CavityParams
    dec : DecoherenceSpec
        Only ``gamma_perp`` and ``gamma_par`` are used.
    dt : float
        Step (s). With ``strict`` it must satisfy :func:`max_stable_dt`.
    t_end : float
        End time (s); the run covers ``ceil((t_end - t0) / dt)`` steps.
    p_prime : float
        Initial polarization when ``state0`` is not given.
    state0 : SystemState, optional
        Start state, including its time ``t``.
    snapshot_times : sequence of float
        Times at which per-bin spin states are kept (rounded to the step grid).
    backend : {"numba", "numpy"}, optional

    Returns
    -------
    TimeTrace
    """
    if not dt > 0:
        raise ValidationError("dt", "step must be positive")
    limit = max_stable_dt(grid, cavity)
    if strict and dt > limit * (1 + 1e-12):
        raise ValidationError("dt", f"step {dt:.3e} s exceeds the stability limit {limit:.3e} s")
    state = init_state(grid, p_prime) if state0 is None else state0.copy()
    t0 = state.t
    nsteps = int(math.ceil((t_end - t0) / dt - 1e-9))
    if nsteps < 1:
        raise ValidationError("t_end", "end time must lie after the start time")

    t_half = t0 + 0.5 * dt * np.arange(2 * nsteps + 1)
    beta_half = seq(t_half) if seq is not None else np.zeros(t_half.size, complex)
    bR = np.ascontiguousarray(beta_half.real)
    bI = np.ascontiguousarray(beta_half.imag)

    snap_t = np.asarray(sorted(snapshot_times), dtype=float)
    snap_idx = np.clip(np.rint((snap_t - t0) / dt), 0, nsteps).astype(np.int64)
    M = grid.size
    snaps = np.zeros((snap_idx.size, 3, M))
    sx = np.array(state.Sx, dtype=float)
    sy = np.array(state.Sy, dtype=float)
    sz = np.array(state.Sz, dtype=float)
    g = np.ascontiguousarray(grid.g, dtype=float)
    delta = np.ascontiguousarray(grid.delta, dtype=float)
    N = np.ascontiguousarray(grid.N, dtype=float)

    Xs, Ps, bad = run_rk4(state.X, state.P, sx, sy, sz, g, delta, N, cavity.kappa, cavity.omega_c - grid.omega_s,
                          dec.gamma_perp, dec.gamma_par, bR, bI, dt, nsteps, snap_idx, snaps, backend=backend)
    if bad >= 0:
        raise IntegrationError(bad + 1, t0 + (bad + 1) * dt)

    t = t0 + dt * np.arange(nsteps + 1)
    beta = beta_half[::2]
    a_c = (Xs + 1j * Ps) / SQRT2
    a_R = math.sqrt(2.0 * cavity.kappa) * a_c - beta
    final = SystemState(float(Xs[-1]), float(Ps[-1]), sx, sy, sz, float(t[-1]))
    snapshots = {float(t0 + i * dt): SystemState(float(Xs[i]), float(Ps[i]), snaps[k, 0].copy(), snaps[k, 1].copy(),
                                                 snaps[k, 2].copy(), float(t0 + i * dt))
                 for k, i in enumerate(snap_idx)}
    return TimeTrace(t, Xs, Ps, beta, a_R, cavity.kappa, dt, final, snapshots)


@dataclass
class BiT2Result:
    """Combined trace of two coherence classes and the validity diagnostic.

    ``diagnostic`` is ``max |a_c,A - a_c,B| / max |a_c|`` over the
    diagnostic window, or NaN when no window was given.
    """

    trace: TimeTrace
    trace_A: TimeTrace
    trace_B: TimeTrace
    diagnostic: float


def bi_T2_run(seq, grid, cavity, dec, dt, t_end, window=None, p_prime=1.0, backend=None, strict=True):
    """Run once per coherence class and mix the reflected fields.

    ``dec.biexp`` supplies ``T2A``, ``T2B`` and the weights; the combined
    trace carries ``A a_R,A + B a_R,B`` and the matching cavity field.
    ``window`` is the ``(t_start, t_end)`` interval, normally the
    refocusing pulse, over which the two cavity fields are compared.
    """
    bx = dec.biexp
    if bx is None:
        raise ValidationError("biexp", "bi-exponential decoherence spec required")
    runs = []
    for T2 in (bx.T2A, bx.T2B):
        runs.append(integrate(seq, grid, cavity, dec.with_gamma(1.0 / T2), dt, t_end, p_prime=p_prime,
                              backend=backend, strict=strict))
    ta, tb = runs
    A, B = bx.weight_A, bx.weight_B
    X = A * ta.X + B * tb.X
    P = A * ta.P + B * tb.P
    trace = TimeTrace(ta.t, X, P, ta.beta, A * ta.a_R + B * tb.a_R, cavity.kappa, dt)
    diag = float("nan")
    if window is not None:
        m = (ta.t >= window[0]) & (ta.t <= window[1])
        if np.any(m):
            ref = max(np.max(np.abs(ta.a_c[m])), np.max(np.abs(tb.a_c[m])))
            diag = float(np.max(np.abs(ta.a_c[m] - tb.a_c[m])) / ref) if ref > 0 else 0.0
    return BiT2Result(trace, ta, tb, diag)
