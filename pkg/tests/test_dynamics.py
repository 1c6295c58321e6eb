import numpy as np
import pytest

from nvecho import kernels
from nvecho.distributions import bin_to_grid, lorentzian_density
from nvecho.dynamics import (IntegrationError, bi_T2_run, init_state, integrate, jacobian, max_stable_dt, rhs)
from nvecho.model import DriveWaveform, Segment, SubEnsembleGrid, SystemState
from nvecho.params import BiExp, CavityParams, DecoherenceSpec, ValidationError
from nvecho.units import TWO_PI

WS = TWO_PI * 2.88e9
CAV = CavityParams.from_Q(TWO_PI * 2.881e9, 80)
DEC = DecoherenceSpec.from_T2(4.7e-6, gamma_par=1e3)


def _grid(M=30, Mg=3, g_ens=TWO_PI * 5e6):
    w = WS + np.linspace(-TWO_PI * 60e6, TWO_PI * 60e6, 4001)
    dens = lorentzian_density(w, WS, TWO_PI * 5e6)
    return bin_to_grid(dens, M, (np.geomspace(1, 30, Mg), np.ones(Mg)), g_ens, omega_s=WS, span=TWO_PI * 30e6)


def _pulse(amp, t0=0.1e-6, dur=0.5e-6, det=TWO_PI * 1e6, phase=0.3):
    return DriveWaveform((Segment(t0, dur, amp * np.cos(phase), amp * np.sin(phase), det),))


def test_jacobian_matches_finite_differences():
    grid = _grid(8, 2)
    rng = np.random.default_rng(3)
    M = grid.size
    s = SystemState(0.3, -0.7, rng.normal(size=M) * 1e7, rng.normal(size=M) * 1e7, -grid.N * 0.9)
    v = s.as_vector()
    J = jacobian(s, grid, CAV, DEC)
    f = lambda u: rhs(SystemState.from_vector(u), 0.0, None, grid, CAV, DEC).as_vector()
    Jn = np.zeros_like(J)
    for k in range(v.size):
        # rhs is at most quadratic, so central differences are exact up to rounding
        h = 0.1 * max(abs(v[k]), 1.0)
        e = np.zeros_like(v)
        e[k] = h
        Jn[:, k] = (f(v + e) - f(v - e)) / (2 * h)
    scale = np.max(np.abs(J), axis=1, keepdims=True)
    assert np.max(np.abs(J - Jn) / scale) < 1e-6


def test_polarized_state_is_fixed_point():
    grid = _grid()
    s = init_state(grid)
    d = rhs(s, 0.0, None, grid, CAV, DEC)
    assert d.X == 0 and d.P == 0
    assert np.all(d.Sx == 0) and np.all(d.Sy == 0) and np.all(d.Sz == 0)
    tr = integrate(None, grid, CAV, DEC, max_stable_dt(grid, CAV), 2e-6)
    assert np.all(tr.a_R == 0)
    with pytest.raises(ValidationError):
        init_state(grid, p_prime=0.0)


def test_weak_drive_response_is_linear():
    grid = _grid()
    dt = max_stable_dt(grid, CAV)
    a1 = integrate(_pulse(1e2), grid, CAV, DEC, dt, 3e-6).a_R
    a2 = integrate(_pulse(2e2), grid, CAV, DEC, dt, 3e-6).a_R
    assert np.max(np.abs(a2 - 2 * a1)) < 1e-6 * np.max(np.abs(a2))


def test_rk4_fourth_order_convergence():
    grid = _grid(12, 2)
    dt = max_stable_dt(grid, CAV)
    # smooth drive so the global error is set by the scheme, not by pulse edges
    seq = lambda t: 3e6 * np.exp(-((t - 0.6e-6) / 0.15e-6) ** 2) * np.exp(-1j * TWO_PI * 1e6 * t)
    T = 1600 * dt
    ref = integrate(seq, grid, CAV, DEC, dt / 16, T).a_R[-1]
    errs = [abs(integrate(seq, grid, CAV, DEC, dt / k, T).a_R[-1] - ref) for k in (1, 2)]
    assert 12 < errs[0] / errs[1] < 20


def test_backends_agree():
    grid = _grid()
    dt = max_stable_dt(grid, CAV)
    seq = _pulse(5e5)
    a = integrate(seq, grid, CAV, DEC, dt, 2e-6, backend="numpy")
    if kernels.HAVE_NUMBA:
        b = integrate(seq, grid, CAV, DEC, dt, 2e-6, backend="numba")
        assert np.allclose(a.a_R, b.a_R, rtol=1e-11, atol=1e-11 * np.max(np.abs(a.a_R)))
        assert np.allclose(a.final.Sz, b.final.Sz, rtol=1e-11)
    with pytest.raises(ValueError):
        integrate(seq, grid, CAV, DEC, dt, 2e-6, backend="fortran")


def test_step_limit_and_blowup():
    grid = _grid()
    dt = max_stable_dt(grid, CAV)
    assert dt == pytest.approx(min(0.1 / CAV.kappa, 0.1 / np.max(np.abs(grid.delta)), 0.1 / grid.g_ens))
    with pytest.raises(ValidationError):
        integrate(None, grid, CAV, DEC, 2 * dt, 1e-6)
    with pytest.raises(ValidationError):
        integrate(None, grid, CAV, DEC, -dt, 1e-6)
    with pytest.raises(IntegrationError) as exc:
        integrate(_pulse(1e6), grid, CAV, DEC, 200 * dt, 50e-6, strict=False)
    assert exc.value.step >= 1 and exc.value.t > 0


def test_snapshots_and_restart():
    grid = _grid()
    dt = max_stable_dt(grid, CAV)
    seq = _pulse(3e5)
    full = integrate(seq, grid, CAV, DEC, dt, 400 * dt, snapshot_times=[200 * dt])
    (t_mid, mid), = full.snapshots.items()
    assert t_mid == pytest.approx(200 * dt)
    rest = integrate(seq, grid, CAV, DEC, dt, 400 * dt, state0=mid)
    assert np.allclose(rest.final.as_vector(), full.final.as_vector(), rtol=1e-12, atol=1e-12 * grid.N.max())


def test_input_output_energy_without_spins():
    grid = SubEnsembleGrid(np.array([0.0]), np.array([0.0]), np.array([0.0]), WS)
    dt = 0.05 / CAV.kappa
    seq = _pulse(1e3)
    tr = integrate(seq, grid, CAV, DEC, dt, 2e-6)
    ein = np.trapezoid(np.abs(tr.beta) ** 2, tr.t)
    eout = np.trapezoid(np.abs(tr.a_R) ** 2, tr.t)
    assert eout == pytest.approx(ein, rel=1e-6)


def test_bi_T2_with_single_class_matches_plain_run():
    grid = _grid()
    dt = max_stable_dt(grid, CAV)
    seq = _pulse(3e5)
    dec = DecoherenceSpec(1 / 4.7e-6, 0.0, BiExp(4.7e-6, 14.3e-6, 1.0, 0.0))
    res = bi_T2_run(seq, grid, CAV, dec, dt, 2e-6, window=(0.1e-6, 0.6e-6))
    plain = integrate(seq, grid, CAV, dec.with_gamma(1 / 4.7e-6), dt, 2e-6)
    assert np.array_equal(res.trace.a_R, plain.a_R)
    assert res.diagnostic >= 0
    with pytest.raises(ValidationError):
        bi_T2_run(seq, grid, CAV, DecoherenceSpec.from_T2(4.7e-6), dt, 2e-6)


def test_bi_T2_mixes_reflected_fields():
    grid = _grid()
    dt = max_stable_dt(grid, CAV)
    seq = _pulse(3e5)
    dec = DecoherenceSpec(1 / 4.7e-6, 0.0, BiExp(4.7e-6, 14.3e-6, 0.78, 0.22))
    res = bi_T2_run(seq, grid, CAV, dec, dt, 2e-6)
    assert np.allclose(res.trace.a_R, 0.78 * res.trace_A.a_R + 0.22 * res.trace_B.a_R, rtol=1e-14)
    assert np.isnan(res.diagnostic)
