import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvecho.model import DriveWaveform, Segment, SubEnsembleGrid, SystemState, segment_energy
from nvecho.params import (BiExp, CavityParams, DecoherenceSpec, DistributionSpec, NVParams, ValidationError, parse,
                           serialize, validate)
from nvecho.units import HBAR, TWO_PI, UnitError, drive_amplitude, parse_quantity, photon_flux, unit_convert


def test_cavity_from_Q_gives_18_MHz_linewidth():
    cav = CavityParams.from_Q(TWO_PI * 2.88e9, 80)
    assert cav.kappa / TWO_PI == pytest.approx(18e6, rel=1e-12)
    assert cav.Q == pytest.approx(80, rel=1e-12)


def test_zero_filling_factor_rejected():
    with pytest.raises(ValidationError, match="filling factor out of range") as exc:
        CavityParams(TWO_PI * 2.88e9, TWO_PI * 18e6, eta=0.0)
    assert exc.value.field == "eta"


@pytest.mark.parametrize("field, kwargs", [("omega_c", dict(omega_c=-1.0)), ("kappa", dict(kappa=0.0)),
                                          ("Z0", dict(Z0=0.0)), ("omega_c", dict(omega_c=float("nan")))])
def test_cavity_fields_named_in_errors(field, kwargs):
    base = dict(omega_c=1e10, kappa=1e8)
    base.update(kwargs)
    with pytest.raises(ValidationError) as exc:
        CavityParams(**base)
    assert exc.value.field == field


def test_biexp_weights():
    BiExp(4.7e-6, 14.3e-6, 0.78, 0.22)
    with pytest.raises(ValidationError):
        BiExp(4.7e-6, 14.3e-6, 0.78, 0.3)


def test_nv_hyperfine_field():
    nv = NVParams()
    assert nv.B_hfs * nv.gamma_e == pytest.approx(abs(nv.A_hf), rel=1e-12)
    assert nv.D / TWO_PI == pytest.approx(2.8775e9)


def test_distribution_spec_checks():
    DistributionSpec()
    with pytest.raises(ValidationError) as exc:
        DistributionSpec(truncation_widths=2.0)
    assert exc.value.field == "truncation_widths"
    with pytest.raises(ValidationError):
        DistributionSpec(A1=-0.1)


def test_decoherence_defaults():
    dec = DecoherenceSpec.from_T2(4.7e-6)
    assert dec.gamma_par == 0.0
    assert dec.gamma_perp == pytest.approx(1 / 4.7e-6)
    assert validate(dec) is dec


def test_unit_examples():
    assert unit_convert(0.21, "Gs", "mT") == pytest.approx(0.021, rel=1e-12)
    assert unit_convert(TWO_PI * 18e6, "rad/s", "MHz") == pytest.approx(18.0, rel=1e-12)
    w = TWO_PI * 2.88e9
    assert unit_convert(0.0, "dBm", "photons/s", omega=w) == pytest.approx(1e-3 / (HBAR * w), rel=1e-12)
    assert photon_flux(0.0, w) == pytest.approx(1e-3 / (HBAR * w), rel=1e-12)
    assert drive_amplitude(-30.0, w) ** 2 == pytest.approx(1e-6 / (HBAR * w), rel=1e-12)


def test_unknown_units():
    with pytest.raises(UnitError):
        unit_convert(1.0, "MHz", "mT")
    with pytest.raises(UnitError):
        unit_convert(1.0, "furlong", "m")
    with pytest.raises(UnitError):
        unit_convert(1.0, "dBm", "photons/s")


def test_parse_quantity():
    assert parse_quantity("2.88 GHz", "angular") == pytest.approx(TWO_PI * 2.88e9)
    assert parse_quantity("0.21 Gs", "field") == pytest.approx(0.21e-4)
    assert parse_quantity("4.7 us", "time") == pytest.approx(4.7e-6)
    assert parse_quantity("1e3", "angular") == 1e3
    with pytest.raises(UnitError):
        parse_quantity("3 mT", "time")


PAIRS = [("Hz", "MHz"), ("GHz", "rad/s"), ("mT", "Gs"), ("T", "uT"), ("us", "ns"), ("ppm", "m^-3"), ("deg", "rad"),
         ("dBm", "photons/s"), ("mW", "dBm"), ("W", "photons/s")]


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PAIRS), st.floats(1e-6, 1e6))
def test_unit_round_trip(pair, x):
    a, b = pair
    if a == "dBm":
        x = x * 1e-4 - 50.0
    w = TWO_PI * 2.88e9
    y = unit_convert(unit_convert(x, a, b, omega=w), b, a, omega=w)
    assert y == pytest.approx(x, rel=1e-12)


def test_grid_invariants():
    g = SubEnsembleGrid(np.array([0.0, 1e6]), np.array([10.0, 20.0]), np.array([2.0, 3.0]), 1e10)
    assert g.g_ens2 == pytest.approx(2 * 100 + 3 * 400)
    with pytest.raises(ValidationError):
        SubEnsembleGrid(np.array([0.0]), np.array([1.0]), np.array([-1.0]), 1e10)
    with pytest.raises(ValidationError):
        SubEnsembleGrid(np.array([0.0]), np.array([1.0]), np.array([1.0]), 1e10, g_ens2=2.0)


def test_waveform_ordering_and_energy():
    a = Segment(0.0, 1e-6, 3.0)
    b = Segment(0.5e-6, 1e-6, 1.0)
    with pytest.raises(ValidationError):
        DriveWaveform((a, b))
    # rectangular pulse: |beta|^2 T; each raised-cosine edge keeps 3/8 of its ramp
    assert segment_energy(Segment(0.0, 1e-6, 3.0, ramp=0.0)) == pytest.approx(9e-6, rel=1e-9)
    assert segment_energy(Segment(0.0, 1e-6, 3.0, ramp=100e-9)) == pytest.approx(9 * (1e-6 - 2 * 0.625 * 100e-9),
                                                                                     rel=1e-6)


def test_waveform_detuning_and_phase():
    seg = Segment(0.0, 1e-6, 1.0, 2.0, detuning=TWO_PI * 1e6, ramp=0.0)
    w = DriveWaveform((seg,))
    t = np.array([0.25e-6, 2e-6])
    beta = w(t)
    assert beta[0] == pytest.approx((1 + 2j) * np.exp(-1j * TWO_PI * 1e6 * 0.25e-6))
    assert beta[1] == 0


def test_state_vector_round_trip():
    rng = np.random.default_rng(0)
    s = SystemState(0.3, -0.2, rng.normal(size=4), rng.normal(size=4), rng.normal(size=4), 1e-6)
    r = SystemState.from_vector(s.as_vector(), s.t)
    assert np.array_equal(r.as_vector(), s.as_vector())
    assert s.a_c == pytest.approx((0.3 - 0.2j) / math.sqrt(2))


positive = st.floats(1e-3, 1e12, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(positive, positive, st.floats(1e-6, 1.0), positive)
def test_cavity_serialize_round_trip(w, k, eta, z0):
    cav = CavityParams(w, k, eta, z0)
    assert parse(serialize(cav), CavityParams) == cav


@settings(max_examples=100, deadline=None)
@given(positive, positive, st.floats(0.0, 1.0), st.floats(0.0, 1e6))
def test_decoherence_serialize_round_trip(t2a, t2b, a, gpar):
    dec = DecoherenceSpec(1.0 / t2a, gpar, BiExp(t2a, t2b, a, 1.0 - a))
    assert parse(serialize(dec), DecoherenceSpec) == dec


def test_spec_serialize_round_trip():
    for obj in (NVParams(), DistributionSpec(n_omega=1234, d_omega0=1.5e3)):
        assert parse(serialize(obj), type(obj)) == obj


def test_parse_rejects_invalid():
    with pytest.raises(ValidationError):
        parse("omega_c = 1e10\nkappa = -1\n", CavityParams)
    with pytest.raises(ValidationError):
        parse("omega_c = 1e10\nkappa = 1e8\nbogus = 1\n", CavityParams)
