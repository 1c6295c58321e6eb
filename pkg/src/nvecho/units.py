"""Unit conventions and conversions.

Internally everything is SI with angular frequencies in rad/s, fields in
tesla, times in seconds and drive amplitudes in sqrt(photons/s). Config
files and the CLI accept the suffixes below and convert at the boundary.
"""

import math
import re

from scipy import constants as sc

TWO_PI = 2.0 * math.pi
HBAR = sc.hbar
MU0 = sc.mu_0
MU_B = sc.physical_constants["Bohr magneton"][0]
G_NV = 2.0028
# g_NV * mu_B / hbar, rad/s per tesla
GAMMA_NV = G_NV * MU_B / HBAR
# carbon atoms per m^3 in diamond (3.515 g/cm^3)
DIAMOND_ATOM_DENSITY = 3515.0 / 12.011e-3 * sc.N_A


class UnitError(ValueError):
    """Unknown unit or incompatible unit pair."""


# scale factors into the internal unit of each dimension
_ANGULAR = {"rad/s": 1.0, "Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": TWO_PI * 1e6, "GHz": TWO_PI * 1e9}
_FIELD = {"T": 1.0, "mT": 1e-3, "uT": 1e-6, "Gs": 1e-4, "G": 1e-4}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
_LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
_ANGLE = {"rad": 1.0, "deg": math.pi / 180.0}
_GYRO = {"rad/s/T": 1.0, "GHz/T": TWO_PI * 1e9, "MHz/mT": TWO_PI * 1e9, "MHz/T": TWO_PI * 1e6}
_DENSITY = {"m^-3": 1.0, "cm^-3": 1e6, "ppm": 1e-6 * DIAMOND_ATOM_DENSITY}
_RESISTANCE = {"ohm": 1.0, "Ohm": 1.0}
_POWER = ("W", "mW", "dBm", "photons/s")

_DIMENSIONS = {
    "angular": _ANGULAR,
    "field": _FIELD,
    "time": _TIME,
    "length": _LENGTH,
    "angle": _ANGLE,
    "gyro": _GYRO,
    "density": _DENSITY,
    "resistance": _RESISTANCE,
}

_ALIASES = {"µs": "us", "μs": "us", "µm": "um", "μm": "um", "Gauss": "Gs", "rad/s/T": "rad/s/T", "Ω": "ohm"}


def _canon(unit):
    unit = unit.strip()
    return _ALIASES.get(unit, unit)


def _dimension(unit):
    for name, table in _DIMENSIONS.items():
        if unit in table:
            return name
    if unit in _POWER:
        return "power"
    raise UnitError(f"unknown unit {unit!r}")


def dbm_to_watts(p_dbm):
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * math.log10(p_w / 1e-3)


def _power_to_watts(value, unit, omega):
    if unit == "W":
        return value
    if unit == "mW":
        return value * 1e-3
    if unit == "dBm":
        return dbm_to_watts(value)
    if omega is None:
        raise UnitError("photon flux conversion needs the carrier angular frequency")
    return value * HBAR * omega


def _watts_to_power(value, unit, omega):
    if unit == "W":
        return value
    if unit == "mW":
        return value * 1e3
    if unit == "dBm":
        return watts_to_dbm(value)
    if omega is None:
        raise UnitError("photon flux conversion needs the carrier angular frequency")
    return value / (HBAR * omega)


def unit_convert(value, from_unit, to_unit, omega=None):
    """Convert ``value`` between two compatible units.

    Parameters
    ----------
    value : float
    from_unit, to_unit : str
        Unit names, e.g. ``"MHz"``, ``"rad/s"``, ``"Gs"``, ``"dBm"``,
        ``"photons/s"``.
    omega : float, optional
        Carrier angular frequency (rad/s), required when converting between
        a power and a photon flux.

    Returns
    -------
    float
    """
    a, b = _canon(from_unit), _canon(to_unit)
    da, db = _dimension(a), _dimension(b)
    if da != db:
        raise UnitError(f"cannot convert {from_unit!r} to {to_unit!r}")
    if a == b:
        return value
    if da == "power":
        return _watts_to_power(_power_to_watts(value, a, omega), b, omega)
    table = _DIMENSIONS[da]
    return value * table[a] / table[b]


def photon_flux(p_dbm, omega):
    """Incident photon flux |beta|^2 (photons/s) for a power in dBm."""
    return dbm_to_watts(p_dbm) / (HBAR * omega)


def drive_amplitude(p_dbm, omega):
    """Drive amplitude |beta| in sqrt(photons/s) for a power in dBm."""
    return math.sqrt(photon_flux(p_dbm, omega))


_NUM_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf|nan)\s*(.*?)\s*$")


def split_quantity(text):
    """Split ``"2.88 GHz"`` into ``(2.88, "GHz")``; unit is ``""`` if absent."""
    m = _NUM_RE.match(text)
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    return float(m.group(1)), _canon(m.group(2))


def parse_quantity(text, dimension, omega=None):
    """Parse a number with optional unit suffix into internal units.

    A bare number is taken to be already in internal units. Power-like
    quantities (``dimension="flux"``) are returned as photon flux.
    """
    value, unit = split_quantity(text)
    if not unit:
        return value
    if dimension == "dimensionless":
        if unit == "%":
            return value / 100.0
        raise UnitError(f"unexpected unit {unit!r} on dimensionless value {text!r}")
    if dimension == "flux":
        if unit not in _POWER:
            raise UnitError(f"unit {unit!r} is not a power or photon flux")
        return unit_convert(value, unit, "photons/s", omega=omega)
    table = _DIMENSIONS[dimension]
    if unit not in table:
        raise UnitError(f"unit {unit!r} is not valid for a {dimension} quantity")
    return value * table[unit]
