"""Parameter types shared by every module, with validation.

All types are frozen dataclasses; constructing one runs its checks and
raises :class:`ValidationError` naming the offending field.
"""

import math
from dataclasses import dataclass, fields, replace
from typing import Optional

from .units import GAMMA_NV, TWO_PI


class ValidationError(ValueError):
    """Invalid parameter value; ``field`` names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _require(cond, field, message):
    if not cond:
        raise ValidationError(field, message)


def _finite(obj):
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ValidationError(f.name, f"non-finite value {v!r}")


@dataclass(frozen=True)
class CavityParams:
    """Single-port resonator.

    Attributes
    ----------
    omega_c : float
        Resonance angular frequency (rad/s).
    kappa : float
        Field damping rate (rad/s); the loaded quality factor is
        ``omega_c / (2 kappa)``.
    eta : float
        Spin filling factor, in (0, 1].
    Z0 : float
        Characteristic impedance (ohm).
    """

    omega_c: float
    kappa: float
    eta: float = 0.29
    Z0: float = 26.0

    def __post_init__(self):
        _finite(self)
        _require(self.omega_c > 0, "omega_c", "resonance frequency must be positive")
        _require(self.kappa > 0, "kappa", "damping rate must be positive")
        _require(0 < self.eta <= 1, "eta", "filling factor out of range (0, 1]")
        _require(self.Z0 > 0, "Z0", "impedance must be positive")

    @classmethod
    def from_Q(cls, omega_c, Q, eta=0.29, Z0=26.0):
        _require(Q > 0, "Q", "quality factor must be positive")
        return cls(omega_c=omega_c, kappa=omega_c / (2.0 * Q), eta=eta, Z0=Z0)

    @property
    def Q(self):
        return self.omega_c / (2.0 * self.kappa)


@dataclass(frozen=True)
class NVParams:
    """Ground-state NV parameters (angular frequencies in rad/s)."""

    D: float = TWO_PI * 2.8775e9
    A_hf: float = TWO_PI * -2.1e6
    Q_nuc: float = TWO_PI * -5.0e6
    gamma_e: float = GAMMA_NV
    alpha_nonorth: float = math.radians(35.3)
    alpha_orth: float = math.radians(90.0)

    def __post_init__(self):
        _finite(self)
        _require(self.D > 0, "D", "zero-field splitting must be positive")
        _require(self.gamma_e > 0, "gamma_e", "gyromagnetic constant must be positive")

    @property
    def B_hfs(self):
        """Hyperfine field |A_hf| / gamma_e (tesla)."""
        return abs(self.A_hf) / self.gamma_e

    def alpha(self, family):
        if family == "orth":
            return self.alpha_orth
        if family == "non_orth":
            return self.alpha_nonorth
        raise ValidationError("family", f"unknown family {family!r}")


@dataclass(frozen=True)
class DistributionSpec:
    """Inhomogeneous-broadening distributions and quadrature controls.

    Attributes
    ----------
    db0 : float
        Lorentzian HWHM of the local field distribution (tesla).
    dD0 : float
        Lorentzian HWHM of the zero-field splitting (rad/s).
    E1, E2 : float
        Strain decay constants of the bi-exponential distribution (rad/s).
    A1 : float
        Relative weight of the E2 component.
    d_omega0 : float or None
        Frequency discretization scale (rad/s); defaults to the axis spacing.
    truncation_widths : float
        Quadrature cutoff in units of each distribution width.
    omega_min, omega_max : float
        Frequency axis limits (rad/s).
    n_omega : int
        Number of axis points.
    n_panels : int
        Gauss-Legendre panels (8 nodes each) for the strain-angle quadrature.
    """

    db0: float = 0.21e-4
    dD0: float = TWO_PI * 0.15e6
    E1: float = TWO_PI * 0.5e6
    E2: float = TWO_PI * 10e6
    A1: float = 0.2
    d_omega0: Optional[float] = None
    truncation_widths: float = 20.0
    omega_min: float = TWO_PI * 2.80e9
    omega_max: float = TWO_PI * 2.96e9
    n_omega: int = 3001
    n_panels: int = 128

    def __post_init__(self):
        _finite(self)
        for name in ("db0", "dD0", "E1", "E2"):
            _require(getattr(self, name) > 0, name, "width must be positive")
        _require(self.A1 >= 0, "A1", "weight must be non-negative")
        _require(self.truncation_widths >= 3, "truncation_widths", "cutoff must be at least 3 widths")
        _require(self.d_omega0 is None or self.d_omega0 > 0, "d_omega0", "scale must be positive")
        _require(self.omega_max > self.omega_min, "omega_max", "axis upper limit must exceed lower limit")
        _require(self.n_omega >= 3, "n_omega", "need at least 3 axis points")
        _require(self.n_panels >= 4, "n_panels", "need at least 4 quadrature panels")

    @property
    def omega_step(self):
        return (self.omega_max - self.omega_min) / (self.n_omega - 1)

    @property
    def resolved_d_omega0(self):
        return self.omega_step if self.d_omega0 is None else self.d_omega0


@dataclass(frozen=True)
class BiExp:
    """Two coherence classes with weights A (T2A) and B (T2B)."""

    T2A: float
    T2B: float
    weight_A: float
    weight_B: float

    def __post_init__(self):
        _finite(self)
        _require(self.T2A > 0, "T2A", "coherence time must be positive")
        _require(self.T2B > 0, "T2B", "coherence time must be positive")
        _require(self.weight_A >= 0, "weight_A", "weight must be non-negative")
        _require(self.weight_B >= 0, "weight_B", "weight must be non-negative")
        _require(abs(self.weight_A + self.weight_B - 1.0) < 1e-9, "weight_B", "weights must sum to 1")


@dataclass(frozen=True)
class DecoherenceSpec:
    """Spin relaxation rates (rad/s) and optional bi-exponential classes."""

    gamma_perp: float
    gamma_par: float = 0.0
    biexp: Optional[BiExp] = None

    def __post_init__(self):
        _finite(self)
        _require(self.gamma_perp >= 0, "gamma_perp", "rate must be non-negative")
        _require(self.gamma_par >= 0, "gamma_par", "rate must be non-negative")

    @classmethod
    def from_T2(cls, T2, gamma_par=0.0, biexp=None):
        _require(T2 > 0, "T2", "coherence time must be positive")
        return cls(gamma_perp=1.0 / T2, gamma_par=gamma_par, biexp=biexp)

    def with_gamma(self, gamma_perp):
        return replace(self, gamma_perp=gamma_perp, biexp=None)


def validate(obj):
    """Re-run the invariant checks of a parameter object and return it."""
    if hasattr(obj, "__post_init__"):
        obj.__post_init__()
    check = getattr(obj, "check", None)
    if callable(check):
        check()
    return obj


def serialize(obj):
    """``key = value`` lines for a parameter object; floats use ``repr`` so parsing is exact.

    A nested :class:`BiExp` is written with a ``biexp.`` key prefix.
    """
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if v is None:
            continue
        if isinstance(v, BiExp):
            lines += [f"biexp.{line}" for line in serialize(v).splitlines()]
        else:
            lines.append(f"{f.name} = {v!r}")
    return "\n".join(lines) + "\n"


def parse(text, cls):
    """Inverse of :func:`serialize`; the result is validated on construction."""
    flat, nested = {}, {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, value = (u.strip() for u in line.split("=", 1))
        target = nested if key.startswith("biexp.") else flat
        target[key.removeprefix("biexp.")] = value
    types = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for k, v in flat.items():
        if k not in types:
            raise ValidationError(k, f"unknown field for {cls.__name__}")
        kwargs[k] = int(v) if types[k] in (int, "int") else float(v)
    if nested:
        kwargs["biexp"] = parse("\n".join(f"{k} = {v}" for k, v in nested.items()), BiExp)
    return cls(**kwargs)
