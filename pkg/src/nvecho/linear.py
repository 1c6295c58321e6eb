"""Low-excitation response of the cavity coupled to the spin ensemble.

Spectra follow the ``exp(-i omega t)`` convention used by the equations of
motion. Measured traces taken with the opposite convention are complex
conjugated on input (``convention="engineering"``).
"""

import math
from dataclasses import dataclass

import numpy as np

from .params import ValidationError

KINDS = ("K", "r", "chi", "S11")
CONVENTIONS = ("physics", "engineering")


@dataclass(frozen=True)
class ComplexSpectrum:
    """Complex values on a uniform angular-frequency axis (rad/s)."""

    omega: np.ndarray
    values: np.ndarray
    kind: str
    convention: str = "physics"

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=complex))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)
        if self.kind not in KINDS:
            raise ValidationError("kind", f"unknown spectrum kind {self.kind!r}")
        if self.convention not in CONVENTIONS:
            raise ValidationError("convention", f"unknown convention {self.convention!r}")
        if omega.shape != values.shape:
            raise ValidationError("values", "axis and values differ in length")
        if omega.size > 2:
            step = np.diff(omega)
            if not np.allclose(step, step[0], rtol=1e-9, atol=0):
                raise ValidationError("omega", "axis must be uniform")

    def to_physics(self):
        """The same spectrum in the internal sign convention."""
        if self.convention == "physics":
            return self
        return ComplexSpectrum(self.omega, np.conj(self.values), self.kind, "physics")

    def check_axis(self, other):
        if not np.array_equal(self.omega, other.omega):
            raise ValidationError("omega", "spectra must share one frequency axis")


def K_of_omega(grid, gamma_perp, omega):
    """Spin back-action ``K(omega) = sum N g**2 / (omega - omega_m + i gamma_perp)``.

    Bins sharing a detuning are merged before the sum.

    Parameters
    ----------
    grid : SubEnsembleGrid or None
        ``None`` or an empty grid gives ``K = 0``.
    gamma_perp : float
        Homogeneous linewidth (rad/s); zero gives the lossless limit.
    omega : ndarray
        Absolute angular frequencies (rad/s).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if gamma_perp < 0:
        raise ValidationError("gamma_perp", "rate must be non-negative")
    if grid is None or grid.size == 0:
        return ComplexSpectrum(omega, np.zeros(omega.size, complex), "K")
    delta, inv = np.unique(grid.delta, return_inverse=True)
    weight = np.bincount(inv, weights=grid.N * grid.g**2, minlength=delta.size)
    keep = weight > 0
    w_m = grid.omega_s + delta[keep]
    weight = weight[keep]
    K = np.empty(omega.size, complex)
    block = max(1, 4_000_000 // max(w_m.size, 1))
    for s in range(0, omega.size, block):
        d = omega[s:s + block, None] - w_m[None, :] + 1j * gamma_perp
        K[s:s + block] = (weight[None, :] / d).sum(axis=1)
    return ComplexSpectrum(omega, K, "K")


def _K_values(K, omega):
    if K is None:
        return np.zeros(np.shape(omega), complex)
    if isinstance(K, ComplexSpectrum):
        return K.values
    return np.asarray(K, dtype=complex)


def steady_state_field(beta0, omega, cavity, K=None):
    """Driven intra-cavity amplitude ``i sqrt(2 kappa) beta0 / (omega - omega_c + i kappa - K)``."""
    Kv = _K_values(K, omega)
    kap = cavity.kappa
    return 1j * math.sqrt(2.0 * kap) * beta0 / (np.asarray(omega) - cavity.omega_c + 1j * kap - Kv)


def reflection_coeff(omega, cavity, K=None):
    """Reflection ``r = 2 i kappa / (omega - omega_c + i kappa - K) - 1``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    Kv = _K_values(K, omega)
    kap = cavity.kappa
    r = 2j * kap / (omega - cavity.omega_c + 1j * kap - Kv) - 1.0
    return ComplexSpectrum(omega, r, "r")


def bare_cavity_reflection(omega, cavity):
    """``r_c = (kappa + i (omega - omega_c)) / (kappa - i (omega - omega_c))``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = omega - cavity.omega_c
    return ComplexSpectrum(omega, (cavity.kappa + 1j * d) / (cavity.kappa - 1j * d), "r")


def susceptibility(K, eta, omega_c):
    """Magnetic susceptibility ``chi = -conj(K) / (2 pi eta omega_c)``."""
    if not eta > 0:
        raise ValidationError("eta", "filling factor must be positive")
    return ComplexSpectrum(K.omega, -np.conj(K.values) / (2.0 * math.pi * eta * omega_c), "chi")


def synthesize_S11(K, cavity, transfer=None):
    """Measured-style reflection ``T(omega) r(omega)*`` for a given K.

    Returned in the engineering convention, as an instrument records it.
    """
    r = reflection_coeff(K.omega, cavity, K).values
    T = 1.0 if transfer is None else np.asarray(transfer, dtype=complex)
    return ComplexSpectrum(K.omega, T * np.conj(r), "S11", "engineering")


class DeembedWarning(UserWarning):
    """Some de-embedded points had a vanishing denominator."""


def deembed_K(S11, S11_sat, cavity, tol=1e-12):
    """Recover K from a polarized and a saturated reflection trace.

    ``K = omega - omega_c + i kappa - 2 i kappa / ((S11* / S11_sat*) r_c + 1)``
    for traces recorded in the engineering convention. The line transfer
    function cancels in the ratio.

    Returns
    -------
    K : ComplexSpectrum
    bad : ndarray of bool
        Points whose denominator magnitude fell below ``tol``; K is NaN there.
    """
    S11.check_axis(S11_sat)
    if S11.convention != S11_sat.convention:
        raise ValidationError("convention", "both traces must share one convention")
    if np.any(S11_sat.values == 0):
        raise ValidationError("S11_sat", "saturated trace must be nonzero everywhere")
    ratio = S11.values / S11_sat.values
    if S11.convention == "engineering":
        ratio = np.conj(ratio)
    omega = S11.omega
    rc = bare_cavity_reflection(omega, cavity).values
    den = ratio * rc + 1.0
    bad = np.abs(den) < tol
    safe = np.where(bad, 1.0, den)
    kap = cavity.kappa
    K = omega - cavity.omega_c + 1j * kap - 2j * kap / safe
    K[bad] = np.nan
    return ComplexSpectrum(omega, K, "K"), bad
