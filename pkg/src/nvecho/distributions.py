"""Inhomogeneous frequency density of the spin ensemble and its binning.

The density on each frequency cell is the spin mass that the approximate
transition formulas map into it. At fixed zero-field splitting that mass
follows from the distribution function of the transition offset, which is
radial in the (strain, local-field) plane; the zero-field splitting spread
is then folded in by a discrete convolution on the axis.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kernels import radial_cdf, theta_nodes
from .model import SubEnsembleGrid
from .params import ValidationError

NON_ORTH_WEIGHT = 0.6


class QuadratureError(RuntimeError):
    """Strain quadrature failed to converge within the refinement budget."""


def lorentzian_pdf(x, hwhm):
    """Normalized Lorentzian ``(hwhm/pi) / (x**2 + hwhm**2)``."""
    if hwhm <= 0:
        raise ValueError("hwhm must be positive")
    x = np.asarray(x, dtype=float)
    return (hwhm / math.pi) / (x * x + hwhm * hwhm)


def lorentzian_mass(k):
    """Probability mass of a Lorentzian within +-k half widths."""
    return 2.0 / math.pi * math.atan(k)


def biexp_strain_pdf(E, E1, E2, A1):
    """Bi-exponential strain density on E >= 0, normalized to one."""
    E = np.asarray(E, dtype=float)
    if np.any(E < 0):
        raise ValueError("strain must be non-negative")
    return (np.exp(-E / E1) + A1 * np.exp(-E / E2)) / (E1 + A1 * E2)


def biexp_strain_sample(rng, size, E1, E2, A1):
    """Draw strain values from the bi-exponential mixture."""
    p1 = E1 / (E1 + A1 * E2)
    first = rng.random(size) < p1
    return np.where(first, rng.exponential(E1, size), rng.exponential(E2, size))


@dataclass(frozen=True)
class FrequencyDensity:
    """Normalized spin density on a uniform angular-frequency axis.

    ``captured`` is the fraction of the six-transition mass that fell on
    the axis before normalization.
    """

    omega: np.ndarray
    density: np.ndarray
    B_NV: float
    family: str
    captured: float = 1.0

    @property
    def step(self):
        return self.omega[1] - self.omega[0]

    def integral(self):
        return float(np.trapezoid(self.density, self.omega))

    def mean_frequency(self):
        return float(np.trapezoid(self.density * self.omega, self.omega) / self.integral())


def transition_cell_mass(lo, hi, D0, spec, nv, Bc, theta, wtheta):
    """Probability mass of all six transitions in the cells ``[lo, hi]`` at fixed D.

    ``Bc`` is the applied-field projection on the NV axis (tesla).
    """
    w = nv.gamma_e * spec.db0
    total = np.zeros(lo.size)
    up_hi = np.maximum(hi - D0, 0.0)
    up_lo = np.maximum(lo - D0, 0.0)
    dn_lo = np.maximum(D0 - lo, 0.0)
    dn_hi = np.maximum(D0 - hi, 0.0)
    u = np.concatenate([up_hi, up_lo, dn_lo, dn_hi])
    for mI in (-1, 0, 1):
        zc = nv.gamma_e * (Bc - mI * nv.B_hfs)
        G = radial_cdf(u, zc, w, spec.E1, spec.E2, spec.A1, theta, wtheta).reshape(4, -1)
        # plus branch: omega = D + R; minus branch: omega = D - R
        total += (G[0] - G[1]) + (G[2] - G[3])
    return total


def _raw_density(omega, spec, nv, B_NV, alpha, dw0, n_panels):
    h = omega[1] - omega[0]
    J = int(math.floor(spec.truncation_widths * spec.dD0 / h))
    j = np.arange(-J, J + 1)
    wD = lorentzian_pdf(j * h, spec.dD0)
    wD /= wD.sum()
    ext = omega[0] + h * np.arange(-J, omega.size + J)
    theta, wtheta = theta_nodes(n_panels)
    mass = transition_cell_mass(ext - 0.5 * dw0, ext + 0.5 * dw0, nv.D, spec, nv, B_NV * math.cos(alpha),
                                theta, wtheta)
    return np.convolve(mass / dw0, wD, mode="valid")


def frequency_density(B_NV, spec, nv, family="non_orth", omega=None, tol=1e-6, max_refine=4):
    """Normalized frequency density of one NV family.

    The value at each axis point is the spin mass in a cell of width
    ``d_omega0`` around it divided by ``d_omega0``. Cell masses come from
    the distribution function of ``|omega - D|`` at fixed D, and the
    zero-field splitting spread is a discrete convolution on the axis
    lattice truncated at ``truncation_widths`` half widths.

    Parameters
    ----------
    B_NV : float
        Applied field (tesla).
    spec : DistributionSpec
    nv : NVParams
    family : {"non_orth", "orth"}
    omega : ndarray, optional
        Uniform axis (rad/s); defaults to the axis described by ``spec``.
    tol : float
        Relative L1 change allowed between successive quadrature refinements.

    Returns
    -------
    FrequencyDensity
    """
    alpha = nv.alpha(family)
    if omega is None:
        omega = np.linspace(spec.omega_min, spec.omega_max, spec.n_omega)
    omega = np.asarray(omega, dtype=float)
    h = omega[1] - omega[0]
    if not np.allclose(np.diff(omega), h, rtol=1e-9, atol=0):
        raise ValidationError("omega", "axis must be uniform")
    dw0 = h if spec.d_omega0 is None else spec.d_omega0

    if max_refine < 1:
        raise ValidationError("max_refine", "need at least one refinement check")
    n = spec.n_panels
    raw = _raw_density(omega, spec, nv, B_NV, alpha, dw0, n)
    for _ in range(max_refine):
        coarse = _raw_density(omega, spec, nv, B_NV, alpha, dw0, n // 2)
        change = np.sum(np.abs(raw - coarse)) / np.sum(np.abs(raw))
        if change < tol:
            break
        n *= 2
        raw = _raw_density(omega, spec, nv, B_NV, alpha, dw0, n)
    else:
        raise QuadratureError(f"strain quadrature did not converge (last relative change {change:.2e})")

    mass = np.trapezoid(raw, omega)
    if not mass > 0:
        raise QuadratureError("density has no mass on the frequency axis")
    return FrequencyDensity(omega, raw / mass, float(B_NV), family, captured=float(mass / 6.0))


def combine_families(rho_orth, rho_nonorth, weight=NON_ORTH_WEIGHT):
    """Weighted family sum ``weight * rho_nonorth + rho_orth``, renormalized."""
    if rho_orth.omega.shape != rho_nonorth.omega.shape or not np.array_equal(rho_orth.omega, rho_nonorth.omega):
        raise ValidationError("omega", "families must share one frequency axis")
    dens = weight * rho_nonorth.density + rho_orth.density
    dens = dens / np.trapezoid(dens, rho_orth.omega)
    return FrequencyDensity(rho_orth.omega, dens, rho_orth.B_NV, "combined",
                            captured=min(rho_orth.captured, rho_nonorth.captured))


def ensemble_density(B_NV, spec, nv, omega=None):
    """Combined density of both families at field ``B_NV``."""
    orth = frequency_density(B_NV, spec, nv, "orth", omega)
    if B_NV == 0.0:
        return combine_families(orth, orth)
    return combine_families(orth, frequency_density(B_NV, spec, nv, "non_orth", omega))


def lorentzian_density(omega, center, hwhm):
    """Lorentzian line on a given axis, normalized on that axis (test helper)."""
    dens = lorentzian_pdf(np.asarray(omega) - center, hwhm)
    return FrequencyDensity(np.asarray(omega, dtype=float), dens / np.trapezoid(dens, omega), 0.0, "combined")


def _coupling_arrays(g_bins):
    if hasattr(g_bins, "g") and hasattr(g_bins, "N"):
        return np.asarray(g_bins.g, dtype=float), np.asarray(g_bins.N, dtype=float)
    g, N = g_bins
    return np.atleast_1d(np.asarray(g, dtype=float)), np.atleast_1d(np.asarray(N, dtype=float))


def bin_to_grid(density, M_delta, g_bins, g_ens, omega_s=None, span=None):
    """Discretize a density and a coupling distribution into sub-ensemble bins.

    Parameters
    ----------
    density : FrequencyDensity
    M_delta : int
        Number of frequency bins.
    g_bins : CouplingDensity or (g, N)
        Coupling values and relative spin counts.
    g_ens : float
        Target ensemble coupling (rad/s); sum of ``N g**2`` equals ``g_ens**2``.
    omega_s : float, optional
        Frame frequency; defaults to the mean frequency of the density.
    span : float, optional
        Width of the binned window centered on ``omega_s``; defaults to the
        full axis. Mass outside the window is dropped and the rest rescaled.

    Returns
    -------
    SubEnsembleGrid
    """
    if M_delta < 1:
        raise ValidationError("M_delta", "need at least one frequency bin")
    if g_ens < 0:
        raise ValidationError("g_ens", "ensemble coupling must be non-negative")
    g, N = _coupling_arrays(g_bins)
    if np.any(N < 0) or np.any(g < 0):
        raise ValidationError("g_bins", "couplings and counts must be non-negative")
    w = np.sum(N * g**2)
    if not w > 0:
        raise ValidationError("g_bins", "coupling distribution carries no weight")
    N = N * (g_ens**2 / w)

    omega = density.omega
    if omega_s is None:
        omega_s = density.mean_frequency()
    if M_delta == 1:
        p = np.ones(1)
        centers = np.array([omega_s])
    else:
        if span is None:
            lo, hi = omega[0], omega[-1]
        else:
            lo, hi = omega_s - 0.5 * span, omega_s + 0.5 * span
        edges = np.linspace(lo, hi, M_delta + 1)
        p = np.diff(np.interp(edges, omega, _cdf(density)))
        if not np.sum(p) > 0:
            raise ValidationError("span", "binning window holds no spectral weight")
        p = np.maximum(p, 0.0) / np.sum(p)
        centers = 0.5 * (edges[1:] + edges[:-1])

    delta = np.repeat(centers - omega_s, g.size)
    gg = np.tile(g, M_delta)
    NN = np.outer(p, N).ravel()
    return SubEnsembleGrid(delta, gg, NN, float(omega_s), M_delta, g.size, g_ens2=float(np.sum(NN * gg**2)))


def _cdf(density):
    d, w = density.density, density.omega
    return np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(w))])


def window_mass(density, omega_s, span):
    """Fraction of the density inside ``omega_s +- span/2`` (trapezoid CDF, linear between points)."""
    lo, hi = np.interp([omega_s - 0.5 * span, omega_s + 0.5 * span], density.omega, _cdf(density))
    return float(hi - lo)
