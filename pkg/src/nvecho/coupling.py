"""Single-spin coupling distribution from a resonator vacuum-field map.

Lab frame: x lies in the chip plane across the wires (parallel to the
applied field), y is the chip normal pointing into the diamond, z runs
along the wires.
"""

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange
from .params import ValidationError
from .units import HBAR, MU0

S13 = math.sqrt(1.0 / 3.0)
S23 = math.sqrt(2.0 / 3.0)

# NV axes of the four families and the two in-plane basis vectors of each
# local frame: x_loc = cos(psi) e1 + sin(psi) e2, y_loc = -sin(psi) e1 + cos(psi) e2
FAMILY_AXES = {
    1: np.array([S23, S13, 0.0]),
    2: np.array([-S23, S13, 0.0]),
    3: np.array([0.0, -S13, S23]),
    4: np.array([0.0, -S13, -S23]),
}
FAMILY_BASIS = {
    1: (np.array([-S13, S23, 0.0]), np.array([0.0, 0.0, 1.0])),
    2: (np.array([S13, S23, 0.0]), np.array([0.0, 0.0, 1.0])),
    3: (np.array([1.0, 0.0, 0.0]), np.array([0.0, S23, S13])),
    4: (np.array([1.0, 0.0, 0.0]), np.array([0.0, S23, -S13])),
}
ORTH_FAMILIES = (3, 4)


def single_photon_current(cavity):
    """Resonator vacuum current ``omega_c sqrt(hbar / (2 Z0))`` (A)."""
    return cavity.omega_c * math.sqrt(HBAR / (2.0 * cavity.Z0))


@dataclass(frozen=True)
class FieldMap:
    """Vacuum field sampled on points, with a cell volume per point.

    Attributes
    ----------
    points : ndarray, shape (n, 3)
        Positions (m).
    B : ndarray, shape (n, 3)
        Field per single-photon current (T).
    dV : ndarray, shape (n,)
        Cell volume of each point (m^3).
    current : float
        Current the field values correspond to (A).
    source : str
        ``"analytic-wire"`` or ``"imported"``.
    """

    points: np.ndarray
    B: np.ndarray
    dV: np.ndarray
    current: float
    source: str = "analytic-wire"

    def __post_init__(self):
        n = len(self.points)
        if n == 0:
            raise ValidationError("points", "field map is empty")
        if self.points.shape != (n, 3) or self.B.shape != (n, 3) or self.dV.shape != (n,):
            raise ValidationError("points", "inconsistent array shapes")
        if not np.all(np.isfinite(self.B)):
            raise ValidationError("B", "non-finite field value")
        if not np.all(self.dV > 0):
            raise ValidationError("dV", "cell volumes must be positive")

    def scaled_to(self, current):
        """Field map rescaled to a different drive current."""
        return FieldMap(self.points, self.B * (current / self.current), self.dV, current, self.source)


@dataclass(frozen=True)
class MeanderGeometry:
    """Parallel thin strips with alternating current, centred on x = 0.

    Lengths in metres. ``gap`` is the spacing between chip surface and
    diamond; ``active_length`` the extent along z that holds spins.
    """

    n_strips: int = 20
    strip_width: float = 2.5e-6
    pitch: float = 5e-6
    active_length: float = 100e-6
    gap: float = 0.7e-6
    depth: float = 500e-6

    def __post_init__(self):
        if self.n_strips < 1:
            raise ValidationError("n_strips", "need at least one strip")
        if self.strip_width < 0:
            raise ValidationError("strip_width", "width must be non-negative")
        if self.n_strips > 1 and self.strip_width >= self.pitch:
            raise ValidationError("strip_width", "strips overlap")
        for name in ("active_length", "gap", "depth"):
            if getattr(self, name) <= 0:
                raise ValidationError(name, "must be positive")

    @property
    def centers(self):
        return (np.arange(self.n_strips) - 0.5 * (self.n_strips - 1)) * self.pitch

    @property
    def signs(self):
        return np.where(np.arange(self.n_strips) % 2 == 0, 1.0, -1.0)

    @property
    def footprint(self):
        return (self.n_strips - 1) * self.pitch + self.strip_width


def strip_field(x, y, x1, x2, current):
    """In-plane field (Bx, By) of a thin strip on y = 0 between x1 and x2.

    Uniform sheet current along +z; ``x2 == x1`` gives a line current.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x2 - x1 <= 0:
        r2 = (x - x1) ** 2 + y**2
        c = MU0 * current / (2.0 * math.pi)
        return -c * y / r2, c * (x - x1) / r2
    K = current / (x2 - x1)
    Bx = -(MU0 * K / (2.0 * math.pi)) * (np.arctan2(x2 - x, y) - np.arctan2(x1 - x, y))
    By = (MU0 * K / (4.0 * math.pi)) * np.log(((x - x1) ** 2 + y**2) / ((x - x2) ** 2 + y**2))
    return Bx, By


def meander_field(x, y, geometry, current):
    """Field of all strips of a meander at points (x, y)."""
    Bx = np.zeros(np.broadcast(x, y).shape)
    By = np.zeros_like(Bx)
    hw = 0.5 * geometry.strip_width
    for c, s in zip(geometry.centers, geometry.signs):
        bx, by = strip_field(x, y, c - hw, c + hw, s * current)
        Bx += bx
        By += by
    return Bx, By


def _edges_to_cells(edges):
    return 0.5 * (edges[1:] + edges[:-1]), np.diff(edges)


def section_grid(geometry, margin=60e-6, height=150e-6, nx=1600, ny=160):
    """Cross-section cells of the diamond above the meander.

    x is uniform over the footprint plus ``margin`` on each side; y is
    geometric from the gap upward so the field gradients near the chip
    are resolved.
    """
    half = 0.5 * geometry.footprint + margin
    xe = np.linspace(-half, half, nx + 1)
    top = geometry.gap + min(height, geometry.depth)
    ye = geometry.gap + np.concatenate([[0.0], np.geomspace(1e-3 * geometry.pitch, top - geometry.gap, ny)])
    xc, dx = _edges_to_cells(xe)
    yc, dy = _edges_to_cells(ye)
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    A = np.outer(dx, dy)
    return X.ravel(), Y.ravel(), A.ravel()


def analytic_wire_field(geometry, cavity, **grid):
    """Vacuum field map of a straight-strip meander at single-photon current."""
    current = single_photon_current(cavity)
    x, y, area = section_grid(geometry, **grid)
    Bx, By = meander_field(x, y, geometry, current)
    points = np.column_stack([x, y, np.zeros_like(x)])
    B = np.column_stack([Bx, By, np.zeros_like(Bx)])
    return FieldMap(points, B, area * geometry.active_length, current, "analytic-wire")


def meander_inductance(geometry, margin=200e-6, nx=4000, ny=400):
    """Inductance of the strips from the field energy of both half spaces (H)."""
    half = 0.5 * geometry.footprint + margin
    xe = np.linspace(-half, half, nx + 1)
    ye = np.concatenate([[0.0], np.geomspace(1e-4 * geometry.pitch, 50 * geometry.footprint, ny)])
    xc, dx = _edges_to_cells(xe)
    yc, dy = _edges_to_cells(ye)
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    Bx, By = meander_field(X, Y, geometry, 1.0)
    energy_per_length = 2.0 * np.sum((Bx**2 + By**2) * np.outer(dx, dy)) / (2.0 * MU0)
    return 2.0 * energy_per_length * geometry.active_length


def family_couplings(dB, psi, family, nv):
    """Coupling magnitudes ``(|g_x|, |g_y|)`` (rad/s) of one family.

    Parameters
    ----------
    dB : array_like, shape (..., 2) or (..., 3)
        Vacuum field in the lab frame (T); a missing z component is zero.
    psi : float or ndarray
        Strain angle fixing the local x/y axes.
    family : {1, 2, 3, 4}
    """
    dB = np.asarray(dB, dtype=float)
    if dB.shape[-1] == 2:
        dB = np.concatenate([dB, np.zeros(dB.shape[:-1] + (1,))], axis=-1)
    e1, e2 = FAMILY_BASIS[family]
    p1 = dB @ e1
    p2 = dB @ e2
    c, s = np.cos(psi), np.sin(psi)
    gx = nv.gamma_e * np.abs(c * p1 + s * p2)
    gy = nv.gamma_e * np.abs(-s * p1 + c * p2)
    return gx, gy


@dataclass(frozen=True)
class CouplingDensity:
    """Binned coupling distribution.

    Attributes
    ----------
    g : ndarray
        Representative coupling of each bin (rad/s), rms within the bin.
    N : ndarray
        Number of spin-1/2 transitions in each bin.
    edges : ndarray
        Log-spaced bin edges (rad/s).
    family_weight : dict
        ``N g**2`` of each bin split by family.
    dropped_weight : float
        ``N g**2`` of samples below the cutoff, not included in the bins.
    """

    g: np.ndarray
    N: np.ndarray
    edges: np.ndarray
    family_weight: Dict[int, np.ndarray] = field(default_factory=dict)
    dropped_weight: float = 0.0

    @property
    def weight(self):
        return self.N * self.g**2

    @property
    def g_ens2(self):
        return float(np.sum(self.weight))

    @property
    def g_ens(self):
        return math.sqrt(self.g_ens2)

    @property
    def orth_share(self):
        total = sum(float(np.sum(w)) for w in self.family_weight.values())
        orth = sum(float(np.sum(self.family_weight[f])) for f in ORTH_FAMILIES if f in self.family_weight)
        return orth / total

    def normalized(self):
        """``N g**2`` per bin divided by its total (unit area)."""
        return self.weight / self.g_ens2


@njit(cache=True, parallel=True)
def _histogram_nb(P1, P2, nw, c, s, gamma, g_lo, log_lo, inv_step, M, chunk):
    n, nf = P1.shape
    nch = (n + chunk - 1) // chunk
    Np = np.zeros((nch, M))
    Wp = np.zeros((nch, nf, M))
    Dp = np.zeros(nch)
    for k in prange(nch):
        for i in range(k * chunk, min(n, (k + 1) * chunk)):
            w = nw[i]
            for f in range(nf):
                p1 = P1[i, f]
                p2 = P2[i, f]
                for j in range(c.size):
                    for b in range(2):
                        if b == 0:
                            g = gamma * abs(c[j] * p1 + s[j] * p2)
                        else:
                            g = gamma * abs(-s[j] * p1 + c[j] * p2)
                        if g < g_lo:
                            Dp[k] += w * g * g
                            continue
                        m = int((math.log(g) - log_lo) * inv_step)
                        if m >= M:
                            m = M - 1
                        Np[k, m] += w
                        Wp[k, f, m] += w * g * g
    return Np, Wp, Dp


def _histogram_numpy(P1, P2, nw, c, s, gamma, g_lo, log_lo, inv_step, M, chunk):
    n, nf = P1.shape
    nch = (n + chunk - 1) // chunk
    Np = np.zeros((nch, M))
    Wp = np.zeros((nch, nf, M))
    Dp = np.zeros(nch)
    for k in range(nch):
        sl = slice(k * chunk, min(n, (k + 1) * chunk))
        w = np.repeat(nw[sl], c.size)
        for f in range(nf):
            p1 = P1[sl, f][:, None]
            p2 = P2[sl, f][:, None]
            for g in (gamma * np.abs(c * p1 + s * p2), gamma * np.abs(-s * p1 + c * p2)):
                g = g.ravel()
                low = g < g_lo
                Dp[k] += np.sum(w[low] * g[low] ** 2)
                m = np.minimum(((np.log(g[~low]) - log_lo) * inv_step).astype(np.int64), M - 1)
                Np[k] += np.bincount(m, weights=w[~low], minlength=M)
                Wp[k, f] += np.bincount(m, weights=w[~low] * g[~low] ** 2, minlength=M)
    return Np, Wp, Dp


def coupling_density(fmap, concentration, nv, n_psi=64, M_g=21, families=(1, 2, 3, 4), psi=None, cutoff=1e-3):
    """Histogram single-spin couplings into log-spaced bins.

    Every point carries ``concentration * dV / 4`` NV centres per family,
    spread evenly over the strain angles; each NV contributes one spin-1/2
    per transition, with couplings ``|g_x|`` and ``|g_y|``.

    Parameters
    ----------
    fmap : FieldMap
    concentration : float
        NV density (m^-3).
    nv : NVParams
    n_psi : int
        Number of strain angles sampled uniformly on [0, 2 pi).
    M_g : int
        Number of bins.
    families : tuple of int
    psi : array_like, optional
        Explicit strain angles, overriding ``n_psi``.
    cutoff : float
        Samples with ``g < cutoff * max(g)`` are dropped and reported.

    Returns
    -------
    CouplingDensity
    """
    if concentration <= 0:
        raise ValidationError("concentration", "must be positive")
    if M_g < 1:
        raise ValidationError("M_g", "need at least one bin")
    psi = np.arange(n_psi) * (2.0 * math.pi / n_psi) if psi is None else np.atleast_1d(np.asarray(psi, float))
    c, s = np.cos(psi), np.sin(psi)
    fams = tuple(families)
    P1 = np.column_stack([fmap.B @ FAMILY_BASIS[f][0] for f in fams])
    P2 = np.column_stack([fmap.B @ FAMILY_BASIS[f][1] for f in fams])
    nw = concentration * fmap.dV / (4.0 * psi.size)

    amp = np.sqrt(P1**2 + P2**2)
    g_max = nv.gamma_e * float(np.max(amp))
    if not g_max > 0:
        raise ValidationError("B", "field map carries no transverse field")
    g_lo = cutoff * g_max
    hi = g_max * (1.0 + 1e-12)
    edges = np.geomspace(g_lo, hi, M_g + 1)
    log_lo = math.log(g_lo)
    inv_step = M_g / (math.log(hi) - log_lo)

    hist = _histogram_nb if HAVE_NUMBA else _histogram_numpy
    Np, Wp, Dp = hist(np.ascontiguousarray(P1), np.ascontiguousarray(P2), nw, c, s, nv.gamma_e, g_lo, log_lo,
                      inv_step, M_g, 8192)
    # merge per-chunk partials in fixed order
    N = np.zeros(M_g)
    W = np.zeros((len(fams), M_g))
    for k in range(Np.shape[0]):
        N += Np[k]
        W += Wp[k]
    dropped = float(np.sum(Dp))
    total_W = W.sum(axis=0)
    centers = np.sqrt(edges[1:] * edges[:-1])
    g = np.where(N > 0, np.sqrt(np.divide(total_W, N, out=np.zeros_like(N), where=N > 0)), centers)
    return CouplingDensity(g, N, edges, {f: W[i] for i, f in enumerate(fams)}, dropped)


def rescale_to_measured(density, g_ens_measured, p=1.0):
    """Scale spin counts so that ``g_ens = g_ens_measured / sqrt(p)``."""
    if not 0 < p <= 1:
        raise ValidationError("p", "polarization must lie in (0, 1]")
    if g_ens_measured <= 0:
        raise ValidationError("g_ens_measured", "must be positive")
    target = g_ens_measured**2 / p
    k = target / density.g_ens2
    return CouplingDensity(density.g, density.N * k, density.edges,
                           {f: w * k for f, w in density.family_weight.items()}, density.dropped_weight * k)


# ---------------------------------------------------------------------------
# field-map files

_HEADER = "# nvecho field map v1"


def write_field_map(fmap, path):
    """Write a field map as whitespace-separated text.

    Columns: x_um y_um z_um Bx_T By_T Bz_T dV_um3. Values are written with
    17 significant digits so a round trip is exact.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_HEADER + "\n")
        fh.write(f"# current_A = {fmap.current!r}\n")
        fh.write(f"# source = {fmap.source}\n")
        fh.write("# columns: x_um y_um z_um Bx_T By_T Bz_T dV_um3\n")
        pts = fmap.points * 1e6
        dv = fmap.dV * 1e18
        for p, b, v in zip(pts, fmap.B, dv):
            fh.write(" ".join(f"{u:.17g}" for u in (*p, *b, v)) + "\n")


def load_field_map(path, current=None):
    """Read a field-map file.

    The header must give ``current_A`` and either a ``cell_volume_um3``
    entry or a seventh ``dV_um3`` column. If ``current`` is given the
    field is rescaled to that current.
    """
    meta = {}
    rows = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if "=" in text:
                    k, v = text[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            parts = text.split()
            if len(parts) not in (6, 7):
                raise ValueError(f"{path}:{lineno}: expected 6 or 7 columns, got {len(parts)}")
            try:
                rows.append([float(u) for u in parts])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number") from None
    if not rows:
        raise ValidationError("points", f"{path}: field map is empty")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent column count")
    if "current_A" not in meta:
        raise ValueError(f"{path}: header lacks current_A")
    data = np.array(rows)
    if data.shape[1] == 7:
        dV = data[:, 6] * 1e-18
    elif "cell_volume_um3" in meta:
        dV = np.full(len(data), float(meta["cell_volume_um3"]) * 1e-18)
    else:
        raise ValueError(f"{path}: no cell volume given")
    fmap = FieldMap(data[:, :3] * 1e-6, data[:, 3:6], dV, float(meta["current_A"]), "imported")
    return fmap if current is None else fmap.scaled_to(current)
