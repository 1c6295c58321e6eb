"""Hot loops: fixed-step RK4 for the cavity plus spin-bin system.

Two interchangeable integrators share one signature:

``rk4_direct``
    Plain numpy RK4, four full passes over the bins per step.
``rk4_moments``
    numba kernel. Within one RK4 step every bin evolves linearly under a
    3x3 generator that is affine in (g, Delta) once the four cavity stage
    values are known. The cavity needs only ``sum g s`` at each stage, and
    those sums are polynomials of degree <= 3 in (g h, Delta h) applied to
    the bin state. The coupling term swaps a component between the
    transverse pair and the longitudinal one, so only transverse moments
    with even powers of ``g h`` and longitudinal ones with odd powers are
    ever read: 16 weighted moments give all four cavity stages from scalar
    algebra, and each step needs a single pass over the bins. The result
    is algebraically identical to classical RK4; only the rounding differs.

Both return the cavity quadratures at every step and write requested spin
snapshots. Bins are processed in fixed chunks whose partial moments are
combined in chunk order, so results do not depend on the thread count.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange

SQRT2 = math.sqrt(2.0)
CHUNK = 4096
FASTMATH = {"reassoc", "contract", "nsz", "arcp"}

# monomials (a, b) of (g h)^a (Delta h)^b with a + b <= 3
MONOMIALS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))
_INDEX = {m: i for i, m in enumerate(MONOMIALS)}
UP_G = np.array([_INDEX.get((a + 1, b), -1) for a, b in MONOMIALS], dtype=np.int64)
UP_D = np.array([_INDEX.get((a, b + 1), -1) for a, b in MONOMIALS], dtype=np.int64)


def rhs_arrays(X, P, sx, sy, sz, g, delta, N, kappa, dcs, gam, gpar, bR, bI):
    """Time derivative of the mean-value equations (rates in rad/s)."""
    sk = 2.0 * math.sqrt(kappa)
    dX = -kappa * X + dcs * P - np.sum(g * sy) / SQRT2 + sk * bR
    dP = -kappa * P - dcs * X - np.sum(g * sx) / SQRT2 + sk * bI
    gs = SQRT2 * g
    dsx = -gam * sx - delta * sy - gs * sz * P
    dsy = -gam * sy + delta * sx - gs * sz * X
    dsz = gs * (sx * P + sy * X) - gpar * (sz + N)
    return dX, dP, dsx, dsy, dsz


def rk4_direct(X, P, sx, sy, sz, g, delta, N, kappa, dcs, gam, gpar, bR, bI, h, nsteps, snap_idx, snaps):
    """Classical RK4 in numpy. Spin arrays are advanced in place.

    ``bR``/``bI`` hold the drive at half-step resolution (length
    ``2 nsteps + 1``). Returns ``(Xs, Ps, bad)`` where ``bad`` is the first
    step producing a non-finite state, or -1.
    """
    Xs = np.empty(nsteps + 1)
    Ps = np.empty(nsteps + 1)
    Xs[0], Ps[0] = X, P
    args = (g, delta, N, kappa, dcs, gam, gpar)
    nxt = 0
    while nxt < snap_idx.size and snap_idx[nxt] == 0:
        snaps[nxt, 0], snaps[nxt, 1], snaps[nxt, 2] = sx, sy, sz
        nxt += 1
    for n in range(nsteps):
        j = 2 * n
        k1 = rhs_arrays(X, P, sx, sy, sz, *args, bR[j], bI[j])
        k2 = rhs_arrays(X + 0.5 * h * k1[0], P + 0.5 * h * k1[1], sx + 0.5 * h * k1[2],
                        sy + 0.5 * h * k1[3], sz + 0.5 * h * k1[4], *args, bR[j + 1], bI[j + 1])
        k3 = rhs_arrays(X + 0.5 * h * k2[0], P + 0.5 * h * k2[1], sx + 0.5 * h * k2[2],
                        sy + 0.5 * h * k2[3], sz + 0.5 * h * k2[4], *args, bR[j + 1], bI[j + 1])
        k4 = rhs_arrays(X + h * k3[0], P + h * k3[1], sx + h * k3[2],
                        sy + h * k3[3], sz + h * k3[4], *args, bR[j + 2], bI[j + 2])
        X = X + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        P = P + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        sx += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        sy += h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        sz += h / 6.0 * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        Xs[n + 1], Ps[n + 1] = X, P
        if not (math.isfinite(X) and math.isfinite(P)):
            return Xs, Ps, n
        while nxt < snap_idx.size and snap_idx[nxt] == n + 1:
            snaps[nxt, 0], snaps[nxt, 1], snaps[nxt, 2] = sx, sy, sz
            nxt += 1
    if not (np.all(np.isfinite(sx)) and np.all(np.isfinite(sy)) and np.all(np.isfinite(sz))):
        return Xs, Ps, nsteps - 1
    return Xs, Ps, -1


@njit(cache=True, fastmath=FASTMATH)
def _step_bins(sx, sy, sz, G, D, N, gam, gpar, x1, x2, x3, x4, p1, p2, p3, p4):
    # zero-based loops over slices let LLVM drop index wraparound and vectorize
    for m in range(sx.size):
        X = sx[m]; Y = sy[m]; Z = sz[m]; Gm = G[m]; Dm = D[m]
        cz = -gpar * N[m]
        k1x = -gam * X - Dm * Y - Gm * p1 * Z
        k1y = Dm * X - gam * Y - Gm * x1 * Z
        k1z = Gm * (p1 * X + x1 * Y) - gpar * Z + cz
        ux = X + 0.5 * k1x; uy = Y + 0.5 * k1y; uz = Z + 0.5 * k1z
        k2x = -gam * ux - Dm * uy - Gm * p2 * uz
        k2y = Dm * ux - gam * uy - Gm * x2 * uz
        k2z = Gm * (p2 * ux + x2 * uy) - gpar * uz + cz
        ux = X + 0.5 * k2x; uy = Y + 0.5 * k2y; uz = Z + 0.5 * k2z
        k3x = -gam * ux - Dm * uy - Gm * p3 * uz
        k3y = Dm * ux - gam * uy - Gm * x3 * uz
        k3z = Gm * (p3 * ux + x3 * uy) - gpar * uz + cz
        ux = X + k3x; uy = Y + k3y; uz = Z + k3z
        k4x = -gam * ux - Dm * uy - Gm * p4 * uz
        k4y = Dm * ux - gam * uy - Gm * x4 * uz
        k4z = Gm * (p4 * ux + x4 * uy) - gpar * uz + cz
        sx[m] = X + (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        sy[m] = Y + (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        sz[m] = Z + (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0


@njit(cache=True, fastmath=FASTMATH)
def _moments(sx, sy, sz, g, G, D, r):
    """The 16 structurally nonzero moments, written into ``r`` (layout 3 * monomial + component)."""
    a0 = 0.0; a2 = 0.0; a3 = 0.0; a5 = 0.0; a7 = 0.0; a9 = 0.0
    b0 = 0.0; b2 = 0.0; b3 = 0.0; b5 = 0.0; b7 = 0.0; b9 = 0.0
    c1 = 0.0; c4 = 0.0; c6 = 0.0; c8 = 0.0
    for m in range(sx.size):
        X = sx[m]; Y = sy[m]; Z = sz[m]; Gm = G[m]; Dm = D[m]; w0 = g[m]
        wd = w0 * Dm; wdd = wd * Dm; wddd = wdd * Dm
        wg = w0 * Gm; wgg = wg * Gm; wggd = wgg * Dm
        wgd = wg * Dm; wgdd = wgd * Dm; wggg = wgg * Gm
        a0 += w0 * X; a2 += wd * X; a3 += wgg * X; a5 += wdd * X; a7 += wggd * X; a9 += wddd * X
        b0 += w0 * Y; b2 += wd * Y; b3 += wgg * Y; b5 += wdd * Y; b7 += wggd * Y; b9 += wddd * Y
        c1 += wg * Z; c4 += wgd * Z; c6 += wggg * Z; c8 += wgdd * Z
    r[0] = a0; r[1] = b0; r[6] = a2; r[7] = b2; r[9] = a3; r[10] = b3
    r[15] = a5; r[16] = b5; r[21] = a7; r[22] = b7; r[27] = a9; r[28] = b9
    r[5] = c1; r[14] = c4; r[20] = c6; r[26] = c8


@njit(cache=True, parallel=True)
def _bin_pass(sx, sy, sz, g, G, D, N, gam, gpar, xs, ps, partial, chunk, advance):
    """One RK4 step for every bin (if ``advance``) and the moments of the result."""
    M = sx.size
    nch = partial.shape[0]
    for c in prange(nch):
        lo = c * chunk
        hi = min(M, lo + chunk)
        if advance:
            _step_bins(sx[lo:hi], sy[lo:hi], sz[lo:hi], G[lo:hi], D[lo:hi], N[lo:hi], gam, gpar,
                       xs[0], xs[1], xs[2], xs[3], ps[0], ps[1], ps[2], ps[3])
        _moments(sx[lo:hi], sy[lo:hi], sz[lo:hi], g[lo:hi], G[lo:hi], D[lo:hi], partial[c])


@njit(cache=True)
def _n_moments(g, G, D, N, nmom):
    """Static moments ``sum g G^a D^b N`` of all ten monomials."""
    nmom[:] = 0.0
    for m in range(g.size):
        w = g[m] * N[m]
        Gm = G[m]; Dm = D[m]
        nmom[0] += w; nmom[1] += w * Gm; nmom[2] += w * Dm
        nmom[3] += w * Gm * Gm; nmom[4] += w * Gm * Dm; nmom[5] += w * Dm * Dm
        nmom[6] += w * Gm * Gm * Gm; nmom[7] += w * Gm * Gm * Dm
        nmom[8] += w * Gm * Dm * Dm; nmom[9] += w * Dm * Dm * Dm


@njit(cache=True)
def _reduce(partial, mom):
    # fixed chunk order keeps the sum independent of the thread schedule
    mom[:] = 0.0
    for c in range(partial.shape[0]):
        for k in range(30):
            mom[k] += partial[c, k]


@njit(cache=True)
def _advance(Tin, Uin, X, P, gam, gpar, f, Tout, Uout, up_g, up_d):
    """Tout = I + f L Tin and Uout = f (L Uin + e) for the polynomial generator L."""
    Tout[:] = 0.0
    Uout[:] = 0.0
    for r in range(3):
        Tout[0, r, r] = 1.0
    Uout[0, 2] = -f * gpar
    l0 = (-gam, -gam, -gpar)
    for i in range(10):
        jg = up_g[i]
        jd = up_d[i]
        for c in range(3):
            t0 = Tin[i, 0, c]; t1 = Tin[i, 1, c]; t2 = Tin[i, 2, c]
            Tout[i, 0, c] += f * l0[0] * t0
            Tout[i, 1, c] += f * l0[1] * t1
            Tout[i, 2, c] += f * l0[2] * t2
            if jg >= 0:
                Tout[jg, 0, c] += -f * P * t2
                Tout[jg, 1, c] += -f * X * t2
                Tout[jg, 2, c] += f * (P * t0 + X * t1)
            if jd >= 0:
                Tout[jd, 0, c] += -f * t1
                Tout[jd, 1, c] += f * t0
        u0 = Uin[i, 0]; u1 = Uin[i, 1]; u2 = Uin[i, 2]
        Uout[i, 0] += f * l0[0] * u0
        Uout[i, 1] += f * l0[1] * u1
        Uout[i, 2] += f * l0[2] * u2
        if jg >= 0:
            Uout[jg, 0] += -f * P * u2
            Uout[jg, 1] += -f * X * u2
            Uout[jg, 2] += f * (P * u0 + X * u1)
        if jd >= 0:
            Uout[jd, 0] += -f * u1
            Uout[jd, 1] += f * u0


@njit(cache=True)
def _stage_sums(T, U, mom, nmom):
    """(sum g s_x, sum g s_y) at an RK4 stage from the state moments."""
    sx = 0.0
    sy = 0.0
    for i in range(10):
        for c in range(3):
            m = mom[3 * i + c]
            sx += T[i, 0, c] * m
            sy += T[i, 1, c] * m
        sx += U[i, 0] * nmom[i]
        sy += U[i, 1] * nmom[i]
    return sx, sy


@njit(cache=True)
def _rk4_moments(X, P, sx, sy, sz, g, delta, N, kappa, dcs, gam, gpar, bR, bI, h, nsteps,
                 snap_idx, snaps, chunk, up_g, up_d):
    M = sx.size
    nch = max(1, (M + chunk - 1) // chunk)
    G = SQRT2 * g * h
    D = delta * h
    Gam = gam * h
    Gpar = gpar * h
    sk = 2.0 * math.sqrt(kappa)
    inv2 = 1.0 / SQRT2

    partial = np.zeros((nch, 30))
    mom = np.zeros(30)
    nmom = np.zeros(10)
    _n_moments(g, G, D, N, nmom)
    _bin_pass(sx, sy, sz, g, G, D, N, Gam, Gpar, np.zeros(4), np.zeros(4), partial, chunk, False)
    _reduce(partial, mom)

    T1 = np.zeros((10, 3, 3))
    for r in range(3):
        T1[0, r, r] = 1.0
    U1 = np.zeros((10, 3))
    T2 = np.zeros((10, 3, 3)); U2 = np.zeros((10, 3))
    T3 = np.zeros((10, 3, 3)); U3 = np.zeros((10, 3))
    T4 = np.zeros((10, 3, 3)); U4 = np.zeros((10, 3))
    xs = np.zeros(4)
    ps = np.zeros(4)
    Xs = np.empty(nsteps + 1)
    Ps = np.empty(nsteps + 1)
    Xs[0] = X
    Ps[0] = P

    nxt = 0
    while nxt < snap_idx.size and snap_idx[nxt] == 0:
        snaps[nxt, 0, :] = sx; snaps[nxt, 1, :] = sy; snaps[nxt, 2, :] = sz
        nxt += 1

    for n in range(nsteps):
        j = 2 * n
        # stage 1
        Sx1, Sy1 = _stage_sums(T1, U1, mom, nmom)
        kX1 = -kappa * X + dcs * P - Sy1 * inv2 + sk * bR[j]
        kP1 = -kappa * P - dcs * X - Sx1 * inv2 + sk * bI[j]
        xs[0] = X; ps[0] = P
        # stage 2
        _advance(T1, U1, xs[0], ps[0], Gam, Gpar, 0.5, T2, U2, up_g, up_d)
        Sx2, Sy2 = _stage_sums(T2, U2, mom, nmom)
        X2 = X + 0.5 * h * kX1; P2 = P + 0.5 * h * kP1
        kX2 = -kappa * X2 + dcs * P2 - Sy2 * inv2 + sk * bR[j + 1]
        kP2 = -kappa * P2 - dcs * X2 - Sx2 * inv2 + sk * bI[j + 1]
        xs[1] = X2; ps[1] = P2
        # stage 3
        _advance(T2, U2, X2, P2, Gam, Gpar, 0.5, T3, U3, up_g, up_d)
        Sx3, Sy3 = _stage_sums(T3, U3, mom, nmom)
        X3 = X + 0.5 * h * kX2; P3 = P + 0.5 * h * kP2
        kX3 = -kappa * X3 + dcs * P3 - Sy3 * inv2 + sk * bR[j + 1]
        kP3 = -kappa * P3 - dcs * X3 - Sx3 * inv2 + sk * bI[j + 1]
        xs[2] = X3; ps[2] = P3
        # stage 4
        _advance(T3, U3, X3, P3, Gam, Gpar, 1.0, T4, U4, up_g, up_d)
        Sx4, Sy4 = _stage_sums(T4, U4, mom, nmom)
        X4 = X + h * kX3; P4 = P + h * kP3
        kX4 = -kappa * X4 + dcs * P4 - Sy4 * inv2 + sk * bR[j + 2]
        kP4 = -kappa * P4 - dcs * X4 - Sx4 * inv2 + sk * bI[j + 2]
        xs[3] = X4; ps[3] = P4

        _bin_pass(sx, sy, sz, g, G, D, N, Gam, Gpar, xs, ps, partial, chunk, True)
        _reduce(partial, mom)
        X = X + h / 6.0 * (kX1 + 2.0 * kX2 + 2.0 * kX3 + kX4)
        P = P + h / 6.0 * (kP1 + 2.0 * kP2 + 2.0 * kP3 + kP4)
        Xs[n + 1] = X
        Ps[n + 1] = P
        if not (np.isfinite(X) and np.isfinite(P) and np.isfinite(mom[0]) and np.isfinite(mom[1])
                and np.isfinite(mom[2])):
            return Xs, Ps, n
        while nxt < snap_idx.size and snap_idx[nxt] == n + 1:
            snaps[nxt, 0, :] = sx; snaps[nxt, 1, :] = sy; snaps[nxt, 2, :] = sz
            nxt += 1
    return Xs, Ps, -1


def rk4_moments(X, P, sx, sy, sz, g, delta, N, kappa, dcs, gam, gpar, bR, bI, h, nsteps, snap_idx, snaps,
                chunk=CHUNK):
    """Single-pass RK4 via moment reduction (numba). Same contract as :func:`rk4_direct`."""
    return _rk4_moments(float(X), float(P), sx, sy, sz, g, delta, N, float(kappa), float(dcs), float(gam),
                        float(gpar), bR, bI, float(h), int(nsteps), snap_idx, snaps, int(chunk), UP_G, UP_D)


def run_rk4(*args, backend=None, **kwargs):
    """Dispatch to the numba kernel when available, else numpy."""
    if backend is None:
        backend = "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is disabled or missing")
        return rk4_moments(*args, **kwargs)
    if backend == "numpy":
        return rk4_direct(*args)
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# radial CDF of the transition offset


def theta_nodes(n_panels, order=8):
    """Composite Gauss-Legendre nodes and weights on [0, pi/2]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 0.5 * math.pi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    theta = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weight = (half[:, None] * w[None, :]).ravel()
    return theta, weight


def radial_cdf_numpy(u, zc, w, E1, E2, A1, theta, wtheta, block=256):
    """P(sqrt(E**2 + Z**2) <= u) for bi-exponential E and Lorentzian Z(zc, w)."""
    st = np.sin(theta)[None, :]
    ct = np.cos(theta)[None, :]
    norm = E1 + A1 * E2
    out = np.empty(u.size)
    for lo in range(0, u.size, block):
        uk = u[lo:lo + block, None]
        E = uk * st
        v = uk * ct
        pE = (np.exp(-E / E1) + A1 * np.exp(-E / E2)) / norm
        pz = (np.arctan((v - zc) / w) + np.arctan((v + zc) / w)) / math.pi
        out[lo:lo + block] = (pE * pz * v) @ wtheta
    return out


@njit(cache=True, parallel=True)
def _radial_cdf_nb(u, zc, w, E1, E2, A1, theta, wtheta):
    n = u.size
    out = np.zeros(n)
    st = np.sin(theta)
    ct = np.cos(theta)
    norm = E1 + A1 * E2
    for k in prange(n):
        uk = u[k]
        s = 0.0
        for j in range(theta.size):
            E = uk * st[j]
            v = uk * ct[j]
            pE = (math.exp(-E / E1) + A1 * math.exp(-E / E2)) / norm
            pz = (math.atan((v - zc) / w) + math.atan((v + zc) / w)) / math.pi
            s += wtheta[j] * pE * pz * v
        out[k] = s
    return out


def radial_cdf(u, zc, w, E1, E2, A1, theta, wtheta):
    """Distribution function of the offset ``|omega - D|`` of one m_I pair.

    The strain E follows the bi-exponential law and the Zeeman term
    ``Z = gamma_e B_eff`` a Lorentzian of centre ``zc`` and half width
    ``w``. The substitution ``E = u sin(theta)`` keeps the integrand smooth.
    """
    args = (np.ascontiguousarray(u, dtype=float), float(zc), float(w), float(E1), float(E2), float(A1),
            np.ascontiguousarray(theta, dtype=float), np.ascontiguousarray(wtheta, dtype=float))
    if HAVE_NUMBA:
        return _radial_cdf_nb(*args)
    return radial_cdf_numpy(*args)
