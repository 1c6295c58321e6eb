"""NV ground-state transition frequencies.

Fast square-root formulas for the six |0, m_I> -> |+-, m_I> transitions,
an exact 9x9 diagonalization used as an oracle, and the inverse map from
frequency to local field.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class TransitionLabel:
    m_I: int
    branch: str

    def __post_init__(self):
        if self.m_I not in (-1, 0, 1):
            raise ValueError(f"m_I must be -1, 0 or 1, got {self.m_I}")
        if self.branch not in ("minus", "plus"):
            raise ValueError(f"branch must be 'plus' or 'minus', got {self.branch!r}")

    @property
    def sign(self):
        return 1.0 if self.branch == "plus" else -1.0

    @property
    def s(self):
        """Coefficient of B_hfs in the effective field."""
        return -float(self.m_I)


LABELS = tuple(TransitionLabel(m, b) for m in (-1, 0, 1) for b in ("minus", "plus"))


def _regime_check(E, field, D, gamma):
    if np.any(np.abs(E) > 0.05 * D) or np.any(np.abs(gamma * field) > 0.05 * D):
        warnings.warn("outside the D >> E, gamma|B| regime of the approximate formulas", stacklevel=3)


def effective_field(label, B_par, b, nv, alpha=0.0):
    return B_par * math.cos(alpha) + label.s * nv.B_hfs + b


def transition_freq_approx(label, E, B_par, D, b, nv, alpha=0.0):
    """Approximate transition angular frequency.

    ``omega = D +- sqrt(E**2 + gamma_e**2 (B_par cos(alpha) + s B_hfs + b)**2)``
    with ``s = -m_I``. Works element-wise on arrays.
    """
    Beff = effective_field(label, B_par, b, nv, alpha)
    _regime_check(E, Beff, D, nv.gamma_e)
    return D + label.sign * np.sqrt(np.square(E) + np.square(nv.gamma_e * Beff))


def _spin1_ops():
    sp = math.sqrt(2.0) * np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=complex)
    sx = 0.5 * (sp + sp.T)
    sy = -0.5j * (sp - sp.T)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def hamiltonian(nv, E, B_vec, D=None):
    """Secular ground-state Hamiltonian H/hbar (rad/s), electron x nucleus, 9x9.

    ``B_vec`` is given in the NV frame (z along the NV axis).
    """
    D = nv.D if D is None else D
    sx, sy, sz = _spin1_ops()
    one = np.eye(3)
    Sx, Sy, Sz = (np.kron(s, one) for s in (sx, sy, sz))
    Iz = np.kron(one, sz)
    Bx, By, Bz = B_vec
    H = (D * Sz @ Sz + E * (Sx @ Sx - Sy @ Sy) + nv.Q_nuc * Iz @ Iz + nv.A_hf * Iz @ Sz
         + nv.gamma_e * (Bx * Sx + By * Sy + Bz * Sz))
    return H


def transition_freq_exact(nv, E, B_vec, D=None):
    """Six exact transition angular frequencies ordered as :data:`LABELS`.

    The nuclear projection commutes with the secular Hamiltonian, so each
    m_I sector is diagonalized separately. Within a sector the lowest level
    continues |0> and the upper two give the minus and plus branches.
    """
    H = hamiltonian(nv, E, B_vec, D)
    out = np.empty(6)
    # kron ordering: index = 3 * electron + nucleus, nucleus index 0,1,2 -> m_I = +1,0,-1
    for k, mI in enumerate((-1, 0, 1)):
        idx = np.arange(3) * 3 + (1 - mI)
        block = H[np.ix_(idx, idx)]
        w = np.linalg.eigvalsh(block)
        out[2 * k] = w[1] - w[0]
        out[2 * k + 1] = w[2] - w[0]
    return out


def transitions_approx(E, B_par, D, b, nv, alpha=0.0):
    """All six approximate frequencies ordered as :data:`LABELS`."""
    return np.array([transition_freq_approx(lab, E, B_par, D, b, nv, alpha) for lab in LABELS])


def invert_local_field(omega, E, B_NV, D, label, nv, alpha=0.0):
    """Local fields ``b`` that put ``label`` at ``omega``.

    Returns an empty array when ``omega`` lies on the wrong side of
    ``D +- E``, otherwise the two roots ``b1 >= b2``.
    """
    u = label.sign * (omega - D)
    # allow for rounding in omega - D at the band edge
    if u < E - 8 * np.finfo(float).eps * abs(D):
        return np.empty(0)
    r = math.sqrt(max(u * u - E * E, 0.0)) / nv.gamma_e
    base = -B_NV * math.cos(alpha) - label.s * nv.B_hfs
    return np.array([r + base, -r + base])


def local_field_step(E, B_NV, D, b, d_omega0, label, nv, alpha=0.0):
    """Field step ``db`` that moves the transition by ``d_omega0`` away from ``D``.

    Of the two solutions of ``|omega(b + db) - omega(b)| = d_omega0`` this is
    the one of smaller magnitude, returned as a positive number. It is
    finite at the stationary point where the effective field vanishes.
    """
    if np.any(np.asarray(d_omega0) <= 0):
        raise ValueError("d_omega0 must be positive")
    g = nv.gamma_e
    Beff = np.abs(effective_field(label, B_NV, b, nv, alpha))
    u = np.sqrt(np.square(E) + np.square(g * Beff))
    return (np.sqrt(np.square(u + d_omega0) - np.square(E)) - g * Beff) / g


def spectrum_table(B_values, nv, family="non_orth", E=0.0, exact=True):
    """Transition frequencies vs applied field for one family.

    Returns an array of shape ``(len(B_values), 6)`` in rad/s.
    """
    alpha = nv.alpha(family)
    rows = []
    for B in np.asarray(B_values, dtype=float):
        if exact:
            Bvec = (B * math.sin(alpha), 0.0, B * math.cos(alpha))
            rows.append(transition_freq_exact(nv, E, Bvec))
        else:
            rows.append(transitions_approx(E, B, nv.D, 0.0, nv, alpha))
    return np.array(rows)
