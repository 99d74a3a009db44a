"""Analytic integrals over axial Gaussian orbitals.

The one-electron solvers use primitive Gaussians with s or p_z angular parts
whose centers all lie on the z axis.  Overlap, kinetic, and point-charge
attraction matrices then reduce to 1D Hermite recursions in z times trivial
x, y factors.  All routines are vectorized over basis-function pairs and
accept distinct bra and ket sets, which is what geometry-derivative couplings
need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma
from scipy.special import gammainc as _gammainc


def boys(n: int, t):
    """Boys function F_n(t), stable through t = 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    small = t < 1e-13
    safe = np.where(small, 1.0, t)
    val = _gammainc(n + 0.5, safe) * _gamma(n + 0.5) / (2.0 * safe ** (n + 0.5))
    return np.where(small, 1.0 / (2 * n + 1), val)


@dataclass(frozen=True)
class AxialBasis:
    """Primitive Gaussians exp(-a |r - z e_z|^2), s (l=0) or p_z (l=1)."""

    centers: np.ndarray
    exponents: np.ndarray
    angular: np.ndarray  # 0 or 1 per function

    def __len__(self):
        return len(self.exponents)


def even_tempered_axial(
    centers, n_exp: int = 16, ratio: float = 2.2, smallest: float = 0.01
) -> AxialBasis:
    """s and p_z shells with a geometric exponent ladder on each center."""
    exps = smallest * ratio ** np.arange(n_exp)
    zs, al, ls = [], [], []
    for c in centers:
        for a in exps:
            for l in (0, 1):
                zs.append(c)
                al.append(a)
                ls.append(l)
    return AxialBasis(np.asarray(zs, float), np.asarray(al, float), np.asarray(ls, int))


class _PairTable:
    """Broadcast pair quantities for a bra basis against a ket basis."""

    def __init__(self, bra: AxialBasis, ket: AxialBasis):
        self.a = bra.exponents[:, None]
        self.b = ket.exponents[None, :]
        self.la = bra.angular[:, None]
        self.lb = ket.angular[None, :]
        A = bra.centers[:, None]
        B = ket.centers[None, :]
        self.p = self.a + self.b
        self.mu = self.a * self.b / self.p
        self.P = (self.a * A + self.b * B) / self.p
        self.PA = self.P - A
        self.PB = self.P - B
        self.K = np.exp(-self.mu * (A - B) ** 2)

    def hermite_e(self, i: int, j: int, t: int):
        """1D Hermite expansion coefficient E_t^{ij} (without the K factor)."""
        if t < 0 or t > i + j:
            return 0.0
        if i == j == t == 0:
            return 1.0
        inv2p = 1.0 / (2.0 * self.p)
        if i > 0:
            return (
                inv2p * self.hermite_e(i - 1, j, t - 1)
                + self.PA * self.hermite_e(i - 1, j, t)
                + (t + 1) * self.hermite_e(i - 1, j, t + 1)
            )
        return (
            inv2p * self.hermite_e(i, j - 1, t - 1)
            + self.PB * self.hermite_e(i, j - 1, t)
            + (t + 1) * self.hermite_e(i, j - 1, t + 1)
        )

    def overlap_z(self, i: int, j: int):
        return np.sqrt(np.pi / self.p) * self.K * self.hermite_e(i, j, 0)

    def select(self, ss, ps, sp, pp):
        """Combine the four angular blocks into one matrix."""
        return np.where(
            (self.la == 0) & (self.lb == 0),
            ss,
            np.where(
                (self.la == 1) & (self.lb == 0),
                ps,
                np.where((self.la == 0) & (self.lb == 1), sp, pp),
            ),
        )


def overlap_matrix(bra: AxialBasis, ket: AxialBasis) -> np.ndarray:
    pt = _PairTable(bra, ket)
    sxy = np.pi / pt.p  # the two transverse 1D s-overlaps combined
    Sz = pt.select(
        pt.overlap_z(0, 0), pt.overlap_z(1, 0), pt.overlap_z(0, 1), pt.overlap_z(1, 1)
    )
    return sxy * Sz


def kinetic_matrix(bra: AxialBasis, ket: AxialBasis, inverse_mass: float = 1.0) -> np.ndarray:
    """Matrix of -(inverse_mass/2) laplacian."""
    pt = _PairTable(bra, ket)
    b = pt.b

    def t_z(l1, l2):
        term = -2.0 * b * (2 * l2 + 1) * pt.overlap_z(l1, l2)
        term += 4.0 * b**2 * pt.overlap_z(l1, l2 + 2)
        if l2 >= 2:
            term += l2 * (l2 - 1) * pt.overlap_z(l1, l2 - 2)
        return -0.5 * term

    s1 = np.sqrt(np.pi / pt.p)  # transverse 1D overlap; centers coincide off-axis
    t1 = -0.5 * (-2.0 * b * s1 + 4.0 * b**2 * s1 / (2.0 * pt.p))
    Sz = pt.select(
        pt.overlap_z(0, 0), pt.overlap_z(1, 0), pt.overlap_z(0, 1), pt.overlap_z(1, 1)
    )
    Tz = pt.select(t_z(0, 0), t_z(1, 0), t_z(0, 1), t_z(1, 1))
    return inverse_mass * (2.0 * t1 * s1 * Sz + s1 * s1 * Tz)


def perpendicular_l2_matrix(basis: AxialBasis) -> np.ndarray:
    """Matrix of L_x^2 + L_y^2 about the origin for m = 0 axial functions.

    L_x turns each primitive into y times an s/p_z combination at the same
    center and exponent, so the quadratic form is a y^2 moment of ordinary
    overlaps: <y f|y g> = <f|g>/(2(a+b)).  Requires the s partner of every
    p_z function to be present, which even_tempered_axial guarantees.
    """
    n = len(basis)
    W = np.zeros((n, n))
    key = {
        (round(c, 12), a, l): i
        for i, (c, a, l) in enumerate(
            zip(basis.centers, basis.exponents, basis.angular)
        )
    }
    for i, (c, a, l) in enumerate(zip(basis.centers, basis.exponents, basis.angular)):
        W[i, i] = 2.0 * a * c
        if l == 1:
            W[key[(round(c, 12), a, 0)], i] = 1.0
    Y = overlap_matrix(basis, basis) / (
        basis.exponents[:, None] + basis.exponents[None, :]
    )
    return W.T @ Y @ W


def attraction_matrix(bra: AxialBasis, ket: AxialBasis, charges) -> np.ndarray:
    """Sum of -Z/|r - C| attraction matrices for point charges on the axis.

    ``charges`` is an iterable of (Z, z_position) pairs.
    """
    pt = _PairTable(bra, ket)
    p, K, PA, PB = pt.p, pt.K, pt.PA, pt.PB
    inv2p = 1.0 / (2.0 * p)
    out = np.zeros_like(p)
    for Z, cz in charges:
        PC = pt.P - cz
        T = p * PC**2
        F0, F1, F2 = boys(0, T), boys(1, T), boys(2, T)
        # Hermite Coulomb integrals R_{00t} along z
        R0 = F0
        R1 = PC * (-2.0 * p) * F1
        R2 = PC**2 * (4.0 * p**2) * F2 + (-2.0 * p) * F1
        pref = 2.0 * np.pi / p * K
        v_ss = pref * R0
        v_ps = pref * (PA * R0 + inv2p * R1)
        v_sp = pref * (PB * R0 + inv2p * R1)
        v_pp = pref * ((PA * PB + inv2p) * R0 + (PA + PB) * inv2p * R1 + inv2p**2 * R2)
        out -= Z * pt.select(v_ss, v_ps, v_sp, v_pp)
    return out
