"""Nuclear motion on a fixed potential curve.

Levels come from a fourth-order finite-difference diagonalization of the
radial equation, and every reported level is re-derived by Numerov shooting;
the two methods must agree to 1e-7 hartree or the solve is rejected.  The
energy-expansion helper turns a located curve minimum into harmonic and
rotational scales.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig_banded
from scipy.optimize import brentq

from .errors import ConvergenceError, ValidationError
from .systems import MolecularSystem, kappa
from .twocenter import PotentialCurve

CROSS_CHECK_TOL = 1e-7
DEFAULT_POINTS = 4000


@dataclass(frozen=True)
class VibRotLevel:
    v: int
    J: int
    energy: float
    norm_converged: bool


@dataclass(frozen=True)
class KappaExpansion:
    """Level structure near a curve minimum, organized by powers of kappa^2."""

    V0: float
    curvature: float
    omega: float
    rotational_constant: float
    kappa: float
    predicted_spacing: float
    actual_spacing: float


def _effective_potential(curve: PotentialCurve, mu: float, J: int, n_points: int):
    """Node set spanning the curve domain, walls included, with V at each node."""
    r = np.linspace(curve.r_grid[0], curve.r_grid[-1], n_points)
    V = curve.spline(0)(r)
    if J:
        V = V + J * (J + 1) / (2.0 * mu * r**2)
    return r, V


def _banded_levels(r, V, mu: float, n_levels: int):
    """Lowest eigenpairs of -(1/2 mu) u'' + V u with walls at r[0] and r[-1].

    Three-point stencil over the interior nodes.  Its wall closure is exact
    (the stencil only ever references the zero boundary values), so the
    eigenvalue error is a clean h^2 series even when the potential is
    singular at a wall, and Richardson extrapolation in the caller removes
    the leading term.
    """
    n = len(r) - 2
    h = r[1] - r[0]
    c = 1.0 / (2.0 * mu * h * h)
    bands = np.zeros((2, n))
    bands[0] = 2.0 * c + V[1:-1]
    bands[1] = -c
    w, vecs = eig_banded(
        bands, lower=True, select="i", select_range=(0, min(n_levels, n) - 1)
    )
    return w, vecs


def _numerov_recheck(r, V, mu: float, energy: float) -> float:
    """Re-derive one eigenvalue by two-sided Numerov shooting.

    Returns the root of the matching mismatch closest to ``energy``.
    """
    h = r[1] - r[0]
    n = len(r)

    def mismatch(E):
        g = 2.0 * mu * (V - E)
        f = 1.0 - (h * h / 12.0) * g
        # outermost classically allowed point, clamped away from the edges
        allowed = np.nonzero(V < E)[0]
        m = int(allowed[-1]) if len(allowed) else n // 2
        m = min(max(m, 5), n - 6)

        u_out = np.zeros(m + 2)
        u_out[0], u_out[1] = 0.0, 1e-30
        for i in range(1, m + 1):
            u_out[i + 1] = ((12.0 - 10.0 * f[i]) * u_out[i] - f[i - 1] * u_out[i - 1]) / f[i + 1]
            if abs(u_out[i + 1]) > 1e250:
                u_out[: i + 2] *= 1e-250

        u_in = np.zeros(n)
        u_in[n - 1], u_in[n - 2] = 0.0, 1e-30
        for i in range(n - 2, m - 1, -1):
            u_in[i - 1] = ((12.0 - 10.0 * f[i]) * u_in[i] - f[i + 1] * u_in[i + 1]) / f[i - 1]
            if abs(u_in[i - 1]) > 1e250:
                u_in[i - 1 :] *= 1e-250

        cross = u_out[m + 1] * u_in[m] - u_in[m + 1] * u_out[m]
        scale = abs(u_out[m] * u_in[m]) + abs(u_out[m + 1] * u_in[m + 1])
        return cross / scale if scale > 0 else np.nan

    for half_width in (5e-6, 2e-5, 1e-4):
        lo, hi = energy - half_width, energy + half_width
        f_lo, f_hi = mismatch(lo), mismatch(hi)
        if np.isfinite(f_lo) and np.isfinite(f_hi) and f_lo * f_hi < 0:
            return brentq(mismatch, lo, hi, xtol=1e-12)
    raise ConvergenceError(
        f"Numerov shooting found no matching root near E = {energy:.8f}; "
        "grid too coarse"
    )


def solve_radial(
    curve: PotentialCurve,
    mu_nuclear: float,
    J: int = 0,
    n_levels: int = 1,
    n_points: int = DEFAULT_POINTS,
) -> list[VibRotLevel]:
    """Lowest bound levels of nuclear motion on the curve's ground state."""
    if mu_nuclear <= 0:
        raise ValidationError("reduced mass must be positive")
    if J < 0 or n_levels < 1:
        raise ValidationError("need J >= 0 and at least one level")

    r_coarse, V_coarse = _effective_potential(curve, mu_nuclear, J, n_points)
    r, V = _effective_potential(curve, mu_nuclear, J, 2 * n_points - 1)
    dissociation = V[-1]
    w_coarse, _ = _banded_levels(r_coarse, V_coarse, mu_nuclear, n_levels)
    w_fine, vecs = _banded_levels(r, V, mu_nuclear, n_levels)
    # halved step, so the h^2 errors cancel in the 4:1 combination
    w = (4.0 * w_fine - w_coarse) / 3.0

    levels = []
    for v, energy in enumerate(w):
        if energy >= dissociation - 1e-9:
            break
        # extrapolate the shooting roots over the same grid pair: at a wall
        # where the potential is singular the Numerov startup is limited to
        # second order by the nodal data, and the 4:1 combination removes
        # that term just as it does for the matrix eigenvalues
        root_coarse = _numerov_recheck(r_coarse, V_coarse, mu_nuclear, energy)
        root_fine = _numerov_recheck(r, V, mu_nuclear, energy)
        checked = (4.0 * root_fine - root_coarse) / 3.0
        if abs(checked - energy) > CROSS_CHECK_TOL:
            raise ConvergenceError(
                f"grid and Numerov levels disagree by {abs(checked - energy):.2e} "
                f"at v = {v}; grid too coarse"
            )
        # only the dissociation-side edge can spoil normalizability; the
        # inner edge is a hard wall where a linear rise is physical
        tail = abs(vecs[-1, v]) / np.abs(vecs[:, v]).max()
        levels.append(VibRotLevel(v, J, float(energy), bool(tail < 1e-4)))
    if not levels:
        warnings.warn("no bound level below the dissociation limit")
    return levels


def fitted_spacing_exponent(curve: PotentialCurve, mu_nuclear: float, lambdas,
                            n_points: int = 6000):
    """Log-log slope of the v=0 to v=1 spacing as the reduced mass scales.

    Returns (exponent, spacings).  The heavier the pair, the denser the
    levels; a harmonic well gives spacing proportional to lambda^(-1/2).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if len(lambdas) < 3 or (np.diff(lambdas) <= 0).any():
        raise ValidationError("need at least three ascending scale factors")
    spacings = []
    for lam in lambdas:
        levels = solve_radial(curve, mu_nuclear * lam, 0, 2, n_points)
        if len(levels) < 2:
            raise ConvergenceError(f"fewer than two bound levels at scale {lam}")
        spacings.append(levels[1].energy - levels[0].energy)
    spacings = np.asarray(spacings)
    slope = np.polyfit(np.log(lambdas), np.log(spacings), 1)[0]
    return float(slope), spacings


def kappa_expansion(curve: PotentialCurve, system: MolecularSystem,
                    mu_nuclear: float | None = None) -> KappaExpansion:
    """Harmonic and rotational scales at the curve minimum."""
    if curve.r_min is None:
        raise ValidationError("curve has no located interior minimum")
    if system is None and mu_nuclear is None:
        raise ValidationError("need either a system or an explicit reduced mass")
    if mu_nuclear is None:
        masses = system.nuclear_masses
        if len(masses) != 2:
            raise ValidationError("expansion needs a diatomic system")
        mu_nuclear = 1.0 / (1.0 / masses[0] + 1.0 / masses[1])

    kappa_value = kappa(system) if system is not None else mu_nuclear ** -0.25

    spline = curve.spline(0)
    h = float(np.diff(curve.r_grid).min())
    x = curve.r_min + h * np.arange(-2, 3)
    y = spline(x)
    k = float((-y[0] + 16 * y[1] - 30 * y[2] + 16 * y[3] - y[4]) / (12 * h * h))
    if k <= 0:
        raise ValidationError("curvature not positive: not a minimum")

    omega = float(np.sqrt(k / mu_nuclear))
    B = float(1.0 / (2.0 * mu_nuclear * curve.r_min**2))
    levels = solve_radial(curve, mu_nuclear, 0, 2)
    actual = levels[1].energy - levels[0].energy if len(levels) > 1 else np.nan
    return KappaExpansion(
        V0=curve.V0,
        curvature=k,
        omega=omega,
        rotational_constant=B,
        kappa=kappa_value,
        predicted_spacing=omega,
        actual_spacing=float(actual),
    )
