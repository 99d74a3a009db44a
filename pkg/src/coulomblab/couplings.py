"""Coupled nuclear channels over several electronic states.

The electronic solver provides states at frozen separations; here their
parametric r-dependence is differentiated numerically to get the derivative
couplings, and the resulting coupled radial system is assembled in an
explicitly symmetric discretization.  Suppressing the couplings and keeping
one channel reproduces the single-curve solver to solver precision, which the
tests pin down.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eig_banded
from scipy.sparse import diags_array
from scipy.sparse.linalg import eigsh

from .errors import ConvergenceError, ValidationError
from .gaussians import overlap_matrix, perpendicular_l2_matrix
from .radial import DEFAULT_POINTS, VibRotLevel, solve_radial
from .systems import INFINITE, MolecularSystem
from .twocenter import PotentialCurve, solve_two_center

ALIGNMENT_FLOOR = 0.9


@dataclass(frozen=True)
class CouplingMatrix:
    """First- and second-derivative couplings between electronic states.

    F[i, n, m] holds <phi_n | d/dr phi_m> at r_grid[i]; G holds the second
    derivative analogue and K the gradient overlap <phi_n' | phi_m'>, which
    is symmetric by construction and obeys K = F' - G.  K rather than G - F'
    feeds the coupled solve: differentiating a spline of F breaks down where
    an avoided crossing puts a kink in F, while K comes straight from the
    displaced-geometry overlaps.  ``angular`` holds the diagonal expectation
    <phi_n|L_perp^2|phi_n>, the piece the state picks up by following the
    axis direction; it enters the adiabatic correction as
    angular/(2 mu r^2).
    """

    r_grid: np.ndarray
    F: np.ndarray
    G: np.ndarray
    K: np.ndarray
    angular: np.ndarray
    labels: tuple

    @property
    def n_states(self) -> int:
        return self.F.shape[1]

    def zeroed(self) -> "CouplingMatrix":
        return CouplingMatrix(
            self.r_grid,
            np.zeros_like(self.F),
            np.zeros_like(self.G),
            np.zeros_like(self.K),
            np.zeros_like(self.angular),
            self.labels,
        )

    def f_spline(self, n: int, m: int) -> CubicSpline:
        return CubicSpline(self.r_grid, self.F[:, n, m])

    def g_spline(self, n: int, m: int) -> CubicSpline:
        return CubicSpline(self.r_grid, self.G[:, n, m])

    def k_spline(self, n: int, m: int) -> CubicSpline:
        return CubicSpline(self.r_grid, self.K[:, n, m])


@dataclass(frozen=True)
class ChannelSolution:
    energies: list
    amplitudes: np.ndarray
    channel_weights: np.ndarray
    r_grid: np.ndarray
    channels: tuple

    @property
    def channel_count(self) -> int:
        return len(self.channels)


def _solve_states(system: MolecularSystem, r: float, n_states: int, options):
    Z1, Z2 = system.nuclear_charges
    return solve_two_center(r, Z1, Z2, n_states=n_states, **options)


def _coefficient_matrix(states) -> np.ndarray:
    return np.column_stack([s.coefficients for s in states])


def _aligned_states(base_states, other_states):
    """Match other-geometry states to the base set and lock their phases.

    States are paired by largest overlap magnitude and sign-fixed, so a
    phase flip or an energy-order swap between neighboring geometries cannot
    corrupt the differences.  Returns the gram <phi_n(base)|phi_m(other)>
    and the aligned coefficient matrix of the other set.
    """
    S_cross = overlap_matrix(base_states[0].basis, other_states[0].basis)
    C_other = _coefficient_matrix(other_states)
    T = _coefficient_matrix(base_states).T @ S_cross @ C_other
    n = T.shape[0]
    order, signs, taken = [], [], set()
    for row in range(n):
        best = max(
            (m for m in range(n) if m not in taken), key=lambda m: abs(T[row, m])
        )
        if abs(T[row, best]) < ALIGNMENT_FLOOR:
            r0 = base_states[0].internuclear_distance
            r1 = other_states[0].internuclear_distance
            raise ConvergenceError(
                f"state {row} overlap {abs(T[row, best]):.3f} across dr = "
                f"{r1 - r0:+.1e} at r = {r0}; refine the step or basis"
            )
        taken.add(best)
        order.append(best)
        signs.append(1.0 if T[row, best] > 0 else -1.0)
    signs = np.asarray(signs)
    return T[:, order] * signs[None, :], C_other[:, order] * signs[None, :]


def coupling_matrix(
    system: MolecularSystem,
    r_grid,
    n_states: int = 2,
    step: float = 1e-3,
    **basis_options,
) -> CouplingMatrix:
    """Derivative couplings by Richardson-extrapolated central differences."""
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or len(r_grid) < 4 or (np.diff(r_grid) <= 0).any():
        raise ValidationError("need an ascending grid with at least four points")
    if step <= 0 or step >= np.diff(r_grid).min():
        raise ValidationError("difference step must be positive and below the grid spacing")

    eye = np.eye(n_states)
    F = np.empty((len(r_grid), n_states, n_states))
    G = np.empty_like(F)
    K = np.empty_like(F)
    angular = np.empty((len(r_grid), n_states))
    labels = None
    for i, r in enumerate(r_grid):
        base = _solve_states(system, r, n_states, basis_options)
        if labels is None:
            labels = tuple(s.symmetry for s in base)
        L2 = perpendicular_l2_matrix(base[0].basis)
        angular[i] = [s.coefficients @ L2 @ s.coefficients for s in base]
        grams, aligned, bases = {}, {}, {}
        for s in (step, -step, step / 2, -step / 2):
            others = _solve_states(system, r + s, n_states, basis_options)
            grams[s], aligned[s] = _aligned_states(base, others)
            bases[s] = others[0].basis
        d_h = (grams[step] - grams[-step]) / (2 * step)
        d_h2 = (grams[step / 2] - grams[-step / 2]) / step
        g_h = (grams[step] + grams[-step] - 2 * eye) / step**2
        g_h2 = (grams[step / 2] + grams[-step / 2] - 2 * eye) / (step / 2) ** 2
        F[i] = (4.0 * d_h2 - d_h) / 3.0
        G[i] = (4.0 * g_h2 - g_h) / 3.0

        def gradient_overlap(s):
            T = (
                aligned[s].T
                @ overlap_matrix(bases[s], bases[-s])
                @ aligned[-s]
            )
            return (2.0 * eye - T - T.T) / (4.0 * s * s)

        K[i] = (4.0 * gradient_overlap(step / 2) - gradient_overlap(step)) / 3.0
    return CouplingMatrix(r_grid, F, G, K, angular, labels)


def _local_blocks(couplings: CouplingMatrix, channels, r) -> np.ndarray:
    """Gradient-overlap blocks K splined onto the radial grid.

    The Hermitian rearrangement of -(2 F d/dr + G)/(2 mu) is
    -(F d/dr + d/dr F)/(2 mu) + K/(2 mu), so K enters as a symmetric local
    potential; splining K directly keeps it symmetric even where an avoided
    crossing makes F too kinked to differentiate.
    """
    k = len(channels)
    local = np.empty((len(r), k, k))
    for a, n in enumerate(channels):
        for b, m in enumerate(channels):
            local[:, a, b] = couplings.k_spline(n, m)(r)
    return 0.5 * (local + local.transpose(0, 2, 1))


def _coupled_bands(r, curve, couplings, channels, mu):
    """Symmetric banded matrix of the coupled system, grid-major ordering."""
    k = len(channels)
    n = len(r) - 2
    h = r[1] - r[0]
    ri = r[1:-1]
    kin = 1.0 / (2.0 * mu * h * h)

    E = np.stack([curve.spline(c)(ri) for c in channels], axis=1)
    local = _local_blocks(couplings, channels, ri) if couplings is not None else None
    Fc = None
    if couplings is not None:
        Fc = np.stack(
            [
                np.stack([couplings.f_spline(n_, m_)(ri) for m_ in channels], axis=1)
                for n_ in channels
            ],
            axis=1,
        )
        Fc = 0.5 * (Fc - Fc.transpose(0, 2, 1))

    bands = np.zeros((2 * k, n * k))
    idx = np.arange(n) * k
    for a in range(k):
        bands[0, idx + a] = 2.0 * kin + E[:, a]
        if local is not None:
            bands[0, idx + a] += local[:, a, a] / (2.0 * mu)
            for b in range(a + 1, k):
                bands[b - a, idx + a] = local[:, a, b] / (2.0 * mu)
        for b in range(k):
            d = k + b - a
            hop = np.full(n - 1, -kin if a == b else 0.0)
            if Fc is not None:
                # stored entry couples (i+1, b) <- (i, a), so its first
                # derivative weight carries F_ba = -F_ab
                hop -= (Fc[:-1, b, a] + Fc[1:, b, a]) / (4.0 * mu * h)
            bands[d, idx[:-1] + a] = hop
    return bands


def _coupled_eigen(r, curve, couplings, channels, mu, n_levels):
    bands = _coupled_bands(r, curve, couplings, channels, mu)
    m = bands.shape[1]
    if len(channels) == 1:
        top = min(n_levels, m) - 1
        w, v = eig_banded(bands, lower=True, select="i", select_range=(0, top))
    else:
        # the banded direct solver slows to a crawl on wider bands at this
        # size; shift-invert from below the lowest curve value gets the same
        # eigenpairs in milliseconds, and the fixed start vector keeps
        # repeated runs identical
        mats, offsets = [bands[0]], [0]
        for d in range(1, bands.shape[0]):
            mats += [bands[d, : m - d]] * 2
            offsets += [-d, d]
        A = diags_array(mats, offsets=offsets, format="csc")
        sigma = min(float(curve.spline(c)(r).min()) for c in channels) - 0.5
        v0 = np.full(m, 1.0 / np.sqrt(m))
        w, v = eigsh(A, k=min(n_levels, m - 1), sigma=sigma, which="LA", v0=v0)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    for j in range(v.shape[1]):
        peak = np.argmax(np.abs(v[:, j]))
        if v[peak, j] < 0:
            v[:, j] = -v[:, j]
    return w, v


def solve_coupled(
    curve: PotentialCurve,
    couplings: CouplingMatrix | None,
    mu_nuclear: float,
    channels=(0,),
    n_levels: int = 1,
    n_points: int = DEFAULT_POINTS,
) -> ChannelSolution:
    """Lowest levels of the coupled radial system on the given channels.

    ``channels`` picks electronic states by index; ``couplings=None``
    suppresses every coupling term, which reduces each channel to bare
    nuclear motion on its own curve.
    """
    if mu_nuclear <= 0 or not np.isfinite(mu_nuclear):
        raise ValidationError("reduced mass must be positive and finite")
    channels = tuple(int(c) for c in channels)
    if len(channels) == 0 or len(set(channels)) != len(channels):
        raise ValidationError("channel list must be nonempty and unique")
    if max(channels) >= curve.energies.shape[0]:
        raise ValidationError("channel index beyond available curve states")
    if couplings is not None:
        if max(channels) >= couplings.n_states:
            raise ValidationError("channel index beyond available couplings")
        if (
            couplings.r_grid[0] > curve.r_grid[0] + 1e-12
            or couplings.r_grid[-1] < curve.r_grid[-1] - 1e-12
        ):
            raise ValidationError("couplings do not cover the curve domain")
        # a sharp curve crossing inside the window can leave a localized
        # antisymmetry defect in F, which the assembly symmetrizes away;
        # anything at the 1e-3 level means misaligned states, not noise
        sub = couplings.F[:, channels, :][:, :, channels]
        asym = np.abs(sub + sub.transpose(0, 2, 1)).max()
        if asym > 1e-3 * max(1.0, np.abs(sub).max()):
            raise ValidationError(
                f"derivative couplings asymmetric by {asym:.2e}; "
                "refine the difference step or the basis"
            )

    k = len(channels)
    r_coarse = np.linspace(curve.r_grid[0], curve.r_grid[-1], n_points)
    r_fine = np.linspace(curve.r_grid[0], curve.r_grid[-1], 2 * n_points - 1)
    w_coarse, _ = _coupled_eigen(r_coarse, curve, couplings, channels, mu_nuclear, n_levels)
    w_fine, vecs = _coupled_eigen(r_fine, curve, couplings, channels, mu_nuclear, n_levels)
    w = (4.0 * w_fine - w_coarse) / 3.0

    threshold = min(curve.spline(c)(curve.r_grid[-1]) for c in channels)
    h = r_fine[1] - r_fine[0]
    energies, amps, weights = [], [], []
    for j, energy in enumerate(w):
        if energy >= threshold - 1e-9:
            break
        psi = vecs[:, j].reshape(-1, k).T / np.sqrt(h)
        energies.append(float(energy))
        amps.append(psi)
        weights.append(h * (psi**2).sum(axis=1))
    if not energies:
        warnings.warn("no bound level below the lowest channel threshold")
    return ChannelSolution(
        energies=energies,
        amplitudes=np.array(amps),
        channel_weights=np.array(weights),
        r_grid=r_fine[1:-1],
        channels=channels,
    )


def adiabatic_correction(
    couplings: CouplingMatrix,
    mu_nuclear: float,
    state: int = 0,
    include_angular: bool = True,
):
    """Diagonal correction on the coupling grid, always nonnegative.

    The radial piece is K_nn/(2 mu) = <d phi/dr|d phi/dr>/(2 mu); with
    ``include_angular`` the in-plane rotation generators add
    <L_perp^2>/(2 mu r^2), which completes the diagonal expectation of the
    nuclear kinetic operator over the electronic state.
    """
    corr = couplings.K[:, state, state] / (2.0 * mu_nuclear)
    if include_angular:
        corr = corr + couplings.angular[:, state] / (
            2.0 * mu_nuclear * couplings.r_grid**2
        )
    return corr


def adiabatic_solve(
    curve: PotentialCurve,
    couplings: CouplingMatrix | None,
    mu_nuclear: float,
    n_levels: int = 1,
    state: int = 0,
    correction_mass: float | None = None,
    include_angular: bool = True,
    n_points: int = DEFAULT_POINTS,
) -> list[VibRotLevel]:
    """Single-channel levels with the diagonal coupling folded into the curve.

    ``correction_mass`` sets the mass in the 1/(2 mu) prefactor of the
    correction (defaults to the dynamical mass); passing INFINITE turns the
    correction off, recovering the bare fixed-nuclei levels.  Feeding the
    electron-mass-rescaled curve of a homonuclear one-electron system with
    the full correction makes the result a product-state upper bound on the
    true ground energy.
    """
    if correction_mass is None:
        correction_mass = mu_nuclear
    base = curve.energies[state]
    if couplings is None or correction_mass == INFINITE:
        corrected = base
    else:
        corr = CubicSpline(
            couplings.r_grid,
            adiabatic_correction(couplings, correction_mass, state, include_angular),
        )(curve.r_grid)
        if corr.min() < -1e-10:
            raise ValidationError("diagonal correction came out negative")
        corrected = base + corr
    shifted = PotentialCurve.from_samples(curve.r_grid, corrected)
    return solve_radial(shifted, mu_nuclear, 0, n_levels, n_points)
