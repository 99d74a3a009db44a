"""Clamped-nuclei electronic structure for one-electron two-center systems.

The nuclei sit at -r/2 and +r/2 on the z axis and enter only as parameters.
Discrete electronic energies as functions of r build the potential curves
that the nuclear-motion and probe modules consume.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, ValidationError
from .gaussians import (
    AxialBasis,
    attraction_matrix,
    even_tempered_axial,
    kinetic_matrix,
    overlap_matrix,
)
from .systems import MolecularSystem

GERADE = "gerade"
UNGERADE = "ungerade"
NO_SYMMETRY = "none"

# Canonical-orthogonalization cutoff for the even-tempered set.
OVERLAP_CUTOFF = 1e-10

# Basis defaults.  12 exponents at ratio 2.2 from 0.02 leaves a 2e-5 error at
# the equilibrium geometry; 16 from 0.01 reaches 3e-6 at negligible cost.
N_EXPONENTS = 16
RATIO = 2.2
SMALLEST_EXPONENT = 0.01


@dataclass(frozen=True)
class ElectronicState:
    internuclear_distance: float
    state_index: int
    energy_electronic: float
    energy_total: float
    symmetry: str
    coefficients: np.ndarray
    basis: AxialBasis

    @property
    def parity_sign(self) -> int:
        if self.symmetry == GERADE:
            return 1
        if self.symmetry == UNGERADE:
            return -1
        return 0


@dataclass(frozen=True)
class PotentialCurve:
    """Per-state total energies on a radial grid, with located minimum."""

    r_grid: np.ndarray
    energies: np.ndarray  # shape (n_states, n_points), total energies
    V0: float
    r_min: float | None
    threshold: np.ndarray | None
    labels: tuple[str, ...]

    @property
    def n_states(self) -> int:
        return self.energies.shape[0]

    def spline(self, state: int = 0) -> CubicSpline:
        return CubicSpline(self.r_grid, self.energies[state])

    def dissociation_limit(self, state: int = 0) -> float:
        return float(self.energies[state, -1])

    @staticmethod
    def from_samples(r_grid, values, threshold=None, labels=("test",)) -> "PotentialCurve":
        """Wrap sampled values (a single synthetic curve) as a PotentialCurve."""
        r_grid = np.asarray(r_grid, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        V0, r_min = _refine_minimum(r_grid, values[0])
        return PotentialCurve(r_grid, values, V0, r_min, threshold, labels)


def _even_basis(r: float, n_exp: int, ratio: float, smallest: float) -> AxialBasis:
    return even_tempered_axial([-r / 2.0, r / 2.0, 0.0], n_exp, ratio, smallest)


def _parity_matrix(basis: AxialBasis) -> np.ndarray:
    """Basis representation of z -> -z: centers swap sign, p_z flips sign."""
    n = len(basis)
    P = np.zeros((n, n))
    key = {
        (round(c, 12), a, l): i
        for i, (c, a, l) in enumerate(
            zip(basis.centers, basis.exponents, basis.angular)
        )
    }
    for i, (c, a, l) in enumerate(zip(basis.centers, basis.exponents, basis.angular)):
        j = key[(round(-c, 12), a, l)]
        P[j, i] = -1.0 if l == 1 else 1.0
    return P


def solve_two_center(
    r: float,
    Z1: float = 1.0,
    Z2: float = 1.0,
    effective_electron_mass: float = 1.0,
    n_states: int = 4,
    n_exp: int = N_EXPONENTS,
    ratio: float = RATIO,
    smallest: float = SMALLEST_EXPONENT,
) -> list[ElectronicState]:
    """Lowest discrete states of one electron between two fixed charges."""
    if r <= 0:
        raise ValidationError("internuclear distance must be positive")
    if n_states < 1:
        raise ValidationError("need at least one state")
    if effective_electron_mass <= 0:
        raise ValidationError("electron mass must be positive")

    basis = _even_basis(r, n_exp, ratio, smallest)
    S = overlap_matrix(basis, basis)
    H = kinetic_matrix(basis, basis, 1.0 / effective_electron_mass)
    H = H + attraction_matrix(basis, basis, [(Z1, -r / 2.0), (Z2, r / 2.0)])

    w, U = np.linalg.eigh(S)
    keep = w > OVERLAP_CUTOFF * w[-1]
    if keep.sum() < n_states:
        raise ConvergenceError(
            f"overlap numerically singular: {int(keep.sum())} of {len(w)} functions "
            f"survive the cutoff, condition {w[-1] / max(w[0], 1e-300):.2e}"
        )
    X = U[:, keep] / np.sqrt(w[keep])
    e, v = np.linalg.eigh(X.T @ H @ X)
    coeffs = X @ v

    homonuclear = Z1 == Z2
    parity = _parity_matrix(basis) if homonuclear else None

    states = []
    repulsion = Z1 * Z2 / r
    for k in range(min(n_states, len(e))):
        if e[k] >= 0.0:
            warnings.warn(
                f"only {k} discrete states below threshold at r = {r}; truncating"
            )
            break
        c = coeffs[:, k]
        if c[np.argmax(np.abs(c))] < 0:
            c = -c
        symmetry = NO_SYMMETRY
        if homonuclear:
            expectation = float(c @ S @ (parity @ c))
            if expectation > 0.9:
                symmetry = GERADE
            elif expectation < -0.9:
                symmetry = UNGERADE
        states.append(
            ElectronicState(
                internuclear_distance=r,
                state_index=k,
                energy_electronic=float(e[k]),
                energy_total=float(e[k]) + repulsion,
                symmetry=symmetry,
                coefficients=c,
                basis=basis,
            )
        )
    states.sort(key=lambda s: (s.energy_total, s.symmetry))
    return states


def _refine_minimum(r_grid, values):
    """Grid minimum refined by a local parabola; None location if on the edge."""
    i = int(np.argmin(values))
    if i == 0 or i == len(values) - 1:
        return float(values[i]), None
    x0, x1, x2 = r_grid[i - 1 : i + 2]
    y0, y1, y2 = values[i - 1 : i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a <= 0:
        return float(values[i]), None
    r_min = -b / (2 * a)
    c = y1 - a * x1**2 - b * x1
    return float(a * r_min**2 + b * r_min + c), float(r_min)


def potential_curve(
    system: MolecularSystem, r_grid, n_states: int = 2, **basis_options
) -> PotentialCurve:
    """Scan solve_two_center over a grid of separations."""
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or len(r_grid) < 3 or (np.diff(r_grid) <= 0).any() or r_grid[0] <= 0:
        raise ValidationError("grid must be ascending and positive")
    if system.nucleus_count != 2 or system.electron_count != 1:
        raise ValidationError("potential curves are for one-electron diatomics")
    Z1, Z2 = system.nuclear_charges

    energies = np.full((n_states, len(r_grid)), np.nan)
    labels = [NO_SYMMETRY] * n_states
    for j, r in enumerate(r_grid):
        states = solve_two_center(r, Z1, Z2, 1.0, n_states, **basis_options)
        for s in states:
            energies[s.state_index, j] = s.energy_total
            labels[s.state_index] = s.symmetry
    if np.isnan(energies).any():
        raise ConvergenceError("missing discrete states on part of the grid")

    V0, r_min = _refine_minimum(r_grid, energies[0])
    threshold = Z1 * Z2 / r_grid
    return PotentialCurve(r_grid, energies, V0, r_min, threshold, tuple(labels))


def finite_mass_rescale(obj, nuclear_masses):
    """Exact one-electron finite-nuclear-mass map E(mu; r) = mu E(1; mu r).

    mu = (1 + 1/M)^-1 with M the total nuclear mass.  Grids map as r -> r/mu,
    so curve values are rescaled without any interpolation.
    """
    M = float(np.sum(nuclear_masses))
    mu = 1.0 / (1.0 + 1.0 / M)
    if isinstance(obj, ElectronicState):
        return replace(
            obj,
            internuclear_distance=obj.internuclear_distance / mu,
            energy_electronic=mu * obj.energy_electronic,
            energy_total=mu * obj.energy_total,
        )
    if isinstance(obj, PotentialCurve):
        r_new = obj.r_grid / mu
        threshold = None if obj.threshold is None else mu * obj.threshold
        return PotentialCurve(
            r_grid=r_new,
            energies=mu * obj.energies,
            V0=mu * obj.V0,
            r_min=None if obj.r_min is None else obj.r_min / mu,
            threshold=threshold,
            labels=obj.labels,
        )
    raise ValidationError("expected an ElectronicState or PotentialCurve")
