"""Symbolic Hamiltonian descriptors and coordinate-frame transformations.

A descriptor is plain data: a quadratic kinetic form over 3D coordinate
vectors, -1/2 sum_ij K_ij grad_i . grad_j, plus Coulomb pair terms whose
interaction points are linear combinations of the coordinates with optional
constant offsets.  Clamping a coordinate, separating the center of mass, and
taking infinite-mass limits are all exact operations on this data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .systems import MolecularSystem

STATUS_OK = "OK"
STATUS_RISK = "NON_SELF_ADJOINT_RISK"


@dataclass(frozen=True)
class CoulombPoint:
    """A point wT.x + offset, with x the stacked 3D coordinate vectors."""

    coefficients: tuple[float, ...]
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "offset", tuple(float(c) for c in self.offset))

    def is_constant(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coefficients)

    def close_to(self, other: "CoulombPoint", tol: float = 1e-12) -> bool:
        return (
            len(self.coefficients) == len(other.coefficients)
            and max(
                abs(a - b) for a, b in zip(self.coefficients, other.coefficients)
            ) <= tol
            and max(abs(a - b) for a, b in zip(self.offset, other.offset)) <= tol
        )


@dataclass(frozen=True)
class CoulombTerm:
    prefactor: float
    point_a: CoulombPoint
    point_b: CoulombPoint

    @property
    def difference(self) -> np.ndarray:
        """Coefficient row of point_a - point_b (the separation vector)."""
        return np.asarray(self.point_a.coefficients) - np.asarray(
            self.point_b.coefficients
        )

    @property
    def offset_difference(self) -> np.ndarray:
        return np.asarray(self.point_a.offset) - np.asarray(self.point_b.offset)


@dataclass(frozen=True)
class OperatorDescriptor:
    coordinate_count: int
    kinetic_form: tuple  # row-major tuple of tuples, n x n
    coulomb_terms: tuple[CoulombTerm, ...] = ()
    constant_shift: float = 0.0
    status: str = STATUS_OK

    def __post_init__(self):
        K = self.kinetic_matrix
        n = self.coordinate_count
        if K.shape != (n, n):
            raise ValidationError("kinetic form shape does not match coordinate count")
        if n and not np.allclose(K, K.T, atol=1e-14):
            raise ValidationError("kinetic form must be symmetric")
        if n and np.linalg.eigvalsh(K).min() < -1e-12:
            raise ValidationError("kinetic form must be positive semidefinite")
        for t in self.coulomb_terms:
            if len(t.point_a.coefficients) != n or len(t.point_b.coefficients) != n:
                raise ValidationError("Coulomb point row length mismatch")
            if t.point_a.close_to(t.point_b):
                raise ValidationError("Coulomb term references coincident points")

    @property
    def kinetic_matrix(self) -> np.ndarray:
        return np.asarray(self.kinetic_form, dtype=float).reshape(
            self.coordinate_count, self.coordinate_count
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "coordinate_count": self.coordinate_count,
                "kinetic_form": [list(row) for row in self.kinetic_form],
                "coulomb_terms": [
                    {
                        "prefactor": t.prefactor,
                        "a": {"coefficients": list(t.point_a.coefficients),
                              "offset": list(t.point_a.offset)},
                        "b": {"coefficients": list(t.point_b.coefficients),
                              "offset": list(t.point_b.offset)},
                    }
                    for t in self.coulomb_terms
                ],
                "constant_shift": self.constant_shift,
                "status": self.status,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "OperatorDescriptor":
        d = json.loads(text)
        terms = tuple(
            CoulombTerm(
                t["prefactor"],
                CoulombPoint(tuple(t["a"]["coefficients"]), tuple(t["a"]["offset"])),
                CoulombPoint(tuple(t["b"]["coefficients"]), tuple(t["b"]["offset"])),
            )
            for t in d["coulomb_terms"]
        )
        return OperatorDescriptor(
            d["coordinate_count"],
            tuple(tuple(row) for row in d["kinetic_form"]),
            terms,
            d["constant_shift"],
            d["status"],
        )


@dataclass(frozen=True)
class InternalFrameMap:
    transform: tuple  # (n-1) x n rows: internal coordinates from lab coordinates
    inverse_mass_matrix: tuple  # (A-1) x (A-1) nuclear block
    frame: str = "CENTER_OF_NUCLEAR_MASS"

    @property
    def transform_matrix(self) -> np.ndarray:
        return np.asarray(self.transform, dtype=float)

    @property
    def nuclear_inverse_mass(self) -> np.ndarray:
        return np.asarray(self.inverse_mass_matrix, dtype=float)


def _form(matrix) -> tuple:
    m = np.asarray(matrix, dtype=float)
    return tuple(tuple(float(x) for x in row) for row in m)


def _unit_point(n: int, i: int) -> CoulombPoint:
    coeffs = [0.0] * n
    coeffs[i] = 1.0
    return CoulombPoint(tuple(coeffs))


def lab_hamiltonian(system: MolecularSystem) -> OperatorDescriptor:
    """Laboratory-frame Coulomb Hamiltonian: nuclei first, then electrons.

    Infinite masses are rejected here; clamping in the lab frame is exactly
    the step this package treats as illegitimate.  Transform first, then take
    limits.
    """
    masses = list(system.nuclear_masses) + [1.0] * system.electron_count
    if any(not math.isfinite(m) for m in masses):
        raise ValidationError(
            "infinite mass in lab frame; separate the center of mass first"
        )
    charges = list(system.nuclear_charges) + [-1.0] * system.electron_count
    n = len(masses)
    K = np.diag([1.0 / m for m in masses])
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            terms.append(
                CoulombTerm(charges[i] * charges[j], _unit_point(n, i), _unit_point(n, j))
            )
    return OperatorDescriptor(n, _form(K), tuple(terms))


def _nuclear_rows(system: MolecularSystem, coordinate_choice: str) -> np.ndarray:
    """Rows of the nuclear internal coordinates over the A nuclear positions."""
    A = system.nucleus_count
    masses = system.nuclear_masses
    rows = np.zeros((A - 1, A))
    if coordinate_choice == "differences":
        for i in range(A - 1):
            rows[i, 0] = -1.0
            rows[i, i + 1] = 1.0
    elif coordinate_choice == "jacobi":
        if any(not math.isfinite(m) for m in masses):
            raise ValidationError("Jacobi coordinates need finite masses")
        for i in range(A - 1):
            head = sum(masses[: i + 1])
            rows[i, : i + 1] = -np.asarray(masses[: i + 1]) / head
            rows[i, i + 1] = 1.0
    else:
        raise ValidationError(f"unknown coordinate choice {coordinate_choice!r}")
    return rows


def inverse_mass_matrix(system: MolecularSystem, coordinate_choice: str = "differences"):
    """Nuclear-block inverse mass matrix for the chosen internal coordinates."""
    if system.nucleus_count < 2:
        raise ValidationError("need at least two nuclei")
    rows = _nuclear_rows(system, coordinate_choice)
    inv_m = np.diag([1.0 / m for m in system.nuclear_masses])
    return rows @ inv_m @ rows.T


def separate_center_of_mass(descriptor: OperatorDescriptor, system: MolecularSystem):
    """Split a lab-frame descriptor into center-of-mass and internal parts.

    Internal coordinates: nuclear differences to the first nucleus, then each
    electron relative to the center of nuclear mass.  The electronic kinetic
    block comes out diagonal 1/mu plus a uniform cross term 1/M; the nuclear
    and electronic blocks do not mix.  Returns (T_CM, internal, frame map).
    """
    A, N = system.nucleus_count, system.electron_count
    n = A + N
    if descriptor.coordinate_count != n:
        raise ValidationError("descriptor does not match system particle count")
    masses = np.array(list(system.nuclear_masses) + [1.0] * N)
    M = system.total_nuclear_mass
    total = masses.sum()

    V = np.zeros((n, n))
    V[: A - 1, :A] = _nuclear_rows(system, "differences")
    for j in range(N):
        V[A - 1 + j, :A] = -np.asarray(system.nuclear_masses) / M
        V[A - 1 + j, A + j] = 1.0
    V[n - 1, :] = masses / total  # center of mass, last row

    if abs(np.linalg.det(V)) < 1e-12:
        raise ValidationError("rank-deficient coordinate transform")

    K_new = V @ descriptor.kinetic_matrix @ V.T
    if n > 1:
        cross = K_new[: n - 1, n - 1]
        if np.abs(cross).max() > 1e-12 * max(1.0, np.abs(K_new).max()):
            raise ValidationError("center of mass failed to decouple")

    W = np.linalg.inv(V)  # x_i = sum_j W[i, j] y_j
    terms = []
    for t in descriptor.coulomb_terms:
        rows = []
        for point in (t.point_a, t.point_b):
            row = np.asarray(point.coefficients) @ W
            rows.append(row)
        # The two points always enter via their difference, so the common
        # center-of-mass component can be dropped from both.
        if abs(rows[0][n - 1] - rows[1][n - 1]) > 1e-12:
            raise ValidationError("Coulomb pair not translation invariant")
        terms.append(
            CoulombTerm(
                t.prefactor,
                CoulombPoint(tuple(rows[0][: n - 1]), t.point_a.offset),
                CoulombPoint(tuple(rows[1][: n - 1]), t.point_b.offset),
            )
        )

    t_cm = OperatorDescriptor(1, _form([[1.0 / total]]))
    internal = OperatorDescriptor(n - 1, _form(K_new[: n - 1, : n - 1]), tuple(terms))
    frame_map = InternalFrameMap(
        _form(V[: n - 1, :]),
        _form(_nuclear_rows(system, "differences")
              @ np.diag(1.0 / np.asarray(system.nuclear_masses))
              @ _nuclear_rows(system, "differences").T) if A >= 2 else _form(np.zeros((0, 0))),
    )
    return t_cm, internal, frame_map


def clamp_coordinate(descriptor: OperatorDescriptor, index: int, value) -> OperatorDescriptor:
    """Fix one 3D coordinate to a constant vector and drop its kinetic term.

    Coulomb points gain the clamped contribution as a constant offset; terms
    between two fully clamped points collapse into the constant energy shift.
    """
    n = descriptor.coordinate_count
    if not 0 <= index < n:
        raise ValidationError("clamp index out of range")
    value = np.asarray(value, dtype=float)
    if value.shape != (3,):
        raise ValidationError("clamp value must be a 3-vector")

    keep = [i for i in range(n) if i != index]
    K = descriptor.kinetic_matrix[np.ix_(keep, keep)]

    shift = descriptor.constant_shift
    terms = []
    for t in descriptor.coulomb_terms:
        points = []
        for point in (t.point_a, t.point_b):
            coeffs = np.asarray(point.coefficients)
            offset = np.asarray(point.offset) + coeffs[index] * value
            points.append(CoulombPoint(tuple(coeffs[keep]), tuple(offset)))
        # a term is constant when the two points differ only by a fixed vector
        diff_row = np.asarray(points[0].coefficients) - np.asarray(points[1].coefficients)
        if np.abs(diff_row).max(initial=0.0) <= 1e-14:
            separation = np.linalg.norm(
                np.asarray(points[0].offset) - np.asarray(points[1].offset)
            )
            if separation == 0.0:
                raise ValidationError("clamped Coulomb points coincide")
            shift += t.prefactor / separation
        else:
            terms.append(CoulombTerm(t.prefactor, points[0], points[1]))
    return OperatorDescriptor(
        len(keep), _form(K), tuple(terms), shift, descriptor.status
    )
