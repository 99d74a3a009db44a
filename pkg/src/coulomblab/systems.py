"""Particle censuses and molecular systems in Hartree atomic units.

Masses are in electron masses, charges in units of e (electrons are -1).
An infinite mass is a legal sentinel value; it is only meaningful in limits
taken after separating the center of mass, and the lab-frame Hamiltonian
builder rejects it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import ValidationError

# Distinguished sentinel for an infinitely heavy particle.
INFINITE = math.inf

# CODATA proton mass in electron masses.
PROTON_MASS = 1836.15267


@dataclass(frozen=True)
class Particle:
    label: str
    mass: float
    charge: float

    def __post_init__(self):
        if not (self.mass > 0.0):
            raise ValidationError(f"non-positive mass for particle {self.label!r}")
        if not math.isfinite(self.charge):
            raise ValidationError(f"non-finite charge for particle {self.label!r}")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.mass)


@dataclass(frozen=True)
class MolecularSystem:
    """A nuclei + electrons: the inputs every Hamiltonian here is built from."""

    nuclei: tuple[Particle, ...]
    electron_count: int
    reference_mass: float = field(default=0.0)

    def __post_init__(self):
        if len(self.nuclei) == 0:
            raise ValidationError("zero nuclei")
        for p in self.nuclei:
            if p.charge <= 0:
                raise ValidationError(f"nuclear charge must be > 0, got {p.charge}")
        if self.electron_count < 0:
            raise ValidationError("negative electron count")
        if self.reference_mass == 0.0:
            object.__setattr__(self, "reference_mass", _mean_finite_mass(self.nuclei))
        if not (self.reference_mass > 0.0):
            raise ValidationError("reference mass must be positive")

    @property
    def nucleus_count(self) -> int:
        return len(self.nuclei)

    @property
    def total_nuclear_mass(self) -> float:
        return sum(p.mass for p in self.nuclei)

    @property
    def nuclear_masses(self) -> tuple[float, ...]:
        return tuple(p.mass for p in self.nuclei)

    @property
    def nuclear_charges(self) -> tuple[float, ...]:
        return tuple(p.charge for p in self.nuclei)

    @property
    def homonuclear(self) -> bool:
        if len(self.nuclei) != 2:
            return False
        a, b = self.nuclei
        return a.mass == b.mass and a.charge == b.charge

    def with_scaled_nuclear_masses(self, factor: float, which=None) -> "MolecularSystem":
        """A copy with nuclear masses multiplied by ``factor``.

        ``which`` selects nucleus indices to scale (default: all).  A factor
        of INFINITE produces sentinel masses for the selected nuclei.
        """
        if which is None:
            which = range(len(self.nuclei))
        which = set(which)
        nuclei = tuple(
            Particle(p.label, p.mass * factor if i in which else p.mass, p.charge)
            for i, p in enumerate(self.nuclei)
        )
        return MolecularSystem(nuclei, self.electron_count)


def _mean_finite_mass(nuclei) -> float:
    finite = [p.mass for p in nuclei if math.isfinite(p.mass)]
    if not finite:
        return INFINITE
    return sum(finite) / len(finite)


def build_system(spec, electron_count: int) -> MolecularSystem:
    """Validate a list of ``(mass, charge)`` pairs into a MolecularSystem."""
    nuclei = tuple(
        Particle(f"n{i + 1}", float(m), float(q)) for i, (m, q) in enumerate(spec)
    )
    return MolecularSystem(nuclei, int(electron_count))


def kappa(system: MolecularSystem) -> float:
    """Adiabatic expansion parameter: fourth root of the inverse reference mass.

    Returns exactly 0 (with a warning) when the reference mass is infinite,
    where the expansion degenerates.
    """
    m0 = system.reference_mass
    if not math.isfinite(m0):
        warnings.warn("reference mass infinite; expansion parameter degenerate")
        return 0.0
    return (1.0 / m0) ** 0.25


def hydrogen_molecular_ion(mass: float = PROTON_MASS) -> MolecularSystem:
    """Two protons and one electron, the workhorse system of this package."""
    return build_system([(mass, 1.0), (mass, 1.0)], 1)


def hydrogen_atom(mass: float = PROTON_MASS, charge: float = 1.0) -> MolecularSystem:
    return build_system([(mass, charge)], 1)


def parse_system(text: str) -> MolecularSystem:
    """Parse the flat key-value system format.

    One ``nucleus = mass,charge`` line per nucleus, a single ``electrons = N``
    line, ``#`` comments.  Mass may be the token INFINITE.
    """
    nuclei = []
    electrons = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key == "nucleus":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 2:
                raise ValidationError(f"nucleus line needs 'mass,charge', got {value!r}")
            mass = INFINITE if parts[0].upper() == "INFINITE" else float(parts[0])
            nuclei.append((mass, float(parts[1])))
        elif key == "electrons":
            electrons = int(value)
        else:
            raise ValidationError(f"unknown system key {key!r}")
    if electrons is None:
        raise ValidationError("missing 'electrons' key")
    return build_system(nuclei, electrons)


def read_system(path) -> MolecularSystem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system(fh.read())
