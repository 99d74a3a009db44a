"""Numerical probes of the clamped-operator spectral picture.

The electronic operator at fixed nuclear separation has a discrete spectrum,
but the operator obtained by deleting the nuclear kinetic term while keeping
the nuclear coordinate dynamical does not: its spectrum is the union of the
clamped eigenvalue curves, swept over separation.  Everything here turns that
statement into one-dimensional quadratures against a precomputed curve.

Four experiments live in this module.  Weyl-style wave packets localized near
a separation b show means converging to the curve and variances vanishing
with a power of the packet width.  Collapse scans show the same packets
lowering the energy without bound as they shrink when no nuclear kinetic term
is present, against a clean interior optimum when it is.  Kato ratio scans
compare the potential against the kinetic terms actually present, exhibiting
relative boundedness or its failure.  Finally bo_select clamps the descriptor
at a chosen separation, which is exactly the step that restores discreteness.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfcx

from .errors import ValidationError
from .operators import OperatorDescriptor
from .reports import Table
from .systems import MolecularSystem
from .threebody import build_internal_hamiltonian
from .twocenter import PotentialCurve, solve_two_center

H_ELEC = "H_ELEC"
FULL_INTERNAL = "FULL_INTERNAL"

#: operational thresholds for calling a ratio tail divergent or settled
TAIL_GROWTH_THRESHOLD = 5.0
TAIL_SPREAD_THRESHOLD = 2.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_SUPPORT = 8.0  # Gaussian mass beyond this many widths is below 1e-14


def _panel(f, lo: float, hi: float) -> float:
    half = 0.5 * (hi - lo)
    x = 0.5 * (lo + hi) + half * _GL_NODES
    return half * float(f(x) @ _GL_WEIGHTS)


def adaptive_quadrature(f, lo: float, hi: float, rel_tol: float = 1e-9) -> float:
    """Integrate a vectorized callable with adaptive Gauss-Legendre panels.

    Panels are split until the 20-point estimate is reproduced by its two
    halves within a tolerance proportional to the panel's share of the total.
    """
    if not hi > lo:
        raise ValidationError("empty quadrature interval")
    seeds = np.linspace(lo, hi, 9)
    rough = sum(abs(_panel(f, a, b)) for a, b in zip(seeds[:-1], seeds[1:]))
    floor = rel_tol * max(rough, 1e-300)
    total = 0.0
    stack = [(a, b, _panel(f, a, b), 0) for a, b in zip(seeds[:-1], seeds[1:])]
    while stack:
        a, b, whole, depth = stack.pop()
        mid = 0.5 * (a + b)
        left, right = _panel(f, a, mid), _panel(f, mid, b)
        if abs(left + right - whole) <= floor * (b - a) / (hi - lo) or depth >= 48:
            total += left + right
        else:
            stack.append((a, mid, left, depth + 1))
            stack.append((mid, b, right, depth + 1))
    return total


def _radial_marginal(t, center: float, width: float):
    """Radial density of a 3D Gaussian displaced from the origin.

    ``width`` is the per-axis standard deviation; the density integrates to
    one over t >= 0 and tends to delta(t - center) as the width shrinks.
    """
    t = np.asarray(t, dtype=float)
    w2 = width * width
    if center < 5.0 * width:
        # sinh form is exact and avoids cancellation when the displacement
        # is comparable to the width (including center -> 0)
        amp = np.exp(-(t * t + center * center) / (2.0 * w2))
        arg = t * center / w2
        core = np.where(arg < 1e-6, t * t / w2 * (1.0 + arg * arg / 6.0),
                        t * np.sinh(arg) / max(center, 1e-300))
        return np.sqrt(2.0 / np.pi) * amp * core / width
    direct = np.exp(-((t - center) ** 2) / (2.0 * w2))
    mirror = np.exp(-((t + center) ** 2) / (2.0 * w2))
    return t * (direct - mirror) / (center * width * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class WeylProbe:
    """Moments of wave packets concentrating on one separation."""

    b: float
    state_index: int
    sigma_list: tuple
    means: tuple
    variances: tuple
    fitted_variance_exponent: float

    def __post_init__(self):
        s = np.asarray(self.sigma_list, dtype=float)
        if s.ndim != 1 or len(s) < 2:
            raise ValidationError("need at least two packet widths")
        if not (s > 0).all() or not (np.diff(s) < 0).all():
            raise ValidationError("sigmaList must be descending")
        if len(self.means) != len(s) or len(self.variances) != len(s):
            raise ValidationError("moment lists must match sigmaList")
        if not np.isfinite(self.means).all():
            raise ValidationError("means must be finite")
        if min(self.variances) < 0.0:
            raise ValidationError("variances must be nonnegative")

    def mean_limit(self) -> float:
        """Extrapolate the packet mean to zero width.

        The mean is analytic in sigma^2, so a quadratic fit in that variable
        removes the leading curvature and quartic corrections.
        """
        x = np.asarray(self.sigma_list) ** 2
        return float(np.polyval(np.polyfit(x, self.means, 2), 0.0))

    def table(self) -> Table:
        rows = list(zip(self.sigma_list, self.means, self.variances))
        return Table("weyl", ("sigma", "mean", "variance"), rows)


def weyl_moments(curve: PotentialCurve, b: float, state: int = 0,
                 sigma_list=None) -> WeylProbe:
    """Mean and variance of the curve against shrinking radial packets.

    The trial state is an electronic fiber eigenstate times a normalized 3D
    Gaussian of width sigma centered at separation b, so both moments reduce
    to quadratures of the curve against the packet's radial density.
    The variance is integrated in centered form, which keeps it exact where
    the raw second moment would lose it all to cancellation.
    """
    if sigma_list is None:
        sigma_list = tuple(np.geomspace(0.12, 0.02, 7))
    sigmas = tuple(float(s) for s in sigma_list)
    if not all(s > 0 for s in sigmas) or not all(
        a > b_ for a, b_ in zip(sigmas, sigmas[1:])
    ):
        raise ValidationError("sigmaList must be descending")
    r_lo, r_hi = float(curve.r_grid[0]), float(curve.r_grid[-1])
    if not r_lo <= b <= r_hi:
        raise ValidationError("packet center is outside the curve domain")
    widest = max(sigmas)
    if b - _SUPPORT * widest < r_lo or b + _SUPPORT * widest > r_hi:
        raise ValidationError(
            "sigma support exits the curve domain; widen the curve grid or "
            "shrink the packet widths"
        )
    spl = curve.spline(state)

    means, variances = [], []
    for s in sigmas:
        lo, hi = b - _SUPPORT * s, b + _SUPPORT * s
        mean = adaptive_quadrature(lambda t: spl(t) * _radial_marginal(t, b, s), lo, hi)
        var = adaptive_quadrature(
            lambda t: (spl(t) - mean) ** 2 * _radial_marginal(t, b, s), lo, hi
        )
        means.append(mean)
        variances.append(max(var, 0.0))

    exponent = float(
        np.polyfit(np.log(sigmas), np.log(np.maximum(variances, 1e-300)), 1)[0]
    )
    return WeylProbe(float(b), int(state), sigmas, tuple(means), tuple(variances), exponent)


def weyl_mean_3d(curve: PotentialCurve, b: float, state: int, sigma: float,
                 n: int = 40) -> float:
    """Packet mean by brute 3D quadrature, bypassing the radial reduction.

    Exists purely as the independent route for validating that the operator
    acts fiberwise: the 1D marginal quadrature must reproduce this value.
    """
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 7.5 * sigma
    x = half * nodes
    w = half * weights
    X, Y, Z = np.meshgrid(x, x, x + b, indexing="ij")
    R = np.sqrt(X * X + Y * Y + Z * Z)
    lo, hi = float(curve.r_grid[0]), float(curve.r_grid[-1])
    if R.min() < lo or R.max() > hi:
        raise ValidationError("3D packet support exits the curve domain")
    density = np.exp(-(X * X + Y * Y + (Z - b) ** 2) / (2.0 * sigma * sigma))
    density /= (2.0 * math.pi * sigma * sigma) ** 1.5
    values = curve.spline(state)(R) * density
    return float(np.einsum("i,j,k,ijk->", w, w, w, values))


@dataclass(frozen=True)
class CollapseTrace:
    """Energy of the product trial family along a width scan."""

    sigma_grid: tuple
    energies: tuple
    gradient_signs: tuple
    interior_minimum_found: bool
    mode: str

    def __post_init__(self):
        s = np.asarray(self.sigma_grid, dtype=float)
        if s.ndim != 1 or len(s) < 3:
            raise ValidationError("need at least three widths in the scan")
        if not (s > 0).all() or not (np.diff(s) > 0).all():
            raise ValidationError("sigmaGrid must be strictly ascending")
        if self.mode not in (H_ELEC, FULL_INTERNAL):
            raise ValidationError(f"mode must be {H_ELEC} or {FULL_INTERNAL}")
        if len(self.energies) != len(s) or len(self.gradient_signs) != len(s):
            raise ValidationError("scan columns must match sigmaGrid")
        if not np.isfinite(self.energies).all():
            raise ValidationError("scan energies must be finite")

    def gradients(self) -> np.ndarray:
        return np.gradient(np.asarray(self.energies), np.asarray(self.sigma_grid))

    def table(self) -> Table:
        rows = list(zip(self.sigma_grid, self.energies, self.gradients()))
        return Table("collapse", ("sigma", "energy", "dE_dsigma"), rows)


def collapse_probe(descriptor: OperatorDescriptor, curve: PotentialCurve,
                   b: float, sigma_grid, mode: str) -> CollapseTrace:
    """Scan the product-trial energy over nuclear packet widths.

    In H_ELEC mode the descriptor must carry no nuclear kinetic term and the
    energy is the bare curve average: shrinking the packet at the curve
    minimum lowers it monotonically toward V0, which is the operational form
    of "no normalizable eigenvectors".  In FULL_INTERNAL mode the kinetic
    penalty 3/(8 mu sigma^2) is added and an interior optimum appears.
    """
    sigmas = tuple(float(s) for s in sigma_grid)
    if mode not in (H_ELEC, FULL_INTERNAL):
        raise ValidationError(f"mode must be {H_ELEC} or {FULL_INTERNAL}")
    if descriptor.coordinate_count != 2:
        raise ValidationError("collapse probe expects an internal diatomic descriptor")
    k_nuc = float(descriptor.kinetic_matrix[0, 0])
    if mode == H_ELEC and k_nuc != 0.0:
        raise ValidationError(
            "H_ELEC mode needs the zero-nuclear-kinetic descriptor (probe mode)"
        )
    if mode == FULL_INTERNAL and k_nuc <= 0.0:
        raise ValidationError("FULL_INTERNAL mode needs a nuclear kinetic term")
    r_lo, r_hi = float(curve.r_grid[0]), float(curve.r_grid[-1])
    if not r_lo <= b <= r_hi:
        raise ValidationError("packet center is outside the curve domain")

    spl = curve.spline(0)
    energies = []
    for s in sigmas:
        lo = max(r_lo, b - _SUPPORT * s)
        hi = min(r_hi, b + _SUPPORT * s)
        weight = adaptive_quadrature(lambda t: _radial_marginal(t, b, s), lo, hi)
        value = adaptive_quadrature(
            lambda t: spl(t) * _radial_marginal(t, b, s), lo, hi
        ) / weight
        if mode == FULL_INTERNAL:
            value += 3.0 * k_nuc / (8.0 * s * s)
        energies.append(value)

    e = np.asarray(energies)
    signs = tuple(int(np.sign(g)) for g in np.gradient(e, np.asarray(sigmas)))
    interior = bool(np.any((e[1:-1] < e[:-2]) & (e[1:-1] < e[2:])))
    return CollapseTrace(sigmas, tuple(energies), signs, interior, mode)


def spectrum_cover(curve: PotentialCurve, energy: float) -> list:
    """All separations where the ground curve passes through a given energy.

    Bisection runs on each monotone piece of the sampled curve; the cell
    holding the minimum is split there so near-tangent pairs are not missed.
    Returns the empty list below the curve minimum and the bare minimum
    location at tangency.
    """
    energy = float(energy)
    spl = curve.spline(0)
    grid = np.asarray(curve.r_grid, dtype=float)
    values = np.asarray(curve.energies[0], dtype=float)
    v0 = curve.V0
    scale = max(1.0, abs(v0))
    if energy < v0 - 1e-12 * scale:
        return []
    if curve.r_min is not None and abs(energy - v0) <= 1e-10 * scale:
        return [float(curve.r_min)]

    points = list(zip(grid, values))
    if curve.r_min is not None and grid[0] < curve.r_min < grid[-1]:
        points.append((float(curve.r_min), float(v0)))
        points.sort()

    roots = []
    for (a, fa), (b_, fb) in zip(points[:-1], points[1:]):
        ga, gb = fa - energy, fb - energy
        if ga == 0.0:
            roots.append(a)
            continue
        if ga * gb >= 0.0:
            continue
        lo, hi, glo = a, b_, ga
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            gm = float(spl(mid)) - energy
            if glo * gm <= 0.0:
                hi = mid
            else:
                lo, glo = mid, gm
        roots.append(0.5 * (lo + hi))
    if values[-1] - energy == 0.0:
        roots.append(float(grid[-1]))

    out = []
    for r in sorted(roots):
        if not out or r - out[-1] > 1e-9:
            out.append(float(r))
    return out


@dataclass(frozen=True)
class GaussianTrialFamily:
    """Normalized Gaussian product states with one coordinate shrinking.

    ``center`` is the distance of the shrinking packet's center from the
    origin; None ties the center to the width itself, which is the family
    that dives into a coalescence singularity.  All other coordinates sit at
    the origin with a fixed width.
    """

    shrink_index: int
    widths: tuple
    center: float | None = None
    spectator_width: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.widths, dtype=float)
        if w.ndim != 1 or len(w) < 4:
            raise ValidationError("need at least four widths")
        if not (w > 0).all() or not (np.diff(w) < 0).all():
            raise ValidationError("widths must be strictly descending")
        if self.center is not None and self.center < 0:
            raise ValidationError("center must be nonnegative")
        if self.spectator_width <= 0:
            raise ValidationError("spectator width must be positive")


@dataclass(frozen=True)
class KatoProbe:
    """Relative-boundedness scan ||Vf|| / (||T0 f|| + ||f||)."""

    family: GaussianTrialFamily
    potential_norms: tuple
    kinetic_norms: tuple
    ratios: tuple
    tail_spread: float
    tail_growth: float
    divergent: bool

    def table(self) -> Table:
        rows = list(
            zip(self.family.widths, self.potential_norms, self.kinetic_norms, self.ratios)
        )
        return Table("kato", ("width", "potential_norm", "kinetic_norm", "ratio"), rows)


def _displaced_inverse_square(center: float, width: float) -> float:
    """<1/t^2> for a displaced 3D Gaussian, by marginal quadrature."""
    lo = max(0.0, center - (_SUPPORT + 1) * width)
    hi = center + (_SUPPORT + 1) * width
    return adaptive_quadrature(
        lambda t: _radial_marginal(t, center, width) / np.maximum(t, 1e-300) ** 2,
        lo,
        hi,
    )


def _pair_stats(row, centers, variances):
    """Center distance and per-axis variance of one Coulomb difference."""
    row = np.asarray(row, dtype=float)
    center = abs(float(row @ centers))
    var = float(row * row @ variances)
    return center, var


def kato_ratio_probe(descriptor: OperatorDescriptor, family: GaussianTrialFamily) -> KatoProbe:
    """Scan the Kato ratio along a shrinking Gaussian family.

    The potential norm is assembled from displaced-Gaussian moments: squared
    terms and the attraction-repulsion cross reduce to quadratures over the
    nuclear radial marginal, and the attraction-attraction cross has a closed
    form in prolate coordinates when the two offsets are mirror images.
    """
    n = descriptor.coordinate_count
    if n not in (1, 2):
        raise ValidationError("Kato probe supports one- and two-coordinate descriptors")
    if family.shrink_index >= n:
        raise ValidationError("shrink index out of range")
    K = descriptor.kinetic_matrix
    if np.abs(K - np.diag(np.diagonal(K))).max() > 1e-14:
        raise ValidationError("Kato probe needs a diagonal kinetic form")
    for t in descriptor.coulomb_terms:
        if np.abs(np.asarray(t.offset_difference)).max() > 0:
            raise ValidationError("Kato probe needs a pure internal-frame descriptor")

    terms = [(t.prefactor, np.asarray(t.difference, dtype=float))
             for t in descriptor.coulomb_terms]
    if n == 2:
        attract = [(q, row) for q, row in terms if q < 0]
        repel = [(q, row) for q, row in terms if q > 0]
        if len(attract) != 2 or len(repel) != 1:
            raise ValidationError("two-coordinate probe expects a diatomic descriptor")
        a1 = attract[0][1][0]
        a2 = attract[1][1][0]
        if abs(a1 + a2) > 1e-12:
            raise ValidationError(
                "attraction offsets must be mirror images (homonuclear)"
            )

    pot_norms, kin_norms, ratios = [], [], []
    for w in family.widths:
        widths = np.full(n, family.spectator_width, dtype=float)
        widths[family.shrink_index] = w
        centers = np.zeros(n)
        centers[family.shrink_index] = w if family.center is None else family.center
        variances = widths**2

        # ||V f||^2 term by term
        v_sq = 0.0
        for q, row in terms:
            c, var = _pair_stats(row, centers, variances)
            v_sq += q * q * _displaced_inverse_square(c, math.sqrt(var))
        if n == 2:
            v_sq += 2.0 * _kato_crosses(attract, repel, centers, variances)

        # ||T0 f||^2 for a Gaussian product: per-coordinate Gaussian fourth
        # moments plus the uncorrelated cross between distinct coordinates
        t_mean = [0.5 * K[i, i] * 0.75 / variances[i] for i in range(n)]
        t_sq = sum(
            (0.5 * K[i, i]) ** 2 * (15.0 / 16.0) / variances[i] ** 2 for i in range(n)
        )
        for i in range(n):
            for j in range(i + 1, n):
                t_sq += 2.0 * t_mean[i] * t_mean[j]

        pot = math.sqrt(v_sq)
        kin = math.sqrt(t_sq)
        pot_norms.append(pot)
        kin_norms.append(kin)
        ratios.append(pot / (kin + 1.0))

    widths_arr = np.asarray(family.widths)
    ratios_arr = np.asarray(ratios)
    tail = widths_arr <= 10.0 * widths_arr[-1] + 1e-300
    tail_ratios = ratios_arr[tail]
    spread = float(tail_ratios.max() / tail_ratios.min())
    growth = float(tail_ratios[-1] / tail_ratios[0])
    monotone_up = bool((np.diff(ratios_arr) > 0).all())
    divergent = monotone_up and growth > TAIL_GROWTH_THRESHOLD
    return KatoProbe(
        family,
        tuple(pot_norms),
        tuple(kin_norms),
        tuple(ratios),
        spread,
        growth,
        divergent,
    )


def _kato_crosses(attract, repel, centers, variances) -> float:
    """Sum of distinct-pair Coulomb cross moments over the nuclear marginal."""
    nuc_center, nuc_width = centers[0], math.sqrt(variances[0])
    s_r = math.sqrt(2.0 * variances[1])  # electron factor in exp(-r^2/s^2) form
    (q1, row1), (q2, row2) = attract
    (qr, _row_r) = repel[0]
    alpha = abs(row1[0])

    lo = max(0.0, nuc_center - (_SUPPORT + 1) * nuc_width)
    hi = nuc_center + (_SUPPORT + 1) * nuc_width

    def integrand(R):
        R = np.maximum(R, 1e-12)
        rho = _radial_marginal(R, nuc_center, nuc_width)
        a = R / (2.0 * s_r)
        att_att = (2.0 * math.sqrt(math.pi) / (R * s_r)) * erfcx(a) * erf(a)
        att_rep = erf(alpha * R / s_r) / (alpha * R) / R
        return rho * (q1 * q2 * att_att + qr * (q1 + q2) * att_rep)

    return adaptive_quadrature(integrand, lo, hi)


def bo_select(system: MolecularSystem, b: float, hughes_eckart: bool = False) -> OperatorDescriptor:
    """Clamp the internal descriptor at separation b.

    This is the selection step that turns the continuous swept-curve operator
    into one with a discrete spectrum: the nuclear coordinate becomes a
    constant, its kinetic term disappears, and the nn repulsion collapses
    into the constant shift.  With the Hughes-Eckart flag the electronic
    kinetic coefficient keeps its 1/(m1+m2) correction; without it the
    electron mass is the bare one.
    """
    from .operators import clamp_coordinate

    if b <= 0:
        raise ValidationError("separation must be positive")
    internal = build_internal_hamiltonian(system)
    clamped = clamp_coordinate(internal, 0, (0.0, 0.0, float(b)))
    kinetic = clamped.kinetic_form if hughes_eckart else ((1.0,),)
    return OperatorDescriptor(
        1, kinetic, clamped.coulomb_terms, clamped.constant_shift
    )


def solve_clamped(descriptor: OperatorDescriptor, n_states: int = 1, **basis_options) -> list:
    """Ground and excited total energies of a clamped two-center descriptor.

    Recovers the separation and charges from the descriptor's offsets and
    routes them through the production two-center solver, honoring the
    descriptor's electronic kinetic coefficient as an effective mass.
    """
    if descriptor.coordinate_count != 1:
        raise ValidationError("expected a clamped one-electron descriptor")
    attract = [t for t in descriptor.coulomb_terms if t.prefactor < 0]
    if len(attract) != 2:
        raise ValidationError("expected exactly two attraction terms")
    offsets = [np.asarray(t.offset_difference, dtype=float) for t in attract]
    separation = float(np.linalg.norm(offsets[0] - offsets[1]))
    if separation <= 0:
        raise ValidationError("clamped centers coincide")
    charges = [-t.prefactor for t in attract]
    eff_mass = 1.0 / float(descriptor.kinetic_matrix[0, 0])
    states = solve_two_center(
        separation,
        Z1=charges[0],
        Z2=charges[1],
        effective_electron_mass=eff_mass,
        n_states=n_states,
        **basis_options,
    )
    return [s.energy_electronic + descriptor.constant_shift for s in states]
