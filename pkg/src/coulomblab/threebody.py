"""Variational solution of the internal Coulomb problem without clamping.

Electrons and nuclei are treated on the same footing here.  After the center
of mass is removed, a one-electron diatomic becomes a two-vector problem: the
internuclear vector R and the electron position r measured from the nuclear
center of mass.  The trial space is a basis of explicitly correlated
Gaussians exp(-a r1e^2 - b r2e^2 - c R^2) in the three interparticle
separations, grown stochastically one term at a time and then refined by
coordinate descent on the exponents.  A single nucleus plus one electron is
the same machinery with one vector and bare exponents (a, 0, 0).

Everything is driven by a seeded generator: identical configuration and seed
reproduce the basis, the energy, and the coefficients bit for bit.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import __version__
from .errors import ConvergenceError, ValidationError
from .operators import STATUS_OK, STATUS_RISK, CoulombPoint, CoulombTerm, OperatorDescriptor
from .radial import solve_radial
from .reports import ExperimentReport, Table
from .systems import INFINITE, MolecularSystem
from .twocenter import finite_mass_rescale, potential_curve

ATOMIC = "ATOMIC"
MOLECULAR = "MOLECULAR"

# Tightest acceptable residual of a new term against the span of the current
# basis; below this the overlap matrix heads toward numerical breakdown.
_MIN_RESIDUAL = 1e-7

# Relative spacing under which two exponent triples count as duplicates.
_DUPLICATE_TOL = 1e-12

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)

# Base multiplicative steps for the exponent line search, annealed per sweep.
_LADDER = (0.35, 0.6, 0.85, 1.0 / 0.85, 1.0 / 0.6, 1.0 / 0.35)


@dataclass(frozen=True)
class BasisConfig:
    """Growth and refinement schedule for the correlated Gaussian basis."""

    size: int = 200
    seed: int = 42
    candidates: int = 64
    refine_sweeps: int = 48
    electronic_range: tuple[float, float] = (1e-3, 1e3)
    internuclear_range: tuple[float, float] = (1e-1, 1e5)
    probe_mode: bool = False

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError("basis size must be at least 1")
        if self.candidates < 1:
            raise ValidationError("need at least one candidate per growth step")
        if self.refine_sweeps < 0:
            raise ValidationError("negative refinement sweep count")
        for lo, hi in (self.electronic_range, self.internuclear_range):
            if not (0.0 < lo < hi):
                raise ValidationError("exponent ranges must satisfy 0 < low < high")


def _validate_terms(terms):
    t = np.asarray(terms, dtype=float)
    if t.ndim != 2 or t.shape[1] != 3:
        raise ValidationError("terms must be (a, b, c) triples")
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    two_body = (b == 0.0) & (c == 0.0)
    if two_body.any() != two_body.all():
        raise ValidationError("cannot mix two-body and three-body triples")
    if (a <= 0.0).any():
        raise ValidationError("first exponent must be positive")
    if not two_body.all():
        det = a * b + (a + b) * c
        if (b <= 0.0).any() or (c < 0.0).any() or (det <= 0.0).any():
            raise ValidationError("exponent triple is not positive definite")
    scale = np.maximum(1.0, np.abs(t))
    for i in range(len(t)):
        close = np.all(np.abs(t[i + 1:] - t[i]) <= _DUPLICATE_TOL * scale[i + 1:], axis=1)
        if close.any():
            raise ValidationError(f"duplicate exponent triple at index {i}")
    return t


@dataclass(frozen=True)
class CorrelatedGaussianBasis:
    terms: tuple[tuple[float, float, float], ...]
    seed: int

    def __post_init__(self):
        t = _validate_terms(self.terms)
        object.__setattr__(self, "terms", tuple(map(tuple, t)))

    @property
    def size(self) -> int:
        return len(self.terms)

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "terms": [list(t) for t in self.terms]}, indent=2
        )

    @staticmethod
    def from_json(text: str) -> "CorrelatedGaussianBasis":
        d = json.loads(text)
        return CorrelatedGaussianBasis(tuple(map(tuple, d["terms"])), d["seed"])


@dataclass(frozen=True)
class VariationalResult:
    """Converged variational state and its diagnostics.

    The coefficient vector refers to normalized (and, for like nuclei,
    exchange-symmetrized) basis functions.  The convergence history holds the
    energy after every accepted growth step and refinement sweep, so it is
    non-increasing by construction.
    """

    energy: float
    coefficients: tuple[float, ...]
    virial_ratio: float
    convergence_history: tuple[float, ...]
    bound_flag: bool
    kinetic_expectation: float
    potential_expectation: float
    threshold: float
    low_eigenvalues: tuple[float, ...]
    basis: CorrelatedGaussianBasis

    def to_json(self) -> str:
        return json.dumps(
            {
                "energy": self.energy,
                "coefficients": list(self.coefficients),
                "virial_ratio": self.virial_ratio,
                "convergence_history": list(self.convergence_history),
                "bound_flag": self.bound_flag,
                "kinetic_expectation": self.kinetic_expectation,
                "potential_expectation": self.potential_expectation,
                "threshold": self.threshold,
                "low_eigenvalues": list(self.low_eigenvalues),
                "basis": json.loads(self.basis.to_json()),
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "VariationalResult":
        d = json.loads(text)
        basis = CorrelatedGaussianBasis(
            tuple(map(tuple, d["basis"]["terms"])), d["basis"]["seed"]
        )
        return VariationalResult(
            d["energy"],
            tuple(d["coefficients"]),
            d["virial_ratio"],
            tuple(d["convergence_history"]),
            d["bound_flag"],
            d["kinetic_expectation"],
            d["potential_expectation"],
            d["threshold"],
            tuple(d["low_eigenvalues"]),
            basis,
        )


def build_internal_hamiltonian(system: MolecularSystem) -> OperatorDescriptor:
    """Internal-frame Hamiltonian for one electron and one or two nuclei.

    For a diatomic the coordinates are the internuclear vector R = R1 - R2
    and the electron measured from the nuclear center of mass, which leaves
    the kinetic form diagonal: 1/mu for R with 1/mu = 1/m1 + 1/m2, and the
    reduced electron mass 1 + 1/(m1 + m2) for r (the mass polarization term
    of the nuclear-center-of-mass frame).  Nucleus i sits at alpha_i R with
    alpha_1 = m2/(m1 + m2) and alpha_2 = -m1/(m1 + m2).

    Infinite nuclear masses are taken as limits.  When both are infinite the
    nuclear kinetic coefficient vanishes and the descriptor is flagged
    NON_SELF_ADJOINT_RISK: nothing suppresses the internuclear Coulomb
    singularity any more, and no discrete level should be expected of it.
    """
    if system.electron_count != 1:
        raise ValidationError("internal frame built for exactly one electron")
    if system.nucleus_count not in (1, 2):
        raise ValidationError("one or two nuclei only")

    masses = system.nuclear_masses
    charges = system.nuclear_charges
    inv = [0.0 if math.isinf(m) else 1.0 / m for m in masses]

    if system.nucleus_count == 1:
        kinetic = ((1.0 + inv[0],),)
        terms = (
            CoulombTerm(-charges[0], CoulombPoint((1.0,)), CoulombPoint((0.0,))),
        )
        return OperatorDescriptor(1, kinetic, terms)

    m1, m2 = masses
    nuclear = inv[0] + inv[1]
    total_inv = 0.0 if math.isinf(m1) or math.isinf(m2) else 1.0 / (m1 + m2)
    if math.isinf(m1) and math.isinf(m2):
        # the mass ratio is indeterminate; split evenly, exact for like nuclei
        alpha1, alpha2 = 0.5, -0.5
    elif math.isinf(m1):
        alpha1, alpha2 = 0.0, -1.0
    elif math.isinf(m2):
        alpha1, alpha2 = 1.0, 0.0
    else:
        alpha1 = m2 / (m1 + m2)
        alpha2 = -m1 / (m1 + m2)

    kinetic = ((nuclear, 0.0), (0.0, 1.0 + total_inv))
    electron = CoulombPoint((0.0, 1.0))
    nucleus1 = CoulombPoint((alpha1, 0.0))
    nucleus2 = CoulombPoint((alpha2, 0.0))
    terms = (
        CoulombTerm(-charges[0], electron, nucleus1),
        CoulombTerm(-charges[1], electron, nucleus2),
        CoulombTerm(charges[0] * charges[1], nucleus1, nucleus2),
    )
    status = STATUS_RISK if nuclear == 0.0 else STATUS_OK
    return OperatorDescriptor(2, kinetic, terms, 0.0, status)


class _Kernel:
    """Analytic matrix elements between correlated Gaussians.

    A triple t maps to the exponent form A(t) = sum_k t_k w_k w_k^T over the
    interparticle rows w_k of the descriptor, so every block reduces to 2x2
    (or 1x1) determinant algebra: with D = A_k + A_l,

        S  = (pi^d / det D)^(3/2)
        T  = 3 tr(Lambda A_k D^-1 A_l) S
        V  = sum_t q_t (2/sqrt(pi)) (w_t D^-1 w_t)^(-1/2) S

    For like nuclei the kernel is invariant under swapping the two electron
    rows, and blocks are accumulated over the nucleus-exchange image of the
    right-hand term, which projects the basis onto the even (gerade) sector.
    """

    def __init__(self, descriptor: OperatorDescriptor):
        d = descriptor.coordinate_count
        if d not in (1, 2):
            raise ValidationError("solver covers one- or two-coordinate frames")
        for t in descriptor.coulomb_terms:
            if np.any(np.abs(t.offset_difference) > 0.0):
                raise ValidationError(
                    "descriptor carries clamped offsets; the variational "
                    "solver needs a pure internal frame"
                )
        attract = [t for t in descriptor.coulomb_terms if t.prefactor < 0]
        repel = [t for t in descriptor.coulomb_terms if t.prefactor > 0]
        expected = (1, 0) if d == 1 else (2, 1)
        if (len(attract), len(repel)) != expected:
            raise ValidationError(
                "descriptor is not a one-electron Coulomb problem with "
                f"{expected[0]} attraction terms"
            )
        self.dim = d
        self.n_slots = 1 if d == 1 else 3
        self.lam = descriptor.kinetic_matrix
        rows = [t.difference for t in attract] + [t.difference for t in repel]
        self.slot_rows = np.array(rows)  # (n_slots, d)
        self.interaction = [(t.prefactor, t.difference) for t in attract + repel]
        self.symmetrized = d == 2 and self._swap_invariant()

    def forms(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=float)[:, : self.n_slots]
        return np.einsum("mk,ki,kj->mij", t, self.slot_rows, self.slot_rows)

    def _raw(self, forms_a, forms_b):
        """Unnormalized blocks between two stacks of exponent forms."""
        D = forms_a[:, None] + forms_b[None, :]
        if self.dim == 1:
            det = D[..., 0, 0]
            Dinv = 1.0 / D
        else:
            det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
            Dinv = np.empty_like(D)
            Dinv[..., 0, 0] = D[..., 1, 1]
            Dinv[..., 1, 1] = D[..., 0, 0]
            Dinv[..., 0, 1] = -D[..., 0, 1]
            Dinv[..., 1, 0] = -D[..., 1, 0]
            Dinv /= det[..., None, None]
        S = (math.pi ** self.dim / det) ** 1.5
        mid = forms_a[:, None] @ Dinv @ forms_b[None, :]
        T = 3.0 * np.einsum("ij,klji->kl", self.lam, mid) * S
        V = np.zeros_like(S)
        for q, w in self.interaction:
            gamma = np.einsum("i,klij,j->kl", w, Dinv, w)
            V += q * _TWO_OVER_SQRT_PI / np.sqrt(gamma) * S
        return S, T, V

    def _accumulated(self, triples_a, triples_b):
        fa = self.forms(triples_a)
        S, T, V = self._raw(fa, self.forms(triples_b))
        if self.symmetrized:
            swapped = np.asarray(triples_b, dtype=float)[:, (1, 0, 2)]
            S2, T2, V2 = self._raw(fa, self.forms(swapped))
            S, T, V = S + S2, T + T2, V + V2
        return S, T, V

    def norms(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=float)
        S, _, _ = self._accumulated(t, t)
        diag = np.diagonal(S)
        if not np.all(np.isfinite(diag)) or (diag <= 0.0).any():
            raise ValidationError("exponent triple overflows the norm integral")
        return np.sqrt(diag)

    def matrices(self, triples_a, norms_a, triples_b, norms_b):
        """Normalized (S, T, V) blocks between two triple stacks."""
        S, T, V = self._accumulated(triples_a, triples_b)
        scale = np.outer(1.0 / norms_a, 1.0 / norms_b)
        return S * scale, T * scale, V * scale

    def _swap_invariant(self) -> bool:
        probes = np.array(
            [[0.8, 1.7, 0.5], [2.3, 0.4, 6.0], [0.06, 1.1, 15.0], [5.0, 5.0, 0.3]]
        )
        swapped = probes[:, (1, 0, 2)]
        one = self._raw(self.forms(probes), self.forms(probes))
        two = self._raw(self.forms(swapped), self.forms(swapped))
        return all(
            np.allclose(x, y, rtol=1e-10, atol=1e-12) for x, y in zip(one, two)
        )

    def bound_threshold(self) -> float:
        """Lowest two-body breakup energy below which a state is bound.

        For a single coordinate the system is already two-body and breakup
        means full ionization at energy zero.  Otherwise each attractive pair
        contributes a hydrogenic channel -q^2 / (2 kappa) with kappa the pair
        inverse reduced mass read off the kinetic form.
        """
        if self.dim == 1:
            return 0.0
        channels = []
        for q, w in self.interaction:
            if q < 0:
                kappa = float(w @ self.lam @ w)
                channels.append(-q * q / (2.0 * kappa))
        return min(channels)


def _dense_eigh(H, S):
    try:
        return scipy.linalg.eigh(H, S, check_finite=False)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise ConvergenceError(
            "overlap matrix lost positive definiteness; basis became "
            "numerically dependent"
        ) from exc


def _bordered_roots(eps, s_proj, h_proj, h0):
    """Lowest eigenvalue of each rank-one bordered pencil, vectorized.

    In the eigenbasis of the current n-term problem, adding a normalized
    candidate row (s, h, h0) moves the ground energy to the unique root below
    eps[0] of

        f(E) = (h0 - E) - sum_i (h_i - E s_i)^2 / (eps_i - E).

    Returns (roots, valid); invalid candidates either duplicate the span or
    gain nothing at double precision.
    """
    m = h0.shape[0]
    eps0 = eps[0]

    def f(E):
        num = h_proj - E[None, :] * s_proj
        return (h0 - E) - np.sum(num * num / (eps[:, None] - E[None, :]), axis=0)

    hi = np.full(m, eps0 - max(1e-13, 1e-13 * abs(eps0)))
    valid = f(hi) < 0.0

    offset = np.full(m, 0.25)
    lo = eps0 - offset
    for _ in range(60):
        grow = valid & (f(lo) <= 0.0)
        if not grow.any():
            break
        offset[grow] *= 4.0
        lo[grow] = eps0 - offset[grow]
    valid &= f(lo) > 0.0

    for _ in range(100):
        mid = 0.5 * (lo + hi)
        above = f(mid) > 0.0
        lo[above] = mid[above]
        hi[~above] = mid[~above]
    return 0.5 * (lo + hi), valid


class _Variational:
    """Mutable growth/refinement state around a fixed kernel."""

    def __init__(self, kernel: _Kernel, config: BasisConfig):
        self.kernel = kernel
        self.config = config
        self.triples = np.empty((0, 3))
        self.norms = np.empty(0)
        self.S = np.empty((0, 0))
        self.T = np.empty((0, 0))
        self.V = np.empty((0, 0))
        self.eigvals = None
        self.eigvecs = None
        self.history = []

    @property
    def size(self) -> int:
        return len(self.triples)

    @property
    def H(self) -> np.ndarray:
        return self.T + self.V

    def seed_terms(self, triples):
        t = _validate_terms(triples)
        self.triples = t
        self.norms = self.kernel.norms(t)
        self.S, self.T, self.V = self.kernel.matrices(t, self.norms, t, self.norms)
        self._refresh_eigen()
        self.history.append(self.eigvals[0])

    def _refresh_eigen(self):
        self.eigvals, self.eigvecs = _dense_eigh(self.H, self.S)

    def _draw(self, rng) -> np.ndarray:
        m = self.config.candidates
        lo_e, hi_e = self.config.electronic_range
        cands = np.zeros((m, 3))
        u = rng.uniform(size=(m, self.kernel.n_slots))
        cands[:, 0] = np.exp(np.log(lo_e) + u[:, 0] * math.log(hi_e / lo_e))
        if self.kernel.n_slots == 3:
            lo_n, hi_n = self.config.internuclear_range
            cands[:, 1] = np.exp(np.log(lo_e) + u[:, 1] * math.log(hi_e / lo_e))
            cands[:, 2] = np.exp(np.log(lo_n) + u[:, 2] * math.log(hi_n / lo_n))
        return cands

    def _not_duplicate(self, cands, skip=None) -> np.ndarray:
        if self.size == 0:
            return np.ones(len(cands), dtype=bool)
        existing = self.triples if skip is None else np.delete(self.triples, skip, 0)
        scale = np.maximum(1.0, np.abs(existing))
        close = np.all(
            np.abs(cands[:, None] - existing[None, :]) <= _DUPLICATE_TOL * scale,
            axis=2,
        )
        return ~close.any(axis=1)

    def _score(self, cands, base_idx=None):
        """Bordered ground-state roots of candidates against a sub-basis.

        base_idx selects the columns of the cached matrices to border against
        (default: all).  Returns (roots, valid) aligned with cands.
        """
        if base_idx is None:
            sub_S, sub_T, sub_V = self.S, self.T, self.V
            sub_triples, sub_norms = self.triples, self.norms
            eigvals, eigvecs = self.eigvals, self.eigvecs
        else:
            sub_S = self.S[np.ix_(base_idx, base_idx)]
            sub_T = self.T[np.ix_(base_idx, base_idx)]
            sub_V = self.V[np.ix_(base_idx, base_idx)]
            sub_triples = self.triples[base_idx]
            sub_norms = self.norms[base_idx]
            eigvals, eigvecs = _dense_eigh(sub_T + sub_V, sub_S)

        norms_c = self.kernel.norms(cands)
        Sc, Tc, Vc = self.kernel.matrices(cands, norms_c, sub_triples, sub_norms)
        _, Td, Vd = self.kernel.matrices(cands, norms_c, cands, norms_c)
        h0 = np.diagonal(Td + Vd).copy()

        s_proj = eigvecs.T @ Sc.T
        h_proj = eigvecs.T @ (Tc + Vc).T
        residual = 1.0 - np.sum(s_proj * s_proj, axis=0)
        roots, valid = _bordered_roots(eigvals, s_proj, h_proj, h0)
        valid &= residual > _MIN_RESIDUAL
        valid &= np.all(np.isfinite(Sc), axis=1) & np.isfinite(h0)
        return roots, valid, (eigvals, eigvecs)

    def _append(self, triple):
        t = triple[None, :]
        n = self.kernel.norms(t)
        Sc, Tc, Vc = self.kernel.matrices(t, n, self.triples, self.norms)
        _, Td, Vd = self.kernel.matrices(t, n, t, n)
        self.triples = np.vstack([self.triples, t])
        self.norms = np.concatenate([self.norms, n])
        self.S = np.block([[self.S, Sc.T], [Sc, np.array([[1.0]])]])
        self.T = np.block([[self.T, Tc.T], [Tc, Td]])
        self.V = np.block([[self.V, Vc.T], [Vc, Vd]])
        self._refresh_eigen()

    def grow(self, rng, target_size: int):
        redraws = 0
        while self.size < target_size:
            cands = self._draw(rng)
            if self.size == 0:
                norms_c = self.kernel.norms(cands)
                _, Td, Vd = self.kernel.matrices(cands, norms_c, cands, norms_c)
                roots = np.diagonal(Td + Vd).copy()
                valid = np.isfinite(roots)
            else:
                roots, valid, _ = self._score(cands)
                valid &= self._not_duplicate(cands)
                scale = max(1.0, abs(self.eigvals[0]))
                valid &= roots < self.eigvals[0] - 1e-15 * scale
            if not valid.any():
                redraws += 1
                if redraws > 16:
                    break  # saturated at double precision; stop growing early
                continue
            redraws = 0
            roots = np.where(valid, roots, np.inf)
            self._append(cands[np.argmin(roots)])
            self.history.append(self.eigvals[0])

    def refine(self, rng, sweeps: int):
        """Cycled coordinate descent with periodic term recycling.

        Each sweep line-searches every exponent (and the whole triple along
        its radial direction, which follows valleys where all exponents must
        move together); the annealing restarts every cycle so coarse moves
        stay available late.  Every fourth sweep instead offers each term the
        chance to be replaced outright by a better fresh draw, which is what
        rescues the descent from local basins.
        """
        if self.size < 2 or sweeps == 0:
            return
        energy = self.eigvals[0]
        stagnant = 0
        for sweep in range(sweeps):
            if (sweep + 1) % 4 == 0:
                energy, improved = self._recycle_pass(rng, energy)
            else:
                alpha = max(0.04, 0.75 ** (sweep % 12))
                energy, improved = self._descent_sweep(energy, alpha)
            self._refresh_eigen()
            energy = min(energy, self.eigvals[0])
            self.history.append(energy)
            # a single empty sweep is normal right after the anneal resets;
            # only a whole stagnant cycle means the schedule is exhausted
            stagnant = 0 if improved else stagnant + 1
            if stagnant >= 12:
                break

    def _descent_sweep(self, energy, alpha):
        factors = np.asarray(_LADDER) ** alpha
        n_moves = self.kernel.n_slots + (1 if self.kernel.n_slots == 3 else 0)
        improved = False
        for k in range(self.size):
            base_idx = np.delete(np.arange(self.size), k)
            sub_cache = None
            for move in range(n_moves):
                trials = np.repeat(self.triples[k][None, :], len(factors), 0)
                if move == self.kernel.n_slots:
                    trials *= factors[:, None]
                else:
                    trials[:, move] *= factors
                keep = self._not_duplicate(trials, skip=k)
                if not keep.any():
                    continue
                trials = trials[keep]
                if sub_cache is None:
                    roots, valid, sub_cache = self._score(trials, base_idx)
                else:
                    roots, valid = self._score_cached(trials, base_idx, sub_cache)
                scale = max(1.0, abs(energy))
                valid &= roots < energy - 1e-14 * scale
                if not valid.any():
                    continue
                roots = np.where(valid, roots, np.inf)
                best = int(np.argmin(roots))
                self._replace(k, trials[best])
                energy = roots[best]
                improved = True
        return energy, improved

    def _recycle_pass(self, rng, energy):
        improved = False
        for k in range(self.size):
            base_idx = np.delete(np.arange(self.size), k)
            cands = self._draw(rng)
            keep = self._not_duplicate(cands, skip=k)
            if not keep.any():
                continue
            cands = cands[keep]
            roots, valid, _ = self._score(cands, base_idx)
            scale = max(1.0, abs(energy))
            valid &= roots < energy - 1e-14 * scale
            if not valid.any():
                continue
            roots = np.where(valid, roots, np.inf)
            best = int(np.argmin(roots))
            self._replace(k, cands[best])
            energy = roots[best]
            improved = True
        return energy, improved

    def _score_cached(self, cands, base_idx, cache):
        eigvals, eigvecs = cache
        norms_c = self.kernel.norms(cands)
        Sc, Tc, Vc = self.kernel.matrices(
            cands, norms_c, self.triples[base_idx], self.norms[base_idx]
        )
        _, Td, Vd = self.kernel.matrices(cands, norms_c, cands, norms_c)
        h0 = np.diagonal(Td + Vd).copy()
        s_proj = eigvecs.T @ Sc.T
        h_proj = eigvecs.T @ (Tc + Vc).T
        residual = 1.0 - np.sum(s_proj * s_proj, axis=0)
        roots, valid = _bordered_roots(eigvals, s_proj, h_proj, h0)
        valid &= residual > _MIN_RESIDUAL
        valid &= np.all(np.isfinite(Sc), axis=1) & np.isfinite(h0)
        return roots, valid

    def _replace(self, k: int, triple):
        self.triples[k] = triple
        self.norms[k] = self.kernel.norms(triple[None, :])[0]
        Sr, Tr, Vr = self.kernel.matrices(
            triple[None, :], self.norms[k : k + 1], self.triples, self.norms
        )
        for M, row in ((self.S, Sr), (self.T, Tr), (self.V, Vr)):
            M[k, :] = row[0]
            M[:, k] = row[0]

    def result(self, seed: int) -> VariationalResult:
        self._refresh_eigen()
        c = self.eigvecs[:, 0].copy()
        if c[np.argmax(np.abs(c))] < 0:
            c = -c
        t_expect = float(c @ self.T @ c)
        v_expect = float(c @ self.V @ c)
        energy = float(self.eigvals[0])
        threshold = self.kernel.bound_threshold()
        history = tuple(float(e) for e in self.history)
        basis = CorrelatedGaussianBasis(tuple(map(tuple, self.triples)), seed)
        return VariationalResult(
            energy=energy,
            coefficients=tuple(float(x) for x in c),
            virial_ratio=v_expect / t_expect,
            convergence_history=history,
            bound_flag=bool(energy < threshold),
            kinetic_expectation=t_expect,
            potential_expectation=v_expect,
            threshold=threshold,
            low_eigenvalues=tuple(float(e) for e in self.eigvals[:4]),
            basis=basis,
        )


def solve_variational(
    descriptor: OperatorDescriptor,
    config: BasisConfig | None = None,
    warm_start: CorrelatedGaussianBasis | None = None,
) -> VariationalResult:
    """Grow, refine, and diagonalize a correlated Gaussian basis.

    Candidate terms are drawn log-uniformly (64 per step by default), scored
    through the rank-one bordered secular equation against the current
    eigenbasis, and the best accepted; after growth, every exponent is
    line-searched in turn with an annealed multiplicative ladder.  The energy
    therefore never increases along the way.

    A descriptor flagged NON_SELF_ADJOINT_RISK is rejected unless the
    configuration says probe_mode, because without a nuclear kinetic term the
    growth has no variational floor to converge to.
    """
    config = config or BasisConfig()
    if descriptor.status != STATUS_OK and not config.probe_mode:
        raise ValidationError(
            f"descriptor status {descriptor.status}: no discrete level to "
            "converge to; pass probe_mode=True to study the collapse anyway"
        )
    kernel = _Kernel(descriptor)
    if not config.probe_mode and np.linalg.eigvalsh(kernel.lam).min() <= 0.0:
        raise ValidationError(
            "kinetic form is singular; solving it variationally is only "
            "allowed in probe mode"
        )

    state = _Variational(kernel, config)
    rng = np.random.default_rng(config.seed)
    if warm_start is not None:
        if warm_start.size > config.size:
            raise ValidationError("warm start exceeds the configured size")
        state.seed_terms(np.asarray(warm_start.terms))
    state.grow(rng, config.size)
    state.refine(rng, config.refine_sweeps)
    return state.result(config.seed)


def virial_ratio(result: VariationalResult) -> float:
    """Coulomb virial diagnostic <V>/<T>; -2 exactly at a converged solution."""
    if not result.bound_flag:
        raise ConvergenceError(
            "energy is not below the lowest breakup threshold; the state is "
            "not approximating a normalizable bound level"
        )
    if result.kinetic_expectation <= 0.0:
        raise ConvergenceError("non-positive kinetic expectation")
    return result.potential_expectation / result.kinetic_expectation


def _scan_lambdas(lambdas):
    lams = [float(x) for x in lambdas]
    finite = [x for x in lams if math.isfinite(x)]
    if len(finite) < 3:
        raise ValidationError("need at least three finite scale factors")
    if any(x <= 0 for x in finite):
        raise ValidationError("scale factors must be positive")
    if (np.diff(finite) <= 0).any():
        raise ValidationError("scale factors must be ascending")
    if any(math.isinf(x) for x in lams[: len(lams) - 1]) or len(lams) - len(finite) > 1:
        raise ValidationError("INFINITE may only appear once, at the end")
    return lams, finite


def mass_scan(
    system: MolecularSystem,
    lambdas,
    mode: str,
    basis_config: BasisConfig | None = None,
    r_grid=None,
    n_points: int = 4000,
) -> ExperimentReport:
    """Scale nuclear masses and track the lowest levels.

    ATOMIC mode scales the single nuclear mass of a two-body system; the
    ground energy follows the reduced-mass law all the way to the infinite
    limit, which stays perfectly regular.  MOLECULAR mode scales both nuclear
    masses of a diatomic: levels crowd toward the curve minimum with spacing
    proportional to lambda^(-1/2), and at lambda = INFINITE the nuclear
    kinetic term is gone, so the row only reports NON_SELF_ADJOINT_RISK and
    no discrete level at all.  The divergence is an outcome, not an error.
    """
    t0 = time.perf_counter()
    lams, finite = _scan_lambdas(lambdas)
    if mode not in (ATOMIC, MOLECULAR):
        raise ValidationError(f"mode must be {ATOMIC} or {MOLECULAR}, got {mode!r}")

    rows = []
    summary = {}
    if mode == ATOMIC:
        if system.nucleus_count != 1 or system.electron_count != 1:
            raise ValidationError("ATOMIC scan needs one nucleus and one electron")
        config = basis_config or BasisConfig(size=16, refine_sweeps=40)
        charge = system.nuclear_charges[0]
        deviations = []
        for lam in lams:
            scaled = system.with_scaled_nuclear_masses(lam)
            descriptor = build_internal_hamiltonian(scaled)
            res = solve_variational(descriptor, config)
            e0 = res.energy
            e1 = res.low_eigenvalues[1] if len(res.low_eigenvalues) > 1 else math.nan
            mass = scaled.nuclear_masses[0]
            mu = 1.0 if math.isinf(mass) else 1.0 / (1.0 + 1.0 / mass)
            deviations.append(abs(e0 - (-0.5 * charge * charge * mu)))
            cell = "INFINITE" if math.isinf(lam) else lam
            rows.append((cell, e0, e1, e1 - e0, descriptor.status))
        summary["max_deviation_from_two_body"] = max(deviations)
        summary["basis_size"] = config.size
    else:
        if system.nucleus_count != 2 or system.electron_count != 1:
            raise ValidationError("MOLECULAR scan needs a one-electron diatomic")
        if r_grid is None:
            r_grid = np.arange(0.5, 10.0001, 0.05)
        curve = potential_curve(system, r_grid)
        mu1 = 1.0 / sum(1.0 / m for m in system.nuclear_masses)
        spacings = []
        for lam in lams:
            if math.isinf(lam):
                status = build_internal_hamiltonian(
                    system.with_scaled_nuclear_masses(INFINITE)
                ).status
                rows.append(("INFINITE", math.nan, math.nan, math.nan, status))
                continue
            scaled = [lam * m for m in system.nuclear_masses]
            rescaled = finite_mass_rescale(curve, scaled)
            levels = solve_radial(rescaled, lam * mu1, 0, 2, n_points)
            if len(levels) < 2:
                raise ConvergenceError(f"fewer than two bound levels at scale {lam}")
            e0, e1 = levels[0].energy, levels[1].energy
            spacings.append(e1 - e0)
            rows.append((lam, e0, e1, e1 - e0, STATUS_OK))
        slope = float(np.polyfit(np.log(finite), np.log(spacings), 1)[0])
        summary["spacing_exponent"] = slope
        summary["V0"] = curve.V0
        summary["last_gap_to_V0"] = rows[len(finite) - 1][1] - curve.V0

    table = Table("scan", ("lambda", "E0", "E1", "spacing", "status"), tuple(rows))
    config_echo = {
        "mode": mode,
        "lambdas": lams,
        "system": {
            "nuclei": [[p.mass, p.charge] for p in system.nuclei],
            "electrons": system.electron_count,
        },
    }
    if mode == ATOMIC:
        cfg = basis_config or BasisConfig(size=16, refine_sweeps=40)
        config_echo["basis"] = {"size": cfg.size, "seed": cfg.seed}
    else:
        config_echo["n_points"] = n_points
    return ExperimentReport(
        experiment="massscan",
        config=config_echo,
        version=__version__,
        wall_time=time.perf_counter() - t0,
        tables=(table,),
        summary=summary,
    )
