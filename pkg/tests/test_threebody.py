"""Nonadiabatic variational solver: oracles, invariants, and scans.

Two-body oracles are closed-form reduced-mass hydrogen energies, so they are
independent of every numerical path in the package.  The three-body run is
checked against bounds that the package computes through entirely different
machinery (clamped curve plus nuclear grids) and against a frozen converged
literature value for the (p, p, e) ground state.
"""

import json
import math

import numpy as np
import pytest

from coulomblab.couplings import adiabatic_solve
from coulomblab.errors import ConvergenceError, ValidationError
from coulomblab.operators import STATUS_OK, STATUS_RISK
from coulomblab.radial import solve_radial
from coulomblab.systems import (
    INFINITE,
    PROTON_MASS,
    build_system,
    hydrogen_atom,
    hydrogen_molecular_ion,
)
from coulomblab.threebody import (
    ATOMIC,
    MOLECULAR,
    BasisConfig,
    CorrelatedGaussianBasis,
    build_internal_hamiltonian,
    mass_scan,
    solve_variational,
    virial_ratio,
)

MU_H2P = 918.076336

# Converged three-body ground energy for (p, p, e) at proton mass 1836.15267.
REFERENCE_GROUND = -0.5971390631


def two_body_energy(nuclear_mass: float, charge: float = 1.0) -> float:
    """Closed-form ground energy of (electron, nucleus): -Z^2 mu / 2."""
    mu = 1.0 if math.isinf(nuclear_mass) else 1.0 / (1.0 + 1.0 / nuclear_mass)
    return -0.5 * charge * charge * mu


class TestInternalHamiltonian:
    def test_homonuclear_offsets(self):
        d = build_internal_hamiltonian(hydrogen_molecular_ion())
        rows = [t.point_b.coefficients[0] for t in d.coulomb_terms[:2]]
        assert rows == [0.5, -0.5]
        assert d.status == STATUS_OK

    def test_kinetic_coefficients(self):
        d = build_internal_hamiltonian(hydrogen_molecular_ion())
        K = d.kinetic_matrix
        assert K[0, 0] == pytest.approx(2.0 / PROTON_MASS, rel=1e-14)
        assert K[1, 1] == pytest.approx(1.0 + 0.5 / PROTON_MASS, rel=1e-14)
        assert K[0, 1] == 0.0

    def test_heteronuclear_mass_ratio_offset(self):
        system = build_system([(PROTON_MASS, 1.0), (2.0 * PROTON_MASS, 1.0)], 1)
        d = build_internal_hamiltonian(system)
        alpha1 = d.coulomb_terms[0].point_b.coefficients[0]
        alpha2 = d.coulomb_terms[1].point_b.coefficients[0]
        assert alpha1 == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert alpha2 == pytest.approx(-1.0 / 3.0, abs=1e-12)

    def test_infinite_masses_flagged(self):
        frozen = hydrogen_molecular_ion().with_scaled_nuclear_masses(INFINITE)
        d = build_internal_hamiltonian(frozen)
        assert d.kinetic_matrix[0, 0] == 0.0
        assert d.status == STATUS_RISK

    def test_single_infinite_mass_keeps_kinetic(self):
        system = hydrogen_molecular_ion().with_scaled_nuclear_masses(
            INFINITE, which=[0]
        )
        d = build_internal_hamiltonian(system)
        assert d.kinetic_matrix[0, 0] == pytest.approx(1.0 / PROTON_MASS)
        assert d.status == STATUS_OK
        # the infinite nucleus carries the nuclear center of mass
        assert d.coulomb_terms[0].point_b.coefficients[0] == 0.0

    def test_one_nucleus_system(self):
        d = build_internal_hamiltonian(hydrogen_atom())
        assert d.coordinate_count == 1
        assert d.kinetic_matrix[0, 0] == pytest.approx(1.0 + 1.0 / PROTON_MASS)

    def test_rejects_many_electrons(self):
        with pytest.raises(ValidationError):
            build_internal_hamiltonian(build_system([(PROTON_MASS, 1.0)], 2))

    def test_rejects_three_nuclei(self):
        spec = [(PROTON_MASS, 1.0)] * 3
        with pytest.raises(ValidationError):
            build_internal_hamiltonian(build_system(spec, 1))

    def test_matches_center_of_mass_separation(self, h2p):
        """The direct frame agrees with the generic lab-frame reduction.

        Both paths place the electron relative to the nuclear center of mass;
        they differ only in the orientation of the internuclear vector, which
        no matrix element can see.  An eight-term basis evaluated through the
        two descriptors must give the same energy to machine precision.
        """
        from coulomblab.operators import lab_hamiltonian, separate_center_of_mass

        direct = build_internal_hamiltonian(h2p)
        _, separated, _ = separate_center_of_mass(lab_hamiltonian(h2p), h2p)
        terms = tuple(
            (a, b, c)
            for (a, b) in [(0.2, 0.2), (1.1, 0.4), (4.0, 0.3), (0.9, 0.9)]
            for c in [3.0, 8.0]
        )
        basis = CorrelatedGaussianBasis(terms, seed=0)
        cfg = BasisConfig(size=len(terms), seed=0, refine_sweeps=0)
        e1 = solve_variational(direct, cfg, warm_start=basis).energy
        e2 = solve_variational(separated, cfg, warm_start=basis).energy
        assert e1 == pytest.approx(e2, abs=1e-12)


class TestBasisTypes:
    def test_duplicate_triples_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            CorrelatedGaussianBasis(((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)), seed=0)

    def test_near_duplicate_rejected(self):
        t = (1.0, 2.0, 3.0)
        shifted = tuple(x * (1.0 + 1e-14) for x in t)
        with pytest.raises(ValidationError, match="duplicate"):
            CorrelatedGaussianBasis((t, shifted), seed=0)

    def test_indefinite_triple_rejected(self):
        with pytest.raises(ValidationError):
            CorrelatedGaussianBasis(((1.0, -2.0, 3.0),), seed=0)

    def test_mixed_families_rejected(self):
        with pytest.raises(ValidationError):
            CorrelatedGaussianBasis(((1.0, 0.0, 0.0), (1.0, 2.0, 3.0)), seed=0)

    def test_json_round_trip(self):
        basis = CorrelatedGaussianBasis(((0.5, 1.5, 2.5), (2.0, 0.3, 7.0)), seed=9)
        again = CorrelatedGaussianBasis.from_json(basis.to_json())
        assert again == basis
        assert again.size == 2

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            BasisConfig(size=0)
        with pytest.raises(ValidationError):
            BasisConfig(electronic_range=(1.0, 0.5))
        with pytest.raises(ValidationError):
            BasisConfig(refine_sweeps=-1)


class TestTwoBody:
    def test_hydrogen_reduced_mass_level(self):
        d = build_internal_hamiltonian(hydrogen_atom())
        res = solve_variational(d, BasisConfig(size=16, seed=42, refine_sweeps=40))
        assert res.energy == pytest.approx(two_body_energy(PROTON_MASS), abs=1e-5)
        assert res.energy >= two_body_energy(PROTON_MASS)  # variational bound

    def test_positronium(self):
        d = build_internal_hamiltonian(hydrogen_atom(mass=1.0))
        res = solve_variational(d, BasisConfig(size=16, seed=7, refine_sweeps=40))
        assert res.energy == pytest.approx(-0.25, abs=1e-5)

    def test_hydrogen_virial(self):
        d = build_internal_hamiltonian(hydrogen_atom())
        res = solve_variational(d, BasisConfig(size=16, seed=42, refine_sweeps=40))
        assert virial_ratio(res) == pytest.approx(-2.0, abs=1e-3)
        assert res.bound_flag
        assert res.threshold == 0.0

    def test_result_json_round_trip(self):
        d = build_internal_hamiltonian(hydrogen_atom())
        res = solve_variational(d, BasisConfig(size=6, seed=3, refine_sweeps=4))
        from coulomblab.threebody import VariationalResult

        again = VariationalResult.from_json(res.to_json())
        assert again.energy == res.energy
        assert again.basis == res.basis
        assert again.coefficients == res.coefficients


class TestVariationalProperties:
    def test_seeded_determinism(self, h2p):
        d = build_internal_hamiltonian(h2p)
        cfg = BasisConfig(size=24, seed=11, refine_sweeps=6)
        one = solve_variational(d, cfg)
        two = solve_variational(d, cfg)
        assert one.energy == two.energy
        assert one.coefficients == two.coefficients
        assert one.basis.terms == two.basis.terms
        assert one.convergence_history == two.convergence_history

    def test_history_monotone(self, h2p):
        d = build_internal_hamiltonian(h2p)
        res = solve_variational(d, BasisConfig(size=30, seed=5, refine_sweeps=8))
        h = np.array(res.convergence_history)
        assert (np.diff(h) <= 1e-12).all()

    def test_exchange_swap_invariance(self, h2p):
        """Swapping every (a, b) pair leaves the gerade energy unchanged."""
        d = build_internal_hamiltonian(h2p)
        cfg = BasisConfig(size=20, seed=13, refine_sweeps=4)
        res = solve_variational(d, cfg)
        swapped = CorrelatedGaussianBasis(
            tuple((b, a, c) for a, b, c in res.basis.terms), seed=13
        )
        eval_cfg = BasisConfig(size=20, seed=13, refine_sweeps=0)
        again = solve_variational(d, eval_cfg, warm_start=swapped)
        assert abs(again.energy - res.energy) < 1e-10

    def test_warm_start_evaluates_exactly(self, h2p):
        d = build_internal_hamiltonian(h2p)
        cfg = BasisConfig(size=15, seed=21, refine_sweeps=0)
        res = solve_variational(d, cfg)
        again = solve_variational(d, cfg, warm_start=res.basis)
        assert again.energy == res.energy

    def test_warm_start_too_large(self, h2p):
        d = build_internal_hamiltonian(h2p)
        basis = CorrelatedGaussianBasis(((1.0, 1.0, 1.0), (2.0, 1.0, 1.0)), seed=0)
        with pytest.raises(ValidationError, match="warm start"):
            solve_variational(d, BasisConfig(size=1, seed=0), warm_start=basis)

    def test_risk_descriptor_rejected_without_probe_mode(self, h2p):
        frozen = build_internal_hamiltonian(
            h2p.with_scaled_nuclear_masses(INFINITE)
        )
        with pytest.raises(ValidationError, match="NON_SELF_ADJOINT_RISK"):
            solve_variational(frozen, BasisConfig(size=10, seed=1))

    def test_probe_mode_descends_toward_curve_minimum(self, h2p):
        """With no nuclear kinetic term the energy sinks toward the curve
        minimum V0 = -0.6026 instead of settling at the physical level."""
        frozen = build_internal_hamiltonian(
            h2p.with_scaled_nuclear_masses(INFINITE)
        )
        cfg = BasisConfig(size=40, seed=2, refine_sweeps=12, probe_mode=True)
        res = solve_variational(frozen, cfg)
        assert res.energy < REFERENCE_GROUND - 1e-3
        assert res.energy > -0.6027
        h = np.array(res.convergence_history)
        assert (np.diff(h) <= 1e-12).all()

    def test_grown_basis_respects_ranges(self, h2p):
        d = build_internal_hamiltonian(h2p)
        cfg = BasisConfig(size=25, seed=3, refine_sweeps=0)
        res = solve_variational(d, cfg)
        t = np.array(res.basis.terms)
        lo_e, hi_e = cfg.electronic_range
        lo_n, hi_n = cfg.internuclear_range
        assert ((t[:, 0] >= lo_e) & (t[:, 0] <= hi_e)).all()
        assert ((t[:, 1] >= lo_e) & (t[:, 1] <= hi_e)).all()
        assert ((t[:, 2] >= lo_n) & (t[:, 2] <= hi_n)).all()


class TestNonadiabaticBounds:
    def test_sandwich(self, h2p_nonadiabatic, h2p_curve3, h2p_couplings):
        """The full solution sits between the clamped-curve level and the
        diagonally corrected one, and lands on the reference value."""
        result, _ = h2p_nonadiabatic
        bo = solve_radial(h2p_curve3, MU_H2P)[0].energy
        adiabatic = adiabatic_solve(h2p_curve3, h2p_couplings, MU_H2P)[0].energy
        assert bo <= result.energy <= adiabatic
        assert result.energy == pytest.approx(-0.5971, abs=5e-4)
        assert result.energy >= REFERENCE_GROUND - 1e-9  # variational floor

    def test_h2p_virial(self, h2p_nonadiabatic):
        result, _ = h2p_nonadiabatic
        assert virial_ratio(result) == pytest.approx(-2.0, abs=5e-3)
        assert result.bound_flag
        assert result.threshold == pytest.approx(
            two_body_energy(2.0 * PROTON_MASS), rel=1e-12
        )

    def test_smaller_basis_is_cruder(self, h2p, h2p_nonadiabatic):
        result, _ = h2p_nonadiabatic
        d = build_internal_hamiltonian(h2p)
        small = solve_variational(d, BasisConfig(size=50, seed=42))
        assert small.energy > result.energy
        assert abs(virial_ratio(small) + 2.0) > abs(virial_ratio(result) + 2.0)

    def test_history_monotone_at_scale(self, h2p_nonadiabatic):
        result, _ = h2p_nonadiabatic
        h = np.array(result.convergence_history)
        assert (np.diff(h) <= 1e-12).all()


class TestMassScan:
    def test_validations(self, h2p):
        hyd = hydrogen_atom()
        with pytest.raises(ValidationError, match="mode"):
            mass_scan(hyd, [1, 2, 4], "RADIAL")
        with pytest.raises(ValidationError, match="three"):
            mass_scan(hyd, [1, 2], ATOMIC)
        with pytest.raises(ValidationError, match="ascending"):
            mass_scan(hyd, [4, 2, 1], ATOMIC)
        with pytest.raises(ValidationError, match="INFINITE"):
            mass_scan(hyd, [1, INFINITE, 2, 4], ATOMIC)
        with pytest.raises(ValidationError, match="one nucleus"):
            mass_scan(h2p, [1, 2, 4], ATOMIC)
        with pytest.raises(ValidationError, match="diatomic"):
            mass_scan(hyd, [1, 2, 4], MOLECULAR)

    def test_atomic_scan_tracks_reduced_mass(self):
        report = mass_scan(
            hydrogen_atom(),
            [1.0, 4.0, 16.0, INFINITE],
            ATOMIC,
            basis_config=BasisConfig(size=12, seed=4, refine_sweeps=24),
        )
        assert report.summary["max_deviation_from_two_body"] < 1e-5
        table = report.table("scan")
        assert table.header == ("lambda", "E0", "E1", "spacing", "status")
        assert [r[4] for r in table.rows] == [STATUS_OK] * 4
        assert table.rows[-1][0] == "INFINITE"
        assert table.rows[-1][1] == pytest.approx(-0.5, abs=1e-5)

    def test_molecular_scan(self, h2p_molecular_scan):
        report = h2p_molecular_scan
        table = report.table("scan")
        spacings = [r[3] for r in table.rows[:-1]]
        assert all(np.diff(spacings) < 0)
        assert report.summary["spacing_exponent"] == pytest.approx(-0.5, abs=0.05)
        last = table.rows[-1]
        assert last[0] == "INFINITE"
        assert last[4] == STATUS_RISK
        assert math.isnan(last[1]) and math.isnan(last[3])

    def test_molecular_scan_ground_approaches_minimum(self, h2p_molecular_scan):
        report = h2p_molecular_scan
        table = report.table("scan")
        e0 = [r[1] for r in table.rows[:-1]]
        v0 = report.summary["V0"]
        gaps = np.array(e0) - v0
        assert (gaps > 0).all()
        assert (np.diff(gaps) < 0).all()

    def test_scan_csv_is_deterministic(self, h2p_molecular_scan):
        lines = h2p_molecular_scan.table("scan").csv_lines()
        assert lines[0] == "lambda,E0,E1,spacing,status"
        assert lines[-1].startswith("INFINITE,NAN,NAN,NAN,")
        for line in lines[1:-1]:
            assert line.endswith("OK")

    def test_manifest_round_trips_tokens(self, h2p_molecular_scan):
        manifest = h2p_molecular_scan.manifest()
        text = json.dumps(manifest)
        assert "INFINITE" in text
        assert manifest["experiment"] == "massscan"
