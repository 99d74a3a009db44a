"""Shared fixtures: expensive pipeline artifacts are computed once per session."""

import numpy as np
import pytest

from coulomblab.systems import INFINITE, hydrogen_molecular_ion
from coulomblab.twocenter import potential_curve


@pytest.fixture(scope="session")
def h2p():
    return hydrogen_molecular_ion()


@pytest.fixture(scope="session")
def h2p_curve(h2p):
    """Ground and first excited total-energy curves on the standard scan grid."""
    return potential_curve(h2p, np.arange(0.5, 10.0001, 0.05), n_states=2)


@pytest.fixture(scope="session")
def h2p_fine_curve(h2p):
    """Wider, denser ground-state curve for nuclear-motion and probe work."""
    grid = np.concatenate(
        [np.arange(0.3, 0.5, 0.05), np.arange(0.5, 12.0001, 0.025)]
    )
    return potential_curve(h2p, grid, n_states=3)


@pytest.fixture(scope="session")
def h2p_curve3(h2p):
    """Three-state curve on the standard scan grid, matching h2p_couplings."""
    return potential_curve(h2p, np.arange(0.5, 10.0001, 0.05), n_states=3)


@pytest.fixture(scope="session")
def h2p_couplings(h2p):
    from coulomblab.couplings import coupling_matrix

    return coupling_matrix(h2p, np.arange(0.5, 10.0001, 0.05), n_states=3)


@pytest.fixture(scope="session")
def oracle_r2_ground():
    from prolate import reference_energy

    return reference_energy(2.0, 1.0, 1.0, xi_nodes=0, eta_nodes=0)


@pytest.fixture(scope="session")
def h2p_nonadiabatic(h2p):
    """Full nonadiabatic ground state at the production basis size.

    Returns (result, wall seconds); the timing feeds the acceptance gate.
    """
    import time

    from coulomblab.threebody import BasisConfig, build_internal_hamiltonian, solve_variational

    descriptor = build_internal_hamiltonian(h2p)
    start = time.perf_counter()
    result = solve_variational(descriptor, BasisConfig(size=200, seed=42))
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def h2p_molecular_scan(h2p):
    from coulomblab.threebody import MOLECULAR, mass_scan

    return mass_scan(h2p, [1.0, 4.0, 16.0, 64.0, INFINITE], MOLECULAR)
