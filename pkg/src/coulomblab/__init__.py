"""Numerical laboratory for molecular Coulomb Hamiltonians.

Submodules are imported lazily so the command-line entry point can pin BLAS
thread counts before numpy is first loaded.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "systems",
    "operators",
    "gaussians",
    "twocenter",
    "radial",
    "couplings",
    "threebody",
    "probes",
    "cli",
    "errors",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
