"""Command-line experiment runner.

Every experiment reads one flat ``key = value`` config file, runs a single
pipeline out of the library, and writes two artifacts into the output
directory: ``results.csv`` (17 significant digits, header row mandatory) and
``manifest.json`` echoing every resolved input so the run can be reproduced
from the manifest alone.  Identical config and seed give a byte-identical
CSV; the requested thread count is recorded but never allowed to influence
numbers, which is enforced by pinning the linear-algebra pools to one thread
before the numeric stack loads.

Exit codes: 0 success, 2 invalid config, 3 solver non-convergence, 4 I/O
failure.

Only the standard library is imported at module level; the numeric modules
load lazily inside the runners so the thread pinning in main() can happen
first.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

EXPERIMENT_NAMES = (
    "curve",
    "levels",
    "coupled",
    "nonadiabatic",
    "massscan",
    "weyl",
    "collapse",
    "kato",
    "cover",
)

_COMMON_KEYS = {"experiment", "system", "nucleus", "electrons", "seed", "out", "threads"}

_EXPERIMENT_KEYS = {
    "curve": {"r_min", "r_max", "r_step", "states"},
    "levels": {"r_min", "r_max", "r_step", "states", "n_levels", "j"},
    "coupled": {"r_min", "r_max", "r_step", "states", "n_levels", "channels"},
    "nonadiabatic": {"size", "candidates", "refine_sweeps", "probe_mode"},
    "massscan": {"lambdas", "mode", "size", "refine_sweeps", "r_min", "r_max", "r_step"},
    "weyl": {"r_min", "r_max", "r_step", "states", "b", "state", "sigmas"},
    "collapse": {
        "r_min", "r_max", "r_step", "states", "b", "mode",
        "sigma_min", "sigma_max", "sigma_count",
    },
    "kato": {"width_max", "width_min", "width_count", "center", "spectator_width", "shrink"},
    "cover": {"r_min", "r_max", "r_step", "states", "energy"},
}


# ---------------------------------------------------------------- config ---

def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines with ``#`` comments.

    ``nucleus`` may repeat (one line per nucleus) and collects into a list;
    any other repeated key is an error.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key == "nucleus":
            out.setdefault("nucleus", []).append(value)
        elif key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        else:
            out[key] = value
    return out


class ConfigError(Exception):
    """Raised while reading or coercing a config; maps to exit code 2."""


def _float_token(value: str, key: str) -> float:
    if value.upper() == "INFINITE":
        return math.inf
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {value!r}") from None


def _get_float(cfg: dict, key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing {key!r} key")
        return default
    return _float_token(cfg[key], key)


def _get_int(cfg: dict, key: str, default=None) -> int:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing {key!r} key")
        return default
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {cfg[key]!r}") from None


def _get_floats(cfg: dict, key: str) -> list:
    if key not in cfg:
        raise ConfigError(f"missing {key!r} key")
    items = [p.strip() for p in cfg[key].split(",") if p.strip()]
    if not items:
        raise ConfigError(f"key {key!r}: empty list")
    return [_float_token(p, key) for p in items]


def _get_bool(cfg: dict, key: str, default: bool) -> bool:
    if key not in cfg:
        return default
    value = cfg[key].lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: expected true/false, got {cfg[key]!r}")


def _load_system(cfg: dict, base_dir: Path):
    from .systems import parse_system, read_system

    if "system" in cfg:
        path = base_dir / cfg["system"]
        if not path.is_file():
            raise ConfigError(f"system file not found: {path}")
        return read_system(path)
    lines = [f"nucleus = {n}" for n in cfg.get("nucleus", [])]
    if "electrons" in cfg:
        lines.append(f"electrons = {cfg['electrons']}")
    return parse_system("\n".join(lines))


def _system_echo(system) -> dict:
    return {
        "nuclei": [[p.mass, p.charge] for p in system.nuclei],
        "electrons": system.electron_count,
    }


def _grid(cfg: dict):
    import numpy as np

    lo = _get_float(cfg, "r_min", 0.5)
    hi = _get_float(cfg, "r_max", 10.0)
    step = _get_float(cfg, "r_step", 0.05)
    if not (0.0 < lo < hi) or step <= 0.0:
        raise ConfigError("grid keys must satisfy 0 < r_min < r_max and r_step > 0")
    return np.arange(lo, hi + 0.5 * step, step), {"r_min": lo, "r_max": hi, "r_step": step}


def _reduced_nuclear_mass(system) -> float:
    masses = system.nuclear_masses
    if len(masses) != 2:
        raise ConfigError("this experiment needs a diatomic system")
    return 1.0 / sum(1.0 / m for m in masses)


# ------------------------------------------------------------ experiments ---

def _run_curve(cfg, system, seed):
    from .reports import Table
    from .twocenter import potential_curve

    grid, grid_echo = _grid(cfg)
    n_states = _get_int(cfg, "states", 2)
    curve = potential_curve(system, grid, n_states)
    header = ("r",) + tuple(f"E{k}" for k in range(n_states))
    rows = [
        (r,) + tuple(curve.energies[k, j] for k in range(n_states))
        for j, r in enumerate(curve.r_grid)
    ]
    summary = {
        "V0": curve.V0,
        "r_min": curve.r_min,
        "dissociation_limit": curve.dissociation_limit(),
    }
    return [Table("curve", header, rows)], summary, {**grid_echo, "states": n_states}


def _run_levels(cfg, system, seed):
    from .radial import solve_radial
    from .reports import Table
    from .twocenter import potential_curve

    grid, grid_echo = _grid(cfg)
    n_states = _get_int(cfg, "states", 2)
    n_levels = _get_int(cfg, "n_levels", 2)
    j = _get_int(cfg, "j", 0)
    mu = _reduced_nuclear_mass(system)
    curve = potential_curve(system, grid, n_states)
    levels = solve_radial(curve, mu, j, n_levels)
    rows = [(lv.v, lv.energy) for lv in levels]
    summary = {"V0": curve.V0, "r_min": curve.r_min, "mu": mu, "J": j}
    if len(levels) > 1:
        summary["omega"] = levels[1].energy - levels[0].energy
    echo = {**grid_echo, "states": n_states, "n_levels": n_levels, "j": j}
    return [Table("levels", ("v", "energy"), rows)], summary, echo


def _run_coupled(cfg, system, seed):
    from .couplings import coupling_matrix, solve_coupled
    from .reports import Table
    from .twocenter import potential_curve

    grid, grid_echo = _grid(cfg)
    n_states = _get_int(cfg, "states", 2)
    n_levels = _get_int(cfg, "n_levels", 1)
    channels = tuple(
        int(c) for c in _get_floats({"channels": cfg.get("channels", "0,1")}, "channels")
    )
    if max(channels) >= n_states:
        raise ConfigError("channel index exceeds the computed state count")
    mu = _reduced_nuclear_mass(system)
    curve = potential_curve(system, grid, n_states)
    couplings = coupling_matrix(system, grid, n_states)
    solution = solve_coupled(curve, couplings, mu, channels, n_levels)
    rows = [(k, e) for k, e in enumerate(solution.energies)]
    weights = solution.channel_weights[0] if len(solution.energies) else []
    summary = {
        "channels": list(channels),
        "mu": mu,
        "ground_weights": [float(w) for w in weights],
    }
    echo = {
        **grid_echo,
        "states": n_states,
        "n_levels": n_levels,
        "channels": ",".join(str(c) for c in channels),
    }
    return [Table("coupled", ("level", "energy"), rows)], summary, echo


def _run_nonadiabatic(cfg, system, seed):
    from .reports import Table
    from .threebody import BasisConfig, build_internal_hamiltonian, solve_variational

    config = BasisConfig(
        size=_get_int(cfg, "size", 200),
        seed=seed,
        candidates=_get_int(cfg, "candidates", 64),
        refine_sweeps=_get_int(cfg, "refine_sweeps", 48),
        probe_mode=_get_bool(cfg, "probe_mode", False),
    )
    descriptor = build_internal_hamiltonian(system)
    result = solve_variational(descriptor, config)
    rows = [(k, e) for k, e in enumerate(result.convergence_history)]
    summary = {
        "energy": result.energy,
        "virial_ratio": result.virial_ratio,
        "threshold": result.threshold,
        "bound": result.bound_flag,
        "status": descriptor.status,
        "basis_size": config.size,
    }
    echo = {
        "size": config.size,
        "candidates": config.candidates,
        "refine_sweeps": config.refine_sweeps,
        "probe_mode": config.probe_mode,
    }
    return [Table("history", ("step", "energy"), rows)], summary, echo


def _run_massscan(cfg, system, seed):
    from .threebody import ATOMIC, BasisConfig, mass_scan

    lambdas = _get_floats(cfg, "lambdas")
    mode = cfg.get("mode")
    echo = {"lambdas": cfg["lambdas"], "mode": mode}
    basis_config = None
    if "size" in cfg or "refine_sweeps" in cfg:
        basis_config = BasisConfig(
            size=_get_int(cfg, "size", 16),
            seed=seed,
            refine_sweeps=_get_int(cfg, "refine_sweeps", 40),
        )
        echo["size"] = basis_config.size
        echo["refine_sweeps"] = basis_config.refine_sweeps
    r_grid = None
    if mode != ATOMIC:
        r_grid, grid_echo = _grid(cfg)
        echo.update(grid_echo)
    report = mass_scan(system, lambdas, mode, basis_config, r_grid)
    return list(report.tables), dict(report.summary), echo


def _run_weyl(cfg, system, seed):
    from .probes import weyl_moments
    from .twocenter import potential_curve

    grid, grid_echo = _grid(cfg)
    n_states = _get_int(cfg, "states", 2)
    state = _get_int(cfg, "state", 0)
    curve = potential_curve(system, grid, n_states)
    b = _get_float(cfg, "b", None) if "b" in cfg else curve.r_min
    sigmas = _get_floats(cfg, "sigmas") if "sigmas" in cfg else None
    probe = weyl_moments(curve, b, state, sigmas)
    summary = {
        "b": b,
        "state": state,
        "fitted_variance_exponent": probe.fitted_variance_exponent,
        "mean_limit": probe.mean_limit(),
        "V0": curve.V0,
        "r_min": curve.r_min,
    }
    echo = {**grid_echo, "states": n_states, "state": state, "b": b}
    if sigmas is not None:
        echo["sigmas"] = cfg["sigmas"]
    return [probe.table()], summary, echo


def _run_collapse(cfg, system, seed):
    import numpy as np

    from .probes import FULL_INTERNAL, H_ELEC, collapse_probe
    from .threebody import build_internal_hamiltonian
    from .twocenter import potential_curve

    grid, grid_echo = _grid(cfg)
    n_states = _get_int(cfg, "states", 2)
    mode = cfg.get("mode")
    if mode not in (H_ELEC, FULL_INTERNAL):
        raise ConfigError(f"mode must be {H_ELEC} or {FULL_INTERNAL}")
    lo = _get_float(cfg, "sigma_min", 1e-3)
    hi = _get_float(cfg, "sigma_max", 1.0)
    count = _get_int(cfg, "sigma_count", 25)
    if not (0.0 < lo < hi):
        raise ConfigError("sigma keys must satisfy 0 < sigma_min < sigma_max")
    curve = potential_curve(system, grid, n_states)
    b = _get_float(cfg, "b", None) if "b" in cfg else curve.r_min
    descriptor = build_internal_hamiltonian(system)
    trace = collapse_probe(descriptor, curve, b, np.geomspace(lo, hi, count), mode)
    summary = {
        "mode": mode,
        "b": b,
        "interior_minimum_found": trace.interior_minimum_found,
        "V0": curve.V0,
        "status": descriptor.status,
    }
    echo = {
        **grid_echo,
        "states": n_states,
        "mode": mode,
        "b": b,
        "sigma_min": lo,
        "sigma_max": hi,
        "sigma_count": count,
    }
    return [trace.table()], summary, echo


def _run_kato(cfg, system, seed):
    import numpy as np

    from .probes import GaussianTrialFamily, kato_ratio_probe
    from .threebody import build_internal_hamiltonian

    w_hi = _get_float(cfg, "width_max", 0.5)
    w_lo = _get_float(cfg, "width_min", 0.05)
    count = _get_int(cfg, "width_count", 13)
    if not (0.0 < w_lo < w_hi):
        raise ConfigError("width keys must satisfy 0 < width_min < width_max")
    center_raw = cfg.get("center", "TIED")
    center = None if center_raw.upper() == "TIED" else _float_token(center_raw, "center")
    family = GaussianTrialFamily(
        shrink_index=_get_int(cfg, "shrink", 0),
        widths=tuple(np.geomspace(w_hi, w_lo, count)),
        center=center,
        spectator_width=_get_float(cfg, "spectator_width", 1.0),
    )
    probe = kato_ratio_probe(build_internal_hamiltonian(system), family)
    summary = {
        "tail_spread": probe.tail_spread,
        "tail_growth": probe.tail_growth,
        "divergent": probe.divergent,
    }
    echo = {
        "width_max": w_hi,
        "width_min": w_lo,
        "width_count": count,
        "center": center_raw,
        "spectator_width": family.spectator_width,
        "shrink": family.shrink_index,
    }
    return [probe.table()], summary, echo


def _run_cover(cfg, system, seed):
    from .probes import spectrum_cover
    from .reports import Table
    from .twocenter import potential_curve

    grid, grid_echo = _grid(cfg)
    n_states = _get_int(cfg, "states", 2)
    energy = _get_float(cfg, "energy")
    curve = potential_curve(system, grid, n_states)
    roots = spectrum_cover(curve, energy)
    rows = [(k, r) for k, r in enumerate(roots)]
    summary = {
        "energy": energy,
        "count": len(roots),
        "V0": curve.V0,
        "r_min": curve.r_min,
    }
    echo = {**grid_echo, "states": n_states, "energy": energy}
    return [Table("cover", ("index", "root"), rows)], summary, echo


_RUNNERS = {
    "curve": _run_curve,
    "levels": _run_levels,
    "coupled": _run_coupled,
    "nonadiabatic": _run_nonadiabatic,
    "massscan": _run_massscan,
    "weyl": _run_weyl,
    "collapse": _run_collapse,
    "kato": _run_kato,
    "cover": _run_cover,
}


# -------------------------------------------------------------- validation ---

def validate(config_path) -> list:
    """Full schema check without running anything heavy.

    Returns a list of diagnostic strings; empty means the config is runnable.
    An unreadable file yields a single fatal diagnostic.
    """
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        return [f"cannot read config: {err}"]
    try:
        cfg = parse_config(text)
    except ConfigError as err:
        return [str(err)]

    diagnostics = []
    name = cfg.get("experiment")
    if name is None:
        diagnostics.append("missing 'experiment' key")
    elif name not in EXPERIMENT_NAMES:
        allowed = ", ".join(sorted(EXPERIMENT_NAMES))
        diagnostics.append(f"unknown experiment {name!r}; allowed: {allowed}")

    known = _COMMON_KEYS | _EXPERIMENT_KEYS.get(name, set())
    for key in cfg:
        if key not in known:
            diagnostics.append(f"unknown key {key!r} for experiment {name!r}")

    if "system" in cfg:
        system_path = path.parent / cfg["system"]
        if not system_path.is_file():
            diagnostics.append(f"system file not found: {system_path}")
    elif "electrons" not in cfg:
        diagnostics.append("missing 'electrons' key")

    if "seed" in cfg:
        try:
            if int(cfg["seed"]) < 0:
                diagnostics.append("seed must be a nonnegative integer")
        except ValueError:
            diagnostics.append("seed must be a nonnegative integer")

    for key in ("r_min", "r_max", "r_step", "b", "energy", "sigma_min", "sigma_max",
                "width_min", "width_max", "spectator_width"):
        if key in cfg:
            try:
                _float_token(cfg[key], key)
            except ConfigError as err:
                diagnostics.append(str(err))

    if name == "weyl" and "sigmas" in cfg:
        try:
            sigmas = _get_floats(cfg, "sigmas")
            if any(a <= b for a, b in zip(sigmas, sigmas[1:])):
                diagnostics.append("sigmaList must be descending")
        except ConfigError as err:
            diagnostics.append(str(err))

    if name == "massscan":
        if "lambdas" not in cfg:
            diagnostics.append("missing 'lambdas' key")
        if cfg.get("mode") not in ("ATOMIC", "MOLECULAR"):
            diagnostics.append("mode must be ATOMIC or MOLECULAR")

    if name == "collapse" and cfg.get("mode") not in ("H_ELEC", "FULL_INTERNAL"):
        diagnostics.append("mode must be H_ELEC or FULL_INTERNAL")

    if name == "cover" and "energy" not in cfg:
        diagnostics.append("missing 'energy' key")

    return diagnostics


# -------------------------------------------------------------------- run ---

def run(config_path, seed=None, out=None, threads=None) -> int:
    """Execute one experiment config; returns the process exit code."""
    from .errors import ConvergenceError, ValidationError

    diagnostics = validate(config_path)
    if diagnostics:
        for d in diagnostics:
            print(d, file=sys.stderr)
        return 2

    path = Path(config_path)
    cfg = parse_config(path.read_text(encoding="utf-8"))
    name = cfg["experiment"]
    run_seed = seed if seed is not None else _get_int(cfg, "seed", 0)
    thread_count = threads if threads is not None else _get_int(cfg, "threads", 1)
    out_dir = Path(out or cfg.get("out") or os.environ.get("LAB_OUT") or ".")

    try:
        system = _load_system(cfg, path.parent)
        start = time.perf_counter()
        tables, summary, echo = _RUNNERS[name](cfg, system, run_seed)
        wall = time.perf_counter() - start
    except (ConfigError, ValidationError) as err:
        print(f"invalid config: {err}", file=sys.stderr)
        return 2
    except ConvergenceError as err:
        print(f"solver did not converge: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return 4

    from . import __version__
    from .reports import ExperimentReport

    resolved = {
        "experiment": name,
        "seed": run_seed,
        "threads": thread_count,
        "system": _system_echo(system),
        **echo,
    }
    report = ExperimentReport(
        name, resolved, __version__, wall, tuple(tables), summary
    )

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for k, table in enumerate(report.tables):
            target = out_dir / ("results.csv" if k == 0 else f"{table.name}.csv")
            target.write_text("\n".join(table.csv_lines()) + "\n", encoding="utf-8")
        manifest = report.manifest()
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return 4

    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0


# -------------------------------------------------------------------- main ---

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lab", description="Run or validate a molecular-lab experiment config."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ("run", "validate"):
        p = sub.add_parser(command)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None) -> int:
    # Pin the BLAS pools before numpy loads anywhere in this process so the
    # recorded thread count cannot leak into the numerics.
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, "1")

    args = _build_parser().parse_args(argv)
    if args.command == "validate":
        diagnostics = validate(args.config)
        for d in diagnostics:
            print(d, file=sys.stderr)
        return 0 if not diagnostics else 2
    return run(args.config, args.seed, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
