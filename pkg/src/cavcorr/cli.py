"""Command-line front end: ``cavcorr <command> <config.ini> [--out-dir DIR] [--threads N]``.

The configuration is an INI file.  Frequencies are given as f/2pi in MHz and
converted to rad/us once, when the file is loaded.  See README.md for the
full schema.  Every command writes CSV (``fit`` writes JSON) into the output
directory and prints the paths it wrote.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 convergence failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import gaussian_smooth_2d
from .averaging import (
    averaged_g2,
    averaged_g3_diagonal,
    averaged_g3_full,
    load_ensemble,
    mode_function_ensemble,
    save_ensemble,
)
from .correlations import BRANCHES, PAIR_FIRST, g2, g3_diagonal, g3_full, time_grid
from .errors import CavCorrError, ConfigError, ConvergenceError
from .fitting import fit_damped_oscillation, frequency_sweep
from .operators import (
    AC_STARK_MAX_MHZ,
    REFERENCE_MHZ,
    HilbertDims,
    SystemParams,
    angular_to_mhz,
    mhz_to_angular,
    rung_splittings,
)
from .trajectory import DEFAULT_DT_NS, FIGURE_BURN_IN_NS, run_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 2, 3, 4

DEFAULT_SWEEP = (1.9, 2.7, 3.5, 3.9, 4.5)

_KNOWN_SECTIONS = {"system", "grid", "g3full", "ensemble", "trajectory", "fit", "sweep", "mode_function", "output"}


@dataclass
class RunConfig:
    """Parsed configuration; all rates already in rad/us."""

    params: SystemParams
    dims: HilbertDims
    sections: configparser.ConfigParser
    base_dir: Path
    ensemble_path: Path | None = None
    scale: float = 1.0

    def get_float(self, section, key, default=None):
        if self.sections.has_option(section, key):
            raw = self.sections.get(section, key)
            try:
                return float(raw)
            except ValueError:
                raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default

    def get_int(self, section, key, default=None):
        value = self.get_float(section, key, None if default is None else float(default))
        if value != int(value):
            raise ConfigError(f"[{section}] {key} must be an integer")
        return int(value)

    def get_list(self, section, key, default):
        if not self.sections.has_option(section, key):
            return list(default)
        raw = self.sections.get(section, key)
        try:
            return [float(v) for v in raw.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a list of numbers") from None

    def get_path(self, section, key):
        if not self.sections.has_option(section, key):
            return None
        path = Path(self.sections.get(section, key))
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f"[{section}] {key}: file {path} does not exist")
        return path

    def taus(self, section="grid", t_max=300.0, step=1.0):
        return time_grid(self.get_float(section, "t_max_ns", t_max), self.get_float(section, "step_ns", step))

    def ensemble(self):
        return load_ensemble(self.ensemble_path) if self.ensemble_path else None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {' '.join(str(exc).split())}") from None
    unknown = set(cp.sections()) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    cfg = RunConfig(None, None, cp, path.parent.resolve())

    s = "system"
    mhz = {k: cfg.get_float(s, f"{k}_over_2pi_MHz", REFERENCE_MHZ[k]) for k in ("g", "kappa", "gamma", "delta_c")}
    delta_a = cfg.get_float(s, "delta_a_over_2pi_MHz", mhz["delta_c"])
    has_mhz = cp.has_option(s, "eta_over_2pi_MHz")
    has_ratio = cp.has_option(s, "eta_over_kappa")
    if has_mhz and has_ratio:
        raise ConfigError("give either eta_over_2pi_MHz or eta_over_kappa, not both")
    eta = cfg.get_float(s, "eta_over_2pi_MHz") if has_mhz else cfg.get_float(s, "eta_over_kappa", 0.0) * mhz["kappa"]
    cfg.params = SystemParams.from_mhz(delta_a=delta_a, eta=eta, **mhz)
    cfg.dims = HilbertDims(cfg.get_int(s, "n_max", 10))
    cfg.ensemble_path = cfg.get_path("ensemble", "file")
    cfg.scale = cfg.get_float("output", "scale", 1.0)
    return cfg


# -- output helpers ---------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path: Path, header, rows, comment: str | None = None) -> Path:
    with path.open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _maybe_scaled(grid, cfg: RunConfig):
    return grid if cfg.scale == 1.0 else grid.scaled(cfg.scale)


# -- commands -----------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, out: Path, threads: int):
    levels = rung_splittings(cfg.params, cfg.dims)
    rows = []
    for n, (lo, hi) in sorted(levels.items()):
        lo_mhz, hi_mhz = angular_to_mhz(lo), angular_to_mhz(hi)
        rows.append((n, lo_mhz, hi_mhz, hi_mhz - lo_mhz))
    comment = "dressed energies of rung n in the frame of the drive, E/2pi in MHz; splitting = E_plus - E_minus"
    return [
        _write_rows(
            out / "spectrum.csv",
            ["n", "E_minus_over_2pi_MHz", "E_plus_over_2pi_MHz", "splitting_over_2pi_MHz"],
            rows,
            comment,
        )
    ]


def cmd_g2(cfg: RunConfig, out: Path, threads: int):
    taus = cfg.taus()
    ens = cfg.ensemble()
    if ens is None:
        grid = g2(cfg.params, taus, dims=cfg.dims)
    else:
        grid = averaged_g2(ens, cfg.params, taus, dims=cfg.dims, threads=threads)
    grid = _maybe_scaled(grid, cfg)
    return [_write_rows(out / "g2.csv", ["tau_ns", "value"], zip(grid.taus, grid.values))]


def cmd_g3cut(cfg: RunConfig, out: Path, threads: int):
    taus = cfg.taus()
    ens = cfg.ensemble()
    rows = []
    for branch in BRANCHES:
        if ens is None:
            grid = g3_diagonal(cfg.params, taus, branch, dims=cfg.dims)
        else:
            grid = averaged_g3_diagonal(ens, cfg.params, taus, branch, dims=cfg.dims, threads=threads)
        grid = _maybe_scaled(grid, cfg)
        pairs = list(zip(grid.taus, grid.values))
        if branch == PAIR_FIRST:
            # pair first is drawn on the negative delay axis
            pairs = [(-t if t > 0 else 0.0, v) for t, v in reversed(pairs)]
            rows = [(t, v, branch) for t, v in pairs] + rows
        else:
            rows += [(t, v, branch) for t, v in pairs]
    return [_write_rows(out / "g3cut.csv", ["tau_ns", "value", "branch"], rows)]


def cmd_g3full(cfg: RunConfig, out: Path, threads: int):
    taus = cfg.taus("g3full", 100.0, 1.0)
    ens = cfg.ensemble()
    if ens is None:
        grid = g3_full(cfg.params, taus, taus, dims=cfg.dims)
    else:
        grid = averaged_g3_full(ens, cfg.params, taus, taus, dims=cfg.dims, threads=threads)
    grid = _maybe_scaled(grid, cfg)
    fwhm = cfg.get_float("g3full", "smoothing_fwhm_ns", 0.0)
    smoothed = gaussian_smooth_2d(grid, fwhm).values if fwhm > 0 else grid.values
    t1, t2 = grid.axes
    rows = (
        (t1[i], t2[j], grid.values[i, j], smoothed[i, j]) for i in range(t1.size) for j in range(t2.size)
    )
    return [_write_rows(out / "g3full.csv", ["tau1_ns", "tau2_ns", "value", "value_smoothed"], rows)]


def cmd_trajectory(cfg: RunConfig, out: Path, threads: int):
    s = "trajectory"
    rec = run_trajectory(
        cfg.params,
        cfg.dims,
        cfg.get_float(s, "duration_ns", 1000.0),
        cfg.get_float(s, "dt_ns", DEFAULT_DT_NS),
        cfg.get_int(s, "seed", 0),
        burn_in_ns=cfg.get_float(s, "burn_in_ns", FIGURE_BURN_IN_NS),
        record_every=cfg.get_int(s, "record_every", 1),
    )
    path = out / "trajectory.csv"
    jumps = out / "trajectory_jumps.csv"
    rec.write_csv(path, jumps)
    return [path, jumps]


def _read_curve(path: Path):
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        if not {"tau_ns", "value"} <= set(reader.fieldnames or ()):
            raise ConfigError(f"{path}: need columns tau_ns and value")
        try:
            rows = [(float(r["tau_ns"]), float(r["value"])) for r in reader]
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return data[:, 0], data[:, 1]


def cmd_fit(cfg: RunConfig, out: Path, threads: int):
    s = "fit"
    src = cfg.get_path(s, "input")
    if src is not None:
        taus, values = _read_curve(src)
    else:
        taus = cfg.taus()
        ens = cfg.ensemble()
        if ens is None:
            grid = g2(cfg.params, taus, dims=cfg.dims)
        else:
            grid = averaged_g2(ens, cfg.params, taus, dims=cfg.dims, threads=threads)
        taus, values = grid.taus, grid.values
    t_max = cfg.get_float(s, "t_max_ns", math.inf)
    result = fit_damped_oscillation(
        taus,
        values,
        t_min_ns=cfg.get_float(s, "t_min_ns", 2.0),
        t_max_ns=None if math.isinf(t_max) else t_max,
    )
    path = out / "fit.json"
    path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    return [path]


def cmd_sweep(cfg: RunConfig, out: Path, threads: int):
    kappa = cfg.params.kappa
    ratios = cfg.get_list("sweep", "eta_over_kappa", DEFAULT_SWEEP)
    if not ratios:
        raise ConfigError("[sweep] eta_over_kappa is empty")
    res = frequency_sweep(
        [r * kappa for r in ratios],
        cfg.params,
        ensemble=cfg.ensemble(),
        taus_ns=cfg.taus(),
        dims=cfg.dims,
        threads=threads,
    )
    rows = []
    for ratio, row in zip(ratios, res.rows):
        rows.append(
            (
                float(ratio),
                # fit frequencies are rad/ns; MHz = rad/ns * 1e3 / 2pi
                row.omega_fit * 1e3 / (2 * math.pi),
                row.Omega_fit * 1e3 / (2 * math.pi),
                angular_to_mhz(math.sqrt(2.0) * row.eta),
                int(row.converged),
            )
        )
    header = ["eta_over_kappa", "omega_over_2pi_MHz", "Omega_over_2pi_MHz", "sqrt2_eta_over_2pi_MHz", "converged"]
    return [_write_rows(out / "sweep.csv", header, rows)]


def cmd_avg_ensemble(cfg: RunConfig, out: Path, threads: int):
    s = "mode_function"
    ens = mode_function_ensemble(
        cfg.get_int(s, "axial_samples", 9),
        cfg.get_int(s, "radial_samples", 6),
        waist_um=cfg.get_float(s, "waist_um", 29.0),
        wavelength_nm=cfg.get_float(s, "wavelength_nm", 780.0),
        radial_extent=cfg.get_float(s, "radial_extent", 1.0),
        max_detuning=mhz_to_angular(cfg.get_float(s, "max_detuning_over_2pi_MHz", AC_STARK_MAX_MHZ)),
        g0=cfg.params.g,
        delta_bare=cfg.params.delta_a,
    )
    path = out / "ensemble.csv"
    save_ensemble(ens, path)
    return [path]


COMMANDS = {
    "spectrum": cmd_spectrum,
    "g2": cmd_g2,
    "g3cut": cmd_g3cut,
    "g3full": cmd_g3full,
    "trajectory": cmd_trajectory,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "avg-ensemble": cmd_avg_ensemble,
}


HELP = {
    "spectrum": "dressed-state ladder of the undriven system",
    "g2": "second-order correlation g2(tau)",
    "g3cut": "g3 with two coincident photons, both branches",
    "g3full": "g3(tau1, tau2) surface with optional smoothing",
    "trajectory": "single quantum trajectory with jump list",
    "fit": "damped two-frequency fit of a g2 curve",
    "sweep": "fitted frequencies over a list of drive strengths",
    "avg-ensemble": "write a position ensemble from the cavity mode function",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavcorr", description="Photon correlations of a driven atom-cavity system.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("config", type=Path, help="INI configuration file")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="output directory (default: cwd)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent tasks")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg, args.out_dir, args.threads)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except ConvergenceError as exc:
        return _fail(EXIT_CONVERGENCE, exc)
    except (CavCorrError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_CONFIG, exc)
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
