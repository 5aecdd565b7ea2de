"""Averaging correlation functions over an ensemble of atomic positions.

The dynamics depends on the atom's position only through the coupling g and
the atom-laser detuning delta_a, so an ensemble is a weighted list of
(g, delta_a) pairs.  Averages combine *unnormalized* numerators and photon
numbers separately and normalize at the end::

    g2_avg(tau) = <num(tau)>_w / <n>_w**2

which is not the same as averaging normalized g2 curves.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correlations import (
    SINGLE_FIRST,
    CorrGrid,
    _as_taus,
    _check_norm,
    g2_numerator,
    g3_diagonal_numerator,
    g3_full_numerator,
    photon_number,
)
from .errors import ConfigError, EmptyGrid
from .liouvillian import solve
from .operators import AC_STARK_MAX_MHZ, REFERENCE_MHZ, HilbertDims, SystemParams, angular_to_mhz, mhz_to_angular

CSV_COLUMNS = ("g_over_2pi_MHz", "delta_a_over_2pi_MHz", "weight")


@dataclass(frozen=True)
class EnsemblePoint:
    g: float
    delta_a: float
    weight: float

    def __post_init__(self):
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ConfigError(f"ensemble weight must be finite and >= 0, got {self.weight!r}")


@dataclass(frozen=True)
class Ensemble:
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise EmptyGrid("ensemble has no points")
        if self.normalization <= 0:
            raise ConfigError("ensemble needs at least one point with positive weight")

    @property
    def normalization(self) -> float:
        return float(sum(pt.weight for pt in self.points))

    def __len__(self):
        return len(self.points)

    def active(self):
        """Points with non-zero weight, in file order."""
        return [pt for pt in self.points if pt.weight > 0]

    @classmethod
    def single(cls, g: float, delta_a: float) -> "Ensemble":
        return cls((EnsemblePoint(g, delta_a, 1.0),))


def load_ensemble(path) -> Ensemble:
    """Read ``g_over_2pi_MHz, delta_a_over_2pi_MHz, weight`` rows."""
    path = Path(path)
    points = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing ensemble columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                points.append(
                    EnsemblePoint(
                        mhz_to_angular(float(row["g_over_2pi_MHz"])),
                        mhz_to_angular(float(row["delta_a_over_2pi_MHz"])),
                        float(row["weight"]),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return Ensemble(points)


def save_ensemble(ens: Ensemble, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for pt in ens.points:
            w.writerow([repr(angular_to_mhz(pt.g)), repr(angular_to_mhz(pt.delta_a)), repr(pt.weight)])


def mode_function_ensemble(
    axial_samples: int = 9,
    radial_samples: int = 6,
    *,
    waist_um: float = 29.0,
    wavelength_nm: float = 780.0,
    radial_extent: float = 1.0,
    max_detuning: float = mhz_to_angular(AC_STARK_MAX_MHZ),
    g0: float = mhz_to_angular(REFERENCE_MHZ["g"]),
    delta_bare: float = 0.0,
) -> Ensemble:
    """Uniformly weighted positions in one antinode of a Gaussian standing wave.

    Axial positions span half a wavelength from an antinode, radial ones
    span ``[0, radial_extent * waist]`` with annulus-area weights, so the
    spatial density is uniform.  At each point::

        g       = g0 * |cos(2 pi z / lambda)| * exp(-r^2 / w^2)
        delta_a = delta_bare + max_detuning * exp(-2 r^2 / w^2)

    i.e. the AC-Stark shift follows the transverse intensity profile of the
    lock light and reaches ``max_detuning`` on the axis.
    """
    if axial_samples < 1 or radial_samples < 1:
        raise EmptyGrid("need at least one axial and one radial sample")
    if waist_um <= 0 or wavelength_nm <= 0 or radial_extent <= 0:
        raise ConfigError("geometry parameters must be positive")
    wavelength = wavelength_nm * 1e-3  # um
    z = np.linspace(0.0, wavelength / 2, axial_samples)
    r = np.linspace(0.0, radial_extent * waist_um, radial_samples)
    if radial_samples == 1:
        r_weights = np.ones(1)
    else:
        dr = r[1] - r[0]
        edges = np.concatenate([[0.0], 0.5 * (r[:-1] + r[1:]), [r[-1]]])
        r_weights = np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
        r_weights /= np.pi * dr**2
    points = []
    for zi in z:
        axial = abs(math.cos(2 * math.pi * zi / wavelength))
        for ri, wi in zip(r, r_weights):
            transverse = math.exp(-(ri**2) / waist_um**2)
            g = g0 * axial * transverse
            delta_a = delta_bare + max_detuning * transverse**2
            points.append(EnsemblePoint(g, delta_a, float(wi)))
    return Ensemble(points)


def _evaluate(ens: Ensemble, base: SystemParams, dims: HilbertDims, fn, threads: int):
    """Run ``fn(solution)`` per active point; results stay in point order."""
    pts = ens.active()

    def one(pt):
        sol = solve(base.replace(g=pt.g, delta_a=pt.delta_a), dims)
        return pt.weight, photon_number(sol), fn(sol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, pts))
    else:
        results = [one(pt) for pt in pts]
    W = sum(w for w, _, _ in results)
    n_avg = 0.0
    num_avg = 0.0
    for w, n, num in results:  # fixed sequential reduction order
        n_avg = n_avg + w * n
        num_avg = num_avg + w * num
    return num_avg / W, n_avg / W


def averaged_g2(ens: Ensemble, base: SystemParams, taus_ns, *, dims=HilbertDims(), threads: int = 1) -> CorrGrid:
    """Position-averaged g2; ``base`` supplies kappa, gamma, delta_c and eta."""
    taus = _as_taus(taus_ns)
    num, n = _evaluate(ens, base, dims, lambda sol: g2_numerator(sol, taus), threads)
    _check_norm(n)
    return CorrGrid((taus,), num / n**2, n**2, "g2", ens, meta={"ensemble_points": len(ens)})


def averaged_g3_diagonal(
    ens: Ensemble, base: SystemParams, taus_ns, branch: str = SINGLE_FIRST, *, dims=HilbertDims(), threads: int = 1
) -> CorrGrid:
    taus = _as_taus(taus_ns)
    num, n = _evaluate(ens, base, dims, lambda sol: g3_diagonal_numerator(sol, taus, branch), threads)
    _check_norm(n)
    return CorrGrid((taus,), num / n**3, n**3, "g3_diagonal", ens, branch, meta={"ensemble_points": len(ens)})


def averaged_g3_full(
    ens: Ensemble, base: SystemParams, tau1s_ns, tau2s_ns, *, dims=HilbertDims(), threads: int = 1
) -> CorrGrid:
    t1, t2 = _as_taus(tau1s_ns), _as_taus(tau2s_ns)
    num, n = _evaluate(ens, base, dims, lambda sol: g3_full_numerator(sol, t1, t2), threads)
    _check_norm(n)
    return CorrGrid((t1, t2), num / n**3, n**3, "g3_full", ens, meta={"ensemble_points": len(ens)})
