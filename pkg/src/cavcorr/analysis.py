"""Post-processing of correlation data: smoothing, asymmetry, modulation frequency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .correlations import CorrGrid
from .errors import DegenerateSpectrum, KernelLargerThanGrid, NonSquareGrid, WindowTooShort

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
KERNEL_TRUNCATE_SIGMAS = 4.0
EDGE_MODES = ("reflect", "renormalize")


def gaussian_kernel(sigma_samples: float) -> np.ndarray:
    """Normalized 1D Gaussian truncated at four standard deviations."""
    radius = max(1, int(math.ceil(KERNEL_TRUNCATE_SIGMAS * sigma_samples)))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma_samples) ** 2)
    return k / k.sum()


def _smooth_axis(values: np.ndarray, kernel: np.ndarray, axis: int, edge: str) -> np.ndarray:
    if edge == "reflect":
        return correlate1d(values, kernel, axis=axis, mode="reflect")
    num = correlate1d(values, kernel, axis=axis, mode="constant", cval=0.0)
    shape = [1, 1]
    shape[axis] = values.shape[axis]
    mass = correlate1d(np.ones(values.shape[axis]), kernel, mode="constant", cval=0.0)
    return num / mass.reshape(shape)


def gaussian_smooth_2d(grid: CorrGrid, fwhm_ns: float, *, edge: str = "reflect") -> CorrGrid:
    """Convolve a 2D grid with an isotropic Gaussian of the given FWHM.

    ``edge="reflect"`` (default) mirrors the data at the boundary
    (half-sample symmetric).  The resulting operator is symmetric and
    row-stochastic, so constants are preserved, edges are not darkened and
    the grid sum is conserved exactly.  ``edge="renormalize"`` divides by
    the kernel mass inside the domain instead; it preserves constants but
    not the grid sum.
    """
    if len(grid.axes) != 2:
        raise ValueError("gaussian_smooth_2d needs a 2D grid")
    if fwhm_ns <= 0:
        raise ValueError("fwhm must be positive")
    if edge not in EDGE_MODES:
        raise ValueError(f"edge must be one of {EDGE_MODES}")
    sigma_ns = fwhm_ns / FWHM_PER_SIGMA
    out = np.asarray(grid.values, dtype=float)
    for axis, ax in enumerate(grid.axes):
        if ax.size < 2:
            raise KernelLargerThanGrid("axis has fewer than two samples")
        kernel = gaussian_kernel(sigma_ns / (ax[1] - ax[0]))
        if kernel.size > ax.size:
            raise KernelLargerThanGrid(
                f"kernel width {kernel.size} samples exceeds axis length {ax.size}"
            )
        out = _smooth_axis(out, kernel, axis, edge)
    meta = dict(grid.meta, smoothing_fwhm_ns=fwhm_ns, smoothing_edge=edge)
    return CorrGrid(grid.axes, out, grid.norm, grid.kind, grid.params, grid.branch, meta)


@dataclass
class AsymmetryMap:
    """``values[i, j] = g3(t_i, t_j) - g3(t_j, t_i)`` on a shared axis."""

    axis: np.ndarray
    values: np.ndarray
    a_max: float
    location: tuple[float, float]

    @property
    def axes(self):
        return (self.axis, self.axis)


def asymmetry_map(grid: CorrGrid) -> AsymmetryMap:
    """Antisymmetrized difference of a square surface and its transpose.

    ``location`` is the ``(tau1, tau2)`` of the largest positive entry, i.e.
    the ordering of delays that is enhanced; its mirror image carries the
    same magnitude with opposite sign.
    """
    if len(grid.axes) != 2:
        raise NonSquareGrid("asymmetry needs a 2D grid")
    t1, t2 = grid.axes
    if t1.shape != t2.shape or not np.array_equal(t1, t2):
        raise NonSquareGrid("tau1 and tau2 axes must be identical")
    G = np.asarray(grid.values, dtype=float)
    A = G - G.T
    i, j = np.unravel_index(int(np.argmax(A)), A.shape)
    return AsymmetryMap(t1.copy(), A, float(np.max(np.abs(A))), (float(t1[i]), float(t1[j])))


def locate_modulation_frequency(
    grid: CorrGrid,
    window: tuple[float, float],
    *,
    detrend: int = 0,
    f_min_mhz: float = 0.0,
    f_max_mhz: float | None = None,
    pad_factor: int = 16,
) -> float:
    """Dominant frequency (MHz, not angular) inside a time window of a 1D curve.

    The windowed samples are detrended by a polynomial of degree ``detrend``
    (0 removes the mean), tapered with a Hann window and zero-padded.  The
    largest spectral peak inside ``[f_min_mhz, f_max_mhz]`` is refined by
    parabolic interpolation of the log magnitude.
    """
    if len(grid.axes) != 1:
        raise ValueError("locate_modulation_frequency needs a 1D grid")
    t = grid.taus
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if np.count_nonzero(sel) < 8:
        raise WindowTooShort(f"window {window} holds {np.count_nonzero(sel)} samples, need 8")
    ts, ys = t[sel], np.asarray(grid.values)[sel]
    dt = ts[1] - ts[0]
    coeffs = np.polyfit(ts - ts[0], ys, detrend)
    resid = ys - np.polyval(coeffs, ts - ts[0])
    if np.max(np.abs(resid)) <= 1e-12 * max(1.0, np.max(np.abs(ys))):
        raise DegenerateSpectrum("no modulation left after detrending")

    tapered = resid * np.hanning(resid.size)
    nfft = 1 << int(math.ceil(math.log2(pad_factor * resid.size)))
    spec = np.abs(np.fft.rfft(tapered, nfft))
    freqs = np.fft.rfftfreq(nfft, dt) * 1e3  # 1/ns -> MHz
    band = (freqs > 0) & (freqs >= f_min_mhz)
    if f_max_mhz is not None:
        band &= freqs <= f_max_mhz
    idx = np.flatnonzero(band)
    if idx.size == 0:
        raise DegenerateSpectrum("empty frequency band")
    k = int(idx[np.argmax(spec[idx])])
    if spec[k] <= 0:
        raise DegenerateSpectrum("spectrum vanishes in band")
    if 0 < k < spec.size - 1 and np.all(spec[k - 1 : k + 2] > 0):
        la, lb, lc = np.log(spec[k - 1 : k + 2])
        denom = la - 2 * lb + lc
        shift = 0.5 * (la - lc) / denom if denom < 0 else 0.0
        shift = min(0.5, max(-0.5, shift))
    else:
        shift = 0.0
    return float((k + shift) * (freqs[1] - freqs[0]))
