"""Least-squares fit of a damped two-frequency oscillation to correlation data.

Model, with tau in ns and angular frequencies in rad/ns::

    f(tau) = exp(-tau/T) * (A_omega cos(omega tau) - A_Omega cos(Omega tau - phi)) + f0

Amplitudes are signed except that ``A_Omega`` is made non-negative by
shifting ``phi`` by pi.  Labels are canonicalized so that ``omega >= Omega``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, hilbert

from .errors import CavCorrError, DegenerateSpectrum, NoConvergence
from .operators import HilbertDims, SystemParams

log = logging.getLogger(__name__)

PARAM_NAMES = ("T", "A_omega", "A_Omega", "omega", "Omega", "phi_Omega", "f0")
MIN_SAMPLES = 20
# Peaks weaker than this fraction of the strongest are taken as window leakage.
PEAK_REL_THRESHOLD = 0.05
# A scanned second frequency must cut the single-frequency residual by this factor.
SECOND_FREQ_GAIN = 0.9
FIT_START_NS = 2.0


@dataclass(frozen=True)
class FitModel:
    T: float
    A_omega: float
    A_Omega: float
    omega: float
    Omega: float
    phi_Omega: float
    f0: float

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        env = np.exp(-tau / self.T)
        return env * (
            self.A_omega * np.cos(self.omega * tau)
            - self.A_Omega * np.cos(self.Omega * tau - self.phi_Omega)
        ) + self.f0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> "FitModel":
        return cls(*map(float, x))

    def canonical(self) -> "FitModel":
        """Non-negative frequencies and A_Omega, phase wrapped to (-pi, pi]."""
        omega, Omega = abs(self.omega), self.Omega
        A_Omega, phi = self.A_Omega, self.phi_Omega
        if Omega < 0:
            Omega, phi = -Omega, -phi
        if A_Omega < 0:
            A_Omega, phi = -A_Omega, phi + math.pi
        phi = math.pi - (math.pi - phi) % (2 * math.pi)
        return FitModel(self.T, self.A_omega, A_Omega, omega, Omega, phi, self.f0)


@dataclass
class FitResult:
    model: FitModel
    residual_rms: float
    covariance: np.ndarray
    converged: bool
    n_iter: int
    single_frequency: bool = False
    initial_model: FitModel | None = None
    initial_residual_rms: float = math.nan
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        m = self.model
        return {
            "model": "exp(-tau/T)*(A_omega*cos(omega*tau) - A_Omega*cos(Omega*tau - phi_Omega)) + f0",
            "units": {"T": "ns", "omega": "rad/ns", "Omega": "rad/ns", "phi_Omega": "rad"},
            "parameters": asdict(m),
            "omega_over_2pi_MHz": m.omega / (2 * math.pi) * 1e3,
            "Omega_over_2pi_MHz": m.Omega / (2 * math.pi) * 1e3,
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "single_frequency": self.single_frequency,
            "notes": list(self.notes),
        }


def _jacobian(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    T, Aw, AW, w, W, phi, _ = x
    env = np.exp(-t / T)
    c1, s1 = np.cos(w * t), np.sin(w * t)
    arg = W * t - phi
    c2, s2 = np.cos(arg), np.sin(arg)
    J = np.empty((t.size, 7))
    J[:, 0] = env * (Aw * c1 - AW * c2) * t / T**2
    J[:, 1] = env * c1
    J[:, 2] = -env * c2
    J[:, 3] = -env * Aw * t * s1
    J[:, 4] = env * AW * t * s2
    J[:, 5] = -env * AW * s2
    J[:, 6] = 1.0
    return J


def _spectral_peaks(t: np.ndarray, y: np.ndarray, count: int = 4) -> list[float]:
    """Angular frequencies (rad/ns) of the largest non-DC spectral peaks."""
    resid = (y - y.mean()) * np.hanning(y.size)
    nfft = 1 << int(math.ceil(math.log2(16 * y.size)))
    spec = np.abs(np.fft.rfft(resid, nfft))
    dt = t[1] - t[0]
    peaks, _ = find_peaks(spec)
    if peaks.size:
        peaks = peaks[spec[peaks] >= PEAK_REL_THRESHOLD * spec[peaks].max()]
    peaks = peaks[np.argsort(spec[peaks])[::-1][:count]]
    out = []
    for k in peaks:
        la, lb, lc = np.log(spec[k - 1 : k + 2])
        denom = la - 2 * lb + lc
        shift = 0.5 * (la - lc) / denom if denom < 0 else 0.0
        out.append(2 * math.pi * (k + shift) / (nfft * dt))
    return out


def _envelope_decay(t: np.ndarray, y: np.ndarray) -> float:
    """Decay time from a linear fit to the log of the analytic-signal envelope."""
    env = np.abs(hilbert(y - y.mean()))
    span = t[-1] - t[0]
    keep = env > 0.05 * env.max()
    if np.count_nonzero(keep) < 3:
        return span / 3
    slope = np.polyfit(t[keep], np.log(env[keep]), 1)[0]
    if slope >= 0:
        return span
    return float(np.clip(-1.0 / slope, 2 * (t[1] - t[0]), 10 * span))


def _linear_amplitudes(t, y, T, w, W, single=False):
    env = np.exp(-t / T)
    if single:
        B = np.column_stack([env * np.cos(w * t), np.ones_like(t)])
        c, *_ = np.linalg.lstsq(B, y, rcond=None)
        model = FitModel(T, c[0], 0.0, w, 0.0, 0.0, c[1])
    else:
        B = np.column_stack([env * np.cos(w * t), -env * np.cos(W * t), -env * np.sin(W * t), np.ones_like(t)])
        c, *_ = np.linalg.lstsq(B, y, rcond=None)
        model = FitModel(T, c[0], math.hypot(c[1], c[2]), w, W, math.atan2(c[2], c[1]), c[3])
    rms = math.sqrt(np.mean((model(t) - y) ** 2))
    return model, rms


def initial_guess(t: np.ndarray, y: np.ndarray) -> tuple[FitModel, bool]:
    """Starting point from spectral peaks, envelope decay and linear amplitudes.

    Every pair among the strongest few peaks and decay times around the
    envelope estimate are tried; the combination with the smallest linear
    residual wins.  A heavily damped slow component often merges with the
    zero-frequency hump instead of forming its own peak; with only one
    resolved peak the second frequency is therefore scanned below it, and
    the single-frequency model is used only if that scan does not help.
    Returns ``(model, single_frequency)``.
    """
    peaks = _spectral_peaks(t, y)
    if not peaks:
        raise DegenerateSpectrum("no spectral peak found in the data")
    T0 = _envelope_decay(t, y)
    decays = (T0 / 2, T0, 2 * T0)
    if len(peaks) >= 2:
        pairs = [(max(a, b), min(a, b)) for a, b in combinations(peaks, 2)]
    else:
        w = peaks[0]
        lowest = math.pi / (t[-1] - t[0])
        pairs = [(w, W) for W in np.linspace(lowest, 0.8 * w, 80)]
    best = None
    for w, W in pairs:
        for T in decays:
            cand = _linear_amplitudes(t, y, T, w, W)
            if best is None or cand[1] < best[1]:
                best = cand
    if len(peaks) >= 2:
        return best[0], False
    single = min(
        (_linear_amplitudes(t, y, T, peaks[0], 0.0, single=True) for T in decays),
        key=lambda c: c[1],
    )
    if best[1] < SECOND_FREQ_GAIN * single[1]:
        return best[0], False
    return single[0], True


def _run_lm(t, y, x0, single, max_nfev):
    if single:
        idx = [0, 1, 3, 6]

        def resid(q):
            x = x0.copy()
            x[idx] = q
            return FitModel.from_array(x)(t) - y

        def jac(q):
            x = x0.copy()
            x[idx] = q
            return _jacobian(x, t)[:, idx]

        start = x0[idx]
    else:
        idx = list(range(7))

        def resid(q):
            return FitModel.from_array(q)(t) - y

        def jac(q):
            return _jacobian(q, t)

        start = x0
    res = least_squares(resid, start, jac=jac, method="lm", ftol=1e-10, xtol=1e-8, gtol=1e-12, max_nfev=max_nfev)
    x = x0.copy()
    x[idx] = res.x
    return res, x, idx


def fit_damped_oscillation(
    taus,
    values,
    init: FitModel | None = None,
    *,
    t_min_ns: float | None = FIT_START_NS,
    t_max_ns: float | None = None,
    max_nfev: int = 5000,
) -> FitResult:
    """Fit the damped two-frequency model by Levenberg-Marquardt.

    Samples with ``tau < t_min_ns`` are excluded (default 2 ns).  Without
    ``init`` the starting point comes from :func:`initial_guess`; if only
    one spectral peak is resolvable the single-frequency model
    (``A_Omega = Omega = phi = 0``) is fitted and flagged.
    """
    t = np.asarray(taus, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("taus and values must be 1D arrays of equal length")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("taus and values must be finite")
    keep = np.ones_like(t, dtype=bool)
    if t_min_ns is not None:
        keep &= t >= t_min_ns
    if t_max_ns is not None:
        keep &= t <= t_max_ns
    t, y = t[keep], y[keep]
    if t.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples in the fit window, got {t.size}")

    notes = []
    if init is None:
        init, single = initial_guess(t, y)
        if single:
            notes.append("fewer than two spectral peaks; single-frequency model")
            log.warning("degenerate spectrum: falling back to a single-frequency fit")
    else:
        single = False
    init_rms = math.sqrt(np.mean((init(t) - y) ** 2))

    res, x, idx = _run_lm(t, y, init.as_array(), single, max_nfev)
    if res.status <= 0:
        raise NoConvergence(f"least squares stopped without convergence: {res.message}")
    model = FitModel.from_array(x).canonical()

    if not single and model.omega < model.Omega:
        swapped, _ = _linear_amplitudes(t, y, model.T, model.Omega, model.omega)
        res2, x2, _ = _run_lm(t, y, swapped.as_array(), False, max_nfev)
        model2 = FitModel.from_array(x2).canonical()
        if res2.status > 0 and model2.omega >= model2.Omega:
            res, x, model = res2, x2, model2
            notes.append("labels exchanged to enforce omega >= Omega")
        else:
            notes.append("could not canonicalize omega >= Omega")

    if model.T <= 0:
        notes.append("fitted decay time is not positive")

    r = model(t) - y
    rms = math.sqrt(np.mean(r**2))
    J = _jacobian(model.as_array(), t)[:, idx]
    dof = max(t.size - len(idx), 1)
    cov_sub = np.linalg.pinv(J.T @ J) * (r @ r) / dof
    cov = np.full((7, 7), np.nan)
    cov[np.ix_(idx, idx)] = cov_sub
    return FitResult(
        model=model,
        residual_rms=rms,
        covariance=cov,
        converged=True,
        n_iter=int(res.nfev),
        single_frequency=single,
        initial_model=init,
        initial_residual_rms=init_rms,
        notes=notes,
    )


@dataclass
class SweepRow:
    eta: float
    omega_fit: float = math.nan
    Omega_fit: float = math.nan
    converged: bool = False
    error: str = ""
    fit: FitResult | None = None


@dataclass
class SweepResult:
    rows: list
    omega_constant: bool
    Omega_monotone: bool


def frequency_sweep(
    etas,
    base: SystemParams,
    *,
    ensemble=None,
    taus_ns=None,
    dims: HilbertDims = HilbertDims(),
    threads: int = 1,
    omega_tolerance: float = 0.1,
) -> SweepResult:
    """Fitted (omega, Omega) of g2 for each drive strength ``eta`` (rad/us).

    Rows that fail are marked instead of aborting the sweep.  The returned
    flags record whether omega stayed within ``omega_tolerance`` of its mean
    and whether Omega increased monotonically with eta.
    """
    from .averaging import averaged_g2
    from .correlations import g2, time_grid

    etas = list(etas)
    if not etas:
        raise ValueError("etas must be non-empty")
    taus = time_grid(300.0, 1.0) if taus_ns is None else np.asarray(taus_ns, dtype=float)

    def one(eta):
        row = SweepRow(eta=float(eta))
        try:
            p = base.replace(eta=float(eta))
            curve = averaged_g2(ensemble, p, taus, dims=dims) if ensemble is not None else g2(p, taus, dims=dims)
            fit = fit_damped_oscillation(curve.taus, curve.values)
            row.fit = fit
            row.omega_fit, row.Omega_fit = fit.model.omega, fit.model.Omega
            row.converged = fit.converged and not fit.single_frequency
        except (CavCorrError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, etas))
    else:
        rows = [one(e) for e in etas]

    good = [r for r in rows if r.converged]
    omegas = np.array([r.omega_fit for r in good])
    omega_constant = bool(good) and bool(np.all(np.abs(omegas / omegas.mean() - 1) <= omega_tolerance))
    ordered = sorted(good, key=lambda r: r.eta)
    Omega_monotone = all(b.Omega_fit > a.Omega_fit for a, b in zip(ordered, ordered[1:]))
    if not omega_constant:
        log.warning("fitted omega varies by more than %.0f%% across the sweep", 100 * omega_tolerance)
    if not Omega_monotone:
        log.warning("fitted Omega is not monotone in eta")
    return SweepResult(rows, omega_constant, Omega_monotone)
