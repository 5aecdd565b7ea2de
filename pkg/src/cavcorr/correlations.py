"""Second- and third-order photon correlations via the quantum regression theorem.

Every correlator is computed in two stages: an unnormalized numerator (the
trace of a conditionally propagated, *not* renormalized, jumped state) and
the normalization by powers of the steady-state photon number.  The
numerators are public because position averaging has to combine them
before normalizing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .errors import MemoryBudgetExceeded, NumericalError, ZeroDenominator
from .liouvillian import SystemSolution, observable_row, solve, sprepost, vec
from .operators import HilbertDims, SystemParams, dagger, make_annihilation

SINGLE_FIRST = "single_then_pair"
PAIR_FIRST = "pair_then_single"
BRANCHES = (SINGLE_FIRST, PAIR_FIRST)

IMAG_TOL = 1e-8
MIN_PHOTON_NUMBER = 1e-12
NEGATIVE_TOL = 1e-9

System = Union[SystemParams, SystemSolution]


@dataclass
class CorrGrid:
    """Sampled normalized correlation function.

    ``axes`` holds one (g2, g3 cut) or two (g3 surface) time axes in ns and
    ``values`` has the matching shape.  ``norm`` is the denominator
    ``<a^dag a>^k`` that was divided out.
    """

    axes: tuple
    values: np.ndarray
    norm: float
    kind: str
    params: Any = None
    branch: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(ax.size for ax in self.axes):
            raise ValueError(f"values shape {self.values.shape} does not match axes")
        if self.values.size and np.min(self.values) < -NEGATIVE_TOL:
            raise NumericalError(f"negative correlation value {np.min(self.values):.3e}")

    @property
    def taus(self) -> np.ndarray:
        return self.axes[0]

    def symmetric(self) -> "CorrGrid":
        """Mirror a g2 curve onto negative delays; g2 is even in tau."""
        if self.kind != "g2":
            raise ValueError("only g2 is time-symmetric")
        t = self.taus
        keep = t > 0
        axis = np.concatenate([-t[keep][::-1], t])
        values = np.concatenate([self.values[keep][::-1], self.values])
        return CorrGrid((axis,), values, self.norm, self.kind, self.params, self.branch, dict(self.meta))

    def scaled(self, factor: float) -> "CorrGrid":
        """Vertical rescaling; for matching experimental asymptotes only."""
        meta = dict(self.meta, scale=factor)
        return CorrGrid(self.axes, self.values * factor, self.norm, self.kind, self.params, self.branch, meta)


def _solution(system: System, dims: HilbertDims | None) -> SystemSolution:
    if isinstance(system, SystemSolution):
        return system
    return solve(system, dims or HilbertDims())


def _as_taus(taus_ns) -> np.ndarray:
    taus = np.atleast_1d(np.asarray(taus_ns, dtype=float))
    if taus.ndim != 1:
        raise ValueError("delays must be a 1D sequence")
    if np.any(taus < 0):
        raise ValueError("delays must be non-negative")
    return taus


def _require_uniform(taus: np.ndarray, name: str):
    if taus.size > 2:
        d = np.diff(taus)
        if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise ValueError(f"{name} must be uniformly spaced")


def _real(z: np.ndarray, what: str) -> np.ndarray:
    z = np.asarray(z)
    scale = np.maximum(1.0, np.abs(z.real))
    worst = np.max(np.abs(z.imag) / scale) if z.size else 0.0
    if worst > IMAG_TOL:
        raise NumericalError(f"{what} has imaginary part {worst:.3e}")
    return z.real.copy()


def _ops(sol: SystemSolution):
    a = make_annihilation(sol.dims)
    ad = dagger(a)
    return a, ad


def _check_norm(n: float) -> float:
    if n < MIN_PHOTON_NUMBER:
        raise ZeroDenominator(f"steady-state photon number {n:.3e} is too small to normalize")
    return n


def photon_number(sol: SystemSolution, rho: np.ndarray | None = None) -> float:
    a, ad = _ops(sol)
    rho = sol.rho_ss if rho is None else rho
    return float(np.real(np.trace(ad @ a @ rho)))


def g2_numerator(system: System, taus_ns, *, dims=None, rho_ss=None) -> np.ndarray:
    """``tr{a^dag a exp(L tau)[a rho a^dag]}`` for each delay."""
    sol = _solution(system, dims)
    taus = _as_taus(taus_ns)
    a, ad = _ops(sol)
    rho = sol.rho_ss if rho_ss is None else rho_ss
    x0 = vec(a @ rho @ ad)
    z = sol.propagator.expect_series(observable_row(ad @ a), x0, taus)
    return _real(z, "g2 numerator")


def g3_diagonal_numerator(system: System, taus_ns, branch: str = SINGLE_FIRST, *, dims=None, rho_ss=None):
    """Unnormalized three-photon correlation with two photons at the same time.

    ``single_then_pair``: one photon at 0, a pair at tau,
    ``tr{a^dag2 a^2 exp(L tau)[a rho a^dag]}``.
    ``pair_then_single``: a pair at 0, one photon at tau,
    ``tr{a^dag a exp(L tau)[a^2 rho a^dag2]}``.
    """
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
    sol = _solution(system, dims)
    taus = _as_taus(taus_ns)
    a, ad = _ops(sol)
    rho = sol.rho_ss if rho_ss is None else rho_ss
    if branch == SINGLE_FIRST:
        x0 = vec(a @ rho @ ad)
        obs = ad @ ad @ a @ a
    else:
        x0 = vec(a @ a @ rho @ ad @ ad)
        obs = ad @ a
    z = sol.propagator.expect_series(observable_row(obs), x0, taus)
    return _real(z, "g3 numerator")


def g3_full_numerator(
    system: System,
    tau1s_ns,
    tau2s_ns,
    *,
    dims=None,
    rho_ss=None,
    max_intermediate_bytes: int = 256 * 2**20,
) -> np.ndarray:
    """``tr{a^dag a exp(L tau2)[a exp(L tau1)[a rho a^dag] a^dag]}`` on a grid.

    Rows of tau1 are streamed in chunks whose intermediate storage stays
    under ``max_intermediate_bytes``.
    """
    sol = _solution(system, dims)
    t1 = _as_taus(tau1s_ns)
    t2 = _as_taus(tau2s_ns)
    _require_uniform(t1, "tau1 grid")
    _require_uniform(t2, "tau2 grid")
    a, ad = _ops(sol)
    rho = sol.rho_ss if rho_ss is None else rho_ss
    D = sol.propagator.D
    row_bytes = 16 * (2 * D + t2.size)
    if row_bytes > max_intermediate_bytes:
        raise MemoryBudgetExceeded(
            f"a single tau1 row needs {row_bytes} bytes, budget is {max_intermediate_bytes}"
        )
    chunk = max(1, max_intermediate_bytes // row_bytes)
    z = sol.propagator.expect_two_time(
        observable_row(ad @ a),
        sprepost(a, ad),
        vec(a @ rho @ ad),
        t1,
        t2,
        row_chunk=min(chunk, t1.size),
    )
    return _real(z, "g3 numerator")


def g2(system: System, taus_ns, *, dims=None, rho_ss=None) -> CorrGrid:
    """Normalized ``g2(tau) = <a^dag a^dag(tau) a(tau) a> / <a^dag a>^2``."""
    sol = _solution(system, dims)
    taus = _as_taus(taus_ns)
    n = _check_norm(photon_number(sol, rho_ss))
    num = g2_numerator(sol, taus, rho_ss=rho_ss)
    return CorrGrid((taus,), num / n**2, n**2, "g2", sol.params)


def g3_diagonal(system: System, taus_ns, branch: str = SINGLE_FIRST, *, dims=None, rho_ss=None) -> CorrGrid:
    """Normalized g3 cut with two coincident photons, for one branch.

    ``single_then_pair`` is ``g3(tau, 0)`` at positive tau and
    ``pair_then_single`` is ``g3(0, tau)``, conventionally drawn at ``-tau``.
    Both equal ``g3(0, 0)`` at tau = 0.
    """
    sol = _solution(system, dims)
    taus = _as_taus(taus_ns)
    n = _check_norm(photon_number(sol, rho_ss))
    num = g3_diagonal_numerator(sol, taus, branch, rho_ss=rho_ss)
    return CorrGrid((taus,), num / n**3, n**3, "g3_diagonal", sol.params, branch)


def g3_full(system: System, tau1s_ns, tau2s_ns, *, dims=None, rho_ss=None, **kwargs) -> CorrGrid:
    """Normalized ``g3(tau1, tau2)``: photons at 0, tau1 and tau1 + tau2.

    ``values[i, j]`` corresponds to ``(tau1s[i], tau2s[j])``.
    """
    sol = _solution(system, dims)
    t1, t2 = _as_taus(tau1s_ns), _as_taus(tau2s_ns)
    n = _check_norm(photon_number(sol, rho_ss))
    num = g3_full_numerator(sol, t1, t2, rho_ss=rho_ss, **kwargs)
    return CorrGrid((t1, t2), num / n**3, n**3, "g3_full", sol.params)


def time_grid(t_max_ns: float, step_ns: float) -> np.ndarray:
    """Uniform grid ``0, step, ..., t_max`` (inclusive when commensurate)."""
    if step_ns <= 0 or t_max_ns < 0:
        raise ValueError("need step > 0 and t_max >= 0")
    n = int(np.floor(t_max_ns / step_ns + 1e-9)) + 1
    return np.arange(n) * step_ns
