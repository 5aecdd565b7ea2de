"""Lindblad superoperator, steady state and spectral time propagation.

Density matrices are vectorized by stacking columns, so that
``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.  Times passed to public
functions are in ns; rates are in rad/us (see :mod:`cavcorr.operators`).
"""

from __future__ import annotations

import functools
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    IllConditionedEigenbasis,
    NoConvergence,
    NonUniqueSteadyState,
    NumericalError,
    UnphysicalState,
)
from .operators import (
    HilbertDims,
    SystemParams,
    build_hamiltonian,
    dagger,
    make_annihilation,
    make_sigma_minus,
)

log = logging.getLogger(__name__)

NS_TO_US = 1e-3

STEADY_RESIDUAL_TOL = 1e-8
POSITIVITY_TOL = 1e-9
NULL_SPACE_RTOL = 1e-10


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(x: np.ndarray, dim: int | None = None) -> np.ndarray:
    if dim is None:
        dim = _sqrt_dim(x.shape[0])
    return np.asarray(x).reshape(dim, dim, order="F")


def _sqrt_dim(n: int) -> int:
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise DimensionMismatch(f"{n} is not a square dimension")
    return d


def spre(A: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> A rho``."""
    return np.kron(np.eye(A.shape[0]), A)


def spost(B: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> rho B``."""
    return np.kron(B.T, np.eye(B.shape[0]))


def sprepost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> A rho B``."""
    return np.kron(B.T, A)


def trace_row(dim: int) -> np.ndarray:
    """Row vector ``t`` with ``t @ vec(rho) == tr(rho)``."""
    return vec(np.eye(dim, dtype=complex))


def observable_row(A: np.ndarray) -> np.ndarray:
    """Row vector ``r`` with ``r @ vec(rho) == tr(A rho)``."""
    return vec(np.asarray(A).T)


def dissipator(c: np.ndarray, rate: float) -> np.ndarray:
    """``rate * (2 c rho c^dag - c^dag c rho - rho c^dag c)``."""
    cd = dagger(c)
    cdc = cd @ c
    return rate * (2.0 * sprepost(c, cd) - spre(cdc) - spost(cdc))


def build_liouvillian(p: SystemParams, dims: HilbertDims) -> np.ndarray:
    """Dense Liouvillian (rad/us) acting on column-stacked density matrices."""
    H = build_hamiltonian(p, dims)
    a = make_annihilation(dims)
    sm = make_sigma_minus(dims)
    L = -1j * (spre(H) - spost(H))
    L += dissipator(a, p.kappa)
    L += dissipator(sm, p.gamma)
    return L


def _check_physical(rho: np.ndarray, what: str) -> np.ndarray:
    rho = 0.5 * (rho + dagger(rho))
    lam_min = np.linalg.eigvalsh(rho)[0]
    if lam_min < -POSITIVITY_TOL:
        raise UnphysicalState(f"{what}: minimum eigenvalue {lam_min:.3e} below -{POSITIVITY_TOL}")
    return rho


def steady_state(L: np.ndarray, *, cross_check: bool = True, propagator: "SpectralPropagator | None" = None) -> np.ndarray:
    """Trace-one solution of ``L rho = 0``.

    The primary route replaces the first row of ``L`` by the trace functional
    and solves the resulting linear system.  With ``cross_check`` the null
    space must be one-dimensional and an independently obtained null vector
    must match the linear-solve result after trace normalization.  With a
    ``propagator`` both checks use its eigendecomposition.  Without one the
    nullity comes from the singular values of ``L`` and the reference vector
    from a second solve with the *last* row replaced instead.
    """
    D = L.shape[0]
    dim = _sqrt_dim(D)
    tr = trace_row(dim)

    null = None
    if cross_check:
        if propagator is not None and propagator.spectral:
            mags = np.sort(np.abs(propagator.eigenvalues))
            if mags[1] <= NULL_SPACE_RTOL * mags[-1]:
                raise NonUniqueSteadyState(f"several eigenvalues of L vanish ({mags[:3]})")
            k = int(np.argmin(np.abs(propagator.eigenvalues)))
            null = propagator.V[:, k]
        else:
            s = sla.svdvals(L)
            if s[-2] <= NULL_SPACE_RTOL * s[0]:
                raise NonUniqueSteadyState(
                    f"null space of L has dimension > 1 (singular values {s[-3:]})"
                )
            M2 = L.copy()
            M2[-1, :] = tr
            b2 = np.zeros(D, dtype=complex)
            b2[-1] = 1.0
            null = np.linalg.solve(M2, b2)

    M = L.copy()
    M[0, :] = tr
    b = np.zeros(D, dtype=complex)
    b[0] = 1.0
    try:
        x = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NonUniqueSteadyState(f"trace-constrained system is singular: {exc}") from exc

    residual = np.linalg.norm(L @ x)
    if not np.isfinite(residual) or residual > STEADY_RESIDUAL_TOL:
        raise NoConvergence(f"steady-state residual {residual:.3e} exceeds {STEADY_RESIDUAL_TOL}")

    if null is not None:
        null = null / (tr @ null)
        mismatch = np.max(np.abs(null - x))
        if mismatch > 1e-8:
            raise NumericalError(f"null-space and linear-solve steady states differ by {mismatch:.3e}")

    return _check_physical(unvec(x, dim), "steady state")


class SpectralPropagator:
    """Applies ``exp(L t)`` through the eigendecomposition of ``L``.

    If the eigenvector matrix is worse conditioned than ``cond_max`` an
    :class:`IllConditionedEigenbasis` warning is issued and all methods fall
    back to dense matrix exponentials (``fallback=False`` raises instead).
    """

    def __init__(self, L: np.ndarray, *, cond_max: float = 1e10, fallback: bool = True):
        self.L = np.asarray(L)
        self.D = self.L.shape[0]
        self.dim = _sqrt_dim(self.D)
        w, V = np.linalg.eig(self.L)
        try:
            Vinv = np.linalg.inv(V)
            # 1-norm condition number; within a factor D of the 2-norm one
            self.condition = float(np.linalg.norm(V, 1) * np.linalg.norm(Vinv, 1))
        except np.linalg.LinAlgError:
            Vinv, self.condition = None, np.inf
        if self.condition > cond_max:
            msg = f"eigenvector condition number {self.condition:.3e} exceeds {cond_max:.3e}"
            if not fallback:
                raise IllConditionedEigenbasis(msg)
            warnings.warn(msg + "; using matrix exponentials", RuntimeWarning, stacklevel=2)
            self.spectral = False
        else:
            self.spectral = True
        if np.max(w.real) > 1e-8:
            raise NumericalError(f"Liouvillian has a growing mode, Re(lambda) = {np.max(w.real):.3e}")
        self.eigenvalues = w
        self.V = V
        self.Vinv = Vinv if self.spectral else None

    # -- vector level -----------------------------------------------------

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        return self.Vinv @ x

    def evolve(self, x: np.ndarray, t_ns: float) -> np.ndarray:
        """``exp(L t) x`` for a vectorized state."""
        if t_ns < 0:
            raise ValueError("propagation time must be non-negative")
        t = t_ns * NS_TO_US
        if self.spectral:
            return self.V @ (np.exp(self.eigenvalues * t) * (self.Vinv @ x))
        return sla.expm(self.L * t) @ x

    def _step_matrices(self, taus_ns: np.ndarray):
        """Yield ``exp(L tau)`` for each tau, reusing a fixed step when uniform."""
        taus = np.asarray(taus_ns, dtype=float) * NS_TO_US
        diffs = np.diff(taus)
        if len(taus) > 2 and np.allclose(diffs, diffs[0], rtol=1e-12, atol=0):
            step = sla.expm(self.L * diffs[0])
            P = sla.expm(self.L * taus[0])
            for _ in taus:
                yield P
                P = step @ P
        else:
            for t in taus:
                yield sla.expm(self.L * t)

    def expect_series(self, obs_row: np.ndarray, x0: np.ndarray, taus_ns) -> np.ndarray:
        """``obs_row @ exp(L tau) x0`` for every tau (complex)."""
        taus_ns = np.asarray(taus_ns, dtype=float)
        if np.any(taus_ns < 0):
            raise ValueError("propagation times must be non-negative")
        if self.spectral:
            weights = (obs_row @ self.V) * (self.Vinv @ x0)
            return np.exp(np.outer(taus_ns * NS_TO_US, self.eigenvalues)) @ weights
        return np.array([obs_row @ (P @ x0) for P in self._step_matrices(taus_ns)])

    def expect_two_time(
        self,
        obs_row: np.ndarray,
        jump: np.ndarray,
        x0: np.ndarray,
        tau1s_ns,
        tau2s_ns,
        *,
        row_chunk: int | None = None,
    ) -> np.ndarray:
        """``obs_row @ exp(L tau2) J exp(L tau1) x0`` on the full (tau1, tau2) grid.

        The intermediate states after ``tau1`` and the jump superoperator are
        reused across all ``tau2``; ``row_chunk`` bounds how many tau1 rows
        are held in memory at once.
        """
        t1 = np.asarray(tau1s_ns, dtype=float)
        t2 = np.asarray(tau2s_ns, dtype=float)
        if np.any(t1 < 0) or np.any(t2 < 0):
            raise ValueError("propagation times must be non-negative")
        out = np.empty((t1.size, t2.size), dtype=complex)
        chunk = row_chunk or t1.size
        if self.spectral:
            M = self.Vinv @ (jump @ self.V)
            c0 = self.Vinv @ x0
            obs_w = obs_row @ self.V
            E2 = np.exp(np.outer(t2 * NS_TO_US, self.eigenvalues))
            for start in range(0, t1.size, chunk):
                rows = slice(start, start + chunk)
                E1 = np.exp(np.outer(t1[rows] * NS_TO_US, self.eigenvalues))
                C1 = (E1 * c0) @ M.T
                out[rows] = (C1 * obs_w) @ E2.T
            return out
        for i, P1 in enumerate(self._step_matrices(t1)):
            x1 = jump @ (P1 @ x0)
            out[i] = [obs_row @ (P2 @ x1) for P2 in self._step_matrices(t2)]
        return out

    # -- density-matrix level ---------------------------------------------

    def propagate(self, rho0: np.ndarray, t_ns: float) -> np.ndarray:
        if rho0.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"state shape {rho0.shape} does not match dim {self.dim}")
        return unvec(self.evolve(vec(rho0), t_ns), self.dim)

    def steady_state_eigenvector(self) -> np.ndarray:
        """Trace-normalized eigenvector of the eigenvalue nearest zero."""
        k = int(np.argmin(np.abs(self.eigenvalues)))
        x = self.V[:, k]
        return unvec(x / (trace_row(self.dim) @ x), self.dim)


def propagate(prop: SpectralPropagator, rho0: np.ndarray, t_ns: float) -> np.ndarray:
    """``exp(L t) rho0`` with ``t`` in ns."""
    return prop.propagate(rho0, t_ns)


def expectation(rho: np.ndarray, A: np.ndarray) -> complex:
    """``tr(A rho)``."""
    if rho.shape != A.shape:
        raise DimensionMismatch(f"operator {A.shape} and state {rho.shape} differ")
    return complex(np.einsum("ij,ji->", A, rho))


@dataclass(frozen=True)
class SystemSolution:
    """Everything derived once per configuration and shared by correlators."""

    params: SystemParams
    dims: HilbertDims
    liouvillian: np.ndarray
    propagator: SpectralPropagator
    rho_ss: np.ndarray
    n_ss: float


@functools.lru_cache(maxsize=16)
def solve(p: SystemParams, dims: HilbertDims = HilbertDims()) -> SystemSolution:
    """Liouvillian, propagator and steady state for one configuration (cached)."""
    L = build_liouvillian(p, dims)
    prop = SpectralPropagator(L)
    rho = steady_state(L, propagator=prop)
    a = make_annihilation(dims)
    n_ss = expectation(rho, dagger(a) @ a).real
    return SystemSolution(p, dims, L, prop, rho, n_ss)


def truncation_check(p: SystemParams, dims: HilbertDims = HilbertDims(), extra: int = 2) -> float:
    """Relative change of the steady-state photon number when n_max grows by ``extra``."""
    n0 = solve(p, dims).n_ss
    n1 = solve(p, HilbertDims(dims.n_max + extra)).n_ss
    return abs(n1 - n0) / max(abs(n1), 1e-300)
