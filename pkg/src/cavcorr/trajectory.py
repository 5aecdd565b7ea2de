"""Monte Carlo wavefunction trajectories with tagged quantum jumps.

A first-order jump scheme with a fixed step: in every step of length ``dt``
a jump happens with probability ``2 dt (kappa <a^dag a> + gamma <s+ s->)``,
otherwise the state is propagated by the exact no-jump propagator
``exp(-i H_eff dt)`` with ``H_eff = H - i (kappa a^dag a + gamma s+ s-)``.
The stepping loop is compiled with numba; random numbers come from numpy's
PCG64 seeded with the trajectory seed, drawn in fixed-size chunks so a
record depends only on ``(params, dims, t_final, dt, seed)``.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, StateCollapseToZero, StatisticalUnderflow, StepTooLarge
from .liouvillian import NS_TO_US
from .operators import HilbertDims, SystemParams, build_hamiltonian, dagger, make_annihilation, make_sigma_minus

RNG_ALGORITHM = "numpy.PCG64"
DEFAULT_DT_NS = 0.05
FIGURE_BURN_IN_NS = 1000.0
MAX_JUMP_PROBABILITY = 0.1
RNG_CHUNK = 1 << 18
NORM_FLOOR = 1e-200


class JumpChannel(str, enum.Enum):
    CAVITY_DECAY = "CavityDecay"
    SPONTANEOUS_EMISSION = "SpontaneousEmission"


_CHANNELS = (JumpChannel.CAVITY_DECAY, JumpChannel.SPONTANEOUS_EMISSION)


@dataclass
class TrajectoryRecord:
    """One unravelled trajectory; times in ns relative to the end of burn-in."""

    times: np.ndarray
    n_phot: np.ndarray
    n_pair: np.ndarray
    jumps: list = field(default_factory=list)
    seed: int = 0
    rng_algorithm: str = RNG_ALGORITHM
    dt_ns: float = DEFAULT_DT_NS

    def jump_times(self, channel: JumpChannel | None = None) -> np.ndarray:
        return np.array([t for t, c in self.jumps if channel is None or c == channel], dtype=float)

    def write_csv(self, path, jumps_path=None) -> None:
        """Write ``time_ns,n_phot,n_pair`` and the jump list ``time_ns,channel``.

        The jump list goes next to ``path`` with a ``_jumps`` suffix unless
        ``jumps_path`` is given.
        """
        path = Path(path)
        if jumps_path is None:
            jumps_path = path.with_name(path.stem + "_jumps" + path.suffix)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_ns", "n_phot", "n_pair"])
            for row in zip(self.times, self.n_phot, self.n_pair):
                w.writerow([repr(float(v)) for v in row])
        with Path(jumps_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_ns", "channel"])
            for t, c in self.jumps:
                w.writerow([repr(float(t)), JumpChannel(c).value])


@numba.njit(cache=True, nogil=True)
def _step_chunk(psi, U, A, S, nvec, svec, uniforms, k0, burn_steps, stride, dt_us, kappa, gamma,
                rec_n, rec_pair, jump_steps, jump_chans):
    """Advance ``psi`` by ``uniforms.size`` steps in place.

    Returns ``(status, n_recorded, n_jumps, bad_step, bad_value)``; status 0
    is success, 1 a too-large jump probability, 2 a collapsed norm.
    """
    dim = psi.size
    n_rec = 0
    n_jump = 0
    tmp = np.empty(dim, dtype=np.complex128)
    for i in range(uniforms.size):
        k = k0 + i + 1  # step index after this update
        pn = 0.0
        pe = 0.0
        for j in range(dim):
            w = psi[j].real ** 2 + psi[j].imag ** 2
            pn += nvec[j] * w
            pe += svec[j] * w
        p_cav = 2.0 * dt_us * kappa * pn
        p_atom = 2.0 * dt_us * gamma * pe
        p = p_cav + p_atom
        if p > 0.1:
            return 1, n_rec, n_jump, k, p
        r = uniforms[i]
        if r < p:
            if r < p_cav:
                M = A
                ch = 0
            else:
                M = S
                ch = 1
            if k > burn_steps:
                jump_steps[n_jump] = k - burn_steps
                jump_chans[n_jump] = ch
                n_jump += 1
        else:
            M = U
        for a in range(dim):
            acc = 0j
            for b in range(dim):
                acc += M[a, b] * psi[b]
            tmp[a] = acc
        norm2 = 0.0
        for j in range(dim):
            norm2 += tmp[j].real ** 2 + tmp[j].imag ** 2
        if not (norm2 > 1e-200) or not np.isfinite(norm2):
            return 2, n_rec, n_jump, k, norm2
        inv = 1.0 / math.sqrt(norm2)
        for j in range(dim):
            psi[j] = tmp[j] * inv
        rel = k - burn_steps
        if rel >= 0 and rel % stride == 0:
            qn = 0.0
            qp = 0.0
            for j in range(dim):
                w = psi[j].real ** 2 + psi[j].imag ** 2
                qn += nvec[j] * w
                qp += nvec[j] * (nvec[j] - 1.0) * w
            rec_n[n_rec] = qn
            rec_pair[n_rec] = qp
            n_rec += 1
    return 0, n_rec, n_jump, 0, 0.0


@dataclass(frozen=True)
class _Propagators:
    U: np.ndarray
    A: np.ndarray
    S: np.ndarray
    nvec: np.ndarray
    svec: np.ndarray


def _propagators(p: SystemParams, dims: HilbertDims, dt_us: float) -> _Propagators:
    a = make_annihilation(dims)
    sm = make_sigma_minus(dims)
    H_eff = build_hamiltonian(p, dims) - 1j * (p.kappa * dagger(a) @ a + p.gamma * dagger(sm) @ sm)
    U = sla.expm(-1j * H_eff * dt_us)
    return _Propagators(
        np.ascontiguousarray(U),
        np.ascontiguousarray(a.astype(complex)),
        np.ascontiguousarray(sm.astype(complex)),
        dims.photon_numbers().astype(float),
        dims.atom_states().astype(float),
    )


def _initial_state(dims: HilbertDims, initial) -> np.ndarray:
    if initial is None:
        psi = dims.basis(0, 0)
    elif isinstance(initial, tuple):
        psi = dims.basis(*initial)
    else:
        psi = np.asarray(initial)
    psi = np.array(psi, dtype=complex).reshape(-1)
    if psi.size != dims.dim:
        raise ConfigError(f"initial state has length {psi.size}, expected {dims.dim}")
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ConfigError("initial state is zero")
    return psi / nrm


def _step_counts(t_final_ns, dt_ns, burn_in_ns, record_every):
    if not (t_final_ns > 0 and dt_ns > 0):
        raise ConfigError("t_final and dt must be positive")
    if burn_in_ns < 0 or int(record_every) != record_every or record_every < 1:
        raise ConfigError("burn_in must be >= 0 and record_every a positive integer")
    n_rec = int(math.floor(t_final_ns / (dt_ns * record_every) + 1e-9))
    if n_rec < 1:
        raise ConfigError("t_final shorter than one recording interval")
    burn_steps = int(round(burn_in_ns / dt_ns))
    return burn_steps, n_rec * int(record_every), n_rec + 1


def run_trajectory(
    p: SystemParams,
    dims: HilbertDims = HilbertDims(),
    t_final: float = 1000.0,
    dt: float = DEFAULT_DT_NS,
    seed: int = 0,
    *,
    initial=None,
    burn_in_ns: float = 0.0,
    record_every: int = 1,
) -> TrajectoryRecord:
    """Single trajectory of duration ``t_final`` ns after ``burn_in_ns``.

    ``initial`` is ``None`` (``|0, g>``), a ``(n, s)`` basis label or a state
    vector.  Observables are recorded every ``record_every`` steps starting
    at the end of the burn-in, which is taken as time zero.
    """
    burn_steps, n_steps, n_rec = _step_counts(t_final, dt, burn_in_ns, record_every)
    dt_us = dt * NS_TO_US
    prop = _propagators(p, dims, dt_us)
    psi = _initial_state(dims, initial)
    rng = np.random.Generator(np.random.PCG64(seed))

    rec_n = np.empty(n_rec)
    rec_pair = np.empty(n_rec)
    # the initial state counts as the first sample when there is no burn-in
    start = 0
    if burn_steps == 0:
        w = np.abs(psi) ** 2
        rec_n[0] = prop.nvec @ w
        rec_pair[0] = (prop.nvec * (prop.nvec - 1)) @ w
        start = 1
    jump_steps_all, jump_chans_all = [], []
    total = burn_steps + n_steps
    k = 0
    while k < total:
        m = min(RNG_CHUNK, total - k)
        u = rng.random(m)
        js = np.empty(m, dtype=np.int64)
        jc = np.empty(m, dtype=np.int8)
        status, nr, nj, bad_k, bad_v = _step_chunk(
            psi, prop.U, prop.A, prop.S, prop.nvec, prop.svec, u, k, burn_steps, int(record_every),
            dt_us, p.kappa, p.gamma, rec_n[start:], rec_pair[start:], js, jc,
        )
        if status == 1:
            raise StepTooLarge(
                f"jump probability {bad_v:.3f} exceeds {MAX_JUMP_PROBABILITY} at step {bad_k}; reduce dt"
            )
        if status == 2:
            raise StateCollapseToZero(f"state norm squared {bad_v:.3e} at step {bad_k}")
        start += nr
        jump_steps_all.append(js[:nj])
        jump_chans_all.append(jc[:nj])
        k += m
    if start != n_rec:
        raise RuntimeError(f"recorded {start} samples, expected {n_rec}")

    times = np.arange(n_rec) * (record_every * dt)
    steps = np.concatenate(jump_steps_all) if jump_steps_all else np.empty(0, np.int64)
    chans = np.concatenate(jump_chans_all) if jump_chans_all else np.empty(0, np.int8)
    jumps = [(float(s * dt), _CHANNELS[c]) for s, c in zip(steps, chans)]
    return TrajectoryRecord(times, np.maximum(rec_n, 0.0), np.maximum(rec_pair, 0.0), jumps, seed, RNG_ALGORITHM, dt)


def ensemble_average(
    p: SystemParams,
    dims: HilbertDims = HilbertDims(),
    t_final: float = 100.0,
    dt: float = DEFAULT_DT_NS,
    n_traj: int = 100,
    seed0: int = 0,
    *,
    initial=None,
    record_every: int = 1,
    threads: int = 1,
):
    """Pointwise mean and standard error of ``<a^dag a>(t)`` over trajectories.

    Trajectory ``i`` uses seed ``seed0 + i``; results are combined in seed
    order whatever the number of threads.
    """
    if n_traj < 2:
        raise StatisticalUnderflow("standard error needs at least two trajectories")
    seeds = range(seed0, seed0 + n_traj)

    def one(s):
        return run_trajectory(p, dims, t_final, dt, s, initial=initial, record_every=record_every)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, seeds))
    else:
        records = [one(s) for s in seeds]
    data = np.stack([r.n_phot for r in records])
    mean = data.mean(axis=0)
    stderr = data.std(axis=0, ddof=1) / math.sqrt(n_traj)
    return records[0].times, mean, stderr
