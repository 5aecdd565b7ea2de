"""Truncated Fock x two-level space and the driven Jaynes-Cummings operators.

Basis ordering is photon-major, atom-minor: ``index = 2*n + s`` with
``s = 0`` for the ground state and ``s = 1`` for the excited state.

Units: every rate and detuning is an angular frequency in rad/us and
hbar = 1, so the Hamiltonian is returned in rad/us as well.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi

#: Reference rates quoted for the experiment, as frequency/2pi in MHz.
REFERENCE_MHZ = {
    "g": 16.0,
    "kappa": 1.5,
    "gamma": 3.0,
    "delta_c": -12.0,
}
#: Maximum AC-Stark shift of the atomic transition from the lock light (MHz).
AC_STARK_MAX_MHZ = 5.0


def mhz_to_angular(value_mhz: float) -> float:
    """Convert a frequency/2pi in MHz to an angular frequency in rad/us."""
    return TWO_PI * value_mhz


def angular_to_mhz(value: float) -> float:
    return value / TWO_PI


@dataclass(frozen=True)
class HilbertDims:
    """Photon cutoff of the composite space; the atom always has two levels."""

    n_max: int = 10
    atom_levels: int = 2

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ConfigError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        if self.atom_levels != 2:
            raise ConfigError("only two-level atoms are supported")

    @property
    def dim(self) -> int:
        return self.atom_levels * (self.n_max + 1)

    def index(self, n: int, s: int) -> int:
        return self.atom_levels * n + s

    def basis(self, n: int, s: int) -> np.ndarray:
        """State vector |n, s>."""
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(n, s)] = 1.0
        return psi

    def photon_numbers(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_max + 1), self.atom_levels)

    def atom_states(self) -> np.ndarray:
        return np.tile(np.arange(self.atom_levels), self.n_max + 1)


@dataclass(frozen=True)
class SystemParams:
    """Rates and detunings of one atom-cavity configuration, all in rad/us.

    ``kappa`` and ``gamma`` are field and polarization decay rates: the
    photon flux out of the cavity is ``2 * kappa * <a^dag a>``.
    """

    g: float
    kappa: float
    gamma: float
    delta_a: float
    delta_c: float
    eta: float

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "delta_a", "delta_c", "eta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
        if self.kappa <= 0 or self.gamma <= 0:
            raise ConfigError("kappa and gamma must be positive")
        if self.g < 0 or self.eta < 0:
            raise ConfigError("g and eta must be non-negative")

    @classmethod
    def from_mhz(cls, *, g, kappa, gamma, delta_c, eta, delta_a=None):
        """Build from frequency/2pi values in MHz.

        ``delta_a`` defaults to ``delta_c`` (bare atom resonant with the cavity).
        """
        if delta_a is None:
            delta_a = delta_c
        return cls(
            g=mhz_to_angular(g),
            kappa=mhz_to_angular(kappa),
            gamma=mhz_to_angular(gamma),
            delta_a=mhz_to_angular(delta_a),
            delta_c=mhz_to_angular(delta_c),
            eta=mhz_to_angular(eta),
        )

    @classmethod
    def reference(cls, eta_over_kappa: float = 0.0, **overrides) -> "SystemParams":
        """Experimental reference configuration with the atom at maximal coupling.

        Keyword overrides are given in rad/us, like the fields themselves.
        """
        kappa = mhz_to_angular(REFERENCE_MHZ["kappa"])
        delta_c = mhz_to_angular(REFERENCE_MHZ["delta_c"])
        values = dict(
            g=mhz_to_angular(REFERENCE_MHZ["g"]),
            kappa=kappa,
            gamma=mhz_to_angular(REFERENCE_MHZ["gamma"]),
            delta_a=delta_c,
            delta_c=delta_c,
            eta=eta_over_kappa * kappa,
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def normal_mode_resonant(cls, eta_over_kappa: float = 0.0, **overrides):
        """Reference rates with the probe tuned onto a first-rung normal mode.

        Atom and cavity are degenerate and ``delta_a = delta_c = -g`` so the
        single-excitation dressed state ``|1,+>`` sits exactly at the probe
        frequency.  This is the idealization behind the two-level estimate
        of the drive-induced oscillation frequency.
        """
        g = overrides.pop("g", mhz_to_angular(REFERENCE_MHZ["g"]))
        return cls.reference(eta_over_kappa, g=g, delta_a=-g, delta_c=-g, **overrides)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @property
    def eta_over_kappa(self) -> float:
        return self.eta / self.kappa

    def as_mhz(self) -> dict:
        return {k: angular_to_mhz(v) for k, v in dataclasses.asdict(self).items()}


def dagger(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def make_annihilation(dims: HilbertDims) -> np.ndarray:
    """Photon annihilation operator ``a``; identity on the atom."""
    a_field = np.diag(np.sqrt(np.arange(1, dims.n_max + 1, dtype=float)), k=1)
    return np.kron(a_field, np.eye(dims.atom_levels)).astype(complex)


def make_sigma_minus(dims: HilbertDims) -> np.ndarray:
    """Atomic lowering operator ``|g><e|``; identity on the field."""
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])
    return np.kron(np.eye(dims.n_max + 1), lower).astype(complex)


def number_operator(dims: HilbertDims) -> np.ndarray:
    return np.diag(dims.photon_numbers().astype(complex))


def pair_operator(dims: HilbertDims) -> np.ndarray:
    """``a^dag^2 a^2``, i.e. n(n-1) on the photon factor."""
    n = dims.photon_numbers()
    return np.diag((n * (n - 1)).astype(complex))


def excitation_number(dims: HilbertDims) -> np.ndarray:
    """``a^dag a + sigma_+ sigma_-``, conserved by the undriven Hamiltonian."""
    return np.diag((dims.photon_numbers() + dims.atom_states()).astype(complex))


def build_hamiltonian(p: SystemParams, dims: HilbertDims) -> np.ndarray:
    """Driven Jaynes-Cummings Hamiltonian in the laser frame (rad/us)."""
    a = make_annihilation(dims)
    sm = make_sigma_minus(dims)
    ad, sp = dagger(a), dagger(sm)
    H = (
        p.delta_a * (sp @ sm)
        + p.delta_c * (ad @ a)
        + p.g * (ad @ sm + a @ sp)
        + p.eta * (a + ad)
    )
    # Exact hermiticity; the sum above can differ from its adjoint by rounding.
    return 0.5 * (H + dagger(H))


@dataclass(frozen=True)
class DressedLevel:
    energy: float
    n_excitation: int


def dressed_spectrum(p: SystemParams, dims: HilbertDims) -> list[DressedLevel]:
    """Eigenvalues of the undriven Hamiltonian grouped by excitation number.

    Each excitation manifold is diagonalized on its own so degeneracies
    between manifolds cannot mix the classification.  The topmost manifold
    ``n_max + 1`` holds only ``|n_max, e>`` and is omitted because the
    truncation removes its partner state.
    """
    if p.eta != 0:
        raise ConfigError("dressed_spectrum requires eta = 0 (undriven ladder)")
    H = build_hamiltonian(p, dims)
    n_exc = np.rint(np.diag(excitation_number(dims)).real).astype(int)
    levels = []
    for n in range(dims.n_max + 1):
        idx = np.flatnonzero(n_exc == n)
        block = H[np.ix_(idx, idx)]
        for e in np.linalg.eigvalsh(block):
            levels.append(DressedLevel(float(e), n))
    return levels


def rung_splittings(p: SystemParams, dims: HilbertDims) -> dict[int, tuple[float, float]]:
    """Map ``n -> (E_minus, E_plus)`` for every complete rung n >= 1."""
    by_rung: dict[int, list[float]] = {}
    for level in dressed_spectrum(p, dims):
        by_rung.setdefault(level.n_excitation, []).append(level.energy)
    out = {}
    for n, energies in sorted(by_rung.items()):
        if n == 0:
            continue
        lo, hi = min(energies), max(energies)
        out[n] = (lo, hi)
    return out
