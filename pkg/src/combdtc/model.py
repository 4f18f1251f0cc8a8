"""Model parameters, disorder sampling and gate synthesis.

Units: the Ising half-width ``jz`` sets the energy scale (default 1), times
are measured in its inverse.  Spin basis index 0 is spin-up
(``sigma^z = +1``), index 1 is spin-down.  Time-bin basis index ``m`` is the
photon number of the bin.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameter
from .tensor import expm_antihermitian

__all__ = [
    "ModelParams",
    "DisorderRealization",
    "GateSet",
    "sample_disorder",
    "build_kick_slice",
    "build_ising_slices",
    "build_feedback_gate",
    "build_gates",
    "SX",
    "SY",
    "SZ",
    "SP",
    "SM",
    "I2",
]

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)  # |up><down|
SM = SP.T.copy()

RESERVOIRS = ("individual", "global")


def _is_integral(x: float, rel: float = 1e-9) -> bool:
    return abs(x - round(x)) <= rel * max(1.0, abs(x))


@dataclass(frozen=True)
class ModelParams:
    """All physical and numerical knobs of one simulation.

    ``dt`` defaults to ``tau / bins_per_delay``; when given explicitly it
    must satisfy ``bins_per_delay * dt == tau``.  The drive frequency
    ``omega = pi / period`` is derived, never stored.  ``phi_sites``
    optionally overrides the feedback phase site by site.
    """

    n_sites: int
    period: float = 0.05
    epsilon: float = 0.0
    jz: float = 1.0
    jx: float = 0.1
    hx: float = 0.1
    gamma_l: float = 0.0
    gamma_r: float = 0.0
    tau: float = 2e-4
    phi: float = math.pi
    dt: Optional[float] = None
    bins_per_delay: int = 1
    bin_dim: int = 2
    max_bond: int = 64
    cutoff: float = 0.0
    seed: int = 0
    reservoir: str = "individual"
    phi_sites: Optional[tuple] = None

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise InvalidParameter(f"n_sites must be a positive integer, got {self.n_sites}")
        if not self.period > 0:
            raise InvalidParameter(f"period must be positive, got {self.period}")
        if not self.tau > 0:
            raise InvalidParameter(f"tau must be positive, got {self.tau}")
        if int(self.bins_per_delay) != self.bins_per_delay or self.bins_per_delay < 1:
            raise InvalidParameter(f"bins_per_delay must be a positive integer, got {self.bins_per_delay}")
        if self.dt is None:
            object.__setattr__(self, "dt", self.tau / self.bins_per_delay)
        elif not self.dt > 0:
            raise InvalidParameter(f"dt must be positive, got {self.dt}")
        elif abs(self.bins_per_delay * self.dt - self.tau) > 1e-12 * self.tau:
            raise InvalidParameter(
                f"bins_per_delay * dt = {self.bins_per_delay} * {self.dt!r} = "
                f"{self.bins_per_delay * self.dt!r} does not equal tau = {self.tau!r}"
            )
        if int(self.bin_dim) != self.bin_dim or self.bin_dim < 2:
            raise InvalidParameter(f"bin_dim must be an integer >= 2, got {self.bin_dim}")
        for name in ("jz", "jx", "hx", "gamma_l", "gamma_r"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.max_bond < 1:
            raise InvalidParameter(f"max_bond must be positive, got {self.max_bond}")
        if not 0 <= self.cutoff < 1:
            raise InvalidParameter(f"cutoff must lie in [0, 1), got {self.cutoff}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameter("seed must be a 64-bit unsigned integer")
        if self.reservoir not in RESERVOIRS:
            raise InvalidParameter(f"reservoir must be one of {RESERVOIRS}, got {self.reservoir!r}")
        if self.phi_sites is not None:
            object.__setattr__(self, "phi_sites", tuple(float(x) for x in self.phi_sites))
            if len(self.phi_sites) != self.n_sites:
                raise InvalidParameter("phi_sites must have one entry per site")

    @property
    def omega(self) -> float:
        return math.pi / self.period

    @property
    def half_period_steps(self) -> int:
        """Number of time steps per half period; raises if not integral."""
        ratio = self.period / (2.0 * self.dt)
        if not _is_integral(ratio):
            raise InvalidParameter(
                f"period / (2 dt) = {self.period} / (2 * {self.dt}) = {ratio!r} is not an integer"
            )
        return int(round(ratio))

    @property
    def coupled(self) -> bool:
        return self.gamma_l > 0 or self.gamma_r > 0

    def site_phi(self, site: int) -> float:
        return self.phi if self.phi_sites is None else self.phi_sites[site]

    def replace(self, **changes) -> "ModelParams":
        # dt is re-derived unless it is among the changes
        if "dt" not in changes and ("tau" in changes or "bins_per_delay" in changes):
            changes["dt"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["phi_sites"] is not None:
            d["phi_sites"] = list(d["phi_sites"])
        return d


@dataclass(frozen=True)
class DisorderRealization:
    """Site-resolved couplings of the random Ising Hamiltonian."""

    jz_bonds: np.ndarray
    jx_bonds: np.ndarray
    hx_fields: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.hx_fields)

    @classmethod
    def uniform(cls, n_sites: int, jz: float = 0.0, jx: float = 0.0, hx: float = 0.0) -> "DisorderRealization":
        """Clean (disorder-free) couplings, mostly for tests."""
        nb = max(n_sites - 1, 0)
        return cls(np.full(nb, float(jz)), np.full(nb, float(jx)), np.full(n_sites, float(hx)))


def sample_disorder(p: ModelParams, realization_index: int) -> DisorderRealization:
    """Draw one disorder realization.

    Each realization uses its own counter-based Philox stream keyed by
    ``(seed, realization_index)``, so draws do not depend on the order in
    which realizations are generated.
    """
    ss = np.random.SeedSequence(entropy=int(p.seed), spawn_key=(int(realization_index),))
    rng = np.random.Generator(np.random.Philox(ss))
    nb = p.n_sites - 1
    jz = rng.uniform(-p.jz, p.jz, size=nb) if p.jz > 0 else np.zeros(nb)
    jx = rng.uniform(-p.jx, p.jx, size=nb) if p.jx > 0 else np.zeros(nb)
    hx = rng.uniform(-p.hx, p.hx, size=p.n_sites) if p.hx > 0 else np.zeros(p.n_sites)
    return DisorderRealization(jz, jx, hx)


def build_kick_slice(p: ModelParams) -> np.ndarray:
    """Single-site kick for one time step, ``exp(-i dt (omega - epsilon) sigma^x)``."""
    theta = p.dt * (p.omega - p.epsilon)
    return math.cos(theta) * I2 - 1j * math.sin(theta) * SX


def _rotation(theta: float, pauli: np.ndarray) -> np.ndarray:
    return math.cos(theta) * np.eye(len(pauli), dtype=complex) - 1j * math.sin(theta) * pauli


def _bond_gate(jz: float, jx: float, dt: float) -> np.ndarray:
    # zz and xx commute, and both square to the identity
    zz = np.kron(SZ, SZ)
    xx = np.kron(SX, SX)
    return _rotation(dt * jz, zz) @ _rotation(dt * jx, xx)


def build_ising_slices(p: ModelParams, d: DisorderRealization) -> list:
    """Trotter layers for one time step of the random Ising Hamiltonian.

    Returns a list of layers applied in order; each layer is a list of
    ``(sites, gate)`` pairs with ``sites`` a 1- or 2-tuple of site indices
    and ``gate`` a ``2x2`` or ``4x4`` unitary (two-site index order
    ``(site_i, site_i+1)``).  Bond ``i`` couples sites ``i`` and ``i + 1``.

    The layers form a symmetric product::

        F(dt/2) O(dt/2) E(dt) O(dt/2) F(dt/2)

    with ``F`` the transverse fields, ``O`` odd bonds and ``E`` even bonds,
    which is second order accurate in ``dt``.
    """
    if d.n_sites != p.n_sites:
        raise InvalidParameter("disorder realization does not match n_sites")
    dt = p.dt
    n = p.n_sites
    fields = [((i,), _rotation(0.5 * dt * d.hx_fields[i], SX)) for i in range(n)]
    even = [((i, i + 1), _bond_gate(d.jz_bonds[i], d.jx_bonds[i], dt)) for i in range(0, n - 1, 2)]
    odd_half = [((i, i + 1), _bond_gate(d.jz_bonds[i], d.jx_bonds[i], 0.5 * dt)) for i in range(1, n - 1, 2)]
    layers = [fields, odd_half, even, odd_half, fields]
    return [layer for layer in layers if layer]


def _annihilator(dim: int, dt: float) -> np.ndarray:
    # dB |m> = sqrt(m dt) |m - 1>
    return np.diag(np.sqrt(np.arange(1, dim) * dt), k=1).astype(complex)


def feedback_generator(p: ModelParams, site: int = 0) -> np.ndarray:
    """Anti-Hermitian generator of the dissipative step on (feedback bin, spin, future bin).

    ``G = -X sigma^+ + X^dagger sigma^-`` with
    ``X = sqrt(gamma_r) exp(-i phi) dB_fb + sqrt(gamma_l) dB_fut``.
    """
    db = _annihilator(p.bin_dim, p.dt)
    ib = np.eye(p.bin_dim, dtype=complex)
    phase = np.exp(-1j * p.site_phi(site))
    x_sp = math.sqrt(p.gamma_r) * phase * np.kron(np.kron(db, SP), ib)
    x_sp = x_sp + math.sqrt(p.gamma_l) * np.kron(np.kron(ib, SP), db)
    return -x_sp + x_sp.conj().T


def build_feedback_gate(p: ModelParams, site: int = 0) -> np.ndarray:
    """Three-body dissipative unitary, factor order (feedback bin, spin, future bin).

    The returned matrix has dimension ``(bin_dim * 2 * bin_dim)``.
    """
    if p.bin_dim < 2:
        raise InvalidParameter("bin_dim must be at least 2")
    return expm_antihermitian(feedback_generator(p, site))


@dataclass(frozen=True)
class GateSet:
    """Precomputed unitaries for one parameter set and disorder draw."""

    kick_slice: np.ndarray
    ising_slices: list
    feedback_gates: list = field(default_factory=list)

    @property
    def feedback_gate(self) -> np.ndarray:
        return self.feedback_gates[0]


def build_gates(p: ModelParams, d: DisorderRealization) -> GateSet:
    fb = [build_feedback_gate(p, i) for i in range(p.n_sites)] if p.coupled else []
    return GateSet(build_kick_slice(p), build_ising_slices(p, d), fb)
