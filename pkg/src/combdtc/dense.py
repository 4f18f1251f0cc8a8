"""Small-system reference engines.

``run_dense_qsse`` runs the same gate protocol as the comb engine on a dense
representation of the spins plus the live time bins.  Without reservoir
coupling it evolves a state vector.  With coupling, retired bins (those past
the feedback window) are traced out exactly, so it evolves a density
operator on ``spins (x) live bins``; nothing is truncated.

``run_lindblad_markov`` integrates the amplitude-damping master equation
with a fixed-step fourth-order scheme and the exact piecewise Hamiltonian.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .engine import MagnetizationSeries, RunConfig, _Recorder, NORM_SLACK
from .errors import InvalidParameter, NumericalFailure, ResourceGuardError
from .model import SX, SZ, DisorderRealization, ModelParams, build_gates

__all__ = [
    "DenseQsse",
    "run_dense_qsse",
    "run_lindblad_markov",
    "LindbladMarkov",
    "compare_series",
    "kick_hamiltonian",
    "ising_hamiltonian",
    "embed",
    "floquet_unitary",
    "MAX_PURE_DIM",
    "MAX_MIXED_DIM",
    "MAX_LINDBLAD_SITES",
    "check_guard",
]

MAX_PURE_DIM = 1 << 16
MAX_MIXED_DIM = 4096
MAX_LINDBLAD_SITES = 8


def _live_bins(p: ModelParams, mode: str) -> int:
    if not p.coupled:
        return 0
    if p.gamma_r == 0:
        # Markovian: individual mode keeps no bins, global mode one transient fresh bin
        return 0 if mode == "individual" else 1
    l = p.bins_per_delay
    return p.n_sites * l if mode == "individual" else l + 1


def check_guard(p: ModelParams, engine: str = "dense_qsse", mode: str | None = None) -> None:
    """Raise :class:`ResourceGuardError` if a dense run of ``p`` would exceed the size limits."""
    n = p.n_sites
    if engine == "lindblad":
        if n > MAX_LINDBLAD_SITES:
            raise ResourceGuardError(f"Lindblad integrator limited to {MAX_LINDBLAD_SITES} sites, got {n}")
        return
    mode = mode or p.reservoir
    if mode not in ("individual", "global"):
        raise InvalidParameter(f"unknown reservoir mode {mode!r}")
    if not p.coupled:
        if 2**n > MAX_PURE_DIM:
            raise ResourceGuardError(f"dense state of dimension 2^{n} exceeds guard {MAX_PURE_DIM}")
        return
    total = 2**n * p.bin_dim ** _live_bins(p, mode)
    if total > MAX_MIXED_DIM:
        raise ResourceGuardError(
            f"dense density operator of dimension {total} exceeds guard {MAX_MIXED_DIM} "
            f"(n_sites={n}, mode={mode}, bins_per_delay={p.bins_per_delay}, bin_dim={p.bin_dim})"
        )


def embed(op: np.ndarray, sites, n: int) -> np.ndarray:
    """Dense operator on ``n`` spins acting as ``op`` on consecutive ``sites``."""
    k = len(sites)
    left = np.eye(2 ** sites[0])
    right = np.eye(2 ** (n - sites[0] - k))
    return np.kron(np.kron(left, op), right)


def kick_hamiltonian(p: ModelParams) -> np.ndarray:
    n = p.n_sites
    return sum((p.omega - p.epsilon) * embed(SX, [i], n) for i in range(n))


def ising_hamiltonian(p: ModelParams, d: DisorderRealization) -> np.ndarray:
    n = p.n_sites
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n - 1):
        h += d.jz_bonds[i] * embed(np.kron(SZ, SZ), [i, i + 1], n)
        h += d.jx_bonds[i] * embed(np.kron(SX, SX), [i, i + 1], n)
    for i in range(n):
        h += d.hx_fields[i] * embed(SX, [i], n)
    return h


def floquet_unitary(p: ModelParams, d: DisorderRealization) -> np.ndarray:
    """Exact one-period propagator: kick half followed by Ising half."""
    t2 = 0.5 * p.period
    return scipy.linalg.expm(-1j * t2 * ising_hamiltonian(p, d)) @ scipy.linalg.expm(-1j * t2 * kick_hamiltonian(p))


def _layers_unitary(layers, n: int) -> np.ndarray:
    u = np.eye(2**n, dtype=complex)
    for layer in layers:
        for sites, g in layer:
            u = embed(g, list(sites), n) @ u
    return u


def _apply(t: np.ndarray, op: np.ndarray, axes) -> np.ndarray:
    """Apply matrix ``op`` to tensor axes ``axes`` (op index order follows ``axes``)."""
    k = len(axes)
    dims = [t.shape[a] for a in axes]
    op = op.reshape(dims + dims)
    out = np.tensordot(op, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


class DenseQsse:
    """Exact dense evolution of spins plus live time bins.

    The state is either a vector (uncoupled runs) or a density operator
    stored as a tensor with ket axes followed by bra axes.  Axes
    ``0 .. n - 1`` are the spins; bin axes follow.  ``individual`` mode keeps
    ``bins_per_delay`` live bins per spin, ``global`` mode one shared stream
    of ``bins_per_delay`` live bins.
    """

    def __init__(self, p: ModelParams, d: DisorderRealization, mode: str | None = None):
        self.p = p
        self.mode = mode or p.reservoir
        if self.mode not in ("individual", "global"):
            raise InvalidParameter(f"unknown reservoir mode {self.mode!r}")
        check_guard(p, "dense_qsse", self.mode)
        n, dim = p.n_sites, p.bin_dim
        self.n = n
        self.gates = build_gates(p, d)
        self.u_kick = _layers_unitary([[((i,), self.gates.kick_slice) for i in range(n)]], n)
        self.u_ising = _layers_unitary(self.gates.ising_slices, n)
        self.coupled = p.coupled
        self.markov = p.gamma_r == 0
        if not self.coupled:
            self.psi = np.zeros(2**n, dtype=complex)
            self.psi[int("".join(str(i % 2) for i in range(n)), 2)] = 1.0
            self.rho = None
            self.n_bins = 0
            return
        l = p.bins_per_delay
        # the fresh bin of global mode only lives inside one dissipation step
        self.n_bins = _live_bins(p, self.mode) - (1 if self.mode == "global" else 0)
        self.psi = None
        shape = (2,) * n + (dim,) * self.n_bins
        rho = np.zeros(shape + shape, dtype=complex)
        idx = tuple(i % 2 for i in range(n)) + (0,) * self.n_bins
        rho[idx + idx] = 1.0
        self.rho = rho
        # individual mode: FIFO of bin axes per site, oldest first
        self.site_bins = [list(range(n + i * l, n + (i + 1) * l)) for i in range(n)] if not self.markov else None
        if self.mode == "global":
            self._global_step_unitaries()
        else:
            self._build_channels()

    @property
    def nax(self) -> int:
        return self.n + self.n_bins

    def _build_channels(self) -> None:
        dim = self.p.bin_dim
        self.superops = []
        for i in range(self.n):
            u = self.gates.feedback_gates[i].reshape(dim, 2, dim, dim, 2, dim)  # (m', p', f', m, p, f)
            if self.markov:
                kraus = [u[0, :, f, 0, :, 0] for f in range(dim)]  # (p', p)
            else:
                kraus = [u[m, :, :, :, :, 0].transpose(1, 0, 2, 3).reshape(2 * dim, 2 * dim) for m in range(dim)]
            # rows (ket out, bra out), columns (ket in, bra in)
            self.superops.append(sum(np.kron(k, k.conj()) for k in kraus))

    # --------------------------------------------------------------
    def _system(self, u: np.ndarray) -> None:
        if self.rho is None:
            self.psi = u @ self.psi
            return
        s = 2**self.n
        shape = self.rho.shape
        # spins are the leading ket axes and the leading bra axes
        r = (u @ self.rho.reshape(s, -1)).reshape(shape)
        k = int(np.prod(shape[: self.nax]))
        r = np.tensordot(r.reshape(k, s, -1), u.conj(), axes=(1, 1))  # (ket, bra bins, bra spins)
        self.rho = r.transpose(0, 2, 1).reshape(shape)

    def kick_step(self) -> None:
        if self.coupled and self.mode == "global":
            self._global_step("kick")
            return
        self._system(self.u_kick)
        self._dissipate()

    def ising_step(self) -> None:
        if self.coupled and self.mode == "global":
            self._global_step("ising")
            return
        self._system(self.u_ising)
        self._dissipate()

    def _dissipate(self) -> None:
        if not self.coupled:
            return
        nax = self.nax
        for i in range(self.n):
            if self.markov:
                self.rho = _apply(self.rho, self.superops[i], [i, nax + i])
            else:
                # the fresh bin reuses the axis of the retired feedback bin
                fifo = self.site_bins[i]
                b = fifo.pop(0)
                self.rho = _apply(self.rho, self.superops[i], [b, i, nax + b, nax + i])
                fifo.append(b)

    def _global_step_unitaries(self) -> None:
        """Fold system step and all site gates into one unitary per step type.

        Axes: spins, oldest live bin (absent when Markovian), fresh bin.
        Sites couple to the shared stream one after another.
        """
        n, dim = self.n, self.p.bin_dim
        dims = (2,) * n + ((dim, dim) if not self.markov else (dim,))
        size = int(np.prod(dims))
        w = np.eye(size, dtype=complex).reshape(dims + (size,))
        for i in range(n):
            u = self.gates.feedback_gates[i]
            if self.markov:
                u = u.reshape(dim, 2, dim, dim, 2, dim)[0, :, :, 0, :, :].reshape(2 * dim, 2 * dim)
                w = _apply(w, u, [i, n])
            else:
                w = _apply(w, u, [n, i, n + 1])
        w = w.reshape(size, size)
        eye = np.eye(size >> n)
        self.step_unitaries = {"kick": w @ np.kron(self.u_kick, eye), "ising": w @ np.kron(self.u_ising, eye)}
        # fresh bin in vacuum, retired bin traced: a Kraus map on the stored state
        self.use_kraus = self.n_bins <= 1
        self.step_kraus = {k: self._step_kraus(v) for k, v in self.step_unitaries.items()} if self.use_kraus else None

    def _step_kraus(self, v: np.ndarray) -> list:
        dim, s = self.p.bin_dim, 2**self.n
        v0 = v.reshape(v.shape[0], -1, dim)[:, :, 0]
        if self.markov:
            return [v0.reshape(s, dim, s)[:, f, :] for f in range(dim)]
        return [v0.reshape(s, dim, dim, s * dim)[:, b].reshape(s * dim, s * dim) for b in range(dim)]

    def _global_step(self, kind: str) -> None:
        """Append a vacuum bin, evolve, and retire the oldest bin of the stream."""
        dim, n, nax = self.p.bin_dim, self.n, self.nax
        ket = self.rho.shape[:nax]
        k = int(np.prod(ket))
        if self.use_kraus:
            rho = self.rho.reshape(k, k)
            self.rho = sum(a @ rho @ a.conj().T for a in self.step_kraus[kind]).reshape(self.rho.shape)
            return
        v = self.step_unitaries[kind]
        e00 = np.zeros((dim, dim))
        e00[0, 0] = 1.0
        rho = np.kron(self.rho.reshape(k, k), e00)
        axes = list(range(n)) + ([n] if not self.markov else []) + [nax]
        if len(axes) == nax + 1:
            rho = v @ rho @ v.conj().T
            rho = rho.reshape(ket + (dim,) + ket + (dim,))
        else:
            rho = rho.reshape(ket + (dim,) + ket + (dim,))
            rho = _apply(rho, v, axes)
            rho = _apply(rho, v.conj(), [nax + 1 + a for a in axes])
        # bins are stored oldest first, so the fresh bin ends up last
        retired = nax if self.markov else n
        self.rho = np.trace(rho, axis1=retired, axis2=nax + 1 + retired)

    # --------------------------------------------------------------
    def sz_profile(self) -> np.ndarray:
        n = self.n
        if self.rho is None:
            probs = np.abs(self.psi.reshape((2,) * n)) ** 2
        else:
            dim = int(np.prod(self.rho.shape[: self.nax]))
            diag = np.einsum("ii->i", self.rho.reshape(dim, dim)).real
            probs = diag.reshape(self.rho.shape[: self.nax])
            if self.n_bins:
                probs = probs.sum(axis=tuple(range(n, self.nax)))
        total = probs.sum()
        out = np.empty(n)
        for i in range(n):
            marg = np.moveaxis(probs, i, 0).reshape(2, -1).sum(axis=1)
            out[i] = (marg[0] - marg[1]) / total
        return out

    def trace(self) -> float:
        if self.rho is None:
            return float(np.vdot(self.psi, self.psi).real)
        dim = int(np.prod(self.rho.shape[: self.nax]))
        return float(np.trace(self.rho.reshape(dim, dim)).real)


def run_dense_qsse(p: ModelParams, d: DisorderRealization, rc: RunConfig = RunConfig(),
                   mode: str | None = None) -> MagnetizationSeries:
    """Exact dense run of the stroboscopic protocol (see module docstring)."""
    n_half = p.half_period_steps
    sim = DenseQsse(p, d, mode)
    rec = _Recorder(p, rc)
    recorded = set(rc.record_periods())
    rec.add(0, sim.sz_profile(), 0.0, 1)
    for n in range(1, rc.periods + 1):
        for _ in range(n_half):
            sim.kick_step()
        for _ in range(n_half):
            sim.ising_step()
        if n in recorded:
            tr = sim.trace()
            if abs(tr - 1.0) > NORM_SLACK:
                raise NumericalFailure(f"dense trace drifted to {tr!r}")
            rec.add(n, sim.sz_profile(), 0.0, 1)
    return rec.series(engine="dense_qsse", mode=sim.mode)


class LindbladMarkov:
    """Amplitude-damping master equation for the Neel-initialised chain.

    ``drho/dt = -i[H, rho] + gamma_l sum_i (s-_i rho s+_i - {s+_i s-_i, rho} / 2)``
    with ``H`` the kick Hamiltonian during the first half period and the
    Ising Hamiltonian during the second.  Each step of length ``h`` uses the
    integrating-factor (Lawson) form of classical RK4: the unitary part is
    applied exactly, RK4 handles the dissipator.  The scheme is fourth
    order and reduces to exact unitary evolution when ``gamma_l = 0``.
    """

    def __init__(self, p: ModelParams, d: DisorderRealization, substeps: int = 1):
        check_guard(p, "lindblad")
        n = self.n = p.n_sites
        self.p = p
        self.h = p.dt / substeps
        self.steps_per_half = p.half_period_steps * substeps
        self.gamma = p.gamma_l
        # diagonal of sum_i s+_i s-_i: number of up spins (bit 0) in each basis state
        bits = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
        self.n_up = (n - bits.sum(axis=1)).astype(float)
        self.props = []
        for ham in (kick_hamiltonian(p), ising_hamiltonian(p, d)):
            w, v = np.linalg.eigh(ham)
            self.props.append((v * np.exp(-0.5j * self.h * w)) @ v.conj().T)
        self.rho = np.zeros((2**n, 2**n), dtype=complex)
        idx = int("".join(str(i % 2) for i in range(n)), 2)
        self.rho[idx, idx] = 1.0

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.zeros_like(rho)
        for i in range(n):
            r = rho.reshape(2**i, 2, 2 ** (n - i - 1), 2**i, 2, 2 ** (n - i - 1))
            o = out.reshape(r.shape)
            o[:, 1, :, :, 1, :] += r[:, 0, :, :, 0, :]
        out -= 0.5 * (self.n_up[:, None] * rho + rho * self.n_up[None, :])
        return self.gamma * out

    def step(self, u_half: np.ndarray) -> None:
        h = self.h
        ud = u_half.conj().T

        def e(x):
            return u_half @ x @ ud

        rho = self.rho
        if self.gamma == 0.0:
            self.rho = e(e(rho))
            return
        b = e(rho)
        c = e(b)
        e1 = e(self.dissipator(rho))
        d2 = self.dissipator(b + 0.5 * h * e1)
        d3 = self.dissipator(b + 0.5 * h * d2)
        ed3 = e(d3)
        d4 = self.dissipator(c + h * ed3)
        self.rho = c + (h / 6.0) * (e(e1 + 2.0 * d2) + 2.0 * ed3 + d4)

    def period(self) -> None:
        for u in self.props:
            for _ in range(self.steps_per_half):
                self.step(u)

    def sz_profile(self) -> np.ndarray:
        n = self.n
        probs = np.diag(self.rho).real.reshape((2,) * n)
        tr = probs.sum()
        return np.array([np.moveaxis(probs, i, 0).reshape(2, -1).sum(axis=1) @ [1.0, -1.0] for i in range(n)]) / tr

    def trace(self) -> float:
        return float(np.trace(self.rho).real)


def run_lindblad_markov(p: ModelParams, d: DisorderRealization, rc: RunConfig = RunConfig(),
                        substeps: int = 1) -> MagnetizationSeries:
    """Integrate the Markovian master equation (rate ``gamma_l``) and record ``M(nT)``.

    ``gamma_r`` and the feedback parameters are ignored.  Each time step
    ``dt`` is split into ``substeps`` integrator steps.
    """
    sim = LindbladMarkov(p, d, substeps)
    rec = _Recorder(p, rc)
    recorded = set(rc.record_periods())
    rec.add(0, sim.sz_profile(), 0.0, 1)
    for period in range(1, rc.periods + 1):
        sim.period()
        if period in recorded:
            tr = sim.trace()
            if abs(tr - 1.0) > NORM_SLACK:
                raise NumericalFailure(f"Lindblad trace drifted to {tr!r}")
            rec.add(period, sim.sz_profile(), 0.0, 1)
    return rec.series(engine="lindblad")


def compare_series(a, b) -> float:
    """Largest absolute difference of the staggered magnetization on a shared grid."""
    from .engine import deviation_trace

    return float(np.max(deviation_trace(a, b)))
