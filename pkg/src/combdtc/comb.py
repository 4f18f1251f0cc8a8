"""Two-dimensional (comb) matrix product state.

The network has a one-dimensional *spine* of spin tensors.  Every spine
tensor carries a fourth leg leading into an *arm*: an MPS of reservoir time
bins for that spin.  Index conventions::

    spine[i] : (left, right, spin, arm)
    arms[i][j] : (inner, outer, photon)

``arms[i][0]`` touches the spine; the newest bin is always written there and
older bins are pushed outward.  Between steps the feedback bin written
``window`` steps ago sits at position ``window - 1``; positions
``>= window`` hold dead bins that never interact again.

The network is kept in canonical form around a single orthogonality center.
Arm tensors are isometric toward the spine unless the center itself is
inside that arm.  ``center == (i, -1)`` puts the center on spine site ``i``;
``center == (i, j)`` puts it on ``arms[i][j]``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import robust_svd, truncation_rank

__all__ = ["TruncationPolicy", "CombMps", "init_neel_vacuum", "CHECKPOINT_VERSION"]

CHECKPOINT_MAGIC = b"CMBM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond truncation rule for every SVD in the network.

    ``cutoff`` bounds the relative discarded squared weight per SVD and
    ``max_bond`` caps the kept rank.  A tail whose relative squared weight is
    below ``zero_weight`` is always dropped: it cannot change the squared
    norm in double precision, yet keeping it inflates every bond of a
    dissipative run.  The dropped weight is still counted.
    """

    max_bond: int = 64
    cutoff: float = 0.0
    track_discarded: bool = True
    zero_weight: float = 1e-16

    def __post_init__(self):
        if self.max_bond < 1:
            raise ContractError("max_bond must be positive")
        if not 0 <= self.cutoff < 1:
            raise ContractError("cutoff must lie in [0, 1)")

    @classmethod
    def exact(cls) -> "TruncationPolicy":
        return cls(max_bond=1 << 30, cutoff=0.0, zero_weight=0.0)


EXACT = TruncationPolicy.exact()


def _split(mat: np.ndarray, policy: TruncationPolicy):
    """SVD with truncation; returns (u, s, vh, discarded absolute weight)."""
    u, s, vh = robust_svd(mat)
    r, rel = truncation_rank(s, policy.max_bond, max(policy.cutoff, policy.zero_weight))
    if s[0] == 0.0:
        return u[:, :1], s[:1], vh[:1], 0.0
    total = float(np.dot(s, s))
    return u[:, :r], s[:r], vh[:r], rel * total


class CombMps:
    """Comb-shaped MPS of a spin chain with one time-bin arm per spin."""

    def __init__(self, spine, arms, window: int, bin_dim: int, center=(0, -1)):
        if len(spine) != len(arms):
            raise ShapeError("spine and arms must have equal length")
        self.spine = [np.asarray(t, dtype=complex) for t in spine]
        self.arms = [[np.asarray(t, dtype=complex) for t in arm] for arm in arms]
        self.window = int(window)
        self.bin_dim = int(bin_dim)
        self.center = tuple(center)
        self.gate_truncation = 0.0
        self.swap_truncation = 0.0
        self.prune_truncation = 0.0
        self.bin_clock = [0] * len(spine)

    # ------------------------------------------------------------------
    # construction and bookkeeping

    @classmethod
    def neel(cls, n_sites: int, window: int = 1, bin_dim: int = 2) -> "CombMps":
        """Neel product state ``|up down up ...>`` with vacuum arms of ``window`` bins."""
        spine = []
        for i in range(n_sites):
            t = np.zeros((1, 1, 2, 1), dtype=complex)
            t[0, 0, i % 2, 0] = 1.0
            spine.append(t)
        arms = [[_vacuum_bin(1, bin_dim) for _ in range(window)] for _ in range(n_sites)]
        return cls(spine, arms, window, bin_dim)

    @property
    def n_sites(self) -> int:
        return len(self.spine)

    @property
    def accumulated_truncation(self) -> float:
        return self.gate_truncation + self.swap_truncation + self.prune_truncation

    def copy(self) -> "CombMps":
        other = CombMps(self.spine, self.arms, self.window, self.bin_dim, self.center)
        other.spine = [t.copy() for t in self.spine]
        other.arms = [[t.copy() for t in arm] for arm in self.arms]
        other.gate_truncation = self.gate_truncation
        other.swap_truncation = self.swap_truncation
        other.prune_truncation = self.prune_truncation
        other.bin_clock = list(self.bin_clock)
        return other

    def arm_lengths(self) -> list[int]:
        return [len(arm) for arm in self.arms]

    def bond_dims(self) -> list[int]:
        """Spine bond dimensions, bond ``i`` joining sites ``i`` and ``i + 1``."""
        return [t.shape[1] for t in self.spine[:-1]]

    def max_bond(self) -> int:
        dims = [1]
        dims += [t.shape[1] for t in self.spine]
        dims += [t.shape[3] for t in self.spine]
        dims += [b.shape[1] for arm in self.arms for b in arm]
        return int(max(dims))

    def norm2(self) -> float:
        c = self._center_tensor()
        return float(np.vdot(c, c).real)

    def _center_tensor(self) -> np.ndarray:
        i, j = self.center
        return self.spine[i] if j < 0 else self.arms[i][j]

    # ------------------------------------------------------------------
    # orthogonality center motion

    def _spine_step(self, i: int, direction: int) -> None:
        """Move the center from spine site ``i`` to ``i + direction``."""
        t = self.spine[i]
        L, R, p, a = t.shape
        if direction > 0:
            mat = t.transpose(0, 2, 3, 1).reshape(L * p * a, R)
            q, r = np.linalg.qr(mat)
            k = q.shape[1]
            self.spine[i] = q.reshape(L, p, a, k).transpose(0, 3, 1, 2)
            self.spine[i + 1] = np.tensordot(r, self.spine[i + 1], axes=(1, 0))
        else:
            mat = t.transpose(1, 2, 3, 0).reshape(R * p * a, L)
            q, r = np.linalg.qr(mat)
            k = q.shape[1]
            self.spine[i] = q.reshape(R, p, a, k).transpose(3, 0, 1, 2)
            nb = np.tensordot(self.spine[i - 1], r, axes=(1, 1))  # (L, p, a, k)
            self.spine[i - 1] = nb.transpose(0, 3, 1, 2)
        self.center = (i + direction, -1)

    def _arm_out(self, i: int) -> None:
        """Move the center one step outward along arm ``i``."""
        _, j = self.center
        if j < 0:
            t = self.spine[i]
            L, R, p, a = t.shape
            q, r = np.linalg.qr(t.reshape(L * R * p, a))
            self.spine[i] = q.reshape(L, R, p, q.shape[1])
            self.arms[i][0] = np.tensordot(r, self.arms[i][0], axes=(1, 0))
            self.center = (i, 0)
        else:
            t = self.arms[i][j]
            n_in, n_out, m = t.shape
            q, r = np.linalg.qr(t.transpose(0, 2, 1).reshape(n_in * m, n_out))
            self.arms[i][j] = q.reshape(n_in, m, q.shape[1]).transpose(0, 2, 1)
            self.arms[i][j + 1] = np.tensordot(r, self.arms[i][j + 1], axes=(1, 0))
            self.center = (i, j + 1)

    def _arm_in(self, i: int) -> None:
        """Move the center one step inward along arm ``i``."""
        _, j = self.center
        t = self.arms[i][j]
        n_in, n_out, m = t.shape
        q, r = np.linalg.qr(t.reshape(n_in, n_out * m).T)
        k = q.shape[1]
        self.arms[i][j] = q.T.reshape(k, n_out, m)
        if j == 0:
            self.spine[i] = np.tensordot(self.spine[i], r, axes=(3, 1))
            self.center = (i, -1)
        else:
            nb = np.tensordot(self.arms[i][j - 1], r, axes=(1, 1))  # (in, m, k)
            self.arms[i][j - 1] = nb.transpose(0, 2, 1)
            self.center = (i, j - 1)

    def move_center(self, site: int, pos: int = -1) -> None:
        """Relocate the orthogonality center to spine ``site`` or its arm position ``pos``."""
        if not 0 <= site < self.n_sites:
            raise ContractError(f"site {site} out of range")
        i, j = self.center
        if i != site:
            while j >= 0:
                self._arm_in(i)
                j = self.center[1]
            step = 1 if site > i else -1
            while self.center[0] != site:
                self._spine_step(self.center[0], step)
            j = -1
        while j > pos:
            self._arm_in(site)
            j = self.center[1]
        while j < pos:
            self._arm_out(site)
            j = self.center[1]

    # ------------------------------------------------------------------
    # gates on the spine

    def apply_single(self, site: int, gate: np.ndarray) -> None:
        """Apply a 2x2 operator to one spin; no truncation is involved."""
        self.spine[site] = np.tensordot(gate, self.spine[site], axes=(1, 2)).transpose(1, 2, 0, 3)

    def apply_spine_gate(self, gate: np.ndarray, sites: Sequence[int], policy: TruncationPolicy = EXACT,
                         absorb: str = "right") -> float:
        """Apply a one- or two-site unitary to the spine.

        Two-site gates require adjacent sites ``(i, i + 1)`` and use the
        index order ``(spin_i, spin_i+1)``.  ``absorb`` chooses the side
        that holds the orthogonality center afterwards.  Returns the
        discarded weight.
        """
        sites = tuple(int(s) for s in sites)
        if len(sites) == 1:
            if gate.shape != (2, 2):
                raise ShapeError(f"single-site gate must be 2x2, got {gate.shape}")
            self.apply_single(sites[0], gate)
            return 0.0
        if len(sites) != 2 or sites[1] != sites[0] + 1:
            raise ContractError(f"two-site gates need adjacent sites (i, i+1), got {sites}")
        if gate.shape != (4, 4):
            raise ShapeError(f"two-site gate must be 4x4, got {gate.shape}")
        i = sites[0]
        if self.center not in ((i, -1), (i + 1, -1)):
            self.move_center(i if self.center[0] <= i else i + 1)
        # reduced update: split the outer legs off both tensors so the SVD only sees the core
        a, b = self.spine[i], self.spine[i + 1]
        L, R, _, na = a.shape
        R2, nb = b.shape[1], b.shape[3]
        qa, ra = _peel(a.transpose(0, 3, 1, 2).reshape(L * na, R * 2))  # ra: (ka, R p)
        qb, rb = _peel(b.transpose(1, 3, 0, 2).reshape(R2 * nb, R * 2))  # rb: (kb, R q)
        ka, kb = ra.shape[0], rb.shape[0]
        theta = np.tensordot(ra.reshape(ka, R, 2), rb.reshape(kb, R, 2), axes=(1, 1))  # (ka, p, kb, q)
        theta = np.tensordot(gate.reshape(2, 2, 2, 2), theta, axes=([2, 3], [1, 3]))  # (p', q', ka, kb)
        mat = theta.transpose(2, 0, 3, 1).reshape(ka * 2, kb * 2)
        u, s, vh, lost = _split(mat, policy)
        r = len(s)
        if absorb == "right":
            vh = s[:, None] * vh
            self.center = (i + 1, -1)
        else:
            u = u * s
            self.center = (i, -1)
        new_a = (qa @ u.reshape(ka, 2 * r)).reshape(L, na, 2, r)
        self.spine[i] = new_a.transpose(0, 3, 2, 1)
        new_b = (qb @ vh.reshape(r, kb, 2).transpose(1, 0, 2).reshape(kb, r * 2)).reshape(R2, nb, r, 2)
        self.spine[i + 1] = new_b.transpose(2, 0, 3, 1)
        self.gate_truncation += lost
        return lost

    # ------------------------------------------------------------------
    # reservoir arms

    def append_bin(self, site: int) -> None:
        """Insert a vacuum time bin next to the spine on arm ``site``."""
        chi = self.spine[site].shape[3]
        self.arms[site].insert(0, _vacuum_bin(chi, self.bin_dim))
        i, j = self.center
        if i == site and j >= 0:
            self.center = (i, j + 1)
        self.bin_clock[site] += 1

    def _swap_pair(self, site: int, j: int, policy: TruncationPolicy, outward: bool) -> None:
        """Exchange the photon content of bins ``j`` and ``j + 1`` (center on one of them)."""
        arm = self.arms[site]
        theta = np.tensordot(arm[j], arm[j + 1], axes=(1, 0))  # (in, m1, out, m2)
        n_in, _, n_out, _ = theta.shape
        d = self.bin_dim
        mat = theta.transpose(0, 3, 2, 1).reshape(n_in * d, n_out * d)  # (in, m2 | out, m1)
        u, s, vh, lost = _split(mat, policy)
        r = len(s)
        if outward:
            vh = s[:, None] * vh
            self.center = (site, j + 1)
        else:
            u = u * s
            self.center = (site, j)
        arm[j] = u.reshape(n_in, d, r).transpose(0, 2, 1)
        arm[j + 1] = vh.reshape(r, n_out, d)
        self.swap_truncation += lost

    def swap_feedback_bin(self, site: int, l: int, policy: TruncationPolicy = EXACT) -> None:
        """Bring the bin at arm position ``l - 1`` next to the spine.

        Bins ``0 .. l - 2`` each move one place outward.  With ``l == 1``
        nothing is done.  The center returns to the spine site.
        """
        if len(self.arms[site]) < l:
            raise ContractError(f"arm {site} holds {len(self.arms[site])} bins, swap needs {l}")
        if l <= 1:
            return
        self.move_center(site, l - 1)
        for j in range(l - 2, -1, -1):
            self._swap_pair(site, j, policy, outward=False)
        self.move_center(site)

    def unswap_feedback_bin(self, site: int, l: int, policy: TruncationPolicy = EXACT, start: int = 0) -> None:
        """Inverse of :meth:`swap_feedback_bin`: move the bin at ``start`` out to ``start + l - 1``."""
        if len(self.arms[site]) < start + l:
            raise ContractError(f"arm {site} holds {len(self.arms[site])} bins, unswap needs {start + l}")
        if l <= 1:
            return
        self.move_center(site, start)
        for j in range(start, start + l - 1):
            self._swap_pair(site, j, policy, outward=True)
        self.move_center(site)

    def apply_feedback_gate(self, site: int, gate: np.ndarray, policy: TruncationPolicy = EXACT) -> float:
        """Apply a three-body unitary on (feedback bin, spin, future bin).

        Expects the future bin at arm position 0 and the feedback bin at
        position 1 (after :meth:`append_bin`).  Returns the discarded weight.
        """
        d = self.bin_dim
        if gate.shape != (2 * d * d, 2 * d * d):
            raise ContractError(f"feedback gate of shape {gate.shape} does not match bin_dim={d}")
        arm = self.arms[site]
        if len(arm) < 2:
            raise ContractError("feedback gate needs a future bin and a feedback bin on the arm")
        if self.center != (site, -1):
            self.move_center(site)
        t = self.spine[site]
        L, R, _, na = t.shape
        # reduced update: the spine bonds are split off and left untouched
        q, core = _peel(t.reshape(L * R, 2 * na))  # core: (k, p a)
        k = core.shape[0]
        theta = np.tensordot(core.reshape(k, 2, na), arm[0], axes=(2, 0))  # (k, p, b, f)
        theta = np.tensordot(theta, arm[1], axes=(2, 0))  # (k, p, f, o, m)
        n_out = theta.shape[3]
        g = gate.reshape(d, 2, d, d, 2, d)  # (m', p', f', m, p, f)
        theta = np.tensordot(g, theta, axes=([3, 4, 5], [4, 1, 2]))  # (m', p', f', k, o)
        mat = theta.transpose(3, 1, 2, 0, 4).reshape(k * 2 * d, d * n_out)
        u, s, vh, lost1 = _split(mat, policy)
        r1 = len(s)
        arm[1] = vh.reshape(r1, d, n_out).transpose(0, 2, 1)
        rest = (u * s).reshape(k * 2, d * r1)
        u, s, vh, lost2 = _split(rest, policy)
        r0 = len(s)
        arm[0] = vh.reshape(r0, d, r1).transpose(0, 2, 1)
        self.spine[site] = (q @ (u * s).reshape(k, 2 * r0)).reshape(L, R, 2, r0)
        self.gate_truncation += lost1 + lost2
        return lost1 + lost2

    def fold_dead_bins(self, site: int | None = None) -> int:
        """Drop all dead bins (arm positions ``>= window``) exactly.

        The dead tail of an arm is an isometry from its inner bond, because
        every arm tensor is isometric toward the spine.  Removing it leaves
        that bond dangling on the last live bin, which then acts as an
        environment leg; no observable of the remaining network changes.
        Returns the number of bins removed.
        """
        sites = range(self.n_sites) if site is None else [site]
        removed = 0
        for i in sites:
            if self.center[0] == i and self.center[1] >= self.window:
                self.move_center(i)
            extra = len(self.arms[i]) - self.window
            if extra > 0:
                del self.arms[i][self.window:]
                removed += extra
        return removed

    def prune_dead_bins(self, tol: float = 1e-12) -> int:
        """Remove dead bins that factor off from the rest of the state.

        For each arm, walks outward over the dead part and cuts at the first
        bond whose Schmidt spectrum has rank one within ``tol`` (relative
        discarded weight).  Everything beyond the cut is dropped; entangled
        dead bins closer to the spine are retained.  Returns the number of
        bins removed.
        """
        home = self.center[0]
        removed = 0
        for i in range(self.n_sites):
            arm = self.arms[i]
            if len(arm) <= self.window:
                continue
            self.move_center(i, self.window - 1)
            for j in range(self.window - 1, len(arm) - 1):
                t = arm[j]
                n_in, n_out, m = t.shape
                mat = t.transpose(0, 2, 1).reshape(n_in * m, n_out)
                u, s, vh = robust_svd(mat)
                total = float(np.dot(s, s))
                rest = total - float(s[0] ** 2)
                if total == 0.0 or rest <= tol * total:
                    arm[j] = (u[:, :1] * s[:1]).reshape(n_in, m, 1).transpose(0, 2, 1)
                    removed += len(arm) - j - 1
                    del arm[j + 1:]
                    self.prune_truncation += max(rest, 0.0)
                    break
                self._arm_out(i)
            self.move_center(i)
        self.move_center(home)
        return removed

    # ------------------------------------------------------------------
    # observables

    def measure_sz(self, site: int) -> float:
        """``<sigma^z_site>`` normalised by the state norm."""
        self.move_center(site)
        t = self.spine[site]
        up = float(np.vdot(t[:, :, 0, :], t[:, :, 0, :]).real)
        down = float(np.vdot(t[:, :, 1, :], t[:, :, 1, :]).real)
        return (up - down) / (up + down)

    def measure_all_sz(self) -> np.ndarray:
        """``<sigma^z_i>`` for all sites, sweeping from the nearer end."""
        n = self.n_sites
        order = range(n) if self.center[0] <= n // 2 else range(n - 1, -1, -1)
        out = np.empty(n)
        for i in order:
            out[i] = self.measure_sz(i)
        return out

    def schmidt_values(self, bond) -> np.ndarray:
        """Schmidt coefficients across ``("spine", i)`` or ``("arm", i, j)``.

        ``("spine", i)`` is the bond between sites ``i`` and ``i + 1``;
        ``("arm", i, j)`` is the inner bond of ``arms[i][j]``.
        """
        kind = bond[0]
        if kind == "spine":
            i = bond[1]
            self.move_center(i)
            t = self.spine[i]
            L, R, p, a = t.shape
            mat = t.transpose(0, 2, 3, 1).reshape(L * p * a, R)
        elif kind == "arm":
            i, j = bond[1], bond[2]
            if j == 0:
                self.move_center(i)
                t = self.spine[i]
                mat = t.reshape(-1, t.shape[3])
            else:
                self.move_center(i, j - 1)
                t = self.arms[i][j - 1]
                mat = t.transpose(0, 2, 1).reshape(-1, t.shape[1])
        else:
            raise ContractError(f"unknown bond {bond!r}")
        s = np.linalg.svd(mat, compute_uv=False)
        return s / math.sqrt(float(np.dot(s, s)))

    def bond_entropy(self, bond) -> float:
        """Von Neumann entropy (natural log) of the Schmidt spectrum across ``bond``."""
        lam = self.schmidt_values(bond) ** 2
        lam = lam[lam > 1e-300]
        return float(-np.sum(lam * np.log(lam)))

    def check_canonical(self) -> float:
        """Largest deviation from the isometry conditions around the center."""
        worst = 0.0
        ci, cj = self.center
        for i, t in enumerate(self.spine):
            if i == ci and cj < 0:
                continue
            L, R, p, a = t.shape
            if i < ci:
                mat = t.transpose(0, 2, 3, 1).reshape(-1, R)
            elif i > ci:
                mat = t.transpose(1, 2, 3, 0).reshape(-1, L)
            else:
                mat = t.reshape(-1, a)
            worst = max(worst, _isometry_error(mat))
        for i, arm in enumerate(self.arms):
            for j, t in enumerate(arm):
                if i == ci and j == cj:
                    continue
                n_in, n_out, m = t.shape
                if i == ci and j < cj:
                    mat = t.transpose(0, 2, 1).reshape(-1, n_out)
                else:
                    mat = t.reshape(n_in, -1).T
                worst = max(worst, _isometry_error(mat))
        return worst

    def to_dense(self) -> np.ndarray:
        """Full state vector as a tensor, axes grouped per site.

        Site ``i`` contributes ``(spin, photon_0, ..., photon_k, outer)``
        where ``outer`` is the dangling leg of the last bin (extent 1 when
        nothing was folded).  Only sensible for tiny networks.
        """
        blocks = []
        for i in range(self.n_sites):
            t = self.spine[i]  # (L, R, p, a)
            for b in self.arms[i]:
                t = np.tensordot(t, b, axes=(t.ndim - 1, 0))  # ..., out, m
                t = np.moveaxis(t, -1, -2)  # keep bond last
            blocks.append(t)
        psi = blocks[0]
        psi = psi.reshape(psi.shape[1:])  # drop left boundary
        for t in blocks[1:]:
            psi = np.tensordot(psi, t, axes=(0, 0))
            psi = np.moveaxis(psi, -(t.ndim - 1), 0)  # new right bond to front
        return psi.reshape(psi.shape[1:])

    # ------------------------------------------------------------------
    # checkpointing

    def save(self, path) -> None:
        """Write a versioned little-endian binary checkpoint."""
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            ci, cj = self.center
            fh.write(struct.pack("<IIIIii", CHECKPOINT_VERSION, self.n_sites, self.window, self.bin_dim, ci, cj))
            fh.write(struct.pack("<ddd", self.gate_truncation, self.swap_truncation, self.prune_truncation))
            fh.write(struct.pack(f"<{self.n_sites}Q", *self.bin_clock))
            for i in range(self.n_sites):
                _write_tensor(fh, self.spine[i])
                fh.write(struct.pack("<I", len(self.arms[i])))
                for b in self.arms[i]:
                    _write_tensor(fh, b)

    @classmethod
    def load(cls, path) -> "CombMps":
        with open(path, "rb") as fh:
            if fh.read(4) != CHECKPOINT_MAGIC:
                raise ShapeError("not a comb checkpoint")
            version, n, window, bin_dim, ci, cj = struct.unpack("<IIIIii", fh.read(24))
            if version != CHECKPOINT_VERSION:
                raise ShapeError(f"unsupported checkpoint version {version}")
            trunc = struct.unpack("<ddd", fh.read(24))
            clock = list(struct.unpack(f"<{n}Q", fh.read(8 * n)))
            spine, arms = [], []
            for _ in range(n):
                spine.append(_read_tensor(fh))
                (k,) = struct.unpack("<I", fh.read(4))
                arms.append([_read_tensor(fh) for _ in range(k)])
        s = cls(spine, arms, window, bin_dim, (ci, cj))
        s.gate_truncation, s.swap_truncation, s.prune_truncation = trunc
        s.bin_clock = clock
        return s


def init_neel_vacuum(p) -> CombMps:
    """Neel spin chain with each arm pre-padded by ``bins_per_delay`` vacuum bins."""
    return CombMps.neel(p.n_sites, p.bins_per_delay, p.bin_dim)


def _peel(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``mat = q @ r`` with ``q`` an isometry; skipped when it would not shrink anything."""
    m, n = mat.shape
    if m <= n:
        return np.eye(m, dtype=mat.dtype), mat
    return np.linalg.qr(mat)


def _vacuum_bin(chi: int, d: int) -> np.ndarray:
    t = np.zeros((chi, chi, d), dtype=complex)
    t[:, :, 0] = np.eye(chi)
    return t


def _isometry_error(mat: np.ndarray) -> float:
    g = mat.conj().T @ mat
    return float(np.max(np.abs(g - np.eye(g.shape[0])))) if g.size else 0.0


def _write_tensor(fh, t: np.ndarray) -> None:
    fh.write(struct.pack("<I", t.ndim))
    fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
    fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def _read_tensor(fh) -> np.ndarray:
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    count = int(np.prod(shape))
    data = np.frombuffer(fh.read(16 * count), dtype="<c16", count=count)
    return data.reshape(shape).astype(complex)
