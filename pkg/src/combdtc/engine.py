"""Stroboscopic Floquet protocol on the comb MPS, and disorder averaging.

One period consists of ``2 * half_period_steps`` time steps of length
``dt``.  During the first half every step applies the kick slice to all
spins, during the second half one symmetric Trotter step of the random
Ising Hamiltonian.  Each step is followed by the dissipative feedback gates
on every site, so the environment acts during the whole period.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .comb import CombMps, TruncationPolicy, init_neel_vacuum
from .errors import ContractError, InvalidParameter, NumericalFailure
from .model import DisorderRealization, ModelParams, build_gates, sample_disorder

logger = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "MagnetizationSeries",
    "AveragedSeries",
    "run_floquet",
    "staggered_magnetization",
    "deviation_trace",
    "disorder_average",
    "run_engine",
    "ENGINES",
]

ENGINES = ("comb", "dense_qsse", "lindblad")
DEAD_BIN_MODES = ("fold", "prune", "keep")

# roundoff allowance on top of the truncation budget for norm checks
NORM_SLACK = 1e-8


@dataclass(frozen=True)
class RunConfig:
    """How long to run and what to record."""

    periods: int = 100
    measure_every: int = 1
    record_bonds: bool = False
    record_entropy: bool = False

    def __post_init__(self):
        if self.periods < 1:
            raise InvalidParameter("periods must be >= 1")
        if self.measure_every < 1:
            raise InvalidParameter("measure_every must be >= 1")

    def record_periods(self) -> list[int]:
        return list(range(0, self.periods + 1, self.measure_every))


@dataclass
class MagnetizationSeries:
    """Stroboscopic record of one run.

    ``sz_profiles[k, i]`` is ``<sigma^z_i>`` at ``times[k]``;
    ``norm_error`` is the accumulated truncation weight and ``max_bond``
    the largest bond dimension in the network at that time.
    """

    periods: np.ndarray
    times: np.ndarray
    m_values: np.ndarray
    sz_profiles: np.ndarray
    norm_error: np.ndarray
    max_bond: np.ndarray
    entropies: Optional[np.ndarray] = None
    bond_dims: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.m_values)


@dataclass
class AveragedSeries:
    """Pointwise mean and standard deviation over disorder realizations."""

    periods: np.ndarray
    times: np.ndarray
    m_mean: np.ndarray
    m_std: np.ndarray
    sz_mean: np.ndarray
    norm_error: np.ndarray
    max_bond: np.ndarray
    n_realizations: int
    runs: list = field(default_factory=list, repr=False)


def staggered_magnetization(sz_profile) -> float:
    """``(1/N) sum_i (-1)^i <sigma^z_i>`` with site 0 carrying the plus sign."""
    sz = np.asarray(sz_profile, dtype=float)
    signs = np.where(np.arange(sz.shape[-1]) % 2 == 0, 1.0, -1.0)
    return float(np.dot(sz, signs) / sz.shape[-1])


def deviation_trace(a, b) -> np.ndarray:
    """``|a.m - b.m|`` at every recorded period; both series must share a grid."""
    _check_grid(a, b)
    return np.abs(_m(a) - _m(b))


def _m(series) -> np.ndarray:
    return series.m_values if isinstance(series, MagnetizationSeries) else series.m_mean


def _check_grid(a, b) -> None:
    if len(a.periods) != len(b.periods) or np.any(a.periods != b.periods):
        raise ContractError("series are recorded on different period grids")


class _Recorder:
    def __init__(self, p: ModelParams, rc: RunConfig):
        self.p, self.rc = p, rc
        self.periods, self.sz, self.norm_error, self.max_bond = [], [], [], []
        self.entropies, self.bonds = [], []

    def add(self, period, sz, norm_error, max_bond, entropy=None, bonds=None):
        self.periods.append(period)
        self.sz.append(np.asarray(sz, dtype=float))
        self.norm_error.append(float(norm_error))
        self.max_bond.append(int(max_bond))
        if entropy is not None:
            self.entropies.append(entropy)
        if bonds is not None:
            self.bonds.append(bonds)

    def series(self, **meta) -> MagnetizationSeries:
        periods = np.array(self.periods, dtype=int)
        sz = np.array(self.sz)
        return MagnetizationSeries(
            periods=periods,
            times=periods * self.p.period,
            m_values=np.array([staggered_magnetization(s) for s in sz]),
            sz_profiles=sz,
            norm_error=np.array(self.norm_error),
            max_bond=np.array(self.max_bond, dtype=int),
            entropies=np.array(self.entropies) if self.entropies else None,
            bond_dims=self.bonds or None,
            meta={"n_sites": self.p.n_sites, **meta},
        )


def _check_norm(state: CombMps) -> None:
    n2 = state.norm2()
    budget = state.accumulated_truncation
    if n2 > 1.0 + NORM_SLACK or 1.0 - n2 > budget + NORM_SLACK:
        raise NumericalFailure(f"norm^2 = {n2!r} drifted beyond the truncation budget {budget:.3e}")


class _CombStepper:
    """Applies the per-step gate sequence to a :class:`CombMps`."""

    def __init__(self, p: ModelParams, d: DisorderRealization, policy: TruncationPolicy, dead_bins: str):
        if p.reservoir != "individual":
            raise InvalidParameter("the comb engine supports individual reservoirs only; use dense_qsse")
        if dead_bins not in DEAD_BIN_MODES:
            raise InvalidParameter(f"dead_bins must be one of {DEAD_BIN_MODES}")
        self.p = p
        self.gates = build_gates(p, d)
        self.policy = policy
        self.dead_bins = dead_bins
        self.coupled = p.coupled
        # with gamma_r = 0 the feedback bin is never touched: no swaps needed
        self.swap_l = p.bins_per_delay if p.gamma_r > 0 else 1
        self._sweep_right = True

    def kick(self, state: CombMps) -> None:
        k = self.gates.kick_slice
        for i in range(state.n_sites):
            state.apply_single(i, k)

    def ising(self, state: CombMps) -> None:
        for layer in self.gates.ising_slices:
            if len(layer[0][0]) == 1:
                for (i,), g in layer:
                    state.apply_single(i, g)
                continue
            if self._sweep_right:
                for (i, j), g in layer:
                    state.apply_spine_gate(g, (i, j), self.policy, absorb="right")
            else:
                for (i, j), g in reversed(layer):
                    state.apply_spine_gate(g, (i, j), self.policy, absorb="left")
            self._sweep_right = not self._sweep_right

    def dissipate(self, state: CombMps) -> None:
        if not self.coupled:
            return
        n = state.n_sites
        order = range(n) if state.center[0] <= n // 2 else range(n - 1, -1, -1)
        l = self.swap_l
        for i in order:
            state.move_center(i)
            if l > 1:
                state.swap_feedback_bin(i, l, self.policy)
            state.append_bin(i)
            state.apply_feedback_gate(i, self.gates.feedback_gates[i], self.policy)
            if l > 1:
                state.unswap_feedback_bin(i, l, self.policy, start=1)
            if self.dead_bins == "fold":
                state.fold_dead_bins(i)


def run_floquet(p: ModelParams, d: DisorderRealization, rc: RunConfig = RunConfig(), dead_bins: str = "fold",
                prune_tol: float = 1e-12, state: Optional[CombMps] = None) -> MagnetizationSeries:
    """Evolve the Neel state on the comb MPS and record ``M(nT)``.

    ``dead_bins`` chooses how bins that left the feedback window are
    handled: ``"fold"`` drops them exactly into a dangling environment leg,
    ``"prune"`` drops them only where they factor off (checked once per
    period with ``prune_tol``), ``"keep"`` retains everything.
    """
    n_half = p.half_period_steps
    policy = TruncationPolicy(max_bond=p.max_bond, cutoff=p.cutoff)
    stepper = _CombStepper(p, d, policy, dead_bins)
    if state is None:
        state = init_neel_vacuum(p)
    rec = _Recorder(p, rc)
    recorded = set(rc.record_periods())

    def record(n):
        sz = state.measure_all_sz()
        ent = None
        if rc.record_entropy:
            ent = np.array([state.bond_entropy(("arm", i, 0)) for i in range(p.n_sites)])
        bonds = state.bond_dims() if rc.record_bonds else None
        rec.add(n, sz, state.accumulated_truncation, state.max_bond(), ent, bonds)

    record(0)
    for n in range(1, rc.periods + 1):
        for _ in range(n_half):
            stepper.kick(state)
            stepper.dissipate(state)
        for _ in range(n_half):
            stepper.ising(state)
            stepper.dissipate(state)
        if dead_bins == "prune":
            state.prune_dead_bins(prune_tol)
        if n in recorded:
            _check_norm(state)
            record(n)
            logger.debug("period %d: chi=%d trunc=%.2e", n, state.max_bond(), state.accumulated_truncation)
    return rec.series(engine="comb", dead_bins=dead_bins)


def run_engine(engine: str, p: ModelParams, d: DisorderRealization, rc: RunConfig) -> MagnetizationSeries:
    """Dispatch one run to the named engine (``comb``, ``dense_qsse`` or ``lindblad``)."""
    if engine == "comb":
        return run_floquet(p, d, rc)
    from . import dense

    if engine == "dense_qsse":
        return dense.run_dense_qsse(p, d, rc)
    if engine == "lindblad":
        return dense.run_lindblad_markov(p, d, rc)
    raise InvalidParameter(f"unknown engine {engine!r}; expected one of {ENGINES}")


def _one_realization(args):
    engine, p, rc, index = args
    return run_engine(engine, p, sample_disorder(p, index), rc)


def disorder_average(p: ModelParams, rc: RunConfig = RunConfig(), n_realizations: int = 8, engine: str = "comb",
                     workers: Optional[int] = None) -> AveragedSeries:
    """Run realizations ``0 .. n_realizations - 1`` and average pointwise.

    ``workers`` defaults to the ``COMBDTC_WORKERS`` environment variable
    (or 1).  Results are assembled in realization order, so the output does
    not depend on the worker count.
    """
    if n_realizations < 1:
        raise InvalidParameter("n_realizations must be >= 1")
    if workers is None:
        workers = int(os.environ.get("COMBDTC_WORKERS", "1"))
    jobs = [(engine, p, rc, k) for k in range(n_realizations)]
    if workers > 1 and n_realizations > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_realizations)) as pool:
            runs = list(pool.map(_one_realization, jobs))
    else:
        runs = [_one_realization(job) for job in jobs]
    return average_series(runs)


def average_series(runs: list) -> AveragedSeries:
    """Pointwise mean/std of a list of :class:`MagnetizationSeries` on one grid."""
    for r in runs[1:]:
        _check_grid(runs[0], r)
    m = np.array([r.m_values for r in runs])
    return AveragedSeries(
        periods=runs[0].periods,
        times=runs[0].times,
        m_mean=m.mean(axis=0),
        m_std=m.std(axis=0),
        sz_mean=np.mean([r.sz_profiles for r in runs], axis=0),
        norm_error=np.max([r.norm_error for r in runs], axis=0),
        max_bond=np.max([r.max_bond for r in runs], axis=0),
        n_realizations=len(runs),
        runs=runs,
    )
