"""Tests for the dense reference engines."""

import math

import numpy as np
import pytest

from combdtc.dense import (
    MAX_MIXED_DIM,
    DenseQsse,
    LindbladMarkov,
    check_guard,
    compare_series,
    run_dense_qsse,
    run_lindblad_markov,
)
from combdtc.engine import RunConfig, run_floquet
from combdtc.errors import ContractError, ResourceGuardError
from combdtc.model import DisorderRealization, ModelParams, sample_disorder
from oracles import exact_floquet_m

SHORT = dict(tau=0.005, period=0.05)  # five steps per half period


def no_hamiltonian(**kw):
    p = ModelParams(n_sites=1, jz=0, jx=0, hx=0, **kw)
    return p.replace(epsilon=p.omega)


# ------------------------------------------------------------------ #
# dense QSSE                                                         #
# ------------------------------------------------------------------ #


class TestDenseQsse:
    def test_uncoupled_matches_exact_floquet(self):
        # diagonal Ising part: the Trotter product is exact
        p = ModelParams(n_sites=3, epsilon=0.15, jx=0, hx=0)
        d = sample_disorder(p, 0)
        s = run_dense_qsse(p, d, RunConfig(periods=10))
        want = exact_floquet_m(3, p.period, p.omega - p.epsilon, d.jz_bonds, d.jx_bonds, d.hx_fields, 10)
        np.testing.assert_allclose(s.m_values, want, atol=1e-12)

    def test_uncoupled_matches_comb(self):
        p = ModelParams(n_sites=4, epsilon=0.15)
        d = sample_disorder(p, 2)
        rc = RunConfig(periods=3)
        assert compare_series(run_dense_qsse(p, d, rc), run_floquet(p, d, rc)) < 1e-10

    @pytest.mark.parametrize("mode", ["individual", "global"])
    def test_markovian_closed_form(self, mode):
        p = no_hamiltonian(gamma_l=0.9, **SHORT)
        s = run_dense_qsse(p, DisorderRealization.uniform(1), RunConfig(periods=6), mode=mode)
        k = 2 * p.half_period_steps * s.periods
        want = 2 * np.cos(math.sqrt(0.9 * p.dt)) ** (2 * k) - 1
        np.testing.assert_allclose(s.sz_profiles[:, 0], want, atol=1e-12)

    @pytest.mark.parametrize("gamma_r,l", [(0.0, 1), (0.8, 1), (0.8, 2)])
    def test_single_site_modes_coincide(self, gamma_r, l):
        p = ModelParams(n_sites=1, epsilon=0.1, gamma_l=0.8, gamma_r=gamma_r, phi=2.0, bins_per_delay=l, **SHORT)
        d = sample_disorder(p, 0)
        rc = RunConfig(periods=5)
        a = run_dense_qsse(p, d, rc, mode="individual")
        b = run_dense_qsse(p, d, rc, mode="global")
        assert compare_series(a, b) < 1e-12

    @pytest.mark.parametrize(
        "kw",
        [
            dict(gamma_l=1.0, gamma_r=1.0),
            dict(gamma_l=1.0, gamma_r=1.0, phi=0.4),
            dict(gamma_l=0.7),
            dict(gamma_l=1.0, gamma_r=0.5, bins_per_delay=2, tau=0.01),
        ],
    )
    def test_matches_comb(self, kw):
        base = dict(n_sites=3, epsilon=0.15, **SHORT)
        base.update(kw)
        p = ModelParams(**base)
        d = sample_disorder(p, 1)
        rc = RunConfig(periods=4)
        assert compare_series(run_dense_qsse(p, d, rc), run_floquet(p, d, rc)) < 1e-10

    def test_constructive_feedback_slows_decay(self):
        # N = 1, phi = pi: the reflected emission interferes with the direct one
        kw = dict(gamma_l=1.0, **SHORT)
        rc = RunConfig(periods=20)
        d = DisorderRealization.uniform(1)
        markov = run_dense_qsse(no_hamiltonian(**kw), d, rc)
        fed = run_dense_qsse(no_hamiltonian(gamma_r=1.0, phi=math.pi, **kw), d, rc)
        assert np.all(fed.sz_profiles[1:, 0] > markov.sz_profiles[1:, 0])
        comb = run_floquet(no_hamiltonian(gamma_r=1.0, phi=math.pi, **kw), d, rc)
        assert compare_series(fed, comb) < 1e-10

    def test_trace_and_hermiticity(self):
        p = ModelParams(n_sites=3, epsilon=0.15, gamma_l=1.0, gamma_r=1.0, phi=1.0)
        sim = DenseQsse(p, sample_disorder(p, 0))
        for _ in range(1000):
            sim.kick_step()
        dim = int(np.prod(sim.rho.shape[: sim.nax]))
        rho = sim.rho.reshape(dim, dim)
        assert abs(np.trace(rho).real - 1.0) < 1e-10
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
        assert np.linalg.eigvalsh(rho).min() > -1e-8

    @pytest.mark.parametrize("gamma_r", [0.0, 1.0])
    def test_global_kraus_shortcut_matches_full_step(self, gamma_r):
        p = ModelParams(n_sites=2, epsilon=0.15, gamma_l=1.0, gamma_r=gamma_r, phi=1.0, reservoir="global", **SHORT)
        d = sample_disorder(p, 0)
        fast, full = DenseQsse(p, d), DenseQsse(p, d)
        full.use_kraus = False
        for _ in range(20):
            fast.kick_step()
            full.kick_step()
            fast.ising_step()
            full.ising_step()
        np.testing.assert_allclose(fast.rho, full.rho, atol=1e-13)

    def test_global_mode_runs(self):
        p = ModelParams(n_sites=3, epsilon=0.15, gamma_l=1.0, gamma_r=1.0, reservoir="global", **SHORT)
        s = run_dense_qsse(p, sample_disorder(p, 0), RunConfig(periods=3))
        assert np.all(np.abs(s.m_values) <= 1.0)
        assert s.meta["mode"] == "global"


class TestGuards:
    def test_individual_limit(self):
        check_guard(ModelParams(n_sites=6, gamma_l=1.0, gamma_r=1.0))
        with pytest.raises(ResourceGuardError, match="exceeds guard"):
            check_guard(ModelParams(n_sites=7, gamma_l=1.0, gamma_r=1.0))

    def test_global_limit(self):
        check_guard(ModelParams(n_sites=8, gamma_l=1.0, gamma_r=1.0, reservoir="global"))
        with pytest.raises(ResourceGuardError):
            check_guard(ModelParams(n_sites=11, gamma_l=1.0, gamma_r=1.0, reservoir="global"))

    def test_lindblad_limit(self):
        with pytest.raises(ResourceGuardError):
            run_lindblad_markov(ModelParams(n_sites=9, gamma_l=1.0), sample_disorder(ModelParams(n_sites=9), 0))

    def test_guard_fires_before_allocation(self):
        p = ModelParams(n_sites=12, gamma_l=1.0, gamma_r=1.0)
        with pytest.raises(ResourceGuardError):
            DenseQsse(p, sample_disorder(p, 0))
        assert MAX_MIXED_DIM >= 2**6 * 2**6


# ------------------------------------------------------------------ #
# Lindblad                                                           #
# ------------------------------------------------------------------ #


class TestLindblad:
    def test_closed_form_decay(self):
        p = no_hamiltonian(gamma_l=1.3)
        s = run_lindblad_markov(p, DisorderRealization.uniform(1), RunConfig(periods=10))
        np.testing.assert_allclose(s.sz_profiles[:, 0], 2 * np.exp(-1.3 * s.times) - 1, atol=1e-12)

    def test_unitary_limit(self):
        p = ModelParams(n_sites=3, epsilon=0.15, jx=0.3, hx=0.3)
        d = sample_disorder(p, 4)
        s = run_lindblad_markov(p, d, RunConfig(periods=10))
        want = exact_floquet_m(3, p.period, p.omega - p.epsilon, d.jz_bonds, d.jx_bonds, d.hx_fields, 10)
        np.testing.assert_allclose(s.m_values, want, atol=1e-10)

    def test_trace_hermiticity_positivity(self):
        p = ModelParams(n_sites=3, epsilon=0.15, gamma_l=1.0)
        sim = LindbladMarkov(p, sample_disorder(p, 0))
        for _ in range(1000):
            sim.step(sim.props[1])
        assert abs(sim.trace() - 1.0) < 1e-9
        assert np.max(np.abs(sim.rho - sim.rho.conj().T)) < 1e-10
        assert np.linalg.eigvalsh(sim.rho).min() > -1e-8

    def test_fourth_order(self):
        p = no_hamiltonian(gamma_l=5.0, tau=0.01, period=0.1)
        d = DisorderRealization.uniform(1)
        errs = []
        for sub in (1, 2):
            s = run_lindblad_markov(p, d, RunConfig(periods=2), substeps=sub)
            errs.append(abs(s.sz_profiles[-1, 0] - (2 * math.exp(-5.0 * 0.2) - 1)))
        assert 12 < errs[0] / errs[1] < 20

    def test_qsse_converges_to_lindblad(self):
        base = ModelParams(n_sites=2, epsilon=0.15, gamma_l=1.0, tau=0.001)
        d = sample_disorder(base, 3)
        rc = RunConfig(periods=10)
        errs = []
        for l in (1, 2):
            p = base.replace(bins_per_delay=l)
            errs.append(compare_series(run_dense_qsse(p, d, rc), run_lindblad_markov(p, d, rc)))
        assert errs[0] < 5e-3
        assert errs[0] / errs[1] > 1.8


def test_compare_series_grid_mismatch():
    p = ModelParams(n_sites=2)
    d = sample_disorder(p, 0)
    a = run_dense_qsse(p, d, RunConfig(periods=2))
    b = run_dense_qsse(p, d, RunConfig(periods=3))
    with pytest.raises(ContractError):
        compare_series(a, b)
