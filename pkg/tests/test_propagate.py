import math

import numpy as np
import pytest
from scipy.linalg import expm

from floqlab import (AccuracyError, DensitySpec, DisorderRealization,
                     LatticeSpec, ModelParams, SmoothDriving,
                     SquareWaveDriving, sample_potential)
from floqlab.propagate import (MomentTrace, Propagator, driving_l1_opnorm,
                               dynamical_moment_trace, effective_decay_profile,
                               effective_hamiltonian, evolve,
                               evolve_trajectory, floquet_spectrum,
                               leakage_bound_check, moment_transfer_check,
                               monodromy, poisson_tail)


def make_params(g=0.1, L=6, seed=7, nu=1.0, driving=None, M=1.0,
                values=None):
    lat = LatticeSpec(d=1, L=L)
    den = DensitySpec.uniform(M)
    if values is not None:
        v = np.asarray(values, dtype=float)
        v.setflags(write=False)
        dis = DisorderRealization(lattice=lat, density=den, seed=0, values=v)
    else:
        dis = sample_potential(den, lat, seed)
    drv = driving or SmoothDriving(nu=nu, a=0.25, b=0.25)
    return ModelParams(g=g, lattice=lat, disorder=dis, driving=drv)


def delta_state(lat, site):
    psi = np.zeros(lat.n_sites, dtype=complex)
    psi[lat.index(site)] = 1.0
    return psi


class TestEvolve:
    def test_static_diagonal_exact(self):
        p = make_params(g=0.0, L=4)
        psi0 = np.full(p.lattice.n_sites, 1 / 3.0, dtype=complex)
        t1 = 2.7
        psi = evolve(p, psi0, 0.0, t1)
        exact = np.exp(-1j * p.disorder.values * t1) * psi0
        assert np.max(np.abs(psi - exact)) < 1e-12

    def test_zero_hamiltonian_identity(self):
        p = make_params(g=0.0, L=3, values=np.zeros(7))
        psi0 = delta_state(p.lattice, (1,))
        psi = evolve(p, psi0, 0.0, 5.0)
        assert np.max(np.abs(psi - psi0)) < 1e-14

    def test_norm_preserved(self):
        p = make_params(g=0.4)
        psi0 = delta_state(p.lattice, (0,))
        psi = evolve(p, psi0, 0.0, 3 * p.period, Propagator(steps_per_period=128))
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-12

    def test_square_wave_segment_method_matches_exact(self):
        drv = SquareWaveDriving(nu=1.0, amp_a=0.5, amp_b=-0.2)
        p = make_params(g=0.3, L=4, driving=drv)
        T = drv.period
        from floqlab.model import assemble_hamiltonian
        HA = assemble_hamiltonian(p, 0.1 * T, dense=True)
        HB = assemble_hamiltonian(p, 0.9 * T, dense=True)
        U_exact = expm(-1j * HB * T / 2) @ expm(-1j * HA * T / 2)
        U = monodromy(p)  # auto -> segment integrator
        assert np.linalg.norm(U - U_exact, 2) < 1e-12

    def test_cf4_switch_aligned_square_wave(self):
        # steps that never straddle a switch see a constant Hamiltonian per
        # step, so the smooth-time scheme is exact there as well
        drv = SquareWaveDriving(nu=1.0, amp_a=0.5, amp_b=-0.2)
        p = make_params(g=0.3, L=4, driving=drv)
        U_seg = monodromy(p)
        U_cf4 = monodromy(p, Propagator(method="cf4", steps_per_period=64))
        assert np.linalg.norm(U_cf4 - U_seg, 2) < 1e-12

    def test_cf4_fourth_order_self_convergence(self):
        p = make_params(g=0.3, L=4)
        ref = monodromy(p, Propagator(steps_per_period=4096))
        errs = [np.linalg.norm(monodromy(p, Propagator(steps_per_period=n)) - ref, 2)
                for n in (32, 64, 128)]
        assert 12.0 < errs[0] / errs[1] < 20.0
        assert 12.0 < errs[1] / errs[2] < 20.0

    def test_backward_evolution_inverts_forward(self):
        p = make_params(g=0.3, L=4)
        psi0 = delta_state(p.lattice, (0,))
        psi1 = evolve(p, psi0, 0.0, 1.3)
        back = evolve(p, psi1, 1.3, 0.0)
        assert np.max(np.abs(back - psi0)) < 1e-10


class TestMonodromy:
    def test_zero_hamiltonian_identity(self):
        p = make_params(g=0.0, L=3, values=np.zeros(7))
        U = monodromy(p)
        assert np.allclose(U, np.eye(7), atol=1e-14)

    def test_uncoupled_phases(self):
        p = make_params(g=0.0, L=4)
        U = monodromy(p)
        expected = np.diag(np.exp(-1j * p.disorder.values * p.period))
        assert np.max(np.abs(U - expected)) < 1e-12

    def test_unitarity_desk_scale(self):
        p = make_params(g=0.1, L=32)
        U = monodromy(p, Propagator(steps_per_period=256))
        n = p.lattice.n_sites
        assert np.linalg.norm(U.conj().T @ U - np.eye(n), 2) <= 1e-8


class TestFloquetSpectrum:
    def test_single_phase_unwrap(self):
        # g = 0, v = 0.7, nu = 1: quasi-energy 0.7 after branch mapping
        p = make_params(g=0.0, L=1, values=[0.7, 0.7, 0.7])
        sol = floquet_spectrum(monodromy(p), 1.0)
        assert np.allclose(sol.quasi_energies, 0.7, atol=1e-12)

    def test_identity_monodromy(self):
        sol = floquet_spectrum(np.eye(5, dtype=complex), 0.8)
        assert np.allclose(sol.quasi_energies, 0.0)
        assert len(sol.branch_warnings) == 5

    def test_random_generator_mod_nu(self):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        A = 0.5 * (A + A.conj().T)
        nu = 0.9
        T = 2 * math.pi / nu
        sol = floquet_spectrum(expm(-1j * A * T), nu)
        expect = np.sort(np.linalg.eigvalsh(A) % nu)
        assert np.allclose(np.sort(sol.quasi_energies), expect, atol=1e-10)

    def test_vectors_orthonormal_through_degeneracies(self):
        U = np.eye(6, dtype=complex)
        U[3:, 3:] = expm(-1j * np.diag([0.4, 0.4, 0.4]))
        sol = floquet_spectrum(U, 1.0)
        G = sol.vectors.conj().T @ sol.vectors
        assert np.allclose(G, np.eye(6), atol=1e-12)

    def test_non_unitary_rejected(self):
        from floqlab.errors import ConfigurationError
        with pytest.raises(ConfigurationError):
            floquet_spectrum(np.diag([1.0, 0.5]).astype(complex), 1.0)


class TestEffectiveHamiltonian:
    def test_zero_hopping_diagonal_mod_nu(self):
        p = make_params(g=0.0, L=4, nu=1.0)
        sol = floquet_spectrum(monodromy(p), p.nu)
        H, defect = effective_hamiltonian(sol)
        assert defect <= 1e-10
        got = np.sort(np.diag(H).real)
        assert np.allclose(got, np.sort(p.disorder.values % p.nu), atol=1e-10)
        off = H - np.diag(np.diag(H))
        assert np.max(np.abs(off)) < 1e-10

    def test_identity_monodromy_gives_zero(self):
        sol = floquet_spectrum(np.eye(4, dtype=complex), 1.0)
        H, defect = effective_hamiltonian(sol)
        assert np.max(np.abs(H)) < 1e-12 and defect < 1e-12

    def test_reconstruction_defect_desk_scale(self):
        p = make_params(g=0.1, L=16)
        sol = floquet_spectrum(monodromy(p, Propagator(steps_per_period=256)),
                               p.nu)
        H, defect = effective_hamiltonian(sol)
        assert defect <= 1e-8
        lam = np.linalg.eigvalsh(H)
        assert lam.min() >= -1e-12 and lam.max() < p.nu

    def test_decay_profile_zero_hopping(self):
        p = make_params(g=0.0, L=4)
        sol = floquet_spectrum(monodromy(p), p.nu)
        H, _ = effective_hamiltonian(sol)
        prof = effective_decay_profile(H, p.lattice)
        assert prof["max"][1] < 1e-12
        assert prof["median"][0] == pytest.approx(
            float(np.median(np.abs(np.diag(H)))))


class TestMomentTrace:
    def test_q0_constant_one(self):
        p = make_params(g=0.2, L=6)
        tr = dynamical_moment_trace(p, delta_state(p.lattice, (0,)), q=0,
                                    n_periods=20)
        assert np.allclose(tr.values, 1.0, atol=1e-10)

    def test_zero_hopping_constant(self):
        p = make_params(g=0.0, L=6)
        tr = dynamical_moment_trace(p, delta_state(p.lattice, (2,)), q=2,
                                    n_periods=15)
        assert np.allclose(tr.values, tr.values[0], atol=1e-10)
        assert tr.running_max == pytest.approx(4.0)

    def test_boundary_warning(self):
        p = make_params(g=1.0, L=4, M=0.1)
        tr = dynamical_moment_trace(p, delta_state(p.lattice, (0,)), q=2,
                                    n_periods=50)
        assert tr.boundary_mass_max > 1e-6
        assert tr.warnings


class TestLeakageBound:
    def test_zero_coupling(self):
        p = make_params(g=0.0, L=6, values=np.linspace(-1, 1, 13))
        recs = leakage_bound_check(p, (0,), radii=[1, 3], times=[p.period])
        for r in recs:
            assert r["C"] == 0.0
            assert r["inside_mass"] == pytest.approx(1.0)
            assert r["bound"] == pytest.approx(1.0)
            assert r["satisfied"]

    def test_r_zero_convention(self):
        # empty ball: measured mass 0, bound non-positive
        p = make_params(g=0.1, L=4)
        recs = leakage_bound_check(p, (0,), radii=[0], times=[p.period / 2])
        assert recs[0]["inside_mass"] == 0.0
        assert recs[0]["bound"] <= 0.0 and recs[0]["satisfied"]

    def test_inequality_holds_with_slack(self):
        p = make_params(g=0.2, L=16, seed=3)
        T = p.period
        recs = leakage_bound_check(p, (0,), radii=[4, 8, 12],
                                   times=[T / 4, T / 2, T])
        assert all(r["satisfied"] for r in recs)
        r12 = [r for r in recs if r["R"] == 12 and r["t"] == T][0]
        assert r12["inside_mass"] - r12["bound"] > 0

    def test_radius_beyond_patch_rejected(self):
        from floqlab.errors import DomainError
        p = make_params(g=0.1, L=4)
        with pytest.raises(DomainError):
            leakage_bound_check(p, (0,), radii=[5], times=[0.1])

    def test_poisson_tail_values(self):
        # sum_{k>=r} lam^k/k! against mpmath-free partial sums
        assert poisson_tail(0.0, 0) == 1.0
        assert poisson_tail(0.0, 3) == 0.0
        lam = 1.7
        direct = sum(lam ** k / math.factorial(k) for k in range(2, 60))
        assert poisson_tail(lam, 2) == pytest.approx(direct, rel=1e-12)
        assert poisson_tail(lam, 0) == pytest.approx(math.exp(lam), rel=1e-12)


class TestMomentTransfer:
    def test_localized_run_inequality(self):
        p = make_params(g=0.05, L=8, seed=9)
        psi0 = delta_state(p.lattice, (0,))
        recs, meta = moment_transfer_check(p, psi0, p=2.0, eps=0.5,
                                           window_starts=[0.0, p.period],
                                           n_grid=256)
        assert all(r["satisfied"] for r in recs)
        assert meta["C_eps"] > 0 and meta["D_eps"] >= 0

    def test_q0_reduces_to_constants(self):
        p = make_params(g=0.1, L=4)
        psi0 = delta_state(p.lattice, (0,))
        recs, meta = moment_transfer_check(p, psi0, p=0.0, eps=0.0,
                                           window_starts=[0.0], n_grid=256)
        # both moments are probability masses (~1 up to k-truncation)
        r = recs[0]
        assert r["phi_moment"] == pytest.approx(1.0, abs=1e-9)
        assert r["check_moment"] == pytest.approx(1.0, abs=5e-3)
        assert r["satisfied"]

    def test_zero_hopping_time_constant(self):
        p = make_params(g=0.0, L=4)
        psi0 = delta_state(p.lattice, (1,))
        recs, _ = moment_transfer_check(p, psi0, p=2.0, eps=0.5,
                                        window_starts=[0.0], n_grid=256)
        assert recs[0]["satisfied"]
        assert recs[0]["phi_moment"] == pytest.approx(1.0, abs=1e-10)
