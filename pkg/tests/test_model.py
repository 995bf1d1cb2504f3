import math

import numpy as np
import pytest

from floqlab import (ConfigurationError, DensitySpec, LatticeSpec, ModelParams,
                     SampledDriving, SmoothDriving, SquareWaveDriving,
                     assemble_hamiltonian, driving_l2_norms, sample_potential)


def make_params(g=0.1, L=6, seed=3, nu=1.0, driving=None, M=1.0):
    lat = LatticeSpec(d=1, L=L)
    dis = sample_potential(DensitySpec.uniform(M), lat, seed)
    drv = driving or SmoothDriving(nu=nu, a=0.25, b=0.25)
    return ModelParams(g=g, lattice=lat, disorder=dis, driving=drv)


class TestSamplePotential:
    def test_support_constraint(self):
        lat = LatticeSpec(d=1, L=100)
        dis = sample_potential(DensitySpec.uniform(1.0), lat, 99)
        assert dis.values.min() >= -1.0 and dis.values.max() <= 1.0

    def test_determinism(self):
        lat = LatticeSpec(d=2, L=5)
        den = DensitySpec.uniform(1.0)
        a = sample_potential(den, lat, 12345)
        b = sample_potential(den, lat, 12345)
        assert np.array_equal(a.values, b.values)
        c = sample_potential(den, lat, 12346)
        assert not np.array_equal(a.values, c.values)

    def test_clt_mean(self):
        # uniform on [-1,1]: sigma = 1/sqrt(3); 3 sigma / sqrt(n) window
        n = 10 ** 5
        lat = LatticeSpec(d=1, L=(n - 1) // 2)
        dis = sample_potential(DensitySpec.uniform(1.0), lat, 2024)
        bound = 3 * (1 / math.sqrt(3)) / math.sqrt(lat.n_sites)
        assert abs(dis.values.mean()) < bound

    def test_support_over_ensemble(self):
        lat = LatticeSpec(d=1, L=10)
        den = DensitySpec.uniform(0.7)
        for r in range(1000):
            v = sample_potential(den, lat, r).values
            assert v.min() >= -0.7 and v.max() <= 0.7

    def test_table_density_matches_cdf(self):
        # triangular density on [-1, 1]
        den = DensitySpec.from_table([(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)])
        assert den.M == 1.0 and den.rho_sup == 1.0 and den.rho_prime_sup == 1.0
        u = np.linspace(0.0, 0.999999, 2001)
        x = den.inverse_cdf(u)
        # analytic CDF of the triangle: F(x) = (1+x)^2/2 for x<0, 1-(1-x)^2/2 else
        F = np.where(x < 0, (1 + x) ** 2 / 2, 1 - (1 - x) ** 2 / 2)
        assert np.max(np.abs(F - u)) < 1e-9

    def test_non_normalizable_table_rejected(self):
        with pytest.raises(ConfigurationError):
            DensitySpec.from_table([(-1.0, 1.0), (1.0, 1.0)])


class TestAssemble:
    def test_zero_hopping_is_diagonal(self):
        p = make_params(g=0.0)
        H = assemble_hamiltonian(p, 0.77, dense=True)
        assert np.array_equal(np.diag(np.diag(H)), H)
        assert np.allclose(np.diag(H).real, p.disorder.values)

    def test_constant_signal_time_independent(self):
        p = make_params(driving=SmoothDriving(nu=2.0, a=0.4))
        H0 = assemble_hamiltonian(p, 0.0, dense=True)
        for t in (0.1, 1.3, 7.7):
            assert np.array_equal(assemble_hamiltonian(p, t, dense=True), H0)

    def test_periodicity(self):
        # sample away from the square wave switch times, where the signal
        # value is a one-sided convention and not float-stable
        for drv in (SmoothDriving(nu=0.8, a=0.2, b=0.3, bp=0.1),
                    SquareWaveDriving(nu=0.8, amp_a=0.5, amp_b=-0.2)):
            p = make_params(driving=drv)
            T = drv.period
            for t in np.linspace(0.01 * T, 0.99 * T, 7):
                Ha = assemble_hamiltonian(p, t, dense=True)
                Hb = assemble_hamiltonian(p, t + T, dense=True)
                assert np.allclose(Ha, Hb, atol=1e-12)

    def test_hermiticity_exact(self):
        p = make_params(driving=SmoothDriving(nu=1.3, a=0.1, b=0.2, bp=0.3))
        for t in np.linspace(0.0, p.period, 16):
            H = assemble_hamiltonian(p, t, dense=True)
            assert np.max(np.abs(H - H.conj().T)) == 0.0

    def test_locality(self):
        lat = LatticeSpec(d=2, L=3)
        dis = sample_potential(DensitySpec.uniform(1.0), lat, 5)
        p = ModelParams(g=0.3, lattice=lat, disorder=dis,
                        driving=SmoothDriving(nu=1.0, a=0.2, b=0.1))
        H = assemble_hamiltonian(p, 0.4, dense=True)
        for i in range(lat.n_sites):
            for j in range(lat.n_sites):
                if lat.l1_distance(i, j) > 1:
                    assert H[i, j] == 0.0


class TestDrivingNorms:
    def test_constant_signal_norm_one(self):
        norms, viol = driving_l2_norms(SmoothDriving(nu=1.0, a=1.0))
        assert norms[None] == pytest.approx(1.0) and viol == []

    def test_degenerate_square_wave_equals_constant(self):
        sq = SquareWaveDriving(nu=1.0, amp_a=0.6, amp_b=0.6)
        norms, _ = driving_l2_norms(sq)
        assert norms[None] == pytest.approx(0.6)

    def test_cosine_mean_square_half(self):
        norms, _ = driving_l2_norms(SmoothDriving(nu=1.0, b=1.0))
        assert norms[None] ** 2 == pytest.approx(0.5)

    @pytest.mark.parametrize("drv", [
        SmoothDriving(nu=0.7, a=0.3, b=0.5, bp=0.2),
        SquareWaveDriving(nu=0.7, amp_a=0.8, amp_b=-0.3, duty=0.3),
    ])
    def test_mean_square_against_quadrature(self, drv):
        t = np.linspace(0.0, drv.period, 200001)
        ms = np.trapezoid(drv.hop(t) ** 2, t) / drv.period
        assert drv.mean_square() == pytest.approx(ms, rel=1e-6)

    def test_sampled_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            SampledDriving(nu=1.0, samples=[0.5])

    def test_violation_flagged(self):
        _, viol = driving_l2_norms(SmoothDriving(nu=1.0, a=1.2))
        assert viol == [None]


class TestHarmonics:
    def test_smooth_harmonics_against_quadrature(self):
        drv = SmoothDriving(nu=0.9, a=0.3, b=0.4, bp=0.25)
        t = np.linspace(0.0, drv.period, 40001)
        for k in (-2, -1, 0, 1, 2):
            num = np.trapezoid(drv.hop(t) * np.exp(-1j * drv.nu * k * t), t) / drv.period
            assert drv.harmonic(k) == pytest.approx(num, abs=1e-8)

    def test_square_wave_harmonics_against_quadrature(self):
        drv = SquareWaveDriving(nu=1.1, amp_a=1.0, amp_b=0.0)
        # closed form checked against direct quadrature of the defining integral
        t = np.linspace(0.0, drv.period, 2000001)
        for k in (0, 1, 2, 3, 4, 5):
            num = np.trapezoid(drv.hop(t) * np.exp(-1j * drv.nu * k * t), t) / drv.period
            assert drv.harmonic(k) == pytest.approx(num, abs=2e-6)
        for k in (1, 3, 5):
            assert drv.harmonic(k) == pytest.approx(1 / (1j * math.pi * k))
        for k in (2, 4):
            assert abs(drv.harmonic(k)) < 1e-15
        assert drv.harmonic(0) == pytest.approx(0.5)

    def test_sampled_single_cosine(self):
        nu = 1.4
        tgrid = np.arange(64) * (2 * math.pi / nu) / 64
        drv = SampledDriving(nu=nu, samples=0.5 * np.cos(nu * tgrid))
        assert drv.harmonic(1) == pytest.approx(0.25, abs=1e-12)
        assert drv.harmonic(-1) == pytest.approx(0.25, abs=1e-12)
        assert abs(drv.harmonic(0)) < 1e-12

    def test_parseval_mean_square(self):
        drv = SquareWaveDriving(nu=1.0, amp_a=0.9, amp_b=-0.1)
        total = sum(abs(drv.harmonic(k)) ** 2 for k in range(-4000, 4001))
        assert total == pytest.approx(drv.mean_square(), rel=1e-3)
