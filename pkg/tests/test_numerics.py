import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdrift import numerics as nm
from resdrift import rods
from resdrift.drift import DriftState
from resdrift.liegroup import E3, exp_so3
from resdrift.splitting import DriftParams

from conftest import random_rod_point

PD = DriftParams(I1=0.36, I2=4.32, kappa=0.9115064, a=0.07, sign="plus", lam=1.633)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"step_size": 0.0}, {"step_size": 0.1, "solver_tol": 0.0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            nm.StepperConfig(**kw)


class TestLeapfrog:
    def test_reversible(self, rng, resonant):
        _, prm = resonant
        cfg = nm.StepperConfig(0.05)
        worst = 0.0
        for _ in range(10):
            p = random_rod_point(rng)
            q = nm.rod_step_adjoint(nm.rod_leapfrog_step(p, cfg, prm), cfg, prm)
            worst = max(worst, np.abs(q.A1 - p.A1).max(), np.abs(q.A2 - p.A2).max(),
                        np.abs(q.Pi1 - p.Pi1).max(), np.abs(q.Pi2 - p.Pi2).max())
        assert worst < 1e-11

    def test_momentum_per_step(self, rng, resonant):
        _, prm = resonant
        cfg = nm.StepperConfig(0.05)
        p = random_rod_point(rng)
        for _ in range(100):
            q = nm.rod_leapfrog_step(p, cfg, prm)
            m0, m1 = rods.momentum_map(p), rods.momentum_map(q)
            assert np.abs(m1[0] - m0[0]).max() < 1e-10
            assert abs(m1[1] - m0[1]) < 1e-10 and abs(m1[2] - m0[2]) < 1e-10
            p = q

    def test_newton_failure(self, rng, resonant):
        _, prm = resonant
        with pytest.raises(nm.NewtonDivergence):
            nm.rod_leapfrog_step(random_rod_point(rng, 5.0), nm.StepperConfig(2.0, max_newton_iters=2), prm)

    def test_relative_equilibrium_orbit(self, resonant):
        # in the exact flow the body momenta only rotate about k; the discrete
        # flow keeps Pi.k exactly and |Pi| up to a bounded O(h^2) wobble
        fam, prm = resonant
        p, gen = rods.relative_equilibrium(fam, prm)
        wobble = []
        for h in (0.05, 0.025):
            tr = nm.integrate("rods", p, (0.0, 500.0), nm.StepperConfig(h), prm, sample_every=10, monitors={})
            for Pi in (tr.Pi1, tr.Pi2):
                assert np.abs(Pi[:, 2] - Pi[0, 2]).max() < 1e-10
            n = np.linalg.norm(tr.Pi1, axis=1)
            wobble.append(np.abs(n - n[0]).max())
            half = len(n) // 2
            assert np.abs(n[half:] - n[0]).max() < 1.5 * np.abs(n[:half] - n[0]).max()
        assert wobble[0] / wobble[1] == pytest.approx(4.0, rel=0.15)

    def test_second_order_convergence(self, resonant):
        fam, prm = resonant
        p, gen = rods.relative_equilibrium(fam, prm)
        T = 20.0
        exact = exp_so3(T * gen.Omega) @ p.A1 @ exp_so3(-T * gen.s1 * E3)
        err = []
        for h in (0.05, 0.025):
            tr = nm.integrate("rods", p, (0.0, T), nm.StepperConfig(h), prm, sample_every=10, monitors={})
            err.append(np.abs(tr.A1[-1] - exact).max())
        assert err[0] / err[1] == pytest.approx(4.0, rel=0.1)


class TestRK4:
    def test_constant_rotation_exact(self):
        # pi = 0 gives a constant body velocity, and the solution in the chart is linear in t
        s = DriftState.make([0.3, -0.1], [0.0, 0.0, 0.0])
        cfg = nm.StepperConfig(0.1)
        for _ in range(100):
            s = nm.liegroup_rk4_step(s, cfg, PD)
        Om = np.array([PD.kappa * 0.3, -PD.kappa * 0.1, PD.a])
        assert np.abs(s.A - exp_so3(10.0 * Om)).max() < 1e-13

    def test_fourth_order(self, rng):
        s0 = DriftState.make(0.3 * rng.normal(size=2), 0.3 * rng.normal(size=3))
        ref = nm.integrate("drift", s0, (0.0, 5.0), nm.StepperConfig(0.001), PD, monitors={})
        err = []
        for h in (0.05, 0.025):
            tr = nm.integrate("drift", s0, (0.0, 5.0), nm.StepperConfig(h), PD, monitors={})
            err.append(np.abs(tr.pi[-1] - ref.pi[-1]).max())
        assert np.log2(err[0] / err[1]) == pytest.approx(4.0, abs=0.3)

    def test_unsupported_state(self):
        with pytest.raises(TypeError):
            nm.liegroup_rk4_step(object(), nm.StepperConfig(0.1), PD)

    def test_drift_conservation(self, rng):
        # amplitudes of the stable-RE regime
        s0 = DriftState.make(0.04 * rng.normal(size=2), 0.01 * rng.normal(size=3))
        tr = nm.integrate("drift", s0, (0.0, 500.0), nm.StepperConfig(0.05), PD, sample_every=100)
        for k in ("energy", "j_nf", "j1", "J"):
            v = tr.monitors[k]
            assert np.abs(v - v[0]).max() <= 1e-9 * np.abs(v).max()


class TestIntegrate:
    def test_constant_trajectory(self):
        p = DriftParams(1.0, 1.0, 0.0, 0.0, "plus", 1.0)
        tr = nm.integrate("drift", DriftState.make(), (0.0, 1.0), nm.StepperConfig(0.1), p)
        assert np.all(tr.A == np.eye(3)) and np.all(tr.x == 0) and np.all(tr.pi == 0)
        assert len(tr.t) == 11

    def test_sampling(self):
        tr = nm.integrate("drift", DriftState.make(), (0.0, 1.0), nm.StepperConfig(0.1), PD, sample_every=5)
        assert np.allclose(tr.t, [0.0, 0.5, 1.0])

    def test_step_must_divide(self):
        with pytest.raises(ValueError):
            nm.integrate("drift", DriftState.make(), (0.0, 1.0), nm.StepperConfig(0.3), PD)

    def test_unknown_system(self):
        with pytest.raises(ValueError):
            nm.integrate("planets", DriftState.make(), (0.0, 1.0), nm.StepperConfig(0.1), PD)

    def test_custom_monitor(self):
        tr = nm.integrate("drift", DriftState.make(pi=(0, 0, 1)), (0.0, 1.0), nm.StepperConfig(0.1), PD,
                          monitors={"pi3": lambda s, p: s.pi[2]})
        assert list(tr.monitors) == ["pi3"]
        assert np.allclose(tr.monitors["pi3"], 1.0)

    def test_attribute_access(self):
        tr = nm.integrate("drift", DriftState.make(), (0.0, 1.0), nm.StepperConfig(0.5), PD)
        with pytest.raises(AttributeError):
            tr.nothing


class TestSpectrum:
    def test_pure_tone(self):
        t = 0.1 * np.arange(8192)
        spec = nm.power_spectrum(np.sin(2 * np.pi * 0.1 * t), 0.1, units="cycles")
        peaks = nm.find_peaks(spec, rel_floor=1e-3)
        assert peaks[0].frequency == pytest.approx(0.1, abs=1e-4)
        assert all(pk.power < 0.05 * peaks[0].power for pk in peaks[1:])

    def test_two_tones(self):
        dt = 2.0
        t = dt * np.arange(2**14)
        sig = np.sin(0.04449 * t) + 0.7 * np.sin(0.05791 * t)
        peaks = nm.find_peaks(nm.power_spectrum(sig, dt), rel_floor=1e-2)
        top = sorted(pk.frequency for pk in peaks[:2])
        assert np.allclose(top, [0.04449, 0.05791], atol=1e-4)

    @settings(max_examples=20)
    @given(st.integers(0, 10_000))
    def test_parseval(self, seed):
        rng = np.random.default_rng(seed)
        t = np.arange(4096) * 0.05
        sig = sum(rng.uniform(0.2, 1.0) * np.sin(rng.uniform(0.5, 20.0) * t + rng.uniform(0, 6)) for _ in range(3))
        spec = nm.power_spectrum(sig, 0.05)
        assert spec.powers.sum() == pytest.approx(np.var(sig), rel=0.01)

    def test_too_short(self):
        with pytest.raises(nm.TooShort):
            nm.power_spectrum(np.zeros(100), 0.1)

    def test_units(self):
        with pytest.raises(ValueError):
            nm.power_spectrum(np.zeros(2048), 0.1, units="hz")

    def test_spectrum_lengths(self):
        with pytest.raises(ValueError):
            nm.Spectrum(np.zeros(3), np.zeros(4), "angular")


class TestHarmonicFit:
    BASES = (0.04449, 0.05791, 0.1687)

    @pytest.mark.parametrize("f,z", [(0.1024, (1, 1, 0)), (0.01342, (-1, 1, 0))])
    def test_table_rows(self, f, z):
        (fit,) = nm.harmonic_fit([f], self.BASES)
        assert fit.z == z
        assert fit.residual < 1e-4

    @given(st.tuples(*[st.integers(-3, 3)] * 3))
    def test_exact_lattice(self, z):
        bases = (0.0437, 0.0581, 0.1693)
        f = float(np.dot(z, bases))
        (fit,) = nm.harmonic_fit([nm.Peak(f, 1.0)], bases)
        assert fit.residual < 1e-12
        assert fit.z == z or abs(np.dot(fit.z, bases) - f) < 1e-12

    def test_zmax(self):
        with pytest.raises(ValueError):
            nm.harmonic_fit([0.1], self.BASES, zmax=0)


class TestRateFit:
    def test_exact(self):
        r = np.linspace(0.02, 0.2, 10)
        c1, c2 = nm.rate_fit(np.column_stack([r, 0.9 * r + 0.4 * r * r]))
        assert (c1, c2) == pytest.approx((0.9, 0.4), abs=1e-12)

    @pytest.mark.parametrize("samples", [[(0.1, 0.2), (0.2, 0.4)], [(0.1, 1.0)] * 3])
    def test_rank_deficient(self, samples):
        with pytest.raises(nm.RankDeficient):
            nm.rate_fit(samples)

    def test_trend(self):
        t = np.linspace(0, 10, 50)
        assert nm.linear_trend(t, 3 * t + 1) == pytest.approx(3.0)
