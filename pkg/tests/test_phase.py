from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sint

from resdrift import phase
from resdrift.drift import DriftState
from resdrift.liegroup import rot_z
from resdrift.numerics import StepperConfig, integrate
from resdrift.splitting import DriftParams

P = DriftParams(I1=4.321619, I2=4.321619, kappa=0.9115064, a=0.0, sign="plus", lam=1.633)


class TestSetup:
    def test_rejects_nonpositive_j1(self):
        with pytest.raises(ValueError):
            phase.PhaseSetup(0.0, 0.1)


class TestRoots:
    def test_factored_cubic(self):
        assert tuple(phase.cubic_roots(phase.PhaseSetup(1.0, 0.0))) == (-1.0, 1.0, 1.0)

    def test_series_seeds(self):
        r = phase.cubic_roots(phase.PhaseSetup(1.0, 0.1))
        assert np.allclose(r, [-0.99969, 0.975, 1.025], atol=5e-3)
        assert np.allclose(r, phase.root_series(1.0, 0.1), atol=5e-3)

    @settings(max_examples=100)
    @given(st.floats(1e-3, 2.0), st.floats(1e-8, 0.99))
    def test_roots_solve_cubic(self, j1, frac):
        h = frac * np.sqrt(256 * j1**3 / 27)
        r = phase.cubic_roots(phase.PhaseSetup(j1, h))
        assert r.r1 < r.r2 < r.r3
        for q in r:
            assert abs(8 * (q - j1) ** 2 * (q + j1) - h * h) <= 1e-12 * max(h * h, j1**3)

    def test_no_three_roots(self):
        with pytest.raises(phase.NoThreeRealRoots):
            phase.cubic_roots(phase.PhaseSetup(1.0, 4.0))


class TestIntegral:
    def test_brute_force_oracle(self):
        # algebraic-weight quadrature on the original integrand, frozen
        assert phase.phase_integral(phase.PhaseSetup(0.25, 0.05)) == pytest.approx(-1.648004174094, abs=1e-9)

    def test_independent_quadrature(self):
        j1, h = 0.25, 0.05
        r1, r2, r3 = phase.cubic_roots(phase.PhaseSetup(j1, h))
        f = lambda q: -h * q / ((j1**2 - q**2) * np.sqrt(8 * (r3 - q)))
        val, _ = sint.quad(f, r1, r2, weight="alg", wvar=(-0.5, -0.5), epsabs=1e-13, epsrel=1e-13, limit=500)
        assert phase.phase_integral(phase.PhaseSetup(j1, h)) == pytest.approx(-2 * val, abs=1e-5)

    def test_small_h(self):
        assert phase.phase_integral(phase.PhaseSetup(0.25, 1e-4)) == pytest.approx(-np.pi / 2, abs=0.05)

    @pytest.mark.parametrize("h", [1e-6, 1e-3, 0.05])
    def test_odd_in_h(self, h):
        a = phase.phase_integral(phase.PhaseSetup(0.25, h))
        b = phase.phase_integral(phase.PhaseSetup(0.25, -h))
        assert a == pytest.approx(-b, abs=1e-10)

    def test_parts_sum(self):
        s = phase.PhaseSetup(0.25, 0.01)
        p1, p2 = phase.phase_parts(s)
        assert -2 * (p1 + p2) == pytest.approx(phase.phase_integral(s), abs=1e-9)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_limits(self, sign):
        j1 = 0.25
        s = phase.PhaseSetup(j1, sign * 1e-5)
        lim = phase.asymptotic_phases(j1, sign)
        assert phase.phase_integral(s) == pytest.approx(lim[2], abs=0.02)
        assert np.allclose(phase.phase_parts(s), lim[:2], atol=0.02)

    def test_asymptotic_values(self):
        assert phase.asymptotic_phases(0.1, 1) == (np.pi / 2, -np.pi / 4, -np.pi / 2)
        assert phase.asymptotic_phases(0.1, -1) == (-np.pi / 2, np.pi / 4, np.pi / 2)

    def test_zero_h(self):
        with pytest.raises(ValueError):
            phase.phase_integral(phase.PhaseSetup(0.25, 0.0))


def _synthetic(rate, extra, n=20000, T=200.0, omega=0.3):
    """Uniform rotation about k at ``rate`` + ``extra`` seen through the normal-form angle."""
    t = np.linspace(0.0, T, n)
    theta = omega * t
    q = 1e-3  # keeps the mean of A pi on the k axis
    pi = np.column_stack([q * np.cos(theta), q * np.sin(theta), 0.5 + np.cos(t)])
    A = np.array([rot_z((rate + extra) * ti - th) for ti, th in zip(t, theta)])
    return SimpleNamespace(t=t, x=np.zeros((n, 2)), A=A, pi=pi)


class TestExtract:
    def test_corotating_rotation_has_zero_phase(self):
        j1 = 0.01
        s1, so3 = phase.extract_phases(_synthetic(P.I2 * j1 + P.a, 0.0), P, j1)
        assert so3 == pytest.approx(0.0, abs=1e-6)
        assert s1 == pytest.approx(0.3 * 2 * np.pi, rel=1e-6)

    def test_extra_rotation(self):
        j1 = 0.01
        _, so3 = phase.extract_phases(_synthetic(P.I2 * j1, 0.1), P, j1)
        assert so3 == pytest.approx(0.1 * 2 * np.pi - 2 * np.pi * (0.1 * 2 * np.pi > np.pi), abs=1e-6)

    def test_no_return(self):
        tr = _synthetic(0.0, 0.0, n=200, T=2.0)
        with pytest.raises(phase.NoReturn):
            phase.extract_phases(tr, P, 0.01)

    def test_radius_check(self):
        with pytest.raises(ValueError):
            phase.extract_phases(_synthetic(0.0, 0.0), P, 0.01, radius=1e-3)

    def test_section_crossings(self):
        t = np.linspace(0, 4 * np.pi, 4001)
        _, _, tc = phase.section_crossings(t, np.cos(t))
        assert np.allclose(tc, [np.pi / 2, 5 * np.pi / 2], atol=1e-6)

    def test_drift_runs_straddling_homoclinic(self):
        j1 = 0.01
        out = {}
        for sgn in (1, -1):
            h = sgn * 1e-3 * j1**1.5
            r = np.sqrt(2 * j1)
            p1 = h / (2 * r)
            s0 = DriftState.make([r, 0.0], [p1, -np.sqrt(j1 * j1 - p1 * p1), 0.0])
            tr = integrate("drift", s0, (0.0, 2000.0), StepperConfig(0.02), P, sample_every=2, monitors={})
            out[sgn] = phase.extract_phases(tr, P, j1)[1]
        assert out[1] < 0 < out[-1]
        assert out[-1] - out[1] == pytest.approx(np.pi, abs=0.4)
