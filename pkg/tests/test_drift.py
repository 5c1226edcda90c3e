import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdrift import drift
from resdrift.liegroup import hat
from resdrift.numerics import StepperConfig, integrate
from resdrift.splitting import DriftParams

P = DriftParams(I1=4.321619, I2=4.321619, kappa=0.9115064, a=0.0, sign="plus", lam=1.633)
PA = DriftParams(I1=0.36, I2=4.32, kappa=0.9115064, a=0.07, sign="plus", lam=1.633)


def state(x=(0.0, 0.0), pi=(0.0, 0.0, 0.0), A=None):
    return drift.DriftState.make(x, pi, A)


class TestHamiltonian:
    def test_zero(self):
        assert drift.h_drift(state(), PA) == 0.0

    def test_vertical_momentum(self):
        assert drift.h_drift(state(pi=(0, 0, 1)), PA) == pytest.approx(0.5 * PA.I2 + PA.a)

    def test_rest_state_rotates_about_k(self):
        dx, dA, dpi = drift.eom(state(), PA)
        assert np.all(dx == 0) and np.all(dpi == 0)
        assert np.allclose(dA, hat([0.0, 0.0, PA.a]))

    def test_zero_momentum_great_circle(self):
        x = np.array([0.3, -0.2])
        dx, dA, dpi = drift.eom(state(x=x), PA)
        assert np.all(dx == 0) and np.all(dpi == 0)
        assert np.allclose(dA, hat([PA.kappa * x[0], PA.kappa * x[1], PA.a]))

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_hamilton_equations(self, seed):
        # pi' = pi x dH/dpi and x' = J grad_x H with dx1 ^ dx2
        rng = np.random.default_rng(seed)
        x, pi = rng.normal(size=2), rng.normal(size=3)
        dx, Om, dpi = drift.vector_field(x, pi, PA)
        h = 1e-6
        grad_pi = np.array([(drift.h_drift(state(x, pi + h * e), PA) - drift.h_drift(state(x, pi - h * e), PA)) / (2 * h)
                            for e in np.eye(3)])
        grad_x = np.array([(drift.h_drift(state(x + h * e, pi), PA) - drift.h_drift(state(x - h * e, pi), PA)) / (2 * h)
                           for e in np.eye(2)])
        assert np.allclose(Om, grad_pi, atol=1e-8)
        assert np.allclose(dpi, np.cross(pi, grad_pi), atol=1e-8)
        assert np.allclose(dx, [grad_x[1], -grad_x[0]], atol=1e-8)


class TestInvariants:
    @pytest.mark.parametrize("x,pi3,expected", [((0, 0), -1.5, 1.5), ((2, 0), 0.0, -2.0)])
    def test_j_nf(self, x, pi3, expected):
        assert drift.j_nf(state(x=x, pi=(0, 0, pi3))) == expected

    def test_hopf_example(self):
        hp = drift.hopf((1.0, 0.0), (0.0, 1.0, 0.0))
        assert hp[:4] == (2.0, 0.0, 0.0, 2.0)
        assert hp.cone_residual() == 0.0

    def test_singular_point(self):
        assert drift.hopf((0.0, 0.0), (0.0, 0.0, 1.0))[:4] == (0.0, 0.0, 0.0, 0.0)
        assert drift.casimirs((0.0, 0.0), (0.0, 0.0, 1.0)) == (1.0, -1.0)

    @given(st.lists(st.floats(-10, 10), min_size=5, max_size=5))
    def test_cone(self, v):
        hp = drift.hopf(v[:2], v[2:])
        assert abs(hp.cone_residual()) <= 1e-9 * max(1.0, hp.w4**2)

    def test_normal_form_symmetry(self, rng):
        # j_nf generates the diagonal rotation of x and (pi1, pi2)
        x, pi = rng.normal(size=2), rng.normal(size=3)
        t = 0.4
        c, s = np.cos(t), np.sin(t)
        R = np.array([[c, -s], [s, c]])
        pr = np.concatenate([R @ pi[:2], pi[2:]])
        for p in (P, PA):
            assert drift.h_drift(state(R @ x, pr), p) == pytest.approx(drift.h_drift(state(x, pi), p))


class TestClassification:
    @pytest.mark.parametrize("c,kind", [((1.0, -1.0), "pinched_sphere"), ((0.0, -1.0), "point"),
                                        ((1.0, -1.2), "sphere"), ((1.0, 1.0), "point"),
                                        ((1.0, 2.0), "empty"), ((-1.0, -3.0), "empty")])
    def test_examples(self, c, kind):
        assert drift.classify_reduced_space(c) == kind

    @settings(max_examples=100)
    @given(st.floats(0.01, 3.0), st.floats(-5.0, 0.99))
    def test_sphere_has_interval(self, j1, r):
        # a sphere level admits a pi3 interval where the cubic is nonnegative
        j2 = r * j1
        if abs(j2 + j1) < 1e-6:
            return
        kind = drift.classify_reduced_space((j1, j2))
        q = np.linspace(-j1, min(j1, -j2), 101)
        cubic = 8 * (j1**2 - q**2) * (-j2 - q)
        assert kind == "sphere"
        assert cubic.min() >= -1e-12 and cubic.max() > 0


class TestVolume:
    def test_empty_range(self):
        assert drift.reduced_volume((0.3, -0.3), 1e-3, 1e-3) == 0.0

    def test_log_slope(self):
        j1 = 0.3
        eps = np.logspace(-6, -2, 5)
        A = [drift.reduced_volume((j1, -j1), e, 0.1) for e in eps]
        slope = -np.polyfit(np.log(eps), A, 1)[0]
        assert slope == pytest.approx(8 * np.pi * j1, rel=0.02)

    def test_doubling_delta(self):
        j1 = 0.3
        d = drift.reduced_volume((j1, -j1), 1e-6, 0.02) - drift.reduced_volume((j1, -j1), 1e-6, 0.01)
        assert d == pytest.approx(8 * np.pi * j1 * np.log(2), rel=0.05)

    def test_not_singular(self):
        with pytest.raises(drift.NotSingularSpace):
            drift.reduced_volume((1.0, -1.2), 1e-3, 1e-2)


class TestEquilibria:
    def test_axial_member_is_relative_equilibrium(self):
        eq = drift.axial_equilibrium(2.0, PA)
        assert eq.family == "axial"
        dx, Om, dpi = drift.vector_field(eq.x, eq.pi, PA)
        assert np.all(dx == 0) and np.allclose(dpi, 0)

    @pytest.mark.parametrize("a,kappa,pi3,stable", [(1.0, 0.5, 1.0, True), (0.5, 1.0, 1.0, False)])
    def test_singular_stability_boundary(self, a, kappa, pi3, stable):
        p = DriftParams(1.0, 1.0, kappa, a, "plus", 1.0)
        assert drift.axial_equilibrium(pi3, p).stable is stable

    def test_tilted_quartic_at_zero_j1(self):
        j2 = -0.5
        coeffs = drift.tilted_quartic((0.0, j2), PA)
        assert np.polynomial.polynomial.polyval(-2 * j2, coeffs) == pytest.approx(0.0, abs=1e-12)

    def test_equilibria_on_level(self):
        eq0 = drift.tilted_equilibrium(0.001, 0.04, P)
        c = drift.casimirs(eq0.x, eq0.pi)
        found = drift.equilibria(P, c)
        assert any(e.family == "tilted" and np.allclose(e.x, eq0.x, atol=1e-6) for e in found)

    def test_no_real_root(self):
        with pytest.raises(drift.NoRealRoot):
            drift.equilibria(P, (1.0, 5.0))

    @pytest.mark.parametrize("x,pi,kind", [((0, 0), (0, 0, 0), "origin"), ((0, 0), (0, 0, 2), "axis"),
                                           ((1, 0), (0, 0, 0), "plane"), ((1, 0), (1, 0, 0), None)])
    def test_so3_kinds(self, x, pi, kind):
        assert drift.so3_equilibrium_kind(x, pi) == kind


class TestCharPoly:
    def test_axial_roots(self):
        eq = drift.axial_equilibrium(0.3, PA, s=0.2)
        roots = np.roots(drift.char_poly(eq, PA))
        assert np.sum(np.abs(roots) < 1e-6) == 2
        assert np.min(np.abs(roots - 1j * np.linalg.norm(eq.eta))) < 1e-8

    @pytest.mark.parametrize("pi1,x1", [(0.001, 0.04), (0.02, 0.3), (-0.05, 0.5)])
    def test_tilted_matches_jacobian(self, pi1, x1):
        eq = drift.tilted_equilibrium(pi1, x1, P)
        coeffs = drift.char_poly(eq, P)
        roots = np.roots(coeffs)
        assert np.sum(np.abs(roots) < 1e-3) == 4
        Jm = drift.re_jacobian(eq, P)
        ev = np.linalg.eigvals(Jm)
        nz = [z for z in roots if abs(z) > 1e-3]
        for z in nz:
            assert np.min(np.abs(ev - z)) < 1e-6

    def test_rejects_unknown_family(self):
        eq = drift.RelEq("other", np.zeros(2), np.zeros(3), np.zeros(3), 0.0)
        with pytest.raises(ValueError):
            drift.char_poly(eq, P)


class TestTrajectoryCsv:
    def test_schema(self, tmp_path):
        s0 = state((0.05, 0.02), (0.01, -0.02, 0.005))
        tr = integrate("drift", s0, (0.0, 1.0), StepperConfig(0.1), PA, monitors={})
        path = tmp_path / "t.csv"
        drift.write_trajectory_csv(path, tr.t, tr.x, tr.A, tr.pi)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == drift.TRAJECTORY_COLUMNS
        assert len(rows) == len(tr.t) + 1
        assert float(rows[1][0]) == 0.0
        assert float(rows[-1][5]) == float(rows[-1][17])  # pi3 appears twice
