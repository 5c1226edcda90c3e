"""Drift system on R^2 x T*SO(3).

H = 1/2 I1 (pi1^2 + pi2^2) + 1/2 I2 pi3^2 + kappa (pi1 x1 + pi2 x2) + a pi3

with body momentum pi, orientation A and shape variables x (symplectic form
dx1 ^ dx2).  Also: the normal-form momentum, Hopf variables, Casimirs, the
classification and volume of the reduced spaces, relative equilibria and
their characteristic polynomials.
"""

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize

from .liegroup import E3, exp_so3, hat

__all__ = [
    "NotSingularSpace",
    "NoRealRoot",
    "DriftState",
    "HopfPoint",
    "CasimirPair",
    "RelEq",
    "h_drift",
    "body_velocity",
    "eom",
    "j_nf",
    "hopf",
    "casimirs",
    "classify_reduced_space",
    "reduced_volume",
    "axial_equilibrium",
    "tilted_equilibrium",
    "equilibria",
    "tilted_quartic",
    "char_poly",
    "re_jacobian",
    "so3_equilibrium_kind",
    "write_trajectory_csv",
    "TRAJECTORY_COLUMNS",
]


class NotSingularSpace(ValueError):
    pass


class NoRealRoot(ValueError):
    pass


@dataclass(frozen=True)
class DriftState:
    x: np.ndarray
    A: np.ndarray
    pi: np.ndarray

    @classmethod
    def make(cls, x=(0.0, 0.0), pi=(0.0, 0.0, 0.0), A=None):
        return cls(np.asarray(x, dtype=float), np.eye(3) if A is None else np.asarray(A, dtype=float),
                   np.asarray(pi, dtype=float))

    def left(self, B):
        return DriftState(self.x.copy(), B @ self.A, self.pi.copy())


class HopfPoint(NamedTuple):
    w1: float
    w2: float
    w3: float
    w4: float
    pi3: float

    def cone_residual(self):
        return self.w1**2 + self.w2**2 + self.w3**2 - self.w4**2


class CasimirPair(NamedTuple):
    j1: float
    j2: float


@dataclass
class RelEq:
    family: str
    x: np.ndarray
    pi: np.ndarray
    eta: np.ndarray  # SO(3) generator
    s: float  # normal-form S^1 generator
    stable: bool = None

    def state(self):
        return DriftState(self.x.copy(), np.eye(3), self.pi.copy())


def h_drift(s, p):
    x, pi = s.x, s.pi
    return (0.5 * p.I1 * (pi[0] ** 2 + pi[1] ** 2) + 0.5 * p.I2 * pi[2] ** 2
            + p.kappa * (pi[0] * x[0] + pi[1] * x[1]) + p.a * pi[2])


def body_velocity(x, pi, p):
    return np.array([p.I1 * pi[0] + p.kappa * x[0],
                     p.I1 * pi[1] + p.kappa * x[1],
                     p.I2 * pi[2] + p.a])


def vector_field(x, pi, p):
    """(dx/dt, Omega, dpi/dt) with A^-1 dA/dt = hat(Omega)."""
    Om = body_velocity(x, pi, p)
    dpi = np.cross(pi, Om)
    dx = p.kappa * np.array([pi[1], -pi[0]])
    return dx, Om, dpi


def eom(s, p):
    """State derivative as (dx, dA, dpi) with dA = A hat(Omega)."""
    dx, Om, dpi = vector_field(s.x, s.pi, p)
    return dx, s.A @ hat(Om), dpi


def j_nf(s):
    return -0.5 * (s.x[0] ** 2 + s.x[1] ** 2) - s.pi[2]


def hopf(x, pi):
    x1, x2 = x
    p1, p2, p3 = pi
    r2, q2 = x1 * x1 + x2 * x2, p1 * p1 + p2 * p2
    return HopfPoint(2 * (x1 * p2 - x2 * p1), 2 * (x1 * p1 + x2 * p2), r2 - q2, r2 + q2, p3)


def casimirs(x, pi):
    pi = np.asarray(pi, dtype=float)
    return CasimirPair(float(np.linalg.norm(pi)), float(-0.5 * (x[0] ** 2 + x[1] ** 2) - pi[2]))


def classify_reduced_space(c, tol=1e-10):
    """'empty', 'point', 'sphere' or 'pinched_sphere' for the level set of (j1, j2).

    On a level set pi3 ranges over [-j1, min(j1, -j2)], where the cubic
    8 (pi3^2 - j1^2)(pi3 + j2) is nonnegative; the boundary strata are
    decided by case analysis.
    """
    j1, j2 = c
    if j1 < -tol or j2 > j1 + tol:
        return "empty"
    if abs(j1) <= tol:
        return "point" if j2 <= tol else "empty"
    if abs(j2 - j1) <= tol:
        return "point"
    if abs(j2 + j1) <= tol:
        return "pinched_sphere"
    return "sphere"


def reduced_volume(c, eps, delta):
    """Symplectic area of the pinched sphere between radii eps and delta of the singularity.

    Uses the area 4 pi int (pi3 + j1)/r dr with r^2 = 8 (pi3 + j1)(pi3 - j1)^2 on
    the branch pi3 < j1 next to the singular point.
    """
    j1, j2 = c
    if j1 <= 0 or abs(j1 + j2) > 1e-10 * max(1.0, j1):
        raise NotSingularSpace(f"(j1, j2) = {c} is not a singular reduced space")
    if not 0 < eps <= delta:
        raise ValueError("need 0 < eps <= delta")
    rmax = np.sqrt(8 * (2 * j1 / 3) * (4 * j1 / 3) ** 2)
    if delta >= rmax:
        raise ValueError(f"delta must be below {rmax:.6g}")

    def pi3_of_r(r):
        g = lambda q: 8 * (q + j1) * (q - j1) ** 2 - r * r
        return optimize.brentq(g, -j1 / 3, j1, xtol=1e-15, rtol=1e-15)

    # integrate in log r, where the integrand tends to the constant 8 pi j1
    f = lambda u: 4 * np.pi * (pi3_of_r(np.exp(u)) + j1)
    val, _ = integrate.quad(f, np.log(eps), np.log(delta), epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


# --- relative equilibria ---

def axial_equilibrium(pi3, p, s=0.0):
    """x = 0, pi = pi3 k; the S^1 generator s is arbitrary (isotropy)."""
    x = np.zeros(2)
    pi = np.array([0.0, 0.0, pi3])
    eta = (p.I2 * pi3 + p.a + s) * E3
    stable = None
    if pi3 > 0:
        # singular point of a pinched sphere
        stable = not (p.a**2 < 4 * p.kappa**2 * pi3)
    return RelEq("axial", x, pi, eta, s, stable)


def tilted_equilibrium(pi1, x1, p):
    """pi2 = x2 = 0, x1 > 0, with s = -kappa pi1/x1 and pi3 from the pi2 equation.

    For I1 = I2 this is pi3 = pi1 (a x1 - kappa pi1)/(kappa x1^2).  The SO(3)
    generator is read from the body velocity: eta = Omega + s k at A = Id.
    """
    if x1 <= 0:
        raise ValueError("x1 must be positive")
    if p.kappa == 0:
        raise ValueError("family requires kappa != 0")
    s = -p.kappa * pi1 / x1
    I = p.I2 - p.I1
    pi3 = (p.a + s) * pi1 / (p.kappa * x1 - I * pi1)
    x = np.array([x1, 0.0])
    pi = np.array([pi1, 0.0, pi3])
    eta = body_velocity(x, pi, p) + s * E3
    return RelEq("tilted", x, pi, eta, s, True)


def tilted_quartic(c, p):
    """Coefficients (ascending in X = x1^2) of the quartic for the tilted family on level c."""
    j1, j2 = c
    q = np.array([4 * j2**2 - 4 * j1**2, 8 * j2, 3.0])
    first = p.kappa**2 * P.polymul(q, q)
    second = 4 * p.a**2 * P.polymul([0.0, 1.0], P.polymul([2 * j2 - 2 * j1, 1.0], [2 * j2 + 2 * j1, 1.0]))
    return P.polyadd(first, second)


def equilibria(p, c, tol=1e-9):
    """Relative equilibria lying on the reduced space of the Casimirs c (spherical gauge)."""
    if abs(p.I2 - p.I1) > 1e-10 * max(1.0, abs(p.I2)):
        raise ValueError("equilibria on a Casimir level are computed in the spherical gauge")
    j1, j2 = c
    out = []
    # axial family: j1 = |pi3|, j2 = -pi3
    if abs(j1 - abs(j2)) <= tol:
        out.append(axial_equilibrium(-j2, p))
    if p.kappa != 0:
        roots = P.polyroots(tilted_quartic(c, p))
        real = sorted(X.real for X in roots if abs(X.imag) <= 1e-7 * max(1.0, abs(X)) and X.real > tol)
        # double roots (a = 0) come back as near-identical pairs
        uniq = [X for i, X in enumerate(real) if i == 0 or X - real[i - 1] > 1e-6 * max(1.0, X)]
        for X in uniq:
            x1 = np.sqrt(X)
            pi3 = -j2 - X / 2
            q = j1**2 - pi3**2
            if q < -tol:
                continue
            mag = np.sqrt(max(q, 0.0))
            for pi1 in {mag, -mag}:
                # keep the sign satisfying kappa x1^2 pi3 = pi1 (a x1 - kappa pi1)
                if abs(p.kappa * X * pi3 - pi1 * (p.a * x1 - p.kappa * pi1)) < 1e-7 * max(1.0, j1**2):
                    out.append(tilted_equilibrium(pi1, x1, p))
    if not out:
        raise NoRealRoot(f"no relative equilibrium on the level {tuple(c)}")
    return out


def so3_equilibrium_kind(x, pi, tol=1e-12):
    """SO(3) equilibrium family of (x, pi), or None.

    "origin": x = pi = 0; "axis": x = 0 and pi along k; "plane": pi = 0, x != 0.
    """
    x, pi = np.asarray(x), np.asarray(pi)
    if abs(pi[0]) > tol or abs(pi[1]) > tol:
        return None
    xz = np.linalg.norm(x) <= tol
    if xz and abs(pi[2]) <= tol:
        return "origin"
    if xz:
        return "axis"
    if abs(pi[2]) <= tol:
        return "plane"
    return None


def char_poly(eq, p):
    """Characteristic polynomial (descending coefficients) of the linearization at ``eq``."""
    eta2 = float(eq.eta @ eq.eta)
    a, k = p.a, p.kappa
    if eq.family == "axial":
        s, pi3 = eq.s, eq.pi[2]
        quad = [1.0, 0.0, a * a + 2 * a * s + 2 * s * s - 2 * pi3 * k * k, 0.0, (s * s + a * s + pi3 * k * k) ** 2]
        return np.polymul(np.polymul([1.0, 0.0, 0.0], [1.0, 0.0, eta2]), quad)
    if eq.family == "tilted":
        x1, pi1 = eq.x[0], eq.pi[0]
        last = [1.0, 0.0, k * k * x1 * x1 + (a - 2 * k * pi1 / x1) ** 2]
        return np.polymul(np.polymul([1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, eta2]), last)
    raise ValueError(f"unknown family {eq.family!r}")


def re_jacobian(eq, p, h=1e-5):
    """8x8 Jacobian of X_H minus the generator field at a relative equilibrium.

    Chart (x, d, pi) with A = A_e exp(d).  The SO(3) generator eta acts on the
    left, the normal-form generator s rotates x and pi counterclockwise and
    A -> A exp(-s k).
    """
    A0 = np.eye(3)

    def F(v):
        x, d, pi = v[:2], v[2:5], v[5:]
        A = A0 @ exp_so3(d)
        dx, Om, dpi = vector_field(x, pi, p)
        gen_Om = A.T @ eq.eta - eq.s * E3
        gen_pi = eq.s * np.cross(E3, pi)
        gen_x = eq.s * np.array([-x[1], x[0]])
        return np.concatenate([dx - gen_x, Om - gen_Om, dpi - gen_pi])

    v0 = np.concatenate([eq.x, np.zeros(3), eq.pi])
    Jm = np.empty((8, 8))
    for j in range(8):
        e = np.zeros(8)
        e[j] = h
        Jm[:, j] = (-F(v0 + 2 * e) + 8 * F(v0 + e) - 8 * F(v0 - e) + F(v0 - 2 * e)) / (12 * h)
    return Jm


TRAJECTORY_COLUMNS = (["t", "x1", "x2", "pi1", "pi2", "pi3"]
                      + [f"A{i}{j}" for i in range(1, 4) for j in range(1, 4)]
                      + ["w1", "w2", "pi3", "j1", "j2"])


def write_trajectory_csv(path, t, xs, As, pis):
    """Write a drift trajectory (arrays of shape (n,), (n,2), (n,3,3), (n,3))."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for ti, x, A, pi in zip(t, xs, As, pis):
            hp = hopf(x, pi)
            c = casimirs(x, pi)
            w.writerow([repr(float(v)) for v in
                        [ti, *x, *pi, *np.asarray(A).ravel(), hp.w1, hp.w2, pi[2], c.j1, c.j2]])
