"""Reconstruction phases near the singular point of a pinched reduced space.

On the level j2 = -j1 and the energy plane w2 = h the reduced orbit runs
between the two smaller roots r1 < r2 of 8 (pi3 - j1)^2 (pi3 + j1) - h^2.
The S^1 phase per loop is

    phi(h) = -2 int_{r1}^{r2} -h pi3 / ((j1^2 - pi3^2) sqrt(8 (pi3 - r1)(r2 - pi3)(r3 - pi3))) dpi3

which tends to -pi/2 as h -> 0+ and to +pi/2 as h -> 0-.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

from .liegroup import polar_project, rot_z, vee
from .splitting import DriftParams

__all__ = [
    "NoThreeRealRoots",
    "QuadratureFailure",
    "NoReturn",
    "PhaseSetup",
    "CubicRoots",
    "cubic_roots",
    "root_series",
    "phase_integral",
    "phase_parts",
    "asymptotic_phases",
    "extract_phases",
    "section_crossings",
]


class NoThreeRealRoots(ValueError):
    pass


class QuadratureFailure(ArithmeticError):
    pass


class NoReturn(ValueError):
    pass


@dataclass(frozen=True)
class PhaseSetup:
    j1: float
    h: float
    params: DriftParams = None

    def __post_init__(self):
        if not self.j1 > 0:
            raise ValueError("j1 must be positive")


class CubicRoots(NamedTuple):
    r1: float
    r2: float
    r3: float


def _cubic(q, j1, h):
    return 8 * (q - j1) ** 2 * (q + j1) - h * h


def root_series(j1, h):
    """Leading-order perturbation series for the three roots."""
    h = abs(h)
    return CubicRoots(-j1 + h * h / (32 * j1 * j1), j1 - h / (4 * np.sqrt(j1)), j1 + h / (4 * np.sqrt(j1)))


def _offsets(j1, h):
    """(j1 + r1, j1 - r2, r3 - j1), each solved in its own well-conditioned form."""
    h2 = h * h
    tiny = np.finfo(float).tiny
    d1 = optimize.brentq(lambda d: 8 * d * (2 * j1 - d) ** 2 - h2, tiny, 2 * j1 / 3, xtol=1e-300, rtol=1e-15)
    e2 = optimize.brentq(lambda e: 8 * e * e * (2 * j1 - e) - h2, tiny, 4 * j1 / 3, xtol=1e-300, rtol=1e-15)
    hi = 1.0
    while 8 * hi * hi * (2 * j1 + hi) < h2:
        hi *= 2
    e3 = optimize.brentq(lambda e: 8 * e * e * (2 * j1 + e) - h2, tiny, hi, xtol=1e-300, rtol=1e-15)
    return d1, e2, e3


def cubic_roots(setup):
    j1, h = setup.j1, setup.h
    if h == 0:
        return CubicRoots(-j1, j1, j1)
    # local max of 8 (q - j1)^2 (q + j1) sits at q = -j1/3
    peak = 256 * j1**3 / 27
    if h * h >= peak:
        raise NoThreeRealRoots(f"h^2 = {h * h!r} must be below {peak!r}")
    d1, e2, e3 = _offsets(j1, h)
    return CubicRoots(-j1 + d1, j1 - e2, j1 + e3)


def _quad(f, a, b, tol):
    val, err = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-11, limit=400)
    if err > tol:
        raise QuadratureFailure(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return val


def _left_piece(j1, h, r, off, upper, tol):
    # pi3 = r1 + c^2 tan^2(t) with c^2 = j1 + r1 absorbs both the sqrt endpoint
    # and the nearby pole at -j1
    r1, r2, r3 = r
    c2 = off[0]
    c = np.sqrt(c2)

    def f(t):
        q = r1 + c2 * np.tan(t) ** 2
        return 2 * (-h * q) / ((j1 - q) * np.sqrt(8 * (r2 - q) * (r3 - q)) * c)

    return _quad(f, 0.0, np.arctan(np.sqrt(upper - r1) / c), tol)


def _right_piece(j1, h, r, off, lower, tol):
    # pi3 = r2 - c^2 tan^2(t) with c^2 = j1 - r2
    r1, r2, r3 = r
    c2 = off[1]
    c = np.sqrt(c2)

    def f(t):
        u2 = c2 * np.tan(t) ** 2
        q = r2 - u2
        return 2 * (-h * q) / ((j1 + q) * np.sqrt(8 * (q - r1) * (off[1] + off[2] + u2)) * c)

    return _quad(f, 0.0, np.arctan(np.sqrt(r2 - lower) / c), tol)


def phase_parts(setup, tol=1e-6):
    """(phi1, phi2): the integral over [r1, 0] and over [0, r2]."""
    j1, h = setup.j1, setup.h
    if h == 0:
        raise ValueError("h must be nonzero")
    r = cubic_roots(setup)
    off = _offsets(j1, h)
    return _left_piece(j1, h, r, off, 0.0, tol), _right_piece(j1, h, r, off, 0.0, tol)


def phase_integral(setup, tol=1e-6):
    """S^1 reconstruction phase over one loop of the reduced orbit on w2 = h."""
    j1, h = setup.j1, setup.h
    if h == 0:
        raise ValueError("h must be nonzero")
    r = cubic_roots(setup)
    off = _offsets(j1, h)
    mid = 0.5 * (r.r1 + r.r2)
    return -2 * (_left_piece(j1, h, r, off, mid, tol) + _right_piece(j1, h, r, off, mid, tol))


def asymptotic_phases(j1, sign=1):
    """Limits (phi1, phi2, phi) as h -> 0 from the side given by ``sign``."""
    if not j1 > 0:
        raise ValueError("j1 must be positive")
    s = 1.0 if sign > 0 else -1.0
    return s * np.pi / 2, -s * np.pi / 4, -s * np.pi / 2


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def section_crossings(t, pi3):
    """Interpolated indices and times of downward crossings of pi3 = 0."""
    t = np.asarray(t)
    pi3 = np.asarray(pi3)
    idx = np.nonzero((pi3[:-1] > 0) & (pi3[1:] <= 0))[0]
    frac = pi3[idx] / (pi3[idx] - pi3[idx + 1])
    return idx, frac, t[idx] + frac * (t[idx + 1] - t[idx])


def extract_phases(traj, p, j1, radius=None):
    """(s1_phase, so3_phase) per loop, measured between successive downward pi3 = 0 crossings.

    ``traj`` needs arrays t, x, A, pi.  The S^1 phase theta is the unwrapped
    counterclockwise angle increment of (pi1, pi2).  Over one loop the state
    returns up to g in SO(3) and the normal-form rotation by theta, so
    g = A(t') exp(theta k) A(t)^T fixes J = A pi; the SO(3) phase is the
    angle of g about J less the corotation (I2 j1 + a) dt.  Both are
    averaged over the loops found.  ``radius`` optionally checks that the
    trajectory starts near the singular point pi = j1 k, x = 0.
    """
    t = np.asarray(traj.t)
    pi = np.asarray(traj.pi)
    x = np.asarray(traj.x)
    A = np.asarray(traj.A)
    if radius is not None:
        d0 = np.linalg.norm(pi[0] - np.array([0.0, 0.0, j1])) + np.linalg.norm(x[0])
        if d0 > radius:
            raise ValueError(f"trajectory starts {d0:.3g} away from the singular point")
    idx, frac, tc = section_crossings(t, pi[:, 2])
    if len(tc) < 2:
        raise NoReturn("fewer than two returns to the section")

    def interp(vals):
        f = frac.reshape((-1,) + (1,) * (vals.ndim - 1))
        return vals[idx] + f * (vals[idx + 1] - vals[idx])

    theta = np.unwrap(np.arctan2(pi[:, 1], pi[:, 0]))
    th_c = interp(theta)
    A_c = np.array([polar_project(B) for B in interp(A)])
    J = np.mean(np.einsum("nij,nj->ni", A, pi), axis=0)
    J /= np.linalg.norm(J)
    s1 = np.diff(th_c)
    ang = np.empty(len(s1))
    for n, th in enumerate(s1):
        g = A_c[n + 1] @ rot_z(th) @ A_c[n].T
        ang[n] = np.arctan2(J @ vee(g - g.T) / 2, (np.trace(g) - 1) / 2)
    so3 = _wrap(ang - (p.I2 * j1 + p.a) * np.diff(tc))
    return float(np.mean(s1)), float(_circmean(so3))


def _circmean(a):
    return np.arctan2(np.mean(np.sin(a)), np.mean(np.cos(a)))
