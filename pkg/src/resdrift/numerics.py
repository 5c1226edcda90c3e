"""Integrators and spectral analysis.

* ``rod_leapfrog_step``: symmetric discrete-Lagrangian (midpoint) scheme on
  SO(3)^2 with exponential updates A_i -> A_i exp(h xi_i).  The discrete
  Lagrangian h/2 xi^T J(M) xi uses the relative orientation M at the
  half step, so it is invariant under the full symmetry group and the
  discrete momentum map is conserved exactly.
* ``liegroup_rk4_step``: classical RK4 on the vector part with the rotation
  written as A0 exp(u), u' = J_r(u)^-1 Omega (Munthe-Kaas form).
* Hann-window periodograms, peak picking, harmonic lattice fits and the
  rate fit used by the zero-momentum experiment.
"""

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from . import monopole as mono
from .drift import DriftState, casimirs, h_drift, j_nf
from .rods import RodPhasePoint, energy, momentum_map

__all__ = [
    "NewtonDivergence",
    "TooShort",
    "RankDeficient",
    "StepperConfig",
    "Spectrum",
    "Peak",
    "Trajectory",
    "rod_leapfrog_step",
    "liegroup_rk4_step",
    "integrate",
    "power_spectrum",
    "find_peaks",
    "harmonic_fit",
    "rate_fit",
    "linear_trend",
]


class NewtonDivergence(ArithmeticError):
    pass


class TooShort(ValueError):
    pass


class RankDeficient(ValueError):
    pass


@dataclass(frozen=True)
class StepperConfig:
    step_size: float
    solver_tol: float = 1e-14
    max_newton_iters: int = 50

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")


# --- numba kernels for SO(3) ---

@numba.njit(cache=True)
def _mm(A, B):
    # 3x3 product; numba's @ goes through BLAS, which is slow at this size
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return C


@numba.njit(cache=True)
def _mv(A, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = A[i, 0] * v[0] + A[i, 1] * v[1] + A[i, 2] * v[2]
    return out


@numba.njit(cache=True)
def _mtv(A, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = A[0, i] * v[0] + A[1, i] * v[1] + A[2, i] * v[2]
    return out


@numba.njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@numba.njit(cache=True)
def _hat(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@numba.njit(cache=True)
def _vee_skew(K):
    # vee(K - K^T)
    out = np.empty(3)
    out[0] = K[2, 1] - K[1, 2]
    out[1] = K[0, 2] - K[2, 0]
    out[2] = K[1, 0] - K[0, 1]
    return out


@numba.njit(cache=True)
def _exp(v):
    t = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    K = _hat(v)
    if t < 1e-4:
        t2 = t * t
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / (t * t)
    return np.eye(3) + a * K + b * _mm(K, K)


@numba.njit(cache=True)
def _jr(v):
    t = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    K = _hat(v)
    if t < 1e-4:
        t2 = t * t
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0
    else:
        b = (1.0 - np.cos(t)) / (t * t)
        c = (t - np.sin(t)) / (t * t * t)
    return np.eye(3) - b * K + c * _mm(K, K)


@numba.njit(cache=True)
def _jr_inv(v):
    t = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    K = _hat(v)
    if t < 1e-4:
        d = 1.0 / 12.0 + t * t / 720.0
    else:
        d = 1.0 / (t * t) - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t))
    return np.eye(3) + 0.5 * K + d * _mm(K, K)


@numba.njit(cache=True)
def _polar(R):
    # one Newton step of the polar iteration keeps the factor orthogonal at round-off
    return 0.5 * (R + np.linalg.inv(R).T)


# --- rods: discrete Lagrangian machinery ---

@numba.njit(cache=True)
def _mass(M, alpha, beta):
    J = np.zeros((6, 6))
    J[0, 0] = J[1, 1] = J[3, 3] = J[4, 4] = 1.0
    J[2, 2] = J[5, 5] = alpha
    J[0, 3] = -beta * M[1, 1]
    J[0, 4] = beta * M[1, 0]
    J[1, 3] = beta * M[0, 1]
    J[1, 4] = -beta * M[0, 0]
    for i in range(2):
        for j in range(2):
            J[3 + j, i] = J[i, 3 + j]
    return J


@numba.njit(cache=True)
def _cross_k(w):
    # w x k
    out = np.empty(3)
    out[0] = w[1]
    out[1] = -w[0]
    out[2] = 0.0
    return out


@numba.njit(cache=True)
def _pq(A, xi, h, alpha, beta):
    """P = dL_d/dxi at fixed g_k and Q = left-trivialized dL_d/dg_k at fixed xi."""
    xi1 = xi[:3]
    xi2 = xi[3:]
    E1 = _exp(-0.5 * h * xi1)
    E2 = _exp(0.5 * h * xi2)
    E1A = _mm(E1, A)
    M = _mm(E1A, E2)
    u = _cross_k(xi1)
    v = _cross_k(xi2)
    # gradient of the coupling -beta u^T M v in M is G = -beta u v^T; the
    # variations below need vee(K - K^T) = -beta (Y v) x (X^T u) for
    # K = X^T G Y^T
    AE2v = _mv(A, _mv(E2, v))
    g1 = -beta * _cross(AE2v, _mtv(E1, u))
    g2 = -beta * _cross(v, _mtv(M, u))
    g3 = -beta * _cross(_mv(E2, v), _mtv(E1A, u))
    # J(M) xi without forming the matrix
    P = np.empty(6)
    P[0] = h * (xi[0] + beta * (-M[1, 1] * xi[3] + M[1, 0] * xi[4]))
    P[1] = h * (xi[1] + beta * (M[0, 1] * xi[3] - M[0, 0] * xi[4]))
    P[2] = h * alpha * xi[2]
    P[3] = h * (xi[3] + beta * (-M[1, 1] * xi[0] + M[0, 1] * xi[1]))
    P[4] = h * (xi[4] + beta * (M[1, 0] * xi[0] - M[0, 0] * xi[1]))
    P[5] = h * alpha * xi[5]
    P[:3] += (-0.5 * h * h) * _mtv(_jr(-0.5 * h * xi1), g1)
    P[3:] += (0.5 * h * h) * _mtv(_jr(0.5 * h * xi2), g2)
    Q = np.empty(6)
    Q[:3] = -h * g1
    Q[3:] = h * g3
    return P, Q, M


@numba.njit(cache=True)
def _residual(A, xi, mu, h, alpha, beta):
    P, Q, M = _pq(A, xi, h, alpha, beta)
    r = np.empty(6)
    r[:3] = _mv(_jr_inv(h * xi[:3]), P[:3]) / h - Q[:3] - mu[:3]
    r[3:] = _mv(_jr_inv(h * xi[3:]), P[3:]) / h - Q[3:] - mu[3:]
    return r, P, M


@numba.njit(cache=True)
def _fd_jacobian(A, xi, mu, h, alpha, beta, r):
    Jac = np.empty((6, 6))
    eps = 1e-7
    for j in range(6):
        e = xi.copy()
        e[j] += eps
        rj, _, _ = _residual(A, e, mu, h, alpha, beta)
        Jac[:, j] = (rj - r) / eps
    return Jac


@numba.njit(cache=True)
def _leap(A1, A2, mu, h, alpha, beta, tol, maxit, xi0, Jinv, fresh):
    """One step from the guess xi0 with chord matrix Jinv (recomputed when ``fresh``).

    Returns (A1', A2', mu', xi, Jinv, iterations); iterations = -1 on failure.
    A stale chord matrix that stops contracting is refreshed once.
    """
    A = _mm(A1.T, A2)
    xi = xi0.copy()
    r, P, M = _residual(A, xi, mu, h, alpha, beta)
    if fresh:
        Jinv = np.linalg.inv(_fd_jacobian(A, xi, mu, h, alpha, beta, r))
    scale = 1.0 + np.abs(mu).max()
    it = 0
    refreshed = fresh
    prev = np.abs(r).max()
    while True:
        err = np.abs(r).max()
        if err <= tol * scale:
            break
        if it >= maxit or not np.isfinite(err):
            return A1, A2, mu, xi, Jinv, -1
        if it > 0 and err > 0.3 * prev and not refreshed:
            Jinv = np.linalg.inv(_fd_jacobian(A, xi, mu, h, alpha, beta, r))
            refreshed = True
        prev = err
        xi = xi - np.ascontiguousarray(Jinv) @ r
        r, P, M = _residual(A, xi, mu, h, alpha, beta)
        it += 1
    mun = np.empty(6)
    mun[:3] = _mv(_jr_inv(-h * xi[:3]), P[:3]) / h
    mun[3:] = _mv(_jr_inv(-h * xi[3:]), P[3:]) / h
    A1n = _polar(_mm(A1, _exp(h * xi[:3])))
    A2n = _polar(_mm(A2, _exp(h * xi[3:])))
    return A1n, A2n, mun, xi, Jinv, it


@numba.njit(cache=True)
def _rod_run(A1, A2, mu, h, alpha, beta, tol, maxit, nsteps, every):
    nout = nsteps // every + 1
    oA1 = np.empty((nout, 3, 3))
    oA2 = np.empty((nout, 3, 3))
    omu = np.empty((nout, 6))
    oA1[0] = A1
    oA2[0] = A2
    omu[0] = mu
    J = _mass(_mm(A1.T, A2), alpha, beta)
    xi = np.linalg.solve(J, mu)
    Jinv = np.eye(6)
    fresh = True
    xi_old = xi.copy()
    k = 1
    for n in range(1, nsteps + 1):
        guess = 2.0 * xi - xi_old if n > 2 else xi
        xi_old = xi
        A1, A2, mu, xi, Jinv, it = _leap(A1, A2, mu, h, alpha, beta, tol, maxit, guess, Jinv, fresh)
        if it < 0:
            return oA1[:k], oA2[:k], omu[:k], n
        fresh = it > 6
        if n % every == 0:
            oA1[k] = A1
            oA2[k] = A2
            omu[k] = mu
            k += 1
    return oA1, oA2, omu, -1


def rod_leapfrog_step(p, cfg, params):
    """One step of the symmetric variational integrator (negative step sizes run it backwards)."""
    return _rod_step_signed(p, cfg.step_size, cfg, params)


def _rod_step_signed(p, h, cfg, params):
    mu = np.concatenate([p.Pi1, p.Pi2])
    xi0 = np.linalg.solve(_mass(p.A1.T @ p.A2, params.alpha, params.beta), mu)
    A1, A2, mun, _, _, it = _leap(np.ascontiguousarray(p.A1, dtype=float),
                                  np.ascontiguousarray(p.A2, dtype=float), mu, h,
                                  params.alpha, params.beta, cfg.solver_tol,
                                  cfg.max_newton_iters, xi0, np.eye(6), True)
    if it < 0:
        raise NewtonDivergence(f"implicit stage did not converge in {cfg.max_newton_iters} iterations")
    return RodPhasePoint(A1, A2, mun[:3], mun[3:])


def rod_step_adjoint(p, cfg, params):
    """The same step with -h; composing with :func:`rod_leapfrog_step` is the identity."""
    return _rod_step_signed(p, -cfg.step_size, cfg, params)


# --- Lie-group RK4 ---

@numba.njit(cache=True)
def _drift_f(y, I1, I2, kappa, a):
    # y = (x1, x2, pi1, pi2, pi3); returns (dy, Omega)
    Om = np.empty(3)
    Om[0] = I1 * y[2] + kappa * y[0]
    Om[1] = I1 * y[3] + kappa * y[1]
    Om[2] = I2 * y[4] + a
    dy = np.empty(5)
    dy[0] = kappa * y[3]
    dy[1] = -kappa * y[2]
    dy[2] = y[3] * Om[2] - y[4] * Om[1]
    dy[3] = y[4] * Om[0] - y[2] * Om[2]
    dy[4] = y[2] * Om[1] - y[3] * Om[0]
    return dy, Om


@numba.njit(cache=True)
def _drift_rk4(A, y, h, I1, I2, kappa, a):
    k1, O1 = _drift_f(y, I1, I2, kappa, a)
    u1 = O1
    uh = 0.5 * h * u1
    k2, O2 = _drift_f(y + 0.5 * h * k1, I1, I2, kappa, a)
    u2 = _jr_inv(uh) @ O2
    uh = 0.5 * h * u2
    k3, O3 = _drift_f(y + 0.5 * h * k2, I1, I2, kappa, a)
    u3 = _jr_inv(uh) @ O3
    uf = h * u3
    k4, O4 = _drift_f(y + h * k3, I1, I2, kappa, a)
    u4 = _jr_inv(uf) @ O4
    yn = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    u = h / 6.0 * (u1 + 2 * u2 + 2 * u3 + u4)
    return A @ _exp(u), yn


@numba.njit(cache=True)
def _drift_run(A, y, h, I1, I2, kappa, a, nsteps, every):
    nout = nsteps // every + 1
    oA = np.empty((nout, 3, 3))
    oy = np.empty((nout, 5))
    oA[0] = A
    oy[0] = y
    k = 1
    for n in range(1, nsteps + 1):
        A, y = _drift_rk4(A, y, h, I1, I2, kappa, a)
        if n % every == 0:
            oA[k] = A
            oy[k] = y
            k += 1
    return oA, oy


def _mono_vec(m):
    return np.concatenate([m.y, m.alpha, m.z])


def _mono_state(v, sigma):
    return mono.MonopoleState(v[0:3], v[3:6], v[6:9], sigma)


def _mono_rk4(m, h, p, project=True):
    def f(v):
        return np.concatenate(mono.eom(_mono_state(v, m.sigma), p))

    v = _mono_vec(m)
    k1 = f(v)
    k2 = f(v + 0.5 * h * k1)
    k3 = f(v + 0.5 * h * k2)
    k4 = f(v + h * k3)
    out = _mono_state(v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), m.sigma)
    return mono.project_constraints(out) if project else out


def liegroup_rk4_step(s, cfg, params, project=True):
    """One RK4 step for a DriftState or a MonopoleState.

    ``project`` applies the tangent-space projection to monopole states.
    """
    h = cfg.step_size
    if isinstance(s, DriftState):
        y = np.concatenate([s.x, s.pi])
        A, yn = _drift_rk4(np.ascontiguousarray(s.A, dtype=float), y, h,
                           params.I1, params.I2, params.kappa, params.a)
        return DriftState(yn[:2], A, yn[2:])
    if isinstance(s, mono.MonopoleState):
        return _mono_rk4(s, h, params, project)
    raise TypeError(f"unsupported state type {type(s).__name__}")


# --- integration driver ---

@dataclass
class Trajectory:
    system: str
    t: np.ndarray
    data: dict
    monitors: dict = field(default_factory=dict)

    def __getattr__(self, name):
        d = self.__dict__.get("data", {})
        if name in d:
            return d[name]
        raise AttributeError(name)


def _default_monitors(system):
    if system == "rods":
        return {"energy": lambda p, prm: energy(p, prm),
                "mu": lambda p, prm: momentum_map(p)[0],
                "sigma1": lambda p, prm: momentum_map(p)[1],
                "sigma2": lambda p, prm: momentum_map(p)[2]}
    if system == "drift":
        return {"energy": h_drift,
                "j_nf": lambda s, prm: j_nf(s),
                "j1": lambda s, prm: casimirs(s.x, s.pi).j1,
                "J": lambda s, prm: s.A @ s.pi}
    if system == "monopole":
        return {"energy": lambda m, prm: mono.conserved(m, prm)[0],
                "J": lambda m, prm: mono.conserved(m, prm)[1],
                "constraints": lambda m, prm: mono.constraint_residual(m)}
    raise ValueError(f"unknown system {system!r}")


def _n_steps(t_span, h):
    n = (t_span[1] - t_span[0]) / h
    nr = int(round(n))
    if not np.isfinite(n) or nr <= 0 or abs(n - nr) > 1e-9 * max(1.0, n):
        raise ValueError("the step must divide the time span")
    return nr


def integrate(system, initial, t_span, cfg, params, sample_every=1, monitors=None):
    """Integrate ``system`` ('rods', 'drift' or 'monopole') and sample every few steps.

    ``monitors`` maps names to f(state, params); None uses per-system defaults
    and an empty dict disables them.  Returns a :class:`Trajectory`.
    """
    h = cfg.step_size
    n = _n_steps(t_span, h)
    if monitors is None:
        monitors = _default_monitors(system)
    if system == "rods":
        mu0 = np.concatenate([initial.Pi1, initial.Pi2])
        A1, A2, mu, fail = _rod_run(np.ascontiguousarray(initial.A1, dtype=float),
                                    np.ascontiguousarray(initial.A2, dtype=float), mu0, h,
                                    params.alpha, params.beta, cfg.solver_tol, cfg.max_newton_iters,
                                    n, sample_every)
        if fail >= 0:
            raise NewtonDivergence(f"implicit stage failed at step {fail}")
        data = {"A1": A1, "A2": A2, "Pi1": mu[:, :3], "Pi2": mu[:, 3:]}
        states = lambda i: RodPhasePoint(A1[i], A2[i], mu[i, :3], mu[i, 3:])
        m = len(A1)
    elif system == "drift":
        y0 = np.concatenate([initial.x, initial.pi])
        A, y = _drift_run(np.ascontiguousarray(initial.A, dtype=float), y0, h,
                          params.I1, params.I2, params.kappa, params.a, n, sample_every)
        data = {"x": y[:, :2], "A": A, "pi": y[:, 2:]}
        states = lambda i: DriftState(y[i, :2], A[i], y[i, 2:])
        m = len(A)
    elif system == "monopole":
        out = [initial]
        s = initial
        for k in range(1, n + 1):
            s = _mono_rk4(s, h, params)
            if k % sample_every == 0:
                out.append(s)
        data = {"y": np.array([o.y for o in out]), "alpha": np.array([o.alpha for o in out]),
                "z": np.array([o.z for o in out])}
        states = lambda i: out[i]
        m = len(out)
    else:
        raise ValueError(f"unknown system {system!r}")
    t = t_span[0] + h * sample_every * np.arange(m)
    mon = {k: np.array([f(states(i), params) for i in range(m)]) for k, f in monitors.items()}
    return Trajectory(system, t, data, mon)


def linear_trend(t, v):
    """Least-squares slope of v against t."""
    return float(np.polyfit(np.asarray(t), np.asarray(v), 1)[0])


# --- spectra ---

@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray
    powers: np.ndarray
    units: str  # 'angular' (rad/time) or 'cycles' (1/time)

    def __post_init__(self):
        if len(self.frequencies) != len(self.powers):
            raise ValueError("frequencies and powers differ in length")


class Peak(NamedTuple):
    frequency: float
    power: float


def power_spectrum(signal, dt, units="angular", min_length=1024):
    """One-sided Hann periodogram normalized so the powers sum to the signal variance."""
    s = np.asarray(signal, dtype=float)
    n = len(s)
    if n < min_length:
        raise TooShort(f"need at least {min_length} samples, got {n}")
    w = np.hanning(n)
    X = np.fft.rfft(w * (s - s.mean()))
    P = np.abs(X) ** 2 / (n * np.sum(w * w))
    P[1:] *= 2.0
    if n % 2 == 0:
        P[-1] /= 2.0
    f = np.fft.rfftfreq(n, dt)
    if units == "angular":
        f = 2 * np.pi * f
    elif units != "cycles":
        raise ValueError("units must be 'angular' or 'cycles'")
    return Spectrum(f, P, units)


def find_peaks(spec, floor=0.0, rel_floor=0.0):
    """Local maxima above the floor, interpolated quadratically in log power, strongest first."""
    P = np.asarray(spec.powers)
    f = np.asarray(spec.frequencies)
    thr = max(floor, rel_floor * P.max())
    df = f[1] - f[0]
    out = []
    for i in range(1, len(P) - 1):
        if P[i] > P[i - 1] and P[i] >= P[i + 1] and P[i] > thr:
            a, b, c = np.log(P[i - 1:i + 2] + 1e-300)
            den = a - 2 * b + c
            d = 0.5 * (a - c) / den if den < 0 else 0.0
            out.append(Peak(float(f[i] + d * df), float(np.exp(b - 0.25 * (a - c) * d))))
    out.sort(key=lambda p: -p.power)
    return out


class HarmonicFit(NamedTuple):
    frequency: float
    z: tuple
    residual: float


def harmonic_fit(peaks, bases, zmax=3):
    """Nearest lattice combination z1 A + z2 B + z3 C for each peak frequency.

    Ties are broken towards the smallest |z1| + |z2| + |z3|.
    """
    if zmax < 1:
        raise ValueError("zmax must be at least 1")
    bases = np.asarray(bases, dtype=float)
    rng = range(-zmax, zmax + 1)
    Z = np.array(list(itertools.product(rng, rng, rng)))
    vals = Z @ bases
    l1 = np.abs(Z).sum(axis=1)
    out = []
    for pk in peaks:
        fr = pk.frequency if isinstance(pk, Peak) else float(pk)
        res = np.abs(fr - vals)
        best = np.lexsort((l1, np.round(res, 12)))[0]
        out.append(HarmonicFit(fr, tuple(int(v) for v in Z[best]), float(res[best])))
    return out


def rate_fit(samples):
    """Least squares rate = c1 |x| + c2 |x|^2 through the origin."""
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[0] < 3:
        raise RankDeficient("need at least three (|x|, rate) samples")
    r = s[:, 0]
    M = np.column_stack([r, r * r])
    if np.linalg.matrix_rank(M) < 2:
        raise RankDeficient("samples do not determine both coefficients")
    c, *_ = np.linalg.lstsq(M, s[:, 1], rcond=None)
    return float(c[0]), float(c[1])
