"""Calibration of the drift system from the linearization at a relative equilibrium.

Pipeline: ``linearize`` -> ``jordan_split`` -> ``moncrief_split`` ->
``extract_blocks`` -> ``resonant_refine`` -> ``gauge_fix``.  ``calibrate``
runs all of it for the resonant rod configuration.

Conventions.  Tangent vectors are 12-vectors in the left-trivialized chart of
:mod:`resdrift.rods`; ``omega`` is the matrix with omega(u, v) = u^T omega v
and i_X omega = dH.  The Lie algebra so(3) x R^2 uses the basis
(e1, e2, e3, s1, s2); its dual uses the dual basis, so that a momentum
perturbation nu pairs with xi as nu . xi.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import rods
from .liegroup import hat

__all__ = [
    "NotEquilibrium",
    "ClusterAmbiguity",
    "DegenerateForm",
    "BlockInconsistency",
    "NotResonant",
    "ZeroCoupling",
    "Linearization",
    "JordanSplit",
    "MoncriefBasis",
    "Blocks",
    "DriftParams",
    "RefinedBasis",
    "linearize",
    "jordan_split",
    "moncrief_split",
    "extract_blocks",
    "resonant_refine",
    "gauge_fix",
    "shift_gauge",
    "calibrate",
    "dump_calibration",
    "load_calibration",
]


class NotEquilibrium(ValueError):
    pass


class ClusterAmbiguity(ValueError):
    pass


class DegenerateForm(ArithmeticError):
    pass


class BlockInconsistency(ArithmeticError):
    pass


class NotResonant(ValueError):
    pass


class ZeroCoupling(ValueError):
    pass


@dataclass
class Linearization:
    M: np.ndarray  # 12x12
    omega: np.ndarray  # 12x12 antisymmetric
    dJ: np.ndarray  # 5x12
    G: np.ndarray  # 12x5 infinitesimal generators of the algebra basis
    ad: np.ndarray  # 5x5 matrix of ad_xi_e on the algebra
    xi_e: np.ndarray  # generator as a 5-vector
    mu_e: np.ndarray  # so(3) momentum at p_e

    def symplecticity_residual(self):
        R = self.M.T @ self.omega + self.omega @ self.M
        return np.abs(R).max() / max(1.0, np.abs(self.M).max())


@dataclass
class JordanSplit:
    S: np.ndarray
    N: np.ndarray
    clusters: np.ndarray  # cluster means
    projectors: list  # complex spectral projectors, one per cluster
    multiplicities: list


@dataclass
class MoncriefBasis:
    W: np.ndarray  # 12 x dim W_red
    G: np.ndarray  # 12 x dim g_mu, generators of the isotropy algebra
    Z: np.ndarray  # 12 x dim g_mu, dJ-dual to G: G^T omega Z = Id
    Bp: np.ndarray  # 12 x dim b, generators of the complement b
    g_basis: np.ndarray  # 5 x dim g_mu, isotropy algebra basis in (e1, e2, e3, s1, s2)
    b_basis: np.ndarray  # 5 x dim b
    omega: np.ndarray
    J: np.ndarray  # compatible complex structure (original coordinates)
    metric: np.ndarray  # B as a bilinear form in original coordinates

    def matrix(self):
        return np.hstack([self.W, self.G, self.Z, self.Bp])

    def omega_blocks(self):
        T = self.matrix()
        return T.T @ self.omega @ T


@dataclass
class Blocks:
    N21: np.ndarray  # dim g_mu x dim W, W_red -> g_mu
    N13: np.ndarray  # dim W x dim g_mu, g_mu^* -> W_red
    N23: np.ndarray  # dim g_mu x dim g_mu, symmetric bilinear form on g_mu^*
    omega_W: np.ndarray  # symplectic form on W_red in its basis
    S_W: np.ndarray  # reduced linearization in the W basis
    residuals: dict = field(default_factory=dict)


@dataclass
class DriftParams:
    I1: float
    I2: float
    kappa: float
    a: float
    sign: str
    lam: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.sign not in ("plus", "minus"):
            raise ValueError(f"sign must be 'plus' or 'minus', got {self.sign!r}")

    def as_dict(self):
        return {"I1": self.I1, "I2": self.I2, "kappa": self.kappa, "a": self.a,
                "sign": self.sign, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d):
        return cls(I1=float(d["I1"]), I2=float(d["I2"]), kappa=float(d["kappa"]),
                   a=float(d["a"]), sign=d["sign"], lam=float(d.get("lambda", d.get("lam", 1.0))))


@dataclass
class RefinedBasis:
    """Normalized bases behind a :class:`DriftParams`.

    ``E`` (12x2) spans W_red^1 with omega(E[:,0], E[:,1]) = 1 and
    N^211 = kappa Id; ``F`` (5x5, orthonormal) has columns f1, f2, f3, s1, s2 in
    the algebra; ``Zf`` (12x5) are momentum directions dual to ``F``
    (dJ Zf = F) chosen omega-orthogonal to ``E``.
    """

    E: np.ndarray
    F: np.ndarray
    Zf: np.ndarray
    N23f: np.ndarray  # N23 in the F coordinates
    a_coeffs: np.ndarray  # N23(f3, s1), N23(f3, s2)
    basis: MoncriefBasis


# --- linearization ---

def _field(p, gen, params):
    return rods.eom(p, params).as_vector() - rods.generator_field(p, gen).as_vector()


def linearize(p_e, gen, params, h=1e-4):
    """Jacobian of X_H - xi_P at p_e in the exponential chart.

    Fourth-order central differences at steps h and h/2 are combined by one
    Richardson step.  The chart correction (d exp) drops out because the field
    vanishes at p_e.
    """
    F0 = _field(p_e, gen, params)
    scale = max(1.0, np.abs(rods.tangent_vector(rods.eom(p_e, params))).max())
    if np.abs(F0).max() > 1e-8 * scale:
        raise NotEquilibrium(f"vector field residual {np.abs(F0).max():.3e} at p_e")

    def d4(step):
        D = np.empty((12, 12))
        for j in range(12):
            e = np.zeros(12)
            e[j] = step
            f = [_field(rods.retract(p_e, c * e), gen, params) for c in (2, 1, -1, -2)]
            D[:, j] = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * step)
        return D

    M = (64 * d4(h / 2) - d4(h)) / 63.0
    xi = gen.as_vector()
    ad = np.zeros((5, 5))
    ad[:3, :3] = hat(gen.Omega)
    mu, _, _ = rods.momentum_map(p_e)
    return Linearization(M=M, omega=rods.symplectic_matrix(p_e),
                         dJ=rods.momentum_map_derivative(p_e),
                         G=rods.group_generators(p_e), ad=ad, xi_e=xi, mu_e=mu)


# --- semisimple / nilpotent split ---

def _cluster(evals, radius):
    """Single-linkage clustering of eigenvalues within ``radius``."""
    n = len(evals)
    labels = -np.ones(n, dtype=int)
    k = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = k
        while stack:
            j = stack.pop()
            near = np.nonzero((np.abs(evals - evals[j]) < radius) & (labels < 0))[0]
            labels[near] = k
            stack.extend(near.tolist())
        k += 1
    return labels, k


def _riesz_projector(M, member):
    """Spectral projector of M onto the eigenvalues selected by ``member``.

    Ordered complex Schur form followed by a Sylvester solve to decouple the
    selected block; robust for defective eigenvalues.
    """
    n = M.shape[0]
    T, Q, sdim = sla.schur(M.astype(complex), output="complex", sort=member)
    if sdim == 0:
        return np.zeros((n, n), dtype=complex)
    if sdim == n:
        return np.eye(n, dtype=complex)
    T11, T12, T22 = T[:sdim, :sdim], T[:sdim, sdim:], T[sdim:, sdim:]
    Y = sla.solve_sylvester(T11, -T22, -T12)
    P = np.zeros((n, n), dtype=complex)
    P[:sdim, :sdim] = np.eye(sdim)
    P[:sdim, sdim:] = -Y
    return Q @ P @ Q.conj().T


def jordan_split(M, cluster_tol=1e-6):
    """Semisimple plus nilpotent decomposition M = S + N.

    Eigenvalues of a Jordan block of size k move by O(eps^(1/k)) under a
    perturbation eps, and N^3 = 0 for the matrices of interest, so clusters are
    formed within ``cluster_tol^(1/3) * max(1, |M|)``.
    """
    M = np.asarray(M, dtype=float)
    scale = max(1.0, np.linalg.norm(M, 2))
    radius = max(cluster_tol, cluster_tol ** (1.0 / 3.0)) * scale
    evals = np.linalg.eigvals(M)
    labels, k = _cluster(evals, radius)
    means = np.array([evals[labels == j].mean() for j in range(k)])
    for i in range(k):
        for j in range(i + 1, k):
            if abs(means[i] - means[j]) < 10 * radius:
                raise ClusterAmbiguity(
                    f"clusters {means[i]:.6g} and {means[j]:.6g} closer than 10x tolerance")
    projectors = []
    S = np.zeros(M.shape, dtype=complex)
    for j in range(k):
        P = _riesz_projector(M, lambda z, j=j: int(np.argmin(np.abs(means - z))) == j)
        projectors.append(P)
        S += means[j] * P
    S = S.real
    N = M - S
    mult = [int(np.sum(labels == j)) for j in range(k)]
    return JordanSplit(S=S, N=N, clusters=means, projectors=projectors, multiplicities=mult)


# --- Moncrief splitting ---

def _isotropy(mu, tol=1e-12):
    """Bases (5 x m) of the isotropy algebra of mu and of its complement b."""
    e = np.eye(5)
    if np.linalg.norm(mu) < tol:
        return e, np.zeros((5, 0))
    u = mu / np.linalg.norm(mu)
    # plane orthogonal to mu in so(3)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(3)]))
    g = np.zeros((5, 3))
    g[:3, 0] = u
    g[3, 1] = g[4, 2] = 1.0
    b = np.zeros((5, 2))
    b[:3, :] = q[:, 1:3]
    return g, b


def _skew_basis(js, imag_tol=1e-8):
    """Real basis in which S is skew: real eigenvectors plus Re/Im of complex ones."""
    cols = []
    for c, P, m in zip(js.clusters, js.projectors, js.multiplicities):
        if abs(c.real) > imag_tol * max(1.0, abs(c)):
            raise DegenerateForm(f"eigenvalue {c:.6g} is not on the imaginary axis")
        U, _, _ = np.linalg.svd(P)
        V = U[:, :m]
        if abs(c.imag) <= imag_tol * max(1.0, abs(c)):
            Q, _, _ = np.linalg.svd(P.real)
            cols.append(Q[:, :m])
        elif c.imag > 0:
            cols.append(V.real)
            cols.append(V.imag)
    return np.hstack(cols)


def moncrief_split(lin, js):
    """Splitting T_pP = W_red + g_mu p + Z + b p from the semisimple part.

    A basis in which S is skew turns the form into a matrix -W commuting with
    S; B = sqrt(-W^2) and J = W B^-1 give an S-invariant compatible complex
    structure, Z = J(g_mu p) and W_red is the omega-complement of the rest.
    """
    T = _skew_basis(js)
    Ti = np.linalg.inv(T)
    Wm = -(T.T @ lin.omega @ T)
    d, U = np.linalg.eigh(-(Wm @ Wm))
    if d.min() < 1e-20:
        raise DegenerateForm("square root of -W^2 is singular")
    sq = np.sqrt(np.clip(d, 0.0, None))
    if sq.min() < 1e-10:
        raise DegenerateForm(f"B has eigenvalue {sq.min():.3e}")
    Bm = (U * sq) @ U.T
    Jm = Wm @ ((U / sq) @ U.T)
    J = T @ Jm @ Ti
    metric = Ti.T @ Bm @ Ti

    g_basis, b_basis = _isotropy(lin.mu_e)
    G = lin.G @ g_basis
    Bp = lin.G @ b_basis
    Z = J @ G
    # make Z dual to G under omega, then omega-orthogonal to b p
    Z = Z @ np.linalg.inv(G.T @ lin.omega @ Z).T
    if Bp.shape[1]:
        Kb = Bp.T @ lin.omega @ Bp
        Z = Z - Bp @ np.linalg.solve(Kb, Bp.T @ lin.omega @ Z)
        Z = Z @ np.linalg.inv(G.T @ lin.omega @ Z).T
    C = np.hstack([G, Z, Bp])
    Wr = sla.null_space(C.T @ lin.omega)
    if Wr.shape[1] != 12 - C.shape[1]:
        raise DegenerateForm("omega-complement has the wrong dimension")
    return MoncriefBasis(W=Wr, G=G, Z=Z, Bp=Bp, g_basis=g_basis, b_basis=b_basis,
                         omega=lin.omega, J=J, metric=metric)


# --- blocks ---

def _relnorm(A, ref=1.0):
    return float(np.abs(A).max() / max(ref, 1e-300)) if A.size else 0.0


def extract_blocks(basis, js, lin=None, tol=1e-8):
    """N21, N13, N23 from the diagrams that characterize them.

    N21 w is the algebra element whose generator is N w; for nu in g_mu^*,
    any z omega-orthogonal to W_red + b p with dJ z = nu has N z = N13 nu
    (in W_red) plus the generator of N23 nu.
    """
    Om, N, S = basis.omega, js.N, js.S
    W, G, Bp = basis.W, basis.G, basis.Bp
    nw, ng = W.shape[1], G.shape[1]
    KG = np.hstack([W, G])
    nref = max(1.0, np.abs(N).max())

    coef, res21, *_ = np.linalg.lstsq(KG, N @ W, rcond=None)
    N11 = coef[:nw]
    N21 = coef[nw:]

    # z: omega-orthogonal to W and b p, with momentum pairing fixed against g_mu
    A = np.vstack([W.T @ Om, Bp.T @ Om, G.T @ Om])
    rhs = np.vstack([np.zeros((nw + Bp.shape[1], ng)), np.eye(ng)])
    Zs = np.linalg.lstsq(A, rhs, rcond=None)[0]
    coef3 = np.linalg.lstsq(KG, N @ Zs, rcond=None)[0]
    N13 = coef3[:nw]
    N23 = coef3[nw:]
    img_res = N @ Zs - KG @ coef3

    omega_W = W.T @ Om @ W
    S_W = np.linalg.lstsq(W, S @ W, rcond=None)[0]
    res = {
        "N11": _relnorm(N11, nref),
        "N_W_image": _relnorm(N @ W - KG @ coef, nref),
        "N_Z_image": _relnorm(img_res, nref),
        "N23_symmetry": _relnorm(N23 - N23.T, nref),
        "duality": _relnorm(N21 - N13.T @ omega_W, nref),
        "S_W_invariance": _relnorm(S @ W - W @ S_W, nref),
    }
    if lin is not None:
        # commutation of S and N block by block; S is -ad on g_mu p and ad^T
        # on the momentum coordinates
        ad = np.linalg.lstsq(basis.g_basis, lin.ad @ basis.g_basis, rcond=None)[0]
        res["comm_13"] = _relnorm(S_W @ N13 - N13 @ ad.T, nref)
        res["comm_21"] = _relnorm(N21 @ S_W + ad @ N21, nref)
        res["comm_23"] = _relnorm(ad @ N23 + N23 @ ad.T, nref)
        res["g_invariance"] = _relnorm(S @ G + G @ ad, nref)
    bad = {k: v for k, v in res.items() if v > tol}
    if bad:
        raise BlockInconsistency(f"block checks failed: {bad}")
    return Blocks(N21=N21, N13=N13, N23=N23, omega_W=omega_W, S_W=S_W, residuals=res)


# --- resonant refinement ---

def resonant_refine(blocks, basis, lin, js, cluster_tol=1e-6, p_s1=(0.0, 0.0)):
    """Normalize the resonant blocks and read off (kappa, sign, I1, I2, a).

    Returns ``(DriftParams, RefinedBasis)``.  ``p_s1`` are the perturbation's
    conserved (S^1)^2 momenta; the constant a is their pairing with the f3 row
    of N23.
    """
    if lin.mu_e is not None and np.linalg.norm(lin.mu_e) > 1e-12:
        raise NotResonant("resonant refinement is implemented at zero momentum only")
    Om_g = lin.xi_e[:3]
    lam = float(np.linalg.norm(Om_g))
    if lam == 0.0:
        raise NotResonant("generator has no rotational part")
    # reduced spectrum of S on W_red
    red = np.linalg.eigvals(blocks.S_W)
    tol = max(cluster_tol, cluster_tol ** (1.0 / 3.0)) * max(1.0, lam)
    hits = np.sum(np.abs(red - 1j * lam) < tol)
    if hits != 1 or np.sum(np.abs(red + 1j * lam) < tol) != 1:
        raise NotResonant(f"reduced spectrum {red} meets +-i{lam:.6g} {hits} times")
    if blocks.S_W.shape != (2, 2):
        raise NotResonant("nonresonant reduced directions are not supported")

    Om = basis.omega
    W = basis.W
    # symplectic basis of W_red in which S_W is a pure rotation
    e1 = W[:, 0]
    u = basis.W @ (blocks.S_W @ np.eye(2)[:, 0]) / lam
    c = e1 @ Om @ u
    sign = "plus" if c < 0 else "minus"
    if sign == "plus":
        E = np.column_stack([e1, -u]) / np.sqrt(-c)
    else:
        E = np.column_stack([e1, u]) / np.sqrt(c)

    f3 = Om_g / lam if sign == "plus" else -Om_g / lam
    f1 = np.cross(f3, [1.0, 0.0, 0.0])
    if np.linalg.norm(f1) < 0.5:
        f1 = np.cross(f3, [0.0, 1.0, 0.0])
    f1 /= np.linalg.norm(f1)
    f2 = np.cross(f3, f1)
    F = np.zeros((5, 5))
    F[:3, 0], F[:3, 1], F[:3, 2] = f1, f2, f3
    F[3, 3] = F[4, 4] = 1.0

    # N21 in (x, pi) coordinates
    Wc = np.linalg.lstsq(W, E, rcond=None)[0]
    N21x = F.T @ basis.g_basis @ blocks.N21 @ Wc
    K = N21x[:2, :]
    if np.abs(N21x[2:, :]).max() > 1e-8 * max(1.0, np.abs(K).max()):
        raise BlockInconsistency("N21 leaks out of the resonant algebra directions")
    ka, kb = 0.5 * (K[0, 0] + K[1, 1]), 0.5 * (K[1, 0] - K[0, 1])
    if np.abs(K - np.array([[ka, -kb], [kb, ka]])).max() > 1e-7 * max(1.0, np.hypot(ka, kb)):
        raise BlockInconsistency(f"N211 is not a multiple of a rotation: {K}")
    kappa = float(np.hypot(ka, kb))
    phi = np.arctan2(kb, ka)
    R = np.array([[np.cos(phi), np.sin(phi)], [-np.sin(phi), np.cos(phi)]])
    E = E @ R

    # N23 in F coordinates (F orthonormal, so the dual basis is F itself)
    gb = basis.g_basis
    N23std = gb @ blocks.N23 @ gb.T
    N23f = F.T @ N23std @ F
    blk = N23f[:2, :2]
    if np.abs(blk - blk.trace() / 2 * np.eye(2)).max() > 1e-7 * max(1.0, np.abs(N23f).max()):
        raise BlockInconsistency("resonant block of N23 is not a multiple of Id")
    if np.abs(N23f[:2, 2:]).max() > 1e-7 * max(1.0, np.abs(N23f).max()):
        raise BlockInconsistency("N23 couples resonant and nonresonant directions")
    I1 = float(blk.trace() / 2)
    I2 = float(N23f[2, 2])
    a_coeffs = N23f[2, 3:5].copy()
    a = float(a_coeffs @ np.asarray(p_s1, dtype=float))

    # momentum directions dual to F and omega-orthogonal to W_red
    Zs = np.linalg.lstsq(np.vstack([W.T @ Om, basis.G.T @ Om]),
                         np.vstack([np.zeros((W.shape[1], 5)), gb.T @ F]), rcond=None)[0]
    dp = DriftParams(I1=I1, I2=I2, kappa=kappa, a=a, sign=sign, lam=lam)
    rb = RefinedBasis(E=E, F=F, Zf=Zs, N23f=N23f, a_coeffs=a_coeffs, basis=basis)
    return dp, rb


def shift_gauge(basis, rb, a11, a12):
    """Replace W_red by {w + (A w) p} with A = [[a11, a12], [-a12, a11]] from x to (pi1, pi2)."""
    A = np.array([[a11, a12], [-a12, a11]])
    gen = basis.G @ np.linalg.lstsq(basis.g_basis, rb.F[:, :2], rcond=None)[0]
    Wn = rb.E + gen @ A
    return replace(basis, W=Wn)


def gauge_fix(dp, target="spherical", value=None):
    """Move I1 along its gauge orbit I1 -> I1 + 2 kappa a12.

    ``target`` is 'spherical' (I1 = I2), 'kappa_sq_over_3' (I1 = kappa^2/3) or
    'value' (I1 = ``value``).  Returns ``(DriftParams, a12)``.
    """
    if dp.kappa == 0.0:
        raise ZeroCoupling("kappa = 0: the gauge cannot move I1")
    if target == "spherical":
        goal = dp.I2
    elif target == "kappa_sq_over_3":
        goal = dp.kappa**2 / 3.0
    elif target == "value":
        goal = float(value)
    else:
        raise ValueError(f"unknown gauge target {target!r}")
    a12 = (goal - dp.I1) / (2.0 * dp.kappa)
    return replace(dp, I1=dp.I1 + 2.0 * dp.kappa * a12), a12


def calibrate(fam=None, params=None, cluster_tol=1e-6, gauge="spherical", h=1e-4):
    """Full pipeline on a relative equilibrium (defaults to the resonant rods).

    Returns a dict with the gauge-fixed DriftParams, the pre-gauge params,
    the refined basis in the chosen gauge and the intermediate objects.
    """
    if fam is None or params is None:
        fam, params = rods.resonant_parameters()
    p_e, gen = rods.relative_equilibrium(fam, params)
    lin = linearize(p_e, gen, params, h=h)
    js = jordan_split(lin.M, cluster_tol)
    basis = moncrief_split(lin, js)
    blocks = extract_blocks(basis, js, lin)
    dp0, rb0 = resonant_refine(blocks, basis, lin, js, cluster_tol)
    dp, a12 = gauge_fix(dp0, gauge)
    # rebuild the refined basis in the new gauge so the embedding uses it
    gbasis = shift_gauge(basis, rb0, 0.0, _gauge_sign(basis, rb0, js, lin) * a12)
    gblocks = extract_blocks(gbasis, js, lin)
    dpg, rbg = resonant_refine(gblocks, gbasis, lin, js, cluster_tol)
    return {"params": dp, "pre_gauge": dp0, "refined": rbg, "refined_pre_gauge": rb0,
            "a12": a12, "p_e": p_e, "generator": gen, "rod_params": params, "family": fam,
            "linearization": lin, "jordan": js, "blocks": gblocks, "check": dpg}


def _gauge_sign(basis, rb, js, lin):
    """+1 if shifting W_red with a12 raises I1 by 2 kappa a12, -1 if it lowers it."""
    b0 = extract_blocks(basis, js, lin)
    d0, _ = resonant_refine(b0, basis, lin, js)
    nb = shift_gauge(basis, rb, 0.0, 1e-2)
    d1, _ = resonant_refine(extract_blocks(nb, js, lin), nb, lin, js)
    return 1.0 if d1.I1 > d0.I1 else -1.0


# --- serialization ---

def dump_calibration(result, path=None):
    """JSON text (written to ``path`` if given) of a :func:`calibrate` result."""
    rb = result["refined"]
    d = result["params"].as_dict()
    d.update({
        "a12": result["a12"],
        "I1_pre_gauge": result["pre_gauge"].I1,
        "a_coeffs": rb.a_coeffs.tolist(),
        "E": rb.E.tolist(),
        "F": rb.F.tolist(),
        "Zf": rb.Zf.tolist(),
    })
    text = json.dumps(d, indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_calibration(src):
    """Inverse of :func:`dump_calibration`; ``src`` is a path or JSON text."""
    if isinstance(src, str) and src.lstrip().startswith("{"):
        d = json.loads(src)
    else:
        with open(src) as fh:
            d = json.load(fh)
    dp = DriftParams.from_dict(d)
    mats = {k: np.array(d[k]) for k in ("E", "F", "Zf") if k in d}
    return dp, mats
