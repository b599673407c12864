"""Corrected multisoliton profiles, interaction coefficients and the
ansatz residual.

The order-N ansatz around soliton j is V_j = Q + sum_{n<=N} T_j^{(n)} with

    T_j^(1) = -rho_j LamQ,                 rho_j = sum_k lam_j^2 m0 / (8 pi lam_k d_jk),
    T_j^(2) = rho_j^2 U_A + rhot_j LamQ,   L+ U_A = -2 phi_{Q LamQ} LamQ - phi_{LamQ^2} Q - 2 LamQ,
    T_j^(3) = X3_0 + (yhat . M_j yhat) U_C + i Y3,   L+ U_C = r^2 Q  (ell = 2),

together with parameter-velocity coefficients b_j^(n), m_j^(n) (n <= 3).
The degree-1 l=1 right-hand sides cancel identically once b_j^(2) takes the
gravitational-force value, which is why no T has an l=1 component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import CubicSpline

from .errors import PlacementError, StepError, UnsupportedOrderError
from .fields import ComplexField3D, ModulationState
from .groundstate import GroundState, newtonian_potential_radial
from .harmonic import HarmonicProfile, multipole_F
from .linops import LinearizedOperators
from .radial import integrate_radial

__all__ = [
    "Params",
    "multipole_F",
    "HarmonicProfile",
    "psi_n",
    "solve_Lplus",
    "solve_Lminus",
    "ProfileSet",
    "ProfileBuilder",
    "build_profiles",
    "assemble_R",
    "residual_Psi",
    "coefficient_b2",
    "coefficient_m2",
    "coefficient_b3",
    "coefficient_m3",
]


@dataclass(frozen=True)
class Params:
    """Position/velocity/scale block P = (alpha, beta, lambda)."""

    alphas: np.ndarray
    betas: np.ndarray
    lams: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.atleast_2d(np.asarray(self.alphas, float)))
        object.__setattr__(self, "betas", np.atleast_2d(np.asarray(self.betas, float)))
        object.__setattr__(self, "lams", np.atleast_1d(np.asarray(self.lams, float)))
        m = self.lams.size
        if self.alphas.shape != (m, 3) or self.betas.shape != (m, 3):
            raise ValueError("inconsistent parameter shapes")
        if np.any(self.lams <= 0):
            raise ValueError("scales must be positive")

    @property
    def m(self) -> int:
        return self.lams.size

    def min_separation(self) -> float:
        if self.m < 2:
            return np.inf
        d = self.alphas[:, None, :] - self.alphas[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        return float(np.min(dist[~np.eye(self.m, dtype=bool)]))


def _pair_geometry(P: Params):
    """alpha_jk (m,m,3) and distances with inf on the diagonal."""
    d = P.alphas[:, None, :] - P.alphas[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    np.fill_diagonal(dist, np.inf)
    return d, dist


# -------------------------------------------------------------------------
# scalar coefficient algebra (closed forms in P)
# -------------------------------------------------------------------------


def _rho(P: Params, m0: float) -> np.ndarray:
    _, dist = _pair_geometry(P)
    c = P.lams[:, None] ** 2 * m0 / (8.0 * np.pi * P.lams[None, :])
    return np.sum(c / dist, axis=1)


def _rho_tilde(P: Params, m0: float) -> np.ndarray:
    _, dist = _pair_geometry(P)
    c = P.lams[:, None] ** 2 * m0 / (8.0 * np.pi * P.lams[None, :])
    rho = np.sum(c / dist, axis=1)
    return np.sum(c * rho[None, :] / dist, axis=1)


def _dbeta_rho(P: Params, m0: float) -> np.ndarray:
    """sum_k 2 beta_k . grad_{alpha_k} of rho_j."""
    ajk, dist = _pair_geometry(P)
    bjk = P.betas[:, None, :] - P.betas[None, :, :]
    c = P.lams[:, None] ** 2 * m0 / (8.0 * np.pi * P.lams[None, :])
    ab = np.sum(ajk * bjk, axis=-1)
    return np.sum(-2.0 * c * ab / dist ** 3, axis=1)


def _dbeta_rho_tilde(P: Params, m0: float) -> np.ndarray:
    ajk, dist = _pair_geometry(P)
    bjk = P.betas[:, None, :] - P.betas[None, :, :]
    c = P.lams[:, None] ** 2 * m0 / (8.0 * np.pi * P.lams[None, :])
    ab = np.sum(ajk * bjk, axis=-1)
    drho = _dbeta_rho(P, m0)
    rho = _rho(P, m0)
    return np.sum(c * drho[None, :] / dist
                  - 2.0 * c * rho[None, :] * ab / dist ** 3, axis=1)


def coefficient_b2(P: Params, m0: float) -> np.ndarray:
    """Gravitational force: -sum_k m0 alpha_jk / (4 pi lam_k d^3), shape (m,3)."""
    ajk, dist = _pair_geometry(P)
    w = m0 / (4.0 * np.pi * P.lams[None, :] * dist ** 3)
    return -np.sum(w[:, :, None] * ajk, axis=1)


def coefficient_m2(P: Params, m0: float) -> np.ndarray:
    """sum_k lam_j^3 m0 (alpha_jk . beta_jk) / (4 pi lam_k d^3), shape (m,)."""
    ajk, dist = _pair_geometry(P)
    bjk = P.betas[:, None, :] - P.betas[None, :, :]
    ab = np.sum(ajk * bjk, axis=-1)
    w = P.lams[:, None] ** 3 * m0 / (4.0 * np.pi * P.lams[None, :] * dist ** 3)
    return np.sum(w * ab, axis=1)


def coefficient_b3(P: Params, m0: float) -> np.ndarray:
    """-sum_k (Q, T_k^1) alpha_jk / (2 pi lam_k d^3); expanding T^1 gives the
    m0^2/(32 pi^2) double-sum form, shape (m,3)."""
    ajk, dist = _pair_geometry(P)
    rho = _rho(P, m0)
    w = rho[None, :] * m0 / (4.0 * np.pi * P.lams[None, :] * dist ** 3)
    return np.sum(w[:, :, None] * ajk, axis=1)


def coefficient_m3(P: Params, m0: float, i_a: float, i_ll: float) -> np.ndarray:
    """Solvability value of the third-order scale velocity; i_a = (U_A, Q),
    i_ll = (Lam Lam Q, Q)."""
    rho = _rho(P, m0)
    drho = _dbeta_rho(P, m0)
    drhot = _dbeta_rho_tilde(P, m0)
    m2 = coefficient_m2(P, m0)
    _, dist = _pair_geometry(P)
    c = P.lams[:, None] ** 2 * m0 / (8.0 * np.pi * P.lams[None, :])
    s_lam = 2.0 * rho * m2 / P.lams \
        - np.sum(c * (m2 / P.lams)[None, :] / dist, axis=1)
    lam = P.lams
    num = lam ** 2 * (2.0 * rho * drho * i_a + 0.5 * m0 * (drhot - s_lam)) \
        + lam * m2 * rho * i_ll
    return num / (lam * 0.5 * m0)


# -------------------------------------------------------------------------
# psi terms (Coulomb Taylor columns against a radial density)
# -------------------------------------------------------------------------


def psi_n(n: int, j: int, k: int, P: Params, gs: GroundState,
          moment: float | None = None) -> HarmonicProfile:
    """Interaction term psi^(n) at soliton j sourced by soliton k.

    For a radial source density u the defining integral collapses exactly
    (mean-value property of harmonic polynomials) to
    -lam_j^2 m_u/(4 pi lam_k) F_n(alpha_jk, -lam_j y_j); ``moment`` is
    m_u = int u and defaults to the ground-state squared norm.
    """
    if not 1 <= n <= 4:
        raise UnsupportedOrderError(f"psi order {n} outside 1..4")
    if j == k:
        raise ValueError("self-interaction term is not defined")
    m_u = gs.mass_sq if moment is None else float(moment)
    lam_j, lam_k = P.lams[j], P.lams[k]
    a = P.alphas[j] - P.alphas[k]
    d = float(np.linalg.norm(a))
    if d == 0:
        raise ValueError("collision in psi evaluation")
    r = gs.grid.r
    pref = -lam_j ** 2 * m_u / (4.0 * np.pi * lam_k)
    out = HarmonicProfile(gs.grid)
    if n == 1:
        out.c0 = (pref / d) * np.ones_like(r).astype(complex)
    elif n == 2:
        # F_2(a, -lam y) = -lam (a.y)/d^3
        vec = -pref * lam_j * a / d ** 3
        out.c1 = vec[:, None] * r[None, :].astype(complex)
    elif n == 3:
        # F_3(a, -lam y) = lam^2 r^2 (3 (ahat.nhat)^2 - 1) / (2 d^3)
        ahat = a / d
        tens = pref * lam_j ** 2 / (2.0 * d ** 3) \
            * (3.0 * np.outer(ahat, ahat) - np.eye(3))
        out.c2 = tens[:, :, None] * (r ** 2)[None, None, :].astype(complex)
    else:
        # F_4(a, -lam y) = -lam^3 r^3 (5 (ahat.nhat)^3 - 3 (ahat.nhat)) / (2 d^4)
        ahat = a / d
        coef = -pref * lam_j ** 3 / (2.0 * d ** 4)
        tens = 5.0 * np.einsum("a,b,c->abc", ahat, ahat, ahat) \
            - (np.einsum("a,bc->abc", ahat, np.eye(3))
               + np.einsum("b,ac->abc", ahat, np.eye(3))
               + np.einsum("c,ab->abc", ahat, np.eye(3)))
        out.c3 = coef * tens[:, :, :, None] * (r ** 3)[None, None, None, :].astype(complex)
    return out


def solve_Lplus(f: HarmonicProfile, gs: GroundState,
                ops: LinearizedOperators | None = None) -> HarmonicProfile:
    """Componentwise L+ solve of a harmonic profile (kernel at ell=1)."""
    return _solve_l(f, gs, "plus", ops)


def solve_Lminus(f: HarmonicProfile, gs: GroundState,
                 ops: LinearizedOperators | None = None) -> HarmonicProfile:
    """Componentwise L- solve of a harmonic profile (kernel at ell=0)."""
    return _solve_l(f, gs, "minus", ops)


def _solve_l(f, gs, which, ops):
    if ops is None:
        ops = LinearizedOperators(gs)
    if f.c3 is not None:
        raise UnsupportedOrderError("solves support harmonic degree <= 2")
    out = HarmonicProfile(f.grid)
    out.c0 = ops.solve(f.c0, 0, which)
    if f.c1 is not None:
        out.c1 = np.stack([ops.solve(f.c1[i], 1, which) for i in range(3)])
    if f.c2 is not None:
        c2 = np.zeros_like(f.c2)
        for a in range(3):
            for b in range(a, 3):
                c2[a, b] = c2[b, a] = ops.solve(f.c2[a, b], 2, which)
        out.c2 = c2
    return out


# -------------------------------------------------------------------------
# profile construction
# -------------------------------------------------------------------------


class ProfileBuilder:
    """Caches the universal radial solves shared by every parameter point."""

    def __init__(self, gs: GroundState, ops: LinearizedOperators | None = None):
        self.gs = gs
        self.ops = LinearizedOperators(gs) if ops is None else ops
        r = gs.grid.r
        q, dq, lamq = gs.q, gs.dq, gs.lambda_q
        # node-exact Lam(LamQ) through the equation: q'' = (1+phi) q - 2 q'/r
        ddq = (1.0 + gs.phi) * q - 2.0 * dq / r
        dlamq = 3.0 * dq + r * ddq
        self.lamlam_q = 2.0 * lamq + r * dlamq
        self.p_ql = newtonian_potential_radial(q * lamq, 0, gs.grid)
        self.p_ll = newtonian_potential_radial(lamq * lamq, 0, gs.grid)
        g1 = -2.0 * self.p_ql * lamq - self.p_ll * q - 2.0 * lamq
        self.u_a = self.ops.solve(g1, 0, "plus").real
        self.u_c = self.ops.solve(r ** 2 * q, 2, "plus").real
        self.p_qa = newtonian_potential_radial(q * self.u_a, 0, gs.grid)
        self.p_la = newtonian_potential_radial(lamq * self.u_a, 0, gs.grid)
        self.m0 = gs.mass_sq
        self.half_m0 = float(integrate_radial(lamq * q, r))  # = m0/2
        self.i_a = float(integrate_radial(self.u_a * q, r))
        self.i_ll = float(integrate_radial(self.lamlam_q * q, r))
        self.norm_lamq_sq = float(integrate_radial(lamq * lamq, r))

    def consts(self) -> dict:
        return {"m0": self.m0, "i_a": self.i_a, "i_ll": self.i_ll,
                "half_m0": self.half_m0, "norm_lamq_sq": self.norm_lamq_sq}

    def build(self, N: int, P: Params) -> "ProfileSet":
        if not 0 <= N <= 3:
            raise UnsupportedOrderError("profile order N must be in 0..3")
        gs, ops = self.gs, self.ops
        m = P.m
        if m >= 2 and P.min_separation() <= 0:
            raise ValueError("collision in profile construction")
        grid = gs.grid
        r = grid.r
        q, lamq = gs.q, gs.lambda_q
        m0 = self.m0

        rho = _rho(P, m0) if m >= 2 else np.zeros(m)
        rhot = _rho_tilde(P, m0) if m >= 2 else np.zeros(m)
        corrections = [dict() for _ in range(m)]

        if N >= 1 and m >= 2:
            for j in range(m):
                t1 = HarmonicProfile(grid)
                t1.c0 = (-rho[j]) * lamq.astype(complex)
                corrections[j][1] = t1
        if N >= 2 and m >= 2:
            for j in range(m):
                t2 = HarmonicProfile(grid)
                t2.c0 = (rho[j] ** 2 * self.u_a + rhot[j] * lamq).astype(complex)
                corrections[j][2] = t2
        if N >= 3 and m >= 2:
            ajk, dist = _pair_geometry(P)
            drho = _dbeta_rho(P, m0)
            drhot = _dbeta_rho_tilde(P, m0)
            m2 = coefficient_m2(P, m0)
            m3 = coefficient_m3(P, m0, self.i_a, self.i_ll)
            for j in range(m):
                # ell = 2: one universal radial solve against the tensor sum
                tens = np.zeros((3, 3))
                for k in range(m):
                    if k == j:
                        continue
                    ahat = ajk[j, k] / dist[j, k]
                    tens += P.lams[j] ** 4 * m0 / (8.0 * np.pi * P.lams[k]
                                                   * dist[j, k] ** 3) \
                        * (3.0 * np.outer(ahat, ahat) - np.eye(3))

                # ell = 0 real part: degree-3 radial remainder
                A = corrections[j][1].c0.real   # T_j^1
                B = corrections[j][2].c0.real   # T_j^2
                p_ab = -rho[j] ** 3 * self.p_la - rho[j] * rhot[j] * self.p_ll
                p_qb = rho[j] ** 2 * self.p_qa + rhot[j] * self.p_ql
                p_qa_j = -rho[j] * self.p_ql
                rhs0 = -2.0 * p_ab * q - 2.0 * p_qb * A - 2.0 * p_qa_j * B \
                    - rho[j] ** 2 * self.p_ll * A
                for k in range(m):
                    if k == j:
                        continue
                    lamfac = -P.lams[j] ** 2 / (4.0 * np.pi * P.lams[k] * dist[j, k])
                    mom_qb = rho[k] ** 2 * self.i_a + rhot[k] * self.half_m0
                    mom_aa = rho[k] ** 2 * self.norm_lamq_sq
                    mom_qa = -rho[k] * self.half_m0
                    rhs0 -= 2.0 * (lamfac * mom_qb) * q
                    rhs0 -= (lamfac * mom_aa) * q
                    rhs0 -= 2.0 * (lamfac * mom_qa) * A
                    rhs0 -= (lamfac * m0) * B
                x30 = ops.solve(rhs0, 0, "plus").real

                # imaginary radial part: solvability fixes m_j^3
                c = P.lams[:, None] ** 2 * m0 / (8.0 * np.pi * P.lams[None, :])
                s_lam_j = 2.0 * rho[j] * m2[j] / P.lams[j] \
                    - np.sum(c[j] * (m2 / P.lams) / dist[j])
                im_e2 = P.lams[j] ** 2 * ((2.0 * rho[j] * drho[j]) * self.u_a
                                          + (drhot[j] - s_lam_j) * lamq) \
                    + P.lams[j] * m2[j] * rho[j] * self.lamlam_q
                rhs_y = -P.lams[j] * m3[j] * lamq + im_e2
                y3 = ops.solve(rhs_y, 0, "minus").real

                t3 = HarmonicProfile(grid)
                t3.c0 = x30 + 1j * y3
                t3.c2 = tens[:, :, None] * (self.u_c[None, None, :]).astype(complex)
                corrections[j][3] = t3

        return ProfileSet(gs=gs, order=N, P=P, corrections=corrections,
                          consts=self.consts(), builder=self)


def build_profiles(N: int, P: Params, gs: GroundState) -> "ProfileSet":
    return ProfileBuilder(gs).build(N, P)


@dataclass
class ProfileSet:
    """Per-soliton corrected profiles V_j^(N) plus coefficient closures."""

    gs: GroundState
    order: int
    P: Params
    corrections: list          # per soliton: {n: HarmonicProfile}
    consts: dict
    builder: ProfileBuilder = field(repr=False, default=None)

    @property
    def m(self) -> int:
        return self.P.m

    # -- coefficient closures ------------------------------------------------

    def b_coeff(self, P: Params, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros((P.m, 3))
        if n == 2:
            return coefficient_b2(P, self.consts["m0"])
        if n == 3:
            return coefficient_b3(P, self.consts["m0"])
        raise UnsupportedOrderError(f"b^({n}) not available")

    def m_coeff(self, P: Params, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros(P.m)
        if n == 2:
            return coefficient_m2(P, self.consts["m0"])
        if n == 3:
            return coefficient_m3(P, self.consts["m0"], self.consts["i_a"],
                                  self.consts["i_ll"])
        raise UnsupportedOrderError(f"m^({n}) not available")

    def B(self, P: Params) -> np.ndarray:
        out = np.zeros((P.m, 3))
        for n in range(2, self.order + 1):
            out += self.b_coeff(P, n)
        return out

    def M(self, P: Params) -> np.ndarray:
        out = np.zeros(P.m)
        for n in range(2, self.order + 1):
            out += self.m_coeff(P, n)
        return out

    # -- pointwise evaluation of V_j and its derived fields -------------------

    def eval_V(self, j: int, y: np.ndarray) -> np.ndarray:
        r = np.sqrt(np.sum(np.asarray(y, float) ** 2, axis=-1))
        out = self.gs.q_at(r).astype(complex)
        for t in self.corrections[j].values():
            out = out + t.evaluate(y)
        return out

    def eval_LambdaV(self, j: int, y: np.ndarray) -> np.ndarray:
        r = np.sqrt(np.sum(np.asarray(y, float) ** 2, axis=-1))
        out = (2.0 * self.gs.q_at(r) + r * self.gs.dq_at(r)).astype(complex)
        for t in self.corrections[j].values():
            out = out + t.evaluate_lambda(y)
        return out

    def eval_gradV(self, j: int, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, float)
        r = np.sqrt(np.sum(y ** 2, axis=-1))
        n = y / np.maximum(r, 1e-12)[..., None]
        out = (self.gs.dq_at(r).astype(complex))[..., None] * n
        for t in self.corrections[j].values():
            out = out + t.evaluate_gradient(y)
        return out

    def radial_l2_sq(self, j: int) -> float:
        """int |V_j|^2 over R^3 by radial quadrature (angular factors per
        degree: 4pi, 4pi/3, 8pi/15)."""
        grid = self.gs.grid
        r = grid.r
        c0 = self.gs.q.astype(complex)
        c2 = None
        for t in self.corrections[j].values():
            c0 = c0 + t.c0
            if t.c2 is not None:
                c2 = t.c2 if c2 is None else c2 + t.c2
        total = integrate_radial(np.abs(c0) ** 2, r)
        if c2 is not None:
            # angular integral of (n.Mn)^2 is (8 pi/15) M:M
            rad = np.sum(np.abs(c2) ** 2, axis=(0, 1))
            total += (2.0 / 15.0) * integrate_radial(rad, r)
        return float(total)


# -------------------------------------------------------------------------
# field assembly and residual
# -------------------------------------------------------------------------


def _soliton_frame(field: ComplexField3D, alpha, lam):
    X, Y, Z = field.meshgrid()
    y = np.stack([(X - alpha[0]) / lam, (Y - alpha[1]) / lam,
                  (Z - alpha[2]) / lam], axis=-1)
    return y


def _phase(field: ComplexField3D, beta, gamma):
    X, Y, Z = field.meshgrid()
    return np.exp(1j * (beta[0] * X + beta[1] * Y + beta[2] * Z) - 1j * gamma)


def assemble_R(profile_set: ProfileSet, g: ModulationState,
               template: ComplexField3D, tail_tol: float = 1e-8) -> ComplexField3D:
    """Sum of transformed profiles sum_j g_j V_j on the template's grid.

    Each soliton acts as lam^{-2} V((x - alpha)/lam) e^{-i gamma + i beta.x};
    placement requires profile tails below tail_tol at the nearest boundary.
    """
    if g.m != profile_set.m:
        raise ValueError("modulation state and profiles disagree on m")
    out = template.zeros_like()
    half = [L / 2 for L in out.lengths]
    for j in range(g.m):
        clearance = min(h - abs(a) for h, a in zip(half, g.alphas[j]))
        if clearance <= 0:
            raise PlacementError(f"soliton {j} outside the box")
        edge = abs(profile_set.gs.q_at(np.array([clearance / g.lams[j]]))[0]) \
            / g.lams[j] ** 2
        if edge > tail_tol:
            raise PlacementError(
                f"soliton {j} too close to the boundary "
                f"(tail {edge:.2e} > {tail_tol:.0e})")
        y = _soliton_frame(out, g.alphas[j], g.lams[j])
        vals = profile_set.eval_V(j, y)
        out.data += vals * _phase(out, g.betas[j], g.gammas[j]) / g.lams[j] ** 2
    return out


class _RadialPotential:
    """ell-resolved radial potential with its power-law far field."""

    def __init__(self, grid, values, ell):
        self.spl = CubicSpline(grid.r, values)
        self.r_max = grid.r_max
        self.edge = float(values[-1])
        self.ell = ell

    def __call__(self, r):
        out = np.where(r <= self.r_max, self.spl(np.minimum(r, self.r_max)),
                       self.edge * (self.r_max / np.maximum(r, self.r_max))
                       ** (self.ell + 1))
        return out


def _hartree_potential_multipole(profile_set: ProfileSet, g: ModulationState,
                                 template: ComplexField3D) -> np.ndarray:
    """phi_{|R|^2} from per-soliton radial Poisson solves.

    Cross densities are exponentially small in the separation (potential
    localization bound) and are dropped; the self densities keep their
    ell = 0 and ell = 2 components.
    """
    gs = profile_set.gs
    grid = gs.grid
    r = grid.r
    out = np.zeros(template.data.shape)
    for j in range(g.m):
        c0 = gs.q.astype(complex)
        c2 = None
        for t in profile_set.corrections[j].values():
            c0 = c0 + t.c0
            if t.c2 is not None:
                c2 = t.c2 if c2 is None else c2 + t.c2
        rho0 = np.abs(c0) ** 2
        tensors = []
        if c2 is not None:
            # scalar radial part of the ell=2 block: c2 = M * u_c by build
            mm = np.real(np.einsum("abn,abn->n", c2, np.conj(c2)))
            rho0 = rho0 + (2.0 / 15.0) * mm
            rho2 = 2.0 * np.real(c0)[None, None, :] * np.real(c2)
            tensors.append(rho2)
        phi0 = _RadialPotential(grid, newtonian_potential_radial(rho0, 0, grid), 0)
        y = _soliton_frame(template, g.alphas[j], g.lams[j])
        rr = np.sqrt(np.sum(y * y, axis=-1))
        contrib = phi0(rr)
        if tensors:
            n = y / np.maximum(rr, 1e-12)[..., None]
            for rho2 in tensors:
                for a in range(3):
                    for b in range(a, 3):
                        fac = 1.0 if a == b else 2.0
                        pot = _RadialPotential(
                            grid, newtonian_potential_radial(rho2[a, b], 2, grid), 2)
                        contrib += fac * pot(rr) * n[..., a] * n[..., b]
        out += contrib / g.lams[j] ** 2
    return out


def residual_Psi(profile_set: ProfileSet, gflow, t: float,
                 template: ComplexField3D, potential: str = "multipole",
                 dt_factor: float = 1e-4, tail_tol: float = 1e-8):
    """PDE defect of the ansatz along a modulation flow.

    gflow maps time to ModulationState and must follow the parameter ODE
    system (then the parameter-slack terms vanish identically).  Returns
    (Psi field, l2 norm, weighted sup norm); the time derivative uses
    centered differences with a Richardson consistency check.
    """
    h = dt_factor * max(abs(t), 1.0)
    gs_here = gflow(t)
    R0 = assemble_R(profile_set, gs_here, template, tail_tol)
    Rp = assemble_R(profile_set, gflow(t + h), template, tail_tol)
    Rm = assemble_R(profile_set, gflow(t - h), template, tail_tol)
    dR = (Rp.data - Rm.data) / (2.0 * h)
    Rp2 = assemble_R(profile_set, gflow(t + 2 * h), template, tail_tol)
    Rm2 = assemble_R(profile_set, gflow(t - 2 * h), template, tail_tol)
    dR2 = (Rp2.data - Rm2.data) / (4.0 * h)
    scale = float(np.max(np.abs(dR))) + 1e-300
    mismatch = float(np.max(np.abs(dR - dR2))) / scale
    # centered differences differ by 3x the h^2 error between steps h and 2h
    if mismatch > 0.01:
        raise StepError(f"time-derivative Richardson mismatch {mismatch:.2e}")
    dR = (4.0 * dR - dR2) / 3.0

    lap = sfft.ifftn(-R0.k_sq() * sfft.fftn(R0.data, workers=-1), workers=-1)

    if potential == "multipole":
        phi = _hartree_potential_multipole(profile_set, gs_here, template)
    elif potential in ("periodic", "freespace"):
        from .evolution import hartree_potential
        phi = hartree_potential(R0, free_space=(potential == "freespace")).data.real
    else:
        raise ValueError(f"unknown potential mode {potential!r}")

    psi = ComplexField3D(1j * dR + lap - phi * R0.data, template.lengths, t)
    l2 = psi.l2_norm()
    X, Y, Z = psi.meshgrid()
    dist = np.full(X.shape, np.inf)
    for j in range(gs_here.m):
        a = gs_here.alphas[j]
        dist = np.minimum(dist, np.sqrt((X - a[0]) ** 2 + (Y - a[1]) ** 2
                                        + (Z - a[2]) ** 2))
    wsup = float(np.max(np.abs(psi.data) * np.exp(0.5 * dist)))
    return psi, l2, wsup
