"""Corrected parameter trajectories solving the modulation ODE system

    alpha' = 2 beta,   beta' = B^(N)(P),   lambda' = M^(N)(P)

by fixed-point iteration anchored at t = +infinity: a contraction map in a
polynomially weighted norm for hyperbolic references, and a linearized
scheme with t^{-2}-potential Green operators for parabolic and mixed ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import ContractionError, HorizonError, InvalidConfigurationError
from .fields import ModulationState
from .nbody import NBodyPath
from .profiles import (Params, coefficient_b2, coefficient_b3, coefficient_m2,
                       coefficient_m3)

__all__ = [
    "CoefficientFunctions",
    "CorrectedTrajectory",
    "picard_hyperbolic",
    "picard_parabolic",
    "build_tilde_trajectory",
    "green_operator",
    "gamma_integrate",
    "assemble_A",
    "local_modulation_flow",
]


@dataclass(frozen=True)
class CoefficientFunctions:
    """Truncated parameter-velocity sums B^(N), M^(N) as closures over P.

    b^(1) = m^(1) = 0; b^(2) is the gravitational force; the third-order
    constants need the two radial integrals (U_A, Q) and (Lam Lam Q, Q).
    """

    order: int
    m0: float
    i_a: float = 0.0
    i_ll: float = 0.0

    def b_n(self, P: Params, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros((P.m, 3))
        if n == 2:
            return coefficient_b2(P, self.m0)
        if n == 3:
            return coefficient_b3(P, self.m0)
        raise ValueError("coefficients available for n <= 3 only")

    def m_n(self, P: Params, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros(P.m)
        if n == 2:
            return coefficient_m2(P, self.m0)
        if n == 3:
            return coefficient_m3(P, self.m0, self.i_a, self.i_ll)
        raise ValueError("coefficients available for n <= 3 only")

    def B(self, P: Params) -> np.ndarray:
        out = np.zeros((P.m, 3))
        for n in range(2, self.order + 1):
            out += self.b_n(P, n)
        return out

    def M(self, P: Params) -> np.ndarray:
        out = np.zeros(P.m)
        for n in range(2, self.order + 1):
            out += self.m_n(P, n)
        return out

    @staticmethod
    def from_ground_state(gs, order: int) -> "CoefficientFunctions":
        from .profiles import ProfileBuilder
        b = ProfileBuilder(gs)
        return CoefficientFunctions(order=order, m0=b.m0, i_a=b.i_a, i_ll=b.i_ll)


@dataclass
class CorrectedTrajectory:
    """Time-sampled corrected parameter path with the reference it tracks."""

    times: np.ndarray
    alphas: np.ndarray   # (T, m, 3)
    betas: np.ndarray
    lams: np.ndarray     # (T, m)
    gammas: np.ndarray   # (T, m)
    reference: NBodyPath
    coeffs: CoefficientFunctions
    norms: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spl = None

    @property
    def m(self) -> int:
        return self.alphas.shape[1]

    def _splines(self):
        if self._spl is None:
            lt = np.log(self.times)
            flat = np.concatenate([
                self.alphas.reshape(len(self.times), -1),
                self.betas.reshape(len(self.times), -1),
                self.lams, self.gammas], axis=1)
            self._spl = CubicSpline(lt, flat, axis=0)
        return self._spl

    def params_at(self, t) -> Params:
        t = float(t)
        row = self._splines()(np.log(t))
        m = self.m
        return Params(alphas=row[:3 * m].reshape(m, 3),
                      betas=row[3 * m:6 * m].reshape(m, 3),
                      lams=row[6 * m:7 * m])

    def modulation_state(self, t) -> ModulationState:
        row = self._splines()(np.log(float(t)))
        m = self.m
        return ModulationState(alphas=row[:3 * m].reshape(m, 3),
                               betas=row[3 * m:6 * m].reshape(m, 3),
                               lams=row[6 * m:7 * m],
                               gammas=row[7 * m:8 * m])

    def deviation(self) -> dict:
        """Per-sample deviations from the reference path."""
        a_inf, b_inf = self.reference.at(self.times)
        lam_inf = np.broadcast_to(self.reference.config.lambdas,
                                  self.lams.shape)
        return {
            "alpha": np.linalg.norm(self.alphas - a_inf, axis=-1),
            "beta": np.linalg.norm(self.betas - b_inf, axis=-1),
            "lam": np.abs(self.lams - lam_inf),
        }

    def ode_residual(self) -> float:
        """Sup norm of the modulation ODE residual by spectral-quality
        differentiation of the stored samples."""
        lt = np.log(self.times)
        dal = CubicSpline(lt, self.alphas, axis=0)(lt, 1) / self.times[:, None, None]
        dbe = CubicSpline(lt, self.betas, axis=0)(lt, 1) / self.times[:, None, None]
        dla = CubicSpline(lt, self.lams, axis=0)(lt, 1) / self.times[:, None]
        res = 0.0
        for i, t in enumerate(self.times[2:-2], start=2):
            P = Params(self.alphas[i], self.betas[i], self.lams[i])
            res = max(res, float(np.max(np.abs(dal[i] - 2 * self.betas[i]))),
                      float(np.max(np.abs(dbe[i] - self.coeffs.B(P)))),
                      float(np.max(np.abs(dla[i] - self.coeffs.M(P)))))
        return res

    def save_csv(self, path):
        m = self.m
        cols = ["t"]
        for j in range(m):
            cols += [f"alpha{j}{c}" for c in "xyz"]
            cols += [f"beta{j}{c}" for c in "xyz"]
            cols += [f"lam{j}", f"gamma{j}"]
        rows = [self.times[:, None]]
        for j in range(m):
            rows += [self.alphas[:, j], self.betas[:, j],
                     self.lams[:, j:j + 1], self.gammas[:, j:j + 1]]
        np.savetxt(path, np.hstack(rows), delimiter=",",
                   header=",".join(cols), comments="")


# -------------------------------------------------------------------------
# quadrature helpers on geometric time grids
# -------------------------------------------------------------------------


def _fit_tail_power(f_last: np.ndarray, t_last: np.ndarray):
    """Per-component decay exponent over the final decade (log-log fit)."""
    mag = np.abs(f_last)
    good = np.all(mag > 0, axis=0)
    p = np.full(f_last.shape[1:], -2.0)
    if np.any(good):
        lt = np.log(t_last)
        for idx in np.argwhere(good):
            y = np.log(mag[(slice(None), *idx)])
            p[tuple(idx)] = np.polyfit(lt, y, 1)[0]
    return p


def _integral_to_infinity(f: np.ndarray, times: np.ndarray) -> np.ndarray:
    """I(t_i) = int_{t_i}^infty f dtau with an analytic power-law tail
    correction beyond the horizon.  f has shape (T, ...)."""
    lt = np.log(times)
    g = f * times.reshape(-1, *([1] * (f.ndim - 1)))
    seg = 0.5 * (g[1:] + g[:-1]) * np.diff(lt).reshape(-1, *([1] * (f.ndim - 1)))
    inner = np.concatenate([np.cumsum(seg[::-1], axis=0)[::-1],
                            np.zeros((1,) + f.shape[1:])], axis=0)
    mask = times >= times[-1] / 10.0
    p = _fit_tail_power(f[mask], times[mask])
    p = np.minimum(p, -1.2)  # guard: require integrable decay for the tail
    tail = -f[-1] * times[-1] / (p + 1.0)
    return inner + tail


def green_operator(a: complex, f: np.ndarray, times: np.ndarray,
                   kappa: float, b: complex | None = None):
    """Particular solution of x'' - (a(a-1)/t^2) x = f on the samples.

    Combines the two primitive branches G_a, G_b (b defaults to 1-a, the
    partner root); the branch with Re <= -kappa integrates from the left
    end, the other from infinity with a power-law tail estimate.  Returns
    (x, x').  For |a-b| below 1e-9 the a-derivative (log t) branch is used.
    """
    decay = np.abs(f) * times ** (2.0 + kappa)
    if decay[-1] > 10.0 * (np.max(decay[: max(3, len(decay) // 10)]) + 1e-300):
        raise HorizonError("forcing does not decay like t^{-2-kappa}; "
                           "tail quadrature would diverge")
    if b is None:
        b = 1.0 - a
    if abs(a - b) > 1e-9:
        xa, da = _green_single(a, f, times, kappa)
        xb, db = _green_single(b, f, times, kappa)
        return (xa - xb) / (a - b), (da - db) / (a - b)
    xa, da = _green_single_deriv(a, f, times, kappa)
    return xa, da


def _green_single(a: complex, f: np.ndarray, times: np.ndarray, kappa: float):
    lt = np.log(times)
    g = times ** (1.0 - a) * f
    gt = g * times
    seg = 0.5 * (gt[1:] + gt[:-1]) * np.diff(lt)
    if np.real(a) <= -kappa:
        integral = np.concatenate([[0.0], np.cumsum(seg)])
    else:
        inner = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        # tail: f ~ f(H) (t/H)^{-2-kappa}
        tail = f[-1] * times[-1] ** (2.0 - a) / (a + kappa)
        integral = -(inner + tail)
    x = times ** a * integral
    dx = (a / times) * x + times * f
    return x, dx


def _green_single_deriv(a: complex, f: np.ndarray, times: np.ndarray,
                        kappa: float):
    """d/da G_a f, the log t branch for coincident roots."""
    lt = np.log(times)
    g = times ** (1.0 - a) * f
    gl = g * np.log(times)
    gt, glt = g * times, gl * times
    seg = 0.5 * (gt[1:] + gt[:-1]) * np.diff(lt)
    segl = 0.5 * (glt[1:] + glt[:-1]) * np.diff(lt)
    if np.real(a) <= -kappa:
        I0 = np.concatenate([[0.0], np.cumsum(seg)])
        I1 = np.concatenate([[0.0], np.cumsum(segl)])
    else:
        I0 = -(np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
               + f[-1] * times[-1] ** (2.0 - a) / (a + kappa))
        hl = np.log(times[-1])
        tail1 = f[-1] * times[-1] ** (2.0 - a) * (hl / (a + kappa)
                                                  + 1.0 / (a + kappa) ** 2)
        I1 = -(np.concatenate([np.cumsum(segl[::-1])[::-1], [0.0]]) + tail1)
    x = times ** a * (np.log(times) * I0 - I1)
    dx = (a / times) * x + times ** a * I0 / times \
        + 0.0 * x  # d/dt of the log factor cancels against the integrand
    dx = (a / times) * x + (times ** a) * I0 / times
    return x, dx


# -------------------------------------------------------------------------
# hyperbolic fixed point
# -------------------------------------------------------------------------


def _weighted_norm_1(d_alpha, d_beta, d_lam, times, eps=0.1):
    t = times[:, None]
    return float(np.max(np.sum(
        t ** (1 - 3 * eps) * np.linalg.norm(d_alpha, axis=-1)
        + t ** (2 - 2 * eps) * np.linalg.norm(d_beta, axis=-1)
        + t ** (1 - eps) * np.abs(d_lam), axis=1)))


def picard_hyperbolic(reference: NBodyPath, coeffs: CoefficientFunctions,
                      T0: float, horizon: float, tol: float = 1e-10,
                      max_iter: int = 60,
                      samples_per_decade: int = 200) -> CorrectedTrajectory:
    """Contraction iteration for hyperbolic references (data at t = inf).

    Raises ContractionError (suggesting a larger T0) when successive
    weighted differences stop halving.
    """
    if reference.kind != "hyperbolic":
        raise InvalidConfigurationError("reference must be hyperbolic")
    if not T0 < horizon:
        raise ValueError("need T0 < horizon")
    n = max(32, int(np.log10(horizon / T0) * samples_per_decade))
    times = np.geomspace(T0, horizon, n)
    a_inf, b_inf = reference.at(times)
    lam_inf = np.broadcast_to(reference.config.lambdas.copy(),
                              a_inf.shape[:2]).copy()
    m = reference.m

    # beta at t = infinity: horizon value plus the force-integral tail
    # (the cumulative part of the integral vanishes at the last sample)
    forces = np.stack([_mbody_force(a_inf[i], reference.config)
                       for i in range(n)])
    beta_lim = b_inf[-1] + _integral_to_infinity(forces, times)[-1]

    alphas = a_inf.copy()
    betas = b_inf.copy()
    lams = lam_inf.copy()
    diffs, ratios = [], []
    for it in range(max_iter):
        B_vals = np.stack([coeffs.B(Params(alphas[i], betas[i], lams[i]))
                           for i in range(n)])
        M_vals = np.stack([coeffs.M(Params(alphas[i], betas[i], lams[i]))
                           for i in range(n)])
        new_beta = beta_lim[None] - _integral_to_infinity(B_vals, times)
        new_lam = reference.config.lambdas[None] - _integral_to_infinity(
            M_vals, times)
        new_alpha = a_inf + _integral_to_infinity(2.0 * (b_inf - new_beta),
                                                  times)
        d = _weighted_norm_1(new_alpha - alphas, new_beta - betas,
                             new_lam - lams, times)
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        alphas, betas, lams = new_alpha, new_beta, new_lam
        if d < tol:
            break
        if len(ratios) >= 3 and min(ratios[-3:]) > 0.9:
            raise ContractionError(
                "fixed-point iterates not contracting; increase T0")
    else:
        raise ContractionError("no convergence within max_iter; increase T0")

    gammas = _gamma_from_samples(times, alphas, betas, lams, coeffs)
    traj = CorrectedTrajectory(times=times, alphas=alphas, betas=betas,
                               lams=lams, gammas=gammas, reference=reference,
                               coeffs=coeffs,
                               norms={"diffs": diffs, "ratios": ratios})
    return traj


def _mbody_force(alpha, config):
    d = alpha[:, None, :] - alpha[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    np.fill_diagonal(dist, np.inf)
    return -np.sum(config.masses[None, :, None] * d / dist[:, :, None] ** 3,
                   axis=1)


# -------------------------------------------------------------------------
# parabolic / mixed scheme
# -------------------------------------------------------------------------


class TildeTrajectory:
    """P-tilde = (alpha_inf, beta_inf, lambda-tilde) with the closed-form
    scale correction lambda_j^inf - sum_k (lam_j^inf)^3 m0/(8 pi lam_k^inf d_jk)."""

    def __init__(self, reference: NBodyPath, lambdas_inf=None):
        if reference.kind not in ("parabolic", "mixed"):
            raise InvalidConfigurationError("reference must be parabolic or mixed")
        self.reference = reference
        self.lam_inf = np.asarray(reference.config.lambdas if lambdas_inf is None
                                  else lambdas_inf, dtype=float)
        self.m0 = reference.config.mass_sq

    def lam_tilde_of_alpha(self, alpha):
        d = alpha[:, None, :] - alpha[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        np.fill_diagonal(dist, np.inf)
        corr = np.sum(self.lam_inf[:, None] ** 3 * self.m0
                      / (8.0 * np.pi * self.lam_inf[None, :] * dist), axis=1)
        return self.lam_inf - corr

    def at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a, b = self.reference.at(t)
        lam = np.stack([self.lam_tilde_of_alpha(a[i]) for i in range(len(t))])
        return a, b, lam


def build_tilde_trajectory(reference: NBodyPath,
                           lambdas_inf=None) -> TildeTrajectory:
    return TildeTrajectory(reference, lambdas_inf)


def assemble_A(coeffs: CoefficientFunctions, P: Params, t: float,
               step: float = 1e-6) -> np.ndarray:
    """t^2 times the alpha-Jacobian of the pair force b^(2) at P (3m x 3m)."""
    m = P.m
    out = np.zeros((3 * m, 3 * m))
    base = coefficient_b2(P, coeffs.m0).ravel()
    for col in range(3 * m):
        alphas = P.alphas.copy().ravel()
        h = step * max(1.0, abs(alphas[col]))
        alphas[col] += h
        Pp = Params(alphas.reshape(m, 3), P.betas, P.lams)
        out[:, col] = (coefficient_b2(Pp, coeffs.m0).ravel() - base) / h
    return t ** 2 * out


def _weighted_norm_2(d_alpha, d_beta, d_lam, times, eps=0.01):
    t = times[:, None]
    return float(np.max(np.sum(
        t ** (1.0 / 3.0 - 3 * eps) * np.linalg.norm(d_alpha, axis=-1)
        + t ** (4.0 / 3.0 - 2 * eps) * np.linalg.norm(d_beta, axis=-1)
        + t ** (1.0 - eps) * np.abs(d_lam), axis=1)))


def picard_parabolic(reference: NBodyPath, coeffs: CoefficientFunctions,
                     T0: float, horizon: float, tol: float = 1e-10,
                     max_iter: int = 60, kappa: float = 0.3,
                     samples_per_decade: int = 200) -> CorrectedTrajectory:
    """Linearized fixed point for parabolic/mixed references.

    The alpha-deviation solves x'' = (2A/t^2) x + F with A frozen from the
    late-time Jacobian of b^(2) along P-tilde; each eigencomponent of the
    remainder is inverted with the Green operators.  Requires order >= 3
    (the error cancellation needs b^(3)).
    """
    if coeffs.order < 3:
        raise InvalidConfigurationError("parabolic correction needs N >= 3")
    tilde = build_tilde_trajectory(reference)
    if not T0 < horizon:
        raise ValueError("need T0 < horizon")
    n = max(32, int(np.log10(horizon / T0) * samples_per_decade))
    times = np.geomspace(T0, horizon, n)
    a_t, b_t, lam_t = tilde.at(times)
    m = reference.m
    m0 = coeffs.m0
    lam_inf = tilde.lam_inf

    t_ref = times[-1]
    P_ref = Params(a_t[-1], b_t[-1], lam_t[-1])
    A = assemble_A(coeffs, P_ref, t_ref)
    twoA = 2.0 * A
    evals, V = np.linalg.eig(twoA)
    if np.linalg.cond(V) > 1e8:
        # near-defective: perturb to a diagonalizable neighbor (general case
        # of the Green-operator lemma)
        rng = np.random.default_rng(0)
        twoA = twoA + 1e-8 * np.linalg.norm(twoA) * np.diag(rng.uniform(
            0.5, 1.0, 3 * m))
        evals, V = np.linalg.eig(twoA)
    Vinv = np.linalg.inv(V)
    roots = []
    for c in evals:
        disc = np.sqrt(1.0 + 4.0 * c + 0j)
        roots.append(((1.0 + disc) / 2.0, (1.0 - disc) / 2.0))

    def tilde_b_corr(i):
        """b~2 + b~3 evaluated at P-tilde, time index i."""
        alpha = a_t[i]
        d = alpha[:, None, :] - alpha[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        np.fill_diagonal(dist, np.inf)
        P_td = Params(alpha, b_t[i], lam_t[i])
        b2 = coefficient_b2(P_td, m0)
        b2_corr = b2 + np.sum(m0 * d / (4 * np.pi * lam_inf[None, :, None]
                                        * dist[:, :, None] ** 3), axis=1) \
            - np.sum(m0 * (lam_t[i] - lam_inf)[None, :, None] * d
                     / (4 * np.pi * (lam_inf ** 2)[None, :, None]
                        * dist[:, :, None] ** 3), axis=1)
        b3 = coefficient_b3(P_td, m0)
        inv_sum = np.sum(1.0 / (lam_inf[None, :] * _dist_of(alpha)), axis=1)
        b3_corr = b3 - (m0 ** 2 / (32 * np.pi ** 2)) * np.sum(
            inv_sum[None, :, None] * lam_inf[None, :, None] * d
            / dist[:, :, None] ** 3, axis=1)
        return b2_corr + b3_corr

    def m_tilde_corr(i):
        P_td = Params(a_t[i], b_t[i], lam_t[i])
        m2 = coefficient_m2(P_td, m0)
        alpha, beta = a_t[i], b_t[i]
        d = alpha[:, None, :] - alpha[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        np.fill_diagonal(dist, np.inf)
        bjk = beta[:, None, :] - beta[None, :, :]
        ab = np.sum(d * bjk, axis=-1)
        exact = np.sum(lam_inf[:, None] ** 3 * m0 * ab
                       / (4 * np.pi * lam_inf[None, :] * dist ** 3), axis=1)
        return m2 - exact

    btilde = np.stack([tilde_b_corr(i) for i in range(n)])
    mtilde = np.stack([m_tilde_corr(i) for i in range(n)])

    x = np.zeros((n, m, 3))
    dx = np.zeros((n, m, 3))
    dlam = np.zeros((n, m))
    diffs, ratios = [], []
    for it in range(max_iter):
        F = np.zeros((n, 3 * m))
        rhs_lam = np.zeros((n, m))
        for i in range(n):
            P_i = Params(a_t[i] + x[i], b_t[i] + dx[i] / 2.0, lam_t[i] + dlam[i])
            P_td = Params(a_t[i], b_t[i], lam_t[i])
            db2 = coefficient_b2(P_i, m0) - coefficient_b2(P_td, m0)
            db3 = coefficient_b3(P_i, m0) - coefficient_b3(P_td, m0)
            F[i] = 2.0 * (db2 + db3 + btilde[i]).ravel() \
                - (twoA @ x[i].ravel()) / times[i] ** 2
            rhs_lam[i] = coefficient_m2(P_i, m0) - coefficient_m2(P_td, m0) \
                + mtilde[i] + coeffs.m_n(P_i, 3)
        Fc = F @ Vinv.T  # eigencomponents
        x_new = np.zeros((n, 3 * m), dtype=complex)
        dx_new = np.zeros((n, 3 * m), dtype=complex)
        for comp in range(3 * m):
            a_r, b_r = roots[comp]
            xi, di = green_operator(a_r, Fc[:, comp], times, kappa, b=b_r)
            x_new[:, comp] = xi
            dx_new[:, comp] = di
        x_new = np.real(x_new @ V.T).reshape(n, m, 3)
        dx_new = np.real(dx_new @ V.T).reshape(n, m, 3)
        dlam_new = -_integral_to_infinity(rhs_lam, times)
        d = _weighted_norm_2(x_new - x, (dx_new - dx) / 2.0, dlam_new - dlam,
                             times)
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        x, dx, dlam = x_new, dx_new, dlam_new
        if d < tol:
            break
        if len(ratios) >= 4 and min(ratios[-3:]) > 0.95:
            raise ContractionError("parabolic iteration not contracting; "
                                   "increase T0")
    else:
        raise ContractionError("no convergence within max_iter")

    alphas = a_t + x
    betas = b_t + dx / 2.0
    lams = lam_t + dlam
    gammas = _gamma_from_samples(times, alphas, betas, lams, coeffs)
    return CorrectedTrajectory(times=times, alphas=alphas, betas=betas,
                               lams=lams, gammas=gammas, reference=reference,
                               coeffs=coeffs,
                               norms={"diffs": diffs, "ratios": ratios,
                                      "lam_tilde_gap": np.abs(lams - lam_t)})


def _dist_of(alpha):
    d = alpha[:, None, :] - alpha[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    np.fill_diagonal(dist, np.inf)
    return dist


# -------------------------------------------------------------------------
# phases
# -------------------------------------------------------------------------


def _gamma_from_samples(times, alphas, betas, lams, coeffs):
    n = len(times)
    rate = np.zeros((n, alphas.shape[1]))
    for i in range(n):
        P = Params(alphas[i], betas[i], lams[i])
        bdot = coeffs.B(P)
        rate[i] = -1.0 / lams[i] ** 2 + np.sum(betas[i] ** 2, axis=-1) \
            + np.sum(bdot * alphas[i], axis=-1)
    lt = np.log(times)
    g = rate * times[:, None]
    seg = 0.5 * (g[1:] + g[:-1]) * np.diff(lt)[:, None]
    return np.concatenate([np.zeros((1, rate.shape[1])),
                           np.cumsum(seg, axis=0)])


def gamma_integrate(traj: CorrectedTrajectory) -> np.ndarray:
    """Quadrature of the phase law gamma' = -1/lam^2 + |beta|^2 + beta'.alpha
    along the trajectory, anchored to zero at the first sample."""
    return _gamma_from_samples(traj.times, traj.alphas, traj.betas, traj.lams,
                               traj.coeffs)


def local_modulation_flow(coeffs: CoefficientFunctions, P0: Params,
                          t0: float, gammas0=None, span: float = 0.2):
    """Locally exact solution of the modulation ODE through P0 at t0.

    Returns a callable t -> ModulationState valid on [t0(1-span), t0(1+span)];
    along it the parameter-slack terms of the ansatz vanish identically.
    """
    m = P0.m
    if gammas0 is None:
        gammas0 = np.zeros(m)

    def rhs(t, y):
        al = y[:3 * m].reshape(m, 3)
        be = y[3 * m:6 * m].reshape(m, 3)
        la = y[6 * m:7 * m]
        P = Params(al, be, la)
        bdot = coeffs.B(P)
        gdot = -1.0 / la ** 2 + np.sum(be ** 2, axis=-1) \
            + np.sum(bdot * al, axis=-1)
        return np.concatenate([2.0 * be.ravel(), bdot.ravel(), coeffs.M(P),
                               gdot])

    y0 = np.concatenate([P0.alphas.ravel(), P0.betas.ravel(), P0.lams,
                         np.asarray(gammas0, dtype=float)])
    lo, hi = t0 * (1.0 - span), t0 * (1.0 + span)
    sol_f = solve_ivp(rhs, (t0, hi), y0, method="DOP853", rtol=1e-12,
                      atol=1e-12, dense_output=True)
    sol_b = solve_ivp(rhs, (t0, lo), y0, method="DOP853", rtol=1e-12,
                      atol=1e-12, dense_output=True)

    def flow(t):
        y = sol_f.sol(t) if t >= t0 else sol_b.sol(t)
        return ModulationState(alphas=y[:3 * m].reshape(m, 3),
                               betas=y[3 * m:6 * m].reshape(m, 3),
                               lams=y[6 * m:7 * m], gammas=y[7 * m:])

    return flow
