"""Gravitational m-body system with the half-velocity kinematics.

The system integrated here is

    d(alpha_j)/dt = 2 beta_j,
    d(beta_j)/dt  = - sum_{k != j} mu_k (alpha_j - alpha_k)/|alpha_j - alpha_k|^3,

with mu_k = mass_sq / (4 pi lambda_k).  Because alpha'' = 2 beta', the pair
dynamics reduces to Kepler motion with gravitational parameter
2(mu_j + mu_k).  The conserved energy (derived by pairing the kinetic and
potential time derivatives under the mu-weighting; see ``energy``) is

    E = sum_j mu_j |beta_j|^2 - sum_{j<k} mu_j mu_k / |alpha_jk|,

and the weighted momentum sum_j mu_j beta_j is conserved by antisymmetry
of the pair forces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import CollisionError, InvalidConfigurationError, RangeError

__all__ = [
    "BodyConfig",
    "NBodyPath",
    "rhs",
    "integrate",
    "make_asymptotic_initial_data",
    "fit_asymptotic_rates",
]


@dataclass(frozen=True)
class BodyConfig:
    """Initial m-body data; masses are tied to the ground-state norm."""

    lambdas: np.ndarray
    alpha0: np.ndarray  # (m, 3)
    beta0: np.ndarray   # (m, 3)
    mass_sq: float
    kind: str = "generic"          # hyperbolic | parabolic | mixed | generic
    cluster_map: tuple = ()        # tuple of index tuples (mixed case)

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        a0 = np.asarray(self.alpha0, dtype=float)
        b0 = np.asarray(self.beta0, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "alpha0", a0)
        object.__setattr__(self, "beta0", b0)
        m = lam.size
        if a0.shape != (m, 3) or b0.shape != (m, 3):
            raise InvalidConfigurationError("alpha0/beta0 must have shape (m, 3)")
        if np.any(lam <= 0):
            raise InvalidConfigurationError("lambdas must be positive")
        if m >= 2 and _min_separation(a0) == 0.0:
            raise InvalidConfigurationError("initial positions must be distinct")

    @property
    def m(self) -> int:
        return self.lambdas.size

    @property
    def masses(self) -> np.ndarray:
        return self.mass_sq / (4.0 * np.pi * self.lambdas)


def _min_separation(alpha: np.ndarray) -> float:
    m = alpha.shape[0]
    if m < 2:
        return np.inf
    d = alpha[:, None, :] - alpha[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    return float(np.min(dist[~np.eye(m, dtype=bool)]))


def _pair_forces(alpha: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """beta-dot for every body: -sum_k mu_k alpha_jk / |alpha_jk|^3."""
    m = alpha.shape[0]
    if m == 1:
        return np.zeros_like(alpha)
    d = alpha[:, None, :] - alpha[None, :, :]
    dist = np.sqrt(np.sum(d * d, axis=-1))
    np.fill_diagonal(dist, np.inf)
    return -np.sum(masses[None, :, None] * d / dist[:, :, None] ** 3, axis=1)


def rhs(state: np.ndarray, config: BodyConfig) -> np.ndarray:
    """Stacked derivative (2 beta_j, force_j) of the flat state (alpha, beta)."""
    m = config.m
    alpha = state[: 3 * m].reshape(m, 3)
    beta = state[3 * m:].reshape(m, 3)
    if m >= 2 and _min_separation(alpha) <= 0.0:
        raise CollisionError("coincident bodies in rhs evaluation")
    dbeta = _pair_forces(alpha, config.masses)
    return np.concatenate([2.0 * beta.ravel(), dbeta.ravel()])


@dataclass
class NBodyPath:
    """Sampled m-body trajectory with dense evaluation."""

    times: np.ndarray
    alpha: np.ndarray  # (T, m, 3)
    beta: np.ndarray   # (T, m, 3)
    kind: str
    config: BodyConfig
    cluster_map: tuple = ()
    _dense: object = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.config.m

    def at(self, t):
        """(alpha, beta) at arbitrary times within the integrated span."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self._dense is not None:
            y = self._dense(t)
        else:
            y = np.vstack([
                np.interp(t, self.times, self.alpha.reshape(len(self.times), -1)[:, i])
                for i in range(3 * self.m * 2)
            ])
        m = self.m
        a = y[: 3 * m].T.reshape(len(t), m, 3)
        b = y[3 * m:].T.reshape(len(t), m, 3)
        return a, b

    def separations(self, t=None):
        """Pairwise |alpha_jk| matrix time series."""
        if t is None:
            a = self.alpha
        else:
            a, _ = self.at(t)
        d = a[:, :, None, :] - a[:, None, :, :]
        return np.sqrt(np.sum(d * d, axis=-1))

    def energy(self, t=None) -> np.ndarray:
        if t is None:
            a, b = self.alpha, self.beta
        else:
            a, b = self.at(t)
        mu = self.config.masses
        kin = np.sum(mu[None, :] * np.sum(b * b, axis=-1), axis=-1)
        pot = np.zeros(a.shape[0])
        m = self.m
        for j in range(m):
            for k in range(j + 1, m):
                dist = np.linalg.norm(a[:, j] - a[:, k], axis=-1)
                pot -= mu[j] * mu[k] / dist
        return kin + pot

    def weighted_momentum(self, t=None) -> np.ndarray:
        if t is None:
            b = self.beta
        else:
            _, b = self.at(t)
        mu = self.config.masses
        return np.sum(mu[None, :, None] * b, axis=1)

    def save_csv(self, path):
        cols = ["t"]
        for j in range(self.m):
            cols += [f"alpha{j}{c}" for c in "xyz"] + [f"beta{j}{c}" for c in "xyz"]
        rows = np.hstack([
            self.times[:, None],
            np.concatenate([
                np.concatenate([self.alpha[:, j], self.beta[:, j]], axis=1)
                for j in range(self.m)
            ], axis=1),
        ])
        np.savetxt(path, rows, delimiter=",", header=",".join(cols), comments="")


def integrate(config: BodyConfig, t0: float, t1: float, tol: float = 1e-12,
              n_store: int = 800) -> NBodyPath:
    """Adaptive DOP853 integration with a collision guard.

    The collision threshold is 1e-6 times the initial minimal separation.
    """
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    m = config.m
    a0 = _min_separation(config.alpha0)
    if m >= 2 and a0 <= 0:
        raise CollisionError("initial collision", time=t0)
    threshold = 1e-6 * (a0 if np.isfinite(a0) else 1.0)

    def f(t, y):
        alpha = y[: 3 * m].reshape(m, 3)
        beta = y[3 * m:].reshape(m, 3)
        return np.concatenate([2.0 * beta.ravel(),
                               _pair_forces(alpha, config.masses).ravel()])

    def collision(t, y):
        alpha = y[: 3 * m].reshape(m, 3)
        return _min_separation(alpha) - threshold

    collision.terminal = True
    collision.direction = -1

    y0 = np.concatenate([config.alpha0.ravel(), config.beta0.ravel()])
    events = (collision,) if m >= 2 else ()
    sol = solve_ivp(f, (t0, t1), y0, method="DOP853", rtol=tol,
                    atol=tol * max(1.0, float(np.max(np.abs(y0)))),
                    dense_output=True, events=events)
    if events and sol.t_events[0].size:
        raise CollisionError("bodies collided during integration",
                             time=float(sol.t_events[0][0]))
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")

    if t0 > 0 and t1 / t0 >= 10.0:
        times = np.geomspace(t0, t1, n_store)
    else:
        times = np.linspace(t0, t1, n_store)
    y = sol.sol(times)
    alpha = y[: 3 * m].T.reshape(len(times), m, 3)
    beta = y[3 * m:].T.reshape(len(times), m, 3)
    return NBodyPath(times=times, alpha=alpha, beta=beta, kind=config.kind,
                     config=config, cluster_map=config.cluster_map,
                     _dense=sol.sol)


# -------------------------------------------------------------------------
# asymptotic data generators
# -------------------------------------------------------------------------


def _central_config_rate(b: np.ndarray, masses: np.ndarray) -> float:
    """kappa > 0 with sum_k mu_k b_jk/|b_jk|^3 = kappa b_j for all j.

    Raises when b is not a central configuration of the given masses.
    The t^{2/3} prefactor of the exact self-similar solution is (9 kappa)^{1/3}.
    """
    m = b.shape[0]
    if m < 2:
        raise InvalidConfigurationError("need at least two bodies in a cluster")
    g = -_pair_forces(b, masses)  # sum_k mu_k b_jk/|b_jk|^3
    num = float(np.sum(g * b))
    den = float(np.sum(b * b))
    if den == 0:
        raise InvalidConfigurationError("degenerate shape configuration")
    kappa = num / den
    if kappa <= 0 or np.max(np.abs(g - kappa * b)) > 1e-9 * np.max(np.abs(g)):
        raise InvalidConfigurationError(
            "shape vectors are not a central configuration for these masses")
    return kappa


def make_asymptotic_initial_data(kind: str, targets: np.ndarray,
                                 lambdas: np.ndarray, t_start: float,
                                 mass_sq: float,
                                 b_targets: np.ndarray | None = None) -> BodyConfig:
    """Initial data at t_start matching the leading asymptotic form.

    hyperbolic: alpha_j = a_j t           (targets = a, pairwise distinct)
    parabolic:  alpha_j = c b_j t^{2/3}   (targets = b, central configuration)
    mixed:      alpha_j = a_J t + c_J b_j t^{2/3}  (targets = a, b_targets = b)

    The o(t) remainders are dropped; the trajectory fixed-point schemes are
    built to absorb exactly such discrepancies.
    """
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    targets = np.asarray(targets, dtype=float)
    m = lam.size
    mu = mass_sq / (4.0 * np.pi * lam)
    if targets.shape != (m, 3):
        raise InvalidConfigurationError("targets must have shape (m, 3)")
    if t_start <= 0:
        raise InvalidConfigurationError("t_start must be positive")

    if kind == "hyperbolic":
        if _min_separation(targets) == 0.0:
            raise InvalidConfigurationError("hyperbolic velocity targets must be "
                                            "pairwise distinct")
        alpha = targets * t_start
        beta = targets / 2.0
        return BodyConfig(lambdas=lam, alpha0=alpha, beta0=beta,
                          mass_sq=mass_sq, kind="hyperbolic")

    if kind == "parabolic":
        if _min_separation(targets) == 0.0:
            raise InvalidConfigurationError("shape vectors must be pairwise distinct")
        kappa = _central_config_rate(targets, mu)
        c = (9.0 * kappa) ** (1.0 / 3.0)
        alpha = c * targets * t_start ** (2.0 / 3.0)
        beta = (c / 3.0) * targets * t_start ** (-1.0 / 3.0)
        return BodyConfig(lambdas=lam, alpha0=alpha, beta0=beta,
                          mass_sq=mass_sq, kind="parabolic")

    if kind == "mixed":
        if b_targets is None:
            raise InvalidConfigurationError("mixed data needs b_targets")
        b = np.asarray(b_targets, dtype=float)
        if b.shape != (m, 3):
            raise InvalidConfigurationError("b_targets must have shape (m, 3)")
        # cluster = equivalence classes of equal velocity targets
        clusters: list[list[int]] = []
        for j in range(m):
            for cl in clusters:
                if np.allclose(targets[j], targets[cl[0]], atol=1e-12, rtol=0):
                    cl.append(j)
                    break
            else:
                clusters.append([j])
        if len(clusters) < 2:
            raise InvalidConfigurationError("mixed data needs at least two clusters")
        alpha = np.zeros((m, 3))
        beta = np.zeros((m, 3))
        for cl in clusters:
            idx = np.array(cl)
            if len(cl) == 1:
                cj = 0.0
            else:
                if _min_separation(b[idx]) == 0.0:
                    raise InvalidConfigurationError(
                        "intra-cluster shape vectors must be pairwise distinct")
                kappa = _central_config_rate(b[idx], mu[idx])
                cj = (9.0 * kappa) ** (1.0 / 3.0)
            alpha[idx] = targets[idx] * t_start + cj * b[idx] * t_start ** (2.0 / 3.0)
            beta[idx] = targets[idx] / 2.0 + (cj / 3.0) * b[idx] * t_start ** (-1.0 / 3.0)
        cluster_map = tuple(tuple(cl) for cl in clusters)
        return BodyConfig(lambdas=lam, alpha0=alpha, beta0=beta,
                          mass_sq=mass_sq, kind="mixed", cluster_map=cluster_map)

    raise InvalidConfigurationError(f"unknown asymptotic class {kind!r}")


# -------------------------------------------------------------------------
# rate fits
# -------------------------------------------------------------------------


@dataclass
class RateFit:
    slopes: dict          # (j, k) -> log-log slope of |alpha_jk| vs t
    prefactors: dict      # (j, k) -> fitted prefactor
    kind: str
    cluster_map: tuple

    def to_json(self, path=None):
        payload = {
            "kind": self.kind,
            "clusters": [list(c) for c in self.cluster_map],
            "pairs": [
                {"j": j, "k": k, "slope": self.slopes[(j, k)],
                 "prefactor": self.prefactors[(j, k)]}
                for (j, k) in sorted(self.slopes)
            ],
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def fit_asymptotic_rates(path: NBodyPath, window_decades: float = 2.0) -> RateFit:
    """Least-squares slopes of log |alpha_jk| vs log t and classification.

    Slopes near 1 mark hyperbolic pairs, near 2/3 parabolic pairs; a split
    pattern yields the mixed class with clusters = connected components of
    the parabolic-pair relation.
    """
    t = path.times
    seps = path.separations()
    pos = t > 0
    t, seps = t[pos], seps[pos]
    if t.size < 8 or t[-1] / t[0] < 100.0:
        raise RangeError("rate fits need at least two decades of time span")
    mask = t >= t[-1] / 10.0 ** window_decades
    tt = np.log(t[mask])
    seps = seps[mask]
    m = path.m
    slopes, prefs = {}, {}
    parabolic_pairs = []
    for j in range(m):
        for k in range(j + 1, m):
            y = np.log(seps[:, j, k])
            slope, intercept = np.polyfit(tt, y, 1)
            slopes[(j, k)] = float(slope)
            prefs[(j, k)] = float(np.exp(intercept))
            if abs(slope - 2.0 / 3.0) < abs(slope - 1.0):
                parabolic_pairs.append((j, k))
    if not slopes:
        raise RangeError("need at least two bodies for rate fits")
    all_parabolic = len(parabolic_pairs) == len(slopes)
    if all_parabolic:
        kind = "parabolic"
        clusters = (tuple(range(m)),)
    elif not parabolic_pairs:
        kind = "hyperbolic"
        clusters = tuple((j,) for j in range(m))
    else:
        kind = "mixed"
        parent = list(range(m))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for (j, k) in parabolic_pairs:
            parent[find(j)] = find(k)
        groups: dict[int, list[int]] = {}
        for j in range(m):
            groups.setdefault(find(j), []).append(j)
        clusters = tuple(tuple(g) for g in groups.values())
    return RateFit(slopes=slopes, prefactors=prefs, kind=kind,
                   cluster_map=clusters)
