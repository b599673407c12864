"""Radial grids and quadrature helpers shared by the radial solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radial nodes, uniform or log-stretched.

    Nodes are kept strictly positive; the coordinate origin is handled by
    the operators (ghost node with the parity of the harmonic degree).
    """

    r: np.ndarray
    kind: str = "log"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if r.ndim != 1 or r.size < 256:
            raise ValueError("radial grid needs at least 256 points")
        if r[0] < 0:
            raise ValueError("radial nodes must satisfy r[0] >= 0")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radial nodes must be strictly increasing")

    @property
    def n_points(self) -> int:
        return self.r.size

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @staticmethod
    def make(kind: str = "log", n_points: int = 2048, r_max: float = 20.0,
             r_core: float = 4e-4) -> "RadialGrid":
        """Build a uniform or exponentially stretched grid.

        The "log" stretch r(x) = r_max (e^{s x} - 1)/(e^s - 1) keeps the
        spacing ratio smooth all the way to the origin (no ghost-gap blowup
        in the difference stencils); s is chosen so the first node lands
        near r_core.
        """
        if kind == "uniform":
            h = r_max / n_points
            r = h * np.arange(1, n_points + 1)
        elif kind == "log":
            x = np.arange(1, n_points + 1) / n_points

            def first_node(s):
                return r_max * np.expm1(s / n_points) / np.expm1(s)

            lo, hi = 0.5, 14.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if first_node(mid) > r_core:
                    lo = mid
                else:
                    hi = mid
            s = 0.5 * (lo + hi)
            r = r_max * np.expm1(s * x) / np.expm1(s)
        else:
            raise ValueError(f"unknown grid kind {kind!r}")
        return RadialGrid(r=r, kind=kind)


def trapezoid_weights(r: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for arbitrary nodes."""
    w = np.zeros_like(r)
    dr = np.diff(r)
    w[:-1] += 0.5 * dr
    w[1:] += 0.5 * dr
    return w


def integrate_radial(f: np.ndarray, r: np.ndarray, include_origin: bool = True) -> float:
    """4*pi * int f(r) r^2 dr via spline quadrature.

    With ``include_origin`` the integrand r^2 f is extended by 0 at r=0,
    which is exact for f bounded at the origin.
    """
    g = r * r * np.asarray(f)
    if include_origin and r[0] > 0:
        rr = np.concatenate(([0.0], r))
        gg = np.concatenate(([0.0], g))
    else:
        rr, gg = r, g
    return 4.0 * np.pi * float(CubicSpline(rr, gg).integrate(rr[0], rr[-1]))


def integrate_samples(g: np.ndarray, x: np.ndarray) -> float:
    """int g dx on the sample nodes via spline quadrature."""
    return float(CubicSpline(x, np.asarray(g)).integrate(x[0], x[-1]))


def cumulative_inner(g: np.ndarray, r: np.ndarray) -> np.ndarray:
    """I(r_i) = int_0^{r_i} g ds with g extended by 0 at s=0 (spline accurate)."""
    if r[0] > 0:
        rr = np.concatenate(([0.0], r))
        gg = np.concatenate(([0.0], np.asarray(g)))
        anti = CubicSpline(rr, gg).antiderivative()
        return anti(r) - anti(0.0)
    anti = CubicSpline(r, np.asarray(g)).antiderivative()
    return anti(r) - anti(r[0])


def cumulative_outer(g: np.ndarray, r: np.ndarray) -> np.ndarray:
    """I(r_i) = int_{r_i}^{r_max} g ds (spline accurate)."""
    anti = CubicSpline(r, np.asarray(g)).antiderivative()
    return anti(r[-1]) - anti(r)


def second_derivative_matrix(r: np.ndarray, inner_value_zero: bool = True,
                             robin_kappa: float | None = None):
    """Tridiagonal d^2/dr^2 on possibly nonuniform nodes, as (sub, diag, sup).

    A ghost node at r=0 carries the value 0 (the U = r*f representation
    vanishes there for every harmonic degree).  The outer ghost is either
    Dirichlet-zero or a Robin decay condition U_ghost = U_n * exp(-kappa*h).
    """
    n = r.size
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    hm = np.empty(n)
    hp = np.empty(n)
    hm[0] = r[0]  # ghost at r=0
    hm[1:] = np.diff(r)
    hp[:-1] = np.diff(r)
    hp[-1] = r[-1] - r[-2]
    denom = hp * hm * (hp + hm)
    diag[:] = -2.0 * (hp + hm) / denom
    sub[1:] = (2.0 * hp / denom)[1:]
    sup[:-1] = (2.0 * hm / denom)[:-1]
    if not inner_value_zero:
        raise ValueError("only the U(0)=0 ghost is supported")
    if robin_kappa is not None:
        # fold U_ghost = U_n exp(-kappa h) into the last diagonal entry
        diag[-1] += (2.0 * hm / denom)[-1] * np.exp(-robin_kappa * hp[-1])
    return sub, diag, sup


def tridiag_apply(sub, diag, sup, x):
    y = diag * x
    y[1:] += sub[1:] * x[:-1]
    y[:-1] += sup[:-1] * x[1:]
    return y


def tridiag_dense(sub, diag, sup):
    n = diag.size
    a = np.zeros((n, n))
    idx = np.arange(n)
    a[idx, idx] = diag
    a[idx[1:], idx[:-1]] = sub[1:]
    a[idx[:-1], idx[1:]] = sup[:-1]
    return a
