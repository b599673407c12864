"""Low-degree solid-harmonic radial profiles and the Coulomb Taylor terms.

A profile is stored in Cartesian form

    f(y) = c0(r) + sum_i c1[i](r) n_i + sum_ab c2[a,b](r) n_a n_b
           + sum_abc c3[a,b,c](r) n_a n_b n_c,      n = y / r,

with c2 symmetric traceless and c3 fully symmetric.  The radial factors
carry the r^ell growth, so every term extends continuously to the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import UnsupportedOrderError
from .radial import RadialGrid

__all__ = ["HarmonicProfile", "multipole_F"]


def multipole_F(n: int, alpha, zeta) -> float:
    """Taylor term F_n of 1/|alpha - zeta|: homogeneous of degree -n in
    alpha and n-1 in zeta (Legendre kernel |zeta|^{n-1} P_{n-1}/|alpha|^n)."""
    if not 1 <= n <= 4:
        raise UnsupportedOrderError(f"multipole order {n} outside 1..4")
    alpha = np.asarray(alpha, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    a = np.sqrt(np.sum(alpha * alpha, axis=-1))
    if np.any(a == 0):
        raise ValueError("expansion point alpha must be nonzero")
    if n == 1:
        return 1.0 / a
    az = np.sum(alpha * zeta, axis=-1)
    if n == 2:
        return az / a ** 3
    z2 = np.sum(zeta * zeta, axis=-1)
    if n == 3:
        return (3.0 * az ** 2 - a ** 2 * z2) / (2.0 * a ** 5)
    return (5.0 * az ** 3 - 3.0 * az * a ** 2 * z2) / (2.0 * a ** 7)


def _traceless(mat: np.ndarray) -> np.ndarray:
    tr = np.trace(mat, axis1=0, axis2=1)
    out = 0.5 * (mat + np.swapaxes(mat, 0, 1))
    for i in range(3):
        out[i, i] -= tr / 3.0
    return out


@dataclass
class HarmonicProfile:
    """Radial x angular profile with harmonic degree at most 2 (3 for the
    read-only cubic slot used by the fourth Coulomb Taylor term)."""

    grid: RadialGrid
    c0: np.ndarray = None          # (n,)
    c1: np.ndarray = None          # (3, n)
    c2: np.ndarray = None          # (3, 3, n), symmetric traceless
    c3: np.ndarray = None          # (3, 3, 3, n), symmetric (evaluation only)

    def __post_init__(self):
        n = self.grid.n_points
        if self.c0 is None:
            self.c0 = np.zeros(n, dtype=complex)
        self.c0 = np.asarray(self.c0, dtype=complex)
        if self.c1 is not None:
            self.c1 = np.asarray(self.c1, dtype=complex)
        if self.c2 is not None:
            self.c2 = np.asarray(self.c2, dtype=complex)
        if self.c3 is not None:
            self.c3 = np.asarray(self.c3, dtype=complex)
        self._splines = {}

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "HarmonicProfile") -> "HarmonicProfile":
        def comb(a, b):
            if a is None:
                return None if b is None else b.copy()
            if b is None:
                return a.copy()
            return a + b
        return HarmonicProfile(self.grid, comb(self.c0, other.c0),
                               comb(self.c1, other.c1), comb(self.c2, other.c2),
                               comb(self.c3, other.c3))

    def __mul__(self, s) -> "HarmonicProfile":
        return HarmonicProfile(
            self.grid, self.c0 * s,
            None if self.c1 is None else self.c1 * s,
            None if self.c2 is None else self.c2 * s,
            None if self.c3 is None else self.c3 * s)

    __rmul__ = __mul__

    @property
    def ell_max(self) -> int:
        if self.c3 is not None:
            return 3
        if self.c2 is not None:
            return 2
        if self.c1 is not None:
            return 1
        return 0

    def real(self) -> "HarmonicProfile":
        return HarmonicProfile(
            self.grid, self.c0.real.astype(complex),
            None if self.c1 is None else self.c1.real.astype(complex),
            None if self.c2 is None else self.c2.real.astype(complex),
            None if self.c3 is None else self.c3.real.astype(complex))

    def imag(self) -> "HarmonicProfile":
        return HarmonicProfile(
            self.grid, self.c0.imag.astype(complex),
            None if self.c1 is None else self.c1.imag.astype(complex),
            None if self.c2 is None else self.c2.imag.astype(complex),
            None if self.c3 is None else self.c3.imag.astype(complex))

    # -- (ell, m) view -------------------------------------------------------

    def components(self):
        """List of (ell, m, radial array) triples in orthonormal real
        spherical harmonics (cubic slot is reported in Cartesian form)."""
        out = [(0, 0, np.sqrt(4 * np.pi) * self.c0)]
        if self.c1 is not None:
            k = np.sqrt(4 * np.pi / 3.0)
            out += [(1, -1, k * self.c1[1]), (1, 0, k * self.c1[2]),
                    (1, 1, k * self.c1[0])]
        if self.c2 is not None:
            A = self.c2
            p, q, s = A[0, 1], A[1, 2], A[0, 2]
            u = 0.5 * (A[0, 0] - A[1, 1])
            w = A[2, 2]
            k1 = 2.0 * np.sqrt(np.pi / 15.0)   # n_x n_y = k1 * Y_{2,-2} etc.
            k0 = (4.0 / 3.0) * np.sqrt(np.pi / 5.0)  # (3 n_z^2 - 1)/2 = (1/k0')...
            out += [(2, -2, 2 * p * k1), (2, -1, 2 * q * k1), (2, 1, 2 * s * k1),
                    (2, 2, 2 * u * k1), (2, 0, w * 3.0 * k0 / 2.0)]
        return out

    # -- evaluation ----------------------------------------------------------

    def _spline(self, key, arr):
        if key not in self._splines:
            self._splines[key] = CubicSpline(self.grid.r, arr)
        return self._splines[key]

    def _taper(self, r):
        r_max = self.grid.r_max
        s = 0.5 * (1.0 - np.tanh((r - (r_max - 1.5)) / 0.4))
        return np.where(r <= r_max, s, 0.0)

    def _radial(self, key, arr, r, derivative=False):
        spl = self._spline(key, arr)
        rc = np.minimum(r, self.grid.r_max)
        return spl(rc, 1) if derivative else spl(rc)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Profile values at points y (shape (..., 3), soliton frame)."""
        y = np.asarray(y, dtype=float)
        r = np.sqrt(np.sum(y * y, axis=-1))
        rs = np.maximum(r, 1e-12)
        n = y / rs[..., None]
        tap = self._taper(r)
        out = self._radial("c0", self.c0, r).astype(complex)
        if self.c1 is not None:
            for i in range(3):
                out += self._radial(("c1", i), self.c1[i], r) * n[..., i]
        if self.c2 is not None:
            for a in range(3):
                for b in range(a, 3):
                    fac = 1.0 if a == b else 2.0
                    out += fac * self._radial(("c2", a, b), self.c2[a, b], r) \
                        * n[..., a] * n[..., b]
        if self.c3 is not None:
            for a in range(3):
                for b in range(a, 3):
                    for c in range(b, 3):
                        if a == b == c:
                            mult = 1
                        elif a == b or b == c or a == c:
                            mult = 3
                        else:
                            mult = 6
                        out += mult * self._radial(("c3", a, b, c),
                                                   self.c3[a, b, c], r) \
                            * n[..., a] * n[..., b] * n[..., c]
        return out * tap

    def evaluate_lambda(self, y: np.ndarray) -> np.ndarray:
        """(2 + y . grad) applied to the profile: (2 f + r f') per component."""
        y = np.asarray(y, dtype=float)
        r = np.sqrt(np.sum(y * y, axis=-1))
        rs = np.maximum(r, 1e-12)
        n = y / rs[..., None]
        tap = self._taper(r)
        rc = np.minimum(r, self.grid.r_max)

        def lam(key, arr):
            return 2.0 * self._radial(key, arr, r) \
                + rc * self._radial(key, arr, r, derivative=True)

        out = lam("c0", self.c0).astype(complex)
        if self.c1 is not None:
            for i in range(3):
                out += lam(("c1", i), self.c1[i]) * n[..., i]
        if self.c2 is not None:
            for a in range(3):
                for b in range(a, 3):
                    fac = 1.0 if a == b else 2.0
                    out += fac * lam(("c2", a, b), self.c2[a, b]) \
                        * n[..., a] * n[..., b]
        if self.c3 is not None:
            raise UnsupportedOrderError("scaling action not needed at ell=3")
        return out * tap

    def evaluate_gradient(self, y: np.ndarray) -> np.ndarray:
        """Cartesian gradient, shape (..., 3)."""
        y = np.asarray(y, dtype=float)
        r = np.sqrt(np.sum(y * y, axis=-1))
        rs = np.maximum(r, 1e-12)
        n = y / rs[..., None]
        tap = self._taper(r)[..., None]
        out = np.zeros(y.shape, dtype=complex)

        d0 = self._radial("c0", self.c0, r, derivative=True)
        out += d0[..., None] * n
        if self.c1 is not None:
            vals = np.stack([self._radial(("c1", i), self.c1[i], r)
                             for i in range(3)], axis=-1)
            ders = np.stack([self._radial(("c1", i), self.c1[i], r, True)
                             for i in range(3)], axis=-1)
            vn = np.sum(vals * n, axis=-1)
            dn = np.sum(ders * n, axis=-1)
            out += dn[..., None] * n + (vals - vn[..., None] * n) / rs[..., None]
        if self.c2 is not None:
            c2v = np.empty(y.shape[:-1] + (3, 3), dtype=complex)
            c2d = np.empty_like(c2v)
            for a in range(3):
                for b in range(3):
                    key = ("c2", min(a, b), max(a, b))
                    c2v[..., a, b] = self._radial(key, self.c2[min(a, b), max(a, b)], r)
                    c2d[..., a, b] = self._radial(key, self.c2[min(a, b), max(a, b)],
                                                  r, True)
            An = np.einsum("...ab,...b->...a", c2v, n)
            nAn = np.sum(An * n, axis=-1)
            dAn = np.einsum("...ab,...a,...b->...", c2d, n, n)
            out += dAn[..., None] * n + 2.0 * (An - nAn[..., None] * n) / rs[..., None]
        if self.c3 is not None:
            raise UnsupportedOrderError("gradient not needed at ell=3")
        return out * tap
