"""Radial discretizations of the linearized operators around the ground state.

L+ f = -Lap f + f + phi_{Q^2} f + 2 phi_{Q f} Q       (real part channel)
L- f = -Lap f + f + phi_{Q^2} f                        (imaginary channel)

Work happens in the U = r f representation where the radial Laplacian is a
plain second derivative and every harmonic degree shares the same stencil.
``apply`` and the dense ``solve`` matrices use the same trapezoid-kernel
quadrature, so solve/apply round trips are exact to linear-algebra accuracy.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import OrthogonalityError, UnsupportedOrderError
from .radial import (RadialGrid, second_derivative_matrix, trapezoid_weights,
                     tridiag_apply, tridiag_dense)

__all__ = ["LinearizedOperators"]


class LinearizedOperators:
    def __init__(self, gs, grid: RadialGrid | None = None, ell_max: int = 2):
        self.gs = gs
        self.grid = gs.grid if grid is None else grid
        self.ell_max = ell_max
        r = self.grid.r
        self.r = r
        if grid is None or grid is gs.grid:
            self.q = gs.q.copy()
            self.dq = gs.dq.copy()
            self.phi = gs.phi.copy()
        else:
            self.q = gs.q_at(r)
            self.dq = gs.dq_at(r)
            self.phi = gs.phi_at(r)
        self.w = trapezoid_weights(r)
        kappa = np.sqrt(max(1.0 + self.phi[-1], 0.25))
        self._d2 = second_derivative_matrix(r, robin_kappa=kappa)
        # one-sided cubic-exact U'' weights for the outer node: application of
        # the operator must not assume a decay closure the operand may violate
        x = r[-4:] - r[-1]
        V = np.vander(x, 4, increasing=True).T
        rhs = np.array([0.0, 0.0, 2.0, 0.0])
        self._edge_weights = np.linalg.solve(V, rhs)
        self._lu = {}
        self._kernels = {
            ("plus", 1): r * self.dq,   # grad Q spans ker L+
            ("minus", 0): r * self.q,   # Q spans ker L-
        }

    # -- quadrature helpers --------------------------------------------------

    def inner(self, f, g) -> complex:
        """4 pi int f conj(g) r^2 dr with the operator-consistent weights."""
        return 4.0 * np.pi * np.sum(self.w * self.r ** 2 * f * np.conj(g))

    def potential(self, rho: np.ndarray, ell: int) -> np.ndarray:
        """Trapezoid-kernel Delta^{-1} at degree ell (consistent with the
        dense matrices; see groundstate.newtonian_potential_radial for the
        spline-accurate variant)."""
        if ell > 4:
            raise UnsupportedOrderError(f"harmonic degree {ell} > 4")
        r, w = self.r, self.w
        g_in = w * r ** (ell + 2) * rho
        inner = np.cumsum(g_in)
        inner += rho[0] * r[0] ** (ell + 3) / (ell + 3)  # [0, r_0] stub
        g_out = w * r ** (1 - ell) * rho
        outer = np.cumsum(g_out[::-1])[::-1] - g_out
        return -(inner / r ** (ell + 1) + r ** ell * outer) / (2 * ell + 1)

    def _potential_matrix(self, ell: int) -> np.ndarray:
        r, w = self.r, self.w
        rc = r[:, None]
        sc = r[None, :]
        lo = np.minimum(rc, sc)
        hi = np.maximum(rc, sc)
        G = -(w[None, :] * sc ** 2) * lo ** ell / hi ** (ell + 1) / (2 * ell + 1)
        G[:, 0] += -(r[0] ** (ell + 3) / (ell + 3)) / r ** (ell + 1) / (2 * ell + 1)
        return G

    # -- operator application -------------------------------------------------

    def apply(self, f: np.ndarray, ell: int, which: str = "plus") -> np.ndarray:
        """Matrix-free O(n) application of L+/L- at harmonic degree ell."""
        r = self.r
        U = r * f
        sub, diag, sup = self._d2
        out = -tridiag_apply(sub, diag, sup, U)
        out[-1] = -np.dot(self._edge_weights, U[-4:])
        out += (ell * (ell + 1) / r ** 2 + 1.0 + self.phi) * U
        if which == "plus":
            out += 2.0 * r * self.q * self.potential(self.q * f, ell)
        return out / r

    def _matrix(self, ell: int, which: str) -> np.ndarray:
        r = self.r
        sub, diag, sup = self._d2
        M = -tridiag_dense(sub, diag, sup)
        idx = np.arange(r.size)
        M[idx, idx] += ell * (ell + 1) / r ** 2 + 1.0 + self.phi
        if which == "plus":
            G = self._potential_matrix(ell)
            M += 2.0 * (r * self.q)[:, None] * G * (self.q / r)[None, :]
        return M

    # -- solves ----------------------------------------------------------------

    def solve(self, f: np.ndarray, ell: int, which: str = "plus",
              ortho_tol: float = 1e-6) -> np.ndarray:
        """Solve L u = f at degree ell; the kernel degrees use a bordered
        system and return the zero-kernel representative.

        Raises OrthogonalityError when f has a kernel component beyond
        ortho_tol (relative).
        """
        if ell > self.ell_max:
            raise UnsupportedOrderError(f"harmonic degree {ell} beyond ell_max")
        r, w = self.r, self.w
        fU = r * np.asarray(f, dtype=complex)

        def lusolve(lu, b):
            if np.iscomplexobj(b):
                return lu_solve(lu, b.real) + 1j * lu_solve(lu, b.imag)
            return lu_solve(lu, b)

        key = (which, ell)
        kernel = self._kernels.get(key)
        if kernel is None:
            if key not in self._lu:
                self._lu[key] = lu_factor(self._matrix(ell, which))
            return lusolve(self._lu[key], fU) / r

        knorm = np.sum(w * kernel ** 2)
        ip = np.sum(w * fU * kernel)
        fnorm = np.sqrt(np.sum(w * np.abs(fU) ** 2) * knorm)
        if fnorm > 0 and abs(ip) > ortho_tol * fnorm:
            raise OrthogonalityError(
                f"right-hand side has kernel component at ell={ell}",
                inner_product=complex(ip))
        fU = fU - (ip / knorm) * kernel
        if key not in self._lu:
            n = r.size
            B = np.zeros((n + 1, n + 1))
            B[:n, :n] = self._matrix(ell, which)
            B[:n, n] = kernel
            B[n, :n] = w * kernel
            self._lu[key] = lu_factor(B)
        rhs = np.concatenate([fU, [0.0]])
        sol = lusolve(self._lu[key], rhs)[:-1]
        sol = sol - (np.sum(w * sol * kernel) / knorm) * kernel
        return sol / r
