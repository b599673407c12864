"""Complex scalar fields on uniform periodic 3D grids and spectral helpers."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

__all__ = ["ComplexField3D", "ModulationState", "make_field"]

CF3D_MAGIC = b"CF3D"


def _as_lengths(L, shape):
    if np.isscalar(L):
        return (float(L),) * 3
    L = tuple(float(v) for v in L)
    if len(L) != 3:
        raise ValueError("box lengths must be a scalar or a 3-tuple")
    return L


@dataclass
class ComplexField3D:
    """Complex values on a uniform periodic box centered at the origin."""

    data: np.ndarray
    lengths: tuple
    time: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        self.data = data
        self.lengths = _as_lengths(self.lengths, data.shape)
        if data.ndim != 3:
            raise ValueError("field data must be a 3D array")
        for n in data.shape:
            if n & (n - 1):
                raise ValueError("grid counts must be powers of two")
        if not np.all(np.isfinite(data.view(np.float64))):
            raise ValueError("field contains non-finite values")

    @property
    def n(self) -> tuple:
        return self.data.shape

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.data.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        return [(-L / 2 + L * np.arange(n) / n)
                for L, n in zip(self.lengths, self.data.shape)]

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def k_axes(self):
        return [2 * np.pi * np.fft.fftfreq(n, d=h)
                for n, h in zip(self.data.shape, self.spacing)]

    def k_sq(self):
        kx, ky, kz = self.k_axes()
        return (kx[:, None, None] ** 2 + ky[None, :, None] ** 2
                + kz[None, None, :] ** 2)

    def copy(self) -> "ComplexField3D":
        return ComplexField3D(self.data.copy(), self.lengths, self.time)

    def zeros_like(self) -> "ComplexField3D":
        return ComplexField3D(np.zeros_like(self.data), self.lengths, self.time)

    # -- norms and inner products -----------------------------------------

    def inner(self, other) -> complex:
        """int u conj(v) dx on the grid."""
        return complex(np.vdot(other.data, self.data) * self.cell_volume)

    def l2_norm_sq(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2) * self.cell_volume)

    def l2_norm(self) -> float:
        return np.sqrt(self.l2_norm_sq())

    def h1_norm_sq(self) -> float:
        """sum (1 + |k|^2) |u_hat|^2, exact on the grid."""
        uh = sfft.fftn(self.data, workers=-1)
        w = (1.0 + self.k_sq())
        total = float(np.sum(w * np.abs(uh) ** 2))
        return total * self.cell_volume / self.data.size

    def h1_norm(self) -> float:
        return np.sqrt(self.h1_norm_sq())

    def gradient(self):
        """Spectral gradient, three complex fields."""
        uh = sfft.fftn(self.data, workers=-1)
        out = []
        for axis, k in enumerate(self.k_axes()):
            shape = [1, 1, 1]
            shape[axis] = k.size
            gh = uh * (1j * k.reshape(shape))
            out.append(ComplexField3D(sfft.ifftn(gh, workers=-1),
                                      self.lengths, self.time))
        return out

    # -- binary snapshots ---------------------------------------------------

    def save_binary(self, path):
        """Magic 'CF3D', header (nx, ny, nz, box lengths, time), then
        little-endian complex pairs in row-major order."""
        with open(path, "wb") as fh:
            fh.write(CF3D_MAGIC)
            fh.write(struct.pack("<3Q", *self.data.shape))
            fh.write(struct.pack("<3d", *self.lengths))
            fh.write(struct.pack("<d", self.time))
            fh.write(self.data.astype("<c16").tobytes(order="C"))

    @staticmethod
    def load_binary(path) -> "ComplexField3D":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != CF3D_MAGIC:
            raise ValueError("not a CF3D file")
        nx, ny, nz = struct.unpack_from("<3Q", raw, 4)
        lengths = struct.unpack_from("<3d", raw, 28)
        (time,) = struct.unpack_from("<d", raw, 52)
        data = np.frombuffer(raw, "<c16", count=nx * ny * nz, offset=60)
        return ComplexField3D(data.reshape(nx, ny, nz).copy(), lengths, time)


def make_field(n, L, time: float = 0.0) -> ComplexField3D:
    if np.isscalar(n):
        n = (int(n),) * 3
    return ComplexField3D(np.zeros(tuple(n), dtype=np.complex128), L, time)


@dataclass
class ModulationState:
    """Per-soliton (alpha_j, beta_j, lambda_j, gamma_j)."""

    alphas: np.ndarray  # (m, 3)
    betas: np.ndarray   # (m, 3)
    lams: np.ndarray    # (m,)
    gammas: np.ndarray  # (m,)

    def __post_init__(self):
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        self.lams = np.atleast_1d(np.asarray(self.lams, dtype=float))
        self.gammas = np.atleast_1d(np.asarray(self.gammas, dtype=float))
        m = self.lams.size
        if self.alphas.shape != (m, 3) or self.betas.shape != (m, 3) \
                or self.gammas.shape != (m,):
            raise ValueError("inconsistent modulation parameter shapes")
        if np.any(self.lams <= 0):
            raise ValueError("scales must be positive")
        if m >= 2:
            d = self.alphas[:, None, :] - self.alphas[None, :, :]
            dist = np.sqrt(np.sum(d * d, axis=-1))
            if np.min(dist[~np.eye(m, dtype=bool)]) == 0:
                raise ValueError("soliton positions must be pairwise distinct")

    @property
    def m(self) -> int:
        return self.lams.size

    def pack(self) -> np.ndarray:
        """Flatten to (8m,) in per-soliton blocks (alpha, beta, lam, gamma)."""
        return np.concatenate([
            np.concatenate([self.alphas[j], self.betas[j],
                            [self.lams[j]], [self.gammas[j]]])
            for j in range(self.m)
        ])

    @staticmethod
    def unpack(vec: np.ndarray) -> "ModulationState":
        vec = np.asarray(vec, dtype=float)
        m = vec.size // 8
        blocks = vec.reshape(m, 8)
        return ModulationState(alphas=blocks[:, 0:3], betas=blocks[:, 3:6],
                               lams=blocks[:, 6], gammas=blocks[:, 7])

    def min_separation(self) -> float:
        if self.m < 2:
            return np.inf
        d = self.alphas[:, None, :] - self.alphas[None, :, :]
        dist = np.sqrt(np.sum(d * d, axis=-1))
        return float(np.min(dist[~np.eye(self.m, dtype=bool)]))
