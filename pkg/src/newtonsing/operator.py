"""L^2 harness for the truncated convolution operator U_L f = f * K_L."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel, TruncatedKernel


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with N points per axis at spacing ``step``, centred at 0."""

    n: int
    N: int
    step: float

    @property
    def width(self) -> float:
        return self.N * self.step

    def axis(self) -> np.ndarray:
        return (np.arange(self.N) - self.N // 2) * self.step

    def points(self) -> np.ndarray:
        ax = self.axis()
        return np.stack(np.meshgrid(*[ax] * self.n, indexing="ij"), axis=-1)

    def sample(self, f) -> np.ndarray:
        return np.asarray(f(self.points()), dtype=float)


def check_resolution(K: Kernel, L: int, grid: Grid) -> None:
    if grid.n != K.n:
        raise ValueError("grid dimension does not match the kernel")
    if grid.N % 2:
        raise ValueError("N must be even")
    # one point per finest dyadic scale; the L^2 norms converge to ~1e-10 by then
    if grid.step > 2.0 ** (-L):
        raise ResolutionError(
            f"step {grid.step:g} does not resolve the finest shell of K_{L}; need step <= {2.0 ** (-L):g}")
    if grid.width < 4 * float(np.max(K.extent())):
        raise ResolutionError("grid too small: the period must be at least twice the kernel support")


def sample_truncated_kernel(K: Kernel, L: int, grid: Grid) -> np.ndarray:
    """K_L on the grid, wrapped so that y = 0 sits at index 0."""
    out = np.zeros((grid.N,) * grid.n)
    TK = TruncatedKernel(K, L)
    if TK.pieces:
        ax = grid.axis()
        sel = [np.nonzero(np.abs(ax) <= e)[0] for e in K.extent()]
        sub = np.stack(np.meshgrid(*[ax[s] for s in sel], indexing="ij"), axis=-1)
        out[np.ix_(*sel)] = TK(sub)
    return np.fft.ifftshift(out)


def _spectrum_energy(F: np.ndarray, N: int) -> float:
    """sum |F|^2 over the full spectrum from a real-input (half) transform."""
    w = np.full(F.shape[-1], 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    return float(np.sum(np.abs(F) ** 2 * w))


def apply_operator(K: Kernel, L: int, f: np.ndarray, resolution: float) -> np.ndarray:
    """Samples of U_L f by FFT convolution on the grid of spacing ``resolution``."""
    f = np.asarray(f, dtype=float)
    grid = Grid(f.ndim, f.shape[0], float(resolution))
    check_resolution(K, L, grid)
    k = sample_truncated_kernel(K, L, grid)
    U = np.fft.rfftn(f) * np.fft.rfftn(k) * grid.step**grid.n
    return np.fft.irfftn(U, s=f.shape, axes=tuple(range(f.ndim)))


def l2_ratio(K: Kernel, L: int, f: np.ndarray, resolution: float) -> dict:
    """||U_L f|| / ||f|| with the output norm computed in space and in frequency."""
    f = np.asarray(f, dtype=float)
    grid = Grid(f.ndim, f.shape[0], float(resolution))
    check_resolution(K, L, grid)
    k = sample_truncated_kernel(K, L, grid)
    vol = grid.step**grid.n
    U = np.fft.rfftn(f) * np.fft.rfftn(k) * vol
    u = np.fft.irfftn(U, s=f.shape, axes=tuple(range(f.ndim)))
    space = math.sqrt(vol * float(np.sum(u * u)))
    freq = math.sqrt(vol * _spectrum_energy(U, grid.N) / grid.N**grid.n)
    fn = math.sqrt(vol * float(np.sum(f * f)))
    return {
        "L": L,
        "step": grid.step,
        "N": grid.N,
        "norm_f": fn,
        "norm_space": space,
        "norm_freq": freq,
        "plancherel_rel": abs(space - freq) / max(space, 1e-300),
        "ratio": space / fn if fn > 0 else 0.0,
        "integral": vol * float(np.sum(u)),
    }


def gaussian_grid_function(grid: Grid, width: float, center=None) -> np.ndarray:
    c = np.zeros(grid.n) if center is None else np.asarray(center, float)
    return grid.sample(lambda x: np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width**2)))
