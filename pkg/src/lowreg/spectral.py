"""Fourier pseudospectral tools on the torus [0, 2pi).

Coefficients follow u_hat[k] = (1/M) sum_j u_j exp(-i k x_j), stored in FFT
order.  The Nyquist slot is read as frequency +M/2.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

PHI_SERIES_THRESHOLD = 1e-4
_PHI_TERMS = 8
SNAPSHOT_MAGIC = b"LRFIELD1"


@dataclass(frozen=True)
class Grid:
    M: int

    def __post_init__(self):
        if self.M < 8 or self.M & (self.M - 1):
            raise ValueError(f"M must be a power of two >= 8, got {self.M}")

    @cached_property
    def x(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.M) / self.M

    @cached_property
    def k(self) -> np.ndarray:
        """Integer frequencies in FFT order, Nyquist as +M/2."""
        k = np.fft.fftfreq(self.M, 1.0 / self.M)
        k[self.M // 2] = self.M // 2
        k = k.astype(np.int64)
        k.setflags(write=False)
        return k

    @cached_property
    def k_odd(self) -> np.ndarray:
        """Frequencies for odd-order symbols: Nyquist set to zero to keep real data real."""
        k = self.k.copy()
        k[self.M // 2] = 0
        k.setflags(write=False)
        return k


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable vector of Fourier coefficients on a grid."""

    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def M(self) -> int:
        return self.grid.M

    def with_coeffs(self, c: np.ndarray) -> "SpectralField":
        return SpectralField(c, self.grid)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, a: complex) -> "SpectralField":
        return self.with_coeffs(self.coeffs * a)

    __rmul__ = __mul__

    def conj(self) -> "SpectralField":
        """Coefficients of the complex conjugate function."""
        return self.with_coeffs(conj_coeffs(self.coeffs))


def fft(u: np.ndarray) -> np.ndarray:
    return np.fft.fft(u) / u.shape[-1]


def ifft(c: np.ndarray) -> np.ndarray:
    return np.fft.ifft(c) * c.shape[-1]


def conj_coeffs(c: np.ndarray) -> np.ndarray:
    """Coefficients of conj(u) given those of u: c_k -> conj(c_{-k})."""
    return np.conj(np.roll(c[::-1], 1))


def to_physical(f: SpectralField) -> np.ndarray:
    return ifft(f.coeffs)


def to_spectral(samples: np.ndarray, grid: Grid | None = None) -> SpectralField:
    samples = np.asarray(samples)
    g = grid or Grid(samples.shape[0])
    if samples.shape != (g.M,):
        raise ValueError(f"expected {g.M} samples, got shape {samples.shape}")
    return SpectralField(fft(samples), g)


def zeros(grid: Grid) -> SpectralField:
    return SpectralField(np.zeros(grid.M, complex), grid)


def mode(grid: Grid, k: int, value: complex = 1.0) -> SpectralField:
    c = np.zeros(grid.M, complex)
    c[k % grid.M] = value
    return SpectralField(c, grid)


def apply_multiplier(f: SpectralField, m: Callable[[np.ndarray], np.ndarray] | np.ndarray) -> SpectralField:
    sym = m(f.grid.k) if callable(m) else np.asarray(m)
    sym = np.broadcast_to(sym, f.coeffs.shape)
    if not np.all(np.isfinite(sym)):
        raise ValueError("multiplier is not finite on the grid")
    return f.with_coeffs(f.coeffs * sym)


def _phi_series(z: np.ndarray, shift: int) -> np.ndarray:
    # phi_j(z) = sum_n z^n / (n + j)!
    out = np.zeros_like(z)
    term = np.full_like(z, 1.0 / math.factorial(shift))
    for n in range(_PHI_TERMS):
        out = out + term
        term = term * z / (n + 1 + shift)
    return out


def phi1(z):
    """(e^z - 1)/z with phi1(0) = 1."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < PHI_SERIES_THRESHOLD
    zs = np.where(small, 1.0, z)
    out = np.where(small, _phi_series(z, 1), np.expm1(zs) / zs)
    return out[()] if out.ndim == 0 else out


def phi2(z):
    """(e^z - 1 - z)/z^2 with phi2(0) = 1/2."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < PHI_SERIES_THRESHOLD
    zs = np.where(small, 1.0, z)
    out = np.where(small, _phi_series(z, 2), (np.expm1(zs) - zs) / zs**2)
    return out[()] if out.ndim == 0 else out


def inv_dx_symbol(grid: Grid) -> np.ndarray:
    k = grid.k_odd
    out = np.zeros(grid.M, complex)
    nz = k != 0
    out[nz] = 1.0 / (1j * k[nz])
    return out


def dx_symbol(grid: Grid) -> np.ndarray:
    return 1j * grid.k_odd


def inv_dx(f: SpectralField) -> SpectralField:
    return apply_multiplier(f, inv_dx_symbol(f.grid))


def dx(f: SpectralField) -> SpectralField:
    return apply_multiplier(f, dx_symbol(f.grid))


def h_norm(f: SpectralField | np.ndarray, s: float, grid: Grid | None = None) -> float:
    """(sum (1+k^2)^s |u_hat_k|^2)^(1/2)."""
    if isinstance(f, SpectralField):
        c, grid = f.coeffs, f.grid
    else:
        c = f
    w = (1.0 + grid.k.astype(float) ** 2) ** s
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2)))


def l2_norm(f: SpectralField) -> float:
    """Integral L2 norm on [0, 2pi): sqrt(2pi sum |u_hat|^2)."""
    return float(np.sqrt(2 * np.pi * np.sum(np.abs(f.coeffs) ** 2)))


def normalize(f: SpectralField) -> SpectralField:
    return f * (1.0 / l2_norm(f))


def smooth_data(grid: Grid) -> SpectralField:
    """cos(x)/(2 + sin(x)) scaled to unit L2 norm."""
    x = grid.x
    return normalize(to_spectral(np.cos(x) / (2 + np.sin(x)), grid))


def rough_coefficients(grid: Grid, theta: float, seed: int) -> np.ndarray:
    """Unnormalized coefficients |m|^-theta U_m, U_0 for m = 0.

    Stream layout (PCG64, ``Generator.random``): for m = -M/2+1, ..., M/2
    skipping 0, draw Re U_m then Im U_m; finally Re U_0, Im U_0.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    M = grid.M
    ms = [m for m in range(-M // 2 + 1, M // 2 + 1) if m != 0]
    draws = rng.random(2 * (len(ms) + 1))
    c = np.zeros(M, complex)
    for j, m in enumerate(ms):
        u = draws[2 * j] + 1j * draws[2 * j + 1]
        c[m % M] = abs(m) ** (-theta) * u
    c[0] = draws[-2] + 1j * draws[-1]
    return c


def rough_data(grid: Grid, theta: float, seed: int) -> SpectralField:
    return normalize(SpectralField(rough_coefficients(grid, theta, seed), grid))


def real_projection(f: SpectralField) -> SpectralField:
    """Coefficients of Re(u)."""
    return f.with_coeffs(0.5 * (f.coeffs + conj_coeffs(f.coeffs)))


def kdv_data(f: SpectralField) -> SpectralField:
    """Real, mean-zero, unit-norm version of ``f`` suitable for KdV.

    The Nyquist mode is dropped too: odd-order symbols vanish there, so it
    would not be evolved consistently.
    """
    g = real_projection(f)
    c = g.coeffs.copy()
    c[0] = 0.0
    c[g.M // 2] = 0.0
    return normalize(g.with_coeffs(c))


def save_field(path: str | Path, f: SpectralField, length: float = 2 * np.pi) -> None:
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Qd", f.M, length))
        fh.write(np.asarray(f.coeffs, dtype="<c16").tobytes())


def load_field(path: str | Path) -> SpectralField:
    with open(path, "rb") as fh:
        if fh.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a field snapshot")
        M, length = struct.unpack("<Qd", fh.read(16))
        if not math.isclose(length, 2 * np.pi):
            raise ValueError(f"unsupported domain length {length}")
        data = np.frombuffer(fh.read(16 * M), dtype="<c16")
    if data.size != M:
        raise ValueError(f"truncated snapshot {path}")
    return SpectralField(data.astype(complex), Grid(int(M)))
