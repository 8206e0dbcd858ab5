"""Conserved quantities, error norms and convergence slopes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .integrators import SchemeSpec, step
from .spectral import SpectralField, h_norm, ifft

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class InvariantRecord:
    time: float
    mass: float
    energy: float


def mass(u: SpectralField) -> float:
    """Integral of |u|^2 over the torus."""
    return float(TWO_PI * np.sum(np.abs(u.coeffs) ** 2))


def nls_energy(u: SpectralField) -> float:
    """Integral of |u_x|^2 + |u|^4 / 2."""
    k2 = u.grid.k.astype(float) ** 2
    grad = np.sum(k2 * np.abs(u.coeffs) ** 2)
    quartic = np.mean(np.abs(ifft(u.coeffs)) ** 4)
    return float(TWO_PI * (grad + 0.5 * quartic))


def kdv_momentum(u: SpectralField) -> float:
    return mass(u)


def kdv_energy(u: SpectralField) -> float:
    """Hamiltonian of u_t + u_xxx = (u^2)_x / 2:  integral of u_x^2 / 2 + u^3 / 6."""
    k2 = u.grid.k_odd.astype(float) ** 2
    grad = np.sum(k2 * np.abs(u.coeffs) ** 2)
    cubic = np.mean(ifft(u.coeffs).real ** 3)
    return float(TWO_PI * (0.5 * grad + cubic / 6))


def h1_error(u: SpectralField, ref: SpectralField) -> float:
    return h_norm(u - ref, 1)


def symmetry_defect(spec: SchemeSpec, u: SpectralField, tau: float) -> float:
    """H1 norm of Phi_{-tau}(Phi_tau(u)) - u."""
    return h_norm(step(spec, step(spec, u, tau), -tau) - u, 1)


def convergence_slope(taus: Sequence[float], errors: Sequence[float], floor: float | None = None) -> float:
    """Least-squares slope of log(error) against log(tau).

    Points with error below ``10 * floor`` are dropped when a reference floor
    is given.
    """
    t = np.asarray(taus, dtype=float)
    e = np.asarray(errors, dtype=float)
    if t.shape != e.shape:
        raise ValueError("taus and errors differ in length")
    keep = np.isfinite(e) & (e > 0) & (t > 0)
    if floor is not None:
        keep &= e >= 10 * floor
    if keep.sum() < 3:
        raise ValueError("need at least three usable points to fit a slope")
    slope, _ = np.polyfit(np.log(t[keep]), np.log(e[keep]), 1)
    return float(slope)
