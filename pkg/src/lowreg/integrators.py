"""One-step methods for cubic NLS and KdV on the torus, plus the evolution driver.

NLS:  i u_t + u_xx = |u|^2 u
KdV:  u_t + u_xxx = 1/2 (u^2)_x

Multipliers act in Fourier space, products are taken pointwise on the grid.
Symbols: e^{i t Delta} -> e^{-i t k^2}, d_x -> i k, e^{-t d_x^3} -> e^{i t k^3}.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .spectral import Grid, SpectralField, fft, ifft, l2_norm, phi1, phi2
from .trees import Equation, Splitting

DIVERGENCE_BOUND = 1e6


class NoConvergence(RuntimeError):
    def __init__(self, max_iter: int, increment: float, step: int | None = None):
        self.max_iter = max_iter
        self.increment = increment
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"fixed point not reached after {max_iter} iterations "
                         f"(last H1 increment {increment:.3e}){where}")


class Diverged(RuntimeError):
    def __init__(self, norm: float, step: int | None = None):
        self.norm = norm
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"solution diverged (norm {norm:.3e}){where}")


class Method(enum.Enum):
    NLS_OS18 = "NLS_OS18"
    NLS_BS22 = "NLS_BS22"
    NLS_SYM1 = "NLS_SYM1"
    NLS_MID1 = "NLS_MID1"
    NLS_MID2 = "NLS_MID2"
    NLS_STRANG = "NLS_STRANG"
    KDV_SYM1 = "KDV_SYM1"
    KDV_BS2 = "KDV_BS2"
    KDV_STRANG = "KDV_STRANG"

    @property
    def equation(self) -> Equation:
        return Equation.NLS if self.name.startswith("NLS") else Equation.KDV

    @property
    def implicit(self) -> bool:
        return self in _IMPLICIT

    @property
    def order(self) -> int:
        return 1 if self in (Method.NLS_OS18, Method.NLS_SYM1, Method.NLS_MID1, Method.KDV_SYM1) else 2


_IMPLICIT = {Method.NLS_SYM1, Method.NLS_MID1, Method.NLS_MID2, Method.KDV_SYM1}


@dataclass(frozen=True)
class FixedPointConfig:
    tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class SchemeSpec:
    method: Method
    fp: FixedPointConfig | None = None
    micro: int | None = None

    def __post_init__(self):
        m = Method(self.method)
        object.__setattr__(self, "method", m)
        if m.implicit and self.fp is None:
            object.__setattr__(self, "fp", FixedPointConfig())
        if not m.implicit and self.fp is not None:
            raise ValueError(f"{m.value} is explicit and takes no fixed-point settings")
        if m is Method.KDV_STRANG:
            if self.micro is None:
                object.__setattr__(self, "micro", 1000)
            if self.micro < 1:
                raise ValueError("micro must be >= 1")
        elif self.micro is not None:
            raise ValueError("micro applies to KDV_STRANG only")

    @property
    def equation(self) -> Equation:
        return self.method.equation

    @classmethod
    def parse(cls, name: str, fp: FixedPointConfig | None = None, micro: int | None = None) -> "SchemeSpec":
        m = Method(name.strip().upper())
        return cls(m, fp if m.implicit else None, micro if m is Method.KDV_STRANG else None)


class FixedPointResult(NamedTuple):
    value: SpectralField
    iterations: int
    increment: float


# cached symbols

@lru_cache(maxsize=64)
def _nls_symbols(M: int, tau: float) -> dict[str, np.ndarray]:
    k2 = Grid(M).k.astype(float) ** 2
    z = 2j * tau * k2
    p1 = phi1(z)
    p2 = phi2(z)
    return {
        "E": np.exp(-1j * tau * k2),
        "Einv": np.exp(1j * tau * k2),
        "Ehalf": np.exp(-0.5j * tau * k2),
        "phi1_2": p1,                     # phi1(-2 i tau Delta)
        "phi1_m2": phi1(-z),              # phi1(2 i tau Delta)
        "phi12_2": p1 - p2,               # (phi1 - phi2)(-2 i tau Delta)
        "phi2_2": p2,                     # phi2(-2 i tau Delta)
        "phi1_1": phi1(1j * tau * k2),    # phi1(-i tau Delta)
        "phi1_m1": phi1(-1j * tau * k2),  # phi1(i tau Delta)
    }


@lru_cache(maxsize=64)
def _kdv_symbols(M: int, tau: float) -> dict[str, np.ndarray]:
    g = Grid(M)
    k = g.k_odd.astype(float)
    kk = g.k.astype(float) ** 2
    inv = np.zeros(M, complex)
    inv[k != 0] = 1.0 / (1j * k[k != 0])
    return {
        "A": np.exp(1j * tau * k**3),
        "Ainv": np.exp(-1j * tau * k**3),
        "Ahalf": np.exp(0.5j * tau * k**3),
        "inv": inv,
        "dx": 1j * k,
        "psi": np.sinc(tau * kk / np.pi),  # sin(tau k^2)/(tau k^2)
    }


def _mult(sym: np.ndarray, u_phys: np.ndarray) -> np.ndarray:
    """Apply a Fourier symbol to physical samples, return physical samples."""
    return ifft(sym * fft(u_phys))


# fixed point

def _fixed_point(fun: Callable[[np.ndarray], np.ndarray], guess: np.ndarray,
                 cfg: FixedPointConfig, grid: Grid) -> tuple[np.ndarray, int, float]:
    w = np.sqrt(1.0 + grid.k.astype(float) ** 2)
    v = guess
    incr = np.inf
    for it in range(1, cfg.max_iter + 1):
        nxt = fun(v)
        incr = float(np.sqrt(np.sum((w * np.abs(nxt - v)) ** 2)))
        v = nxt
        if not np.isfinite(incr):
            raise Diverged(incr)
        if incr < cfg.tol:
            return v, it, incr
    raise NoConvergence(cfg.max_iter, incr)


def fixed_point_solve(fmap: Callable[[SpectralField], SpectralField], guess: SpectralField,
                      cfg: FixedPointConfig = FixedPointConfig()) -> FixedPointResult:
    """Picard iteration v <- fmap(v) until the H1 increment drops below cfg.tol."""
    grid = guess.grid

    def fun(c):
        return fmap(SpectralField(c, grid)).coeffs

    v, it, incr = _fixed_point(fun, guess.coeffs, cfg, grid)
    return FixedPointResult(SpectralField(v, grid), it, incr)


# NLS right-hand sides on coefficient arrays

def _os18(c: np.ndarray, tau: float) -> np.ndarray:
    s = _nls_symbols(c.size, tau)
    u = ifft(c)
    n = fft(u * u * _mult(s["phi1_2"], np.conj(u)))
    return s["E"] * (c - 1j * tau * n)


def _bs22(c: np.ndarray, tau: float) -> np.ndarray:
    s = _nls_symbols(c.size, tau)
    u = ifft(c)
    ub = np.conj(u)
    n1 = fft(u * u * _mult(s["phi12_2"], ub))
    v = ifft(s["E"] * c)
    n3 = fft(v * v * _mult(s["phi2_2"] * s["E"], ub))
    au2 = np.abs(u) ** 2
    n4 = fft(au2 * au2 * u)
    return s["E"] * (c - 1j * tau * n1 - 0.5 * tau**2 * n4) - 1j * tau * n3


def _sym1_map(c: np.ndarray, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    s = _nls_symbols(c.size, tau)
    u = ifft(c)
    base = s["E"] * (c - 0.5j * tau * fft(u * u * _mult(s["phi1_1"], np.conj(u))))

    def fun(v):
        w = ifft(v)
        return base - 0.5j * tau * fft(w * w * _mult(s["phi1_m1"], np.conj(w)))

    return fun


def _mid_map(c: np.ndarray, tau: float, second: bool) -> Callable[[np.ndarray], np.ndarray]:
    s = _nls_symbols(c.size, tau)
    Ec = s["E"] * c
    w = tau / 8 if second else tau / 16
    sym_a = s["phi12_2"] if second else s["phi1_2"]
    # MID2 conjugate bracket: phi2(-2i tau Delta)(e^{i tau Delta} conj(a));
    # MID1: phi1(2i tau Delta)(e^{-i tau Delta} conj(a)), with a = u + e^{-i tau Delta} v
    sym_b = s["phi2_2"] * s["E"] if second else s["phi1_m2"] * s["Einv"]

    def fun(v):
        a = ifft(c + s["Einv"] * v)
        b = ifft(Ec + v)
        t2 = fft(a * a * _mult(sym_a, np.conj(a)))
        t3 = fft(b * b * _mult(sym_b, np.conj(a)))
        return Ec - 1j * w * (s["E"] * t2 + t3)

    return fun


def _strang_nls(c: np.ndarray, tau: float) -> np.ndarray:
    s = _nls_symbols(c.size, tau)
    u = ifft(s["Ehalf"] * c)
    u = u * np.exp(-1j * tau * np.abs(u) ** 2)
    return s["Ehalf"] * fft(u)


# KdV

def _real(c: np.ndarray) -> np.ndarray:
    """Project onto coefficients of a real function without Nyquist content."""
    out = 0.5 * (c + np.conj(np.roll(c[::-1], 1)))
    out[c.size // 2] = 0.0
    return out


def _check_real(c: np.ndarray) -> np.ndarray:
    u = ifft(c)
    scale = max(1.0, float(np.max(np.abs(u))))
    if np.max(np.abs(u.imag)) > 1e-10 * scale:
        raise ValueError("KdV schemes need real-valued data")
    return _real(c)


def _kdv_explicit(c: np.ndarray, tau: float) -> np.ndarray:
    """First-order resonance step, also the predictor for KDV_SYM1."""
    s = _kdv_symbols(c.size, tau)
    W = s["inv"] * c
    p = ifft(s["A"] * W).real
    q = ifft(W).real
    return _real(s["A"] * c + (fft(p * p) - s["A"] * fft(q * q)) / 6)


def _kdv_sym1_map(c: np.ndarray, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    s = _kdv_symbols(c.size, tau)
    W = s["inv"] * c
    AW = s["A"] * W
    Ac = s["A"] * c

    def fun(v):
        Wv = s["inv"] * v
        p = ifft(AW + Wv).real
        q = ifft(W + s["Ainv"] * Wv).real
        return _real(Ac + (fft(p * p) - s["A"] * fft(q * q)) / 24)

    return fun


def _kdv_bs2(c: np.ndarray, tau: float) -> np.ndarray:
    s = _kdv_symbols(c.size, tau)
    out = _kdv_explicit(c, tau)
    u = ifft(c).real
    d_u2 = ifft(s["dx"] * fft(u * u)).real
    corr = s["dx"] * fft(u * d_u2)
    return _real(out + 0.25 * tau**2 * s["A"] * s["psi"] * corr)


def _burgers_rhs(c: np.ndarray, dxs: np.ndarray, coef: float) -> np.ndarray:
    u = ifft(c).real
    return coef * 0.5 * dxs * fft(u * u)


def _kdv_strang(c: np.ndarray, tau: float, micro: int, coef: float = 1.0) -> np.ndarray:
    s = _kdv_symbols(c.size, tau)
    start = np.sqrt(np.sum(np.abs(c) ** 2))
    v = s["Ahalf"] * c
    dt = tau / micro
    dxs = s["dx"]
    for _ in range(micro):
        k1 = _burgers_rhs(v, dxs, coef)
        k2 = _burgers_rhs(v + 0.5 * dt * k1, dxs, coef)
        k3 = _burgers_rhs(v + 0.5 * dt * k2, dxs, coef)
        k4 = _burgers_rhs(v + dt * k3, dxs, coef)
        v = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = _real(s["Ahalf"] * v)
    end = np.sqrt(np.sum(np.abs(out) ** 2))
    if not np.isfinite(end) or (start > 0 and end > 10 * start):
        raise Diverged(float(end))
    return out


# public steps

def _solve(fun, guess, fp, grid) -> tuple[np.ndarray, int]:
    v, it, _ = _fixed_point(fun, guess, fp, grid)
    return v, it


def step_nls_os18(u: SpectralField, tau: float) -> SpectralField:
    return u.with_coeffs(_os18(u.coeffs, tau))


def step_nls_bs22(u: SpectralField, tau: float) -> SpectralField:
    return u.with_coeffs(_bs22(u.coeffs, tau))


def step_nls_sym1(u: SpectralField, tau: float, fp: FixedPointConfig = FixedPointConfig()) -> SpectralField:
    return step_with_info(SchemeSpec(Method.NLS_SYM1, fp), u, tau)[0]


def step_nls_mid1(u: SpectralField, tau: float, fp: FixedPointConfig = FixedPointConfig()) -> SpectralField:
    return step_with_info(SchemeSpec(Method.NLS_MID1, fp), u, tau)[0]


def step_nls_mid2(u: SpectralField, tau: float, fp: FixedPointConfig = FixedPointConfig()) -> SpectralField:
    return step_with_info(SchemeSpec(Method.NLS_MID2, fp), u, tau)[0]


def step_nls_strang(u: SpectralField, tau: float) -> SpectralField:
    return u.with_coeffs(_strang_nls(u.coeffs, tau))


def step_kdv_sym1(u: SpectralField, tau: float, fp: FixedPointConfig = FixedPointConfig()) -> SpectralField:
    return step_with_info(SchemeSpec(Method.KDV_SYM1, fp), u, tau)[0]


def step_kdv_bs2(u: SpectralField, tau: float) -> SpectralField:
    return u.with_coeffs(_kdv_bs2(_check_real(u.coeffs), tau))


def step_kdv_strang(u: SpectralField, tau: float, micro: int = 1000, coef: float = 1.0) -> SpectralField:
    """Airy half step, Burgers by ``micro`` RK4 steps, Airy half step.

    ``coef`` scales the nonlinearity; 0 leaves the pure Airy flow.
    """
    if micro < 1:
        raise ValueError("micro must be >= 1")
    return u.with_coeffs(_kdv_strang(_check_real(u.coeffs), tau, micro, coef))


def implicit_map(spec: SchemeSpec, u: SpectralField, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    """The map v -> RHS(u, v) whose fixed point is the next step of an implicit method."""
    c = u.coeffs
    m = spec.method
    if m is Method.NLS_SYM1:
        return _sym1_map(c, tau)
    if m is Method.NLS_MID1:
        return _mid_map(c, tau, second=False)
    if m is Method.NLS_MID2:
        return _mid_map(c, tau, second=True)
    if m is Method.KDV_SYM1:
        return _kdv_sym1_map(c, tau)
    raise ValueError(f"{m.value} is explicit")


def step_with_info(spec: SchemeSpec, u: SpectralField, tau: float) -> tuple[SpectralField, int]:
    """One step; also returns the number of fixed-point iterations (0 if explicit)."""
    if tau == 0:
        raise ValueError("tau must be nonzero")
    m = spec.method
    c = u.coeffs
    if m.equation is Equation.KDV:
        c = _check_real(c)
        u = u.with_coeffs(c)
    if m.implicit:
        guess = _os18(c, tau) if m.equation is Equation.NLS else _kdv_explicit(c, tau)
        v, it = _solve(implicit_map(spec, u, tau), guess, spec.fp, u.grid)
        return u.with_coeffs(v), it
    if m is Method.NLS_OS18:
        out = _os18(c, tau)
    elif m is Method.NLS_BS22:
        out = _bs22(c, tau)
    elif m is Method.NLS_STRANG:
        out = _strang_nls(c, tau)
    elif m is Method.KDV_BS2:
        out = _kdv_bs2(c, tau)
    elif m is Method.KDV_STRANG:
        out = _kdv_strang(c, tau, spec.micro)
    else:  # pragma: no cover
        raise AssertionError(m)
    return u.with_coeffs(out), 0


def step(spec: SchemeSpec, u: SpectralField, tau: float) -> SpectralField:
    return step_with_info(spec, u, tau)[0]


# evolution

@dataclass
class Trajectory:
    steps: list[int]
    times: list[float]
    records: list[tuple]
    final: SpectralField
    iterations: list[int] = field(default_factory=list)


def evolve(spec: SchemeSpec, u0: SpectralField, tau: float, steps: int,
           observers: Sequence[Callable[[SpectralField], Any]] = (), stride: int = 1) -> Trajectory:
    """Apply ``steps`` steps of size ``tau``; observers run at step 0 and every ``stride`` steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    traj = Trajectory([], [], [], u0)

    def observe(n, f):
        traj.steps.append(n)
        traj.times.append(n * tau)
        traj.records.append(tuple(obs(f) for obs in observers))

    u = u0
    observe(0, u)
    for n in range(1, steps + 1):
        try:
            u, it = step_with_info(spec, u, tau)
        except NoConvergence as e:
            raise NoConvergence(e.max_iter, e.increment, step=n) from None
        except Diverged as e:
            raise Diverged(e.norm, step=n) from None
        traj.iterations.append(it)
        nrm = l2_norm(u)
        if not np.isfinite(nrm) or nrm > DIVERGENCE_BOUND:
            raise Diverged(nrm, step=n)
        if n % stride == 0:
            observe(n, u)
    traj.final = u
    return traj


# symmetric interpolation

def lagrange_nodes(r: int) -> list[float]:
    """Symmetric interpolation nodes on [0, 1]: {1/2} for r = 0, equispaced otherwise."""
    if r < 0:
        raise ValueError("r must be >= 0")
    if r == 0:
        return [0.5]
    return [j / r for j in range(r + 1)]


def interp_poly(s, tau: float, L: complex, nodes: Sequence[float]):
    """Lagrange interpolant of xi -> e^{i xi L} at the nodes a_j * tau, evaluated at s."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape, complex)
    pts = [a * tau for a in nodes]
    for j, pj in enumerate(pts):
        basis = np.ones(s.shape)
        for m, pm in enumerate(pts):
            if m != j:
                basis = basis * (s - pm) / (pj - pm)
        out = out + np.exp(1j * pj * L) * basis
    return out


def interp_symmetry_defect(L_low_value: complex, tau: float, nodes: Sequence[float] | None = None) -> float:
    """max over 10 sample points of |p(s - tau, -tau) - e^{-i tau L} p(s, tau)|."""
    nodes = lagrange_nodes(1) if nodes is None else list(nodes)
    s = np.linspace(0.0, tau, 10)
    lhs = interp_poly(s - tau, -tau, L_low_value, nodes)
    rhs = np.exp(-1j * tau * L_low_value) * interp_poly(s, tau, L_low_value, nodes)
    return float(np.max(np.abs(lhs - rhs)))


def interp_symmetry_check(L_low_value: complex, tau: float, nodes: Sequence[float] | None = None,
                          tol: float = 1e-12) -> bool:
    return interp_symmetry_defect(L_low_value, tau, nodes) <= tol


# first-order coefficient families b_{a,chi}(tau, z) on the cubic integration tree

def _trivial(sp: Splitting) -> bool:
    return sp.root is not None and not sp.satellites


def family_os18(a, chi, sp, tau, z):
    if _trivial(sp) and a == (0,) and chi == (0, 0, 0):
        return -1j * tau * phi1(z[0])
    return 0j


def family_ab23(a, chi, sp, tau, z):
    if not _trivial(sp):
        return 0j
    if a == (0,) and chi == (0, 0, 0):
        return -0.5j * tau * phi1(z[0] / 2)
    if a == (1,) and chi == (1, 1, 1):
        return -0.5j * tau * np.exp(z[0] / 2) * phi1(z[0] / 2)
    return 0j


def family_mid1(a, chi, sp, tau, z):
    if _trivial(sp):
        return -1j * tau / 16 * phi1(z[0])
    return 0j


def family_mid2(a, chi, sp, tau, z):
    if not _trivial(sp):
        return 0j
    if a == (0,):
        return -1j * tau / 8 * (phi1(z[0]) - phi2(z[0]))
    return -1j * tau / 8 * phi2(z[0])


B_FAMILIES = {
    "NLS_OS18": family_os18,
    "NLS_SYM1": family_ab23,
    "NLS_MID1": family_mid1,
    "NLS_MID2": family_mid2,
}
