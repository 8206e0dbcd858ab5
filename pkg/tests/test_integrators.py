import numpy as np
import pytest

from oracles import mid1_fourier_rhs, os18_fourier
from lowreg.diagnostics import h1_error, kdv_momentum, symmetry_defect
from lowreg.integrators import (Diverged, FixedPointConfig, Method, NoConvergence, SchemeSpec,
                                _kdv_symbols, evolve, fixed_point_solve, implicit_map,
                                interp_poly, interp_symmetry_check, interp_symmetry_defect,
                                lagrange_nodes, step, step_kdv_bs2, step_kdv_strang,
                                step_kdv_sym1, step_nls_bs22, step_nls_mid1, step_nls_os18,
                                step_nls_strang, step_nls_sym1, step_with_info)
from lowreg.spectral import (Grid, SpectralField, kdv_data, mode, rough_data, smooth_data,
                             to_physical, zeros)

NLS_METHODS = [m for m in Method if m.name.startswith("NLS")]
KDV_METHODS = [m for m in Method if m.name.startswith("KDV")]


def spec(m, **kw):
    if m is Method.KDV_STRANG:
        kw.setdefault("micro", 20)
    return SchemeSpec(m, **kw)


def const(g, c):
    return mode(g, 0, c)


def slope(taus, errs):
    return np.polyfit(np.log(taus), np.log(errs), 1)[0]


# scheme specs

def test_spec_fp_iff_implicit():
    for m in Method:
        s = SchemeSpec(m)
        assert (s.fp is not None) == m.implicit
        if not m.implicit:
            with pytest.raises(ValueError):
                SchemeSpec(m, FixedPointConfig())
    assert SchemeSpec(Method.KDV_STRANG).micro == 1000
    with pytest.raises(ValueError):
        SchemeSpec(Method.NLS_OS18, micro=5)
    with pytest.raises(ValueError):
        FixedPointConfig(tol=0)
    with pytest.raises(ValueError):
        FixedPointConfig(max_iter=0)
    assert SchemeSpec.parse("nls_mid2").method is Method.NLS_MID2


@pytest.mark.parametrize("m", list(Method))
def test_zero_maps_to_zero(m):
    g = Grid(16)
    out = step(spec(m), zeros(g), 0.1)
    assert np.all(out.coeffs == 0)


# constant data

def test_constant_data_explicit():
    g, tau, c = Grid(16), 0.1, 0.8 - 0.3j
    a = abs(c) ** 2
    assert step_nls_os18(const(g, c), tau).coeffs[0] == pytest.approx(c * (1 - 1j * tau * a), abs=1e-15)
    want = c * (1 - 1j * tau * a - tau**2 * a**2 / 2)
    assert step_nls_bs22(const(g, c), tau).coeffs[0] == pytest.approx(want, abs=1e-15)
    assert step_nls_strang(const(g, c), tau).coeffs[0] == pytest.approx(c * np.exp(-1j * tau * a), abs=1e-15)


@pytest.mark.parametrize("fn", [step_nls_sym1, step_nls_mid1])
def test_constant_data_implicit(fn):
    g, c = Grid(16), 0.9 + 0.4j
    a = abs(c) ** 2
    taus = [0.08, 0.04, 0.02, 0.01]
    errs = [abs(fn(const(g, c), t).coeffs[0] - c * np.exp(-1j * t * a)) for t in taus]
    assert errs[-1] < 1e-4
    assert slope(taus, errs) > 1.8


# plane waves: u = e^{ix}, exact flow e^{-2it} e^{ix}

@pytest.mark.parametrize("m,order", [(Method.NLS_OS18, 1), (Method.NLS_BS22, 2), (Method.NLS_SYM1, 1),
                                     (Method.NLS_MID1, 1), (Method.NLS_MID2, 2), (Method.NLS_STRANG, 2)])
def test_plane_wave_local_error(m, order):
    g = Grid(16)
    u = mode(g, 1)
    taus = [2.0**-j for j in range(4, 9)]
    errs = [h1_error(step(spec(m), u, t), mode(g, 1, np.exp(-2j * t))) for t in taus]
    # every method here is at least of its nominal local order on a single mode
    assert max(errs) < 1e-1
    if max(errs) > 1e-13:
        assert slope(taus, errs) > order + 1 - 0.2


# symmetry

@pytest.fixture(scope="module")
def h2_data():
    return rough_data(Grid(128), 2, 1)


@pytest.mark.parametrize("m", [Method.NLS_SYM1, Method.NLS_MID1, Method.NLS_MID2, Method.NLS_STRANG])
@pytest.mark.parametrize("tau", [0.02, 0.01])
def test_nls_symmetric(m, tau, h2_data):
    assert symmetry_defect(spec(m), h2_data, tau) <= 1e-11


@pytest.mark.parametrize("tau", [0.02, 0.01])
def test_kdv_sym1_symmetric(tau, h2_data):
    assert symmetry_defect(spec(Method.KDV_SYM1), kdv_data(h2_data), tau) <= 1e-11


def test_strang_symmetric_tight(h2_data):
    assert symmetry_defect(spec(Method.NLS_STRANG), h2_data, 0.02) <= 1e-12


@pytest.mark.parametrize("m", [Method.NLS_OS18, Method.NLS_BS22])
def test_asymmetric_methods_detected(m, h2_data):
    assert symmetry_defect(spec(m), h2_data, 0.02) > 1e-8


@pytest.fixture(scope="module")
def small():
    g = Grid(16)
    rng = np.random.default_rng(5)
    c = (rng.standard_normal(16) + 1j * rng.standard_normal(16)) / np.arange(1, 17)
    v = (rng.standard_normal(16) + 1j * rng.standard_normal(16)) / np.arange(1, 17)
    return g, c, v


def test_mid1_map_matches_fourier_sums(small):
    g, c, v = small
    tau = 0.05
    fmap = implicit_map(spec(Method.NLS_MID1), SpectralField(c, g), tau)
    assert np.max(np.abs(fmap(v) - mid1_fourier_rhs(c, v, tau, g))) < 1e-12


def test_mid1_step_matches_fourier_sums(small):
    g, c, _ = small
    tau = 0.05
    v = c.copy()
    for _ in range(200):
        nxt = mid1_fourier_rhs(c, v, tau, g)
        if np.max(np.abs(nxt - v)) < 1e-15:
            break
        v = nxt
    got = step_nls_mid1(SpectralField(c, g), tau, FixedPointConfig(1e-14, 100)).coeffs
    assert np.max(np.abs(got - v)) < 1e-12


def test_os18_matches_fourier_sums(small):
    g, c, _ = small
    got = step_nls_os18(SpectralField(c, g), 0.07).coeffs
    assert np.max(np.abs(got - os18_fourier(c, 0.07, g))) < 1e-12


# one-step orders on smooth data against a fine reference

def _one_step_errors(m, ref_m, u, taus):
    out = []
    for t in taus:
        n = 256
        ref = evolve(spec(ref_m), u, t / n, n).final
        out.append(h1_error(step(spec(m), u, t), ref))
    return out


def test_kdv_one_step_orders():
    u = kdv_data(smooth_data(Grid(64)))
    # larger steps are still pre-asymptotic for the KdV phase k^3
    taus = [0.005, 0.0025, 0.00125]
    e_sym = _one_step_errors(Method.KDV_SYM1, Method.KDV_BS2, u, taus)
    e_bs = _one_step_errors(Method.KDV_BS2, Method.KDV_BS2, u, taus)
    assert slope(taus, e_sym) > 2 - 0.3
    assert slope(taus, e_bs) > 3 - 0.3


def test_nls_one_step_orders():
    u = smooth_data(Grid(64))
    taus = [0.04, 0.02, 0.01]
    for m, p in [(Method.NLS_OS18, 1), (Method.NLS_MID1, 1), (Method.NLS_MID2, 2), (Method.NLS_BS22, 2)]:
        errs = _one_step_errors(m, Method.NLS_MID2, u, taus)
        assert slope(taus, errs) > p + 1 - 0.3, m


# KdV specifics

@pytest.fixture(scope="module")
def kdv_u():
    return kdv_data(rough_data(Grid(64), 3, 2))


@pytest.mark.parametrize("m", KDV_METHODS)
def test_kdv_realness(m, kdv_u):
    out = step(spec(m), kdv_u, 0.01)
    assert np.max(np.abs(to_physical(out).imag)) < 1e-10


def test_kdv_rejects_complex_data():
    with pytest.raises(ValueError):
        step_kdv_bs2(mode(Grid(16), 1), 0.01)


def test_kdv_sym1_momentum_per_step(kdv_u):
    m0 = kdv_momentum(kdv_u)
    out = step_kdv_sym1(kdv_u, 0.02)
    assert abs(kdv_momentum(out) - m0) / m0 < 1e-10


def test_strang_airy_only(kdv_u):
    tau = 0.03
    out = step_kdv_strang(kdv_u, tau, micro=7, coef=0.0)
    k = kdv_u.grid.k_odd.astype(float)
    want = np.exp(1j * tau * k**3) * kdv_u.coeffs
    assert np.max(np.abs(out.coeffs - want)) < 1e-12


def test_strang_momentum_drift_small():
    u = kdv_data(smooth_data(Grid(64)))
    tr = evolve(spec(Method.KDV_STRANG, micro=20), u, 0.02, 100, [kdv_momentum], 100)
    m0, m1 = tr.records[0][0], tr.records[-1][0]
    assert abs(m1 - m0) / m0 < 1e-12


def test_strang_diverges_loudly():
    u = kdv_data(rough_data(Grid(64), 2, 1)) * 200.0
    with pytest.raises(Diverged):
        step_kdv_strang(u, 0.5, micro=1)


def test_psi_filter_bound():
    for tau in (0.001, 0.02, 0.5):
        s = _kdv_symbols(128, tau)
        k2 = Grid(128).k.astype(float) ** 2
        assert s["psi"][0] == 1
        assert np.all(np.abs(tau * s["psi"] * k2) <= 1 + 1e-15)


# fixed point

def test_fixed_point_identity():
    g = Grid(8)
    guess = mode(g, 2, 0.3)
    res = fixed_point_solve(lambda f: f, guess)
    assert res.iterations == 1
    assert np.array_equal(res.value.coeffs, guess.coeffs)


def test_fixed_point_scalar_contraction():
    g = Grid(8)
    res = fixed_point_solve(lambda f: f * 0.5 + const(g, 1.0), zeros(g))
    assert res.value.coeffs[0] == pytest.approx(2.0, abs=1e-11)
    assert res.increment < 1e-12


def test_fixed_point_no_convergence():
    g = Grid(8)
    with pytest.raises(NoConvergence) as e:
        fixed_point_solve(lambda f: f * 2.0 + const(g, 1.0), zeros(g), FixedPointConfig(1e-12, 5))
    assert e.value.max_iter == 5 and e.value.increment > 1


def test_implicit_step_reports_iterations(h2_data):
    _, it = step_with_info(spec(Method.NLS_MID2), h2_data, 0.01)
    assert 1 <= it <= 10
    with pytest.raises(NoConvergence):
        step(spec(Method.NLS_MID1, fp=FixedPointConfig(1e-12, 2)), h2_data, 0.01)


def test_implicit_map_rejects_explicit(h2_data):
    with pytest.raises(ValueError):
        implicit_map(spec(Method.NLS_OS18), h2_data, 0.01)


# interpolation

def test_lagrange_nodes():
    assert lagrange_nodes(0) == [0.5]
    assert lagrange_nodes(1) == [0.0, 1.0]
    assert lagrange_nodes(2) == [0.0, 0.5, 1.0]


def test_two_point_interpolant_closed_form():
    tau, L = 0.3, 4.2
    s = np.linspace(0, tau, 7)
    want = 1 + (s / tau) * (np.exp(1j * tau * L) - 1)
    assert np.allclose(interp_poly(s, tau, L, [0.0, 1.0]), want, atol=1e-15)


@pytest.mark.parametrize("L", [0.0, 1.0, -7.5, 40.0])
def test_interp_symmetry(L):
    assert interp_symmetry_check(L, 0.1, [0.0, 1.0])
    assert interp_symmetry_check(L, 0.1, [0.0, 0.5, 1.0])
    if L == 0:
        assert interp_symmetry_defect(L, 0.1, [0.0, 0.7]) < 1e-15
    else:
        assert not interp_symmetry_check(L, 0.1, [0.0, 0.7])


# evolve

def test_evolve_single_step_and_stride(h2_data):
    s = spec(Method.NLS_OS18)
    tr = evolve(s, h2_data, 0.01, 1)
    assert np.array_equal(tr.final.coeffs, step(s, h2_data, 0.01).coeffs)
    tr = evolve(s, h2_data, 0.01, 25, [lambda f: 1.0], stride=10)
    assert tr.steps == [0, 10, 20] and len(tr.records) == 25 // 10 + 1
    with pytest.raises(ValueError):
        evolve(s, h2_data, 0.01, 0)


def test_two_half_steps_consistent():
    u = smooth_data(Grid(64))
    s = spec(Method.NLS_OS18)
    taus = [0.04, 0.02, 0.01]
    errs = [h1_error(evolve(s, u, t / 2, 2).final, step(s, u, t)) for t in taus]
    assert slope(taus, errs) > 1.8


def test_evolve_divergence_guard():
    u = rough_data(Grid(32), 2, 1) * 1e4
    with pytest.raises((Diverged, NoConvergence)) as e:
        evolve(spec(Method.NLS_OS18), u, 0.5, 50)
    assert e.value.step is not None
