import math

import numpy as np
import pytest

from coldscatter import transport as tr
from coldscatter import medium as md
from coldscatter.angular import HalfInt, Level, LevelScheme


def test_group_velocity_flat():
    assert tr.group_velocity(lambda w: 0.0, 0.0, 1e8) == pytest.approx(1.0)
    assert tr.group_velocity(lambda w: 0.02, 1.3, 1e8) == pytest.approx(1.0)


def test_group_velocity_lorentzian_analytic():
    # chi' = -A Delta/(Delta^2 + 1/4); closed-form slope oracle
    A = 1e-12

    def chi_real(w):
        return -A * w / (w * w + 0.25)

    omega_bar = 1e8
    for w in (0.0, 0.35, -1.2):
        got = tr.group_velocity(chi_real, w, omega_bar)
        slope = -A * (0.25 - w * w) / (w * w + 0.25) ** 2
        expect = 1.0 / (1.0 + 2 * math.pi * omega_bar * slope)
        assert got == pytest.approx(expect, rel=1e-6)


def test_group_velocity_eit_slow_light():
    MHZ = 1.0 / 6.0666
    sch = LevelScheme(
        ground=(Level(2, 0.0), Level(4, 6834.683 * MHZ)),
        excited=(Level(2, 0.0),),
        J=HalfInt.of(1.5), I=HalfInt.of(1.5), gamma=1.0)
    gs = md.GroundState.isotropic(sch, 2, n0=0.01)
    ctrl = md.ControlField(rabi=0.3, omega_c=-sch.ground_energy(4),
                           twice_F0=4, twice_F_ref=2, polarization_q=0)

    def chi_real(w):
        chi = md.susceptibility(sch, gs, ctrl, w)
        return md.transverse_decompose(chi, [0, 0, 1]).chi0.real

    vg = tr.group_velocity(chi_real, 0.0, 1e8, h=1e-5)
    assert 0 < vg < 1e-2


def test_group_velocity_instability_raises():
    rng = np.random.default_rng(0)

    def noisy(w):
        return float(rng.normal()) * 10.0

    with pytest.raises(ArithmeticError):
        tr.group_velocity(noisy, 0.0, 1e8)


def test_diffusion_constant():
    m = tr.DiffusionModel(v_bar=0.5, l0_bar=2.0, cos_theta=0.0)
    D, l_tr = tr.diffusion_constant(m)
    assert D == pytest.approx(2.0 * 0.5 / 3.0)
    assert l_tr == 2.0
    m2 = tr.DiffusionModel(v_bar=1.0, l0_bar=1.0, cos_theta=0.5)
    D2, l_tr2 = tr.diffusion_constant(m2)
    assert D2 == pytest.approx(2.0 / 3.0)
    assert l_tr2 == pytest.approx(2.0)
    with pytest.raises(ValueError):
        tr.diffusion_constant(
            tr.DiffusionModel(v_bar=1, l0_bar=1, cos_theta=1.0))


def test_rayleigh_dipole_anisotropy_zero():
    # <cos theta> of the dipole pattern 1 - |k'.e|^2 vanishes by symmetry
    nodes, w = np.polynomial.legendre.leggauss(64)
    num = 0.0
    den = 0.0
    for ct, wt in zip(nodes, w):
        st = math.sqrt(1 - ct * ct)
        for phi in np.linspace(0, 2 * math.pi, 64, endpoint=False):
            k = np.array([st * math.cos(phi), st * math.sin(phi), ct])
            pat = 1.0 - k[0] ** 2  # e along x, propagation along z
            num += wt * pat * ct
            den += wt * pat
    assert abs(num / den) < 1e-12


def test_sphere_fundamental_mode_absorbing():
    m = tr.DiffusionModel(v_bar=1.0, l0_bar=1.0, r0=30.0)
    D, _ = tr.diffusion_constant(m)
    mode = tr.solve_gain_diffusion_sphere(m)
    expect = -D * math.pi ** 2 / m.r0 ** 2
    assert mode.growth_rate == pytest.approx(expect, rel=5e-3)
    # eigenfunction matches sin(pi r/r0)/r up to normalization
    oracle = np.sin(math.pi * mode.r / m.r0) / mode.r
    ratio = mode.W / oracle
    assert np.max(np.abs(ratio / ratio.mean() - 1)) < 5e-3


def test_sphere_reflecting_conservative():
    m = tr.DiffusionModel(v_bar=1.0, l0_bar=1.0, albedo=1.0, r0=25.0)
    mode = tr.solve_gain_diffusion_sphere(m, boundary="reflecting")
    assert abs(mode.growth_rate) < 1e-4


def test_sphere_mixed_boundary_decays_slower_than_absorbing():
    m = tr.DiffusionModel(v_bar=1.0, l0_bar=1.0, r0=20.0)
    g_abs = tr.solve_gain_diffusion_sphere(m, boundary="absorbing").growth_rate
    g_mix = tr.solve_gain_diffusion_sphere(m, boundary="mixed").growth_rate
    assert g_abs < g_mix < 0


def test_letokhov_threshold_formula():
    assert tr.letokhov_threshold(2.0, 2.0) == pytest.approx(
        2.0 * math.pi / math.sqrt(3.0))
    assert tr.letokhov_threshold(1.0, 1e12) > 1e5
    with pytest.raises(ValueError):
        tr.letokhov_threshold(0.0, 1.0)


def test_letokhov_threshold_monotone():
    vals_g = [tr.letokhov_threshold(1.0, lg) for lg in (1, 2, 5, 10)]
    vals_t = [tr.letokhov_threshold(lt, 3.0) for lt in (1, 2, 5, 10)]
    assert all(b > a for a, b in zip(vals_g, vals_g[1:]))
    assert all(b > a for a, b in zip(vals_t, vals_t[1:]))


def test_sphere_instability_crossing_matches_letokhov():
    l_tr, l_g = 1.0, 12.0
    r_star = tr.letokhov_threshold(l_tr, l_g)

    def rate(r0):
        m = tr.DiffusionModel(v_bar=1.0, l0_bar=l_tr, l_g=l_g, r0=r0)
        return tr.solve_gain_diffusion_sphere(m).growth_rate

    assert rate(0.95 * r_star) < 0
    assert rate(1.05 * r_star) > 0
    # bisect the sign change and compare to the closed-form radius
    lo, hi = 0.9 * r_star, 1.1 * r_star
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if rate(mid) < 0:
            lo = mid
        else:
            hi = mid
    assert 0.5 * (lo + hi) == pytest.approx(r_star, rel=0.02)


def test_eigenvalue_grid_convergence():
    m = tr.DiffusionModel(v_bar=1.0, l0_bar=1.0, r0=15.0)
    g1 = tr.solve_gain_diffusion_sphere(m, n_grid=200).growth_rate
    g2 = tr.solve_gain_diffusion_sphere(m, n_grid=400).growth_rate
    assert abs(g1 - g2) / abs(g2) < 5e-3


def test_continuity_residual_static_uniform():
    m = tr.DiffusionModel(albedo=1.0)
    r = np.linspace(0.5, 10, 40)
    t = np.linspace(0, 1, 5)
    W = np.ones((5, 40))
    J = np.zeros((5, 40))
    res = tr.continuity_residual(W, J, m, r, t)
    assert np.max(np.abs(res)) < 1e-12


def test_continuity_residual_manufactured():
    # W = e^{-t} sin(pi r/R)/r with J chosen from the exact balance
    R = 10.0
    m = tr.DiffusionModel(albedo=0.8, v_bar=1.0, l0_bar=2.0)
    loss = m.v_bar * (1 - m.albedo) / m.l0_bar
    r = np.linspace(0.2, R, 400)
    t = np.linspace(0, 0.5, 200)
    tt, rr = np.meshgrid(t, r, indexing="ij")
    W = np.exp(-tt) * np.sin(math.pi * rr / R) / rr
    # solve (1/r^2)(r^2 J)' = (1 - loss) W for J analytically:
    # integral of r sin(ar) dr = (sin(ar) - ar cos(ar))/a^2
    a = math.pi / R
    anti = (np.sin(a * rr) - a * rr * np.cos(a * rr)) / a ** 2
    J = (1 - loss) * np.exp(-tt) * anti / rr ** 2
    res = tr.continuity_residual(W, J, m, r, t)
    # interior points are second-order; the gradient edges are first-order
    assert np.max(np.abs(res[1:-1, 1:-1])) < 5e-3


def test_continuity_residual_shape_mismatch():
    m = tr.DiffusionModel()
    with pytest.raises(ValueError):
        tr.continuity_residual(np.ones((3, 4)), np.ones((3, 5)), m,
                               np.linspace(1, 2, 4), np.linspace(0, 1, 3))
