import math

import numpy as np
import pytest

from coldscatter.angular import HalfInt, Level, LevelScheme
from coldscatter import medium as md


MHZ = 1.0 / 6.0666  # one MHz in linewidth units


def lambda_scheme():
    """Rb87-like Lambda system: two ground hyperfine levels, single excited
    F=1 level retained."""
    return LevelScheme(
        ground=(Level(2, 0.0), Level(4, 6834.683 * MHZ)),
        excited=(Level(2, 0.0),),
        J=HalfInt.of(1.5), I=HalfInt.of(1.5), gamma=1.0)


def test_two_level_susceptibility_analytic():
    # F0=0 -> F=1: chi = -(3/4) n0 / (Delta + i/2), isotropic
    sch = LevelScheme.simple()
    g = md.GroundState.isotropic(sch, 0, n0=0.02)
    for delta in (0.0, 0.7, -3.1, 12.0):
        chi = md.susceptibility(sch, g, None, delta)
        expect = -(0.75 * 0.02) / (delta + 0.5j) * np.eye(3)
        assert np.max(np.abs(chi - expect)) < 1e-14


def test_resonant_cross_section_two_level():
    sch = LevelScheme.simple()
    g = md.GroundState.isotropic(sch, 0, n0=0.01)
    kl = md.kinetic_lengths(sch, g, None, 0.0)
    assert kl.sigma_ex == pytest.approx(6 * math.pi, rel=1e-10)
    assert kl.albedo == pytest.approx(1.0, rel=1e-8)
    assert kl.l_ex == pytest.approx(1.0 / (0.01 * 6 * math.pi), rel=1e-8)
    assert kl.l_ls == math.inf or abs(1.0 / kl.l_ls) < 1e-8


def test_resonant_cross_section_scaling_rb85():
    # line-center extinction on an isolated transition F0 -> F scales as
    # (2F+1)/(2F0+1) * 2pi relative to the unit wavenumber
    sch = LevelScheme.rb85_d2()
    g = md.GroundState.isotropic(sch, 6, n0=0.001)  # F0=3 populated
    omega = sch.excited_energy(8) - sch.ground_energy(6)  # F=4 line center
    chi = md.susceptibility(sch, g, None, omega)
    sigma = 4 * math.pi * md.transverse_decompose(chi / 0.001, [0, 0, 1]).chi0.imag
    # other excited levels give small off-resonant corrections
    assert sigma == pytest.approx((9.0 / 7.0) * 2 * math.pi, rel=2e-3)


def test_susceptibility_isotropic_for_isotropic_population():
    sch = LevelScheme.rb87_d2()
    g = md.GroundState.isotropic(sch, 4, n0=0.01)
    chi = md.susceptibility(sch, g, None, 1.7)
    assert np.max(np.abs(chi - chi[0, 0] * np.eye(3))) < 1e-14


def test_scattering_quadrature_matches_closed_form():
    # integral of |P_perp A e|^2 over directions equals (8 pi/3)|A e|^2
    sch = LevelScheme.rb85_d2()
    rng = np.random.default_rng(0)
    A = md.scattering_tensor(sch, None, 3, 3, 0.5)
    e = rng.normal(size=3) + 1j * rng.normal(size=3)
    e /= np.linalg.norm(e)
    closed = (8 * math.pi / 3) * np.vdot(A @ e, A @ e).real
    quad = md._sigma_sc_quadrature({0: A}, e, 16)
    assert quad == pytest.approx(closed, rel=1e-12)


def test_optical_theorem_off_resonance():
    # without inelastic channels and dressing, albedo stays 1 at any detuning
    sch = LevelScheme.simple()
    g = md.GroundState.isotropic(sch, 0, n0=0.01)
    for delta in (0.0, 2.0, -5.0):
        kl = md.kinetic_lengths(sch, g, None, delta)
        assert kl.albedo == pytest.approx(1.0, abs=1e-7)


def test_dressed_block_reduces_to_bare():
    sch = LevelScheme.rb87_d2()
    ctrl = md.ControlField(rabi=0.0, omega_c=0.0, twice_F0=4, twice_F_ref=2)
    for tM in (-2, 0, 2):
        idx, Gc = md.dressed_propagator_block(sch, ctrl, 0.3, tM)
        idx2, Gb = md.dressed_propagator_block(sch, None, 0.3, tM)
        assert idx == idx2
        assert np.max(np.abs(Gc - Gb)) < 1e-15


def test_dressed_block_against_direct_inverse():
    sch = LevelScheme.rb87_d2()
    ctrl = md.ControlField(rabi=2.0, omega_c=sch.excited_energy(2)
                           - sch.ground_energy(4),
                           twice_F0=4, twice_F_ref=2, polarization_q=0)
    E = 0.37 + 0.0j
    for tM in (-2, 0, 2):
        idx, G = md.dressed_propagator_block(sch, ctrl, E, tM)
        exc = sch.excited_sublevels()
        gnd = sch.ground_sublevels()
        ig = gnd.index((4, tM))
        v = ctrl.coupling_vector(sch, idx, ig).astype(complex)
        A = np.diag([E - sch.excited_energy(exc[i][0]) + 0.5j for i in idx])
        d2 = E - ctrl.omega_c - sch.ground_energy(4)
        B = A - np.outer(v, v.conj()) / d2
        assert np.max(np.abs(G - np.linalg.inv(B))) < 1e-12


def test_dressed_block_finite_at_two_photon_resonance():
    """At exact two-photon resonance the naive matrix inverse blows up but
    the propagator has a finite limit; it must match the limit from a
    small detuning approach."""
    sch = lambda_scheme()
    ctrl = md.ControlField(rabi=1.0, omega_c=-sch.ground_energy(4),
                           twice_F0=4, twice_F_ref=2, polarization_q=0)
    G0 = md.excited_green(sch, ctrl, 0.0)
    eps = 1e-7
    Geps = md.excited_green(sch, ctrl, eps)
    assert np.all(np.isfinite(G0))
    assert np.max(np.abs(G0 - Geps)) < 1e-5


def test_pole_proximity_raises():
    """With negligible radiative width the dressed block has near-real
    poles at E = +-|V|; hitting one must raise instead of returning
    garbage."""
    sch = lambda_scheme()
    bad = LevelScheme(ground=sch.ground, excited=sch.excited,
                      J=sch.J, I=sch.I, gamma=1e-16)
    ctrl = md.ControlField(rabi=1.0, omega_c=-sch.ground_energy(4),
                           twice_F0=4, twice_F_ref=2, polarization_q=0)
    exc = bad.excited_sublevels()
    idx = [i for i, (_, tm) in enumerate(exc) if tm == 0]
    ig = bad.ground_sublevels().index((4, 0))
    vmag = abs(ctrl.coupling_vector(bad, idx, ig)[0])
    with pytest.raises(md.PoleProximityError):
        md.dressed_propagator_block(bad, ctrl, vmag, 0)


def test_eit_transparency_dip():
    sch = lambda_scheme()
    g = md.GroundState.isotropic(sch, 2, n0=0.01)
    ctrl = md.ControlField(rabi=1.0, omega_c=-sch.ground_energy(4),
                           twice_F0=4, twice_F_ref=2, polarization_q=0)
    chi_d = md.susceptibility(sch, g, ctrl, 0.0)
    chi_b = md.susceptibility(sch, g, None, 0.0)
    im_d = md.transverse_decompose(chi_d, [0, 0, 1]).chi0.imag
    im_b = md.transverse_decompose(chi_b, [0, 0, 1]).chi0.imag
    assert im_b > 0
    assert im_d / im_b < 1e-10


def test_eit_autler_townes_peaks():
    """With a strong control the absorption shows two peaks near +-rabi/2
    and a dip at two-photon resonance."""
    sch = lambda_scheme()
    g = md.GroundState.isotropic(sch, 2, n0=0.01)
    ctrl = md.ControlField(rabi=4.0, omega_c=-sch.ground_energy(4),
                           twice_F0=4, twice_F_ref=2, polarization_q=0)
    deltas = np.linspace(-4, 4, 161)
    absn = []
    for d in deltas:
        chi = md.susceptibility(sch, g, ctrl, d)
        absn.append(md.transverse_decompose(chi, [0, 0, 1]).chi0.imag)
    absn = np.array(absn)
    i0 = np.argmin(np.abs(deltas))
    assert absn[i0] < 1e-6 * absn.max()
    left = absn[deltas < -0.5]
    right = absn[deltas > 0.5]
    assert left.max() > 10 * absn[i0] and right.max() > 10 * absn[i0]


def test_transverse_decompose_isotropic():
    chi = (0.3 + 0.1j) * np.eye(3)
    tc = md.transverse_decompose(chi, [0.2, -0.4, 0.9])
    assert tc.director is None
    assert tc.chi0 == pytest.approx(0.3 + 0.1j, abs=1e-14)
    assert np.max(np.abs(tc.reconstruct() - (0.3 + 0.1j) * np.eye(2))) < 1e-14


def test_transverse_decompose_reconstructs():
    rng = np.random.default_rng(1)
    for _ in range(25):
        chi = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        u = rng.normal(size=3)
        tc = md.transverse_decompose(chi, u)
        R = tc.frame
        expect = (R @ chi @ R.T)[:2, :2]
        assert np.max(np.abs(tc.reconstruct() - expect)) < 1e-12
        # frame is right-handed and orthonormal
        assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        if tc.director is not None:
            assert np.sum(tc.director ** 2) == pytest.approx(1.0 + 0j, abs=1e-10)


def test_local_frame_z_fallback():
    R = md.local_frame([0, 0, 1.0])
    assert np.allclose(R, np.eye(3))
    R = md.local_frame([0, 0, -1.0])
    assert np.allclose(R[2], [0, 0, -1])
    assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12


def test_kinetic_lengths_inverse_additivity():
    sch = LevelScheme.rb85_d2()
    g = md.GroundState.isotropic(sch, 6, n0=0.005)
    omega = sch.excited_energy(8) - sch.ground_energy(6) + 1.0
    kl = md.kinetic_lengths(sch, g, None, omega)
    lhs = 1.0 / kl.l_ex
    rhs = 1.0 / kl.l_sc + (0.0 if kl.l_ls == math.inf else 1.0 / kl.l_ls)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_kinetic_lengths_gain_flag():
    sch = LevelScheme.simple()
    g = md.GroundState.isotropic(sch, 0, n0=0.01)
    kl = md.kinetic_lengths(sch, g, None, 0.0, extra_gain_sigma=2.0)
    assert kl.l_ls < 0
    assert kl.l_g == pytest.approx(-kl.l_ls)
    assert kl.albedo > 1.0


def test_saturation_and_intensities():
    out = md.saturation_and_intensities(1.0, 0.0)
    assert out["s"] == pytest.approx(2.0)
    assert out["I_coh"] == pytest.approx(2.0 / 18.0)
    assert out["I_incoh"] == pytest.approx(4.0 / 18.0)
    # weak-field limit: coherent fraction dominates
    weak = md.saturation_and_intensities(0.01, 0.0)
    assert weak["I_incoh"] / weak["I_coh"] == pytest.approx(weak["s"], rel=1e-12)
    with pytest.raises(ValueError):
        md.saturation_and_intensities(1.0, 0.0, gamma=0.0)


def test_doppler_dephasing_scale():
    assert md.doppler_dephasing(1.0, 0.05) == pytest.approx(0.05)


def test_raman_gain_monotone_in_pump():
    vals = [md.raman_gain_cross_section(v, 1126.0) for v in (5, 10, 20, 40)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
