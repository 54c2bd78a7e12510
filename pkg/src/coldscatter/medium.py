r"""Dressed-medium optics: propagators, susceptibility and scattering tensors.

Builds the excited-state Green's function dressed by a control field
(Autler-Townes blocks), the sample susceptibility tensor, the single-atom
scattering tensor, the Pauli-matrix transverse decomposition used by the
ray propagator, kinetic lengths (extinction / scattering / loss-or-gain),
and the saturation intensity fractions.

All frequencies are in units of gamma, measured in the rotating frame so
that a bare transition m -> n resonates at ``omega = E_n - E_m``.
Densities are atoms per cubed reduced wavelength, and ``k = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .angular import LevelScheme, spherical_unit_vectors

__all__ = [
    "PoleProximityError",
    "ControlField",
    "GroundState",
    "TransverseChi",
    "KineticLengths",
    "dressed_propagator_block",
    "excited_green",
    "susceptibility",
    "scattering_tensor",
    "scattering_tensors",
    "local_frame",
    "transverse_decompose",
    "kinetic_lengths",
    "saturation_and_intensities",
    "doppler_dephasing",
    "raman_gain_cross_section",
]


class PoleProximityError(ArithmeticError):
    """The dressed-propagator linear system sits on (or too near) a pole."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@lru_cache(maxsize=32)
def dipole_q_array(scheme: LevelScheme) -> np.ndarray:
    """d[q_index, n_excited, m_ground] with q ordered (-1, 0, +1)."""
    from .angular import dipole_matrix_element

    exc = scheme.excited_sublevels()
    gnd = scheme.ground_sublevels()
    d = np.zeros((3, len(exc), len(gnd)))
    for iq, q in enumerate((-1, 0, 1)):
        for ie, (tF, tM) in enumerate(exc):
            for ig, (tF0, tM0) in enumerate(gnd):
                if tM == tM0 + 2 * q:
                    d[iq, ie, ig] = dipole_matrix_element(
                        scheme, tF / 2, tM / 2, tF0 / 2, tM0 / 2, q)
    return d


@dataclass(frozen=True)
class ControlField:
    """A quasi-stationary control mode dressing the excited manifold.

    ``rabi`` is the Rabi frequency Omega_c defined with respect to the
    reference transition ``(twice_F0, M0_ref) -> (twice_F_ref, M0_ref+q)``,
    i.e. the matrix element on that transition is Omega_c/2; couplings to
    all other allowed transitions scale with their dipole elements.
    ``omega_c`` is the control frequency in the rotating frame (resonant
    with transition m' -> n when omega_c = E_n - E_m').
    """
    rabi: float
    omega_c: float
    twice_F0: int
    twice_F_ref: int
    polarization_q: int = 0
    twice_M0_ref: int = 0

    def coupling_vector(self, scheme: LevelScheme, excited_idx: list[int],
                        ground_idx: int) -> np.ndarray:
        """V_{n m'} for the listed excited sublevels, units gamma."""
        d = dipole_q_array(scheme)
        iq = self.polarization_q + 1
        gnd = scheme.ground_sublevels()
        exc = scheme.excited_sublevels()
        # reference element
        ref_g = gnd.index((self.twice_F0, self.twice_M0_ref))
        ref_e = exc.index((self.twice_F_ref,
                           self.twice_M0_ref + 2 * self.polarization_q))
        d_ref = d[iq, ref_e, ref_g]
        if d_ref == 0.0:
            raise ValueError("control reference transition is forbidden")
        return (self.rabi / 2.0) * d[iq, np.array(excited_idx), ground_idx] / d_ref


@dataclass
class GroundState:
    """Ground-manifold density matrix and atom density.

    ``rho`` is Hermitian with unit trace over the sublevels enumerated by
    :meth:`LevelScheme.ground_sublevels`; coherences are supported only
    within degenerate Zeeman manifolds.  ``n0`` is the peak density in
    atoms per cubed reduced wavelength; ``density`` optionally maps a
    position to a local density multiplier in [0, 1].
    """
    rho: np.ndarray
    n0: float = 1.0
    density = None  # optional callable position -> relative density

    @classmethod
    def isotropic(cls, scheme: LevelScheme, twice_F0: int | None = None,
                  n0: float = 1.0) -> "GroundState":
        """Equal populations over the Zeeman sublevels of one ground level."""
        gnd = scheme.ground_sublevels()
        if twice_F0 is None:
            twice_F0 = max(tf for tf, _ in gnd)
        sel = [i for i, (tf, _) in enumerate(gnd) if tf == twice_F0]
        rho = np.zeros((len(gnd), len(gnd)))
        for i in sel:
            rho[i, i] = 1.0 / len(sel)
        return cls(rho=rho, n0=n0)


# ----------------------------------------------------------------------------
# Dressed excited-state propagator.
# ----------------------------------------------------------------------------

def _block_green(scheme: LevelScheme, control: ControlField | None,
                 E: complex, excited_idx: list[int]) -> np.ndarray:
    """G over one same-M excited block, rank-1 control self-energy."""
    exc = scheme.excited_sublevels()
    gamma = scheme.gamma
    diag = np.array([E - scheme.excited_energy(exc[i][0]) + 0.5j * gamma
                     for i in excited_idx], dtype=complex)
    a_inv = 1.0 / diag

    if control is None or control.rabi == 0.0:
        return np.diag(a_inv)

    tM = exc[excited_idx[0]][1]
    tM0 = tM - 2 * control.polarization_q
    gnd = scheme.ground_sublevels()
    try:
        ig = gnd.index((control.twice_F0, tM0))
    except ValueError:
        return np.diag(a_inv)  # no coupled ground sublevel: block undressed

    v = control.coupling_vector(scheme, excited_idx, ig).astype(complex)
    if not np.any(v):
        return np.diag(a_inv)

    delta2 = E - control.omega_c - scheme.ground_energy(control.twice_F0)
    # (A - v v^H / delta2)^{-1} by Sherman-Morrison; the closed form below
    # is continuous at the two-photon resonance delta2 = 0.
    u = a_inv * v
    vAv = np.vdot(v, u)  # v^H A^{-1} v
    denom = delta2 - vAv
    scale = max(abs(delta2), abs(vAv), gamma)
    if abs(denom) < 1e-12 * scale:
        raise PoleProximityError(
            "dressed propagator pole at E=%r" % (E,), abs(denom) / scale)
    G = np.diag(a_inv) + np.outer(u, a_inv * v.conj()) / denom
    return G


def dressed_propagator_block(scheme: LevelScheme, control: ControlField | None,
                             E: complex, twice_M: int):
    """Dressed Green's function block for excited sublevels with given M.

    Returns ``(indices, G)`` where ``indices`` are positions into
    :meth:`LevelScheme.excited_sublevels` and ``G`` solves
    ``[(E - E_n + i gamma/2) delta - V V*/(E - omega_c - E_m')] G = 1``.
    """
    exc = scheme.excited_sublevels()
    idx = [i for i, (_, tm) in enumerate(exc) if tm == twice_M]
    if not idx:
        raise ValueError(f"no excited sublevels with M = {twice_M / 2}")
    return idx, _block_green(scheme, control, E, idx)


def excited_green(scheme: LevelScheme, control: ControlField | None,
                  E: complex) -> np.ndarray:
    """Full excited-manifold Green's function (block-diagonal in M)."""
    exc = scheme.excited_sublevels()
    G = np.zeros((len(exc), len(exc)), dtype=complex)
    for tM in sorted({tm for _, tm in exc}):
        idx, g = dressed_propagator_block(scheme, control, E, tM)
        G[np.ix_(idx, idx)] = g
    return G


# ----------------------------------------------------------------------------
# Susceptibility and scattering tensors.
# ----------------------------------------------------------------------------

def susceptibility(scheme: LevelScheme, ground: GroundState,
                   control: ControlField | None, omega: float,
                   position=None) -> np.ndarray:
    """Sample susceptibility chi_{mu mu'} (3x3, Cartesian lab frame).

    chi = -n0(r) sum rho_{m'm} d_mu[m n] d_mu'[n' m'] G_{n n'}(omega + E_m).
    """
    d = dipole_q_array(scheme)
    eq = spherical_unit_vectors()
    gnd = scheme.ground_sublevels()
    n0 = ground.n0
    if position is not None and ground.density is not None:
        n0 = n0 * ground.density(position)

    green_cache: dict[float, np.ndarray] = {}
    chi = np.zeros((3, 3), dtype=complex)
    rows, cols = np.nonzero(ground.rho)
    for mp, m in zip(rows, cols):
        Em = scheme.ground_energy(gnd[m][0])
        G = green_cache.get(Em)
        if G is None:
            G = excited_green(scheme, control, omega + Em)
            green_cache[Em] = G
        # K[q1, q2] = sum_{n n'} d_q1[n, m] G[n, n'] d_q2[n', m']
        K = np.einsum('qn,nm,pm->qp', d[:, :, m], G, d[:, :, mp])
        chi -= n0 * ground.rho[mp, m] * np.einsum(
            'qa,qp,pb->ab', eq.conj(), K, eq)
    return chi


def scattering_tensor(scheme: LevelScheme, control: ControlField | None,
                      m_out: int, m_in: int, omega: float) -> np.ndarray:
    """Single-atom scattering tensor alpha^{(m' m)}_{mu' mu} (3x3 Cartesian).

    ``m_in``/``m_out`` index :meth:`LevelScheme.ground_sublevels`; rows are
    the outgoing Cartesian index mu', columns the incoming mu.
    """
    d = dipole_q_array(scheme)
    eq = spherical_unit_vectors()
    gnd = scheme.ground_sublevels()
    Em = scheme.ground_energy(gnd[m_in][0])
    G = excited_green(scheme, control, omega + Em)
    # K[q', q] = sum_{n' n} d_q'[n', m'] G[n', n] d_q[n, m]
    K = np.einsum('pn,nm,qm->pq', d[:, :, m_out], G, d[:, :, m_in])
    return -np.einsum('pa,pq,qb->ab', eq.conj(), K, eq)


def scattering_tensors(scheme: LevelScheme, control: ControlField | None,
                       m_in: int, omega: float) -> dict[int, np.ndarray]:
    """All outgoing-channel tensors m_in -> m' at input frequency omega."""
    gnd = scheme.ground_sublevels()
    return {mp: scattering_tensor(scheme, control, mp, m_in, omega)
            for mp in range(len(gnd))}


def raman_shift(scheme: LevelScheme, m_out: int, m_in: int) -> float:
    """omega' - omega = E_m - E_m' for the channel m -> m'."""
    gnd = scheme.ground_sublevels()
    return (scheme.ground_energy(gnd[m_in][0])
            - scheme.ground_energy(gnd[m_out][0]))


# ----------------------------------------------------------------------------
# Transverse (Pauli) decomposition for a ray.
# ----------------------------------------------------------------------------

def local_frame(direction: np.ndarray) -> np.ndarray:
    """Right-handed frame (rows x, y, z) with z along the ray.

    The local x-axis is the normalized projection of the lab z-axis onto
    the plane transverse to the ray; when the ray is parallel to lab z the
    frame falls back to the lab x-axis.
    """
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    zproj = np.array([0.0, 0.0, 1.0]) - u[2] * u
    norm = np.linalg.norm(zproj)
    if norm < 1e-12:
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = zproj / norm
    y = np.cross(u, x)
    return np.array([x, y, u])


@dataclass
class TransverseChi:
    """Pauli expansion of the susceptibility projected on a ray."""
    chi0: complex
    chivec: np.ndarray           # (chi_x, chi_y, chi_z) Pauli components
    chi_len: complex             # principal sqrt(chi_x^2+chi_y^2+chi_z^2)
    director: np.ndarray | None  # chivec / chi_len, None when isotropic
    frame: np.ndarray            # rows: local x, y, z axes

    def reconstruct(self) -> np.ndarray:
        """2x2 transverse tensor chi0*I + chivec . sigma."""
        cx, cy, cz = self.chivec
        return np.array([[self.chi0 + cz, cx - 1j * cy],
                         [cx + 1j * cy, self.chi0 - cz]])


def transverse_decompose(chi_lab: np.ndarray, ray_direction,
                         frame: np.ndarray | None = None,
                         isotropy_tol: float = 1e-12) -> TransverseChi:
    """Project a lab-frame 3x3 susceptibility onto a ray's transverse plane.

    Returns the Pauli expansion coefficients, the complex length
    chi = sqrt(chi_x^2 + chi_y^2 + chi_z^2) (principal branch) and the
    director chivec/chi.  A director is reported as ``None`` (isotropic
    branch) when |chivec| is negligible against |chi0|.
    """
    R = local_frame(ray_direction) if frame is None else frame
    chi_loc = R @ np.asarray(chi_lab, dtype=complex) @ R.T
    t = chi_loc[:2, :2]
    chi0 = 0.5 * (t[0, 0] + t[1, 1])
    cz = 0.5 * (t[0, 0] - t[1, 1])
    cx = 0.5 * (t[0, 1] + t[1, 0])
    cy = 0.5j * (t[0, 1] - t[1, 0])
    chivec = np.array([cx, cy, cz])
    chi_len = np.sqrt(cx * cx + cy * cy + cz * cz + 0j)
    scale = max(abs(chi0), 1e-300)
    if np.max(np.abs(chivec)) <= isotropy_tol * scale or chi_len == 0:
        return TransverseChi(chi0, chivec, chi_len, None, R)
    return TransverseChi(chi0, chivec, chi_len, chivec / chi_len, R)


# ----------------------------------------------------------------------------
# Kinetic lengths.
# ----------------------------------------------------------------------------

@dataclass
class KineticLengths:
    sigma_ex: float
    sigma_sc: float
    sigma_tot: float
    l_ex: float
    l_sc: float
    l_ls: float      # +inf when lossless; negative values indicate gain
    l_g: float       # gain length (= -l_ls when l_ls < 0, else +inf)
    albedo: float


def _sigma_sc_quadrature(tensors: dict[int, np.ndarray], e_in: np.ndarray,
                         n_theta: int) -> float:
    """Angular quadrature of sum_{m', e'} |e'* . alpha . e|^2 dOmega."""
    nodes, weights = np.polynomial.legendre.leggauss(n_theta)
    nphi = 2 * n_theta
    phis = 2.0 * math.pi * np.arange(nphi) / nphi
    wphi = 2.0 * math.pi / nphi
    st = np.sqrt(1.0 - nodes ** 2)
    dirs = np.stack([
        np.outer(st, np.cos(phis)).ravel(),
        np.outer(st, np.sin(phis)).ravel(),
        np.repeat(nodes, nphi),
    ], axis=1)
    w = np.repeat(weights, nphi) * wphi
    total = 0.0
    for A in tensors.values():
        v = A @ e_in
        vmag2 = np.vdot(v, v).real
        proj2 = np.abs(dirs @ v) ** 2
        total += float(np.sum(w * (vmag2 - proj2)))
    return total


def kinetic_lengths(scheme: LevelScheme, ground: GroundState,
                    control: ControlField | None, omega: float,
                    direction=(0.0, 0.0, 1.0), polarization=None,
                    n_theta: int = 12, quad_rtol: float = 1e-8,
                    extra_gain_sigma: float = 0.0) -> KineticLengths:
    """Extinction, scattering and loss/gain lengths at frequency omega.

    ``sigma_ex`` comes from the imaginary part of the transverse
    susceptibility per unit density along ``direction``; ``sigma_sc`` from
    angular quadrature of the polarization-resolved differential cross
    section, summed over outgoing channels and averaged over the populated
    ground sublevels.  ``extra_gain_sigma`` adds an externally supplied
    stimulated (gain) cross section to the scattering budget, as used by
    the Raman gain-transport scenario.
    """
    unit_ground = GroundState(rho=ground.rho, n0=1.0)
    chi1 = susceptibility(scheme, unit_ground, control, omega)
    tc = transverse_decompose(chi1, np.asarray(direction, dtype=float))
    sigma_ex = 4.0 * math.pi * tc.chi0.imag

    frame = tc.frame
    if polarization is None:
        e_list = [frame[0].astype(complex), frame[1].astype(complex)]
    else:
        e_list = [np.asarray(polarization, dtype=complex)]

    pops = np.diag(ground.rho).real
    sigma_sc = 0.0
    sigma_sc_coarse = 0.0
    for m, p in enumerate(pops):
        if p <= 0.0:
            continue
        tensors = scattering_tensors(scheme, control, m, omega)
        for e_in in e_list:
            sigma_sc += p / len(e_list) * _sigma_sc_quadrature(
                tensors, e_in, 2 * n_theta)
            sigma_sc_coarse += p / len(e_list) * _sigma_sc_quadrature(
                tensors, e_in, n_theta)
    if sigma_sc > 0 and abs(sigma_sc - sigma_sc_coarse) > quad_rtol * sigma_sc:
        raise ArithmeticError(
            "scattering cross-section quadrature did not converge: "
            f"{sigma_sc_coarse} vs {sigma_sc}")
    sigma_sc += extra_gain_sigma

    n0 = ground.n0
    inv_lex = n0 * sigma_ex
    inv_lsc = n0 * sigma_sc
    inv_lls = inv_lex - inv_lsc
    l_ex = 1.0 / inv_lex if inv_lex > 0 else math.inf
    l_sc = 1.0 / inv_lsc if inv_lsc > 0 else math.inf
    l_ls = 1.0 / inv_lls if inv_lls != 0 else math.inf
    l_g = -l_ls if l_ls < 0 else math.inf
    albedo = sigma_sc / sigma_ex if sigma_ex > 0 else math.inf
    return KineticLengths(sigma_ex=sigma_ex, sigma_sc=sigma_sc,
                          sigma_tot=sigma_ex, l_ex=l_ex, l_sc=l_sc,
                          l_ls=l_ls, l_g=l_g, albedo=albedo)


# ----------------------------------------------------------------------------
# Saturation fractions, Doppler dephasing, effective Raman gain.
# ----------------------------------------------------------------------------

def saturation_and_intensities(rabi: float, detuning: float,
                               gamma: float = 1.0) -> dict[str, float]:
    """Saturation parameter and coherent/incoherent intensity fractions."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    s = (rabi ** 2 / 2.0) / (detuning ** 2 + gamma ** 2 / 4.0)
    return {
        "s": s,
        "I_coh": s / (2.0 * (1.0 + s) ** 2),
        "I_incoh": s ** 2 / (2.0 * (1.0 + s) ** 2),
    }


def doppler_dephasing(k: float, v_bar: float, gamma: float = 1.0) -> float:
    """Order-of-magnitude interference phase spread from residual motion."""
    return k * v_bar / gamma


def raman_gain_cross_section(rabi_bar: float, hpf_splitting: float,
                             detuning: float = 0.0, sigma0: float = 6 * math.pi,
                             gamma: float = 1.0) -> float:
    """Effective stimulated-Raman gain cross section for pumped atoms.

    Order-of-magnitude model: the spontaneous Raman rate of a pumped atom
    scales as Vbar^2 gamma / Delta_hpf^2, and stimulation into an occupied
    mode scales the resonant cross section by that rate over gamma with a
    Lorentzian spectral profile.  The map is monotone in the pump Rabi
    frequency; its absolute normalization is a configured model, not a
    first-principles result.
    """
    lorentz = 1.0 / (1.0 + (2.0 * detuning / gamma) ** 2)
    return sigma0 * (rabi_bar ** 2 / hpf_splitting ** 2) * lorentz
