r"""Angular-momentum algebra and atomic matrix elements.

Clebsch-Gordan coefficients, Wigner 6j symbols, rank-1 Wigner rotation
matrices, spherical-basis conversions, electric-dipole and magnetic-moment
matrix elements for alkali hyperfine structure, and the spontaneous-emission
repopulation matrix.

Conventions
-----------
* Condon-Shortley phases throughout.
* Half-integer quantum numbers are stored as doubled integers (``2j``) so
  triangle and projection selection rules are exact integer arithmetic.
* Units: the natural decay rate ``gamma = 1`` and ``k0 = omega0/c = 1``
  (lengths in reduced wavelengths).  Dipole matrix elements are normalized
  so that the total spontaneous decay rate of every excited sublevel is
  ``gamma``; magnetic moments are in units of the Bohr magneton.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HalfInt",
    "Level",
    "LevelScheme",
    "clebsch_gordan",
    "wigner_6j",
    "wigner_rotation_rank1",
    "to_spherical",
    "from_spherical",
    "spherical_unit_vectors",
    "dipole_matrix_element",
    "magnetic_matrix_element",
    "repopulation_matrix",
]


class HalfInt:
    """An exact integer or half-integer angular momentum value.

    Stores ``2j`` as an integer, so equality, triangle rules and projection
    parity checks never suffer floating-point round-off.
    """

    __slots__ = ("twice",)

    def __init__(self, twice: int):
        self.twice = int(twice)

    @classmethod
    def of(cls, value) -> "HalfInt":
        """Coerce an int, float (multiple of 1/2) or HalfInt."""
        if isinstance(value, HalfInt):
            return value
        doubled = 2 * value
        rounded = round(doubled)
        if abs(doubled - rounded) > 1e-9:
            raise ValueError(f"{value!r} is not an integer or half-integer")
        return cls(rounded)

    @property
    def value(self) -> float:
        return self.twice / 2.0

    def __float__(self) -> float:
        return self.twice / 2.0

    def __eq__(self, other) -> bool:
        try:
            return self.twice == HalfInt.of(other).twice
        except (ValueError, TypeError):
            return NotImplemented

    def __hash__(self) -> int:
        return hash(("HalfInt", self.twice))

    def __repr__(self) -> str:
        if self.twice % 2 == 0:
            return f"HalfInt({self.twice // 2})"
        return f"HalfInt({self.twice}/2)"


def _twice(x) -> int:
    """Doubled-integer representation of an int/float/HalfInt momentum."""
    return HalfInt.of(x).twice


# ----------------------------------------------------------------------------
# Racah closed-form sums with log-factorial stabilization and a memo cache.
# ----------------------------------------------------------------------------

_LGF_MAX = 512
_LGF = [math.lgamma(n + 1) for n in range(_LGF_MAX)]


def _lnfac(n: int) -> float:
    if n < 0:
        raise ValueError("factorial of negative integer")
    if n < _LGF_MAX:
        return _LGF[n]
    return math.lgamma(n + 1)


def _triangle_ok(ta: int, tb: int, tc: int) -> bool:
    """Triangle rule for doubled momenta, including integer-sum parity."""
    if (ta + tb + tc) % 2 != 0:
        return False
    return abs(ta - tb) <= tc <= ta + tb


def _ln_delta(ta: int, tb: int, tc: int) -> float:
    """Log of the Racah triangle coefficient Delta(a,b,c)."""
    return 0.5 * (
        _lnfac((ta + tb - tc) // 2)
        + _lnfac((ta - tb + tc) // 2)
        + _lnfac((-ta + tb + tc) // 2)
        - _lnfac((ta + tb + tc) // 2 + 1)
    )


_cg_cache: dict[tuple, float] = {}
_sixj_cache: dict[tuple, float] = {}
_cache_lock = threading.Lock()


def _cg_doubled(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> float:
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tJ:
        return 0.0
    if (tj1 + tm1) % 2 != 0 or (tj2 + tm2) % 2 != 0 or (tJ + tM) % 2 != 0:
        raise ValueError("projection and momentum differ by a non-integer")
    if tM != tm1 + tm2 or not _triangle_ok(tj1, tj2, tJ):
        return 0.0

    key = (tj1, tm1, tj2, tm2, tJ)
    with _cache_lock:
        cached = _cg_cache.get(key)
    if cached is not None:
        return cached

    # Racah's closed form for <j1 m1 j2 m2 | J M>.
    ln_pref = 0.5 * (
        math.log(tJ + 1.0)
        + _lnfac((tj1 + tm1) // 2)
        + _lnfac((tj1 - tm1) // 2)
        + _lnfac((tj2 + tm2) // 2)
        + _lnfac((tj2 - tm2) // 2)
        + _lnfac((tJ + tM) // 2)
        + _lnfac((tJ - tM) // 2)
    ) + _ln_delta(tj1, tj2, tJ)

    k_min = max(0, -(tJ - tj2 + tm1) // 2, -(tJ - tj1 - tm2) // 2)
    k_max = min((tj1 + tj2 - tJ) // 2, (tj1 - tm1) // 2, (tj2 + tm2) // 2)

    total = 0.0
    for k in range(k_min, k_max + 1):
        ln_den = (
            _lnfac(k)
            + _lnfac((tj1 + tj2 - tJ) // 2 - k)
            + _lnfac((tj1 - tm1) // 2 - k)
            + _lnfac((tj2 + tm2) // 2 - k)
            + _lnfac((tJ - tj2 + tm1) // 2 + k)
            + _lnfac((tJ - tj1 - tm2) // 2 + k)
        )
        term = math.exp(ln_pref - ln_den)
        total += -term if k % 2 else term

    with _cache_lock:
        _cg_cache[key] = total
    return total


def _sixj_doubled(ta: int, tb: int, tc: int, td: int, te: int, tf: int) -> float:
    triads = ((ta, tb, tc), (ta, te, tf), (td, tb, tf), (td, te, tc))
    for tri in triads:
        if not _triangle_ok(*tri):
            return 0.0

    key = (ta, tb, tc, td, te, tf)
    with _cache_lock:
        cached = _sixj_cache.get(key)
    if cached is not None:
        return cached

    ln_pref = (
        _ln_delta(ta, tb, tc)
        + _ln_delta(ta, te, tf)
        + _ln_delta(td, tb, tf)
        + _ln_delta(td, te, tc)
    )
    s_abc = (ta + tb + tc) // 2
    s_aef = (ta + te + tf) // 2
    s_dbf = (td + tb + tf) // 2
    s_dec = (td + te + tc) // 2
    q_abde = (ta + tb + td + te) // 2
    q_bcef = (tb + tc + te + tf) // 2
    q_acdf = (ta + tc + td + tf) // 2

    t_min = max(s_abc, s_aef, s_dbf, s_dec)
    t_max = min(q_abde, q_bcef, q_acdf)

    total = 0.0
    for t in range(t_min, t_max + 1):
        ln_den = (
            _lnfac(t - s_abc)
            + _lnfac(t - s_aef)
            + _lnfac(t - s_dbf)
            + _lnfac(t - s_dec)
            + _lnfac(q_abde - t)
            + _lnfac(q_bcef - t)
            + _lnfac(q_acdf - t)
        )
        term = math.exp(ln_pref + _lnfac(t + 1) - ln_den)
        total += -term if t % 2 else term

    with _cache_lock:
        _sixj_cache[key] = total
    return total


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``C^{J M}_{j1 m1, j2 m2}``.

    Returns zero when ``M != m1 + m2`` or the triangle rule fails.  Raises
    ``ValueError`` when a projection is not integer-compatible with its
    momentum (``2m`` and ``2j`` of different parity).
    """
    return _cg_doubled(_twice(j1), _twice(m1), _twice(j2), _twice(m2),
                       _twice(J), _twice(M))


def wigner_6j(a, b, c, d, e, f) -> float:
    """Wigner 6j symbol ``{a b c; d e f}``; invalid triads give 0."""
    return _sixj_doubled(_twice(a), _twice(b), _twice(c),
                         _twice(d), _twice(e), _twice(f))


# ----------------------------------------------------------------------------
# Rank-1 rotations and the spherical basis.
# ----------------------------------------------------------------------------

def wigner_rotation_rank1(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Wigner rotation matrix ``D^1_{q'q}(alpha, beta, gamma)``.

    z-y-z Euler angles; rows and columns are ordered q = (-1, 0, +1).
    ``D^1_{q'q} = exp(-i q' alpha) d^1_{q'q}(beta) exp(-i q gamma)``.
    """
    c, s = math.cos(beta), math.sin(beta)
    r2 = math.sqrt(2.0)
    # Reduced d^1 matrix with indices in (+1, 0, -1) order (standard table).
    d_desc = np.array([
        [(1 + c) / 2, -s / r2, (1 - c) / 2],
        [s / r2, c, -s / r2],
        [(1 - c) / 2, s / r2, (1 + c) / 2],
    ])
    d = d_desc[::-1, ::-1]  # reorder to ascending q = (-1, 0, +1)
    q = np.array([-1.0, 0.0, 1.0])
    phase_rows = np.exp(-1j * q * alpha)
    phase_cols = np.exp(-1j * q * gamma)
    return phase_rows[:, None] * d * phase_cols[None, :]


def spherical_unit_vectors() -> np.ndarray:
    """Rows are the spherical unit vectors e_q, q = (-1, 0, +1), Cartesian."""
    r2 = math.sqrt(2.0)
    return np.array([
        [1 / r2, -1j / r2, 0],     # e_{-1} = (ex - i ey)/sqrt(2)
        [0, 0, 1],                 # e_0 = ez
        [-1 / r2, -1j / r2, 0],    # e_{+1} = -(ex + i ey)/sqrt(2)
    ], dtype=complex)


_EQ = spherical_unit_vectors()


def to_spherical(v: np.ndarray) -> np.ndarray:
    """Spherical components v_q = e_q^dagger . v, ordered q = (-1, 0, +1)."""
    return _EQ.conj() @ np.asarray(v, dtype=complex)


def from_spherical(vq: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_spherical`: v = sum_q v_q e_q."""
    return np.asarray(vq, dtype=complex) @ _EQ


# ----------------------------------------------------------------------------
# Level schemes.
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Level:
    """One hyperfine level: doubled total momentum and energy in gamma units."""
    twice_F: int
    energy: float = 0.0

    @property
    def F(self) -> float:
        return self.twice_F / 2.0

    def sublevels(self):
        """Doubled projections -2F, ..., +2F in steps of 2."""
        return range(-self.twice_F, self.twice_F + 1, 2)


@dataclass(frozen=True)
class LevelScheme:
    """Hyperfine structure of one optical transition J0=S -> J.

    Ground levels F0 couple S=1/2 with the nuclear spin I; excited levels F
    couple J with I.  Energies are in gamma units: excited energies are
    offsets from the reference optical frequency (detuning convention), and
    ground energies are hyperfine offsets (<= 0 for the lower level).  When
    ``reduced_elements`` is given (keyed by ``(twice_F, twice_F0)``) it
    overrides the 6j factorization; this supports bare model transitions
    such as F0=0 -> F=1 without a physical (J, I) pair.
    """
    ground: tuple[Level, ...]
    excited: tuple[Level, ...]
    J: HalfInt = field(default_factory=lambda: HalfInt(3))
    I: HalfInt = field(default_factory=lambda: HalfInt(0))
    S: HalfInt = field(default_factory=lambda: HalfInt(1))
    gamma: float = 1.0
    reduced_elements: tuple[tuple[tuple[int, int], float], ...] | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.reduced_elements is None:
            tJ, tS, tI = self.J.twice, self.S.twice, self.I.twice
            for lvl in self.ground:
                if not _triangle_ok(tS, tI, lvl.twice_F):
                    raise ValueError(f"ground F0={lvl.F} violates S,I coupling")
            for lvl in self.excited:
                if not _triangle_ok(tJ, tI, lvl.twice_F):
                    raise ValueError(f"excited F={lvl.F} violates J,I coupling")

    # -- constructors ------------------------------------------------------

    @classmethod
    def simple(cls, F0: float = 0, F: float = 1, gamma: float = 1.0,
               ground_energy: float = 0.0, excited_energy: float = 0.0
               ) -> "LevelScheme":
        """Single closed transition F0 -> F with decay rate gamma."""
        tF, tF0 = _twice(F), _twice(F0)
        red = math.sqrt(0.75 * (tF + 1) * gamma)
        return cls(
            ground=(Level(tF0, ground_energy),),
            excited=(Level(tF, excited_energy),),
            reduced_elements=(((tF, tF0), red),),
            gamma=gamma,
        )

    @classmethod
    def alkali_d2(cls, I, ground_levels, excited_levels, gamma: float = 1.0
                  ) -> "LevelScheme":
        """D2-line scheme (J=3/2) from explicit level lists of (F, energy)."""
        return cls(
            ground=tuple(Level(_twice(F), E) for F, E in ground_levels),
            excited=tuple(Level(_twice(F), E) for F, E in excited_levels),
            J=HalfInt(3), I=HalfInt.of(I), gamma=gamma,
        )

    @classmethod
    def rb85_d2(cls) -> "LevelScheme":
        """85Rb D2 line, I=5/2; splittings in units of gamma = 6.0666 MHz.

        Excited energies are referenced to F=4, ground energies to F0=3.
        """
        g = 6.0666
        return cls.alkali_d2(
            I=2.5,
            ground_levels=[(3, 0.0), (2, -3035.732 / g)],
            excited_levels=[
                (4, 0.0),
                (3, -120.640 / g),
                (2, -(120.640 + 63.401) / g),
                (1, -(120.640 + 63.401 + 29.372) / g),
            ],
        )

    @classmethod
    def rb87_d2(cls) -> "LevelScheme":
        """87Rb D2 line, I=3/2; energies referenced to F=3 / F0=2."""
        g = 6.0666
        return cls.alkali_d2(
            I=1.5,
            ground_levels=[(2, 0.0), (1, -6834.683 / g)],
            excited_levels=[
                (3, 0.0),
                (2, -266.650 / g),
                (1, -(266.650 + 156.947) / g),
                (0, -(266.650 + 156.947 + 72.218) / g),
            ],
        )

    # -- sublevel bookkeeping ---------------------------------------------

    def ground_sublevels(self) -> list[tuple[int, int]]:
        """All (twice_F0, twice_M0) pairs in declaration order."""
        return [(lvl.twice_F, tm) for lvl in self.ground for tm in lvl.sublevels()]

    def excited_sublevels(self) -> list[tuple[int, int]]:
        return [(lvl.twice_F, tm) for lvl in self.excited for tm in lvl.sublevels()]

    def ground_energy(self, twice_F0: int) -> float:
        for lvl in self.ground:
            if lvl.twice_F == twice_F0:
                return lvl.energy
        raise KeyError(f"no ground level with F0={twice_F0 / 2}")

    def excited_energy(self, twice_F: int) -> float:
        for lvl in self.excited:
            if lvl.twice_F == twice_F:
                return lvl.energy
        raise KeyError(f"no excited level with F={twice_F / 2}")

    # -- reduced matrix elements ------------------------------------------

    def reduced_dipole(self, twice_F: int, twice_F0: int) -> float:
        """<F || d || F0> normalized so every excited sublevel decays at gamma."""
        if self.reduced_elements is not None:
            for (tf, tf0), red in self.reduced_elements:
                if tf == twice_F and tf0 == twice_F0:
                    return red
            return 0.0
        tJ, tS, tI = self.J.twice, self.S.twice, self.I.twice
        if not _triangle_ok(twice_F0, 2, twice_F):
            return 0.0
        # <J||d||S> fixed by the decay-rate sum rule: |<J||d||S>|^2 = 3(2J+1)/4.
        red_JS = math.sqrt(0.75 * (tJ + 1) * self.gamma)
        exponent = (twice_F0 + tJ + tI) // 2 - 1
        sign = -1.0 if exponent % 2 else 1.0
        six = _sixj_doubled(tS, tI, twice_F0, twice_F, 2, tJ)
        return (sign * math.sqrt((twice_F + 1.0) * (twice_F0 + 1.0)) * six
                * red_JS)

    def reduced_magnetic(self, twice_F0p: int, twice_F0: int) -> float:
        """<F0' || m || F0> within the ground manifold, in Bohr magnetons."""
        tS, tI = self.S.twice, self.I.twice
        if not _triangle_ok(twice_F0, 2, twice_F0p):
            return 0.0
        exponent = (twice_F0 + tS + tI) // 2 - 1
        sign = -1.0 if exponent % 2 else 1.0
        six = _sixj_doubled(tS, tI, twice_F0, twice_F0p, 2, tS)
        return (sign * math.sqrt((twice_F0p + 1.0) * (twice_F0 + 1.0)) * six
                * math.sqrt(6.0))


def dipole_matrix_element(scheme: LevelScheme, F, M, F0, M0, q) -> float:
    """<F, M | d_q | F0, M0> via the Wigner-Eckart theorem.

    Zero unless ``M = M0 + q`` and ``|F - F0| <= 1``.  Units: sqrt(hbar
    gamma) (c/omega0)^(3/2), i.e. dimensionless in the gamma = k0 = 1 system.
    """
    tF, tM = _twice(F), _twice(M)
    tF0, tM0 = _twice(F0), _twice(M0)
    tq = _twice(q)
    if tq not in (-2, 0, 2):
        raise ValueError("q must be -1, 0 or +1")
    if tM != tM0 + tq:
        return 0.0
    red = scheme.reduced_dipole(tF, tF0)
    if red == 0.0:
        return 0.0
    cg = _cg_doubled(tF0, tM0, 2, tq, tF, tM)
    return red / math.sqrt(tF + 1.0) * cg


def magnetic_matrix_element(scheme: LevelScheme, F0p, M0p, F0, M0, q) -> float:
    """<F0', M0' | m_q | F0, M0> within the ground manifold (Bohr magnetons)."""
    tF0p, tM0p = _twice(F0p), _twice(M0p)
    tF0, tM0 = _twice(F0), _twice(M0)
    tq = _twice(q)
    if tq not in (-2, 0, 2):
        raise ValueError("q must be -1, 0 or +1")
    if tM0p != tM0 + tq:
        return 0.0
    red = scheme.reduced_magnetic(tF0p, tF0)
    if red == 0.0:
        return 0.0
    cg = _cg_doubled(tF0, tM0, 2, tq, tF0p, tM0p)
    return red / math.sqrt(tF0p + 1.0) * cg


def repopulation_matrix(scheme: LevelScheme, rho_excited: np.ndarray) -> np.ndarray:
    """Ground-state feeding rate from spontaneous decay of ``rho_excited``.

    ``rho_excited`` is indexed by :meth:`LevelScheme.excited_sublevels`; the
    result is indexed by :meth:`LevelScheme.ground_sublevels`.  The trace of
    the output equals ``gamma * Tr(rho_excited)``.
    """
    exc = scheme.excited_sublevels()
    gnd = scheme.ground_sublevels()
    rho = np.asarray(rho_excited, dtype=complex)
    if rho.shape != (len(exc), len(exc)):
        raise ValueError(
            f"rho_excited has shape {rho.shape}, expected {(len(exc), len(exc))}")

    # feeding rate: (4/3) sum_q d_q[e, m0'] rho[e, e'] d_q[e', m0]; the
    # normalization of the reduced elements makes the trace gamma-preserving
    d = np.zeros((3, len(exc), len(gnd)))
    for iq, q in enumerate((-1, 0, 1)):
        for ie, (tF, tM) in enumerate(exc):
            for ig, (tF0, tM0) in enumerate(gnd):
                if tM == tM0 + 2 * q:
                    d[iq, ie, ig] = dipole_matrix_element(
                        scheme, tF / 2, tM / 2, tF0 / 2, tM0 / 2, q)
    out = (4.0 / 3.0) * np.einsum('qea,ef,qfb->ab', d, rho, d)
    return out
