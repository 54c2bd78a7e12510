"""Protocol-level utilities: anti-correlated two-mode light state and
balanced interferometric detection.

The two-beam state with perfectly anti-correlated photon numbers in
orthogonal polarization modes has Schmidt coefficients

    Lambda_mn = (-1)^n nbar^{(m+n)/2} / (1 + nbar)^{(m+n)/2 + 1}

for mean photon number nbar per mode.  The balanced Mach-Zehnder signal
is linear in the atom-induced phase shift, i_minus = i_mean * xi * n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["PsiMinusState", "schmidt_coefficient", "mz_signal"]


def schmidt_coefficient(n_bar: float, m: int, n: int) -> float:
    """Schmidt coefficient Lambda_mn of the anti-correlated two-mode state.

    Evaluated in log space so large m + n does not underflow prematurely.
    """
    if n_bar < 0:
        raise ValueError("mean photon number must be >= 0")
    if m < 0 or n < 0:
        raise ValueError("photon numbers must be >= 0 integers")
    sign = -1.0 if n % 2 else 1.0
    if n_bar == 0:
        return sign if m == 0 and n == 0 else 0.0
    k = 0.5 * (m + n)
    log_mag = k * math.log(n_bar) - (k + 1.0) * math.log1p(n_bar)
    return sign * math.exp(log_mag)


@dataclass(frozen=True)
class PsiMinusState:
    """Truncated two-mode state with anti-correlated polarizations."""
    n_bar: float
    n_max: int

    def __post_init__(self):
        if self.n_bar < 0:
            raise ValueError("mean photon number must be >= 0")
        if self.n_max < 0:
            raise ValueError("truncation must be >= 0")

    def coefficient(self, m: int, n: int) -> float:
        if m > self.n_max or n > self.n_max:
            return 0.0
        return schmidt_coefficient(self.n_bar, m, n)

    def norm_squared(self) -> float:
        """Sum of Lambda_mn^2 over the retained modes.

        Lambda^2 depends only on s = m + n, so the double sum collapses to
        a weighted single geometric sum.
        """
        if self.n_bar == 0:
            return 1.0
        q = self.n_bar / (1.0 + self.n_bar)
        total = 0.0
        for s in range(2 * self.n_max + 1):
            mult = min(s, self.n_max) - max(0, s - self.n_max) + 1
            total += mult * q ** s
        return total / (1.0 + self.n_bar) ** 2

    def truncation_error_bound(self) -> float:
        """Geometric tail bound on 1 - norm_squared().

        Every dropped term has s = m + n > n_max with multiplicity at most
        s + 1, and sum_{s>N} (s+1) q^s is available in closed form.
        """
        if self.n_bar == 0:
            return 0.0
        q = self.n_bar / (1.0 + self.n_bar)
        N = self.n_max
        tail = q ** (N + 1) * ((N + 2) - (N + 1) * q) / (1.0 - q) ** 2
        return tail / (1.0 + self.n_bar) ** 2

    @classmethod
    def with_norm_tolerance(cls, n_bar: float, tol: float = 1e-9
                            ) -> "PsiMinusState":
        """Smallest truncation whose geometric tail bound is below tol."""
        n_max = 0
        while True:
            state = cls(n_bar, n_max)
            if state.truncation_error_bound() <= tol:
                return state
            n_max += max(1, n_max // 4)


def mz_signal(i_mean: float, xi: float, n_atoms: float) -> float:
    """Balanced Mach-Zehnder difference signal i_minus = i_mean * xi * n.

    The atom-number-induced phase shift is delta_phi = xi * n_atoms with
    the proportionality constant taken as 1; xi bundles the geometric
    factors (sample size, aperture) and is a free input.
    """
    if xi < 0:
        raise ValueError("phase shift per atom must be >= 0")
    if n_atoms < 0:
        raise ValueError("atom number must be >= 0")
    return i_mean * xi * n_atoms
