"""truncated fock-space operators for one canonical pair"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import eval_genlaguerre, gammaln

# ladder operators are built this many levels above the cutoff and projected,
# so that products like x^2 are exact on the kept states
LADDER_PADDING = 4


@dataclass(frozen=True)
class OscillatorFrame:
    """reference oscillator g*q^2/2 + f*phi^2/2 of one pair"""

    flux_coefficient: float
    charge_coefficient: float

    @property
    def omega(self) -> float:
        return math.sqrt(self.flux_coefficient * self.charge_coefficient)

    @property
    def impedance(self) -> float:
        return math.sqrt(self.charge_coefficient / self.flux_coefficient)

    @property
    def flux_scale(self) -> float:
        return math.sqrt(self.impedance / 2.0)

    @property
    def charge_scale(self) -> float:
        return math.sqrt(1.0 / (2.0 * self.impedance))


def annihilation(n: int) -> NDArray[np.float64]:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


def number(n: int) -> NDArray[np.float64]:
    return np.diag(np.arange(n, dtype=float))


def quadrature(
    n: int, pad: int = LADDER_PADDING
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(a + a^dag, (a + a^dag)^2) on the first n levels"""
    a = annihilation(n + pad)
    x = a + a.T
    return x[:n, :n], (x @ x)[:n, :n]


def antisymmetric_quadrature(n: int) -> NDArray[np.float64]:
    """a - a^dag, so that the momentum is -i t (a - a^dag)"""
    a = annihilation(n)
    return a - a.T


def displacement_elements(u: float, n: int) -> NDArray[np.complex128]:
    """<m|exp(i u (a + a^dag))|k> for m, k < n

    the displacement D(iu) is symmetric, its elements are
    (iu)^d sqrt(lo!/hi!) exp(-u^2/2) L_lo^(d)(u^2) with d = |m - k|.
    """
    m = np.arange(n)
    hi = np.maximum.outer(m, m)
    lo = np.minimum.outer(m, m)
    d = hi - lo
    u2 = u * u
    log_prefactor = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - u2 / 2.0
    magnitude = np.exp(log_prefactor) * np.power(u, d) * eval_genlaguerre(lo, d, u2)
    phase = np.power(1j, d)
    return phase * magnitude
