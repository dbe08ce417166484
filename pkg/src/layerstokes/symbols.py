"""Per-mode scalar symbols for the layer resolvent problem.

Every function here broadcasts over numpy arrays, so a whole spectrum of
tangential modes can be evaluated at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# |B - A| x below this uses the Taylor form of the divided difference.
SERIES_SWITCH = 1e-5
# |B - A| x above this uses the plain quotient (no cancellation left).
QUOTIENT_SWITCH = 1.0
_SERIES_TERMS = 9


class OffSectorError(ValueError):
    """Raised when a resolvent parameter lies outside the admissible sector."""


@dataclass(frozen=True)
class ResolventParameter:
    lam: complex
    epsilon: float = math.pi / 4
    gamma0: float = 0.0

    @property
    def gamma(self) -> float:
        return complex(self.lam).real

    @property
    def tau(self) -> float:
        return complex(self.lam).imag


@dataclass(frozen=True)
class LayerConfig:
    mu: float = 1.0
    delta: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")


@dataclass(frozen=True)
class ModeSymbols:
    """Symbols of one mode, or of a broadcastable batch of modes.

    ``BmA`` holds B - A computed without cancellation, since the confluent
    regime B ~ A is where the divided difference needs care.
    """

    A: np.ndarray
    B: np.ndarray
    BmA: np.ndarray
    a: np.ndarray
    b: np.ndarray
    D0: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    M_delta: np.ndarray
    lam: complex | np.ndarray
    mu: float
    delta: float
    xi_prime: np.ndarray | None = None

    def __getitem__(self, idx) -> "ModeSymbols":
        xi = None if self.xi_prime is None else self.xi_prime[idx]
        return ModeSymbols(
            self.A[idx], self.B[idx], self.BmA[idx], self.a[idx], self.b[idx],
            self.D0[idx], self.D1[idx], self.D2[idx], self.D3[idx],
            self.M_delta[idx], _sub(self.lam, lambda v: v[idx]), self.mu, self.delta, xi,
        )

    def expand(self, axis: int = -1) -> "ModeSymbols":
        """Append a trailing axis so the batch broadcasts against sample points."""
        f = lambda v: np.expand_dims(v, axis)
        xi = self.xi_prime
        return ModeSymbols(
            f(self.A), f(self.B), f(self.BmA), f(self.a), f(self.b),
            f(self.D0), f(self.D1), f(self.D2), f(self.D3), f(self.M_delta),
            _sub(self.lam, f), self.mu, self.delta, xi,
        )


def _sub(lam, op):
    return op(lam) if isinstance(lam, np.ndarray) and lam.ndim > 0 else lam


def cexpm1(z):
    """exp(z) - 1 for complex z without loss of digits near z = 0."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


def sector_check(p: ResolventParameter) -> bool:
    lam = complex(p.lam)
    if lam == 0:
        return False
    return abs(np.angle(lam)) <= math.pi - p.epsilon and abs(lam) > p.gamma0


def require_sector(p: ResolventParameter) -> None:
    if not sector_check(p):
        raise OffSectorError(
            f"off-sector: lambda={complex(p.lam)} not in sector "
            f"(epsilon={p.epsilon}, gamma0={p.gamma0})"
        )


def symbols_from_A(A, lam, mu: float = 1.0, delta: float = 1.0, xi_prime=None,
                   allow_zero: bool = False) -> ModeSymbols:
    """Symbols for tangential wavenumber modulus ``A`` (array or scalar).

    ``allow_zero`` admits lambda = 0 (B = A); verification scans only.
    """
    lam_arr = np.asarray(lam, dtype=complex)
    if np.any((lam_arr.imag == 0) & (lam_arr.real < 0)):
        raise OffSectorError("off-sector: lambda on the negative real axis")
    if np.any(lam_arr == 0) and not allow_zero:
        raise OffSectorError("off-sector: lambda = 0 is reserved for scans")
    lam = complex(lam_arr) if lam_arr.ndim == 0 else lam_arr
    A = np.asarray(A, dtype=float)
    s = lam_arr / mu
    B = np.sqrt(s + A * A + 0j)
    den = np.where(B + A == 0, 1.0, B + A)
    BmA = np.where(lam_arr == 0, 0.0, s / den) + 0j
    a = np.exp(-A * delta)
    b = np.exp(-B * delta)
    A2, A3, B2, B3 = A * A, A ** 3, B * B, B ** 3
    D0 = B2 + A2
    D1 = -B3 + A * B2 + 3 * A2 * B + A3
    D2 = B3 - A * B2 + 3 * A2 * B + A3
    D3 = B3 + A * B2 + 3 * A2 * B - A3
    Md = _mcal(delta, A, B, BmA)
    return ModeSymbols(A, B, BmA, a, b, D0, D1, D2, D3, Md, lam, mu, delta,
                       None if xi_prime is None else np.asarray(xi_prime, float))


def compute_mode_symbols(xi_prime, p: ResolventParameter, cfg: LayerConfig,
                         allow_zero: bool = False) -> ModeSymbols:
    """Symbols for wavenumber vector(s) ``xi_prime`` of shape (..., N-1)."""
    xi = np.asarray(xi_prime, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    A = np.sqrt(np.sum(xi * xi, axis=-1))
    return symbols_from_A(A, p.lam, cfg.mu, cfg.delta, xi_prime=xi,
                          allow_zero=allow_zero)


def _phi_series(z):
    # (1 - e^{-z})/z = sum_k (-z)^k/(k+1)!
    out = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(_SERIES_TERMS):
        out = out + term
        term = term * (-z) / (k + 2)
    return out


def _phi_expm1(z):
    zs = np.where(z == 0, 1.0, z)
    return np.where(z == 0, 1.0, -cexpm1(-zs) / zs)


def mcal_series(x, A, B, BmA):
    """Divided difference via the Taylor expansion in z = (B - A) x."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(BmA * x, dtype=complex)
    return -x * np.exp(-A * x) * _phi_series(z)


def mcal_direct(x, A, B, BmA):
    """Divided difference as a quotient, with the numerator via expm1."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(BmA * x, dtype=complex)
    return -x * np.exp(-A * x) * _phi_expm1(z)


def _mcal(x, A, B, BmA):
    x = np.asarray(x, dtype=float)
    z = np.asarray(BmA * x, dtype=complex)
    az = np.abs(z)
    small = az < SERIES_SWITCH
    large = az > QUOTIENT_SWITCH
    zs = np.where(small | large, 0.5, z)
    mid = -x * np.exp(-A * x) * (-cexpm1(-zs) / zs)
    ser = -x * np.exp(-A * x) * _phi_series(np.where(small, z, 0))
    den = np.where(large, BmA, 1.0)
    quo = (np.exp(-B * x) - np.exp(-A * x)) / den
    return np.where(small, ser, np.where(large, quo, mid))


def mcal(x, s: ModeSymbols):
    """(e^{-Bx} - e^{-Ax})/(B - A), continuous through B = A."""
    return _mcal(x, s.A, s.B, s.BmA)


def mcal_derivative(x, s: ModeSymbols, order: int = 0):
    """order-th derivative of mcal in x.

    Uses M' = -B M - e^{-Ax} and M^(n) = -B M^(n-1) + (-1)^n A^(n-1) e^{-Ax},
    which stay exact in the confluent limit.
    """
    x = np.asarray(x, dtype=float)
    m = mcal(x, s)
    if order == 0:
        return m
    ea = np.exp(-s.A * x)
    for n in range(1, order + 1):
        m = -s.B * m + (-1) ** n * s.A ** (n - 1) * ea
    # far from the confluent set the quotient has no cancellation
    large = np.abs(s.BmA * x) > QUOTIENT_SWITCH
    den = np.where(large, s.BmA, 1.0)
    quo = ((-s.B) ** order * np.exp(-s.B * x) - (-s.A) ** order * ea) / den
    return np.where(large, quo, m)


def basis_k(i: int, x, s: ModeSymbols):
    if i == 1:
        return np.exp(-s.B * x) + 0j
    if i == 2:
        return np.exp(-s.A * np.asarray(x, float)) + 0j
    if i == 3:
        return s.B * mcal(x, s)
    raise ValueError("basis index must be 1, 2 or 3")


def basis_derivatives(i: int, x, s: ModeSymbols, order: int = 0):
    if not 0 <= order <= 3:
        raise ValueError("order must be in 0..3")
    if i == 1:
        return (-s.B) ** order * np.exp(-s.B * x)
    if i == 2:
        return (-s.A) ** order * np.exp(-s.A * np.asarray(x, float)) + 0j
    if i == 3:
        return s.B * mcal_derivative(x, s, order)
    raise ValueError("basis index must be 1, 2 or 3")


def d_ell(ell: int, x, delta: float):
    if ell == 1:
        return delta - np.asarray(x, float)
    if ell == 2:
        return np.asarray(x, float)
    raise ValueError("ell must be 1 or 2")
