"""Tangential velocity recovery from the pressure and the normal velocity.

Each u_j (j < N) solves the Laplace resolvent  lambda u_j - mu Lap u_j = -d_j theta
with Neumann data  d_N u_j = mu^{-1} nu_N h_j - d_j u_N  on both faces.
Per mode, a particular solution proportional to theta plus a homogeneous
Neumann correction gives the exact profile.  The extension route (zero
extension of the forcing, whole-space solve, Neumann fix-up) is kept for
cross-validation only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import ModeCoefficients, eval_mode_solution
from .symbols import ModeSymbols, OffSectorError, cexpm1


@dataclass
class UjProfile:
    """u_j(x) = sum_l pA[l] e^{-A d_l} + pB[l] e^{-B d_l}, l = 1, 2."""

    pA: np.ndarray
    pB: np.ndarray

    def evaluate(self, s: ModeSymbols, x, order: int = 0):
        x = np.asarray(x, float)
        out = 0
        for l, sgn in ((0, -1.0), (1, 1.0)):
            d = s.delta - x if l == 0 else x
            out = out + sgn ** order * (
                self.pA[l] * (-s.A) ** order * np.exp(-s.A * d)
                + self.pB[l] * (-s.B) ** order * np.exp(-s.B * d)
            )
        return out


def particular_uj_mode(xi_j, c: ModeCoefficients, s: ModeSymbols, lam) -> np.ndarray:
    """Amplitudes of e^{-A d_l} for the particular solution -i xi_j theta / lambda."""
    lam = np.asarray(lam, complex)
    if np.any(lam == 0):
        raise OffSectorError("off-sector: lambda = 0")
    return -1j * np.asarray(xi_j) * c.gamma / lam


def solve_layer_neumann_mode(F_top, F_bot, s: ModeSymbols):
    """Amplitudes (beta_1, beta_2) of e^{-B d_l} with prescribed d_N at both faces.

    F is the raw x_N-derivative (no normal sign) at x_N = delta and 0.
    """
    one_minus_b2 = -cexpm1(-2 * s.B * s.delta)
    den = s.B * one_minus_b2
    if np.any(np.abs(den) == 0):
        raise OffSectorError("off-sector: Neumann resolvent is singular (gamma0 = 0)")
    b = s.b
    beta1 = (F_top - b * F_bot) / den
    beta2 = (b * F_top - F_bot) / den
    return beta1, beta2


def assemble_uj_mode(xi_j, c: ModeCoefficients, s: ModeSymbols, hj_top, hj_bot,
                     uN_boundary=None) -> UjProfile:
    """Exact per-mode u_j: particular part plus Neumann correction."""
    mu = s.mu
    xi_j = np.asarray(xi_j)
    pA = particular_uj_mode(xi_j, c, s, s.lam)
    part = UjProfile(pA, np.zeros_like(pA))
    if uN_boundary is None:
        uN_top = eval_mode_solution(c, s, s.delta, 0)[1]
        uN_bot = eval_mode_solution(c, s, 0.0, 0)[1]
    else:
        uN_top, uN_bot = uN_boundary
    F_top = hj_top / mu - 1j * xi_j * uN_top - part.evaluate(s, s.delta, 1)
    F_bot = -hj_bot / mu - 1j * xi_j * uN_bot - part.evaluate(s, 0.0, 1)
    b1, b2 = solve_layer_neumann_mode(F_top, F_bot, s)
    return UjProfile(pA, np.stack([b1, b2]))


def _laplace_hat(f_pad, lam, mu, grid):
    lam = complex(lam)
    if lam.imag == 0 and lam.real <= 0:
        raise OffSectorError(f"off-sector: lambda={lam}")
    from .fields import padded_fft

    return padded_fft(f_pad) / (lam + mu * grid.padded_ksq())


def solve_laplace_wholespace(f_pad, lam, mu):
    """Apply 1/(lambda + mu |xi|^2) on the padded periodic box, restrict to the layer."""
    from .fields import padded_ifft_restrict

    grid = f_pad.grid
    return padded_ifft_restrict(grid, _laplace_hat(f_pad, lam, mu, grid))


def tangential_via_extension(theta, h, u_N, lam, mu, j: int, method: str = "line"):
    """Extension route for u_j (scalar LayerField).

    theta and u_N are scalar LayerFields; h is a vector LayerField whose
    face values are the boundary stress data.  The zero extension of
    -d_j theta goes through the whole-space Laplace resolvent (exact
    whole-line kernels for ``line``, the periodic padded box for ``fft``),
    then a per-mode Neumann correction restores the face fluxes.
    """
    from .fields import (
        LayerField,
        boundary_trace,
        extend_E0,
        inverse_partial_fourier,
        padded_ifft_restrict,
        spectral_derivatives,
    )
    from .reduction import layer_convolutions
    from .symbols import symbols_from_A

    grid = theta.grid
    lam = complex(lam)
    f_pad = extend_E0(spectral_derivatives(theta, 1, j).scale(-1.0))
    if method == "fft":
        hat = _laplace_hat(f_pad, lam, mu, grid)
        u1 = padded_ifft_restrict(grid, hat)
        du1 = padded_ifft_restrict(grid, 1j * grid.padded_k()[-1] * hat)
    elif method == "line":
        if lam.imag == 0 and lam.real <= 0:
            raise OffSectorError(f"off-sector: lambda={lam}")
        B = np.sqrt(lam / mu + grid.mode_A() ** 2 + 0j)
        fh = grid.tangential_forward(f_pad.values, lead=1)
        S, T, _ = layer_convolutions(grid, fh, B[None])
        u1 = LayerField(grid, grid.tangential_inverse(S / (2 * mu * B[..., None]), lead=1))
        du1 = LayerField(grid, grid.tangential_inverse(-T / (2 * mu), lead=1))
    else:
        raise ValueError(f"unknown method {method!r}")
    duN = spectral_derivatives(u_N, 1, j)
    hj = h.component(j)

    def flux(side, nu):
        return (nu * boundary_trace(hj, side)[0] / mu - boundary_trace(duN, side)[0]
                - boundary_trace(du1, side)[0])

    Ft = grid.tangential_forward(flux("top", 1.0))
    Fb = grid.tangential_forward(flux("bottom", -1.0))
    s = symbols_from_A(grid.mode_A(), lam, mu, grid.delta)
    b1, b2 = solve_layer_neumann_mode(Ft, Fb, s)
    prof = UjProfile(np.zeros((2,) + b1.shape + (1,)), np.stack([b1, b2])[..., None])
    u2_hat = prof.evaluate(s.expand(), grid.z)
    u2 = inverse_partial_fourier(grid.spectral(u2_hat[None]))
    return LayerField(grid, u1.values + u2.values)
