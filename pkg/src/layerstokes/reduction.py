"""Reduction of the full problem to one with boundary data only.

Chain: solve div V = g with a whole-space gradient field, correct the force,
solve a whole-space Stokes resolvent for the reflected force, and move the
resulting stress mismatch into the boundary datum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (
    LayerField,
    PaddedField,
    cutoff_phi,
    extend_Ef,
    extend_odd_even,
    padded_fft,
    padded_ifft_restrict,
    spectral_derivatives,
)
from .symbols import OffSectorError


@dataclass
class DataBundle:
    f: LayerField
    g: LayerField
    h: LayerField

    def __post_init__(self):
        N = self.f.grid.dim
        if self.f.ncomp != N or self.h.ncomp != N or self.g.ncomp != 1:
            raise ValueError("f and h need N components, g one")

    @classmethod
    def zeros(cls, grid):
        return cls(LayerField.zeros(grid, grid.dim), LayerField.zeros(grid, 1),
                   LayerField.zeros(grid, grid.dim))


def gradient(f: LayerField) -> np.ndarray:
    """grad[j, k] = d_k f_j, shape (ncomp, N, *n_tan, n_z)."""
    N = f.grid.dim
    return np.stack([spectral_derivatives(f, 1, k).values for k in range(N)], axis=1)


def stress_tensor(u: LayerField, theta: LayerField, mu: float, grad_u=None) -> np.ndarray:
    """S[j, k] = mu (d_k u_j + d_j u_k) - theta delta_jk."""
    G = gradient(u) if grad_u is None else grad_u
    S = mu * (G + np.swapaxes(G, 0, 1))
    for j in range(u.grid.dim):
        S[j, j] -= theta.values[0]
    return S


def _check_lambda(lam):
    lam = complex(lam)
    if lam == 0 or (lam.imag == 0 and lam.real < 0):
        raise OffSectorError(f"off-sector: lambda={lam}")
    return lam


def odd_extension_g(g: LayerField) -> PaddedField:
    """g* = g_0^o + g_delta^o on the padded box."""
    return extend_odd_even(g, "odd_at_0") + extend_odd_even(g, "odd_at_delta")


def _line_setup(grid, lam=None, mu=1.0):
    A = grid.mode_A()
    B = None if lam is None else np.sqrt(lam / mu + A * A + 0j)
    return A, B


def layer_convolutions(grid, hat: np.ndarray, kappa):
    """(S, T, one-sided values) on the layer nodes for mode-space padded data."""
    from .lineops import line_convolutions

    k0, n = grid.k0, grid.n_z
    return line_convolutions(hat, kappa, grid.hz, breaks=(k0, k0 + n - 1),
                             keep=slice(k0, k0 + n))


def _to_layer(grid, spec) -> LayerField:
    return LayerField(grid, grid.tangential_inverse(np.asarray(spec), lead=1))


def solve_divergence(g: LayerField, method: str = "line") -> LayerField:
    """V with div V = g in the layer: V = grad Lap^{-1} g* with the odd extension g*."""
    grid = g.grid
    gs = odd_extension_g(g)
    if method == "fft":
        hat = padded_fft(gs)[0]
        ks = grid.padded_k()
        K2 = grid.padded_ksq()
        inv = np.where(K2 > 0, 1.0 / np.where(K2 > 0, K2, 1.0), 0.0)
        comps = [-1j * k * inv * hat for k in ks]
        return padded_ifft_restrict(grid, np.stack(comps))
    if method != "line":
        raise ValueError(f"unknown method {method!r}")
    A, _ = _line_setup(grid)
    hat = grid.tangential_forward(gs.values[0], lead=0)
    S, T, _ = layer_convolutions(grid, hat, A)
    half_inv_A = np.where(A > 0, 0.5 / np.where(A > 0, A, 1.0), 0.0)[..., None]
    Phi = -S * half_inv_A
    xi = grid.mode_xi()
    comps = [1j * xi[..., j, None] * Phi for j in range(grid.n_t)] + [0.5 * T]
    return _to_layer(grid, np.stack(comps))


@dataclass
class WholeSpaceSolution:
    v: LayerField
    pi: LayerField
    dN_v: LayerField  # normal derivative of v, taken from the padded transform


def solve_stokes_wholespace(fE: PaddedField, lam, mu: float, method: str = "line") -> WholeSpaceSolution:
    """Whole-space Stokes resolvent of the extended force, restricted to the layer.

    ``line`` convolves each tangential mode with the exact whole-line kernels;
    ``fft`` uses the periodic padded box instead (cross-check route).
    """
    lam = _check_lambda(lam)
    grid = fE.grid
    if method == "fft":
        fh = padded_fft(fE)
        ks = grid.padded_k()
        K2 = grid.padded_ksq()
        nz = K2 > 0
        inv = np.where(nz, 1.0 / np.where(nz, K2, 1.0), 0.0)
        kdotf = sum(k * fh[j] for j, k in enumerate(ks))
        pi_h = -1j * kdotf * inv
        res = 1.0 / (lam + mu * K2)
        vh = np.stack([(fh[j] - k * kdotf * inv) * res for j, k in enumerate(ks)])
        dvh = 1j * ks[-1] * vh
        return WholeSpaceSolution(
            padded_ifft_restrict(grid, vh),
            padded_ifft_restrict(grid, pi_h[None]),
            padded_ifft_restrict(grid, dvh),
        )
    if method != "line":
        raise ValueError(f"unknown method {method!r}")
    return _stokes_line(fE, lam, mu)


def _stokes_line(fE: PaddedField, lam: complex, mu: float) -> WholeSpaceSolution:
    # Per mode with c = 1/(B^2 - A^2) = mu/lam and q = xi'.f':
    #   pi  = -i S_A[q]/(2A) + T_A[f_N]/2
    #   v_j = (S_B[f_j]/(2B) - xi_j c (S_A[q]/(2A) - S_B[q]/(2B)) - i xi_j c (T_A - T_B)[f_N]/2)/mu
    #   v_N = (S_B[f_N]/(2B) - i c (T_A - T_B)[q]/2 - c (B S_B - A S_A)[f_N]/2)/mu
    # using dS = -kappa T and dT = -kappa S + 2F for the normal derivatives.
    grid = fE.grid
    N, nt = grid.dim, grid.n_t
    A, B = _line_setup(grid, lam, mu)
    xi = grid.mode_xi()
    fh = grid.tangential_forward(fE.values, lead=1)
    q = sum(xi[..., j, None] * fh[j] for j in range(nt))
    fN = fh[N - 1]
    # kappa = A acts on (q, f_N); kappa = B on (f_1..f_{N-1}, q, f_N)
    SA, TA, _ = layer_convolutions(grid, np.stack([q, fN]), A[None])
    SB, TB, _ = layer_convolutions(grid, np.concatenate([fh[:nt], q[None], fN[None]]), B[None])
    ex = lambda v: np.asarray(v)[..., None]
    Ae, Be = ex(A), ex(B)
    hA = ex(np.where(A > 0, 0.5 / np.where(A > 0, A, 1.0), 0.0))
    c = mu / lam
    SAq, SAn, TAq, TAn = SA[0], SA[1], TA[0], TA[1]
    SBq, SBn, TBq, TBn = SB[nt], SB[nt + 1], TB[nt], TB[nt + 1]
    pi = -1j * SAq * hA + 0.5 * TAn
    v, dv = [], []
    for j in range(nt):
        xj = ex(xi[..., j])
        v.append((SB[j] / (2 * Be) - xj * c * (SAq * hA - SBq / (2 * Be))
                  - 0.5j * xj * c * (TAn - TBn)) / mu)
        dv.append((-0.5 * TB[j] + 0.5 * xj * c * (TAq - TBq)
                   + 0.5j * xj * c * (Ae * SAn - Be * SBn)) / mu)
    v.append((SBn / (2 * Be) - 0.5j * c * (TAq - TBq) - 0.5 * c * (Be * SBn - Ae * SAn)) / mu)
    dv.append((-0.5 * TBn - 0.5j * c * (-Ae * SAq + Be * SBq)
               - 0.5 * c * (A[..., None] ** 2 * TAn - Be ** 2 * TBn)) / mu)
    return WholeSpaceSolution(_to_layer(grid, np.stack(v)), _to_layer(grid, pi[None]),
                              _to_layer(grid, np.stack(dv)))


def deformation_of_gradient_field(V: LayerField, g: LayerField) -> np.ndarray:
    """D(V) for V = grad(Lap^{-1} g*), using only tangential derivatives and g.

    V is curl free, so d_N V_j = d_j V_N, and div V = g gives
    d_N V_N = g - sum_j d_j V_j.  This avoids differentiating across the
    faces where g* may jump.
    """
    grid = V.grid
    N = grid.dim
    D = np.zeros((N, N) + V.values.shape[1:], complex)
    tang = [[spectral_derivatives(V.component(j), 1, k).values[0] for k in range(N - 1)]
            for j in range(N)]
    for j in range(N - 1):
        for k in range(N - 1):
            D[j, k] = tang[j][k] + tang[k][j]
        D[j, N - 1] = D[N - 1, j] = 2 * tang[N - 1][j]
    D[N - 1, N - 1] = 2 * (g.values[0] - sum(tang[j][j] for j in range(N - 1)))
    return D


def reduce_f_tilde(d: DataBundle, lam, mu: float, V: LayerField | None = None) -> LayerField:
    """f - lambda V + Div(mu D(V)).

    Since Lap V = grad g*, Div(mu D(V)) = 2 mu grad g inside the layer.
    """
    lam = _check_lambda(lam)
    if V is None:
        V = solve_divergence(d.g)
    N = d.f.grid.dim
    grad_g = np.concatenate([spectral_derivatives(d.g, 1, k).values for k in range(N)])
    return LayerField(d.f.grid, d.f.values - lam * V.values + 2 * mu * grad_g)


def blended_normal(grid) -> np.ndarray:
    """nu~_N(x_N) = phi_delta - phi_0: +1 at the top face, -1 at the bottom."""
    z = grid.z
    return cutoff_phi(z, grid.delta, "phi_delta") - cutoff_phi(z, grid.delta, "phi_0")


def reduce_h_tilde(d: DataBundle, ws: WholeSpaceSolution, lam, mu: float,
                   V: LayerField | None = None) -> LayerField:
    """h - mu D(V) nu~ - S(v, pi) nu~ as a layer field."""
    _check_lambda(lam)
    grid = d.h.grid
    N = grid.dim
    if V is None:
        V = solve_divergence(d.g)
    DV = deformation_of_gradient_field(V, d.g)
    nu = blended_normal(grid)
    v = ws.v
    dj = [[spectral_derivatives(v.component(j), 1, k).values[0] for k in range(N - 1)]
          for j in range(N)]
    out = d.h.values.copy()
    for j in range(N - 1):
        S_jN = mu * (ws.dN_v.values[j] + dj[N - 1][j])
        out[j] -= (mu * DV[j, N - 1] + S_jN) * nu
    dNvN = -sum(dj[j][j] for j in range(N - 1))
    S_NN = 2 * mu * dNvN - ws.pi.values[0]
    out[N - 1] -= (mu * DV[N - 1, N - 1] + S_NN) * nu
    return LayerField(grid, out)


def reduce(d: DataBundle, lam, mu: float, method: str = "line"):
    """Run the whole chain; returns (V, whole-space solution, f~, h~)."""
    V = solve_divergence(d.g, method)
    ft = reduce_f_tilde(d, lam, mu, V)
    ws = solve_stokes_wholespace(extend_Ef(ft), lam, mu, method)
    ht = reduce_h_tilde(d, ws, lam, mu, V)
    return V, ws, ft, ht
