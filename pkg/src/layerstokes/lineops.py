"""Whole-line exponential convolutions of piecewise smooth samples.

For a sampled function F on a uniform line grid and a decay rate kappa
(Re kappa >= 0) this computes

    S(x) = int e^{-kappa |x-y|} F(y) dy,   T(x) = int sign(x-y) e^{-kappa |x-y|} F(y) dy

with two first-order recursions (left and right sweeps).  Each cell integral
uses exponentially fitted weights for a degree-7 local interpolant, chosen
inside the smooth piece that contains the cell, so jumps at declared
breakpoints do not spoil the order.  Every Fourier multiplier built from
1/(kappa^2 + k^2) and k/(kappa^2 + k^2) reduces to S and T.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .symbols import cexpm1

P_NODES = 8
_GL = np.polynomial.legendre.leggauss(40)
_GL_LIMIT = 30.0


def exp_moments(c, p: int = P_NODES) -> np.ndarray:
    """E_q(c) = int_0^1 e^{-c(1-s)} s^q ds for q < p; shape (*c.shape, p)."""
    c = np.asarray(c, complex)
    x, w = _GL
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    small = np.abs(c) <= _GL_LIMIT
    cs = np.where(small, c, 0.0)[..., None]
    kern = np.exp(-cs * (1.0 - s)) * w
    quad = np.stack([np.sum(kern * s ** q, axis=-1) for q in range(p)], axis=-1)
    # large |c|: forward recursion E_q = (1 - q E_{q-1})/c is stable
    cl = np.where(small, 1.0, c)
    rec = np.empty(c.shape + (p,), complex)
    rec[..., 0] = -cexpm1(-cl) / cl
    for q in range(1, p):
        rec[..., q] = (1.0 - q * rec[..., q - 1]) / cl
    return np.where(small[..., None], quad, rec)


@lru_cache(maxsize=64)
def _inv_vandermonde(offset: int, p: int, mirrored: bool) -> np.ndarray:
    t = offset + np.arange(p, dtype=float)
    if mirrored:
        t = 1.0 - t
    V = np.vander(t, p, increasing=True)  # V[m, q] = t_m^q
    return np.linalg.inv(V)  # a = Vinv @ F(t)


def cell_weights(c, offset: int, p: int = P_NODES, mirrored: bool = False) -> np.ndarray:
    """Weights w_m(c): int_0^1 e^{-c(1-s)} P(s) ds = sum_m w_m P(offset + m).

    ``mirrored`` gives the weights of int_0^1 e^{-c s} P(s) ds instead.
    """
    E = exp_moments(c, p)
    Vinv = _inv_vandermonde(offset, p, mirrored)
    return E @ Vinv  # w_m = sum_q E_q Vinv[q, m]


def _extrapolation_weights(p: int) -> np.ndarray:
    # value at node 0 from nodes 1..p
    t = np.arange(1, p + 1, dtype=float)
    w = np.ones(p)
    for m in range(p):
        for k in range(p):
            if k != m:
                w[m] *= (0.0 - t[k]) / (t[m] - t[k])
    return w


_EXTRAP = _extrapolation_weights(P_NODES)


def one_sided_pieces(F: np.ndarray, breaks) -> list:
    """Split samples at breakpoint indices; breakpoint values are replaced by
    one-sided limits extrapolated from inside each piece."""
    n = F.shape[-1]
    edges = [0] + sorted(int(b) for b in breaks) + [n - 1]
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        v = F[..., a:b + 1].copy()
        if b - a + 1 > P_NODES:
            if a in breaks:
                v[..., 0] = v[..., 1:P_NODES + 1] @ _EXTRAP
            if b in breaks:
                v[..., -1] = v[..., -2:-P_NODES - 2:-1] @ _EXTRAP
        pieces.append((a, b, v))
    return pieces


def _cell_integrals(v: np.ndarray, c: np.ndarray, mirrored: bool) -> np.ndarray:
    """h-free cell integrals for one piece: shape (..., ncell)."""
    m = v.shape[-1]
    ncell = m - 1
    p = min(P_NODES, m)
    out = np.zeros(v.shape[:-1] + (ncell,), complex)
    half = p // 2 - 1
    lo_interior, hi_interior = half, ncell - (p - half - 1)
    if hi_interior > lo_interior:
        w = cell_weights(c, -half, p, mirrored)
        for j in range(p):
            out[..., lo_interior:hi_interior] += (
                w[..., j, None] * v[..., lo_interior - half + j:hi_interior - half + j])
    for k in list(range(0, min(lo_interior, ncell))) + list(range(max(hi_interior, lo_interior), ncell)):
        st = min(max(k - half, 0), m - p)
        w = cell_weights(c, st - k, p, mirrored)
        out[..., k] = np.sum(w * v[..., st:st + p], axis=-1)
    return out


def line_convolutions(F: np.ndarray, kappa, h: float, breaks=(), keep=None):
    """(S, T, F_one_sided) along the last axis of F.

    ``kappa`` broadcasts against F[..., 0].  ``keep`` selects output indices
    (a slice); ``F_one_sided`` holds, at the kept indices, the sample values
    with breakpoints replaced by the limit from the piece to their right,
    except at the last kept index, which takes the limit from the left.
    """
    F = np.asarray(F, complex)
    kappa = np.broadcast_to(np.asarray(kappa, complex), F.shape[:-1])
    c = kappa * h
    decay = np.exp(-c)
    n = F.shape[-1]
    IL = np.zeros(F.shape[:-1] + (n - 1,), complex)
    IR = np.zeros_like(IL)
    pieces = one_sided_pieces(F, breaks)
    Fone = F.copy()
    for a, b, v in pieces:
        if b > a:
            IL[..., a:b] = _cell_integrals(v, c, False)
            IR[..., a:b] = _cell_integrals(v, c, True)
            Fone[..., a] = v[..., 0]
    IL *= h
    IR *= h
    keep = slice(0, n) if keep is None else keep
    idx = np.arange(n)[keep]
    L = np.zeros(F.shape[:-1], complex)
    R = np.zeros(F.shape[:-1], complex)
    Lk = np.empty(F.shape[:-1] + (len(idx),), complex)
    Rk = np.empty_like(Lk)
    first, last = idx[0], idx[-1]
    for k in range(0, last + 1):
        if k >= first:
            Lk[..., k - first] = L
        if k < n - 1:
            L = decay * L + IL[..., k]
    for k in range(n - 1, first - 1, -1):
        if k <= last:
            Rk[..., k - first] = R
        if k > 0:
            R = decay * R + IR[..., k - 1]
    Fk = Fone[..., keep].copy()
    for a, b, v in pieces:
        if a < last <= b:
            Fk[..., -1] = v[..., last - a]
    return Lk + Rk, Lk - Rk, Fk
