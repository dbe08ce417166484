"""Per-mode 4x4 boundary system: matrix, determinant, cofactors, solution.

Unknowns are ordered (mu_1N, beta_1N, mu_2N, beta_2N).  The normal
velocity profile is

    u_N(x) = sum_l mu_lN M(d_l(x)) + beta_lN exp(-B d_l(x)),

with d_1 = delta - x and d_2 = x; u_d = i xi'.u' and the pressure follow from
algebraic relations between the amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symbols import (
    LayerConfig,
    ModeSymbols,
    ResolventParameter,
    cexpm1,
    mcal_derivative,
    require_sector,
    symbols_from_A,
)

DEGENERATE_DET = 1e-30


class DegenerateModeError(ValueError):
    pass


@dataclass
class BoundaryTraceMode:
    """Normal-stress data of one mode (or a batch) at x_N = delta and 0."""

    hd_top: np.ndarray
    hd_bot: np.ndarray
    hN_top: np.ndarray
    hN_bot: np.ndarray

    @classmethod
    def from_tangential(cls, xi_prime, h_top, h_bot):
        """Build from full traces; ``h_*`` has shape (N, ...) with the normal last."""
        xi = np.moveaxis(np.asarray(xi_prime, float), -1, 0)
        h_top = np.asarray(h_top, complex)
        h_bot = np.asarray(h_bot, complex)
        n_t = xi.shape[0]
        hd_top = 1j * np.sum(xi * h_top[:n_t], axis=0)
        hd_bot = 1j * np.sum(xi * h_bot[:n_t], axis=0)
        return cls(hd_top, hd_bot, h_top[n_t], h_bot[n_t])


@dataclass
class ModeCoefficients:
    """Amplitudes; each field has shape (2, ...) indexed by l - 1."""

    muN: np.ndarray
    betaN: np.ndarray
    mud: np.ndarray
    betad: np.ndarray
    gamma: np.ndarray

    def vector(self) -> np.ndarray:
        return np.stack([self.muN[0], self.betaN[0], self.muN[1], self.betaN[1]], axis=-1)


def build_matrix(s: ModeSymbols) -> np.ndarray:
    A, B, a, M = s.A, s.B, s.a, s.M_delta
    D0, BmA, BpA = s.D0, s.BmA, s.B + s.A
    AB2 = 2 * A * B
    z = np.zeros(np.broadcast(A, B).shape, dtype=complex)
    L = np.empty(z.shape + (4, 4), dtype=complex)
    L[..., 0, 0] = -BpA + z
    L[..., 0, 1] = -D0 + z
    L[..., 0, 2] = -BpA * a - D0 * M
    L[..., 0, 3] = -D0 * a - D0 * BmA * M
    L[..., 1, 0] = L[..., 0, 2]
    L[..., 1, 1] = L[..., 0, 3]
    L[..., 1, 2] = L[..., 0, 0]
    L[..., 1, 3] = L[..., 0, 1]
    L[..., 2, 0] = -BmA + z
    L[..., 2, 1] = AB2 + z
    L[..., 2, 2] = BmA * a - AB2 * M
    L[..., 2, 3] = -AB2 * a - AB2 * BmA * M
    L[..., 3, 0] = -BmA * a + AB2 * M
    L[..., 3, 1] = AB2 * a + AB2 * BmA * M
    L[..., 3, 2] = BmA + z
    L[..., 3, 3] = -AB2 + z
    return L


def det_factors(s: ModeSymbols):
    """The two factors l_plus, l_minus whose product is det L."""
    A, B = s.A, s.B
    one_minus = -cexpm1(-(B + A) * s.delta)
    quartic = B ** 4 + 2 * A * A * B * B + 4 * A ** 3 * B + A ** 4
    lp = s.D3 * one_minus - quartic * s.M_delta
    lm = s.D3 * one_minus + quartic * s.M_delta
    return lp, lm


def det_L_closed(s: ModeSymbols):
    lp, lm = det_factors(s)
    return lp * lm


def cofactors(s: ModeSymbols) -> np.ndarray:
    """Signed cofactor matrix C with C[i, j] = (-1)^(i+j) minor(i, j)."""
    A, B, a, M = s.A, s.B, s.a, s.M_delta
    D0, D2, D3, BmA, BpA = s.D0, s.D2, s.D3, s.BmA, s.B + s.A
    # D1 enters the (1,4) and (3,4) cofactors shifted by 2AB(B - A)
    D1s = s.D1 + 2 * A * B * BmA
    om = -np.expm1(-2 * A * s.delta)  # 1 - a^2
    A2, B2 = A * A, B * B
    M2 = M * M
    c11 = -2 * A * B * D3 * om - 16 * A ** 4 * B2 * a * M - 2 * A * B * BmA * BpA * D2 * M2
    c12 = -BmA * D3 * om - 8 * A ** 3 * B * BmA * a * M + 2 * A * B * BpA * D2 * M2
    c13 = (2 * A * B * D3 * a * om + 4 * A * B * (D0 ** 2 - BmA * D3 * a * a) * M
           - 2 * A * B * BmA ** 2 * D3 * a * M2)
    c14 = (BmA * D3 * a * om - (D0 * D1s + (B2 - 4 * A * B + A2) * D3 * a * a) * M
           + 2 * A * B * BmA * D3 * a * M2)
    c31 = -D0 * D3 * om + 2 * D0 ** 3 * a * M + BmA * BpA * D0 * D2 * M2
    c32 = BpA * D3 * om - 2 * BpA * D0 ** 2 * a * M - BpA * D0 * D2 * M2
    c33 = (-D0 * D3 * a * om + 2 * D0 * (4 * A ** 3 * B + BmA * D3 * a * a) * M
           + BmA ** 2 * D0 * D3 * a * M2)
    c34 = (BpA * D3 * a * om - 2 * (A2 * D1s + B2 * D3 * a * a) * M
           - BmA * D0 * D3 * a * M2)
    shape = np.broadcast(c11, c14, c31, c34).shape
    C = np.empty(shape + (4, 4), dtype=complex)
    rows = (
        (c11, c12, c13, c14),
        (c13, c14, c11, c12),
        (c31, c32, c33, c34),
        (-c33, -c34, -c31, -c32),
    )
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            C[..., i, j] = v
    return C


def assemble_rhs(t: BoundaryTraceMode, s: ModeSymbols, mu: float) -> np.ndarray:
    A = s.A
    return np.stack(
        np.broadcast_arrays(
            t.hd_top / mu + 0j,
            -t.hd_bot / mu + 0j,
            A * t.hN_top / mu + 0j,
            -A * t.hN_bot / mu + 0j,
        ),
        axis=-1,
    )


def coefficients_from_normal(s: ModeSymbols, x4: np.ndarray) -> ModeCoefficients:
    """Fill the derived amplitudes from (mu_1N, beta_1N, mu_2N, beta_2N)."""
    x4 = np.asarray(x4, complex)
    muN = np.stack([x4[..., 0], x4[..., 2]])
    betaN = np.stack([x4[..., 1], x4[..., 3]])
    sign = np.array([-1.0, 1.0]).reshape((2,) + (1,) * (muN.ndim - 1))
    mud = sign * s.A * muN
    betad = sign * (muN + s.B * betaN)
    gamma = -sign * s.mu * (s.B + s.A) / s.A * muN
    return ModeCoefficients(muN, betaN, mud, betad, gamma)


def solve_coefficients(s: ModeSymbols, r: np.ndarray, method: str = "cramer") -> ModeCoefficients:
    A = np.asarray(s.A)
    if np.any(A <= 0):
        raise DegenerateModeError("degenerate mode: A = 0 needs the zero-mode solver")
    r = np.asarray(r, complex)
    if method == "cramer":
        det = det_L_closed(s)
        if np.any(np.abs(det) < DEGENERATE_DET):
            bad = np.argwhere(np.atleast_1d(np.abs(det) < DEGENERATE_DET))[0]
            raise DegenerateModeError(f"degenerate mode at index {tuple(bad)}")
        C = cofactors(s)
        # x_j = sum_k C[k, j] r_k / det
        x4 = np.einsum("...kj,...k->...j", C, r) / det[..., None]
    elif method == "direct":
        L = build_matrix(s)
        x4 = np.linalg.solve(L, r[..., None])[..., 0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return coefficients_from_normal(s, x4)


def _profile(mu_amp, beta_amp, x, s: ModeSymbols, order: int):
    """sum_l mu_l M(d_l) + beta_l e^{-B d_l}, differentiated ``order`` times in x."""
    out = 0
    for l, sgn in ((0, -1.0), (1, 1.0)):
        d = s.delta - x if l == 0 else x
        f = sgn ** order
        term = mu_amp[l] * mcal_derivative(d, s, order) + beta_amp[l] * (-s.B) ** order * np.exp(-s.B * d)
        out = out + f * term
    return out


def eval_mode_solution(c: ModeCoefficients, s: ModeSymbols, x, order: int = 0):
    """(u_d, u_N, theta) and their ``order``-th normal derivatives at x.

    Batch axes of ``c`` and ``s`` must broadcast against ``x``.
    """
    x = np.asarray(x, float)
    ud = _profile(c.mud, c.betad, x, s, order)
    uN = _profile(c.muN, c.betaN, x, s, order)
    th = 0
    for l, sgn in ((0, -1.0), (1, 1.0)):
        d = s.delta - x if l == 0 else x
        th = th + c.gamma[l] * (sgn * -s.A) ** order * np.exp(-s.A * d)
    return ud, uN, th


def mode_residuals(c: ModeCoefficients, s: ModeSymbols, t: BoundaryTraceMode, x):
    """Relative residuals of the five transformed equations.

    Each residual is scaled by the magnitude of the terms it combines.
    Returns a dict of arrays broadcast over the batch (and x for interior lines).
    """
    mu, A2, B2 = s.mu, s.A ** 2, s.B ** 2
    ud, uN, th = eval_mode_solution(c, s, x, 0)
    ud1, uN1, th1 = eval_mode_solution(c, s, x, 1)
    ud2, uN2, _ = eval_mode_solution(c, s, x, 2)
    tiny = 1e-300
    r1 = mu * B2 * ud - mu * ud2 - A2 * th
    n1 = np.abs(mu * B2 * ud) + np.abs(mu * ud2) + np.abs(A2 * th) + tiny
    r2 = mu * B2 * uN - mu * uN2 + th1
    n2 = np.abs(mu * B2 * uN) + np.abs(mu * uN2) + np.abs(th1) + tiny
    r3 = ud + uN1
    n3 = np.abs(ud) + np.abs(uN1) + tiny
    out = {"ud": np.abs(r1) / n1, "uN": np.abs(r2) / n2, "div": np.abs(r3) / n3}
    xs = np.array([s.delta, 0.0])
    res4, res5 = [], []
    for k, nu in enumerate((1.0, -1.0)):
        xb = xs[k]
        ud_b, uN_b, th_b = eval_mode_solution(c, s, xb, 0)
        ud1_b, uN1_b, _ = eval_mode_solution(c, s, xb, 1)
        hd = t.hd_top if k == 0 else t.hd_bot
        hN = t.hN_top if k == 0 else t.hN_bot
        lhs4 = mu * (ud1_b - A2 * uN_b) * nu
        lhs5 = (2 * mu * uN1_b - th_b) * nu
        sc4 = np.abs(mu * ud1_b) + np.abs(mu * A2 * uN_b) + np.abs(hd) + tiny
        sc5 = np.abs(2 * mu * uN1_b) + np.abs(th_b) + np.abs(hN) + tiny
        res4.append(np.abs(lhs4 - hd) / sc4)
        res5.append(np.abs(lhs5 - hN) / sc5)
    out["bc_tangential"] = np.maximum(res4[0], res4[1])
    out["bc_normal"] = np.maximum(res5[0], res5[1])
    return out


@dataclass
class ZeroModeProfile:
    """Closed form at xi' = 0.

    u_N is constant, theta linear, and each tangential component is
    ``beta[0] e^{-B(delta-x)} + beta[1] e^{-B x}`` with B = sqrt(lambda/mu).
    """

    uN: complex
    theta_bot: complex
    theta_top: complex
    beta: np.ndarray  # shape (2, N-1)
    B: complex
    delta: float

    def evaluate(self, x, order: int = 0):
        x = np.asarray(x, float)
        d1, d2 = self.delta - x, x
        mB = -self.B
        e1 = self.B ** order * np.exp(mB * d1)
        e2 = (mB ** order) * np.exp(mB * d2)
        uj = self.beta[0][:, None] * e1 + self.beta[1][:, None] * e2
        slope = (self.theta_top - self.theta_bot) / self.delta
        if order == 0:
            uN = np.full(x.shape, self.uN, complex)
            th = self.theta_bot + slope * x
        elif order == 1:
            uN = np.zeros(x.shape, complex)
            th = np.full(x.shape, slope, complex)
        else:
            uN = np.zeros(x.shape, complex)
            th = np.zeros(x.shape, complex)
        return uj, uN, th


def solve_zero_mode(p: ResolventParameter, cfg: LayerConfig, h_top, h_bot) -> ZeroModeProfile:
    """``h_top``/``h_bot``: length-N traces of the zero tangential mode."""
    from .tangential import solve_layer_neumann_mode

    lam = complex(p.lam)
    if lam == 0:
        raise ValueError("off-sector: lambda = 0")
    require_sector(p)
    mu, delta = cfg.mu, cfg.delta
    h_top = np.asarray(h_top, complex)
    h_bot = np.asarray(h_bot, complex)
    uN = (h_top[-1] + h_bot[-1]) / (delta * lam)
    s0 = symbols_from_A(0.0, lam, mu, delta)
    beta = np.array(
        solve_layer_neumann_mode(h_top[:-1] / mu, -h_bot[:-1] / mu, s0), dtype=complex
    ).reshape(2, -1)
    return ZeroModeProfile(uN, h_bot[-1], -h_top[-1], beta, complex(s0.B), delta)


def reflect_traces(t: BoundaryTraceMode) -> BoundaryTraceMode:
    """Data of the mirrored problem under x_N -> delta - x_N.

    The mirrored solution is (u_d, -u_N, theta) evaluated at delta - x_N.
    """
    return BoundaryTraceMode(t.hd_bot, t.hd_top, -t.hN_bot, -t.hN_top)
