"""End-to-end solvers, manufactured solutions, residuals and norm ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import (
    BoundaryTraceMode,
    DegenerateModeError,
    ModeCoefficients,
    ZeroModeProfile,
    assemble_rhs,
    eval_mode_solution,
    solve_coefficients,
    solve_zero_mode,
)
from .fields import (
    LayerField,
    LayerGrid,
    boundary_trace,
    inverse_partial_fourier,
    lq_norm,
    spectral_derivatives,
)
from .reduction import DataBundle, reduce
from .symbols import (
    LayerConfig,
    ModeSymbols,
    ResolventParameter,
    require_sector,
    symbols_from_A,
)
from .tangential import UjProfile, assemble_uj_mode


# ------------------------------------------------------------ spectral bundles
class NormalProfiles:
    """Anything that can return x_N-derivatives of (u, theta) in mode space.

    ``normal_derivative(order)`` returns an array (N + 1, *n_tan, n_z): the
    velocity components followed by the pressure, transformed tangentially.
    """

    grid: LayerGrid

    def normal_derivative(self, order: int) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class ModeBundle(NormalProfiles):
    """Closed-form per-mode solution of the boundary-only problem."""

    grid: LayerGrid
    symbols: ModeSymbols
    coeffs: ModeCoefficients
    uj: list
    zero: ZeroModeProfile
    zero_index: tuple

    def evaluate(self, x, order: int = 0) -> np.ndarray:
        x = np.asarray(x, float)
        se = self.symbols.expand()
        ce = ModeCoefficients(*[np.asarray(v)[..., None] for v in (
            self.coeffs.muN, self.coeffs.betaN, self.coeffs.mud, self.coeffs.betad,
            self.coeffs.gamma)])
        _, uN, th = eval_mode_solution(ce, se, x, order)
        comps = [UjProfile(p.pA[..., None], p.pB[..., None]).evaluate(se, x, order) for p in self.uj]
        out = np.stack(comps + [uN, th]).astype(complex)
        uj0, uN0, th0 = self.zero.evaluate(x, order)
        zi = (slice(None),) + self.zero_index
        out[zi] = np.concatenate([uj0, uN0[None], th0[None]])
        return out

    def normal_derivative(self, order: int) -> np.ndarray:
        return self.evaluate(self.grid.z, order)


@dataclass
class GriddedProfiles(NormalProfiles):
    """Sampled profiles with precomputed normal derivatives (exact fields)."""

    grid: LayerGrid
    derivs: dict

    def normal_derivative(self, order: int) -> np.ndarray:
        return self.derivs[order]


@dataclass
class SolutionPair:
    u: LayerField
    theta: LayerField
    spectral: NormalProfiles | None = None


# --------------------------------------------------------------- solvers
def _zero_index(grid: LayerGrid) -> tuple:
    return (0,) * grid.n_t


def solve_boundary_modes(Ht, Hb, p: ResolventParameter, cfg: LayerConfig, grid: LayerGrid,
                         method: str = "cramer") -> ModeBundle:
    """Closed-form mode solutions from transformed face data ``Ht``, ``Hb`` (N, *n_tan)."""
    require_sector(p)
    if not p.gamma0 > 0:
        raise ValueError("boundary-only solve needs gamma0 > 0")
    lam, mu, delta = complex(p.lam), cfg.mu, cfg.delta
    N = grid.dim
    xi = grid.mode_xi()
    A = grid.mode_A()
    zi = _zero_index(grid)
    A_safe = np.where(A > 0, A, 1.0)
    s = symbols_from_A(A_safe, lam, mu, delta, xi_prime=xi)
    t = BoundaryTraceMode.from_tangential(xi, Ht, Hb)
    try:
        c = solve_coefficients(s, assemble_rhs(t, s, mu), method)
    except DegenerateModeError as exc:
        raise DegenerateModeError(f"{exc} (tangential mode grid index)") from exc
    uN_top = eval_mode_solution(c, s, delta, 0)[1]
    uN_bot = eval_mode_solution(c, s, 0.0, 0)[1]
    uj = [assemble_uj_mode(xi[..., j], c, s, Ht[j], Hb[j], (uN_top, uN_bot)) for j in range(N - 1)]
    zero = solve_zero_mode(p, cfg, Ht[(slice(None),) + zi], Hb[(slice(None),) + zi])
    return ModeBundle(grid, s, c, uj, zero, zi)


def solve_boundary_only(h: LayerField, p: ResolventParameter, cfg: LayerConfig,
                        grid: LayerGrid | None = None, method: str = "cramer") -> SolutionPair:
    """Solve lambda u - Div S = 0, div u = 0, S nu = h (faces) mode by mode."""
    grid = h.grid if grid is None else grid
    N = grid.dim
    Ht = grid.tangential_forward(boundary_trace(h, "top"), lead=1)
    Hb = grid.tangential_forward(boundary_trace(h, "bottom"), lead=1)
    bundle = solve_boundary_modes(Ht, Hb, p, cfg, grid, method)
    phys = grid.tangential_inverse(bundle.evaluate(grid.z, 0), lead=1)
    return SolutionPair(LayerField(grid, phys[:N]), LayerField(grid, phys[N:]), bundle)


@dataclass
class FullSolution(SolutionPair):
    parts: dict = field(default_factory=dict)


def solve_full(d: DataBundle, p: ResolventParameter, cfg: LayerConfig,
               grid: LayerGrid | None = None, method: str = "line") -> FullSolution:
    """u = V + v + w, theta = pi + theta_w (divergence fix, whole-space, boundary)."""
    require_sector(p)
    lam, mu = complex(p.lam), cfg.mu
    V, ws, ft, ht = reduce(d, lam, mu, method)
    bo = solve_boundary_only(ht, p, cfg, grid)
    u = V + ws.v + bo.u
    theta = ws.pi + bo.theta
    return FullSolution(u, theta, None, {"V": V, "v": ws.v, "pi": ws.pi, "w": bo, "f_tilde": ft,
                                         "h_tilde": ht})


# ------------------------------------------------------- manufactured data
@dataclass(frozen=True)
class ExpPoly:
    """p(x) e^{r x} with p given by ascending coefficients."""

    coef: tuple
    rate: float = 0.0

    def derivative(self) -> "ExpPoly":
        c = np.asarray(self.coef, complex)
        dc = np.polynomial.polynomial.polyder(c) if len(c) > 1 else np.zeros(1, complex)
        nc = np.zeros(max(len(c), len(dc)), complex)
        nc[:len(dc)] += dc
        nc[:len(c)] += self.rate * c
        return ExpPoly(tuple(nc), self.rate)

    def times_poly(self, q) -> "ExpPoly":
        return ExpPoly(tuple(np.polynomial.polynomial.polymul(self.coef, q)), self.rate)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.coef, complex)) * np.exp(self.rate * x)


@dataclass(frozen=True)
class Term:
    """c e^{i k.x'} P(x_N) with integer mode vector k (frequency 2 pi k/period)."""

    k: tuple
    c: complex
    P: ExpPoly


class SeparableField:
    """Finite sums of separable terms, with exact derivatives."""

    def __init__(self, grid: LayerGrid, terms):
        self.grid = grid
        self.terms = list(terms)

    def freq(self, k) -> np.ndarray:
        return np.array([2 * math.pi * ki / L for ki, L in zip(k, self.grid.period)])

    def d(self, direction: int) -> "SeparableField":
        g = self.grid
        out = []
        for t in self.terms:
            if direction < g.n_t:
                out.append(Term(t.k, t.c * 1j * self.freq(t.k)[direction], t.P))
            else:
                out.append(Term(t.k, t.c, t.P.derivative()))
        return SeparableField(g, out)

    def __add__(self, other):
        return SeparableField(self.grid, self.terms + other.terms)

    def scale(self, a) -> "SeparableField":
        return SeparableField(self.grid, [Term(t.k, t.c * a, t.P) for t in self.terms])

    def times_poly(self, q) -> "SeparableField":
        return SeparableField(self.grid, [Term(t.k, t.c, t.P.times_poly(q)) for t in self.terms])

    def evaluate(self) -> np.ndarray:
        g = self.grid
        out = np.zeros(tuple(g.n_tan) + (g.n_z,), complex)
        tan = [g.x_tan(i) for i in range(g.n_t)]
        for t in self.terms:
            w = self.freq(t.k)
            phase = np.exp(1j * w[0] * tan[0])
            for i in range(1, g.n_t):
                phase = np.multiply.outer(phase, np.exp(1j * w[i] * tan[i]))
            out += t.c * np.multiply.outer(phase, t.P(g.z))
        return out


def _trig(grid, k, kind: str, amp, P: ExpPoly):
    k = tuple(k)
    mk = tuple(-x for x in k)
    if kind == "sin":
        return [Term(k, amp / 2j, P), Term(mk, -amp / 2j, P)]
    if kind == "cos":
        return [Term(k, amp / 2, P), Term(mk, amp / 2, P)]
    if kind == "one":
        return [Term(tuple(0 for _ in k), amp, P)]
    raise ValueError(kind)


def _exact_pair(grid: LayerGrid, u_sep, th_sep) -> SolutionPair:
    fields_ = list(u_sep) + [th_sep]
    derivs = {}
    for order in range(3):
        vals = []
        for F in fields_:
            G = F
            for _ in range(order):
                G = G.d(grid.dim - 1)
            vals.append(G.evaluate())
        derivs[order] = grid.tangential_forward(np.stack(vals), lead=1)
    N = grid.dim
    u = LayerField(grid, np.stack([F.evaluate() for F in u_sep]))
    th = LayerField(grid, th_sep.evaluate())
    return SolutionPair(u, th, GriddedProfiles(grid, derivs))


def _data_from_separable(grid, u_sep, th_sep, lam, mu):
    N = grid.dim
    g_sep = u_sep[0].d(0)
    for j in range(1, N):
        g_sep = g_sep + u_sep[j].d(j)
    f_sep = []
    for j in range(N):
        lap = u_sep[j].d(0).d(0)
        for k in range(1, N):
            lap = lap + u_sep[j].d(k).d(k)
        f_sep.append(u_sep[j].scale(lam) + lap.scale(-mu) + g_sep.d(j).scale(-mu) + th_sep.d(j))
    # h = S(u, theta) e_N times the linear normal blend 2 x_N/delta - 1
    blend = (-1.0, 2.0 / grid.delta)
    h_sep = []
    for j in range(N):
        if j < N - 1:
            S = (u_sep[j].d(N - 1) + u_sep[N - 1].d(j)).scale(mu)
        else:
            S = u_sep[N - 1].d(N - 1).scale(2 * mu) + th_sep.scale(-1.0)
        h_sep.append(S.times_poly(blend))
    f = LayerField(grid, np.stack([F.evaluate() for F in f_sep]))
    g = LayerField(grid, g_sep.evaluate())
    h = LayerField(grid, np.stack([F.evaluate() for F in h_sep]))
    return DataBundle(f, g, h)


def smooth_full_fields(grid: LayerGrid, seed: int = 0, stiffness: float = 1.0):
    """Separable (u, theta) used by the smooth_full case.

    ``stiffness`` is the normal decay rate of the pressure and of u_N; large
    values give boundary-layer profiles that make discretisation error visible.
    """
    rng = np.random.default_rng(seed)
    N, dl = grid.dim, grid.delta
    k = tuple(int(v) for v in rng.integers(1, 3, size=N - 1))
    bump = ExpPoly(tuple(np.polynomial.polynomial.polypow((0.0, dl, -1.0), 2)))  # x^2 (delta-x)^2
    cs = rng.uniform(0.5, 1.5, size=N - 1)
    u_sep = []
    for j in range(N - 1):
        terms = _trig(grid, k, "sin", cs[j], bump)
        terms += _trig(grid, k, "one", 0.3 * cs[j], ExpPoly((0.0, 0.0, dl, -1.0)))
        u_sep.append(SeparableField(grid, terms))
    sig = float(stiffness)
    uN_terms = _trig(grid, k, "cos", 0.7, ExpPoly((1.0, 1.0), -sig))
    u_sep.append(SeparableField(grid, uN_terms))
    th_sep = SeparableField(grid, _trig(grid, k, "cos", 1.0, ExpPoly((1.0,), -sig))
                            + _trig(grid, k, "one", 0.5, ExpPoly((1.0,), -1.0)))
    return u_sep, th_sep


def _single_mode_case(grid, p, cfg, seed):
    rng = np.random.default_rng(seed)
    lam, mu, delta = complex(p.lam), cfg.mu, cfg.delta
    N = grid.dim
    kidx = tuple(int(v) for v in rng.integers(1, max(2, min(grid.n_tan) // 4), size=N - 1))
    xi = np.array([2 * math.pi * kk / L for kk, L in zip(kidx, grid.period)])
    A = float(np.linalg.norm(xi))
    s = symbols_from_A(A, lam, mu, delta, xi_prime=xi)
    x4 = rng.normal(size=4) + 1j * rng.normal(size=4)
    from .boundary import coefficients_from_normal

    c = coefficients_from_normal(s, x4)
    z = grid.z
    perp = np.array([-xi[1], xi[0]]) / A if N == 3 else None
    alpha = rng.normal(size=2) + 1j * rng.normal(size=2)
    derivs = {}
    for order in range(3):
        ud, uN, th = eval_mode_solution(c, s, z, order)
        comps = []
        w = sum(alpha[l] * (sgn ** order) * (-s.B) ** order * np.exp(-s.B * (delta - z if l == 0 else z))
                for l, sgn in ((0, -1.0), (1, 1.0)))
        for j in range(N - 1):
            uj = -1j * xi[j] / A ** 2 * ud
            if perp is not None:
                uj = uj + perp[j] * w
            comps.append(uj)
        prof = np.stack(comps + [uN, th])
        spec = np.zeros((N + 1,) + tuple(grid.n_tan) + (grid.n_z,), complex)
        spec[(slice(None),) + kidx] = prof * grid.tan_weight * np.prod(grid.n_tan)
        derivs[order] = spec
    exact_vals = grid.tangential_inverse(derivs[0], lead=1)
    u = LayerField(grid, exact_vals[:N])
    th = LayerField(grid, exact_vals[N:])
    sol = SolutionPair(u, th, GriddedProfiles(grid, derivs))
    # tractions on the faces from the exact solution
    d1 = grid.tangential_inverse(derivs[1], lead=1)
    h_face = {}
    for side, idx, nu in (("top", -1, 1.0), ("bottom", 0, -1.0)):
        hv = []
        for j in range(N - 1):
            dj_uN = grid.tangential_inverse(
                _tan_mult(grid, derivs[0][N - 1], j), lead=0)
            hv.append(mu * (d1[j][..., idx] + dj_uN[..., idx]) * nu)
        hv.append((2 * mu * d1[N - 1][..., idx] - exact_vals[N][..., idx]) * nu)
        h_face[side] = np.stack(hv)
    zz = z / delta
    hvals = h_face["bottom"][..., None] * (1 - zz) + h_face["top"][..., None] * zz
    h = LayerField(grid, hvals)
    d = DataBundle(LayerField.zeros(grid, N), LayerField.zeros(grid, 1), h)
    return d, sol


def _tan_mult(grid, spec_component, j):
    xi = grid.mode_xi()[..., j]
    return spec_component * (1j * xi)[..., None]


def manufactured_case(kind: str, grid: LayerGrid, p: ResolventParameter, cfg: LayerConfig,
                      seed: int = 0, stiffness: float = 1.0):
    """(DataBundle, exact SolutionPair) for a known solution."""
    if kind == "single_mode_boundary":
        return _single_mode_case(grid, p, cfg, seed)
    if kind == "smooth_full":
        u_sep, th_sep = smooth_full_fields(grid, seed, stiffness)
        d = _data_from_separable(grid, u_sep, th_sep, complex(p.lam), cfg.mu)
        return d, _exact_pair(grid, u_sep, th_sep)
    raise ValueError(f"unknown manufactured kind {kind!r}")


# -------------------------------------------------------------- residuals
def _derivative_fields(s: SolutionPair):
    """First and second derivatives of u and theta.

    Returns grad[c][k] and hess[c][k][l] arrays for c over u components then
    theta; normal derivatives come from the closed-form profiles when present.
    """
    grid = s.u.grid
    N = grid.dim
    allf = LayerField(grid, np.concatenate([s.u.values, s.theta.values]))
    if s.spectral is not None:
        xi = grid.mode_xi()
        D = {o: s.spectral.normal_derivative(o) for o in range(3)}

        def deriv(dirs):
            nN = sum(1 for d in dirs if d == N - 1)
            spec = D[nN]
            for d in dirs:
                if d < N - 1:
                    spec = spec * (1j * xi[..., d])[..., None]
            return grid.tangential_inverse(spec, lead=1)
    else:
        def deriv(dirs):
            f = allf
            for d in dirs:
                f = spectral_derivatives(f, 1, d)
            return f.values

    grad = [deriv((k,)) for k in range(N)]
    hess = [[deriv((k, l)) for l in range(N)] for k in range(N)]
    return grad, hess


def residual_full(s: SolutionPair, d: DataBundle, p: ResolventParameter, cfg: LayerConfig) -> dict:
    grid = s.u.grid
    N = grid.dim
    lam, mu = complex(p.lam), cfg.mu
    grad, hess = _derivative_fields(s)
    u = s.u.values
    th = s.theta.values[0]

    def nrm(v):
        return lq_norm(v, grid, 2.0)

    div = sum(grad[k][k] for k in range(N))
    mom_terms = []
    mom = []
    for j in range(N):
        lap = sum(hess[k][k][j] for k in range(N))
        ddiv = sum(hess[j][k][k] for k in range(N))
        t = [lam * u[j], -mu * lap, -mu * ddiv, grad[j][N]]
        mom_terms.append(t)
        mom.append(sum(t) - d.f.values[j])
    mom = np.stack(mom)
    scale_m = nrm(d.f.values) + sum(nrm(np.stack([t[i] for t in mom_terms])) for i in range(4))
    scale_d = nrm(d.g.values) + sum(nrm(grad[k][k]) for k in range(N))
    out = {
        "momentum": nrm(mom) / scale_m if scale_m > 0 else 0.0,
        "divergence": nrm(div - d.g.values[0]) / scale_d if scale_d > 0 else 0.0,
    }
    for side, idx, nu in (("top", -1, 1.0), ("bottom", 0, -1.0)):
        tr = []
        ref = []
        for j in range(N):
            if j < N - 1:
                Sj = mu * (grad[N - 1][j] + grad[j][N - 1])
            else:
                Sj = 2 * mu * grad[N - 1][N - 1] - th
            tr.append(Sj[..., idx] * nu)
            ref.append(d.h.values[j][..., idx])
        tr, ref = np.stack(tr), np.stack(ref)
        den = np.sqrt(np.sum(np.abs(ref) ** 2)) + np.sqrt(np.sum(np.abs(tr) ** 2))
        out[f"traction_{side}"] = float(np.sqrt(np.sum(np.abs(tr - ref) ** 2)) / den) if den > 0 else 0.0
    return out


def relative_error(a: LayerField, b: LayerField) -> float:
    grid = a.grid
    den = lq_norm(b.values, grid)
    return lq_norm(a.values - b.values, grid) / den if den > 0 else lq_norm(a.values, grid)


def resolvent_ratio(s: SolutionPair, d: DataBundle, p: ResolventParameter, q: float = 2.0,
                    cfg: LayerConfig | None = None) -> float:
    """||(lam u, lam^1/2 grad u, grad^2 u, grad theta)|| / (||f|| + ||(lam^1/2 h, grad h)||)."""
    if np.any(np.abs(d.g.values) > 0):
        raise ValueError("resolvent_ratio requires g = 0")
    grid = s.u.grid
    N = grid.dim
    lam = complex(p.lam)
    sq = np.sqrt(lam)
    grad, hess = _derivative_fields(s)
    lhs_parts = [lam * s.u.values]
    lhs_parts += [sq * grad[k][:N] for k in range(N)]
    lhs_parts += [hess[k][l][:N] for k in range(N) for l in range(N)]
    lhs_parts += [grad[k][N:] for k in range(N)]
    lhs = lq_norm(np.concatenate(lhs_parts), grid, q)
    gh = [spectral_derivatives(d.h, 1, k).values for k in range(N)]
    rhs = lq_norm(d.f.values, grid, q) + lq_norm(np.concatenate([sq * d.h.values] + gh), grid, q)
    if rhs == 0:
        return 0.0
    return lhs / rhs
