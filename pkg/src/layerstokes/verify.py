"""Numerical checks of the symbol-level estimates and Monte Carlo R-bounds.

Each scan is vectorised over its samples; ``threads`` splits the samples
into chunks evaluated by a thread pool and merged back in index order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import build_matrix, cofactors, det_factors, det_L_closed
from .fields import LayerGrid, lq_norm
from .symbols import LayerConfig, ResolventParameter, symbols_from_A

SCAN_COLUMNS = ("lambda_re", "lambda_im", "A", "value", "bound", "ratio")
RBOUND_COLUMNS = ("m", "trial", "ratio")


# ------------------------------------------------------------------ types
@dataclass
class ScanGrid:
    lambda_samples: np.ndarray
    A_samples: np.ndarray
    epsilon: float = math.pi / 4
    gamma0: float = 1.0
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambda_samples = np.asarray(self.lambda_samples, complex).ravel()
        self.A_samples = np.asarray(self.A_samples, float).ravel()
        if np.any(self.A_samples <= 0):
            raise ValueError("A samples must be positive")
        lam = self.lambda_samples
        ok = (np.abs(np.angle(lam)) <= math.pi - self.epsilon + 1e-12) & (np.abs(lam) > self.gamma0)
        if not np.all(ok):
            raise ValueError("off-sector: scan grid contains lambda outside the sector")

    @classmethod
    def build(cls, lmin: float, lmax: float, nl: int, amin: float, amax: float, na: int,
              nargs: int, epsilon: float = math.pi / 4, gamma0: float = 1.0) -> "ScanGrid":
        """Log-spaced |lambda| and A, a fan of nargs arguments in |arg| <= pi - epsilon."""
        if lmin <= gamma0:
            raise ValueError("lmin must exceed gamma0")
        mods = np.logspace(math.log10(lmin), math.log10(lmax), nl)
        amax_arg = math.pi - epsilon
        args = np.linspace(-amax_arg, amax_arg, nargs) if nargs > 1 else np.zeros(1)
        lam = (mods[:, None] * np.exp(1j * args[None, :])).ravel()
        A = np.logspace(math.log10(amin), math.log10(amax), na)
        spec = dict(lmin=lmin, lmax=lmax, nl=nl, amin=amin, amax=amax, na=na, nargs=nargs,
                    epsilon=epsilon, gamma0=gamma0)
        return cls(lam, A, epsilon, gamma0, spec)

    def refined(self) -> "ScanGrid":
        """Nested grid with every axis doubled (n -> 2n - 1)."""
        s = dict(self.spec)
        s["nl"] = 2 * s["nl"] - 1
        s["na"] = 2 * s["na"] - 1
        s["nargs"] = 2 * s["nargs"] - 1
        return ScanGrid.build(**s)

    def mesh(self):
        lam = np.repeat(self.lambda_samples, len(self.A_samples))
        A = np.tile(self.A_samples, len(self.lambda_samples))
        return lam, A


@dataclass
class ScanReport:
    rows: dict  # column name -> 1-D array
    summary: dict
    metadata: dict = field(default_factory=dict)
    columns: tuple = SCAN_COLUMNS

    def write(self, out_dir, name: str) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{name}.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            cols = [np.asarray(self.rows[c]) for c in self.columns]
            for vals in zip(*cols):
                w.writerow([_fmt(v) for v in vals])
        json_path = out / f"{name}.json"
        payload = {"summary": _jsonable(self.summary),
                   "metadata": _jsonable({**self.metadata, "version": __version__})}
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _chunked(fn, n: int, threads: int = 1, chunk: int = 4096):
    """Apply fn(slice) over [0, n) in chunks; results concatenated in order."""
    slices = [slice(i, min(n, i + chunk)) for i in range(0, n, chunk)]
    if threads <= 1 or len(slices) == 1:
        parts = [fn(s) for s in slices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(fn, slices))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(len(parts[0])))
    return np.concatenate(parts)


def _scan_rows(lam, A, value, bound):
    return {"lambda_re": lam.real, "lambda_im": lam.imag, "A": A, "value": value,
            "bound": bound, "ratio": value / bound}


# ------------------------------------------------------------ determinant
def scan_det_lower_bound(g: ScanGrid, cfg: LayerConfig, threads: int = 1) -> ScanReport:
    """|det L| against (|lambda|^1/2 + A)^6 min(1, A), plus factor-wise constants."""
    if not g.gamma0 > 0:
        raise ValueError("scan_det_lower_bound needs gamma0 > 0")
    lam, A = g.mesh()

    def work(sl):
        s = symbols_from_A(A[sl], lam[sl], cfg.mu, cfg.delta)
        lp, lm = det_factors(s)
        return np.abs(lp * lm), np.abs(lp), np.abs(lm)

    det, lp, lm = _chunked(work, len(A), threads)
    scale = np.sqrt(np.abs(lam)) + A
    mA = np.minimum(1.0, A)
    bound = scale ** 6 * mA
    rows = _scan_rows(lam, A, det, bound)
    r = rows["ratio"]
    k = int(np.argmin(r))
    # the smaller factor carries min(1, A); assign it per sample
    small = np.minimum(lp, lm) / (scale ** 3 * mA)
    large = np.maximum(lp, lm) / scale ** 3
    summary = {
        "inf_ratio": float(r.min()),
        "sup_ratio": float(r.max()),
        "argmin": {"lambda": complex(lam[k]), "A": float(A[k])},
        "c_factor_small": float(small.min()),
        "c_factor_large": float(large.min()),
        "c_plus": float((lp / (scale ** 3 * mA)).min()),
        "c_minus": float((lm / (scale ** 3 * mA)).min()),
        "samples": int(len(A)),
    }
    return ScanReport(rows, summary, {"scan": "det_lower_bound", "grid": g.spec})


def _inv_det(A, lam, cfg):
    return 1.0 / det_L_closed(symbols_from_A(A, lam, cfg.mu, cfg.delta))


def scan_inv_det_derivatives(g: ScanGrid, cfg: LayerConfig, max_alpha: int = 2,
                             step_scale: float = 1.0, threads: int = 1) -> dict:
    """Fitted constants for (tau d_tau)^l d_xi^alpha (1/det L), l <= 1, |alpha| <= max_alpha.

    Radial reduction: |d_xi f| <= |f_A| and |d_xi d_xi f| <= |f_AA| + |f_A|/A,
    since f depends on xi' only through A.  Returns {(l, a): ScanReport}.
    """
    if not g.gamma0 > 0:
        raise ValueError("scan_inv_det_derivatives needs gamma0 > 0")
    if max_alpha not in (0, 1, 2):
        raise ValueError("max_alpha must be 0, 1 or 2")
    lam, A = g.mesh()

    def radial_parts(a, lv):
        h = 1e-4 * a * step_scale
        f0 = _inv_det(a, lv, cfg)
        fp = _inv_det(a + h, lv, cfg)
        fm = _inv_det(a - h, lv, cfg)
        return np.stack([f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)])

    def measure(parts, a):
        return np.stack([np.abs(parts[0]), np.abs(parts[1]),
                         np.abs(parts[2]) + np.abs(parts[1]) / a])

    def work(sl):
        a, lv = A[sl], lam[sl]
        tau = lv.imag
        k = 1e-4 * np.maximum(np.abs(tau), g.gamma0) * step_scale
        base = radial_parts(a, lv)
        # tau d_tau at fixed gamma, applied to each radial derivative
        tder = tau * (radial_parts(a, lv + 1j * k) - radial_parts(a, lv - 1j * k)) / (2 * k)
        return measure(base, a).T, measure(tder, a).T

    base, tder = _chunked(work, len(A), threads)
    scale = np.sqrt(np.abs(lam)) + A
    reports = {}
    for ell, data in ((0, base), (1, tder)):
        for alpha in range(max_alpha + 1):
            bound = scale ** -6 * (1 + 1 / A) * A ** (-float(alpha))
            rows = _scan_rows(lam, A, data[:, alpha], bound)
            reports[(ell, alpha)] = ScanReport(
                rows, {"fitted_constant": float(np.max(rows["ratio"])), "ell": ell, "alpha": alpha},
                {"scan": "inv_det_derivatives", "grid": g.spec, "step_scale": step_scale})
    return reports


# ---------------------------------------------------------- positivity
def fA_terms(x, A, delta: float = 1.0) -> dict:
    """f_A^+, f_A^- and the gaps p_i - q_i, evaluated without cancellation.

    The regime is lambda > 0 with B = A x, x > 1.
    """
    x = np.asarray(x, float)
    A = np.asarray(A, float)
    s = A * delta
    es = np.exp(-s)
    esx = np.exp(-s * x)
    diff = es * -np.expm1(-s * (x - 1))  # e^{-s} - e^{-s x}
    # plus factor
    p1, q1 = (x * x + 1) ** 2, 4 * x
    p2, q2 = 1 + es, 1 + esx
    p3, q3 = -np.expm1(-s * x), -np.expm1(-s)
    g1 = (x - 1) * (x ** 3 + x * x + 3 * x - 1)
    fplus = g1 * p2 * p3 + q1 * diff * p3 + q1 * q2 * diff
    # minus factor
    m1 = (x - 1) * s
    m2p = (x ** 3 + x * x + 3 * x - 1) * (x + 1)
    m2q = x ** 4 + 2 * x * x + 4 * x + 1
    gap2 = 2 * (x - 1) * (x + 1) ** 2
    m3p = -np.expm1(-s * (x + 1)) / (s * (x + 1))
    m3q = es * -np.expm1(-s * (x - 1)) / (s * (x - 1))
    gap3 = m3p - m3q
    fminus = m1 * (gap2 * m3p + m2q * gap3)
    return {
        "f_plus": fplus, "f_minus": fminus,
        "plus_gaps": (g1, diff, diff), "minus_gaps": (np.zeros_like(m1), gap2, gap3),
        "plus_pq": ((p1, q1), (p2, q2), (p3, q3)),
        "minus_pq": ((m1, m1), (m2p, m2q), (m3p, m3q)),
    }


def check_fA_positivity(x_grid, A_grid, delta: float = 1.0, mu: float = 1.0) -> dict:
    """f_A^{+/-} on the product grid; returns {'plus': report, 'minus': report}."""
    x = np.asarray(x_grid, float)
    A = np.asarray(A_grid, float)
    if np.any(x <= 1):
        raise ValueError("x must exceed 1")
    X, AA = np.meshgrid(x, A, indexing="ij")
    X, AA = X.ravel(), AA.ravel()
    t = fA_terms(X, AA, delta)
    lam = mu * AA ** 2 * (X * X - 1) + 0j
    ingredients_ok = bool(
        all(np.all(gp > 0) for gp in t["plus_gaps"])
        and np.all(t["minus_gaps"][1] > 0) and np.all(t["minus_gaps"][2] > 0)
        and all(np.all(q > 0) for _, q in t["plus_pq"]) and all(np.all(q > 0) for _, q in t["minus_pq"]))
    out = {}
    for key, f, pq in (("plus", t["f_plus"], t["plus_pq"]), ("minus", t["f_minus"], t["minus_pq"])):
        ref = pq[0][0] * pq[1][0] * pq[2][0]
        rows = {"lambda_re": lam.real, "lambda_im": lam.imag, "A": AA, "value": f,
                "bound": np.zeros_like(f), "ratio": f / ref}
        k = int(np.argmin(f))
        out[key] = ScanReport(rows, {"min": float(f.min()), "positive": bool(f.min() > 0),
                                     "argmin": {"x": float(X[k]), "A": float(AA[k])},
                                     "ingredients_ok": ingredients_ok},
                              {"scan": f"fA_{key}", "delta": delta, "x": [float(x.min()), float(x.max()), len(x)],
                               "A": [float(A.min()), float(A.max()), len(A)]})
    return out


# ----------------------------------------------------------- degeneracy
def degeneracy_samples(A_range=(1e-4, 1e-2), delta: float = 1.0, mu: float = 1.0,
                       lam: complex = 0.0, n: int = 41):
    A = np.logspace(math.log10(A_range[0]), math.log10(A_range[1]), n)
    s = symbols_from_A(A, lam, mu, delta, allow_zero=(lam == 0))
    return A, np.abs(det_L_closed(s))


def fit_zero_lambda_degeneracy(A_range=(1e-4, 1e-2), delta: float = 1.0, mu: float = 1.0,
                               lam: complex = 0.0, n: int = 41) -> float:
    """Least-squares slope of log|det L| against log A."""
    A, d = degeneracy_samples(A_range, delta, mu, lam, n)
    slope, _ = np.polyfit(np.log(A), np.log(d), 1)
    return float(slope)


# --------------------------------------------------------- B equivalence
def check_B_equivalence(g: ScanGrid, epsilon: float | None = None, mu: float = 1.0) -> dict:
    """Two-sided constants for Re B, |B| and |D_3| against |lambda|^1/2 + A."""
    lam, A = g.mesh()
    s = symbols_from_A(A, lam, mu, 1.0)
    scale = np.sqrt(np.abs(lam)) + A
    reB, absB, D3 = s.B.real, np.abs(s.B), np.abs(s.D3)
    meta = {"scan": "B_equivalence", "grid": g.spec, "epsilon": g.epsilon if epsilon is None else epsilon}
    rB = _scan_rows(lam, A, reB, scale)
    summary_B = {"c": float(rB["ratio"].min()), "C": float((absB / scale).max())}
    summary_B["ok"] = bool(0 < summary_B["c"] <= summary_B["C"] < np.inf)
    rD = _scan_rows(lam, A, D3, scale ** 3)
    summary_D = {"c": float(rD["ratio"].min()), "C": float(rD["ratio"].max())}
    summary_D["ok"] = bool(0 < summary_D["c"] <= summary_D["C"] < np.inf)
    return {"B": ScanReport(rB, summary_B, meta), "D3": ScanReport(rD, summary_D, meta)}


# ----------------------------------------------------- precision oracles
_LD = np.longdouble
_CLD = np.clongdouble


def extended_matrix(A, lam, mu: float = 1.0, delta: float = 1.0) -> np.ndarray:
    """The 4x4 boundary matrix assembled from scratch in extended precision."""
    A = np.asarray(A, _LD)
    lam = np.asarray(lam, _CLD)
    s = lam / _LD(mu)
    B = np.sqrt(s + A * A)
    BmA = s / (B + A)
    dl = _LD(delta)
    a = np.exp(-A * dl)
    z = BmA * dl
    small = np.abs(z) < _LD(1e-3)
    ser = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(14):
        ser = ser + term
        term = term * (-z) / (k + 2)
    quo = (np.exp(-B * dl) - a) / np.where(small, _CLD(1), BmA)
    M = np.where(small, -dl * a * ser, quo)
    D0, AB2, BpA = B * B + A * A, 2 * A * B, B + A
    L = np.empty(A.shape + (4, 4), _CLD)
    L[..., 0, 0] = -BpA
    L[..., 0, 1] = -D0
    L[..., 0, 2] = -BpA * a - D0 * M
    L[..., 0, 3] = -D0 * a - D0 * BmA * M
    L[..., 1, 0] = L[..., 0, 2]
    L[..., 1, 1] = L[..., 0, 3]
    L[..., 1, 2] = -BpA
    L[..., 1, 3] = -D0
    L[..., 2, 0] = -BmA
    L[..., 2, 1] = AB2
    L[..., 2, 2] = BmA * a - AB2 * M
    L[..., 2, 3] = -AB2 * a - AB2 * BmA * M
    L[..., 3, 0] = -BmA * a + AB2 * M
    L[..., 3, 1] = AB2 * a + AB2 * BmA * M
    L[..., 3, 2] = BmA
    L[..., 3, 3] = -AB2
    return L


def det_by_elimination(L: np.ndarray) -> np.ndarray:
    """Determinant by Gaussian elimination with partial pivoting (any dtype, batched)."""
    U = np.array(L, copy=True)
    n = U.shape[-1]
    det = np.ones(U.shape[:-2], U.dtype)
    U = U.reshape((-1, n, n))
    det = det.reshape(-1)
    rows = np.arange(U.shape[0])
    for k in range(n):
        piv = k + np.argmax(np.abs(U[:, k:, k]), axis=1)
        swap = piv != k
        if np.any(swap):
            r = rows[swap]
            tmp = U[r, k, :].copy()
            U[r, k, :] = U[r, piv[swap], :]
            U[r, piv[swap], :] = tmp
            det[swap] = -det[swap]
        d = U[:, k, k]
        det = det * d
        safe = np.where(d == 0, 1, d)
        for i in range(k + 1, n):
            f = U[:, i, k] / safe
            U[:, i, k:] -= f[:, None] * U[:, k, k:]
    return det.reshape(L.shape[:-2])


def _det3(m):
    return (m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]))


def signed_minors(L: np.ndarray) -> np.ndarray:
    C = np.empty(L.shape, L.dtype)
    for i in range(4):
        for j in range(4):
            m = np.delete(np.delete(L, i, -2), j, -1)
            C[..., i, j] = (-1) ** (i + j) * _det3(m)
    return C


def sector_samples(n: int, seed: int = 0, epsilon: float = math.pi / 4, gamma0: float = 1.0,
                   A_range=(1e-3, 1e3), lam_max: float = 1e4):
    rng = np.random.default_rng(seed)
    A = 10 ** rng.uniform(math.log10(A_range[0]), math.log10(A_range[1]), n)
    r = 10 ** rng.uniform(math.log10(gamma0), math.log10(lam_max), n)
    r = np.maximum(r, gamma0 * (1 + 1e-9))
    th = rng.uniform(-(math.pi - epsilon), math.pi - epsilon, n)
    return A, r * np.exp(1j * th)


def crosscheck_det(sample_count: int = 10_000, seed: int = 0, epsilon: float = math.pi / 4,
                   gamma0: float = 1.0, cfg: LayerConfig = LayerConfig()) -> dict:
    A, lam = sector_samples(sample_count, seed, epsilon, gamma0)
    closed = det_L_closed(symbols_from_A(A, lam, cfg.mu, cfg.delta))
    ref = det_by_elimination(extended_matrix(A, lam, cfg.mu, cfg.delta))
    ref = ref.astype(complex)
    rel = np.abs(closed - ref) / np.abs(ref)
    k = int(np.argmax(rel))
    return {"max_rel": float(rel.max()), "worst": {"A": float(A[k]), "lambda": complex(lam[k])},
            "samples": sample_count}


CofactorFloor = 1e-12


def crosscheck_cofactors(sample_count: int = 10_000, seed: int = 0, epsilon: float = math.pi / 4,
                         gamma0: float = 1.0, cfg: LayerConfig = LayerConfig()) -> dict:
    """Closed-form cofactors against extended-precision signed minors.

    Per-entry error is |dC_ij| / max(|C_ij|, floor * max|C|); entries far
    below the largest one underflow or cancel and carry no relative digits.
    """
    A, lam = sector_samples(sample_count, seed, epsilon, gamma0)
    s = symbols_from_A(A, lam, cfg.mu, cfg.delta)
    C = cofactors(s)
    Le = extended_matrix(A, lam, cfg.mu, cfg.delta)
    Ce = signed_minors(Le).astype(complex)
    err = np.abs(C - Ce)
    big = np.abs(Ce).max(axis=(-1, -2), keepdims=True)
    rel = err / np.maximum(np.abs(Ce), CofactorFloor * big)
    normwise = err.max(axis=(-1, -2)) / big[..., 0, 0]
    L = build_matrix(s)
    det = det_L_closed(s)
    adj = np.swapaxes(C, -1, -2)
    prod = L @ adj
    eye = np.eye(4) * det[..., None, None]
    adj_res = np.abs(prod - eye).max(axis=(-1, -2)) / (
        np.abs(L).max(axis=(-1, -2)) * np.abs(adj).max(axis=(-1, -2)))
    k = int(np.argmax(rel.max(axis=(-1, -2))))
    return {"max_rel": float(rel.max()), "max_normwise": float(normwise.max()),
            "adjugate_residual": float(adj_res.max()),
            "worst": {"A": float(A[k]), "lambda": complex(lam[k])}, "samples": sample_count}


# ---------------------------------------------------------- R-bounds
def default_lambda_set(epsilon: float = math.pi / 4, gamma0: float = 0.1) -> np.ndarray:
    """32 sector points: 8 moduli in [1, 10^4] times 4 arguments."""
    mods = np.logspace(0, 4, 8)
    amax = math.pi - epsilon
    args = np.array([-amax, -amax / 3, amax / 3, amax])
    lam = (mods[:, None] * np.exp(1j * args[None, :])).ravel()
    if np.any(np.abs(lam) <= gamma0):
        raise ValueError("lambda set must lie outside |lambda| <= gamma0")
    return lam


@dataclass
class _Responses:
    """Linear maps from face data of each mode to the output and input fields."""

    out: np.ndarray  # (2N, n_out, *n_tan, n_z): response to unit trace (side, component)
    inp: np.ndarray  # (2N, n_in, *n_tan, n_z)


def _mode_responses(lam: complex, op_tag: str, grid: LayerGrid, cfg: LayerConfig,
                    p_template: ResolventParameter) -> _Responses:
    from .pipeline import solve_boundary_modes

    N = grid.dim
    xi = grid.mode_xi()
    z = grid.z
    p = ResolventParameter(lam, p_template.epsilon, p_template.gamma0)
    outs, inps = [], []
    shape = (N,) + tuple(grid.n_tan)
    sq = np.sqrt(complex(lam))
    for side in ("top", "bottom"):
        for comp in range(N):
            Ht = np.zeros(shape, complex)
            Hb = np.zeros(shape, complex)
            (Ht if side == "top" else Hb)[comp] = 1.0
            bundle = solve_boundary_modes(Ht, Hb, p, cfg, grid)
            D = {o: bundle.evaluate(z, o) for o in range(3)}

            def deriv(dirs, D=D):
                spec = D[sum(1 for d in dirs if d == N - 1)]
                for d in dirs:
                    if d < N - 1:
                        spec = spec * (1j * xi[..., d])[..., None]
                return spec

            if op_tag == "lambda_S":
                out = lam * D[0][:N]
            elif op_tag == "grad2_S":
                out = np.concatenate([deriv((k, l))[:N] for k in range(N) for l in range(N)])
            elif op_tag == "gradP":
                out = np.stack([deriv((k,))[N] for k in range(N)])
            else:
                raise ValueError(f"unknown op_tag {op_tag!r}")
            outs.append(out)
            # data field h(x) = h_bot (1 - x/delta) + h_top x/delta, one unit component
            w = z / grid.delta if side == "top" else 1 - z / grid.delta
            dw = (1.0 if side == "top" else -1.0) / grid.delta
            hval = np.zeros((N,) + tuple(grid.n_tan) + (grid.n_z,), complex)
            hval[comp] = w
            dh = [hval * (1j * xi[..., k])[..., None] for k in range(N - 1)]
            dn = np.zeros_like(hval)
            dn[comp] = dw
            dh.append(dn)
            tup = [sq * hval[:N - 1], hval[N - 1:]] + dh
            inps.append(np.concatenate(tup))
    return _Responses(np.stack(outs), np.stack(inps))


@dataclass
class RBoundStats:
    m: int
    ratios: np.ndarray
    rms_ratios: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    @property
    def mean_ratio(self) -> float:
        return float(self.ratios.mean())

    def rows(self) -> dict:
        return {"m": np.full(len(self.ratios), self.m), "trial": np.arange(len(self.ratios)),
                "ratio": self.ratios}


class RBoundEstimator:
    """Monte Carlo estimate of the randomized-sum constant of an operator family.

    Input data are band-limited face traces blended linearly across the
    layer; the operator family member for lambda_j maps them to
    lambda_j u, grad^2 u or grad theta of the boundary-only solution.
    """

    def __init__(self, op_tag: str, lambda_set, grid: LayerGrid, cfg: LayerConfig,
                 p_template: ResolventParameter | None = None, band: int = 3, q: float = 2.0):
        self.op_tag = op_tag
        self.lambda_set = np.asarray(lambda_set, complex)
        self.grid = grid
        self.cfg = cfg
        self.q = q
        self.band = band
        pt = p_template or ResolventParameter(1.0, math.pi / 4, 0.1)
        self.resp = [_mode_responses(l, op_tag, grid, cfg, pt) for l in self.lambda_set]
        kidx = [np.fft.fftfreq(n, 1.0 / n) for n in grid.n_tan]
        mesh = np.meshgrid(*kidx, indexing="ij")
        self.mask = np.all([np.abs(k) <= band for k in mesh], axis=0)

    def _apply(self, j: int, coef: np.ndarray):
        """Physical output and input fields for trace coefficients coef (2N, *n_tan)."""
        r = self.resp[j]
        c = coef[:, None, ..., None]
        out = np.sum(r.out * c, axis=0)
        inp = np.sum(r.inp * c, axis=0)
        g = self.grid
        return g.tangential_inverse(out, lead=1), g.tangential_inverse(inp, lead=1)

    def run(self, m: int, trials: int, seed: int = 0, signs: int = 16) -> RBoundStats:
        rng = np.random.default_rng([seed, m])
        N = self.grid.dim
        ratios = np.empty(trials)
        rms = np.empty(trials)
        for t in range(trials):
            lam_idx = rng.integers(0, len(self.lambda_set), size=m)
            Y, X = [], []
            for j in lam_idx:
                coef = (rng.normal(size=(2 * N,) + self.mask.shape)
                        + 1j * rng.normal(size=(2 * N,) + self.mask.shape)) * self.mask
                y, x = self._apply(int(j), coef)
                Y.append(y)
                X.append(x)
            Y, X = np.stack(Y), np.stack(X)
            r = rng.choice([-1.0, 1.0], size=(signs, m))
            SY = np.tensordot(r, Y, axes=(1, 0))
            SX = np.tensordot(r, X, axes=(1, 0))
            ny = np.array([lq_norm(v, self.grid, self.q) for v in SY]) ** self.q
            nx = np.array([lq_norm(v, self.grid, self.q) for v in SX]) ** self.q
            ratios[t] = (ny.mean() / nx.mean()) ** (1 / self.q)
            # exact sign expectation for q = 2 (Rademacher orthogonality)
            ey = sum(lq_norm(v, self.grid, 2.0) ** 2 for v in Y)
            ex = sum(lq_norm(v, self.grid, 2.0) ** 2 for v in X)
            rms[t] = math.sqrt(ey / ex)
        return RBoundStats(m, ratios, rms)


def estimate_r_bound(op_tag: str, lambda_set, m: int, trials: int, q: float = 2.0, seed: int = 0,
                     grid: LayerGrid | None = None, cfg: LayerConfig | None = None,
                     estimator: RBoundEstimator | None = None) -> RBoundStats:
    if estimator is None:
        cfg = cfg or LayerConfig(1.0, 1.0, 2)
        grid = grid or LayerGrid(cfg.dim, (16,) * (cfg.dim - 1), (2 * math.pi,) * (cfg.dim - 1), 33,
                                 cfg.delta, 4)
        estimator = RBoundEstimator(op_tag, lambda_set, grid, cfg, q=q)
    return estimator.run(m, trials, seed)


def r_bound_trend(op_tag: str = "lambda_S", ms=(1, 2, 4, 8, 16, 32), trials: int = 200,
                  seed: int = 0, lambda_set=None, grid: LayerGrid | None = None,
                  cfg: LayerConfig | None = None, q: float = 2.0):
    """Per-m statistics and the growth factor max_m(max ratio) / max ratio at m = 1."""
    cfg = cfg or LayerConfig(1.0, 1.0, 2)
    grid = grid or LayerGrid(cfg.dim, (16,) * (cfg.dim - 1), (2 * math.pi,) * (cfg.dim - 1), 33,
                             cfg.delta, 4)
    lam = default_lambda_set() if lambda_set is None else lambda_set
    est = RBoundEstimator(op_tag, lam, grid, cfg, q=q)
    stats = [est.run(m, trials, seed) for m in ms]
    base = stats[0].max_ratio
    growth = max(s.max_ratio for s in stats) / base
    rows = {c: np.concatenate([s.rows()[c] for s in stats]) for c in RBOUND_COLUMNS}
    summary = {
        "op_tag": op_tag,
        "per_m": [{"m": s.m, "max": s.max_ratio, "mean": s.mean_ratio} for s in stats],
        "growth": growth,
        "bounded": bool(growth <= 2.0),
        "trials": trials,
        "q": q,
    }
    report = ScanReport(rows, summary, {"scan": "r_bound", "seed": seed,
                                        "lambda_set": [complex(l) for l in lam]}, RBOUND_COLUMNS)
    return stats, report


__all__ = [
    "ScanGrid", "ScanReport", "scan_det_lower_bound", "scan_inv_det_derivatives",
    "check_fA_positivity", "fit_zero_lambda_degeneracy", "check_B_equivalence",
    "estimate_r_bound", "r_bound_trend", "crosscheck_cofactors", "crosscheck_det",
    "fA_terms", "extended_matrix", "det_by_elimination", "signed_minors",
]
