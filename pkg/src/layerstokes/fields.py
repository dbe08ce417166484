"""Grids, partial Fourier transforms, cut-offs and extension operators.

Layout conventions
------------------
* A layer field stores ``values`` with shape ``(ncomp, *n_tan, n_z)``: the
  component axis first, then tangential axes, the normal index innermost.
* The normal grid is the closed uniform grid ``x_N = k delta/(n_z - 1)``.
* Whole-space operations use a periodic normal box of length
  ``pad_factor * delta`` sampled with the same spacing, so the layer points
  are a contiguous slice of the padded grid and no resampling is needed.
* Transforms use numpy FFT ordering; tangential frequencies are
  ``2 pi k / period``.  The forward partial transform carries the quadrature
  weight ``prod(period/n)`` so that it approximates the continuous transform.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

FD_ORDER = 8


@dataclass(frozen=True)
class LayerGrid:
    dim: int = 2
    n_tan: tuple = (32,)
    period: tuple = (2 * math.pi,)
    n_z: int = 65
    delta: float = 1.0
    pad_factor: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "n_tan", tuple(int(n) for n in self.n_tan))
        object.__setattr__(self, "period", tuple(float(p) for p in self.period))
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if len(self.n_tan) != self.dim - 1 or len(self.period) != self.dim - 1:
            raise ValueError("n_tan and period need dim - 1 entries")
        if any(n < 4 or n % 2 for n in self.n_tan):
            raise ValueError("tangential counts must be even and >= 4")
        if self.n_z < 4:
            raise ValueError("n_z must be >= 4")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.pad_factor * 3 > 8:
            raise ValueError("pad_factor must exceed 8/3 so extensions do not wrap")
        n_pad = self.pad_factor * (self.n_z - 1)
        if abs(n_pad - round(n_pad)) > 1e-9:
            raise ValueError("pad_factor * (n_z - 1) must be an integer")

    # ----- normal direction
    @property
    def hz(self) -> float:
        return self.delta / (self.n_z - 1)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, self.delta, self.n_z)

    @property
    def n_pad(self) -> int:
        return int(round(self.pad_factor * (self.n_z - 1)))

    @property
    def k0(self) -> int:
        """Index of x_N = 0 inside the padded grid (layer centred in the box)."""
        return (self.n_pad - (self.n_z - 1)) // 2

    @property
    def z_pad(self) -> np.ndarray:
        return (np.arange(self.n_pad) - self.k0) * self.hz

    # ----- tangential directions
    @property
    def n_t(self) -> int:
        return self.dim - 1

    def x_tan(self, i: int) -> np.ndarray:
        return np.arange(self.n_tan[i]) * (self.period[i] / self.n_tan[i])

    def xi_tan(self, i: int) -> np.ndarray:
        n, L = self.n_tan[i], self.period[i]
        return 2 * math.pi * np.fft.fftfreq(n, d=L / n)

    def mode_xi(self) -> np.ndarray:
        """Wavenumber vectors, shape (*n_tan, N-1)."""
        mesh = np.meshgrid(*[self.xi_tan(i) for i in range(self.n_t)], indexing="ij")
        return np.stack(mesh, axis=-1)

    def mode_A(self) -> np.ndarray:
        return np.sqrt(np.sum(self.mode_xi() ** 2, axis=-1))

    def coords(self):
        """Broadcastable coordinate arrays (x_1, ..., x_{N-1}, x_N)."""
        axes = [self.x_tan(i) for i in range(self.n_t)] + [self.z]
        return np.meshgrid(*axes, indexing="ij")

    @property
    def tan_weight(self) -> float:
        return float(np.prod([L / n for L, n in zip(self.period, self.n_tan)]))

    def tan_axes(self, lead: int = 1) -> tuple:
        return tuple(range(lead, lead + self.n_t))

    def tangential_forward(self, arr, lead: int = None):
        """Partial transform over the trailing N-1 axes of ``arr``."""
        arr = np.asarray(arr)
        axes = tuple(range(arr.ndim - self.n_t, arr.ndim)) if lead is None else self.tan_axes(lead)
        return np.fft.fftn(arr, axes=axes) * self.tan_weight

    def tangential_inverse(self, arr, lead: int = None):
        arr = np.asarray(arr)
        axes = tuple(range(arr.ndim - self.n_t, arr.ndim)) if lead is None else self.tan_axes(lead)
        return np.fft.ifftn(arr, axes=axes) / self.tan_weight

    # ----- padded box
    def padded_axes(self) -> tuple:
        return tuple(range(1, self.dim + 1))

    def padded_k(self) -> list:
        """Wavenumbers on the padded box, each broadcastable to (*n_tan, n_pad)."""
        ks = []
        for i in range(self.n_t):
            shape = [1] * self.dim
            shape[i] = self.n_tan[i]
            ks.append(self.xi_tan(i).reshape(shape))
        kz = 2 * math.pi * np.fft.fftfreq(self.n_pad, d=self.hz)
        shape = [1] * self.dim
        shape[-1] = self.n_pad
        ks.append(kz.reshape(shape))
        return ks

    def padded_ksq(self) -> np.ndarray:
        return sum(k * k for k in self.padded_k())

    def spectral(self, values) -> "SpectralField":
        return SpectralField(self, np.asarray(values, complex))


@dataclass
class LayerField:
    grid: LayerGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        g = self.grid
        if self.values.ndim == g.dim:
            self.values = self.values[None]
        expect = tuple(g.n_tan) + (g.n_z,)
        if self.values.shape[1:] != expect:
            raise ValueError(f"field shape {self.values.shape[1:]} != grid shape {expect}")

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    def component(self, j: int) -> "LayerField":
        return LayerField(self.grid, self.values[j:j + 1])

    def scale(self, c) -> "LayerField":
        return LayerField(self.grid, self.values * c)

    def __add__(self, other):
        return LayerField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return LayerField(self.grid, self.values - other.values)

    @classmethod
    def zeros(cls, grid: LayerGrid, ncomp: int = 1):
        return cls(grid, np.zeros((ncomp,) + tuple(grid.n_tan) + (grid.n_z,), complex))

    @classmethod
    def stack(cls, fields):
        return cls(fields[0].grid, np.concatenate([f.values for f in fields], axis=0))


@dataclass
class PaddedField:
    grid: LayerGrid
    values: np.ndarray

    def with_values(self, v) -> "PaddedField":
        return PaddedField(self.grid, v)

    def __add__(self, other):
        return PaddedField(self.grid, self.values + other.values)


@dataclass
class SpectralField:
    """Partial transform of a layer field: same layout, tangential axes in FFT order.

    ``bundle`` optionally carries a closed-form per-mode representation.
    """

    grid: LayerGrid
    values: np.ndarray
    bundle: object = field(default=None)


def partial_fourier(f: LayerField) -> SpectralField:
    return SpectralField(f.grid, f.grid.tangential_forward(f.values, lead=1))


def inverse_partial_fourier(F: SpectralField) -> LayerField:
    return LayerField(F.grid, F.grid.tangential_inverse(F.values, lead=1))


# ---------------------------------------------------------------- cut-offs
def _blend(t):
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        e0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        e1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return e0 / (e0 + e1)


def cutoff_phi(x, delta: float, which: str = "phi_delta"):
    t = np.abs(np.asarray(x, float)) / delta
    phi = _blend(3.0 * t - 1.0)
    if which == "phi_delta":
        return phi
    if which == "phi_0":
        return 1.0 - phi
    raise ValueError("which must be 'phi_delta' or 'phi_0'")


# ------------------------------------------------------------- extensions
def _pad_zeros(grid: LayerGrid, ncomp: int = 1) -> np.ndarray:
    return np.zeros((ncomp,) + tuple(grid.n_tan) + (grid.n_pad,), complex)


def extend_odd_even(f: LayerField, kind: str) -> PaddedField:
    """Cut-off reflection extensions sampled on the padded box.

    Where an odd extension jumps (at its reflection point), the grid value
    is the mean of the one-sided limits, i.e. zero.
    """
    g = f.grid
    n, k0, z = g.n_z, g.k0, g.z
    out = _pad_zeros(g, f.ncomp)
    lay = slice(k0, k0 + n)
    if kind in ("odd_at_0", "even_at_0"):
        w = cutoff_phi(z, g.delta, "phi_0")
        piece = f.values * w
        sign = -1.0 if kind == "odd_at_0" else 1.0
        out[..., lay] = piece
        # reflected part at x_N = -z_r, r = 1..m (the cut-off vanishes beyond)
        m = min(n - 1, k0)
        out[..., k0 - m:k0] = sign * piece[..., np.arange(m, 0, -1)]
        if sign < 0:
            out[..., k0] = 0.0
    elif kind in ("odd_at_delta", "even_at_delta"):
        w = cutoff_phi(z, g.delta, "phi_delta")
        piece = f.values * w
        sign = -1.0 if kind == "odd_at_delta" else 1.0
        out[..., lay] = piece
        # x_N = 2 delta - z_k for k = n-2..0
        top = k0 + n - 1
        m = min(n - 1, g.n_pad - 1 - top)
        out[..., top + 1:top + 1 + m] = sign * piece[..., np.arange(n - 2, n - 2 - m, -1)]
        if sign < 0:
            out[..., top] = 0.0
    else:
        raise ValueError(f"unknown extension kind {kind!r}")
    return PaddedField(g, out)


def extend_E0(f: LayerField) -> PaddedField:
    """Zero extension; the face values are halved (mean of the jump)."""
    g = f.grid
    out = _pad_zeros(g, f.ncomp)
    out[..., g.k0:g.k0 + g.n_z] = f.values
    out[..., g.k0] *= 0.5
    out[..., g.k0 + g.n_z - 1] *= 0.5
    return PaddedField(g, out)


def extend_Ef(f: LayerField) -> PaddedField:
    g = f.grid
    N = g.dim
    if f.ncomp != N:
        raise ValueError("extend_Ef needs an N-component field")
    parts = []
    for j in range(N):
        fj = f.component(j)
        if j < N - 1:
            e = extend_odd_even(fj, "even_at_0").values + extend_odd_even(fj, "odd_at_delta").values
        else:
            e = extend_odd_even(fj, "odd_at_0").values + extend_odd_even(fj, "even_at_delta").values
        parts.append(e)
    return PaddedField(g, np.concatenate(parts, axis=0))


def restrict(p: PaddedField) -> LayerField:
    g = p.grid
    return LayerField(g, p.values[..., g.k0:g.k0 + g.n_z])


def padded_fft(p: PaddedField) -> np.ndarray:
    return np.fft.fftn(p.values, axes=p.grid.padded_axes())


def padded_ifft_restrict(grid: LayerGrid, hat: np.ndarray) -> LayerField:
    vals = np.fft.ifftn(hat, axes=grid.padded_axes())
    return LayerField(grid, vals[..., grid.k0:grid.k0 + grid.n_z])


# ------------------------------------------------------------ derivatives
def fd_weights(z0: float, xs: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at z0 from nodes xs."""
    n = len(xs)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, xs[0] - z0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, xs[i] - z0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=64)
def fd_matrix(n: int, h: float, order: int) -> np.ndarray:
    """Dense differentiation matrix: centred 8th order, one-sided near the ends."""
    width = FD_ORDER + 1 if order == 1 else FD_ORDER + 2
    width = min(width, n)
    D = np.zeros((n, n))
    half = FD_ORDER // 2
    for i in range(n):
        if half <= i < n - half:
            lo, hi = i - half, i + half + 1
        else:
            lo = min(max(0, i - width // 2), n - width)
            hi = lo + width
        idx = np.arange(lo, hi)
        D[i, lo:hi] = fd_weights(float(i), idx.astype(float), order) / h ** order
    return D


def spectral_derivatives(f: LayerField, order: int, direction: int) -> LayerField:
    """d^order/dx_direction^order; direction N-1 is the normal."""
    g = f.grid
    if direction < g.n_t:
        xi = g.xi_tan(direction)
        shape = [1] * (g.dim + 1)
        shape[1 + direction] = len(xi)
        mult = (1j * xi.reshape(shape)) ** order
        hat = np.fft.fft(f.values, axis=1 + direction)
        return LayerField(g, np.fft.ifft(hat * mult, axis=1 + direction))
    if direction == g.n_t:
        D = fd_matrix(g.n_z, g.hz, order)
        return LayerField(g, f.values @ D.T)
    raise ValueError("direction out of range")


def boundary_trace(f, side: str) -> np.ndarray:
    """Face values, shape (ncomp, *n_tan)."""
    idx = -1 if side == "top" else 0 if side == "bottom" else None
    if idx is None:
        raise ValueError("side must be 'top' or 'bottom'")
    return f.values[..., idx]


# ------------------------------------------------------------------ norms
def trapezoid_weights(grid: LayerGrid) -> np.ndarray:
    w = np.full(grid.n_z, grid.hz)
    w[0] = w[-1] = 0.5 * grid.hz
    return w


def lq_norm(values, grid: LayerGrid, q: float = 2.0) -> float:
    """Discrete L_q norm over the layer of an array (..., *n_tan, n_z).

    Leading axes are treated as components (summed inside the norm).
    """
    v = np.abs(np.asarray(values)) ** q
    w = trapezoid_weights(grid) * grid.tan_weight
    s = np.sum(v * w, axis=-1)
    return float(math.fsum(np.ravel(s)) ** (1.0 / q))


# ------------------------------------------------------------------- I/O
def dump_field_csv(f: LayerField, path, name: str = "field") -> None:
    path = Path(path)
    g = f.grid
    coords = [c.ravel() for c in g.coords()]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(g.dim)] + ["component", "re", "im"])
        for c in range(f.ncomp):
            vals = f.values[c].ravel()
            for k in range(vals.size):
                w.writerow([repr(float(x[k])) for x in coords] + [c, repr(float(vals[k].real)), repr(float(vals[k].imag))])
    meta = {
        "name": name,
        "dim": g.dim,
        "n_tan": list(g.n_tan),
        "period": list(g.period),
        "n_z": g.n_z,
        "delta": g.delta,
        "pad_factor": g.pad_factor,
        "components": f.ncomp,
        "ordering": "component, then tangential indices, normal index innermost",
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_field_csv(path) -> LayerField:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    g = LayerGrid(meta["dim"], tuple(meta["n_tan"]), tuple(meta["period"]), meta["n_z"],
                  meta["delta"], meta["pad_factor"])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    comp = data[:, g.dim].astype(int)
    vals = data[:, g.dim + 1] + 1j * data[:, g.dim + 2]
    ncomp = int(meta["components"])
    shape = tuple(g.n_tan) + (g.n_z,)
    out = np.zeros((ncomp,) + shape, complex)
    for c in range(ncomp):
        out[c] = vals[comp == c].reshape(shape)
    return LayerField(g, out)
