import math

import numpy as np
import pytest

from layerstokes.fields import (
    LayerField,
    LayerGrid,
    boundary_trace,
    cutoff_phi,
    dump_field_csv,
    extend_E0,
    extend_Ef,
    extend_odd_even,
    inverse_partial_fourier,
    load_field_csv,
    lq_norm,
    partial_fourier,
    spectral_derivatives,
)


@pytest.fixture
def grid():
    return LayerGrid(3, (8, 6), (2 * math.pi, 3.0), 33, 0.8, 4)


@pytest.mark.parametrize("kw", [
    dict(dim=4), dict(n_tan=(7,)), dict(n_tan=(8, 8)), dict(n_z=3),
    dict(pad_factor=2.0), dict(n_z=34, pad_factor=4.1), dict(delta=0.0),
])
def test_grid_validation(kw):
    base = dict(dim=2, n_tan=(8,), period=(2 * math.pi,), n_z=33, delta=1.0, pad_factor=4.0)
    base.update(kw)
    with pytest.raises(ValueError):
        LayerGrid(**base)


def test_padded_box_holds_the_layer(grid):
    zp = grid.z_pad
    assert zp[grid.k0] == 0.0
    assert zp[grid.k0 + grid.n_z - 1] == pytest.approx(grid.delta)
    assert zp[0] <= -grid.delta / 1.5 and zp[-1] >= grid.delta * 5 / 3


def test_partial_fourier_round_trip(grid):
    rng = np.random.default_rng(0)
    f = LayerField(grid, rng.normal(size=(2, 8, 6, 33)) + 0j)
    back = inverse_partial_fourier(partial_fourier(f))
    assert np.allclose(back.values, f.values, atol=1e-14)


def test_tangential_derivatives_are_spectral(grid):
    X1, X2, Z = grid.coords()
    f = LayerField(grid, (np.sin(2 * X1) * np.cos(2 * math.pi * X2 / 3.0) * Z)[None] + 0j)
    d1 = spectral_derivatives(f, 1, 0).values[0]
    assert np.allclose(d1, 2 * np.cos(2 * X1) * np.cos(2 * math.pi * X2 / 3.0) * Z, atol=1e-13)


def test_normal_derivative_high_order(grid):
    *_, Z = grid.coords()
    f = LayerField(grid, np.exp(1.3 * Z)[None] + 0j)
    for order in (1, 2):
        d = spectral_derivatives(f, order, 2).values[0]
        assert np.max(np.abs(d - 1.3 ** order * np.exp(1.3 * Z))) < 1e-7


def test_cutoffs_partition_unity():
    x = np.linspace(-1, 1, 201)
    assert np.allclose(cutoff_phi(x, 1.0, "phi_0") + cutoff_phi(x, 1.0, "phi_delta"), 1.0)
    assert np.all(cutoff_phi(np.array([0.0, 0.3]), 1.0, "phi_delta") == 0)
    assert np.all(cutoff_phi(np.array([0.67, 1.0]), 1.0, "phi_delta") == 1)


def test_odd_and_even_extensions_reflect(grid):
    rng = np.random.default_rng(1)
    f = LayerField(grid, rng.normal(size=(1, 8, 6, 33)) + 0j)
    k0, n = grid.k0, grid.n_z
    for kind, sign in (("odd_at_0", -1), ("even_at_0", 1)):
        e = extend_odd_even(f, kind).values
        assert np.allclose(e[..., k0 - 5], sign * e[..., k0 + 5])
    for kind, sign in (("odd_at_delta", -1), ("even_at_delta", 1)):
        e = extend_odd_even(f, kind).values
        top = k0 + n - 1
        assert np.allclose(e[..., top + 4], sign * e[..., top - 4])
    assert np.all(extend_odd_even(f, "odd_at_0").values[..., k0] == 0)


def test_zero_extension_halves_faces(grid):
    f = LayerField(grid, np.ones((1, 8, 6, 33), complex))
    e = extend_E0(f).values
    assert e[..., grid.k0].real.max() == 0.5 and e[..., grid.k0 + 1].real.min() == 1.0
    assert np.sum(e) == pytest.approx(8 * 6 * 32)


def test_force_extension_needs_vector(grid):
    with pytest.raises(ValueError):
        extend_Ef(LayerField.zeros(grid, 1))


def test_lq_norm_of_constant(grid):
    v = np.full((1, 8, 6, 33), 2.0)
    vol = 2 * math.pi * 3.0 * 0.8
    assert lq_norm(v, grid, 2.0) == pytest.approx(2 * math.sqrt(vol))
    assert lq_norm(v, grid, 3.0) == pytest.approx(2 * vol ** (1 / 3))


def test_csv_round_trip(tmp_path, grid):
    rng = np.random.default_rng(2)
    f = LayerField(grid, rng.normal(size=(3, 8, 6, 33)) + 1j * rng.normal(size=(3, 8, 6, 33)))
    dump_field_csv(f, tmp_path / "f.csv", "f")
    g = load_field_csv(tmp_path / "f.csv")
    assert g.grid == grid
    assert np.array_equal(g.values, f.values)
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "x1,x2,x3,component,re,im"


def test_boundary_trace_sides(grid):
    *_, Z = grid.coords()
    f = LayerField(grid, Z[None] + 0j)
    assert np.all(boundary_trace(f, "top") == grid.delta)
    assert np.all(boundary_trace(f, "bottom") == 0)
    with pytest.raises(ValueError):
        boundary_trace(f, "left")
