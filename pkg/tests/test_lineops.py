import cmath

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerstokes.lineops import P_NODES, cell_weights, exp_moments, line_convolutions


def piece_integrals(x, kappa, beta, a, b):
    """Closed forms of int_a^b e^{-kappa|x-y|} e^{beta y} dy and its signed twin."""

    def seg(lo, hi, sgn):
        # integrand e^{-kappa sgn (x - y)} e^{beta y} over [lo, hi]
        if hi <= lo:
            return 0.0
        r = beta + sgn * kappa
        pref = cmath.exp(-sgn * kappa * x)
        if abs(r) < 1e-14:
            return pref * (hi - lo)
        return pref * (cmath.exp(r * hi) - cmath.exp(r * lo)) / r

    left = seg(a, min(b, x), 1)      # y < x
    right = seg(max(a, x), b, -1)    # y > x
    return left + right, left - right


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.05, 60.0), st.floats(-40.0, 40.0),
    st.floats(-2.0, 2.0), st.floats(-3.0, 3.0),
)
def test_convolutions_of_piecewise_exponentials(kr, ki, beta, c_in):
    # F = c_in e^{beta y} on the layer [0, 1] and zero outside: jumps at both faces
    kappa = complex(kr, ki)
    n_lay, k0, n = 129, 192, 512
    h = 1.0 / (n_lay - 1)
    y = (np.arange(n) - k0) * h
    inside = (y >= -1e-12) & (y <= 1 + 1e-12)
    # breakpoint samples are replaced by one-sided limits, so their value is irrelevant
    F = np.where(inside, c_in * np.exp(beta * y), 0.0).astype(complex)
    S, T, _ = line_convolutions(F, kappa, h, breaks=(k0, k0 + n_lay - 1),
                                keep=slice(k0, k0 + n_lay))
    xs = y[k0:k0 + n_lay]
    ref = np.array([piece_integrals(x, kappa, beta, 0.0, 1.0) for x in xs]) * c_in
    scale = np.max(np.abs(ref)) + 1e-300
    assert np.max(np.abs(S - ref[:, 0])) / scale < 1e-10
    assert np.max(np.abs(T - ref[:, 1])) / scale < 1e-10


def test_smooth_data_across_a_declared_break():
    # a breakpoint on smooth data must not spoil accuracy
    h = 1 / 64
    y = np.arange(-200, 264) * h
    F = np.exp(-4 * y * y).astype(complex)
    kappa = 1.5 + 0.5j
    S, T, _ = line_convolutions(F, kappa, h, breaks=(200, 264), keep=slice(200, 265))
    mp.mp.dps = 30
    for i in (0, 20, 64):
        x = y[200 + i]
        ref = mp.quad(lambda t: mp.exp(-kappa * abs(x - t)) * mp.exp(-4 * t * t), [-mp.inf, x, mp.inf])
        assert abs(S[i] - complex(ref)) < 1e-10 * abs(complex(ref))


def test_derivative_identities_hold_between_S_and_T():
    # dS/dx = -kappa T, checked by centred differences of the computed S
    h = 1 / 256
    y = np.arange(-300, 557) * h
    F = np.where((y >= 0) & (y <= 1), np.cos(3 * y), 0).astype(complex)
    kappa = 2.0 + 1j
    S, T, _ = line_convolutions(F, kappa, h, breaks=(300, 556), keep=slice(300, 557))
    dS = (S[2:] - S[:-2]) / (2 * h)
    assert np.max(np.abs(dS + kappa * T[1:-1])) < 1e-3 * np.max(np.abs(T))


@pytest.mark.parametrize("c", [0.0, 1e-8, 0.5 + 2j, 29.9, 30.1, 80.0 - 5j, 400.0])
def test_exp_moments_against_mpmath(c):
    mp.mp.dps = 40
    E = exp_moments(np.array([c]))[0]
    for q in range(P_NODES):
        ref = mp.quad(lambda s: mp.exp(-mp.mpc(c) * (1 - s)) * s ** q, [0, 1])
        assert abs(E[q] - complex(ref)) <= 1e-13 * max(abs(complex(ref)), 1e-300)


@pytest.mark.parametrize("offset", [-3, 0, -7])
@pytest.mark.parametrize("mirrored", [False, True])
def test_cell_weights_exact_for_polynomials(offset, mirrored):
    c = 2.3 - 0.7j
    w = cell_weights(np.array(c), offset, P_NODES, mirrored)
    nodes = offset + np.arange(P_NODES, dtype=float)
    for deg in range(P_NODES):
        mp.mp.dps = 30
        kern = (lambda s: mp.exp(-mp.mpc(c) * s)) if mirrored else (lambda s: mp.exp(-mp.mpc(c) * (1 - s)))
        ref = complex(mp.quad(lambda s: kern(s) * s ** deg, [0, 1]))
        # weights carry the conditioning of the 8-point Vandermonde (about 1e3 eps)
        bound = 1e-11 * (np.sum(np.abs(w * nodes ** deg)) + 1)
        assert abs(np.sum(w * nodes ** deg) - ref) < bound


def test_batched_kappa_broadcasts():
    h = 0.05
    F = np.ones((3, 80), complex)
    kappa = np.array([0.5, 1.0, 2.0])
    S, T, _ = line_convolutions(F, kappa, h)
    for i, k in enumerate(kappa):
        Si, Ti, _ = line_convolutions(F[i], k, h)
        assert np.allclose(S[i], Si) and np.allclose(T[i], Ti)
