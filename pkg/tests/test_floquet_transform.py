import numpy as np
import pytest

from blochlab import floquet_transform as ft
from blochlab import potential as pot
from blochlab.errors import TruncationDominated

TWO_PI = 2 * np.pi


def random_cells(rng, l_max=4, s=6, dim=1):
    n = 2 * l_max + 1
    shape = (n,) * dim + (s,) * dim
    return ft.CellArray(dim, l_max, s,
                        rng.normal(size=shape) + 1j * rng.normal(size=shape))


def test_single_cell_support():
    rng = np.random.default_rng(0)
    s = 6
    vals = np.zeros((9, s), dtype=complex)
    vals[4] = rng.normal(size=s)
    f = ft.CellArray(1, 4, s, vals)
    k = np.array([1.3])
    out = ft.forward(f, k)
    x0 = f.cell_offsets
    assert np.max(np.abs(out - vals[4] * np.exp(-1j * k[0] * x0))) < 1e-14
    # norm independent of real k
    norms = [np.linalg.norm(ft.forward(f, [kk])) for kk in (0.2, 1.0, 5.1)]
    assert np.ptp(norms) < 1e-12


def test_delta_at_cell_centers():
    s = 8
    vals = np.zeros((9, s), dtype=complex)
    vals[4, s // 2] = 1.0  # f(center of cell 0) = 1, all else 0
    f = ft.CellArray(1, 4, s, vals)
    for kk in (0.0, 0.9, 4.7):
        out = ft.forward(f, [kk])
        assert abs(abs(out[s // 2]) - 1.0) < 1e-14


def test_forward_matches_reordered_sum():
    """Second implementation with a different summation order."""
    rng = np.random.default_rng(1)
    f = random_cells(rng)
    k = np.array([rng.uniform(0, TWO_PI)])
    out = ft.forward(f, k)
    x0 = f.cell_offsets
    direct = np.zeros_like(out)
    for l in reversed(range(-f.l_max, f.l_max + 1)):
        direct = direct + f.values[l + f.l_max] * np.exp(-1j * k[0] * (x0 + l))
    assert np.max(np.abs(out - direct)) < 1e-12


def test_roundtrip_exact():
    rng = np.random.default_rng(2)
    f = random_cells(rng)
    back = ft.inverse(ft.forward_field(f))
    assert np.max(np.abs(back.values - f.values)) < 1e-12


def test_roundtrip_2d():
    rng = np.random.default_rng(3)
    f = random_cells(rng, l_max=2, s=4, dim=2)
    back = ft.inverse(ft.forward_field(f))
    assert np.max(np.abs(back.values - f.values)) < 1e-12


def test_shift_covariance():
    rng = np.random.default_rng(4)
    vals = np.zeros((9, 6), dtype=complex)
    vals[3:6] = rng.normal(size=(3, 6))
    f = ft.CellArray(1, 4, 6, vals)
    k = np.array([0.7])
    lhs = ft.forward(ft.shift(f, [2]), k)
    rhs = np.exp(-1j * k[0] * 2) * ft.forward(f, k)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_plancherel():
    rng = np.random.default_rng(5)
    f = random_cells(rng)
    field = ft.forward_field(f)
    lhs = np.sum(np.abs(f.values) ** 2)
    rhs = np.sum(np.abs(field.values) ** 2) / f.n_cells
    assert abs(lhs - rhs) / lhs < 1e-12


def test_quasi_periodicity():
    rng = np.random.default_rng(6)
    f = random_cells(rng)
    k = np.array([1.1])
    lhs = ft.forward(f, k + TWO_PI)
    rhs = np.exp(-2j * np.pi * f.cell_offsets) * ft.forward(f, k)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_inverse_grid_mismatch():
    rng = np.random.default_rng(7)
    f = random_cells(rng)
    field = ft.forward_field(f)
    bad = ft.FloquetField(dim=1, l_max=3, samples_per_axis=6,
                          values=field.values[:7])
    with pytest.raises(ValueError):
        ft.inverse(bad)


# ---------------------------------------------------------------------------
# block diagonalization


def packet(x):
    r2 = np.sum(x ** 2, axis=-1)
    return np.exp(-r2) * np.exp(1j * 2.0 * x[..., 0])


def test_diagonalization_residual_free():
    f = ft.CellArray.from_function(packet, 1, 8, 32)
    r = ft.diagonalization_residual(f, pot.free(1), [[0.3], [2.0], [5.0]])
    assert r < 1e-8


def test_diagonalization_residual_constant_shift():
    # a constant potential commutes with everything: residual unchanged
    f = ft.CellArray.from_function(packet, 1, 8, 32)
    ks = [[0.9]]
    r0 = ft.diagonalization_residual(f, pot.free(1), ks)
    rc = ft.diagonalization_residual(f, pot.make_potential(1, {(0,): 3.0}), ks)
    assert abs(r0 - rc) < 1e-10


def test_diagonalization_residual_mathieu(mathieu1):
    f = ft.CellArray.from_function(packet, 1, 8, 32)
    r = ft.diagonalization_residual(f, mathieu1, [[0.3], [2.0], [5.0]])
    assert r < 1e-6


def test_diagonalization_residual_refines(mathieu1):
    """Sharper sampling must cut the residual by at least the stencil order."""

    def narrow(x):
        r2 = np.sum(x ** 2, axis=-1)
        return np.exp(-25.0 * r2)

    r8 = ft.diagonalization_residual(ft.CellArray.from_function(narrow, 1, 6, 8),
                                     mathieu1, [[1.0]])
    r16 = ft.diagonalization_residual(ft.CellArray.from_function(narrow, 1, 6, 16),
                                      mathieu1, [[1.0]])
    assert r8 / r16 > 16.0


def test_guard_band_violation_flagged():
    def wide(x):
        return np.exp(-0.01 * np.sum(x ** 2, axis=-1))

    f = ft.CellArray.from_function(wide, 1, 4, 8)
    with pytest.raises(ValueError):
        ft.diagonalization_residual(f, pot.free(1), [[0.3]])


# ---------------------------------------------------------------------------
# growth order along imaginary directions


def delta_profile_cells(l_max, s, envelope):
    """Cell norms equal to envelope(l), concentrated at intra-cell offset 0."""
    prof = np.zeros(s)
    prof[0] = 1.0
    ls = np.arange(-l_max, l_max + 1)
    return ft.CellArray(1, l_max, s,
                        (envelope(ls)[:, None] * prof[None, :]).astype(complex))


def test_growth_order_gaussian_cells():
    # cell norms e^{-l^2}: sum_l e^{tau l - l^2} ~ e^{tau^2/4}, order 2
    f = delta_profile_cells(8, 6, lambda l: np.exp(-l.astype(float) ** 2))
    fit = ft.growth_order_probe(f, 0, np.linspace(1.0, 6.0, 24))
    assert abs(fit.order - 2.0) < 0.2


def test_growth_order_single_cell():
    s = 6
    vals = np.zeros((17, s), dtype=complex)
    vals[8, s // 2] = 1.0
    f = ft.CellArray(1, 8, s, vals)
    fit = ft.growth_order_probe(f, 0, np.linspace(1.0, 6.0, 24))
    assert abs(fit.order - 1.0) < 0.1


def test_growth_order_slow_decay_wide_tolerance():
    """Cell decay e^{-|l|^{4/3}} maps to order 4; truncation caps the probed
    tau (outer-shell budget), so the tolerance stays wide."""
    f = delta_profile_cells(40, 4, lambda l: np.exp(-np.abs(l.astype(float)) ** (4 / 3)))
    fit = ft.growth_order_probe(f, 0, np.linspace(2.0, 3.6, 24), decades=4.0)
    assert abs(fit.order - 4.0) < 0.8


def test_growth_probe_refusal():
    f = delta_profile_cells(40, 4, lambda l: np.exp(-np.abs(l.astype(float)) ** (4 / 3)))
    with pytest.raises(TruncationDominated) as err:
        ft.growth_order_probe(f, 0, [5.5, 6.0, 6.5, 7.0])
    assert err.value.tau == pytest.approx(5.5)


def test_growth_probe_requires_decayed_input():
    f = delta_profile_cells(4, 4, lambda l: np.exp(-0.1 * np.abs(l.astype(float))))
    with pytest.raises(ValueError):
        ft.growth_order_probe(f, 0, [1.0, 2.0, 3.0, 4.0])


def test_legendre_growth_coefficient():
    """Fitted coefficient b against sup_t(tau t - t^2) / tau^2 = 1/4."""
    f = delta_profile_cells(8, 6, lambda l: np.exp(-l.astype(float) ** 2))
    fit = ft.growth_order_probe(f, 0, np.linspace(1.0, 6.0, 24))
    t = np.linspace(0.0, 20.0, 4001)
    legendre = max(5.0 * t - t ** 2) / 5.0 ** 2  # representative tau = 5
    assert abs(fit.coefficient - legendre) / legendre < 0.2
