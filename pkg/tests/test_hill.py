import numpy as np
import pytest

from blochlab import hill
from blochlab import potential as pot
from blochlab.errors import ResolutionFailure


def test_monodromy_free_closed_form():
    # q=0, lam=pi^2: cos(pi x), sin(pi x)/pi over one period
    mo = hill.monodromy(pot.free(1), np.pi ** 2)
    assert np.max(np.abs(mo.matrix - np.diag([-1.0, -1.0]))) < 1e-9


def test_monodromy_free_negative_energy():
    d = hill.discriminant(pot.free(1), -1.0)
    assert abs(d - 2 * np.cosh(1.0)) < 1e-9
    assert abs(d.imag) < 1e-10


def test_monodromy_tol_validation(mathieu1):
    with pytest.raises(ValueError):
        hill.monodromy(mathieu1, 1.0, tol=1e-5)
    with pytest.raises(ValueError):
        hill.monodromy(mathieu1, 1.0, tol=1e-14)


def test_mathieu_two_integrator_agreement(mathieu1):
    """Adaptive pair vs fixed-step Richardson RK4: independent routes."""
    mo = hill.monodromy(mathieu1, 1.0)
    assert abs(mo.det - 1.0) < 1e-10
    scan, err = hill.discriminant_scan(mathieu1, [1.0])
    assert abs(mo.trace - scan[0]) < 1e-9
    assert err[0] < 1e-11


def test_wronskian_invariant(random_potential):
    rng = np.random.default_rng(7)
    tol = 1e-10
    for _ in range(100):
        q = random_potential(rng, amp=1.0)
        lam = complex(rng.uniform(-10, 30), rng.uniform(-3, 3))
        mo = hill.monodromy(q, lam, tol)
        assert abs(mo.det - 1.0) < 10 * tol


def test_discriminant_real_for_real_arguments(random_potential):
    rng = np.random.default_rng(8)
    for _ in range(10):
        q = random_potential(rng)
        d = hill.discriminant(q, rng.uniform(-5, 40))
        assert abs(d.imag) < 1e-10


def test_discriminant_free_values():
    q0 = pot.free(1)
    assert hill.discriminant(q0, 4 * np.pi ** 2).real == pytest.approx(2.0, abs=1e-9)
    assert hill.discriminant(q0, np.pi ** 2).real == pytest.approx(-2.0, abs=1e-9)
    assert hill.discriminant(q0, 0.0).real == pytest.approx(2.0, abs=1e-9)


def test_bands_free_no_gaps():
    bands = hill.bands_1d(pot.free(1), 100.0)
    assert len(bands) == 1
    assert abs(bands[0][0]) < 1e-8 and bands[0][1] == pytest.approx(100.0)


def test_bands_constant_shift():
    c = 2.5
    bands = hill.bands_1d(pot.make_potential(1, {(0,): c}), 100.0)
    assert len(bands) == 1
    assert bands[0][0] == pytest.approx(c, abs=1e-8)


def test_mathieu_first_gap(mathieu_bands):
    gaps = hill.gaps_from_bands(mathieu_bands)
    lo, hi = gaps[0]
    # leading order: gap centered near pi^2 with width ~ 2|qhat(1)| = 2
    assert abs(0.5 * (lo + hi) - np.pi ** 2) < 0.3
    assert abs((hi - lo) - 2.0) < 0.15


def test_floquet_exponent_free():
    q0 = pot.free(1)
    assert abs(hill.floquet_exponent(q0, 1.0) - 1.0) < 1e-9
    assert abs(hill.floquet_exponent(q0, -1.0) - 1j) < 1e-9


def test_floquet_exponent_in_gap(mathieu1, mathieu_bands):
    gaps = hill.gaps_from_bands(mathieu_bands)
    lam = 0.5 * (gaps[0][0] + gaps[0][1])
    k = hill.floquet_exponent(mathieu1, lam)
    assert abs(k.real - np.pi) < 1e-8
    assert k.imag > 0.01


def test_band_interior_iff_real_exponent(mathieu1, mathieu_bands):
    for a, b in mathieu_bands[:2]:
        k = hill.floquet_exponent(mathieu1, 0.5 * (a + b))
        assert abs(k.imag) < 1e-7
    for lo, hi in hill.gaps_from_bands(mathieu_bands)[:2]:
        k = hill.floquet_exponent(mathieu1, 0.5 * (lo + hi))
        assert k.imag > 1e-4


def test_bands_lambda_max_validation(mathieu1):
    with pytest.raises(ValueError):
        hill.bands_1d(mathieu1, -50.0)


def test_discriminant_model_roots(mathieu1, mathieu_bands):
    model = hill.DiscriminantModel(mathieu1, -3.0, 12.0)
    assert model.err < 1e-10
    # D(mu) = 2 cos(k) at k=1 has exactly one branch in band 1
    target = 2 * np.cos(1.0)
    roots = model.real_roots(target)
    inside = [r for r in roots if mathieu_bands[0][0] <= r <= mathieu_bands[0][1]]
    assert len(inside) >= 1
    mu = inside[0]
    assert abs(hill.discriminant(mathieu1, mu) - target) < 1e-8


def test_thin_high_gap_is_resolved(mathieu1):
    """Third Mathieu gap is ~3e-4 wide with |D|-2 ~ 7e-11; the scan must
    still find it (this is what the Richardson accuracy buys)."""
    bands = hill.bands_1d(mathieu1, 100.0)
    gaps = hill.gaps_from_bands(bands)
    assert len(gaps) == 3
    width = gaps[2][1] - gaps[2][0]
    assert 1e-4 < width < 1e-3
