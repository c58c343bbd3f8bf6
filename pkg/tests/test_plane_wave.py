import numpy as np
import pytest

from blochlab import hill
from blochlab import plane_wave as pw
from blochlab import potential as pot

PI2 = 4 * np.pi ** 2


def test_assemble_free_diagonal():
    basis = pw.PlaneWaveBasis.create(1, 1)
    m = pw.assemble(basis, pot.free(1), [0.0], 0.0)
    assert np.allclose(np.diag(m.entries), [PI2, 0.0, PI2])
    assert np.count_nonzero(m.entries - np.diag(np.diag(m.entries))) == 0
    assert m.hermitian

    m2 = pw.assemble(basis, pot.free(1), [1.0], 1.0)
    expect = [(1 - 2 * np.pi) ** 2 - 1, -1 + 1, (1 + 2 * np.pi) ** 2 - 1]
    assert np.allclose(np.diag(m2.entries), expect)


def test_assemble_mathieu_tridiagonal(mathieu1):
    basis = pw.PlaneWaveBasis.create(1, 1)
    m = pw.assemble(basis, mathieu1, [0.0], 0.0)
    expect = np.diag([PI2, 0.0, PI2]).astype(complex)
    expect += np.diag([1.0, 1.0], 1) + np.diag([1.0, 1.0], -1)
    assert np.max(np.abs(m.entries - expect)) < 1e-14


def test_assemble_dim_mismatch():
    basis = pw.PlaneWaveBasis.create(2, 2)
    with pytest.raises(ValueError):
        pw.assemble(basis, pot.free(1), [0.0, 0.0], 0.0)


def test_log_det_singular_reports_minus_inf():
    basis = pw.PlaneWaveBasis.create(1, 1)
    ld = pw.log_det(pw.assemble(basis, pot.free(1), [1.0], 1.0))
    assert ld.real == -np.inf


def test_log_det_free_product():
    basis = pw.PlaneWaveBasis.create(1, 1)
    ld = pw.log_det(pw.assemble(basis, pot.free(1), [0.0], -1.0))
    assert ld.real == pytest.approx(2 * np.log(PI2 + 1), abs=1e-12)
    assert abs(ld.imag) < 1e-12


def test_log_det_matches_direct_determinant(mathieu1):
    basis = pw.PlaneWaveBasis.create(1, 4)
    m = pw.assemble(basis, mathieu1, [0.3], 2.0)
    ld = pw.log_det(m)
    direct = np.linalg.det(m.entries)
    value = np.exp(ld.real) * np.exp(1j * ld.imag)
    assert abs(value - direct) < 1e-9 * abs(direct)


def test_hermitian_spectrum_free():
    basis = pw.PlaneWaveBasis.create(1, 1)
    vals = pw.hermitian_spectrum(pw.assemble(basis, pot.free(1), [0.0], 0.0))
    assert np.allclose(vals, [0.0, PI2, PI2])
    # band crossing at the zone corner: doubly degenerate lowest value
    vals = pw.hermitian_spectrum(pw.assemble(basis, pot.free(1), [np.pi], 0.0))
    assert np.allclose(vals, [np.pi ** 2, np.pi ** 2, 9 * np.pi ** 2])


def test_hermitian_spectrum_rejects_complex_k(mathieu1, basis8):
    m = pw.assemble(basis8, mathieu1, [0.3 + 0.2j], 0.0)
    assert not m.hermitian
    with pytest.raises(ValueError):
        pw.hermitian_spectrum(m)


def test_mathieu_ground_state_matches_hill(mathieu1, basis8, mathieu_bands):
    vals = pw.hermitian_spectrum(pw.assemble(basis8, mathieu1, [0.0], 0.0))
    assert vals[0] < 0.0  # well pulls the band bottom below zero
    assert abs(vals[0] - mathieu_bands[0][0]) < 1e-6


def test_determinant_is_analytic_in_k(mathieu1, basis8):
    """Cauchy-Riemann residual of the (rescaled) determinant along a line."""
    lam, k0, h = 2.0, 0.3, 1e-4
    ref = pw.log_det(pw.assemble(basis8, mathieu1, [k0], lam)).real

    def f(z):
        ld = pw.log_det(pw.assemble(basis8, mathieu1, [k0 + z], lam))
        return np.exp(ld.real - ref + 1j * ld.imag)

    dx = (f(h) - f(-h)) / (2 * h)
    dy = (f(1j * h) - f(-1j * h)) / (2 * h)
    assert abs(1j * dx - dy) / max(abs(dx), abs(dy)) < 1e-6


def test_hermitian_symmetry(mathieu1, basis8):
    m = pw.assemble(basis8, mathieu1, [1.234], 3.456)
    assert np.max(np.abs(m.entries - m.entries.conj().T)) < 1e-12


def test_real_determinant_at_real_arguments(mathieu1, basis8):
    for k, lam in ((0.3, 2.0), (2.1, 17.0), (4.4, -1.0)):
        ld = pw.log_det(pw.assemble(basis8, mathieu1, [k], lam))
        assert abs(np.sin(ld.imag)) < 1e-10


def test_cutoff_convergence_is_cauchy():
    """Lowest-5 eigenvalue gaps shrink with the cutoff until roundoff."""
    q = pot.mathieu(6.0)
    vals = {}
    for cut in (4, 6, 8, 10):
        basis = pw.PlaneWaveBasis.create(1, cut)
        vals[cut] = pw.hermitian_spectrum(pw.assemble(basis, q, [0.7], 0.0))[:5]
    floor = 5e-12  # eigensolver noise on entries of size ~(2 pi M)^2
    diffs = [np.max(np.abs(vals[m] - vals[m + 2])) for m in (4, 6, 8)]
    for a, b in zip(diffs, diffs[1:]):
        assert b <= max(a, floor)
    assert diffs[0] > diffs[1]  # genuinely converging before the floor


def test_basis_order_is_lexicographic():
    basis = pw.PlaneWaveBasis.create(2, 1)
    assert basis.size == 9
    assert basis.indices[0].tolist() == [-1, -1]
    assert basis.indices[-1].tolist() == [1, 1]
    rows = [tuple(r) for r in basis.indices]
    assert rows == sorted(rows)
