import numpy as np
import pytest

from blochlab import band_structure as bst
from blochlab import fermi
from blochlab import hill
from blochlab import plane_wave as pw
from blochlab import potential as pot

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def basis2d():
    return pw.PlaneWaveBasis.create(2, 4)


def test_free_circle_trace(basis2d):
    trace = fermi.trace_real(pot.free(2), basis2d, 1.0, bst.BrillouinGrid(2, 61))
    assert not trace.is_empty
    for v in trace.vertices:
        best = min(abs((v[0] + TWO_PI * m1) ** 2 + (v[1] + TWO_PI * m2) ** 2 - 1.0)
                   for m1 in (-1, 0, 1) for m2 in (-1, 0, 1))
        assert best < 1e-8
    assert trace.n_components() == 1
    assert np.max(trace.residuals) < fermi.VERTEX_RESIDUAL


def test_free_smaller_circle_components(basis2d):
    trace = fermi.trace_real(pot.free(2), basis2d, 0.25, bst.BrillouinGrid(2, 61))
    assert trace.n_components() == 1


def test_gap_trace_empty(mathieu1, basis8, mathieu_bands):
    lo, hi = hill.gaps_from_bands(mathieu_bands)[0]
    trace = fermi.trace_real(mathieu1, basis8, 0.5 * (lo + hi), bst.BrillouinGrid(1, 201))
    assert trace.is_empty


def test_band_trace_mirror_symmetry(mathieu1, basis8):
    trace = fermi.trace_real(mathieu1, basis8, 5.0, bst.BrillouinGrid(1, 201))
    pts = np.sort(trace.points)
    assert len(pts) == 2
    # k and -k mod 2 pi both lie on the trace for a real potential
    assert abs((pts[0] + pts[1]) - TWO_PI) < 1e-6
    assert np.max(trace.residuals) < fermi.VERTEX_RESIDUAL


def test_mirror_symmetry_2d(basis2d):
    q = pot.parse_preset("mathieu2d:1,1")
    trace = fermi.trace_real(q, basis2d, 5.0, bst.BrillouinGrid(2, 41))
    verts = trace.vertices
    for v in verts[:: max(1, len(verts) // 25)]:
        mirrored = (-v) % TWO_PI
        d = np.linalg.norm((verts - mirrored + np.pi) % TWO_PI - np.pi, axis=1)
        assert np.min(d) < 1e-6


def test_torus_periodicity_shifted_window(basis2d):
    """Traces over [0,2pi]^2 and [-pi,pi]^2 agree as torus subsets."""
    t1 = fermi.trace_real(pot.free(2), basis2d, 1.0, bst.BrillouinGrid(2, 61))
    win = ((-np.pi, np.pi), (-np.pi, np.pi))
    t2 = fermi.trace_real(pot.free(2), basis2d, 1.0, bst.BrillouinGrid(2, 61, win))
    va = t1.vertices % TWO_PI
    vb = t2.vertices % TWO_PI

    def one_sided(src, dst):
        worst = 0.0
        for x in src:
            d = np.linalg.norm((dst - x + np.pi) % TWO_PI - np.pi, axis=1)
            worst = max(worst, float(np.min(d)))
        return worst

    assert one_sided(va, vb) < 1e-6
    assert one_sided(vb, va) < 1e-6


def test_energy_shift_equivalence_1d(mathieu1, basis8):
    """Fermi set of (q, lam) equals the zero-energy set of (q - lam)."""
    lam = 5.0
    grid = bst.BrillouinGrid(1, 201)
    t1 = fermi.trace_real(mathieu1, basis8, lam, grid)
    t2 = fermi.trace_real(mathieu1.shifted(-lam), basis8, 0.0, grid)
    assert len(t1.points) == len(t2.points)
    assert np.max(np.abs(np.sort(t1.points) - np.sort(t2.points))) < 1e-8


def test_energy_shift_equivalence_2d(basis2d):
    q = pot.parse_preset("mathieu2d:1,1")
    lam = 4.0
    grid = bst.BrillouinGrid(2, 41)
    t1 = fermi.trace_real(q, basis2d, lam, grid)
    t2 = fermi.trace_real(q.shifted(-lam), basis2d, 0.0, grid)
    assert len(t1.vertices) == len(t2.vertices)
    for src, dst in ((t1.vertices, t2.vertices), (t2.vertices, t1.vertices)):
        for v in src:
            assert np.min(np.linalg.norm(dst - v, axis=1)) < 1e-8


def test_component_count_stable_under_refinement(basis2d):
    q = pot.parse_preset("mathieu2d:1,1")
    n61 = fermi.trace_real(q, basis2d, 5.0, bst.BrillouinGrid(2, 61)).n_components()
    n121 = fermi.trace_real(q, basis2d, 5.0, bst.BrillouinGrid(2, 121)).n_components()
    assert n61 == n121


def test_component_report_fields(basis2d):
    trace = fermi.trace_real(pot.free(2), basis2d, 1.0, bst.BrillouinGrid(2, 61))
    rep = fermi.component_report(trace)
    assert rep.n_components == 1
    assert rep.lengths[0] == pytest.approx(TWO_PI, rel=0.01)  # unit circle
    assert rep.n_segments[0] == len(trace.segments)


def test_trace_3d_slices():
    basis = pw.PlaneWaveBasis.create(3, 2)
    grid = bst.BrillouinGrid(3, (21, 21, 5))
    trace = fermi.trace_real(pot.free(3), basis, 1.0, grid)
    assert trace.dim == 3 and len(trace.slices) == 5
    # k3=0 slice carries the k1^2+k2^2=1 circle; top slice (k3=2pi) likewise
    assert not trace.slices[0][1].is_empty
    assert trace.n_components() >= 1
    rep = fermi.component_report(trace)
    assert rep.n_components == trace.n_components()


# ---------------------------------------------------------------------------
# complex probes


def test_winding_free_two_roots(basis8):
    probe = fermi.ComplexLineProbe(k0=[0.0], axis=0, rect=(-2.0, 2.0, -1.0, 1.0))
    assert fermi.complex_zero_count(pot.free(1), basis8, 1.0, probe) == 2
    roots = fermi.polish_zeros(pot.free(1), basis8, 1.0, probe)
    assert len(roots) == 2
    assert abs(roots[0] + 1.0) < 1e-9 and abs(roots[1] - 1.0) < 1e-9


def test_winding_free_empty_rect(basis8):
    probe = fermi.ComplexLineProbe(k0=[0.0], axis=0, rect=(2.0, 4.0, -1.0, 1.0))
    assert fermi.complex_zero_count(pot.free(1), basis8, 1.0, probe) == 0


def test_polish_imaginary_root(basis8):
    probe = fermi.ComplexLineProbe(k0=[0.0], axis=0, rect=(-0.5, 0.5, 0.0, 2.0))
    count = fermi.complex_zero_count(pot.free(1), basis8, -1.0, probe)
    roots = fermi.polish_zeros(pot.free(1), basis8, -1.0, probe)
    assert count == 1 and len(roots) == 1
    assert abs(roots[0] - 1j) < 1e-9


def test_gap_probe_matches_floquet_exponent(mathieu1, basis8, mathieu_bands):
    lo, hi = hill.gaps_from_bands(mathieu_bands)[0]
    lam = 0.5 * (lo + hi)
    probe = fermi.ComplexLineProbe(k0=[0.0], axis=0,
                                   rect=(np.pi - 0.5, np.pi + 0.5, 0.01, 2.0))
    count = fermi.complex_zero_count(mathieu1, basis8, lam, probe)
    assert count >= 1
    roots = fermi.polish_zeros(mathieu1, basis8, lam, probe)
    k_hill = hill.floquet_exponent(mathieu1, lam)
    assert min(abs(r - k_hill) for r in roots) < 1e-6


def test_winding_soundness_random_rectangles(mathieu1, basis8):
    rng = np.random.default_rng(5)
    for _ in range(12):
        re0 = rng.uniform(-1, 5)
        im0 = rng.uniform(-2, 0.5)
        rect = (re0, re0 + rng.uniform(0.5, 3), im0, im0 + rng.uniform(0.5, 2.5))
        probe = fermi.ComplexLineProbe(k0=[0.0], axis=0, rect=rect)
        lam = rng.uniform(0.5, 20.0)
        count = fermi.complex_zero_count(mathieu1, basis8, lam, probe)
        roots = fermi.polish_zeros(mathieu1, basis8, lam, probe)
        assert len(roots) == count


def test_probe_validation():
    with pytest.raises(ValueError):
        fermi.ComplexLineProbe(k0=[1.0], axis=0, rect=(0, 1, 0, 1))
    with pytest.raises(ValueError):
        fermi.ComplexLineProbe(k0=[0.0], axis=0, rect=(1, 0, 0, 1))
    probe = fermi.ComplexLineProbe(k0=[0.0], axis=0, rect=(0, 1, 0, 1))
    with pytest.raises(ValueError):
        fermi.polish_zeros(pot.free(1), pw.PlaneWaveBasis.create(1, 2), 1.0, probe)


def test_probe_2d_line(basis2d):
    """Complexify one coordinate of a 2D quasimomentum."""
    probe = fermi.ComplexLineProbe(k0=[0.5, 0.0], axis=1, rect=(-1.5, 1.5, -1.0, 1.0))
    count = fermi.complex_zero_count(pot.free(2), basis2d, 1.0, probe)
    roots = fermi.polish_zeros(pot.free(2), basis2d, 1.0, probe)
    # k2^2 = 1 - 0.25 -> two real roots +-sqrt(0.75)
    assert count == 2 and len(roots) == 2
    assert abs(roots[1] - np.sqrt(0.75)) < 1e-9


# ---------------------------------------------------------------------------
# separable cross-check


def test_cross_check_free_pair_vertex():
    # vertex (0.6, 0.8) at lam=1: mu = 0.36 and nu = 0.64 split the energy
    trace = fermi.FermiTrace(lam=1.0, dim=2, window=((0.0, TWO_PI),) * 2,
                             vertices=np.array([[0.6, 0.8]]),
                             segments=np.empty((0, 2), dtype=int))
    rep = fermi.separable_cross_check(pot.free(1), pot.free(1), 1.0, trace)
    assert rep.max_residual < 1e-9
    assert abs(rep.mu_values[0] - 0.36) < 1e-8


def test_cross_check_mathieu_times_free(mathieu1, basis2d):
    q = pot.tensor_sum(pot.SeparablePotential((mathieu1, pot.free(1))))
    lam = 5.0
    trace = fermi.trace_real(q, basis2d, lam, bst.BrillouinGrid(2, 61))
    assert not trace.is_empty
    rep = fermi.separable_cross_check(mathieu1, pot.free(1), lam, trace)
    assert rep.n_missing == 0
    assert rep.max_residual < 1e-6


def test_cross_check_mathieu_pair(mathieu1, basis2d):
    q = pot.parse_preset("mathieu2d:1,1")
    lam = 5.0
    trace = fermi.trace_real(q, basis2d, lam, bst.BrillouinGrid(2, 61))
    rep = fermi.separable_cross_check(mathieu1, mathieu1, lam, trace)
    assert rep.n_missing == 0
    assert rep.max_residual < 1e-5


def test_in_band_nonempty_in_gap_empty(mathieu1, basis8, mathieu_bands):
    """Spectrum membership <-> non-emptiness of the real Fermi set (1D)."""
    rng = np.random.default_rng(9)
    grid = bst.BrillouinGrid(1, 201)
    gaps = hill.gaps_from_bands(mathieu_bands)
    for _ in range(6):
        a, b = mathieu_bands[rng.integers(len(mathieu_bands))]
        lam = rng.uniform(a + 0.05 * (b - a), b - 0.05 * (b - a))
        assert not fermi.trace_real(mathieu1, basis8, lam, grid).is_empty
    for _ in range(6):
        lo, hi = gaps[rng.integers(len(gaps))]
        lam = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
        assert fermi.trace_real(mathieu1, basis8, lam, grid).is_empty
