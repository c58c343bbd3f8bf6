"""Hill operator oracle: monodromy matrix, discriminant, bands, exponents.

Everything here rests on direct ODE integration of -u'' + q u = lambda u
over one period, independent of the plane-wave machinery.  The discriminant
D(lambda) = tr(monodromy) characterizes the 1D spectrum through |D| <= 2 and
parametrizes Fermi varieties of separable potentials.

Two integration routes are provided: an adaptive high-order pair
(:func:`monodromy`) and a fixed-step Richardson-extrapolated RK4 sweep
vectorized over energies (:func:`discriminant_scan`).  The second doubles as
an independent cross-check of the first and reaches ~1e-13 accuracy, which
band-edge bisection needs for the very thin high gaps.  Band and root
solving goes through Chebyshev interpolants of D (entire in lambda, so the
interpolants converge geometrically and are verified at offset probes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev
from scipy.integrate import solve_ivp

from . import potential as pot
from .errors import IntegrationFailure, ResolutionFailure

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class Monodromy:
    """Fundamental solution matrix over one period at energy lambda."""

    lam: complex
    matrix: np.ndarray  # 2x2 complex, columns from initial data (1,0),(0,1)
    tol: float

    @property
    def trace(self) -> complex:
        return complex(self.matrix[0, 0] + self.matrix[1, 1])

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.matrix))


def _check_tol(tol):
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError(f"tol {tol} outside [1e-13, 1e-6]")


def monodromy(q1, lam, tol=DEFAULT_TOL) -> Monodromy:
    """Integrate -u'' + q u = lambda u over [0, 1] for both unit initial data."""
    if q1.dim != 1:
        raise ValueError("monodromy needs a 1D potential")
    _check_tol(tol)
    lam = complex(lam)
    coeffs = sorted(q1.coeffs.items())

    def rhs(x, y):
        qx = sum(c * np.exp(2j * np.pi * m[0] * x) for m, c in coeffs)
        f = qx - lam
        return [y[1], f * y[0], y[3], f * y[2]]

    sol = solve_ivp(rhs, (0.0, 1.0), np.array([1, 0, 0, 1], dtype=complex),
                    method="DOP853", rtol=tol, atol=tol)
    if not sol.success:
        raise IntegrationFailure("monodromy integration collapsed", sol.t[-1])
    y = sol.y[:, -1]
    mat = np.array([[y[0], y[2]], [y[1], y[3]]], dtype=complex)
    return Monodromy(lam=lam, matrix=mat, tol=tol)


def discriminant(q1, lam, tol=DEFAULT_TOL) -> complex:
    """D(lambda) = trace of the monodromy matrix."""
    return monodromy(q1, lam, tol).trace


def floquet_exponent(q1, lam, tol=DEFAULT_TOL) -> complex:
    """Principal k with 2 cos k = D(lambda): Re k in [0, 2 pi), Im k >= 0."""
    d = discriminant(q1, lam, tol)
    k = complex(np.arccos(np.asarray(d / 2.0, dtype=complex)))
    if k.imag < 0:
        k = np.conj(k)
    if abs(2.0 * np.cos(k) - d) > 1e-9 * max(1.0, abs(d)):
        raise ResolutionFailure(f"exponent inversion failed at lambda={lam}")
    return k


def bloch_cell_solution(q1, lam, k, n_samples, tol=DEFAULT_TOL):
    """Floquet solution psi with psi(x+1) = e^{ik} psi(x), sampled on [0,1).

    Returns (x, psi, psi') on an n_samples uniform grid.  ``k`` must satisfy
    2 cos k = D(lambda), e.g. from :func:`floquet_exponent`.
    """
    mono = monodromy(q1, lam, tol)
    mult = np.exp(1j * complex(k))
    a = mono.matrix - mult * np.eye(2)
    # null vector of (M - e^{ik} I): take the better-conditioned row
    w = np.array([a[0, 1], -a[0, 0]], dtype=complex)
    if np.linalg.norm(w) < 1e-10 * np.linalg.norm(a):
        w = np.array([a[1, 1], -a[1, 0]], dtype=complex)
    w = w / np.linalg.norm(w)
    coeffs = sorted(q1.coeffs.items())

    def rhs(x, y):
        qx = sum(c * np.exp(2j * np.pi * m[0] * x) for m, c in coeffs)
        return [y[1], (qx - complex(lam)) * y[0]]

    x = np.arange(n_samples) / n_samples
    sol = solve_ivp(rhs, (0.0, 1.0), w.astype(complex), method="DOP853",
                    rtol=tol, atol=tol, t_eval=x)
    if not sol.success:
        raise IntegrationFailure("Bloch cell integration collapsed", sol.t[-1])
    return x, sol.y[0], sol.y[1]


# ---------------------------------------------------------------------------
# fixed-step vectorized discriminant


def _rk4_trace(q1, lams, n_steps):
    """Trace of the monodromy matrix by fixed-step RK4, batched over lams."""
    lams = np.asarray(lams, dtype=complex)
    h = 1.0 / n_steps
    xs = np.arange(n_steps + 1) * h
    q_nodes = np.asarray(pot.evaluate(q1, xs[:, None]), dtype=float)
    q_mid = np.asarray(pot.evaluate(q1, (xs[:-1] + 0.5 * h)[:, None]), dtype=float)

    u = np.ones_like(lams)
    up = np.zeros_like(lams)
    v = np.zeros_like(lams)
    vp = np.ones_like(lams)
    for i in range(n_steps):
        w0 = q_nodes[i] - lams
        wm = q_mid[i] - lams
        w1 = q_nodes[i + 1] - lams

        ku1, kp1 = up, w0 * u
        lv1, lp1 = vp, w0 * v
        ku2, kp2 = up + 0.5 * h * kp1, wm * (u + 0.5 * h * ku1)
        lv2, lp2 = vp + 0.5 * h * lp1, wm * (v + 0.5 * h * lv1)
        ku3, kp3 = up + 0.5 * h * kp2, wm * (u + 0.5 * h * ku2)
        lv3, lp3 = vp + 0.5 * h * lp2, wm * (v + 0.5 * h * lv2)
        ku4, kp4 = up + h * kp3, w1 * (u + h * ku3)
        lv4, lp4 = vp + h * lp3, w1 * (v + h * lv3)

        u = u + (h / 6.0) * (ku1 + 2 * ku2 + 2 * ku3 + ku4)
        up = up + (h / 6.0) * (kp1 + 2 * kp2 + 2 * kp3 + kp4)
        v = v + (h / 6.0) * (lv1 + 2 * lv2 + 2 * lv3 + lv4)
        vp = vp + (h / 6.0) * (lp1 + 2 * lp2 + 2 * lp3 + lp4)
    return u + vp


def discriminant_scan(q1, lams, n_steps=None):
    """D(lambda) for a batch of energies, by Richardson-extrapolated RK4.

    One n-step and one 2n-step fixed-step pass combine to an O(h^6)
    estimate.  Returns (values, per-point error estimate).
    """
    if q1.dim != 1:
        raise ValueError("discriminant_scan needs a 1D potential")
    lams = np.atleast_1d(np.asarray(lams))
    if n_steps is None:
        span = float(np.max(np.abs(lams))) if lams.size else 1.0
        n_steps = _scan_steps(span)
    coarse = _rk4_trace(q1, lams, n_steps)
    fine = _rk4_trace(q1, lams, 2 * n_steps)
    extrap = (16.0 * fine - coarse) / 15.0
    err = np.abs(fine - coarse) / 15.0 + 1e-14 * np.maximum(1.0, np.abs(extrap))
    return extrap, err


def _scan_steps(span):
    # step count keeping the extrapolated error near the roundoff floor
    return int(max(2000, 220.0 * max(span, 1.0) ** 0.5))


# ---------------------------------------------------------------------------
# Chebyshev interpolants of D on windows


def _cheb_points(n):
    """First-kind Chebyshev nodes on [-1, 1] (n points)."""
    j = np.arange(n)
    return np.cos(np.pi * (2 * j + 1) / (2 * n))


def _cheb_from_values(vals, lo, hi):
    """Chebyshev object interpolating values sampled at first-kind nodes."""
    n = len(vals)
    j = np.arange(n)
    k = np.arange(n)[:, None]
    cos_table = np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    coef = (2.0 / n) * cos_table @ np.asarray(vals)
    coef[0] *= 0.5
    return Chebyshev(coef, domain=[lo, hi])


class DiscriminantModel:
    """Verified Chebyshev interpolant of lambda -> D(lambda) on [lo, hi].

    The degree is doubled until offset probe points agree to ``target_err``;
    root solving D(mu) = t then costs no further integrations.
    """

    def __init__(self, q1, lo, hi, target_err=1e-10, n_steps=None):
        self.q1 = q1
        self.lo = float(lo)
        self.hi = float(hi)
        if n_steps is None:
            n_steps = _scan_steps(max(abs(self.lo), abs(self.hi)))
        probes = np.linspace(self.lo, self.hi, 23)[1:-1]
        d_probe, scan_err = discriminant_scan(q1, probes, n_steps)
        d_probe = np.real(d_probe)
        deg = 64
        while True:
            nodes = self.lo + (self.hi - self.lo) * 0.5 * (_cheb_points(deg + 1) + 1.0)
            vals = np.real(discriminant_scan(q1, nodes, n_steps)[0])
            fit = _cheb_from_values(vals, self.lo, self.hi)
            err = float(np.max(np.abs(fit(probes) - d_probe)))
            if err < target_err or deg >= 2048:
                break
            deg *= 2
        if err >= target_err:
            raise ResolutionFailure(
                f"discriminant interpolation stalled at degree {deg} (err={err:.2e})")
        self.fit = fit
        self.err = err + float(np.max(scan_err))

    def value(self, mu):
        return self.fit(mu)

    def real_roots(self, target, pad=0.0):
        """All real solutions of D(mu) = target inside [lo-pad, hi+pad]."""
        shifted = self.fit - target
        roots = shifted.roots()
        real = roots[np.abs(roots.imag) < 1e-8].real
        real = real[(real >= self.lo - pad - 1e-9) & (real <= self.hi + pad + 1e-9)]
        deriv = shifted.deriv()
        out = []
        for r in np.sort(real):
            for _ in range(3):  # polish on the interpolant
                d = deriv(r)
                if abs(d) < 1e-14:
                    break
                r = r - shifted(r) / d
            r = float(min(max(float(r), self.lo), self.hi))
            if not out or abs(r - out[-1]) > 1e-9:
                out.append(r)
        return out

    def extrema(self):
        """(location, value) of interior critical points of the interpolant."""
        crit = self.fit.deriv().roots()
        crit = crit[np.abs(crit.imag) < 1e-8].real
        crit = crit[(crit > self.lo) & (crit < self.hi)]
        return [(float(x), float(self.fit(x))) for x in np.sort(crit)]


# ---------------------------------------------------------------------------
# band intervals from |D| <= 2


def bands_1d(q1, lambda_max, tol=DEFAULT_TOL, scan_step=0.1, n_steps=None):
    """Spectral bands [a_j, b_j] below lambda_max, from |D(lambda)| <= 2.

    A coarse scan brackets every D = +-2 crossing and every local extremum
    of D between samples (thin gap / thin band guard); local Chebyshev
    models then locate edges to integrator accuracy.  Gaps whose
    discriminant excess over 2 is within integration noise are treated as
    closed and merged.
    """
    _check_tol(tol)
    lo = q1.min_bound() - 0.5
    if lambda_max <= lo:
        raise ValueError("lambda_max is below the spectrum lower bound")
    if n_steps is None:
        n_steps = _scan_steps(max(abs(lo), abs(lambda_max)))

    grid = np.arange(lo, lambda_max + scan_step, scan_step)
    grid = grid[grid < lambda_max - 1e-12]
    grid = np.append(grid, lambda_max)
    dvals, derr = discriminant_scan(q1, grid, n_steps)
    dvals = np.real(dvals)
    noise = 20.0 * float(np.max(derr))

    # windows needing a close look: +-2 crossings and turning points
    flagged = set()
    for target in (2.0, -2.0):
        f = dvals - target
        hits = np.nonzero(f[:-1] * f[1:] <= 0.0)[0]
        flagged.update(hits.tolist())
    d1 = np.diff(dvals)
    turning = np.nonzero(d1[:-1] * d1[1:] < 0.0)[0] + 1
    for i in turning.tolist():
        flagged.update((i - 1, i))
    windows = _merge_windows([(grid[i], grid[i + 1]) for i in sorted(flagged)])

    # one batched scan serves every local model; degree 16 on a <=3-step
    # window of an entire function is far below integrator noise
    deg = 16
    all_nodes = []
    for a, b in windows:
        all_nodes.append(a + (b - a) * 0.5 * (_cheb_points(deg + 1) + 1.0))
    edges = []
    gap_peaks = []  # (lambda, |D| excess) inside candidate gaps
    if windows:
        vals = np.real(discriminant_scan(q1, np.concatenate(all_nodes), n_steps)[0])
        for w, (a, b) in enumerate(windows):
            model = _cheb_from_values(vals[w * (deg + 1):(w + 1) * (deg + 1)], a, b)
            for target in (2.0, -2.0):
                edges.extend(
                    r for r in (model - target).roots()
                    if abs(r.imag) < 1e-8 and a - 1e-12 <= r.real <= b + 1e-12
                    for r in (float(r.real),))
            for x, v in _model_extrema(model, a, b):
                if abs(v) > 2.0:
                    gap_peaks.append((x, abs(v) - 2.0))
    edges = sorted(set(round(e, 13) for e in edges))

    # classify intervals between consecutive edges by |D| at midpoints
    cuts = [float(grid[0])] + [e for e in edges if grid[0] < e < lambda_max] + [float(lambda_max)]
    mids = np.array([0.5 * (a + b) for a, b in zip(cuts, cuts[1:])])
    dmid = np.real(discriminant_scan(q1, mids, n_steps)[0]) if mids.size else np.array([])
    bands = []
    for (a, b), dm in zip(zip(cuts, cuts[1:]), dmid):
        if b - a < 1e-11:
            continue
        in_band = abs(dm) <= 2.0
        if not in_band and bands and abs(a - bands[-1][1]) < 1e-11:
            # candidate gap: keep only if the excess beats integration noise
            peak = max((p for x, p in gap_peaks if a - 1e-9 <= x <= b + 1e-9),
                       default=abs(dm) - 2.0)
            if peak <= noise:
                bands[-1][1] = b
                continue
        if in_band:
            if bands and a - bands[-1][1] < 1e-11:
                bands[-1][1] = b
            else:
                bands.append([a, b])
    if not bands:
        raise ResolutionFailure("no spectral band found below lambda_max")

    # sanity: every reported gap must really carry |D| > 2
    gap_mids = np.array([0.5 * (b1 + a2)
                         for (_, b1), (a2, _) in zip(bands, bands[1:])])
    if gap_mids.size:
        dg = np.real(discriminant_scan(q1, gap_mids, n_steps)[0])
        if np.any(np.abs(dg) <= 2.0):
            bad = gap_mids[np.abs(dg) <= 2.0][0]
            raise ResolutionFailure(
                f"scan too coarse: |D| <= 2 inside a reported gap at {bad}")
    return [(float(a), float(b)) for a, b in bands]


def _merge_windows(windows):
    merged = []
    for a, b in windows:
        if merged and a <= merged[-1][1] + 1e-12:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _model_extrema(model, a, b):
    crit = model.deriv().roots()
    crit = crit[np.abs(crit.imag) < 1e-8].real
    crit = crit[(crit > a) & (crit < b)]
    return [(float(x), float(model(x))) for x in crit]


def gaps_from_bands(bands):
    """Open intervals between consecutive band hulls."""
    return [(b1, a2) for (_, b1), (a2, _) in zip(bands, bands[1:]) if a2 > b1]
