"""Truncated Bloch Hamiltonian in the plane-wave basis of the torus.

The operator (i*grad - k)^2 + q acts on periodic functions; in the basis
e^{2 pi i m.x}, ||m||_inf <= M, it becomes an N x N matrix whose entries are
polynomial in k.  The square (k + 2 pi m).(k + 2 pi m) is taken bilinearly
(no conjugation) so the determinant is an entire function of complex k;
its zeros approximate the Fermi variety as the cutoff grows.
"""

from __future__ import annotations

import functools
import itertools
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

TWO_PI = 2.0 * np.pi

#: |imaginary part| below this counts as real when setting the hermitian flag
REAL_TOL = 1e-12


@dataclass(frozen=True)
class PlaneWaveBasis:
    """All lattice modes with ||m||_inf <= cutoff, in lexicographic order."""

    dim: int
    cutoff: int
    indices: np.ndarray  # (N, dim) int

    @classmethod
    def create(cls, dim: int, cutoff: int) -> "PlaneWaveBasis":
        if dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
        if cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        rng = range(-cutoff, cutoff + 1)
        indices = np.array(list(itertools.product(rng, repeat=dim)), dtype=int)
        return cls(dim=dim, cutoff=cutoff, indices=indices)

    @property
    def size(self) -> int:
        return self.indices.shape[0]


#: CLI/default cutoffs per dimension
DEFAULT_CUTOFF = {1: 8, 2: 6, 3: 3}


@dataclass(frozen=True)
class BlochMatrix:
    """H0(k) - lambda on the truncated basis; entries analytic in k."""

    basis: PlaneWaveBasis
    k: np.ndarray  # (dim,) complex
    lam: complex
    entries: np.ndarray  # (N, N) complex
    hermitian: bool


def assemble(basis: PlaneWaveBasis, q, k, lam) -> BlochMatrix:
    """Build the matrix of H0(k) - lambda.

    entry(m, m') = delta_{mm'} [(k+2 pi m).(k+2 pi m) - lambda] + qhat(m-m').
    """
    if q.dim != basis.dim:
        raise ValueError(f"potential dim {q.dim} != basis dim {basis.dim}")
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    if k.shape != (basis.dim,):
        raise ValueError(f"k must have shape ({basis.dim},)")
    lam = complex(lam)

    shifted = k[None, :] + TWO_PI * basis.indices  # (N, dim)
    kinetic = np.sum(shifted * shifted, axis=1)  # bilinear square, no conj
    entries = np.diag(kinetic - lam).astype(complex)

    for d, c in q.coeffs.items():
        rows, cols = _coupling(basis.dim, basis.cutoff, d)
        entries[rows, cols] += c

    k_real = bool(np.all(np.abs(k.imag) <= REAL_TOL * (1.0 + np.abs(k.real))))
    lam_real = abs(lam.imag) <= REAL_TOL * (1.0 + abs(lam.real))
    return BlochMatrix(basis=basis, k=k, lam=lam, entries=entries,
                       hermitian=k_real and lam_real)


@functools.lru_cache(maxsize=4096)
def _coupling(dim, cutoff, d):
    """Index pairs (rows, cols) with m_row - m_col = d inside the cutoff box."""
    indices = PlaneWaveBasis.create(dim, cutoff).indices
    target = indices + np.asarray(d, dtype=int)
    inside = np.all(np.abs(target) <= cutoff, axis=1)
    cols = np.nonzero(inside)[0]
    # lexicographic flattening: digit m + cutoff, stride (2M+1)^(dim-1-axis)
    width = 2 * cutoff + 1
    strides = width ** np.arange(dim - 1, -1, -1)
    rows = (target[inside] + cutoff) @ strides
    return rows, cols


def log_det(m: BlochMatrix) -> complex:
    """log|det| + i * (principal phase of det), via pivoted LU.

    An exactly singular matrix reports -inf log magnitude (a legitimate
    Fermi point), never an exception.  Phase is the principal value in
    (-pi, pi]; continuous unwrapping is the caller's job.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # zero pivots are a valid outcome
        lu, piv = scipy.linalg.lu_factor(m.entries, check_finite=False)
    diag = np.diagonal(lu)
    if np.any(diag == 0.0):
        return complex(-np.inf, 0.0)
    log_abs = float(np.sum(np.log(np.abs(diag))))
    swaps = int(np.sum(piv != np.arange(len(piv))))
    phase = float(np.sum(np.angle(diag))) + np.pi * (swaps % 2)
    phase = float((phase + np.pi) % TWO_PI - np.pi)
    if phase <= -np.pi:
        phase += TWO_PI
    return complex(log_abs, phase)


def hermitian_spectrum(m: BlochMatrix) -> np.ndarray:
    """All N eigenvalues of the truncated H0(k), ascending (shift removed)."""
    if not m.hermitian:
        raise ValueError("matrix is not Hermitian (k or lambda not real)")
    vals = np.linalg.eigvalsh(m.entries)
    return vals + np.real(m.lam)


def bloch_log_det(basis, q, k, lam) -> complex:
    """Convenience: log_det of the assembled matrix at (k, lambda)."""
    return log_det(assemble(basis, q, k, lam))
