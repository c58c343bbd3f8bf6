"""Periodic potentials on the integer lattice, stored as sparse Fourier data.

A potential is a real trigonometric polynomial on the unit cell [0, 1]^dim,
q(x) = sum_m qhat(m) exp(2*pi*i m.x), with finitely many nonzero lattice
coefficients.  Realness is enforced through conjugate symmetry
qhat(-m) = conj(qhat(m)) at construction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

#: tolerance for the conjugate-symmetry check at ingestion
SYMMETRY_TOL = 1e-12
#: coefficients below this (absolute) are dropped when ingesting sample grids
TRIM_TOL = 1e-14


@dataclass(frozen=True)
class FourierPotential:
    """Real periodic potential q(x) = sum_m qhat(m) e^{2 pi i m.x}.

    ``coeffs`` maps integer lattice vectors (tuples of length ``dim``) to
    complex amplitudes.  Instances are immutable; build them through
    :func:`make_potential` or :func:`from_samples`.
    """

    dim: int
    coeffs: dict = field(default_factory=dict)
    support_radius: int = 0

    def coeff(self, m) -> complex:
        return self.coeffs.get(tuple(m), 0.0 + 0.0j)

    @property
    def coeff_abs_sum(self) -> float:
        """Sum of |qhat(m)|; crude sup-norm bound for q."""
        return float(sum(abs(c) for c in self.coeffs.values()))

    @property
    def mean(self) -> float:
        """The zero mode qhat(0) (the average of q over the cell)."""
        return float(np.real(self.coeff((0,) * self.dim)))

    def min_bound(self) -> float:
        """A lower bound for min_x q(x): qhat(0) - sum_{m!=0} |qhat(m)|."""
        off = sum(abs(c) for m, c in self.coeffs.items() if any(m))
        return self.mean - float(off)

    def shifted(self, delta: float) -> "FourierPotential":
        """Return q + delta (constant shift of the zero mode)."""
        coeffs = dict(self.coeffs)
        zero = (0,) * self.dim
        coeffs[zero] = coeffs.get(zero, 0.0 + 0.0j) + delta
        return make_potential(self.dim, coeffs)


@dataclass(frozen=True)
class SeparablePotential:
    """Ordered factors q_i whose dims add up to the total dimension."""

    parts: tuple

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)


def make_potential(dim, coeffs, tol=SYMMETRY_TOL) -> FourierPotential:
    """Validate, symmetrize and freeze a coefficient map.

    Rejects complex-valued potentials: the asymmetry
    |qhat(m) - conj(qhat(-m))| must stay below ``tol`` (relative to the
    largest coefficient).  Coefficients are averaged with their conjugate
    mirror so realness is exact afterwards.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    cleaned = {}
    for m, c in coeffs.items():
        m = tuple(int(mi) for mi in (m if isinstance(m, (tuple, list, np.ndarray)) else (m,)))
        if len(m) != dim:
            raise ValueError(f"coefficient index {m} does not match dim={dim}")
        cleaned[m] = cleaned.get(m, 0.0 + 0.0j) + complex(c)

    scale = max(1.0, max((abs(c) for c in cleaned.values()), default=0.0))
    sym = {}
    for m, c in cleaned.items():
        mirror = cleaned.get(tuple(-mi for mi in m), 0.0 + 0.0j)
        if abs(c - np.conj(mirror)) > tol * scale:
            raise ValueError(
                f"coefficients violate conjugate symmetry at m={m}: "
                f"potential would be complex-valued"
            )
        sym[m] = 0.5 * (c + np.conj(mirror))
    sym = {m: c for m, c in sym.items() if abs(c) > 0.0}
    radius = max((max(abs(mi) for mi in m) for m in sym), default=0)
    return FourierPotential(dim=dim, coeffs=sym, support_radius=radius)


def evaluate(p: FourierPotential, x) -> np.ndarray | float:
    """Evaluate q at one point (shape (dim,)) or a batch (shape (..., dim)).

    The result is real by construction; the tiny imaginary residue of the
    complex sum is discarded.
    """
    x = np.asarray(x, dtype=float)
    scalar_input = False
    if p.dim == 1 and x.ndim == 0:
        x = x[None]
    if x.shape[-1] != p.dim:
        raise ValueError(f"point has {x.shape[-1]} coordinates, expected {p.dim}")
    if x.ndim == 1:
        scalar_input = True
        x = x[None, :]
    out = np.zeros(x.shape[:-1], dtype=complex)
    for m, c in p.coeffs.items():
        out += c * np.exp(2j * np.pi * (x @ np.asarray(m, dtype=float)))
    out = np.real(out)
    return float(out[0]) if scalar_input else out


def sample_grid(p: FourierPotential, n_per_axis: int) -> np.ndarray:
    """Values of q on the uniform n^dim grid x = j/n over the unit cell."""
    axes = [np.arange(n_per_axis) / n_per_axis] * p.dim
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return evaluate(p, mesh)


def from_samples(samples, dim: int, tol=1e-9) -> FourierPotential:
    """Recover Fourier coefficients from values on a uniform cell grid.

    The grid must be fine enough for the underlying trigonometric
    polynomial (at least 2*support_radius + 1 points per axis); then the
    discrete transform is exact trigonometric interpolation.
    """
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("empty sample grid")
    if samples.ndim != dim:
        raise ValueError(f"sample array has {samples.ndim} axes, expected {dim}")
    if np.iscomplexobj(samples):
        scale = max(1.0, float(np.max(np.abs(samples))))
        if np.max(np.abs(samples.imag)) > tol * scale:
            raise ValueError("samples have a non-real part beyond tolerance")
        samples = samples.real
    samples = samples.astype(float)

    n = samples.shape[0]
    if any(s != n for s in samples.shape):
        raise ValueError("sample grid must have the same size along every axis")

    coeffs_grid = np.fft.fftn(samples) / samples.size
    scale = max(1.0, float(np.max(np.abs(coeffs_grid))))
    freqs = [np.fft.fftfreq(n, d=1.0 / n).astype(int)] * dim
    coeffs = {}
    for idx in np.ndindex(*samples.shape):
        c = coeffs_grid[idx]
        if abs(c) <= TRIM_TOL * scale:
            continue
        m = tuple(int(freqs[a][idx[a]]) for a in range(dim))
        # For even n the Nyquist bin -n/2 has no mirror on the grid; split it
        # between +-n/2 so evaluation off the grid stays real.
        splits = [(mi,) if (n % 2 or mi != -n // 2) else (mi, -mi) for mi in m]
        weight = c / np.prod([len(s) for s in splits])
        for mm in _product(splits):
            coeffs[mm] = coeffs.get(mm, 0.0 + 0.0j) + weight
    return make_potential(dim, coeffs)


def _product(choices):
    if len(choices) == 1:
        for c in choices[0]:
            yield (c,)
        return
    for c in choices[0]:
        for rest in _product(choices[1:]):
            yield (c,) + rest


def tensor_sum(sep: SeparablePotential) -> FourierPotential:
    """Combine separable factors into q(x) = sum_i q_i(x_i on its block).

    Coefficients live on the coordinate-axis sublattices; the zero modes
    add up.
    """
    dims = [p.dim for p in sep.parts]
    total = sum(dims)
    if total not in (1, 2, 3):
        raise ValueError(f"total dimension {total} unsupported")
    coeffs = {}
    offset = 0
    for p, d in zip(sep.parts, dims):
        for m, c in p.coeffs.items():
            mm = (0,) * offset + m + (0,) * (total - offset - d)
            coeffs[mm] = coeffs.get(mm, 0.0 + 0.0j) + c
        offset += d
    if not coeffs:
        coeffs[(0,) * total] = 0.0 + 0.0j
    return make_potential(total, coeffs)


# ---------------------------------------------------------------------------
# presets and file format


def mathieu(amplitude=1.0) -> FourierPotential:
    """q(x) = amplitude * 2 cos(2 pi x), i.e. qhat(+-1) = amplitude."""
    return make_potential(1, {(1,): amplitude, (-1,): amplitude})


def free(dim=1) -> FourierPotential:
    return make_potential(dim, {})


def load_potential_file(path) -> FourierPotential:
    """Read the JSON description {dim, entries: [[m..., re, im], ...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    dim = int(doc["dim"])
    coeffs = {}
    for entry in doc["entries"]:
        *m, re, im = entry
        coeffs[tuple(int(v) for v in m)] = complex(float(re), float(im))
    return make_potential(dim, coeffs)


def save_potential_file(p: FourierPotential, path) -> None:
    entries = [
        [*m, float(np.real(c)), float(np.imag(c))]
        for m, c in sorted(p.coeffs.items())
    ]
    with open(path, "w") as fh:
        json.dump({"dim": p.dim, "entries": entries}, fh, indent=1)
        fh.write("\n")


def parse_preset(text: str, dim=None) -> FourierPotential:
    """Parse CLI potential descriptions.

    Accepted forms: "free", "mathieu:a", "mathieu2d:a,b", "file:<path>".
    ``dim`` only matters for "free" (defaults to 1).
    """
    if text == "free":
        return free(dim or 1)
    if text.startswith("mathieu2d:"):
        a, b = (float(v) for v in text.split(":", 1)[1].split(","))
        return tensor_sum(SeparablePotential((mathieu(a), mathieu(b))))
    if text.startswith("mathieu:"):
        return mathieu(float(text.split(":", 1)[1]))
    if text.startswith("file:"):
        return load_potential_file(text.split(":", 1)[1])
    raise ValueError(f"unknown potential description {text!r}")
