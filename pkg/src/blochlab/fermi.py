"""Real and complex Fermi varieties of the truncated Bloch determinant.

Real traces are contour sets of the scaled Hermitian determinant
g(k) = sign(det) * exp(log|det| / N) on the Brillouin torus: marching
squares in 2D (slice stacks in 3D), scan + bisection in 1D, every vertex
polished on its grid edge and checked against an eigenvalue residual.
Complex probes restrict to one complex coordinate and count determinant
zeros by the argument principle with adaptive phase tracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import hill
from .band_structure import BrillouinGrid
from .errors import ProbeFailure, ResolutionFailure
from .plane_wave import assemble, hermitian_spectrum, log_det

TWO_PI = 2.0 * np.pi

#: a polished vertex must bring the nearest eigenvalue of H0(k) this close
#: to lambda (the determinant residual scaled by the other eigenvalues)
VERTEX_RESIDUAL = 1e-7

#: log|det| this far below the boundary maximum marks a zero on the contour
_COLLISION_LOG = 27.6  # ln(1e12)

_SADDLE_MAX_DEPTH = 6


def contour_value(q, basis, k, lam) -> float:
    """sign(det) * exp(log|det|/N): same zeros as det, plottable range."""
    ld = log_det(assemble(basis, q, k, lam))
    if ld.real == -np.inf:
        return 0.0
    sign = 1.0 if np.cos(ld.imag) > 0.0 else -1.0
    return sign * float(np.exp(ld.real / basis.size))


def vertex_residual(q, basis, k, lam) -> float:
    """|eigenvalue of H0(k) nearest lambda|; the vertex acceptance residual."""
    vals = hermitian_spectrum(assemble(basis, q, k, lam))
    return float(np.min(np.abs(vals - lam)))


@dataclass
class FermiTrace:
    """Zero set of the Bloch determinant at fixed real energy.

    dim=1 stores ``points``; dim=2 stores a vertex/segment graph with
    per-segment component labels after torus gluing; dim=3 stores one
    2D trace per k3 slice.
    """

    lam: float
    dim: int
    window: tuple
    points: np.ndarray = None          # (P,) for dim=1
    vertices: np.ndarray = None        # (V, 2) for dim=2
    segments: np.ndarray = None        # (S, 2) vertex ids
    component_ids: np.ndarray = None   # per segment (dim=2) / per point (dim=1)
    residuals: np.ndarray = None       # per vertex / per point
    slices: tuple = None               # ((k3, FermiTrace), ...) for dim=3

    @property
    def is_empty(self) -> bool:
        if self.dim == 1:
            return self.points.size == 0
        if self.dim == 2:
            return self.segments.shape[0] == 0
        return all(t.is_empty for _, t in self.slices)

    def n_components(self) -> int:
        if self.dim == 3:
            return len(_slice_groups(self))
        if self.component_ids is None or self.component_ids.size == 0:
            return 0
        return int(np.max(self.component_ids)) + 1

    def all_vertices(self) -> np.ndarray:
        """Vertex coordinates as an array (k1[, k2[, k3]]) per row."""
        if self.dim == 1:
            return self.points[:, None]
        if self.dim == 2:
            return self.vertices
        rows = [np.column_stack([t.vertices, np.full(len(t.vertices), k3)])
                for k3, t in self.slices if len(t.vertices)]
        return np.vstack(rows) if rows else np.empty((0, 3))

    def polylines(self):
        """Chains of vertex coordinates (dim=2), for plotting/CSV."""
        if self.dim != 2:
            raise ValueError("polylines are only defined for dim=2 traces")
        return _chains(self.vertices, self.segments)


# ---------------------------------------------------------------------------
# real traces


def trace_real(q, basis, lam, grid) -> FermiTrace:
    """Real Fermi set at energy lambda over the grid's window.

    Empty output is a legitimate result (lambda in a gap).
    """
    if q.dim != basis.dim or q.dim != grid.dim:
        raise ValueError("dimension mismatch between potential, basis, grid")
    lam = float(lam)
    if grid.dim == 1:
        return _trace_1d(q, basis, lam, grid)
    if grid.dim == 2:
        return _trace_2d(q, basis, lam, grid)
    slices = []
    for k3 in grid.axis(2):
        sub = BrillouinGrid(2, grid.resolution[:2], grid.window[:2])
        slices.append((float(k3), _trace_2d(q, basis, lam, sub, k_extra=float(k3))))
    return FermiTrace(lam=lam, dim=3, window=grid.window, slices=tuple(slices))


def _trace_1d(q, basis, lam, grid):
    ks = grid.axis(0)
    g = np.array([contour_value(q, basis, [k], lam) for k in ks])
    roots = []
    for i in np.nonzero(g[:-1] * g[1:] <= 0.0)[0]:
        if g[i] == 0.0:
            roots.append(float(ks[i]))
        elif g[i + 1] != 0.0:
            root = _polish_edge(q, basis, lam, np.array([ks[i]]), np.array([ks[i + 1]]))
            roots.append(float(root[0]))
    if g[-1] == 0.0:
        roots.append(float(ks[-1]))
    points = np.array(sorted(roots))
    res = np.array([vertex_residual(q, basis, [k], lam) for k in points])
    comp = _label_points(points, grid.window[0])
    return FermiTrace(lam=lam, dim=1, window=grid.window, points=points,
                      component_ids=comp, residuals=res)


def _label_points(points, window, tol=1e-8):
    if len(points) == 0:
        return np.empty(0, dtype=int)
    lo, hi = window
    uf = _UnionFind(len(points))
    for i, p in enumerate(points):
        for j, p2 in enumerate(points):
            if abs(p - lo) < tol and abs(p2 - hi) < tol:
                uf.union(i, j)
    return _consecutive_labels([uf.find(i) for i in range(len(points))])


def _trace_2d(q, basis, lam, grid, k_extra=None):
    """Marching squares on the scaled determinant, vertices edge-polished."""
    ax1, ax2 = grid.axis(0), grid.axis(1)

    def kvec(k1, k2):
        return [k1, k2] if k_extra is None else [k1, k2, k_extra]

    def g_at(k1, k2):
        return contour_value(q, basis, kvec(k1, k2), lam)

    gvals = np.array([[g_at(k1, k2) for k2 in ax2] for k1 in ax1])

    builder = _TraceBuilder(q, basis, lam, kvec)
    for i in range(len(ax1) - 1):
        for j in range(len(ax2) - 1):
            corners = (gvals[i, j], gvals[i + 1, j], gvals[i + 1, j + 1], gvals[i, j + 1])
            builder.cell(ax1[i], ax1[i + 1], ax2[j], ax2[j + 1], corners, 0, g_at)

    if builder.vertices:
        vertices = np.array(builder.vertices)
        segments = np.array(builder.segments, dtype=int)
    else:
        vertices = np.empty((0, 2))
        segments = np.empty((0, 2), dtype=int)
    res = np.array([vertex_residual(q, basis, kvec(*v), lam) for v in vertices])
    trace = FermiTrace(lam=lam, dim=2, window=grid.window, vertices=vertices,
                       segments=segments, residuals=res)
    trace.component_ids = _label_segments(trace)
    return trace


_SEGMENT_TABLE = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)],
    7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)], 11: [(1, 2)], 12: [(3, 1)],
    13: [(0, 1)], 14: [(3, 0)],
}

_SADDLE_CASES = (5, 10)


class _TraceBuilder:
    """Accumulates polished marching-squares vertices and segments."""

    def __init__(self, q, basis, lam, kvec):
        self.q = q
        self.basis = basis
        self.lam = lam
        self.kvec = kvec
        self.vertices = []
        self.segments = []
        self._vertex_ids = {}
        self._edge_roots = {}

    def cell(self, x0, x1, y0, y1, corners, depth, g_at):
        g00, g10, g11, g01 = corners
        mask = ((g00 > 0) | ((g10 > 0) << 1) | ((g11 > 0) << 2) | ((g01 > 0) << 3))
        if mask in (0, 15):
            return
        if mask in _SADDLE_CASES:
            # ambiguous cell (4 sign changes): refine locally
            if depth >= _SADDLE_MAX_DEPTH:
                raise ResolutionFailure(
                    f"saddle cell at ({x0:.4f},{y0:.4f}) unresolved after "
                    f"{_SADDLE_MAX_DEPTH} refinements")
            xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            gb, gr = g_at(xm, y0), g_at(x1, ym)
            gt, gl = g_at(xm, y1), g_at(x0, ym)
            gc = g_at(xm, ym)
            self.cell(x0, xm, y0, ym, (g00, gb, gc, gl), depth + 1, g_at)
            self.cell(xm, x1, y0, ym, (gb, g10, gr, gc), depth + 1, g_at)
            self.cell(xm, x1, ym, y1, (gc, gr, g11, gt), depth + 1, g_at)
            self.cell(x0, xm, ym, y1, (gl, gc, gt, g01), depth + 1, g_at)
            return
        edge_pts = {
            0: ((x0, y0), (x1, y0), g00, g10),
            1: ((x1, y0), (x1, y1), g10, g11),
            2: ((x1, y1), (x0, y1), g11, g01),
            3: ((x0, y1), (x0, y0), g01, g00),
        }
        for e_a, e_b in _SEGMENT_TABLE[mask]:
            va = self._edge_vertex(*edge_pts[e_a])
            vb = self._edge_vertex(*edge_pts[e_b])
            if va is not None and vb is not None and va != vb:
                self.segments.append((va, vb))

    def _edge_vertex(self, pa, pb, ga, gb):
        key = (pa, pb) if pa <= pb else (pb, pa)
        if key in self._edge_roots:
            return self._edge_roots[key]
        if ga == 0.0:
            root = np.asarray(pa, dtype=float)
        elif gb == 0.0:
            root = np.asarray(pb, dtype=float)
        elif ga * gb > 0.0:
            return None  # degenerate subdivision corner; neighbors cover it
        else:
            root = _polish_edge(self.q, self.basis, self.lam,
                                np.asarray(pa), np.asarray(pb), self.kvec)
        vid = self._vertex_id(root)
        self._edge_roots[key] = vid
        return vid

    def _vertex_id(self, point):
        qkey = tuple(np.round(point, 9))
        if qkey in self._vertex_ids:
            return self._vertex_ids[qkey]
        vid = len(self.vertices)
        self.vertices.append(np.asarray(point, dtype=float))
        self._vertex_ids[qkey] = vid
        return vid


def _polish_edge(q, basis, lam, ka, kb, kvec=None):
    """Locate the determinant zero on the segment [ka, kb].

    Follows the eigenvalue branch that crosses lambda when the crossing is
    simple; falls back to bisection on the determinant sign otherwise.
    The polished point must satisfy the vertex residual bound.
    """
    ka = np.atleast_1d(np.asarray(ka, dtype=float))
    kb = np.atleast_1d(np.asarray(kb, dtype=float))
    embed = (lambda k: list(k)) if kvec is None else (lambda k: kvec(*k))

    def spectrum(t):
        return hermitian_spectrum(assemble(basis, q, embed(ka + t * (kb - ka)), lam))

    na = int(np.sum(spectrum(0.0) < lam))
    nb = int(np.sum(spectrum(1.0) < lam))
    if abs(na - nb) == 1:
        idx = min(na, nb)

        def f(t):
            return spectrum(t)[idx] - lam

        t_root = brentq(f, 0.0, 1.0, xtol=1e-13, rtol=8.9e-16)
    else:
        # even/multiple crossing: bisect on the determinant sign
        def sgn(t):
            return contour_value(q, basis, embed(ka + t * (kb - ka)), lam)

        lo_t, hi_t = 0.0, 1.0
        s_lo = sgn(lo_t)
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            s_m = sgn(mid)
            if s_lo * s_m <= 0.0:
                hi_t = mid
            else:
                lo_t, s_lo = mid, s_m
        t_root = 0.5 * (lo_t + hi_t)

    root = ka + t_root * (kb - ka)
    if vertex_residual(q, basis, embed(root), lam) > VERTEX_RESIDUAL:
        raise ResolutionFailure(
            f"vertex polish stalled on edge {ka} -> {kb} at lambda={lam}")
    return root


# ---------------------------------------------------------------------------
# components on the torus


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _consecutive_labels(roots):
    order = {}
    labels = np.empty(len(roots), dtype=int)
    for i, r in enumerate(roots):
        order.setdefault(r, len(order))
        labels[i] = order[r]
    return labels


def _glue_pairs(vertices, window, tol=1e-6):
    """Vertex index pairs identified across opposite window faces."""
    pairs = []
    dim = vertices.shape[1] if vertices.size else 0
    for axis in range(dim):
        lo, hi = window[axis]
        on_lo = np.nonzero(np.abs(vertices[:, axis] - lo) < tol)[0]
        on_hi = np.nonzero(np.abs(vertices[:, axis] - hi) < tol)[0]
        for i in on_lo:
            shifted = vertices[i].copy()
            shifted[axis] = hi
            for j in on_hi:
                if np.max(np.abs(vertices[j] - shifted)) < tol:
                    pairs.append((int(i), int(j)))
    return pairs


def _label_segments(trace: FermiTrace) -> np.ndarray:
    """Per-segment component ids after gluing opposite Brillouin faces."""
    if trace.segments.shape[0] == 0:
        return np.empty(0, dtype=int)
    uf = _UnionFind(len(trace.vertices))
    for a, b in trace.segments:
        uf.union(int(a), int(b))
    for i, j in _glue_pairs(trace.vertices, trace.window):
        uf.union(i, j)
    return _consecutive_labels([uf.find(int(a)) for a, _ in trace.segments])


@dataclass(frozen=True)
class ComponentReport:
    n_components: int
    lengths: tuple         # per component: summed segment length
    bounding_boxes: tuple  # per component: (min per axis, max per axis)
    n_segments: tuple


def component_report(trace: FermiTrace) -> ComponentReport:
    """Component statistics after torus gluing; deterministic labels."""
    if trace.dim == 3:
        groups = _slice_groups(trace)
        boxes, counts = [], []
        for pts in groups:
            boxes.append((tuple(np.min(pts, axis=0)), tuple(np.max(pts, axis=0))))
            counts.append(len(pts))
        return ComponentReport(n_components=len(groups), lengths=(0.0,) * len(groups),
                               bounding_boxes=tuple(boxes), n_segments=tuple(counts))
    if trace.dim == 1:
        pts = trace.points
        comp = trace.component_ids
        n = int(np.max(comp)) + 1 if comp.size else 0
        boxes = tuple(
            ((float(np.min(pts[comp == c])),), (float(np.max(pts[comp == c])),))
            for c in range(n))
        return ComponentReport(n_components=n, lengths=(0.0,) * n,
                               bounding_boxes=boxes, n_segments=(0,) * n)
    comp = trace.component_ids
    n = int(np.max(comp)) + 1 if comp.size else 0
    lengths, boxes, counts = [], [], []
    for c in range(n):
        seg = trace.segments[comp == c]
        pts = trace.vertices[np.unique(seg)]
        d = trace.vertices[seg[:, 0]] - trace.vertices[seg[:, 1]]
        lengths.append(float(np.sum(np.hypot(d[:, 0], d[:, 1]))))
        boxes.append((tuple(np.min(pts, axis=0)), tuple(np.max(pts, axis=0))))
        counts.append(int(seg.shape[0]))
    return ComponentReport(n_components=n, lengths=tuple(lengths),
                           bounding_boxes=tuple(boxes), n_segments=tuple(counts))


def _slice_groups(trace: FermiTrace):
    """3D components: per-slice components merged by cross-slice proximity.

    A slice stack shares no vertices between slices, so two components in
    adjacent k3 slices are joined when their vertex sets come within 1.5
    in-plane grid cells of each other (proximity heuristic).
    """
    entries = []  # (slice index, vertex array with k3 column)
    for s, (k3, t2) in enumerate(trace.slices):
        if t2.segments.shape[0] == 0:
            continue
        for c in range(int(np.max(t2.component_ids)) + 1):
            vids = np.unique(t2.segments[t2.component_ids == c])
            pts = t2.vertices[vids]
            entries.append((s, np.column_stack([pts, np.full(len(pts), k3)])))
    if not entries:
        return []
    spans = [(hi - lo) for lo, hi in trace.window[:2]]
    n_slices = max(len(trace.slices) - 1, 1)
    tol = 1.5 * max(spans) / max(10, n_slices)
    uf = _UnionFind(len(entries))
    for i, (si, vi) in enumerate(entries):
        for j, (sj, vj) in enumerate(entries):
            if j <= i or abs(si - sj) > 1:
                continue
            dmin = np.min(np.linalg.norm(vi[:, None, :2] - vj[None, :, :2], axis=2))
            if dmin < tol:
                uf.union(i, j)
    groups = {}
    for i, (_, pts) in enumerate(entries):
        groups.setdefault(uf.find(i), []).append(pts)
    return [np.vstack(groups[r]) for r in sorted(groups)]


def _chains(vertices, segments):
    """Greedy assembly of segments into polyline chains."""
    adj = {}
    for s, (a, b) in enumerate(segments):
        adj.setdefault(int(a), []).append((s, int(b)))
        adj.setdefault(int(b), []).append((s, int(a)))
    used = np.zeros(len(segments), dtype=bool)
    chains = []
    for start in sorted(adj):
        for s0, _ in adj[start]:
            if used[s0]:
                continue
            chain = [start]
            cur = start
            while True:
                nxt = next(((s, v) for s, v in adj[cur] if not used[s]), None)
                if nxt is None:
                    break
                used[nxt[0]] = True
                cur = nxt[1]
                chain.append(cur)
            if len(chain) > 1:
                chains.append(vertices[np.array(chain)])
    return chains


# ---------------------------------------------------------------------------
# complex-line probes


@dataclass
class ComplexLineProbe:
    """Rectangle in one complexified quasimomentum coordinate.

    The probed line is k = k0 + z * e_axis with k0[axis] = 0, z in the
    rectangle (re0, re1) x (im0, im1).  ``zero_count`` and the refinement
    trace are filled by the counting/polishing operations; the rectangle is
    nudged outward if a determinant zero lands on its boundary.
    """

    k0: np.ndarray
    axis: int
    rect: tuple  # (re0, re1, im0, im1)
    zero_count: int = None
    refinement_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.k0 = np.atleast_1d(np.asarray(self.k0, dtype=float))
        if abs(self.k0[self.axis]) > 1e-12:
            raise ValueError("probe base point must have k0[axis] = 0")
        re0, re1, im0, im1 = self.rect
        if re1 <= re0 or im1 <= im0:
            raise ValueError("degenerate probe rectangle")


class _BoundaryZero(Exception):
    def __init__(self, z):
        self.z = z


def _probe_logdet(q, basis, probe, lam):
    k0 = probe.k0.astype(complex)
    axis = probe.axis

    def f(z):
        k = k0.copy()
        k[axis] = z
        return log_det(assemble(basis, q, k, lam))

    return f


def _walk_boundary(f, rect, max_samples=40000):
    """Accumulated phase of f = log det along the rectangle boundary (CCW).

    Successive samples must differ in phase by < pi/2, else the segment is
    subdivided.  Raises _BoundaryZero when a sample's log magnitude falls
    1e12 below the boundary maximum, ProbeFailure on sample exhaustion.
    """
    re0, re1, im0, im1 = rect
    corners = [complex(re0, im0), complex(re1, im0),
               complex(re1, im1), complex(re0, im1), complex(re0, im0)]
    cache = {}

    def ld(z):
        if z not in cache:
            cache[z] = f(z)
        return cache[z]

    init = []
    for a, b in zip(corners, corners[1:]):
        for t in np.linspace(0.0, 1.0, 8, endpoint=False):
            init.append(a + t * (b - a))
    log_max = max(ld(z).real for z in init)

    def check(z):
        v = ld(z)
        if v.real < log_max - _COLLISION_LOG:
            raise _BoundaryZero(z)
        return v

    total = 0.0
    n_samples = len(init)
    for a, b in zip(corners, corners[1:]):
        # seed with 8 subsegments so a full 2 pi swing cannot alias away
        ts = np.linspace(0.0, 1.0, 9)
        pts = [a + t * (b - a) for t in ts]
        vals = [check(z) for z in pts]
        stack = list(zip(pts, pts[1:], vals, vals[1:], [0] * 8))
        while stack:
            za, zb, va, vb, depth = stack.pop()
            dphi = _wrap(vb.imag - va.imag)
            if abs(dphi) < 0.5 * np.pi:
                total += dphi
                continue
            if depth > 48:
                raise ProbeFailure("phase tracking failed to converge")
            n_samples += 1
            if n_samples > max_samples:
                raise ProbeFailure("phase tracking exhausted its sample budget")
            zm = 0.5 * (za + zb)
            vm = check(zm)
            stack.append((zm, zb, vm, vb, depth + 1))
            stack.append((za, zm, va, vm, depth + 1))
    return total, n_samples


def _wrap(phi):
    return (phi + np.pi) % TWO_PI - np.pi


def _winding(q, basis, lam, probe, rect):
    f = _probe_logdet(q, basis, probe, lam)
    total, n = _walk_boundary(f, rect)
    w = total / TWO_PI
    if abs(w - round(w)) > 0.25 or round(w) < 0:
        raise ProbeFailure(
            f"winding number {w:.3f} is not a trustworthy nonnegative integer")
    probe.refinement_trace.append(("winding", rect, int(round(w)), n))
    return int(round(w))


def complex_zero_count(q, basis, lam, probe: ComplexLineProbe) -> int:
    """Zeros of the determinant inside the probe rectangle (with multiplicity).

    Computed as the winding number of det along the boundary by adaptive
    phase tracking; the rectangle is expanded outward by 1e-3 steps when a
    zero sits on the boundary (the effective rectangle is recorded on the
    probe).
    """
    rect = tuple(probe.rect)
    for attempt in range(6):
        try:
            count = _winding(q, basis, lam, probe, rect)
        except _BoundaryZero as bz:
            probe.refinement_trace.append(("boundary_zero", rect, complex(bz.z)))
            d = 1e-3 * (attempt + 1)
            re0, re1, im0, im1 = rect
            rect = (re0 - d, re1 + d, im0 - d, im1 + d)
            continue
        probe.rect = rect
        probe.zero_count = count
        return count
    raise ProbeFailure("persistent boundary-zero collision after retries")


def _split_rect(q, basis, lam, probe, rect, count):
    """Quadrant counts with deterministic split-line jitter on collisions."""
    re0, re1, im0, im1 = rect
    for attempt in range(6):
        s = 0.3 * attempt / 6.0
        xm = re0 + (0.5 + s * 0.2) * (re1 - re0)
        ym = im0 + (0.5 + s * 0.2) * (im1 - im0)
        quads = [(re0, xm, im0, ym), (xm, re1, im0, ym),
                 (re0, xm, ym, im1), (xm, re1, ym, im1)]
        try:
            counts = [_winding(q, basis, lam, probe, quad) for quad in quads]
        except _BoundaryZero as bz:
            probe.refinement_trace.append(("boundary_zero", rect, complex(bz.z)))
            continue
        if sum(counts) == count:
            return quads, counts
        probe.refinement_trace.append(("split_mismatch", rect, tuple(counts)))
    raise ProbeFailure(f"could not split rectangle {rect} cleanly")


def polish_zeros(q, basis, lam, probe: ComplexLineProbe):
    """Roots inside the counted rectangle, by subdivision + complex Newton.

    Sub-rectangles that cannot be polished (Newton stagnation, clustered
    zeros at the depth cap) are recorded in the probe's refinement trace as
    ("unpolished", rect) and skipped; clean probes return exactly
    ``zero_count`` roots.
    """
    if probe.zero_count is None:
        raise ValueError("run complex_zero_count before polishing")
    f = _probe_logdet(q, basis, probe, lam)
    roots = []
    stack = [(tuple(probe.rect), probe.zero_count, 0)]
    while stack:
        rect, count, depth = stack.pop()
        if count == 0:
            continue
        if count == 1:
            z = _newton_root(f, rect)
            ok = (z is not None and _inside(z, probe.rect, pad=1e-6)
                  and _root_residual(q, basis, lam, probe, z) <= VERTEX_RESIDUAL)
            if ok:
                roots.append(z)
            else:
                probe.refinement_trace.append(("unpolished", rect))
            continue
        if depth >= 40:
            probe.refinement_trace.append(("unpolished", rect))
            continue
        quads, counts = _split_rect(q, basis, lam, probe, rect, count)
        for quad, c in zip(quads, counts):
            stack.append((quad, c, depth + 1))
    return sorted(roots, key=lambda z: (z.real, z.imag))


def _inside(z, rect, pad=0.0):
    re0, re1, im0, im1 = rect
    return (re0 - pad <= z.real <= re1 + pad) and (im0 - pad <= z.imag <= im1 + pad)


def _root_residual(q, basis, lam, probe, z):
    k = probe.k0.astype(complex).copy()
    k[probe.axis] = z
    s = np.linalg.svd(assemble(basis, q, k, lam).entries, compute_uv=False)
    return float(s[-1])


def _newton_root(f, rect, h=1e-6, max_iter=80):
    """Newton on det via the logarithmic derivative (central differences).

    The difference step shrinks with the Newton step: once the root is
    inside the stencil the phase estimate wraps and the iteration stalls.
    """
    re0, re1, im0, im1 = rect
    z = complex(0.5 * (re0 + re1), 0.5 * (im0 + im1))
    diam = np.hypot(re1 - re0, im1 - im0)
    for _ in range(max_iter):
        v0 = f(z)
        if v0.real == -np.inf:
            return z  # exactly singular: z is the root
        vp, vm = f(z + h), f(z - h)
        vip, vim = f(z + 1j * h), f(z - 1j * h)
        if -np.inf in (vp.real, vm.real, vip.real, vim.real):
            return z
        d_re = ((vp.real - vm.real) + 1j * _wrap(vp.imag - vm.imag)) / (2 * h)
        d_im = ((vip.real - vim.real) + 1j * _wrap(vip.imag - vim.imag)) / (2 * h)
        d = 0.5 * (d_re + d_im / 1j)  # average two estimates of (log det)'
        if d == 0:
            return None
        step = -1.0 / d
        if abs(step) > 0.5 * diam:
            step *= 0.5 * diam / abs(step)
        z = z + step
        if abs(step) < 1e-12 * (1.0 + abs(z)):
            return z
        h = max(1e-13, min(h, 0.01 * abs(step)))
    return None


# ---------------------------------------------------------------------------
# separable cross-check


@dataclass(frozen=True)
class CrossCheckReport:
    max_residual: float
    residuals: np.ndarray   # per vertex
    mu_values: np.ndarray   # per vertex (nan where no branch exists)
    n_missing: int


def separable_cross_check(q1, q2, lam, trace: FermiTrace) -> CrossCheckReport:
    """Validate a 2D trace of q1(x1)+q2(x2) against the Hill parametrization.

    A vertex (k1, k2) lies on the Fermi set iff some energy split
    mu + nu = lambda has D1(mu) = 2 cos k1 and D2(nu) = 2 cos k2.  All mu
    branches of the first equation are solved on a verified discriminant
    interpolant and the best second-equation residual is kept; vertices
    with no branch report +inf.
    """
    if trace.dim != 2:
        raise ValueError("cross-check needs a 2D trace")
    if q1.dim != 1 or q2.dim != 1:
        raise ValueError("factors must be one-dimensional")
    lam = float(lam)
    mu_lo = q1.min_bound() - 0.5
    mu_hi = lam - q2.min_bound() + 0.5
    model1 = hill.DiscriminantModel(q1, mu_lo, mu_hi, target_err=1e-11)
    model2 = hill.DiscriminantModel(q2, lam - mu_hi, lam - mu_lo, target_err=1e-11)

    vertices = trace.all_vertices()
    residuals = np.full(len(vertices), np.inf)
    mu_used = np.full(len(vertices), np.nan)
    for i, (k1, k2) in enumerate(vertices):
        t1 = 2.0 * np.cos(k1)
        t2 = 2.0 * np.cos(k2)
        best, best_mu = np.inf, np.nan
        for mu in model1.real_roots(t1):
            r = abs(model2.value(lam - mu) - t2)
            if r < best:
                best, best_mu = r, mu
        residuals[i] = best
        mu_used[i] = best_mu
    max_res = float(np.max(residuals)) if len(residuals) else 0.0
    return CrossCheckReport(
        max_residual=max_res,
        residuals=residuals,
        mu_values=mu_used,
        n_missing=int(np.sum(~np.isfinite(residuals))),
    )
