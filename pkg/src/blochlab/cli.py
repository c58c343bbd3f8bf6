"""Command-line entry point: bands | fermi | hill | scan | floquet-check.

Every run writes a manifest echoing the fully resolved configuration next
to its outputs (CSV for arrays, JSON for reports), so a run is reproducible
from its manifest alone.  Exit codes: 0 ok, 2 configuration error, 3 a
numerical-failure report was raised.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import band_structure as bst
from . import fermi as fm
from . import floquet_transform as ft
from . import hill
from . import perturbed as per
from . import plane_wave as pw
from . import potential as pot
from .errors import NumericalFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _workers():
    try:
        return max(1, int(os.environ.get("BLOCHLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _fmt(x):
    return f"{x:.12g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _write_manifest(outdir, command, config):
    doc = {"tool": "blochlab", "version": __version__,
           "command": command, "config": config}
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _resolve_potential(text, dim):
    q = pot.parse_preset(text, dim=dim)
    if dim is not None and q.dim != dim:
        raise ValueError(f"potential {text!r} has dim {q.dim}, expected {dim}")
    return q


# ---------------------------------------------------------------------------
# subcommands


def _cmd_bands(args):
    dim = args.dim or (2 if args.potential.startswith("mathieu2d") else 1)
    q = _resolve_potential(args.potential, dim)
    cutoff = args.cutoff or pw.DEFAULT_CUTOFF[q.dim]
    resolution = args.grid or bst.DEFAULT_RESOLUTION[q.dim]
    basis = pw.PlaneWaveBasis.create(q.dim, cutoff)
    grid = bst.BrillouinGrid(q.dim, resolution)
    bs = bst.band_functions(q, basis, grid, args.nbands, workers=_workers())
    bs = bst.extract_bands(q, basis, bs, refine_tol=args.refine_tol)

    nodes = grid.nodes()
    header = [f"k{j+1}" for j in range(q.dim)] + \
             [f"lambda_{j+1}" for j in range(args.nbands)]
    rows = [tuple(map(float, nodes[i])) + tuple(map(float, bs.values[i]))
            for i in range(len(nodes))]
    _write_csv(os.path.join(args.out, "bands.csv"), header, rows)
    summary = {"bands": [[a, b] for a, b in bs.bands],
               "gaps": [[a, b] for a, b in bs.gaps]}
    with open(os.path.join(args.out, "bands_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    _write_manifest(args.out, "bands", {
        "potential": args.potential, "dim": q.dim, "cutoff": cutoff,
        "grid": resolution, "nbands": args.nbands,
        "refine_tol": args.refine_tol, "seed": args.seed})
    return EXIT_OK


def _cmd_hill(args):
    q = _resolve_potential(args.potential, 1)
    bands = hill.bands_1d(q, args.lambda_max)
    lams = np.arange(q.min_bound() - 0.5, args.lambda_max, args.table_step)
    dvals = np.real(hill.discriminant_scan(q, lams)[0])
    _write_csv(os.path.join(args.out, "discriminant.csv"), ["lambda", "D"],
               list(zip(map(float, lams), map(float, dvals))))
    _write_csv(os.path.join(args.out, "hill_bands.csv"), ["a", "b"],
               [(float(a), float(b)) for a, b in bands])
    _write_manifest(args.out, "hill", {
        "potential": args.potential, "lambda_max": args.lambda_max,
        "table_step": args.table_step, "seed": args.seed})
    return EXIT_OK


def _cmd_fermi(args):
    dim = args.dim or (2 if args.potential in ("free",) or
                       args.potential.startswith("mathieu2d") else 1)
    q = _resolve_potential(args.potential, dim)
    cutoff = args.cutoff or pw.DEFAULT_CUTOFF[q.dim]
    resolution = args.grid or {1: 201, 2: 61, 3: 21}[q.dim]
    basis = pw.PlaneWaveBasis.create(q.dim, cutoff)
    grid = bst.BrillouinGrid(q.dim, resolution)
    trace = fm.trace_real(q, basis, args.lam, grid)

    rows = []
    if q.dim == 1:
        for i, p in enumerate(trace.points):
            rows.append((float(p), int(trace.component_ids[i])))
        header = ["k1", "component_id"]
    elif q.dim == 2:
        vert_comp = _vertex_components(trace)
        for i, v in enumerate(trace.vertices):
            rows.append((float(v[0]), float(v[1]), int(vert_comp[i])))
        header = ["k1", "k2", "component_id"]
    else:
        header = ["k1", "k2", "k3", "component_id"]
        for k3, t2 in trace.slices:
            vert_comp = _vertex_components(t2)
            for i, v in enumerate(t2.vertices):
                rows.append((float(v[0]), float(v[1]), float(k3), int(vert_comp[i])))
    _write_csv(os.path.join(args.out, "fermi_trace.csv"), header, rows)

    report = {"lambda": args.lam, "n_components": trace.n_components(),
              "empty": bool(trace.is_empty)}
    if args.probe:
        axis, re0, re1, im0, im1 = (float(v) for v in args.probe.split(","))
        k0 = np.zeros(q.dim)
        probe = fm.ComplexLineProbe(k0=k0, axis=int(axis),
                                    rect=(re0, re1, im0, im1))
        count = fm.complex_zero_count(q, basis, args.lam, probe)
        roots = fm.polish_zeros(q, basis, args.lam, probe)
        report["probe"] = {
            "axis": int(axis), "rect": list(probe.rect), "zero_count": count,
            "roots": [[z.real, z.imag] for z in roots]}
    with open(os.path.join(args.out, "fermi_report.json"), "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    _write_manifest(args.out, "fermi", {
        "potential": args.potential, "dim": q.dim, "lambda": args.lam,
        "cutoff": cutoff, "grid": resolution, "probe": args.probe,
        "seed": args.seed})
    return EXIT_OK


def _vertex_components(trace2d):
    comp = np.zeros(len(trace2d.vertices), dtype=int)
    for s, (a, b) in enumerate(trace2d.segments):
        comp[a] = trace2d.component_ids[s]
        comp[b] = trace2d.component_ids[s]
    return comp


def _parse_impurity(text, background, half_width, h):
    if text.startswith("gaussian:"):
        a, w = (float(v) for v in text.split(":", 1)[1].split(","))
        return per.gaussian_impurity(a, w), None
    if text.startswith("wvn:"):
        parts = [float(v) for v in text.split(":", 1)[1].split(",")]
        target = parts[0]
        envelope = parts[1] if len(parts) > 1 else 4.0
        built = per.make_wvn(background, target, half_width, h, envelope=envelope)
        return built.v, built
    raise ValueError(f"unknown impurity description {text!r}")


def _cmd_scan(args):
    q = _resolve_potential(args.background, 1)
    ladder = [int(v) for v in args.ladder.split(",")]
    lo, hi = (float(v) for v in args.window.split(","))
    impurity, built = _parse_impurity(args.impurity, q, max(ladder), args.h)
    p = per.BoxProblem(dim=1, half_width=max(ladder), h=args.h, q=q,
                       impurity=impurity)
    report = per.stability_scan(p, ladder, (lo, hi))

    doc = {"window": [lo, hi], "ladder": ladder, "h": args.h,
           "flags": report.flags, "candidates": []}
    if built is not None:
        doc["construction"] = {"target": built.target,
                               "residual": built.residual,
                               "tail_fraction": built.tail_fraction}
    for c in report.candidates:
        doc["candidates"].append({
            "lambda": c.lam, "residual": c.residual,
            "l_stability": c.l_stability,
            "lambda_by_rung": {str(k): v for k, v in (c.lam_by_rung or {}).items()},
            "decay": None if c.decay is None else {
                "c": c.decay.c, "p": c.decay.p, "rms": c.decay.rms,
                "trusted": c.decay.trusted, "reason": c.decay.reason},
            "classification": c.classification})
    with open(os.path.join(args.out, "scan_report.json"), "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")

    if args.dump_vectors:
        n = int(round(2 * max(ladder) / args.h)) - 1
        x = -max(ladder) + args.h * np.arange(1, n + 1)
        for i, c in enumerate(report.candidates):
            rows = list(zip(map(float, x), map(float, np.real(c.vector))))
            _write_csv(os.path.join(args.out, f"vector_{i}.csv"), ["x", "u"], rows)
    _write_manifest(args.out, "scan", {
        "background": args.background, "impurity": args.impurity,
        "window": [lo, hi], "ladder": ladder, "h": args.h,
        "dump_vectors": bool(args.dump_vectors), "seed": args.seed})
    return EXIT_OK


def _cmd_floquet_check(args):
    rng = np.random.default_rng(args.seed)
    s = args.samples
    l_max = args.cells
    checks = []

    vals = rng.normal(size=(2 * l_max + 1, s)) + 1j * rng.normal(size=(2 * l_max + 1, s))
    f = ft.CellArray(1, l_max, s, vals)
    field = ft.forward_field(f)
    back = ft.inverse(field)
    checks.append(("roundtrip", float(np.max(np.abs(back.values - f.values))), 1e-12))

    lhs = float(np.sum(np.abs(f.values) ** 2))
    rhs = float(np.sum(np.abs(field.values) ** 2)) / f.n_cells
    checks.append(("plancherel", abs(lhs - rhs) / lhs, 1e-12))

    k = np.array([rng.uniform(0, 2 * np.pi)])
    a = ft.forward(f, k + 2 * np.pi)
    b = np.exp(-2j * np.pi * f.cell_offsets) * ft.forward(f, k)
    checks.append(("quasi_periodicity", float(np.max(np.abs(a - b))), 1e-12))

    supp = np.zeros_like(vals)
    supp[l_max - 1:l_max + 2] = vals[l_max - 1:l_max + 2]
    fc = ft.CellArray(1, l_max, s, supp)
    a = ft.forward(ft.shift(fc, [1]), k)
    b = np.exp(-1j * k[0]) * ft.forward(fc, k)
    checks.append(("shift_covariance", float(np.max(np.abs(a - b))), 1e-12))

    def packet(x):
        r2 = np.sum(x ** 2, axis=-1)
        return np.exp(-r2) * np.exp(1j * 2.0 * x[..., 0])

    fg = ft.CellArray.from_function(packet, 1, 8, 32)
    ks = [[0.3], [2.0], [5.0]]
    checks.append(("diag_residual_free",
                   ft.diagonalization_residual(fg, pot.free(1), ks), 1e-8))
    checks.append(("diag_residual_mathieu",
                   ft.diagonalization_residual(fg, pot.mathieu(1.0), ks), 1e-6))

    prof = np.zeros(s)
    prof[0] = 1.0
    ls = np.arange(-8, 9)
    g2 = ft.CellArray(1, 8, s, (np.exp(-ls[:, None] ** 2.0) * prof[None, :]).astype(complex))
    fit = ft.growth_order_probe(g2, 0, np.linspace(1.0, 6.0, 24))
    checks.append(("growth_order_r2", abs(fit.order - 2.0), 0.2))

    single = np.zeros((17, s), dtype=complex)
    single[8, s // 2] = 1.0
    g1 = ft.CellArray(1, 8, s, single)
    fit1 = ft.growth_order_probe(g1, 0, np.linspace(1.0, 6.0, 24))
    checks.append(("growth_order_single_cell", abs(fit1.order - 1.0), 0.1))

    rows = [(name, float(val), float(thr), int(val < thr))
            for name, val, thr in checks]
    _write_csv(os.path.join(args.out, "floquet_check.csv"),
               ["check", "measured", "threshold", "pass"], rows)
    _write_manifest(args.out, "floquet-check", {
        "cells": l_max, "samples": s, "seed": args.seed})
    if not all(r[3] for r in rows):
        raise NumericalFailure("floquet-check: some residuals exceeded thresholds")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="blochlab",
        description="Band structures, Fermi varieties and impurity-state "
                    "experiments for periodic Schrodinger operators.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("bands", help="band functions and gap summary")
    sp.add_argument("--potential", required=True)
    sp.add_argument("--dim", type=int, choices=(1, 2, 3))
    sp.add_argument("--cutoff", type=int)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--nbands", type=int, default=4)
    sp.add_argument("--refine-tol", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(func=_cmd_bands)

    sp = sub.add_parser("hill", help="discriminant table and 1D band list")
    sp.add_argument("--potential", required=True)
    sp.add_argument("--lambda-max", type=float, default=60.0, dest="lambda_max")
    sp.add_argument("--table-step", type=float, default=0.1, dest="table_step")
    common(sp)
    sp.set_defaults(func=_cmd_hill)

    sp = sub.add_parser("fermi", help="real Fermi trace and complex probes")
    sp.add_argument("--potential", required=True)
    sp.add_argument("--dim", type=int, choices=(1, 2, 3))
    sp.add_argument("--lambda", type=float, required=True, dest="lam")
    sp.add_argument("--cutoff", type=int)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--probe", help="axis,re0,re1,im0,im1")
    common(sp)
    sp.set_defaults(func=_cmd_fermi)

    sp = sub.add_parser("scan", help="impurity eigenvalue scan over box ladder")
    sp.add_argument("--background", required=True)
    sp.add_argument("--impurity", required=True,
                    help="gaussian:A,w or wvn:target[,envelope]")
    sp.add_argument("--window", required=True, help="lo,hi")
    sp.add_argument("--ladder", default="20,40,80")
    sp.add_argument("--h", type=float, default=0.01)
    sp.add_argument("--dump-vectors", action="store_true", dest="dump_vectors")
    common(sp)
    sp.set_defaults(func=_cmd_scan)

    sp = sub.add_parser("floquet-check", help="transform invariant suite")
    sp.add_argument("--cells", type=int, default=6)
    sp.add_argument("--samples", type=int, default=16)
    common(sp)
    sp.set_defaults(func=_cmd_floquet_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_OK
    try:
        os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"blochlab: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as err:
        print(f"blochlab: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
