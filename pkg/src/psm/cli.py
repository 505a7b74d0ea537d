"""Command-line interface: every operation as a subcommand.

Exit codes: 0 success, 1 domain error (single `error: ...` line on stderr),
2 usage error. Scalar results print with 12 significant digits; --json on
any subcommand emits one machine-readable object instead (schemas in
docs/formats.md). No hidden state: every run is a pure function of its
flags and input files, wall-clock benchmark timings excepted.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import io as psio
from .chamfer import chamfer_distance
from .core import RandomSource, resolve_threads
from .emd import DISPATCH_THRESHOLD, AuctionParams, emd_auction, emd_exact
from .losses import CandidateBundle, mon_loss
from .meanshape import (SgdConfig, corner_regions, emit_plot,
                        optimize_mean_shape)
from .sampling import farthest_point_sample
from .voxel import binarize, grid_unit_scale, iou, splat


def fmt12(v):
    """12 significant digits; zero prints as 0.000000000000."""
    v = float(v)
    if v == 0.0:
        return "0.000000000000"
    if not np.isfinite(v):
        return str(v)
    if 1e-4 <= abs(v) < 1e16:
        s = np.format_float_positional(v, precision=12, unique=False,
                                       fractional=False)
        return s.rstrip(".")
    return f"{v:.11e}"


def _emit(args, obj, human_lines):
    if args.json:
        print(json.dumps(obj))
    else:
        for line in human_lines:
            print(line)


def _parse_triple(text, what):
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"{what} must be three comma-separated numbers")
    return [float(p) for p in parts]


def _scale_from(args):
    if args.grid_unit is None:
        return 1.0
    parts = args.grid_unit.split(",")
    if len(parts) != 2:
        raise ValueError("--grid-unit takes DIMS,CELL")
    return grid_unit_scale(int(parts[0]), float(parts[1]))


def _cmd_chamfer(args):
    a = psio.read_xyz(args.a)
    b = psio.read_xyz(args.b)
    res = chamfer_distance(a, b, want_grad=args.grad is not None,
                           backend=args.backend, normalize=args.normalize)
    scale = _scale_from(args)
    value = res.value / scale
    if args.grad is not None:
        psio.write_xyz(res.grad_a / scale, args.grad)
    _emit(args, {"command": "chamfer", "value": value, "backend": res.backend,
                 "normalize": args.normalize, "scale": scale},
          [fmt12(value)])
    return 0


def _cmd_emd(args):
    a = psio.read_xyz(args.a)
    b = psio.read_xyz(args.b)
    want_grad = args.grad is not None
    if args.exact:
        route = "exact"
    elif args.auction:
        route = "auction"
    else:
        # same rule as the library dispatcher
        route = "exact" if min(len(a), len(b)) <= DISPATCH_THRESHOLD else "auction"
    params = None
    achieved = None
    if route == "exact":
        res, assignment = emd_exact(a, b, want_grad)
    else:
        params = AuctionParams(target_rel_err=args.eps,
                               time_budget_s=args.budget_ms / 1000.0)
        res, assignment, achieved = emd_auction(a, b, params, want_grad)
    s = len(a)
    scale = _scale_from(args)
    div = scale * (s if args.normalize else 1)
    value = res.value / div
    if want_grad:
        psio.write_xyz(res.grad_a / div, args.grad)
    if args.dump_matching is not None:
        with open(args.dump_matching, "w", newline="\n") as fh:
            for i, j in enumerate(assignment.perm):
                fh.write(f"{i} {j} {psio.fmt_float(assignment.per_pair_cost[i])}\n")
    obj = {"command": "emd", "value": value, "backend": res.backend,
           "normalize": args.normalize, "scale": scale}
    if res.backend == "auction":
        obj["achieved_eps"] = achieved
        obj["params"] = {"target_rel_err": params.target_rel_err,
                         "scaling_factor": params.scaling_factor,
                         "time_budget_s": params.time_budget_s,
                         "relax_factor": params.relax_factor}
        print(f"auction: achieved_eps={achieved:.6g} "
              f"target_rel_err={params.target_rel_err:g} "
              f"budget_ms={args.budget_ms:g}", file=sys.stderr)
    _emit(args, obj, [fmt12(value)])
    return 0


def _cmd_fps(args):
    pts = psio.read_xyz(args.input)
    out = farthest_point_sample(pts, args.k, seed=args.seed,
                                start_index=args.start_index)
    psio.write_xyz(out, args.out)
    _emit(args, {"command": "fps", "k": args.k, "n_in": len(pts),
                 "out": args.out}, [])
    return 0


def _cmd_voxelize(args):
    pts = psio.read_xyz(args.input)
    origin = _parse_triple(args.origin, "--origin")
    g = splat(pts, args.dims, origin, args.cell,
              clamp_points=not args.no_clamp)
    if not args.raw:
        g = binarize(g, args.threshold)
    psio.write_grid(g, args.out)
    occupied = int(np.count_nonzero(g.values >= args.threshold))
    _emit(args, {"command": "voxelize", "dims": args.dims,
                 "occupied": occupied, "raw": args.raw, "out": args.out}, [])
    return 0


def _cmd_iou(args):
    g1 = psio.read_grid(args.a)
    g2 = psio.read_grid(args.b)
    value = iou(g1, g2)
    _emit(args, {"command": "iou", "value": value}, [fmt12(value)])
    return 0


def _cmd_mon(args):
    if args.bundle is not None:
        if args.groundtruth is not None or args.candidates:
            raise ValueError("give either --bundle or positional paths, not both")
        with open(args.bundle) as fh:
            manifest = json.load(fh)
        if not isinstance(manifest, dict) or "groundtruth" not in manifest \
                or "candidates" not in manifest:
            raise ValueError("bundle manifest needs 'groundtruth' and 'candidates'")
        # manifest paths resolve relative to the manifest's own directory
        base = os.path.dirname(os.path.abspath(args.bundle))
        gt_path = os.path.join(base, manifest["groundtruth"])
        cand_paths = [os.path.join(base, c) for c in manifest["candidates"]]
        metric = manifest.get("metric", args.metric)
    else:
        if args.groundtruth is None or not args.candidates:
            raise ValueError(
                "need a groundtruth and at least one candidate (or --bundle)")
        gt_path = args.groundtruth
        cand_paths = args.candidates
        metric = args.metric
    gt = psio.read_xyz(gt_path)
    cands = [psio.read_xyz(p) for p in cand_paths]
    bundle = CandidateBundle(cands, gt, metric)
    value, argmin = mon_loss(bundle, threads=resolve_threads(args.threads))
    _emit(args, {"command": "mon", "value": value, "argmin_index": argmin,
                 "n_candidates": len(cands), "metric": metric},
          [f"{fmt12(value)} {argmin}"])
    return 0


def _region_fractions(x, spec):
    """Fraction of points inside each attachment region, for reporting."""
    if spec.family == "corner_square":
        out = []
        for x0, y0, x1, y1 in corner_regions(spec):
            inside = ((x[:, 0] >= x0) & (x[:, 0] <= x1)
                      & (x[:, 1] >= y0) & (x[:, 1] <= y1))
            out.append(float(np.count_nonzero(inside)) / len(x))
        return out
    if spec.family == "bar_disk":
        c = np.array(spec.params["disk_center"])
        r = 1.5 * spec.params["disk_radius"]
        d = np.linalg.norm(x[:, :2] - c, axis=1)
        return [float(np.count_nonzero(d <= r)) / len(x)]
    return None


def _cmd_meanshape(args):
    spec = psio.read_distribution_spec(args.spec)
    cfg = SgdConfig(metric=args.metric, steps=args.steps, batch=args.batch,
                    lr0=args.lr, t_half=args.t_half, m=args.m, seed=args.seed)
    x, trace = optimize_mean_shape(spec, cfg,
                                   threads=resolve_threads(args.threads))
    if args.out is not None:
        psio.write_xyz(x, args.out)
    if args.plot is not None:
        emit_plot(x, spec, args.plot)
    if args.trace is not None:
        with open(args.trace, "w", newline="\n") as fh:
            fh.write("step,loss\n")
            for t, v in enumerate(trace):
                fh.write(f"{t},{psio.fmt_float(v)}\n")
    fractions = _region_fractions(x, spec)
    lines = [f"final_loss {fmt12(trace[-1])}"]
    obj = {"command": "meanshape", "family": spec.family,
           "metric": args.metric, "steps": args.steps,
           "final_loss": float(trace[-1])}
    if fractions is not None:
        key = "corner_fractions" if spec.family == "corner_square" else "disk_fraction"
        obj[key] = fractions
        lines.append(key + " " + " ".join(f"{f:.4f}" for f in fractions))
    _emit(args, obj, lines)
    return 0


def _bench_one_size(s, trials, seed, budget_ms):
    rows = []
    rng = RandomSource(seed)
    streams = rng.split(trials)
    for src in streams:
        a = src.gen.random((s, 3))
        b = src.gen.random((s, 3))
        t0 = time.perf_counter()
        params = AuctionParams(time_budget_s=budget_ms / 1000.0)
        res_auc, _, achieved = emd_auction(a, b, params)
        t_auction = time.perf_counter() - t0
        exact_value = None
        t_exact = None
        if s <= 512:
            t0 = time.perf_counter()
            res_ex, _ = emd_exact(a, b)
            t_exact = time.perf_counter() - t0
            exact_value = res_ex.value
        t0 = time.perf_counter()
        chamfer_distance(a, b, backend="brute")
        t_cd_brute = time.perf_counter() - t0
        t0 = time.perf_counter()
        chamfer_distance(a, b, backend="kdtree")
        t_cd_kd = time.perf_counter() - t0
        rel = None
        if exact_value is not None:
            rel = (res_auc.value - exact_value) / exact_value if exact_value > 0 else 0.0
        rows.append({"rel_err": rel, "achieved_eps": achieved,
                     "t_auction": t_auction, "t_exact": t_exact,
                     "t_cd_brute": t_cd_brute, "t_cd_kd": t_cd_kd})
    return rows


def _cmd_bench(args):
    sizes = [int(t) for t in args.sizes.split(",")]
    report = []
    for s in sizes:
        rows = _bench_one_size(s, args.trials, args.seed, args.budget_ms)
        rels = [r["rel_err"] for r in rows if r["rel_err"] is not None]
        achieved = [r["achieved_eps"] for r in rows]
        entry = {
            "size": s,
            "trials": args.trials,
            "exact_feasible": rows[0]["t_exact"] is not None,
            "rel_err_mean": float(np.mean(rels)) if rels else None,
            "rel_err_p95": float(np.percentile(rels, 95)) if rels else None,
            "achieved_eps_p95": float(np.percentile(achieved, 95)),
            "ms_auction": 1e3 * float(np.mean([r["t_auction"] for r in rows])),
            "ms_exact": (1e3 * float(np.mean([r["t_exact"] for r in rows]))
                         if rows[0]["t_exact"] is not None else None),
            "ms_cd_brute": 1e3 * float(np.mean([r["t_cd_brute"] for r in rows])),
            "ms_cd_kdtree": 1e3 * float(np.mean([r["t_cd_kd"] for r in rows])),
        }
        report.append(entry)
    cd_note = None
    if args.cd_n:
        rng = RandomSource(args.seed)
        a = rng.gen.random((args.cd_n, 3))
        b = rng.gen.random((args.cd_n, 3))
        t0 = time.perf_counter()
        chamfer_distance(a, b, backend="brute")
        t_brute = time.perf_counter() - t0
        t0 = time.perf_counter()
        chamfer_distance(a, b, backend="kdtree")
        t_kd = time.perf_counter() - t0
        cd_note = {"n": args.cd_n, "ms_brute": 1e3 * t_brute,
                   "ms_kdtree": 1e3 * t_kd, "kdtree_faster": t_kd < t_brute}
    if args.csv is not None:
        fields = list(report[0].keys())
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(report)
    obj = {"command": "bench", "rows": report, "cd_timing": cd_note}

    def cell(v, fmt, width):
        text = "-" if v is None else format(v, fmt)
        return text.rjust(width)

    lines = ["  ".join(h.rjust(w) for h, w in zip(
        ("size", "relerr_mean", "relerr_p95", "eps_p95", "auction_ms",
         "exact_ms", "cd_brute_ms", "cd_kd_ms"),
        (6, 11, 11, 10, 10, 9, 11, 9)))]
    for e in report:
        lines.append("  ".join([
            cell(e["size"], "d", 6),
            cell(e["rel_err_mean"], ".3e", 11),
            cell(e["rel_err_p95"], ".3e", 11),
            cell(e["achieved_eps_p95"], ".3e", 10),
            cell(e["ms_auction"], ".2f", 10),
            cell(e["ms_exact"], ".2f", 9),
            cell(e["ms_cd_brute"], ".2f", 11),
            cell(e["ms_cd_kdtree"], ".2f", 9),
        ]))
    if cd_note is not None:
        lines.append("cd n={}: brute {:.1f} ms, kdtree {:.1f} ms, "
                     "kdtree_faster={}".format(cd_note["n"], cd_note["ms_brute"],
                                               cd_note["ms_kdtree"],
                                               cd_note["kdtree_faster"]))
    _emit(args, obj, lines)
    return 0


def _cmd_selftest(args):
    from .selftest import run_selftest
    failures = run_selftest(json_mode=args.json)
    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="psm",
        description="Point-set metrics: Chamfer and assignment distances, "
                    "sampling, voxel IoU, and mean-shape optimization.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true",
                        help="emit one machine-readable JSON object")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: PSM_THREADS or CPU count)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chamfer", parents=[common],
                       help="Chamfer distance between two .xyz files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--grad", metavar="OUT.xyz",
                   help="write the gradient with respect to A")
    p.add_argument("--backend", choices=["brute", "kdtree"], default="kdtree")
    p.add_argument("--normalize", action="store_true",
                   help="divide each directed sum by its set size (extension)")
    p.add_argument("--grid-unit", metavar="DIMS,CELL",
                   help="divide the value by the grid reporting unit D*h/10")
    p.set_defaults(func=_cmd_chamfer)

    p = sub.add_parser("emd", parents=[common],
                       help="assignment distance between two equal-size .xyz files")
    p.add_argument("a")
    p.add_argument("b")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--exact", action="store_true",
                       help="force the exact solver (s <= 512)")
    group.add_argument("--auction", action="store_true",
                       help="force the approximate auction solver")
    p.add_argument("--eps", type=float, default=0.01,
                   help="auction target relative error (default 0.01)")
    p.add_argument("--budget-ms", type=float, default=1000.0,
                   help="auction time budget per instance (default 1000)")
    p.add_argument("--grad", metavar="OUT.xyz",
                   help="write the gradient with respect to A")
    p.add_argument("--dump-matching", metavar="OUT.txt",
                   help="write `i j cost` per matched pair")
    p.add_argument("--normalize", action="store_true",
                   help="divide the value by the set size (extension)")
    p.add_argument("--grid-unit", metavar="DIMS,CELL",
                   help="divide the value by the grid reporting unit D*h/10")
    p.set_defaults(func=_cmd_emd)

    p = sub.add_parser("fps", parents=[common],
                       help="farthest point subsampling")
    p.add_argument("input")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-index", type=int, default=None,
                   help="pin the first selected point (overrides the seed)")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_fps)

    p = sub.add_parser("voxelize", parents=[common],
                       help="splat a cloud into an occupancy grid file")
    p.add_argument("input")
    p.add_argument("--dims", type=int, default=32)
    p.add_argument("--origin", default="0,0,0")
    p.add_argument("--cell", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=0.25,
                   help="binarization threshold (default 0.25)")
    p.add_argument("--raw", action="store_true",
                   help="write fractional occupancy, skip binarization")
    p.add_argument("--no-clamp", action="store_true",
                   help="error on out-of-grid points instead of clamping")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("iou", parents=[common],
                       help="intersection over union of two binary grid files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=_cmd_iou)

    p = sub.add_parser("mon", parents=[common],
                       help="min-of-N loss over candidate clouds")
    p.add_argument("groundtruth", nargs="?")
    p.add_argument("candidates", nargs="*")
    p.add_argument("--metric", choices=["cd", "emd"], default="cd")
    p.add_argument("--bundle", metavar="MANIFEST.json",
                   help="JSON manifest with groundtruth/candidates/metric")
    p.set_defaults(func=_cmd_mon)

    p = sub.add_parser("meanshape", parents=[common],
                       help="SGD mean shape of a shape distribution")
    p.add_argument("--spec", required=True, metavar="SPEC.json")
    p.add_argument("--metric", choices=["cd", "emd"], default="cd")
    p.add_argument("--steps", type=int, default=SgdConfig.steps)
    p.add_argument("--batch", type=int, default=SgdConfig.batch)
    p.add_argument("--lr", type=float, default=SgdConfig.lr0)
    p.add_argument("--t-half", type=float, default=SgdConfig.t_half)
    p.add_argument("--m", type=int, default=None,
                   help="free points (default: spec n_points)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", metavar="X.xyz")
    p.add_argument("--plot", metavar="X.svg")
    p.add_argument("--trace", metavar="TRACE.csv")
    p.set_defaults(func=_cmd_meanshape)

    p = sub.add_parser("bench", parents=[common],
                       help="accuracy/speed benchmark of the solvers")
    p.add_argument("--sizes", default="64,128,256")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget-ms", type=float, default=1000.0)
    p.add_argument("--cd-n", type=int, default=4096,
                   help="extra Chamfer timing size (0 disables)")
    p.add_argument("--csv", metavar="OUT.csv")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("selftest", parents=[common],
                       help="run the built-in invariant suite")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
