"""Command line interface: ``dbini {synth,integrate,bench,mesh,metrics}``.

Exit codes: 0 on success, 1 on runtime failure, 2 on bad usage. Every
subcommand that writes a directory also writes ``run.json`` with the argv,
the resolved parameters and SHA-256 hashes of its inputs; ``dbini --replay
DIR/run.json [--out NEWDIR]`` runs it again.
"""

from __future__ import annotations

import argparse
import contextlib
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .assembly import PAPER_HYPERPARAMETERS, Hyperparameters
from .errors import DbiniError, GaugeDeficient, SceneOutOfBounds
from .estimator import shift_to_prior
from .field import GridShape, build_domain, rasterize
from .meshing import depth_to_mesh, max_gradient, stacked_metrics, zipper
from .solver import Anchor, bini_optimize, dbini_optimize
from .synth import (
    DEFAULT_SUITE, KINDS, PRIOR_KINDS, SceneSpec, generate, oracle_bound, read_scene,
    step_sharpness, write_scene,
)

logger = logging.getLogger("dbini")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
RUN_FORMAT_VERSION = 1


class UsageError(Exception):
    """Bad flags or inputs the user has to fix; maps to exit code 2."""


def fmt_num(x):
    """Short, exact-enough rendering: 1e-4, 1e-6, 2, 0.5, 150."""
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e6:
        return str(int(x))
    if abs(x) < 1e-3 or abs(x) >= 1e6:
        mant, exp = f"{x:.12e}".split("e")
        mant = mant.rstrip("0").rstrip(".")
        return f"{mant}e{int(exp)}"
    return f"{x:.12g}"


def fmt_hyper(h: Hyperparameters):
    return " ".join(f"{k}={fmt_num(v)}" for k, v in asdict(h).items())


# --- argument parsing -------------------------------------------------------------

HYPER_FLAGS = {
    "lambda_d": "--lambda-d", "lambda_s": "--lambda-s", "k": "--k",
    "max_outer_iters": "--max-iters",
}


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(choices):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad:
            raise argparse.ArgumentTypeError(
                f"unknown value(s) {', '.join(bad)}; choose from {', '.join(choices)}")
        return items
    return parse


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _param(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"value of {key} must be a number or JSON list")
    return key, tuple(parsed) if isinstance(parsed, list) else parsed


def _add_hyper_flags(p):
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--preset", choices=["paper"],
                   help="lambda_d=1e-4 lambda_s=1e-6 k=2 with 150 outer iterations")
    g.add_argument("--lambda-d", type=float, help="depth prior weight (default 1e-4)")
    g.add_argument("--lambda-s", type=float, help="silhouette weight (default 1e-6)")
    g.add_argument("--k", type=_positive(float), help="bilateral stiffness (default 2)")
    g.add_argument("--max-iters", type=_positive(int), help="outer iteration cap (default 150)")
    g.add_argument("--tol", type=_positive(float), default=1e-6,
                   help="relative energy change that stops the outer loop")
    g.add_argument("--cg-tol", type=_positive(float), default=1e-9)
    g.add_argument("--cg-max-iters", type=_positive(int), default=5000)


def _add_scene_flags(p, single):
    if single:
        p.add_argument("--shape", choices=KINDS, required=True)
    p.add_argument("--res", type=_positive(int), default=128, help="grid width and height")
    p.add_argument("--width", type=_positive(int), help="overrides --res")
    p.add_argument("--height", type=_positive(int), help="overrides --res")
    p.add_argument("--pitch", type=_positive(float), default=1.0,
                   help="scene units per pixel")
    p.add_argument("--noise", type=float, help="normal noise stddev in degrees")
    p.add_argument("--prior-delta", type=float,
                   help="offset of the eroded_offset prior (scene units)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dbini", description="Joint front/back bilateral normal integration.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate an analytic scene directory")
    _add_scene_flags(p, single=True)
    p.add_argument("--radius", type=_positive(float),
                   help="radius parameter for kinds that have one")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="override a geometric parameter (repeatable)")
    p.add_argument("--prior", choices=PRIOR_KINDS, default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="scene directory (default: <shape>_<W>x<H>)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("integrate", parents=[common], help="integrate the normal maps of a scene directory")
    p.add_argument("scene", type=Path)
    p.add_argument("--method", choices=["dbini", "bini"], default="dbini")
    _add_hyper_flags(p)
    p.add_argument("--anchor", help="bini gauge: 'mean', 'prior' or 'U,V[,DEPTH]'")
    p.add_argument("--pitch", type=_positive(float), help="override the scene pitch")
    p.add_argument("--obj", action="store_true", help="also write OBJ meshes")
    p.add_argument("--out", type=Path, help="output directory (default: SCENE/<method>)")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("bench", parents=[common], help="run methods over a suite of synthetic scenes")
    p.add_argument("--shapes", type=_names(KINDS), default=list(DEFAULT_SUITE),
                   help="comma-separated scene kinds (default: the six-scene suite)")
    p.add_argument("--methods", type=_names(("bini", "dbini")), default=["bini", "dbini"])
    _add_scene_flags(p, single=False)
    p.add_argument("--prior", choices=PRIOR_KINDS, default="eroded_offset")
    p.add_argument("--seeds", type=_ints, default=[0])
    p.add_argument("--preset", choices=["paper"])
    p.add_argument("--lambda-d", type=_floats, help="sweep values, comma-separated")
    p.add_argument("--lambda-s", type=_floats, help="sweep values, comma-separated")
    p.add_argument("--k", type=_floats, help="sweep values, comma-separated")
    p.add_argument("--max-iters", type=_positive(int))
    p.add_argument("--anchor", choices=["prior", "mean"], default="prior",
                   help="gauge for the bini baseline (default: match the prior mean)")
    p.add_argument("--jobs", type=_positive(int), default=1)
    p.add_argument("--no-meshes", action="store_true")
    p.add_argument("--out", type=Path, default=Path("bench"))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("mesh", parents=[common], help="convert depth maps to a triangle mesh")
    p.add_argument("depth", type=Path, help="front (or single) depth PFM")
    p.add_argument("--back", type=Path, help="back depth PFM; zippers both sheets")
    p.add_argument("--mask", type=Path, help="domain mask PNG (default: finite depth)")
    p.add_argument("--orientation", choices=["front", "back"], default="front")
    p.add_argument("--pitch", type=_positive(float), default=1.0)
    p.add_argument("--out", type=Path, required=True, help="output .ply or .obj")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("metrics", parents=[common], help="compare an estimated depth map with ground truth")
    p.add_argument("estimate", type=Path)
    p.add_argument("truth", type=Path)
    p.add_argument("--mask", type=Path, help="domain mask PNG (default: both finite)")
    p.add_argument("--align", action="store_true", help="remove the mean offset first")
    p.add_argument("--out", type=Path, help="append a CSV row here instead of printing")
    p.set_defaults(func=cmd_metrics)
    return parser


def resolve_hyper(args):
    given = {name: getattr(args, name if name != "max_outer_iters" else "max_iters")
             for name in HYPER_FLAGS}
    if args.preset == "paper":
        clash = [HYPER_FLAGS[n] for n, v in given.items() if v is not None]
        if clash:
            raise UsageError(f"argument {clash[0]}: not allowed with argument --preset paper")
        base = PAPER_HYPERPARAMETERS
    else:
        base = Hyperparameters()
    changes = {n: v for n, v in given.items() if v is not None}
    try:
        return Hyperparameters(**{**asdict(base), **changes, "energy_rel_tol": args.tol,
                                  "cg_tol": args.cg_tol, "cg_max_iters": args.cg_max_iters})
    except ValueError as exc:
        raise UsageError(str(exc))


# --- run records --------------------------------------------------------------------


@contextlib.contextmanager
def run_log(out_dir):
    """Copy log records of this run into ``out_dir/run.log``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logger.addHandler(handler)
    try:
        yield
    finally:
        logger.removeHandler(handler)
        handler.close()


def write_run_json(out_dir, argv, command, resolved, inputs):
    record = {
        "version": RUN_FORMAT_VERSION,
        "command": command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "resolved": resolved,
        "inputs": {str(p): io.sha256_file(p) for p in sorted(inputs, key=str)},
    }
    (out_dir / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _strip_out(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        elif not a.startswith("--out="):
            out.append(a)
    return out


def replay(run_json, out=None):
    """Re-run the command recorded in ``run_json`` after checking its inputs are unchanged."""
    record = json.loads(Path(run_json).read_text())
    argv = list(record["argv"])
    if out is not None:
        argv = _strip_out(argv) + ["--out", str(Path(out).resolve())]
    prev = os.getcwd()
    os.chdir(record["cwd"])
    try:
        for path, digest in record["inputs"].items():
            if not Path(path).is_file():
                raise FileNotFoundError(f"replay input missing: {path}")
            if io.sha256_file(path) != digest:
                raise DbiniError(f"replay input changed since the recorded run: {path}")
        return _run(argv)
    finally:
        os.chdir(prev)


# --- synth --------------------------------------------------------------------------


def _scene_spec(args, kind, prior, seed, params=None):
    width = args.width or args.res
    height = args.height or args.res
    try:
        return SceneSpec(
            kind, width, height, pitch=args.pitch, params=params or {}, prior=prior,
            prior_delta=0.0 if args.prior_delta is None else args.prior_delta,
            noise_deg=0.0 if args.noise is None else args.noise, seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_synth(args, argv):
    params = dict(args.param)
    if args.radius is not None:
        params["radius"] = args.radius
    spec = _scene_spec(args, args.shape, args.prior, args.seed, params)
    try:
        bundle = generate(spec)
    except SceneOutOfBounds as exc:
        raise UsageError(f"SceneOutOfBounds: {exc}")
    out = args.out or Path(f"{args.shape}_{spec.width}x{spec.height}")
    write_scene(bundle, out)
    write_run_json(out, argv, "synth", spec.to_json(), [])
    logger.info("wrote %s: %d domain pixels, %d prior pixels", out, bundle.domain.size,
                int(bundle.domain.omega_z.sum()))
    return EXIT_OK


# --- integrate ----------------------------------------------------------------------


def _parse_anchor(text):
    if text in ("mean", "prior"):
        return text
    try:
        parts = [float(t) for t in text.split(",")]
    except ValueError:
        parts = []
    if len(parts) not in (2, 3) or not all(p.is_integer() for p in parts[:2]):
        raise UsageError(f"argument --anchor: expected 'mean', 'prior' or 'U,V[,DEPTH]', got {text!r}")
    return Anchor(int(parts[0]), int(parts[1]), parts[2] if len(parts) == 3 else 0.0)


def integrate_bini(bundle, k, hyper, anchor):
    """Integrate both sheets separately; returns rasters and per-sheet details."""
    domain = bundle.domain
    out = []
    for normals, prior in ((bundle.normals_front, bundle.prior_front),
                           (bundle.normals_back, bundle.prior_back)):
        gauge = "mean" if anchor == "prior" else anchor
        sol = bini_optimize(normals, domain, k=k, tol=hyper.energy_rel_tol,
                            iters=hyper.max_outer_iters, gauge=gauge, cg_tol=hyper.cg_tol,
                            cg_max_iters=hyper.cg_max_iters, return_details=True)
        z = rasterize(sol.z, domain)
        if anchor == "prior":
            z = shift_to_prior(z, prior, domain)
        out.append((z, sol))
    return out


def _trace_rows(sheet, sol):
    return [(sheet, t + 1, e, rep.iterations, rep.final_residual_norm)
            for t, (e, rep) in enumerate(zip(sol.energy_trace, sol.per_iteration_cg))]


def _write_mesh(path, mesh, obj):
    io.write_ply(path, mesh.vertices, mesh.faces)
    if obj:
        io.write_obj(path.with_suffix(".obj"), mesh.vertices, mesh.faces)


def cmd_integrate(args, argv):
    hyper = resolve_hyper(args)
    if args.method == "bini":
        if args.anchor is None:
            raise UsageError(
                "bini leaves the depth offset undetermined; pass --anchor mean, prior or U,V[,DEPTH]")
        anchor = _parse_anchor(args.anchor)
    elif args.anchor is not None:
        raise UsageError("argument --anchor: only used with --method bini")

    bundle = read_scene(args.scene, pitch=args.pitch)
    domain = bundle.domain
    out = args.out or (args.scene / args.method)
    inputs = [p for p in sorted(args.scene.iterdir()) if p.is_file()]
    with run_log(out):
        logger.info("%s on %s (%d pixels): %s", args.method, args.scene, domain.size,
                    fmt_hyper(hyper))
        t0 = time.monotonic()
        if args.method == "dbini":
            sol = dbini_optimize(bundle.problem(), hyper)
            zf, zb = sol.front_raster(domain), sol.back_raster(domain)
            rows = _trace_rows("joint", sol)
            iters, converged = sol.outer_iterations, sol.converged
        else:
            if anchor == "prior" and (bundle.prior_front is None or bundle.prior_back is None):
                raise UsageError("--anchor prior needs prior_f.pfm and prior_b.pfm in the scene")
            (zf, sf), (zb, sb) = integrate_bini(bundle, hyper.k, hyper, anchor)
            rows = _trace_rows("front", sf) + _trace_rows("back", sb)
            iters = max(sf.outer_iterations, sb.outer_iterations)
            converged = sf.converged and sb.converged
        logger.info("outer iterations %d, converged %s, %.2fs", iters, converged,
                    time.monotonic() - t0)

        io.write_pfm(out / "depth_f_est.pfm", zf)
        io.write_pfm(out / "depth_b_est.pfm", zb)
        io.write_csv(out / "trace.csv",
                     ["sheet", "outer_iter", "energy", "cg_iters", "cg_residual"], rows)
        front = depth_to_mesh(zf, domain, orientation="front")
        back = depth_to_mesh(zb, domain, orientation="back")
        fused = zipper(front, back, domain)
        _write_mesh(out / "mesh_f.ply", front, args.obj)
        _write_mesh(out / "mesh_b.ply", back, args.obj)
        if args.method == "dbini":
            _write_mesh(out / "fused.ply", fused, args.obj)
            logger.info("fused mesh: watertight %s, %d boundary loops, %d inversions",
                        fused.watertight, fused.n_loops, fused.inversion_count)

        if bundle.depth_front is not None and bundle.depth_back is not None:
            name = bundle.spec.kind if bundle.spec is not None else args.scene.name
            bound = oracle_bound(bundle.spec) if args.method == "dbini" else None
            lam = (fmt_num(hyper.lambda_d), fmt_num(hyper.lambda_s)) \
                if args.method == "dbini" else ("", "")
            metric_rows = []
            for aligned in (False, True):
                m = stacked_metrics([zf, zb], [bundle.depth_front, bundle.depth_back], domain,
                                    align_offset=aligned)
                metric_rows.append((name, args.method, *lam, fmt_num(hyper.k), int(aligned),
                                    m.rmse, m.mae, fused.inversion_count,
                                    "" if bound is None else bound))
                logger.info("%s rmse %.6g mae %.6g", "aligned" if aligned else "unaligned",
                            m.rmse, m.mae)
            io.write_csv(out / "metrics.csv", METRIC_HEADER, metric_rows)
        resolved = {"method": args.method, "hyperparameters": asdict(hyper),
                    "anchor": None if args.method == "dbini" else str(args.anchor),
                    "pitch": domain.shape.pitch}
        write_run_json(out, argv, "integrate", resolved, inputs)
    return EXIT_OK


METRIC_HEADER = ["scene", "method", "lambda_d", "lambda_s", "k", "aligned", "rmse", "mae",
                 "inversion_count", "oracle_bound"]


# --- bench --------------------------------------------------------------------------

BENCH_HEADER = [
    "scene", "seed", "method", "lambda_d", "lambda_s", "k", "status", "rmse", "mae",
    "rmse_aligned", "mae_aligned", "outer_iterations", "converged", "inversion_count",
    "max_gradient", "step_sharpness", "error",
]


def _bench_task(task):
    spec, method, hyper, anchor, mesh_path = task
    row = {"scene": spec.kind, "seed": spec.seed, "method": method,
           "lambda_d": fmt_num(hyper.lambda_d) if method == "dbini" else "",
           "lambda_s": fmt_num(hyper.lambda_s) if method == "dbini" else "",
           "k": fmt_num(hyper.k)}
    t0 = time.monotonic()
    try:
        bundle = generate(spec)
        domain = bundle.domain
        if method == "dbini":
            sol = dbini_optimize(bundle.problem(), hyper)
            zf, zb = sol.front_raster(domain), sol.back_raster(domain)
            iters, converged = sol.outer_iterations, sol.converged
        else:
            (zf, sf), (zb, sb) = integrate_bini(bundle, hyper.k, hyper, anchor)
            iters = max(sf.outer_iterations, sb.outer_iterations)
            converged = sf.converged and sb.converged
        truth = [bundle.depth_front, bundle.depth_back]
        m = stacked_metrics([zf, zb], truth, domain)
        ma = stacked_metrics([zf, zb], truth, domain, align_offset=True)
        fused = zipper(depth_to_mesh(zf, domain, orientation="front"),
                       depth_to_mesh(zb, domain, orientation="back"), domain)
        if mesh_path is not None:
            io.write_ply(mesh_path, fused.vertices, fused.faces)
        row.update(
            status="ok", rmse=m.rmse, mae=m.mae, rmse_aligned=ma.rmse, mae_aligned=ma.mae,
            outer_iterations=iters, converged=int(converged),
            inversion_count=fused.inversion_count, max_gradient=max_gradient(zf, domain),
            step_sharpness=step_sharpness(zf, spec, domain) if spec.kind == "step_relief" else "",
            error="",
        )
    except (DbiniError, ValueError, ArithmeticError) as exc:
        row.update({k: "" for k in BENCH_HEADER if k not in row})
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row, time.monotonic() - t0


def _bench_points(args, method):
    if args.preset == "paper":
        for flag, value in (("--lambda-d", args.lambda_d), ("--lambda-s", args.lambda_s),
                            ("--k", args.k), ("--max-iters", args.max_iters)):
            if value is not None:
                raise UsageError(f"argument {flag}: not allowed with argument --preset paper")
    base = PAPER_HYPERPARAMETERS if args.preset == "paper" else Hyperparameters()
    if args.max_iters is not None:
        base = Hyperparameters(**{**asdict(base), "max_outer_iters": args.max_iters})
    ks = args.k or [base.k]
    if method == "bini":
        grid = [(base.lambda_d, base.lambda_s, k) for k in ks]
    else:
        grid = itertools.product(args.lambda_d or [base.lambda_d],
                                 args.lambda_s or [base.lambda_s], ks)
    try:
        return [Hyperparameters(**{**asdict(base), "lambda_d": ld, "lambda_s": ls, "k": k})
                for ld, ls, k in grid]
    except ValueError as exc:
        raise UsageError(str(exc))


def _sort_key(row):
    return (row["scene"], row["seed"], row["method"], row["lambda_d"], row["lambda_s"],
            float(row["k"]))


def _summary_rows(rows, methods):
    out = []
    for method in methods:
        ok = [r for r in rows if r["method"] == method and r["status"] == "ok"]
        summary = {k: "" for k in BENCH_HEADER}
        summary.update(scene="MEAN", method=method, status=f"{len(ok)} ok")
        for key in ("rmse", "mae", "rmse_aligned", "mae_aligned"):
            summary[key] = float(np.mean([r[key] for r in ok])) if ok else ""
        out.append(summary)
    return out


def cmd_bench(args, argv):
    if not args.shapes:
        raise UsageError("argument --shapes: at least one scene is required")
    if not args.methods:
        raise UsageError("argument --methods: at least one method is required")
    if not args.seeds:
        raise UsageError("argument --seeds: at least one seed is required")
    prior_delta = 2.0 * args.pitch if args.prior_delta is None else args.prior_delta
    noise = 5.0 if args.noise is None else args.noise
    args.prior_delta, args.noise = prior_delta, noise
    points = {m: _bench_points(args, m) for m in args.methods}
    out = args.out
    mesh_dir = out / "meshes"
    tasks = []
    for kind, seed, method in itertools.product(args.shapes, args.seeds, args.methods):
        spec = _scene_spec(args, kind, args.prior, seed)
        for hyper in points[method]:
            mesh_path = None
            if not args.no_meshes:
                tag = f"{kind}_s{seed}_{method}_k{fmt_num(hyper.k)}"
                if method == "dbini":
                    tag += f"_ld{fmt_num(hyper.lambda_d)}_ls{fmt_num(hyper.lambda_s)}"
                mesh_path = mesh_dir / f"{tag}.ply"
            tasks.append((spec, method, hyper, args.anchor, mesh_path))

    with run_log(out):
        if not args.no_meshes:
            mesh_dir.mkdir(parents=True, exist_ok=True)
        logger.info("bench: %d runs over %d scenes, %d job(s)", len(tasks),
                    len(args.shapes) * len(args.seeds), args.jobs)
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_bench_task, tasks))
        else:
            results = [_bench_task(t) for t in tasks]
        rows = sorted((r for r, _ in results), key=_sort_key)
        timings = sorted(((r, t) for r, t in results), key=lambda rt: _sort_key(rt[0]))
        for r in rows:
            if r["status"] == "ok":
                logger.info("%-22s seed %d %-5s k=%s rmse %.4g (aligned %.4g) iters %s",
                            r["scene"], r["seed"], r["method"], r["k"], r["rmse"],
                            r["rmse_aligned"], r["outer_iterations"])
            else:
                logger.warning("%s seed %d %s failed: %s", r["scene"], r["seed"], r["method"],
                               r["error"])
        table = rows + _summary_rows(rows, args.methods)
        io.write_csv(out / "results.csv", BENCH_HEADER,
                     [[r[k] for k in BENCH_HEADER] for r in table])
        # wall time is kept out of results.csv so reruns compare byte for byte
        io.write_csv(out / "timings.csv", ["scene", "seed", "method", "lambda_d", "lambda_s",
                                           "k", "wall_time_s"],
                     [[r[k] for k in ("scene", "seed", "method", "lambda_d", "lambda_s", "k")]
                      + [t] for r, t in timings])
        resolved = {"shapes": args.shapes, "methods": args.methods, "seeds": args.seeds,
                    "prior": args.prior, "prior_delta": prior_delta, "noise_deg": noise,
                    "width": args.width or args.res, "height": args.height or args.res,
                    "pitch": args.pitch, "anchor": args.anchor,
                    "points": {m: [asdict(h) for h in hs] for m, hs in points.items()}}
        write_run_json(out, argv, "bench", resolved, [])
        for s in _summary_rows(rows, args.methods):
            logger.info("mean %-5s rmse %s (aligned %s), %s", s["method"], s["rmse"],
                        s["rmse_aligned"], s["status"])
    n_ok = sum(r["status"] == "ok" for r in rows)
    return EXIT_OK if n_ok else EXIT_RUNTIME


# --- mesh / metrics ---------------------------------------------------------------


def _domain_for(paths_depth, mask_path, pitch=1.0):
    depths = [io.read_pfm(p) for p in paths_depth]
    shapes = {d.shape for d in depths}
    if len(shapes) != 1 or depths[0].ndim != 2:
        raise UsageError("depth maps must be single-channel and share one size")
    if mask_path is not None:
        mask = io.read_mask_png(mask_path)
        if mask.shape != depths[0].shape:
            raise UsageError(f"mask {mask_path} does not match the depth map size")
    else:
        mask = np.logical_and.reduce([np.isfinite(d) for d in depths])
    for p, d in zip(paths_depth, depths):
        if not np.isfinite(d[mask]).all():
            raise DbiniError(f"{p} is not finite on the whole domain")
    h, w = mask.shape
    return depths, build_domain(mask, mask, GridShape(w, h, pitch))


def _check_inputs(*paths):
    missing = [str(p) for p in paths if p is not None and not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"missing input file(s): {', '.join(missing)}")


def cmd_mesh(args, argv):
    _check_inputs(args.depth, args.back, args.mask)
    if args.out.suffix.lower() not in (".ply", ".obj"):
        raise UsageError("argument --out: must end in .ply or .obj")
    paths = [args.depth] + ([args.back] if args.back else [])
    depths, domain = _domain_for(paths, args.mask, args.pitch)
    if args.back:
        mesh = zipper(depth_to_mesh(depths[0], domain, orientation="front"),
                      depth_to_mesh(depths[1], domain, orientation="back"), domain)
        logger.info("zippered mesh: watertight %s, %d inversions", mesh.watertight,
                    mesh.inversion_count)
    else:
        mesh = depth_to_mesh(depths[0], domain, orientation=args.orientation)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    writer = io.write_ply if args.out.suffix.lower() == ".ply" else io.write_obj
    writer(args.out, mesh.vertices, mesh.faces)
    logger.info("wrote %s: %d vertices, %d faces", args.out, len(mesh.vertices), len(mesh.faces))
    return EXIT_OK


def cmd_metrics(args, argv):
    _check_inputs(args.estimate, args.truth, args.mask)
    (est, gt), domain = _domain_for([args.estimate, args.truth], args.mask)
    m = stacked_metrics([est], [gt], domain, align_offset=args.align)
    row = [str(args.estimate), str(args.truth), int(m.aligned), m.rmse, m.mae]
    if args.out is None:
        print(f"rmse={m.rmse:.9g} mae={m.mae:.9g} aligned={m.aligned}")
    else:
        header = ["estimate", "truth", "aligned", "rmse", "mae"]
        if args.out.is_file():
            rows = [list(r.values()) for r in io.read_csv(args.out)] + [row]
        else:
            rows = [row]
        io.write_csv(args.out, header, rows)
    return EXIT_OK


# --- entry point --------------------------------------------------------------------


def _setup_logging(verbose, quiet):
    # run.log always gets INFO; -q/-v only change what reaches the console
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    logger.setLevel(min(level, logging.INFO))
    console = [h for h in logger.handlers if getattr(h, "_dbini_console", False)]
    if not console:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        handler._dbini_console = True
        logger.addHandler(handler)
        console = [handler]
    console[0].setLevel(level)
    logger.propagate = False


def _run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.verbose, args.quiet)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"dbini {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GaugeDeficient as exc:
        print(f"dbini {args.command}: error: GaugeDeficient: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DbiniError, OSError, ValueError, ArithmeticError) as exc:
        print(f"dbini {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["--replay"]:
        if len(argv) not in (2, 4) or (len(argv) == 4 and argv[2] != "--out"):
            print("usage: dbini --replay RUN_JSON [--out DIR]", file=sys.stderr)
            return EXIT_USAGE
        try:
            return replay(argv[1], argv[3] if len(argv) == 4 else None)
        except (DbiniError, OSError, ValueError, KeyError) as exc:
            print(f"dbini --replay: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    return _run(argv)


if __name__ == "__main__":
    sys.exit(main())
