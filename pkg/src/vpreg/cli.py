"""Command-line front end.

Subcommands: register, invert, gridgen, metrics, cohort, demo-consistency.
Machine-readable output goes to files; progress lines go to standard
error. Exit codes: 0 success, 2 input/validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as vio
from . import metrics as vmetrics
from . import register as vreg
from . import synth, vpgrid
from .diffops import BcMode, compose, jacobian_determinant
from .errors import NumericalError, ValidationError
from .field import ScalarField, Transform, interior_slices, make_identity
from .metrics import MetricRecord

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

CONSISTENCY_KEYS = (
    "inv_maxdet",
    "inv_sumdet",
    "inv_sumdet_per_voxel",
    "inv_maxnorm",
    "inv_sumnorm",
    "inv_sumnorm_per_voxel",
    "rev_maxdet",
    "rev_sumdet",
    "rev_sumdet_per_voxel",
    "rev_maxnorm",
    "rev_sumnorm",
    "rev_sumnorm_per_voxel",
)


def _progress(msg: str, quiet: bool = False) -> None:
    if not quiet:
        print(msg, file=sys.stderr)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _pick(flag, config: dict, key: str, default):
    """Precedence: command-line flag > config file entry > default."""
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _stage1_options(config: dict, args) -> vreg.Stage1Options:
    sub = config.get("stage1", {})
    return vreg.Stage1Options(
        tau0=float(sub.get("tau0", 0.2)),
        growth=float(sub.get("growth", 1.1)),
        cap=float(sub.get("cap", 1.0)),
        max_iters=int(_pick(args.stage1_iters, sub, "max_iters", 300)),
    )


def _stage2_options(config: dict, args, key: str = "stage2") -> vreg.Stage2Options:
    sub = config.get(key, {})
    return vreg.Stage2Options(
        step0=float(sub.get("step0", 1.0)),
        growth=float(sub.get("growth", 1.2)),
        shrink=float(sub.get("shrink", 0.5)),
        min_step=float(sub.get("min_step", 1e-8)),
        max_iters=int(_pick(args.stage2_iters, sub, "max_iters", 2000)),
        patience=int(sub.get("patience", 40)),
    )


def _reg_options(config: dict, args) -> vreg.RegOptions:
    engine = _pick(args.engine, config, "engine", "penalty")
    bc = _pick(None, config, "bc", "dirichlet-zero")
    return vreg.RegOptions(
        stage1=_stage1_options(config, args),
        stage2=_stage2_options(config, args, "stage2"),
        control_stage1=_stage2_options(config, args, "control_stage1"),
        engine=vreg.Engine(engine),
        bc=BcMode(bc),
    )


def _invert_options(config: dict, args) -> vpgrid.GridGenOptions:
    sub = config.get("invert", {})
    return vpgrid.GridGenOptions(
        max_iters=int(_pick(getattr(args, "invert_iters", None), sub, "max_iters", 2000)),
        target=float(_pick(getattr(args, "invert_target", None), sub, "target", 1e-2)),
        reg_weight=float(sub.get("reg_weight", 1.0)),
    )


def _read_scalar(path) -> ScalarField:
    value = vio.read_volume(path)
    if not isinstance(value, ScalarField):
        raise ValidationError(f"{path} is not a scalar volume")
    return value


def _read_transform(path) -> Transform:
    value = vio.read_volume(path)
    if not isinstance(value, Transform):
        raise ValidationError(f"{path} is not a transform volume")
    return value


def _read_labels(path):
    value = vio.read_volume(path)
    from .field import LabelVolume

    if not isinstance(value, LabelVolume):
        raise ValidationError(f"{path} is not a label volume")
    return value


def _write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stage", "iteration", "mse", "accepted", "step", "min_jd", "solves"])
        for e in trace:
            writer.writerow(
                [
                    e.stage,
                    e.iteration,
                    repr(e.mse),
                    int(e.accepted),
                    repr(e.step),
                    "" if e.min_jd is None else repr(e.min_jd),
                    e.solves,
                ]
            )


def _write_consistency(report: dict, outdir: Path, stem: str = "consistency") -> None:
    keys = [k for k in CONSISTENCY_KEYS if k in report] or sorted(report)
    with open(outdir / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        writer.writerow([repr(float(report[k])) for k in keys])
    (outdir / f"{stem}.json").write_text(
        json.dumps({k: report[k] for k in keys}, sort_keys=True, indent=2) + "\n"
    )


def cmd_register(args) -> int:
    config = _load_config(args.config)
    moving = _read_scalar(args.moving)
    fixed = _read_scalar(args.fixed)
    opts = _reg_options(config, args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _progress(f"registering {args.moving} -> {args.fixed} [{opts.engine.value}]", args.quiet)
    result = vreg.vpreg_pipeline(
        moving, fixed, opts, invert_opts=_invert_options(config, args)
    )
    vio.write_volume(result.phi, outdir / "phi")
    vio.write_volume(result.phi_inv, outdir / "phi_inv")
    vio.write_volume(result.warped_moving, outdir / "warped_moving")
    vio.write_volume(result.warped_fixed, outdir / "warped_fixed")
    vio.write_report(result.metrics, outdir / "metrics.csv", "csv")
    vio.write_report(result.metrics, outdir / "metrics.json", "json")
    _write_trace(result.trace, outdir / "trace.csv")
    _progress(f"wrote results to {outdir}", args.quiet)
    return EXIT_OK


def cmd_invert(args) -> int:
    config = _load_config(args.config)
    phi = _read_transform(args.map)
    det = phi.jacobian_determinant_values()[interior_slices(phi.domain)]
    if det.min() <= 0.0:
        raise ValidationError(
            f"input map is not diffeomorphic (min JD = {det.min():.6g})"
        )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _progress(f"inverting {args.map}", args.quiet)
    phi_inv = vpgrid.invert(phi, _invert_options(config, args))
    vio.write_volume(phi_inv, outdir / "phi_inv")
    _write_consistency(vmetrics.inverse_consistency(phi, phi_inv), outdir)
    _progress(f"wrote inverse to {outdir}", args.quiet)
    return EXIT_OK


def cmd_gridgen(args) -> int:
    config = _load_config(args.config)
    sub = config.get("gridgen", {})
    if args.preset:
        size = int(_pick(args.size, sub, "size", 64))
        d = int(_pick(args.dim, sub, "dim", 2))
        targets = synth.TARGET_PRESETS[args.preset](size, d=d)
    else:
        if not (args.ft and args.gt):
            raise ValidationError("provide --preset or both --ft and --gt")
        f_t = _read_scalar(args.ft)
        g_t = vio.read_volume(args.gt)
        targets = vpgrid.GridTargets(f_t, g_t)
    targets = vpgrid.validate_targets(targets, renormalize=args.renormalize)
    opts = vpgrid.GridGenOptions(max_iters=int(_pick(args.max_iters, sub, "max_iters", 500)))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _progress("generating grid", args.quiet)
    phi = vpgrid.vp_generate(make_identity(targets.f_t.domain), targets, opts)
    vio.write_volume(phi, outdir / "phi")
    det = jacobian_determinant(phi).values
    ft = targets.f_t.values
    from .diffops import curl_values

    curv = curl_values(phi.domain, phi.coords)
    gt = targets.g_t.values if isinstance(targets.g_t, ScalarField) else targets.g_t.components
    report = {
        "jd_residual_rel": float(np.linalg.norm(det - ft) / np.linalg.norm(ft)),
        "curl_residual_l2": float(np.sqrt(((curv - gt) ** 2).sum())),
        "min_jd": float(det[interior_slices(phi.domain)].min()),
        "max_jd": float(det[interior_slices(phi.domain)].max()),
    }
    (outdir / "gridgen.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    with open(outdir / "gridgen.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(report))
        writer.writerow([repr(v) for v in report.values()])
    _progress(f"wrote grid to {outdir}", args.quiet)
    return EXIT_OK


def cmd_metrics(args) -> int:
    moving = _read_scalar(args.moving)
    fixed = _read_scalar(args.fixed)
    phi = _read_transform(args.map) if args.map else make_identity(moving.domain)
    record = MetricRecord()
    record.mse_ratio = vmetrics.mse_ratio(moving, fixed, phi)
    try:
        record.mi_incr = vmetrics.mi_increment(moving, fixed, phi, bins=args.bins)
    except ValidationError:
        record.mi_incr = None
    jd = vmetrics.jd_stats(phi)
    record.jd_min, record.jd_max, record.jd_neg_fraction = jd["min"], jd["max"], jd["neg_fraction"]
    if args.inverse_map:
        phi_inv = _read_transform(args.inverse_map)
        for key, value in vmetrics.inverse_consistency(phi, phi_inv).items():
            setattr(record, key, value)
    else:
        _progress("warning: no inverse map; inverse-consistency cells left empty", args.quiet)
    if args.labels_moving and args.labels_fixed:
        lab_m = _read_labels(args.labels_moving)
        lab_f = _read_labels(args.labels_fixed)
        record.dice = vmetrics.dice_scores(vmetrics.warp_labels(lab_m, phi), lab_f)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    vio.write_report(record, outdir / "metrics.csv", "csv")
    vio.write_report(record, outdir / "metrics.json", "json")
    _progress(f"wrote metrics to {outdir}", args.quiet)
    return EXIT_OK


def _run_pair(task) -> tuple[int, str, str]:
    index, row, outroot, config_path, engine = task
    args = argparse.Namespace(
        config=config_path,
        engine=engine,
        stage1_iters=None,
        stage2_iters=None,
        invert_iters=None,
        invert_target=None,
        quiet=True,
        moving=row["moving"],
        fixed=row["fixed"],
        out=str(Path(outroot) / f"pair_{index:04d}"),
    )
    try:
        cmd_register(args)
        if row.get("labels_moving") and row.get("labels_fixed"):
            lab_m = _read_labels(row["labels_moving"])
            lab_f = _read_labels(row["labels_fixed"])
            outdir = Path(args.out)
            phi = _read_transform(outdir / "phi")
            record = vio.read_metric_record(outdir / "metrics.json")
            record.dice = vmetrics.dice_scores(vmetrics.warp_labels(lab_m, phi), lab_f)
            vio.write_report(record, outdir / "metrics.csv", "csv")
            vio.write_report(record, outdir / "metrics.json", "json")
        return index, "ok", ""
    except Exception as exc:  # per-pair isolation: record, do not abort the cohort
        return index, "failed", f"{type(exc).__name__}: {exc}"


def cmd_cohort(args) -> int:
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise ValidationError(f"manifest {manifest} does not exist")
    rows: list[dict] = []
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        for raw in reader:
            if not raw or not raw[0].strip():
                continue
            if raw[0].strip() == "moving":
                continue
            row = {"moving": raw[0].strip(), "fixed": raw[1].strip()}
            if len(raw) > 2 and raw[2].strip():
                row["labels_moving"] = raw[2].strip()
            if len(raw) > 3 and raw[3].strip():
                row["labels_fixed"] = raw[3].strip()
            rows.append(row)
    if not rows:
        raise ValidationError("manifest lists no registration pairs")
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("VPREG_THREADS", "1"))
    if threads < 1:
        raise ValidationError("--threads must be >= 1")
    outroot = Path(args.out)
    outroot.mkdir(parents=True, exist_ok=True)
    tasks = [(i, row, str(outroot), args.config, args.engine) for i, row in enumerate(rows)]
    _progress(f"running {len(rows)} registrations on {threads} workers", args.quiet)
    if threads == 1:
        results = [_run_pair(t) for t in tasks]
    else:
        # spawned workers: the numba/OpenMP runtime is not fork-safe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            results = list(pool.map(_run_pair, tasks))
    results.sort()
    with open(outroot / "pairs.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pair", "moving", "fixed", "status", "message"])
        for (i, status, msg), row in zip(results, rows):
            writer.writerow([f"pair_{i:04d}", row["moving"], row["fixed"], status, msg])
    records = []
    for (i, status, _), _row in zip(results, rows):
        if status == "ok":
            records.append(vio.read_metric_record(outroot / f"pair_{i:04d}" / "metrics.json"))
    if records:
        vio.write_report(records, outroot / "records.csv", "csv")
        summary = vmetrics.cohort_summary(records)
        vio.write_report(summary, outroot / "summary.csv", "csv")
        vio.write_report(summary, outroot / "summary.json", "json")
    failures = [r for r in results if r[1] != "ok"]
    if failures:
        _progress(f"{len(failures)} pair(s) failed", args.quiet)
        return EXIT_NUMERICAL
    _progress(f"cohort complete: {outroot}", args.quiet)
    return EXIT_OK


def cmd_demo_consistency(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    n = args.size
    _progress(f"building demo grids (seed {args.seed}, {n}x{n})", args.quiet)
    grid_a, grid_b, grid_c = synth.demo_grids(args.seed, n)
    gopt = vpgrid.GridGenOptions(max_iters=2000)
    phi_ab, _ = vpgrid.lm_target_grid(grid_a, grid_b, gopt)
    phi_ba, _ = vpgrid.lm_target_grid(grid_b, grid_a, gopt)
    phi_ac, _ = vpgrid.lm_target_grid(grid_a, grid_c, gopt)
    phi_cb, _ = vpgrid.lm_target_grid(grid_c, grid_b, gopt)
    report = vpgrid.consistency_report(phi_ab, phi_ba, phi_ac, phi_cb)
    _write_consistency(report, outdir, stem="report")
    for name, grid in (("grid_a", grid_a), ("grid_b", grid_b), ("grid_c", grid_c)):
        vpgrid.write_grid_svg(outdir / f"{name}.svg", grid)
    vpgrid.write_grid_svg(outdir / "inverse_ba_ab.svg", compose(phi_ba, phi_ab))
    vpgrid.write_grid_svg(outdir / "inverse_ab_ba.svg", compose(phi_ab, phi_ba))
    vpgrid.write_grid_svg(outdir / "transitivity.svg", compose(phi_cb, phi_ac), reference=phi_ab)
    for name, phi in (("map_ab", phi_ab), ("map_ba", phi_ba), ("map_ac", phi_ac), ("map_cb", phi_cb)):
        vio.write_volume(phi, outdir / name)
    _progress(f"wrote demo to {outdir}", args.quiet)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpreg",
        description="Diffeomorphic registration and variational grid generation",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    # accept --quiet after the subcommand too; SUPPRESS keeps a top-level
    # --quiet from being clobbered by the subparser default
    quiet_flag = dict(action="store_true", default=argparse.SUPPRESS, help="suppress progress output")

    p = sub.add_parser("register", help="register a moving image onto a fixed image")
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--engine", choices=["penalty", "control"])
    p.add_argument("--config")
    p.add_argument("--stage1-iters", type=int, dest="stage1_iters")
    p.add_argument("--stage2-iters", type=int, dest="stage2_iters")
    p.add_argument("--invert-iters", type=int, dest="invert_iters")
    p.add_argument("--invert-target", type=float, dest="invert_target")
    p.add_argument("--quiet", **quiet_flag)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("invert", help="invert a transform")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--invert-iters", type=int, dest="invert_iters")
    p.add_argument("--invert-target", type=float, dest="invert_target")
    p.add_argument("--quiet", **quiet_flag)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("gridgen", help="generate a grid with prescribed JD/curl")
    p.add_argument("--ft")
    p.add_argument("--gt")
    p.add_argument("--preset", choices=sorted(synth.TARGET_PRESETS))
    p.add_argument("--size", type=int)
    p.add_argument("--dim", type=int, choices=[2, 3])
    p.add_argument("--out", required=True)
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--config")
    p.add_argument("--quiet", **quiet_flag)
    p.set_defaults(func=cmd_gridgen)

    p = sub.add_parser("metrics", help="evaluate registration metrics")
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--map")
    p.add_argument("--inverse-map", dest="inverse_map")
    p.add_argument("--labels-moving", dest="labels_moving")
    p.add_argument("--labels-fixed", dest="labels_fixed")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", **quiet_flag)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("cohort", help="run a manifest of registrations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--engine", choices=["penalty", "control"])
    p.add_argument("--config")
    p.add_argument("--quiet", **quiet_flag)
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("demo-consistency", help="inverse-consistency and transitivity demo")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--quiet", **quiet_flag)
    p.set_defaults(func=cmd_demo_consistency)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
