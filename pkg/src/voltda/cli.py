"""Command-line entry point: ``voltda {synth,convert,persist,image,pipeline,eval}``.

Settings come from a JSON config (``--config`` or ``$VOLTDA_CONFIG``);
flags given on the command line win. Exit codes: 0 success, 1 partial
batch failure, 2 config error, 3 simplex-budget error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, ResourceError, SpecError, VoltdaError
from .evaluation import evaluate_dir
from .pipeline import (
    PipelineConfig,
    convert_file,
    discover_volumes,
    image_from_diagram_file,
    load_config,
    persist_cloud,
    run_pipeline,
    synth_batch,
    write_diagram,
)
from .superpixel import read_cloud_csv, write_cloud_csv
from .volume_io import SynthSpec

log = logging.getLogger("voltda")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


def _add_converter_flags(p):
    g = p.add_argument_group("converter")
    g.add_argument("--superpixels", type=int, help="target superpixel count (default 600)")
    g.add_argument("--intensity-weight", type=float, help="scale of the intensity axis (default 1.0)")
    g.add_argument("--prefilter-sigma", type=float, help="explicit Gaussian prefilter sigma (default: step/2)")
    g.add_argument("--sampling", choices=["nearest", "trilinear"])


def _add_filtration_flags(p):
    g = p.add_argument_group("filtration")
    g.add_argument("--rmax", type=float, help="explicit Rips threshold (overrides --quantile)")
    g.add_argument("--quantile", type=float, help="threshold as a pairwise-distance quantile")
    g.add_argument("--max-dim", type=int, help="largest simplex dimension (default 3)")
    g.add_argument("--budget", type=int, help="simplex budget (default 5,000,000)")
    g.add_argument("--keep-zero-bars", action="store_true", default=None)


def _add_image_flags(p):
    g = p.add_argument_group("persistence image")
    g.add_argument("--epsilon", type=float, help="adjacent-pixel ratio in (0, 1) (default 0.95)")
    g.add_argument("--resolution", type=int, help="grid size k (default 50)")
    g.add_argument("--homdim", type=int, action="append", help="homology dimension; repeatable (default 2)")
    g.add_argument("--norm", choices=["max", "sum", "none"])
    g.add_argument("--bounds", choices=["per", "dataset"])
    g.add_argument("--inf-policy", choices=["drop", "cap_at_rmax"])
    g.add_argument("--weight", choices=["gaussian", "linear"])
    g.add_argument("--stack", action="store_true", default=None, help="also write a stacked .npy per volume")


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    cfg = cfg.override(seed=getattr(args, "seed", None), jobs=getattr(args, "jobs", None))
    cfg = cfg.override(
        "converter",
        target_count=getattr(args, "superpixels", None),
        intensity_weight=getattr(args, "intensity_weight", None),
        prefilter_sigma=getattr(args, "prefilter_sigma", None),
        sampling=getattr(args, "sampling", None),
    )
    cfg = cfg.override(
        "filtration",
        r_max=getattr(args, "rmax", None),
        quantile=getattr(args, "quantile", None),
        max_dim=getattr(args, "max_dim", None),
        budget=getattr(args, "budget", None),
        keep_zero_bars=getattr(args, "keep_zero_bars", None),
    )
    homdims = getattr(args, "homdim", None)
    cfg = cfg.override(
        "image",
        epsilon=getattr(args, "epsilon", None),
        resolution=getattr(args, "resolution", None),
        hom_dims=tuple(homdims) if homdims else None,
        norm=getattr(args, "norm", None),
        bounds=getattr(args, "bounds", None),
        inf_policy=getattr(args, "inf_policy", None),
        weight=getattr(args, "weight", None),
        stack=getattr(args, "stack", None),
    )
    return cfg


# --------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    base = SynthSpec(kind=args.kind[0], dims=tuple(args.dims), radius=args.radius, thickness=args.thickness,
                     separation=args.separation, value=args.value, noise=args.noise, dtype=args.dtype)
    files = synth_batch(base, args.kind, args.count, args.seed, args.out, args.jitter)
    log.info("wrote %d volumes to %s", len(files), args.out)
    return EXIT_OK


def cmd_convert(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for path in discover_volumes(args.inputs):
        try:
            write_cloud_csv(convert_file(path, cfg.converter), out / f"{path.stem}.cloud.csv")
        except (VoltdaError, OSError) as exc:
            log.error("%s: %s", path, exc)
            failed += 1
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_persist(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    for path in map(Path, args.inputs):
        stem = path.name.removesuffix(".cloud.csv").removesuffix(".csv")
        try:
            dgm = persist_cloud(read_cloud_csv(path), cfg.filtration, max(cfg.image.hom_dims))
            write_diagram(dgm, out / f"{stem}.diagram.csv")
        except ResourceError as exc:
            log.error("%s: %s", path, exc)
            code = EXIT_RESOURCE
        except (VoltdaError, OSError) as exc:
            log.error("%s: %s", path, exc)
            code = max(code, EXIT_PARTIAL)
    return code


def cmd_image(args) -> int:
    cfg = resolve_config(args)
    failed = 0
    for path in args.inputs:
        try:
            image_from_diagram_file(path, cfg, args.out, bounds=args.bounds_values, r_max=args.rmax)
        except (VoltdaError, OSError) as exc:
            log.error("%s: %s", path, exc)
            failed += 1
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = resolve_config(args)
    report = run_pipeline(args.inputs, args.out, cfg)
    log.info("processed %d volumes, %d failed", len(report.done), len(report.failed))
    return report.exit_code


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    report = evaluate_dir(args.pi_dir, args.labels, cfg.image.hom_dims, cfg.seed)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voltda", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file (default: $VOLTDA_CONFIG)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate labelled synthetic volumes")
    p.add_argument("--kind", action="append", required=True,
                   choices=["sphere_shell", "solid_ball", "two_blobs", "uniform_noise", "constant"])
    p.add_argument("--count", type=int, default=1, help="volumes per kind")
    p.add_argument("--dims", type=int, nargs=3, default=[32, 32, 32])
    p.add_argument("--radius", type=float, default=10.0)
    p.add_argument("--thickness", type=float, default=2.0)
    p.add_argument("--separation", type=float, default=12.0)
    p.add_argument("--value", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0, help="max centre offset in voxels")
    p.add_argument("--dtype", default="f64", choices=["u8", "i16", "i32", "f32", "f64"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="volume(s) -> point-cloud CSV")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    _add_converter_flags(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("persist", help="point-cloud CSV -> diagram CSV")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    _add_filtration_flags(p)
    p.add_argument("--homdim", type=int, action="append")
    p.set_defaults(func=cmd_persist)

    p = sub.add_parser("image", help="diagram CSV -> persistence image")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--bounds-values", type=float, nargs=4, metavar=("m", "M", "n", "N"),
                   help="explicit grid bounds instead of per-diagram bounds")
    p.add_argument("--rmax", type=float, help="threshold used to cap infinite deaths")
    _add_image_flags(p)
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("pipeline", help="volume(s) -> diagrams and persistence images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    _add_converter_flags(p)
    _add_filtration_flags(p)
    _add_image_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="nearest-centroid accuracy of persistence images")
    p.add_argument("pi_dir")
    p.add_argument("labels")
    p.add_argument("--homdim", type=int, action="append")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SpecError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ResourceError as exc:
        log.error("%s", exc)
        return EXIT_RESOURCE
    except VoltdaError as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
