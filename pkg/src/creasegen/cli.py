"""Command-line entry point: ``creasegen <subcommand> ...``.

Exit codes: 0 success, 1 validation error (bad flags, bad input files,
failed verification), 2 runtime failure. Errors go to stderr as one JSON
line; results go to stdout as JSON.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import augment, bridge, dataset, edgeproc, metrics
from .errors import CreaseError, ValidationError
from .raster import CanvasConfig, read_gray, write_png
from .seeding import derive_rng

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("creasegen")

SEED_ENV = "CREASE_SEED"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
HELP_WIDTH = 100


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route it to exit 1 instead
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=36)


class JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname.lower(), "logger": record.name,
                           "message": record.getMessage()})


# --- argument types ---------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _canvas(text: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {v}")
    return v


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="creasegen", formatter_class=_formatter,
                description="Synthetic forehead-crease prompts, edge maps and evaluation metrics.")
    p.add_argument("--config", metavar="PATH", help="TOML or JSON file of flag defaults for the subcommand")
    p.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"],
                   help="JSON log lines on stderr at this level (default warning)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", formatter_class=_formatter, help="build an FC, CPD or VPD dataset")
    g.add_argument("--variant", required=True, choices=["fc", "cpd", "vpd"], type=str.lower,
                   help="fc: one prompt x10, cpd: guide-point noise, vpd: 14 augmentations")
    g.add_argument("--ids", required=True, type=_positive_int, help="number of identities")
    g.add_argument("--seed", type=_seed, help=f"global seed ({SEED_ENV} overrides)")
    g.add_argument("--out", required=True, metavar="DIR", help="output dataset directory")
    g.add_argument("--canvas", type=_canvas, default=(256, 256), metavar="WxH", help="image size (default 256x256)")
    g.add_argument("--thickness", type=_positive_int, default=3, help="stroke thickness in pixels (default 3)")
    g.add_argument("--samples", type=_positive_int, help="samples per identity (default 10, VPD 14)")
    g.add_argument("--cpd-magnitude", type=float, default=dataset.DEFAULT_CPD_MAGNITUDE,
                   help="CPD guide-point noise in grid units (default 0.1)")
    g.add_argument("--dedup", action="store_true", help="redraw identities whose grid mask repeats")
    g.add_argument("--jobs", type=_positive_int, help="worker processes (default: available cores)")

    e = sub.add_parser("edges", formatter_class=_formatter, help="extract edge maps from grayscale images")
    e.add_argument("--in", dest="in_dir", required=True, metavar="DIR", help="directory of grayscale images")
    e.add_argument("--out", required=True, metavar="DIR", help="edge maps, same relative paths as .png")
    e.add_argument("--blur-kernel", type=int, default=15, help="Gaussian kernel size (default 15)")
    e.add_argument("--blur-sigma", type=float, default=30.0, help="Gaussian sigma (default 30)")
    e.add_argument("--dilate-kernel", type=int, default=3, help="dilation square size (default 3)")
    e.add_argument("--dilate-iters", type=int, default=1, help="dilation iterations (default 1)")
    e.add_argument("--jobs", type=_positive_int, help="worker processes (default: available cores)")

    a = sub.add_parser("augment", formatter_class=_formatter, help="apply registry augmentations to binary prompts")
    a.add_argument("--in", dest="in_dir", required=True, metavar="DIR", help="directory of binary prompts")
    a.add_argument("--out", required=True, metavar="DIR", help="one subdirectory of variants per input")
    a.add_argument("--seed", type=_seed, help=f"seed ({SEED_ENV} overrides)")
    a.add_argument("--only", metavar="NAME,...", help="comma-separated registry names (default: all 14)")
    a.add_argument("--list", action="store_true", help="print the registry as JSON and exit")
    a.add_argument("--jobs", type=_positive_int, help="worker processes (default: available cores)")

    m = sub.add_parser("metrics", formatter_class=_formatter, help="evaluation metrics")
    ms = m.add_subparsers(dest="metric", metavar="METRIC", parser_class=_Parser)
    ms.required = True
    s = ms.add_parser("ssim", formatter_class=_formatter, help="SSIM of two images, or first-pose SSIM of a dataset")
    s.add_argument("--manifest", metavar="PATH", help="dataset manifest: first-pose SSIM averaged over identities")
    s.add_argument("--a", metavar="IMAGE", help="first image")
    s.add_argument("--b", metavar="IMAGE", help="second image")
    d = ms.add_parser("diversity", formatter_class=_formatter, help="mean intra-identity pairwise feature distance")
    d.add_argument("--features", metavar="CSV", help="feature file with header id,f0,...")
    d.add_argument("--manifest", metavar="PATH", help="use block-mean pixel features of a dataset")
    d.add_argument("--block", type=_positive_int, default=16, help="pixel block size for --manifest (default 16)")
    f = ms.add_parser("fid", formatter_class=_formatter, help="Frechet distance between two feature files")
    f.add_argument("--features1", required=True, metavar="CSV", help="feature file with header id,f0,...")
    f.add_argument("--features2", required=True, metavar="CSV", help="feature file with header id,f0,...")
    r = ms.add_parser("eer", formatter_class=_formatter, help="equal error rate")
    r.add_argument("--scores", required=True, metavar="CSV", help="score file with header label,score")
    t = ms.add_parser("tmr", formatter_class=_formatter, help="true-match rate at fixed false-match rates")
    t.add_argument("--scores", required=True, metavar="CSV", help="score file with header label,score")
    t.add_argument("--fmr", type=_fraction, action="append", metavar="RATE",
                   help="target FMR, repeatable (default 0.001 and 0.0001)")
    c = ms.add_parser("det", formatter_class=_formatter, help="DET curve as CSV fmr,fnmr")
    c.add_argument("--scores", required=True, metavar="CSV", help="score file with header label,score")
    c.add_argument("--out", required=True, metavar="CSV", help="output CSV path")
    c.add_argument("--points", type=int, default=100, help="curve points (default 100)")

    b = sub.add_parser("bridge-check", formatter_class=_formatter, help="Monte Carlo checks of the bridge schedule")
    b.add_argument("--T", dest="T", type=_positive_int, default=bridge.DEFAULT_T, help="max timestep (default 1000)")
    b.add_argument("--samples", type=_positive_int, default=100_000, help="Monte Carlo draws (default 100000)")
    b.add_argument("--seed", type=_seed, default=0, help="RNG seed (default 0)")

    v = sub.add_parser("verify", formatter_class=_formatter, help="re-hash a dataset against its manifest")
    v.add_argument("--manifest", required=True, metavar="PATH", help="manifest.json of a dataset")
    v.add_argument("--regenerate", action="store_true", help="also rebuild from the seed and compare hashes")
    v.add_argument("--jobs", type=_positive_int, help="worker processes for --regenerate")
    return p


def load_config(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text) if p.suffix.lower() == ".json" else tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ValidationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config must be a table/object of flag values")
    return data


def _apply_config(parser: argparse.ArgumentParser, argv: list[str], path: str) -> None:
    """Install config values as defaults of the chosen subcommand's flags.

    Values go through the same type checks as command-line flags, and
    flags given explicitly still win.
    """
    names = []
    sp = parser
    for tok in argv:
        acts = [a for a in sp._actions if isinstance(a, argparse._SubParsersAction)]
        if acts and tok in acts[0].choices:
            names.append(tok)
            sp = acts[0].choices[tok]
    if not names or any(isinstance(a, argparse._SubParsersAction) for a in sp._actions):
        return  # let the normal parse report the missing subcommand
    by_dest = {a.dest: a for a in sp._actions if a.dest != "help"}
    for key, val in load_config(path).items():
        k = key.replace("-", "_")
        k = "in_dir" if k == "in" else k
        act = by_dest.get(k)
        if act is None:
            raise ValidationError(f"unknown config key {key!r} for {' '.join(names)}")
        if isinstance(act, argparse._StoreTrueAction):
            act.default = bool(val)
        else:
            vals = val if isinstance(val, list) and k != "canvas" else [val]
            if k == "canvas" and isinstance(val, list):
                vals = [f"{val[0]}x{val[1]}"]
            typed = []
            for x in vals:
                try:
                    typed.append(act.type(str(x)) if act.type else x)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ValidationError(f"config key {key!r}: {exc}") from None
                if act.choices is not None and typed[-1] not in act.choices:
                    raise ValidationError(f"config key {key!r}: {x!r} not in {list(act.choices)}")
            act.default = typed if isinstance(act, argparse._AppendAction) else typed[0]
        act.required = False


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        _apply_config(parser, argv, known.config)
    args = parser.parse_args(argv)
    env = os.environ.get(SEED_ENV)
    if env is not None and hasattr(args, "seed"):
        try:
            args.seed = _seed(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise ValidationError(f"{SEED_ENV}={env!r} is not a valid 64-bit seed") from None
    return args


# --- commands ---------------------------------------------------------------

def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _images_under(root: Path) -> list[Path]:
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _require_seed(args) -> int:
    if args.seed is None:
        raise ValidationError(f"--seed is required (or set {SEED_ENV})")
    return args.seed


def cmd_generate(args) -> int:
    w, h = args.canvas
    cfg = dataset.DatasetConfig(
        variant=args.variant, n_identities=args.ids, global_seed=_require_seed(args), out_dir=args.out,
        canvas=CanvasConfig(width=w, height=h, stroke_thickness=args.thickness),
        samples_per_identity=args.samples, cpd_magnitude=args.cpd_magnitude,
        dedup=args.dedup, jobs=args.jobs,
    )
    man = dataset.generate_dataset(cfg)
    _emit({"manifest": str(Path(args.out) / dataset.MANIFEST_NAME), "variant": man.variant,
           "identities": man.n_identities, "images": len(man.entries)})
    return 0


def _edge_one(item, config):
    src, dst = item
    Path(dst).parent.mkdir(parents=True, exist_ok=True)
    return write_png(edgeproc.extract_edge_map(read_gray(src), config), dst)


def cmd_edges(args) -> int:
    config = edgeproc.EdgePipelineConfig(blur_kernel=args.blur_kernel, blur_sigma=args.blur_sigma,
                                         dilate_kernel=args.dilate_kernel, dilate_iterations=args.dilate_iters)
    src = Path(args.in_dir)
    out = Path(args.out)
    files = _images_under(src)
    if not files:
        raise ValidationError(f"no images found under {src}")
    items = [(str(f), str(out / f.relative_to(src).with_suffix(".png"))) for f in files]
    dataset.run_jobs(partial(_edge_one, config=config), items, args.jobs)
    _emit({"images": len(items), "out": str(out)})
    return 0


def _augment_one(item, seed, names):
    src, rel, out = item
    img = read_gray(src)
    target = Path(out) / Path(rel).with_suffix("")
    target.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(names):
        spec = augment.get_augmentation(name)
        res = augment.apply_augmentation(img, spec, derive_rng(seed, rel, name))
        write_png(res, target / f"{i:02d}_{name}.png")
    return len(names)


def cmd_augment(args) -> int:
    if args.list:
        _emit(json.loads(augment.registry_json()))
        return 0
    seed = _require_seed(args)
    names = [s.name for s in augment.list_augmentations()]
    if args.only:
        wanted = [n.strip() for n in args.only.split(",") if n.strip()]
        for n in wanted:
            augment.get_augmentation(n)  # raises on unknown names
        names = [n for n in names if n in wanted]
    src = Path(args.in_dir)
    files = _images_under(src)
    if not files:
        raise ValidationError(f"no images found under {src}")
    items = [(str(f), f.relative_to(src).as_posix(), args.out) for f in files]
    n = sum(dataset.run_jobs(partial(_augment_one, seed=seed, names=names), items, args.jobs))
    _emit({"inputs": len(items), "images": n, "augmentations": names})
    return 0


def cmd_metrics(args) -> int:
    kind = args.metric
    if kind == "ssim":
        if args.manifest:
            man = dataset.read_manifest(args.manifest)
            groups = dataset.load_groups(man, Path(args.manifest).parent)
            _emit({"metric": "intra_subject_ssim", "value": metrics.intra_subject_ssim(groups)})
        elif args.a and args.b:
            _emit({"metric": "ssim", "value": metrics.ssim(read_gray(args.a), read_gray(args.b))})
        else:
            raise ValidationError("metrics ssim needs --manifest or both --a and --b")
    elif kind == "diversity":
        if bool(args.features) == bool(args.manifest):
            raise ValidationError("metrics diversity needs exactly one of --features or --manifest")
        if args.features:
            fs = metrics.read_features(args.features)
        else:
            man = dataset.read_manifest(args.manifest)
            root = Path(args.manifest).parent
            rows, ids = [], []
            for e in man.entries:
                rows.append(metrics.pixel_features(read_gray(root / e.file), args.block))
                ids.append(e.identity_id)
            fs = metrics.FeatureSet(np.array(rows), tuple(ids))
        _emit({"metric": "diversity", "value": metrics.diversity(fs)})
    elif kind == "fid":
        s1 = metrics.gaussian_stats(metrics.read_features(args.features1))
        s2 = metrics.gaussian_stats(metrics.read_features(args.features2))
        _emit({"metric": "frechet_distance", "value": metrics.frechet_distance(s1, s2)})
    elif kind == "eer":
        value, tau = metrics.eer(metrics.read_scores(args.scores))
        _emit({"metric": "eer", "value": value, "threshold": tau})
    elif kind == "tmr":
        scores = metrics.read_scores(args.scores)
        targets = args.fmr or [1e-3, 1e-4]
        _emit({"metric": "tmr_at_fmr",
               "values": [{"fmr": f, "tmr": metrics.tmr_at_fmr(scores, f)} for f in targets]})
    elif kind == "det":
        curve = metrics.det_curve(metrics.read_scores(args.scores), args.points)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        metrics.write_det(curve, args.out)
        _emit({"metric": "det", "points": len(curve), "out": args.out})
    return 0


def cmd_bridge_check(args) -> int:
    results = bridge.run_checks(args.T, args.samples, args.seed)
    for r in results:
        sys.stdout.write(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}\n")
    if not all(r.passed for r in results):
        raise CreaseError("bridge checks failed: " + ", ".join(r.name for r in results if not r.passed))
    return 0


def cmd_verify(args) -> int:
    report = dataset.verify_manifest(args.manifest, regenerate=args.regenerate, jobs=args.jobs)
    _emit(report.to_dict())
    if not report.ok:
        raise ValidationError(f"{len(report.mismatches)} mismatch(es) against {args.manifest}")
    return 0


COMMANDS = {"generate": cmd_generate, "edges": cmd_edges, "augment": cmd_augment, "metrics": cmd_metrics,
            "bridge-check": cmd_bridge_check, "verify": cmd_verify}


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except ValidationError as exc:
        return _fail(1, exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(args.log_level.upper())
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        return _fail(1, exc)
    except (CreaseError, OSError, ArithmeticError, MemoryError) as exc:
        return _fail(2, exc)
    except Exception as exc:  # keep the one-line JSON contract for anything unexpected
        return _fail(2, exc)


def main() -> None:
    sys.exit(run())
