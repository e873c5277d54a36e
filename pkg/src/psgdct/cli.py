"""Command-line entry point: ``psgdct {synth,extract,train,eval,dct}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import formats, spectral
from .errors import ConfigError, FormatError, InvalidParameterError, PsgError
from .evaluation import depth_label, sweep_depths
from .network import Hyper, ModelConfig, train
from .pipeline import extract_record, stack_images
from .report import depth_table, write_reports
from .sigprep import WindowSpec

log = logging.getLogger("psgdct")

DEPTH_CHOICES = ("3", "4", "5", "6", "none")
# narrower than the library default; trains reliably on a few hundred records
RUN_CHANNELS = (8, 12, 16, 24, 32, 40, 48)


@dataclass
class RunConfig:
    window_min: float = 10.0
    overlap: float = 0.0
    schema: str = "default"
    num_blocks: int = 7
    dct_depth: object = 6
    channels_per_block: list = field(default_factory=lambda: list(RUN_CHANNELS))
    pool_blocks: int = 3
    threshold_mode: str = "soft"
    tau_init: float = 0.01
    input_height: int = None
    input_width: int = None
    lr: float = 1e-2
    batch_size: int = 16
    epochs: int = 100
    patience: int = 15
    val_fraction: float = 0.1
    folds: int = 10
    seed: int = 42
    workers: int = 1

    @classmethod
    def from_file(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def depths(self):
        d = self.dct_depth if isinstance(self.dct_depth, list) else [self.dct_depth]
        out = []
        for v in d:
            if v is None or v == "none":
                out.append(None)
            elif str(v) in DEPTH_CHOICES:
                out.append(int(v))
            else:
                raise ConfigError(f"dct_depth must be one of 3, 4, 5, 6, none; got {v!r}")
        return out

    def model_config(self, depth, input_shape):
        return ModelConfig(
            num_blocks=self.num_blocks,
            dct_depth=depth,
            channels_per_block=tuple(self.channels_per_block),
            pool_blocks=self.pool_blocks,
            threshold_mode=self.threshold_mode,
            input_shape=input_shape,
            tau_init=self.tau_init,
            seed=self.seed,
        )

    def hyper(self):
        return Hyper(
            lr=self.lr,
            batch_size=self.batch_size,
            epochs=self.epochs,
            patience=self.patience,
            val_fraction=self.val_fraction,
        )


# -- commands --------------------------------------------------------------

def cmd_synth(args, run):
    from .synth import SynthConfig, generate_record

    cfg = SynthConfig(
        n_records=args.n,
        duration_h=args.duration_h,
        effect_strength=args.effect,
        seed=run.seed,
    )
    out = Path(args.out)
    for i in range(cfg.n_records):
        record, _ = generate_record(cfg, i)
        formats.write_record(record, out / record.record_id)
    log.info("wrote %d records to %s", cfg.n_records, out)
    return 0


def _extract_one(job):
    manifest, window_min, overlap = job
    try:
        record = formats.read_record(manifest)
        img = extract_record(record, WindowSpec(window_min, overlap))
        # drop the raw channels so workers do not ship signals back
        return replace(record, channels=[]), img, None
    except (PsgError, OSError, KeyError, ValueError) as exc:
        return None, None, f"{manifest}: {exc}"


def cmd_extract(args, run):
    manifests = formats.find_manifests(args.manifests)
    if not manifests:
        raise ConfigError(f"no manifest.json found under {args.manifests}")
    WindowSpec(run.window_min, run.overlap)
    if run.schema != "default":
        raise ConfigError(f"unknown feature schema {run.schema!r}")
    out = Path(args.out)
    jobs = [(m, run.window_min, run.overlap) for m in manifests]
    if run.workers > 1:
        with ProcessPoolExecutor(max_workers=run.workers) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]

    errors = []
    for (_, _, err), m in zip(results, manifests):
        if err:
            errors.append({"manifest": str(m), "error": err})
            log.warning(err)
    ok = [(record, img) for record, img, err in results if not err]
    write_feature_dir(ok, out, run.window_min, run.overlap, errors)
    log.info("extracted %d records, %d failed", len(ok), len(errors))
    return 0 if ok else 1


def write_feature_dir(items, out, window_min, overlap, errors=()):
    """Write ``(record, FeatureImage)`` pairs as an extract output directory."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for record, img in items:
        fname = f"{record.record_id}.feat"
        formats.write_feature_image(img, out / fname)
        index.append({
            "record_id": record.record_id,
            "file": fname,
            "label": record.label,
            "static": record.static.as_array().tolist() if record.static else None,
        })
    index.sort(key=lambda r: r["record_id"])
    formats.dump_json(
        {"format_version": formats.FEATURE_VERSION, "window_min": window_min,
         "overlap": overlap, "records": index},
        out / "index.json",
    )
    formats.dump_json({"format_version": formats.REPORT_VERSION, "errors": list(errors)}, out / "errors.json")


def load_features(directory, window_min=None):
    """Read an extract output directory into arrays plus record ids."""
    d = Path(directory)
    try:
        idx = json.loads((d / "index.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {d / 'index.json'}: {exc}") from exc
    if int(idx.get("format_version", -1)) != formats.FEATURE_VERSION:
        raise FormatError(f"unsupported feature index version {idx.get('format_version')}")
    if window_min is not None and float(idx.get("window_min", -1)) != float(window_min):
        raise ConfigError(f"{d} was extracted with {idx.get('window_min')}-minute windows, not {window_min}")
    images, static, labels, ids = [], [], [], []
    row_labels = None
    for r in idx["records"]:
        img = formats.read_feature_image(d / r["file"])
        if row_labels is None:
            row_labels = img.row_labels
        elif img.row_labels != row_labels:
            raise ConfigError(f"record {r['record_id']} has a different feature schema")
        if r["label"] is None or r["static"] is None:
            raise ConfigError(f"record {r['record_id']} lacks a label or static covariates")
        images.append(img)
        static.append(r["static"])
        labels.append(r["label"])
        ids.append(r["record_id"])
    if not images:
        raise ConfigError(f"no records in {d}")
    return images, np.asarray(static, dtype=np.float64), np.asarray(labels, dtype=int), ids


def _input_shape(run, images):
    h = run.input_height or max(i.matrix.shape[0] for i in images)
    w = run.input_width or max(i.matrix.shape[1] for i in images)
    return (h, w)


def cmd_train(args, run):
    images, static, labels, ids = load_features(args.features, getattr(args, "window_min", None))
    depths = run.depths()
    if len(depths) != 1:
        raise ConfigError("train takes a single --dct-depth")
    shape = _input_shape(run, images)
    cfg = run.model_config(depths[0], shape)
    ckpt = train(stack_images(images, shape), static, labels, cfg, run.hyper())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt.save(out / "model.ckpt")
    formats.dump_json(
        {"format_version": formats.REPORT_VERSION, "records": ids, "metadata": ckpt.metadata},
        out / "train.json",
    )
    log.info("trained %s on %d records (%d params)", depth_label(depths[0]), len(ids), cfg.param_count())
    return 0


def cmd_eval(args, run):
    images, static, labels, ids = load_features(args.features, getattr(args, "window_min", None))
    if args.shuffle_labels:
        labels = np.random.default_rng([run.seed, 404]).permutation(labels)
    shape = _input_shape(run, images)
    cfg = run.model_config(None, shape)
    reports = sweep_depths(
        stack_images(images, shape), static, labels, cfg,
        depths=run.depths(), hyper=run.hyper(), k=run.folds, seed=run.seed,
    )
    meta = {"n_records": len(ids), "folds": run.folds, "seed": run.seed,
            "window_min": run.window_min, "input_shape": list(shape),
            "shuffle_labels": bool(args.shuffle_labels)}
    write_reports(reports, args.out, run=meta, figure=not args.no_figure)
    if not args.quiet:
        print(depth_table(reports), end="")
    return 0


def _parse_matrix(text):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in line.replace(";", ",").split(",")])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        if len(rows[-1]) != len(rows[0]):
            raise FormatError(f"line {lineno}: expected {len(rows[0])} values, found {len(rows[-1])}")
    if not rows:
        raise FormatError("line 1: empty matrix")
    return np.array(rows, dtype=np.float64)


def _fmt(v, scale):
    if abs(v) < 1e-12 * scale:
        v = 0.0
    s = format(v, ".15g")
    return "0" if s == "-0" else s


def cmd_dct(args, run):
    text = sys.stdin.read() if args.input in (None, "-") else Path(args.input).read_text(encoding="utf-8")
    m = _parse_matrix(text)
    if args.mode == "1d":
        f = spectral.dct_inverse_1d if args.inverse else spectral.dct_forward_1d
        out = np.array([f(row) for row in m])
    else:
        out = spectral.dct2d_inverse(m) if args.inverse else spectral.dct2d_forward(m)
    scale = max(1.0, float(np.abs(m).max()))
    for row in out:
        print(",".join(_fmt(v, scale) for v in row))
    return 0


# -- argument parsing ------------------------------------------------------

def _global_flags(p, suppress):
    # subparsers must not overwrite values given before the subcommand
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default, help="random seed")
    p.add_argument("--config", default=default, help="JSON run configuration")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="psgdct", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic record corpus")
    _global_flags(p, suppress=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--duration-h", type=float, default=2.0)
    p.add_argument("--effect", type=float, default=1.0)

    p = sub.add_parser("extract", help="records -> feature images")
    _global_flags(p, suppress=True)
    p.add_argument("manifests", help="directory of record subdirectories with manifest.json")
    p.add_argument("--window-min", type=float)
    p.add_argument("--overlap", type=float)
    p.add_argument("--workers", type=int)

    for name, helptext in (("train", "fit one model on all records"),
                           ("eval", "cross-validate one or more DCT insertion depths")):
        p = sub.add_parser(name, help=helptext)
        _global_flags(p, suppress=True)
        p.add_argument("features", help="directory written by extract")
        p.add_argument("--dct-depth", nargs="+", choices=DEPTH_CHOICES)
        p.add_argument("--window-min", type=float, help="must match the window length used by extract")
        p.add_argument("--threshold-mode", choices=("soft", "hard"))
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--channels", type=int, nargs="+", help="channels per block")
        if name == "eval":
            p.add_argument("--folds", type=int)
            p.add_argument("--shuffle-labels", action="store_true",
                           help="permute labels (null-distribution check)")
            p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("dct", help="DCT of a comma-separated text matrix")
    _global_flags(p, suppress=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--forward", action="store_true", default=True)
    g.add_argument("--inverse", action="store_true")
    p.add_argument("--mode", choices=("1d", "2d"), default="2d")
    p.add_argument("input", nargs="?", help="matrix file (default stdin)")
    return parser


_OVERRIDES = {
    "window_min": "window_min", "overlap": "overlap", "workers": "workers",
    "threshold_mode": "threshold_mode", "epochs": "epochs", "lr": "lr",
    "batch_size": "batch_size", "patience": "patience", "folds": "folds",
    "seed": "seed", "channels": "channels_per_block",
}


def resolve_run_config(args):
    run = RunConfig.from_file(args.config) if args.config else RunConfig()
    for attr, key in _OVERRIDES.items():
        v = getattr(args, attr, None)
        if v is not None:
            setattr(run, key, v)
    depth = getattr(args, "dct_depth", None)
    if depth is not None:
        run.dct_depth = [None if d == "none" else int(d) for d in depth]
        if len(run.dct_depth) == 1:
            run.dct_depth = run.dct_depth[0]
    if len(run.channels_per_block) != run.num_blocks:
        run = replace(run, num_blocks=len(run.channels_per_block))
    return run


_DEFAULT_OUT = {"synth": "corpus", "extract": "features", "train": "model", "eval": "report"}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.out is None and args.command in _DEFAULT_OUT:
        args.out = _DEFAULT_OUT[args.command]
    commands = {"synth": cmd_synth, "extract": cmd_extract, "train": cmd_train,
                "eval": cmd_eval, "dct": cmd_dct}
    try:
        run = resolve_run_config(args)
        return commands[args.command](args, run)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"psgdct: configuration error: {exc}", file=sys.stderr)
        return 2
    except (PsgError, OSError) as exc:
        print(f"psgdct: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
