"""Command-line entry point: gen | train | classify | eval | sweep | diag."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .data_model import DataError, load_manifest

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("dawood")


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {a}")
    return a


def _alphas(text: str) -> list[float]:
    return [_alpha(t) for t in text.split(",") if t.strip()]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="key = value file of RunConfig fields")
    g.add_argument("--trees", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--candidates", type=int, help="random shapes per node")
    g.add_argument("--thresholds", type=int, help="thresholds per shape")
    g.add_argument("--samples", type=int, help="reservoir size per domain per node")
    g.add_argument("--min-syn", type=int, dest="min_syn")
    g.add_argument("--stride", type=int, help="pixel stride when tabulating training pixels")
    g.add_argument("--seed", type=int, help="defaults to $DAWOOD_SEED, then 0")
    g.add_argument("--workers", type=int, help="parallel threads (results do not depend on it)")


def _config(args) -> RunConfig:
    base = RunConfig()
    if getattr(args, "config", None):
        base = load_config(args.config, base)
    seed = args.seed
    if seed is None and "DAWOOD_SEED" in os.environ and not _file_sets_seed(args):
        try:
            seed = int(os.environ["DAWOOD_SEED"])
        except ValueError:
            raise ConfigError("DAWOOD_SEED must be an integer")
    return base.updated(trees=args.trees, depth=args.depth, candidates=args.candidates,
                        thresholds=args.thresholds, samples=args.samples,
                        min_syn=args.min_syn, stride=args.stride, seed=seed,
                        workers=args.workers)


def _file_sets_seed(args) -> bool:
    if not getattr(args, "config", None):
        return False
    from .config import parse_config_text
    return "seed" in parse_config_text(args.config.read_text(encoding="utf-8"))


def cmd_gen(args) -> int:
    from .synthgen import generate
    seed = args.seed if args.seed is not None else int(os.environ.get("DAWOOD_SEED", 0))
    m = generate(args.out, args.source, args.target, args.test, seed=seed)
    print(f"wrote {len(m.entries)} entries to {m.path}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .evaluation import DIAG_FIELDS, write_csv
    from .train import train_forest
    cfg = _config(args)
    manifest = load_manifest(args.data)
    t0 = time.perf_counter()
    forest = train_forest(manifest, args.alpha, cfg)
    if args.config:
        forest.config["config_file"] = str(args.config)
    forest.save(args.out)
    diag = args.diag or Path(args.out).with_suffix(".diag.csv")
    write_csv(diag, forest.summary["diagnostics"], DIAG_FIELDS)
    c = forest.counters
    print(f"trained {len(forest.trees)} trees in {time.perf_counter() - t0:.1f}s; "
          f"e_leaf={forest.summary['e_leaf']:.4f}; target evaluations={c.target_evals}")
    print(f"wrote {args.out} and {diag}")
    return EXIT_OK


def cmd_classify(args) -> int:
    from .features import compute_channels
    from .infer import dump_posterior, extract_pixels, modulate, posterior, save_overlay
    from .model import Forest
    forest = Forest.load(args.model)
    manifest = load_manifest(args.data)
    entries = manifest.of_domain(args.domain)
    if not entries:
        raise DataError(f"no {args.domain} entries in {args.data}")
    if args.limit:
        entries = entries[:args.limit]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = int(forest.config.get("orientations", 9))
    for image_id, e in entries:
        image = e.load_image()
        pm = posterior(forest, compute_channels(image, e.bbox, K, image_id), e.bbox)
        if args.prior:
            pm = modulate(pm, forest.prior)
        stem = Path(e.image_path).stem
        save_overlay(out / f"{stem}_parts.png", image, extract_pixels(pm, forest.area_fractions))
        if args.dump_posterior:
            dump_posterior(out / f"{stem}_posterior.bin", pm)
    print(f"classified {len(entries)} images into {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import REPORT_FIELDS, evaluate, write_csv
    from .model import Forest
    forest = Forest.load(args.model)
    t0 = time.perf_counter()
    report = evaluate(forest, load_manifest(args.data))
    report.runtime_s = time.perf_counter() - t0
    if args.out:
        write_csv(args.out, [report.row()], REPORT_FIELDS)
    print(f"alpha={report.alpha:g} p={report.p:.2f} p_prior={report.p_prior:.2f} "
          f"p_prior_only={report.p_prior_only:.2f}")
    for name, v in report.per_part.items():
        print(f"  {name:9s} {v:6.2f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .evaluation import sweep
    cfg = _config(args)
    result = sweep(load_manifest(args.data), args.alphas, cfg, out_dir=args.out_dir)
    for r in result.reports:
        print(f"alpha={r.alpha:g} e_leaf={r.e_leaf:.4f} p={r.p:.2f} p_prior={r.p_prior:.2f} "
              f"p_prior_only={r.p_prior_only:.2f} runtime={r.runtime_s:.0f}s")
    print(f"wrote report.csv, diagnostics.csv and diagnostics.svg to {args.out_dir}")
    return EXIT_OK


def cmd_diag(args) -> int:
    from .evaluation import DIAG_FIELDS, write_csv
    from .model import Forest
    from .plots import diagnostics_svg
    rows = []
    for path in args.models:
        rows.extend(Forest.load(path).summary.get("diagnostics", []))
    if not rows:
        raise DataError("models carry no diagnostics")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "diagnostics.csv", rows, DIAG_FIELDS)
    (out / "diagnostics.svg").write_text(diagnostics_svg(rows), encoding="utf-8")
    print(f"wrote diagnostics.csv and diagnostics.svg to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dawood", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a two-domain synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--source", type=int, default=112)
    p.add_argument("--target", type=int, default=112)
    p.add_argument("--test", type=int, default=77)
    p.add_argument("--seed", type=int, help="defaults to $DAWOOD_SEED, then 0")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a forest")
    p.add_argument("--data", type=Path, required=True, help="manifest.jsonl")
    p.add_argument("--alpha", type=_alpha, default=RunConfig.alpha)
    p.add_argument("--out", type=Path, required=True, help="model file to write")
    p.add_argument("--diag", type=Path, help="diagnostics CSV (default: next to the model)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="write per-part overlays for a domain")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--domain", default="test", choices=["source", "target", "test"])
    p.add_argument("--prior", action="store_true", help="modulate by the location prior")
    p.add_argument("--dump-posterior", action="store_true", help="also write raster planes")
    p.add_argument("--limit", type=int, help="classify only the first N images")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="score a forest on the test entries")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, help="report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate one forest per alpha")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--alphas", type=_alphas, default=[0.2, 1.0], help="comma separated")
    p.add_argument("--out-dir", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diag", help="diagnostics CSV and SVG from trained models")
    p.add_argument("models", type=Path, nargs="+")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"dawood: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as err:
        print(f"dawood: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:  # noqa: BLE001
        log.exception("internal error")
        print(f"dawood: internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
