"""Generate the 112/112/77 dataset and sweep alpha, printing a results table.

    python scripts/run_sweep.py --out runs/sweep --alphas 0.2,0.5,1.0
"""
import argparse
import logging
import time
from pathlib import Path

from dawood.config import RunConfig
from dawood.data_model import load_manifest
from dawood.evaluation import sweep
from dawood.synthgen import generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    ap.add_argument("--alphas", default="0.2,1.0")
    ap.add_argument("--trees", type=int, default=RunConfig.trees)
    ap.add_argument("--stride", type=int, default=RunConfig.stride)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")

    data = args.out / "data" / "manifest.jsonl"
    if data.exists():
        manifest = load_manifest(data)
    else:
        manifest = generate(data.parent, 112, 112, 77, seed=args.seed)
    cfg = RunConfig(trees=args.trees, stride=args.stride, seed=args.seed, workers=args.workers)
    alphas = [float(a) for a in args.alphas.split(",")]
    t0 = time.perf_counter()
    res = sweep(manifest, alphas, cfg, out_dir=args.out)
    print(f"{'alpha':>6} {'e_leaf':>7} {'p':>6} {'p_prior':>8} {'prior':>6} {'sec':>6}")
    for r in res.reports:
        print(f"{r.alpha:6.2f} {r.e_leaf:7.4f} {r.p:6.1f} {r.p_prior:8.1f} "
              f"{r.p_prior_only:6.1f} {r.runtime_s:6.0f}")
    print(f"total {time.perf_counter() - t0:.0f}s; outputs in {args.out}")


if __name__ == "__main__":
    main()
