"""Print per-level diagnostics (entropy, chi2, KL, target error) from model files.

    python scripts/level_table.py runs/sweep/forest_a0.20.dawf runs/sweep/forest_a1.00.dawf
"""
import argparse
from collections import defaultdict

import numpy as np

from dawood.model import Forest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("models", nargs="+")
    args = ap.parse_args()
    for path in args.models:
        f = Forest.load(path)
        by_level = defaultdict(list)
        for r in f.summary.get("diagnostics", []):
            by_level[r["level"]].append(r)
        print(f"{path}  alpha={f.config['alpha']:g}  trees={len(f.trees)}")
        print(f"{'level':>5} {'entropy':>8} {'chi2':>8} {'kl':>8} {'tgt_err':>8}")
        for lv in sorted(by_level):
            rows = by_level[lv]
            mean = {k: np.mean([r[k] for r in rows]) for k in ("entropy", "chi2", "kl",
                                                              "target_err")}
            print(f"{lv:5d} {mean['entropy']:8.4f} {mean['chi2']:8.4f} {mean['kl']:8.4f} "
                  f"{mean['target_err']:8.4f}")
        print()


if __name__ == "__main__":
    main()
