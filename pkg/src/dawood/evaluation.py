"""Joint-square pixel accuracy and the alpha-sweep harness."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .data_model import N_PARTS, PART_NAMES, BoundingBox, DataError, DatasetManifest
from .features import compute_channels
from .infer import extract_pixels, modulate, posterior, prior_only
from .model import Forest
from .train import set_workers, train_forest

log = logging.getLogger(__name__)

REPORT_FIELDS = ["alpha", "e_leaf", "p", "p_prior", "p_prior_only", "runtime_s"]
DIAG_FIELDS = ["level", "tree", "alpha", "entropy", "chi2", "kl", "target_err"]


def tolerance(bbox: BoundingBox) -> float:
    """Half the square side L = 0.2 sqrt(A), rounded to the nearest half pixel."""
    return round(0.1 * bbox.sqrt_area * 2) / 2


def score_image(extracted: Sequence[np.ndarray], joints: dict, bbox: BoundingBox):
    """Per part (correct, total) counts; parts without joints are skipped.

    A pixel is correct when its Chebyshev distance to any joint of its part
    is at most the tolerance.  Returns (correct, total, skipped part ids).
    """
    half = tolerance(bbox)
    correct = np.zeros(N_PARTS, np.int64)
    total = np.zeros(N_PARTS, np.int64)
    skipped = []
    for p in range(N_PARTS):
        pts = joints.get(p) if joints else None
        if not pts:
            skipped.append(p)
            continue
        pix = np.asarray(extracted[p], dtype=np.float64).reshape(-1, 2)
        j = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        d = np.abs(pix[:, None, :] - j[None, :, :]).max(axis=2).min(axis=1)
        correct[p] = int(np.count_nonzero(d <= half))
        total[p] = pix.shape[0]
    return correct, total, skipped


def percentages(correct, total) -> np.ndarray:
    correct = np.asarray(correct, dtype=np.float64)
    total = np.asarray(total, dtype=np.float64)
    return np.where(total > 0, 100.0 * correct / np.maximum(total, 1), 0.0)


@dataclass
class EvalReport:
    alpha: float
    p: float
    p_prior: float
    p_prior_only: float
    per_part: dict
    per_part_prior: dict
    e_leaf: float = float("nan")
    runtime_s: float = 0.0
    skipped: list = field(default_factory=list)

    def row(self) -> dict:
        return {"alpha": self.alpha, "e_leaf": self.e_leaf, "p": self.p,
                "p_prior": self.p_prior, "p_prior_only": self.p_prior_only,
                "runtime_s": self.runtime_s}


def evaluate(forest: Forest, manifest: DatasetManifest, domain: str = "test") -> EvalReport:
    """Score the forest on every entry of ``domain`` without the prior, with
    it, and for the prior alone."""
    entries = manifest.of_domain(domain)
    if not entries:
        raise DataError(f"no {domain} entries to evaluate")
    K = int(forest.config.get("orientations", 9))
    sums = {k: [np.zeros(N_PARTS, np.int64), np.zeros(N_PARTS, np.int64)]
            for k in ("p", "p_prior", "p_prior_only")}
    skipped = set()
    for image_id, entry in entries:
        if entry.joints is None:
            raise DataError(f"{entry.image_path}: entry has no joints")
        ch = compute_channels(entry.load_image(), entry.bbox, K, image_id)
        pm = posterior(forest, ch, entry.bbox)
        maps = {"p": pm, "p_prior": modulate(pm, forest.prior),
                "p_prior_only": prior_only(forest.prior, entry.bbox)}
        for key, m in maps.items():
            c, t, s = score_image(extract_pixels(m, forest.area_fractions),
                                  entry.joints, entry.bbox)
            sums[key][0] += c
            sums[key][1] += t
            skipped.update(s)
    pct = {k: percentages(*v) for k, v in sums.items()}
    scored = [p for p in range(N_PARTS) if sums["p"][1][p] > 0]
    if not scored:
        raise DataError("no part could be scored")
    mean = {k: float(np.mean(v[scored])) for k, v in pct.items()}
    return EvalReport(alpha=forest.alpha, p=mean["p"], p_prior=mean["p_prior"],
                      p_prior_only=mean["p_prior_only"],
                      per_part={PART_NAMES[i]: float(pct["p"][i]) for i in scored},
                      per_part_prior={PART_NAMES[i]: float(pct["p_prior"][i]) for i in scored},
                      e_leaf=float(forest.summary.get("e_leaf", float("nan"))),
                      skipped=sorted(skipped))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def csv_text(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def write_csv(path, rows, fields) -> None:
    Path(path).write_text(csv_text(rows, fields), encoding="utf-8")


@dataclass
class SweepResult:
    reports: list[EvalReport]
    diagnostics: list[dict]
    forests: list[Forest]


def sweep(manifest: DatasetManifest, alphas: Sequence[float], config: RunConfig,
          out_dir: Optional[Path] = None) -> SweepResult:
    """Train one forest per alpha with the same seeds and evaluate each.

    With ``out_dir`` the report and diagnostics CSVs, the diagnostics plot and
    one model per alpha are written there.
    """
    from .plots import diagnostics_svg

    set_workers(config.workers)
    reports, diags, forests = [], [], []
    for a in alphas:
        t0 = time.perf_counter()
        forest = train_forest(manifest, a, config)
        report = evaluate(forest, manifest)
        report.runtime_s = time.perf_counter() - t0
        log.info("alpha %.2f: p=%.2f p'=%.2f prior-only=%.2f (%.0fs)", a, report.p,
                 report.p_prior, report.p_prior_only, report.runtime_s)
        reports.append(report)
        diags.extend(forest.summary["diagnostics"])
        forests.append(forest)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "report.csv", [r.row() for r in reports], REPORT_FIELDS)
        write_csv(out / "diagnostics.csv", diags, DIAG_FIELDS)
        (out / "diagnostics.svg").write_text(diagnostics_svg(diags), encoding="utf-8")
        for f in forests:
            f.save(out / f"forest_a{f.alpha:.2f}.dawf")
    return SweepResult(reports, diags, forests)
