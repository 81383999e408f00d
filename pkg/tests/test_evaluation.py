import numpy as np
import pytest

from conftest import SMALL
from dawood.data_model import N_PARTS, BoundingBox, DataError, DatasetManifest
from dawood.evaluation import (DIAG_FIELDS, REPORT_FIELDS, EvalReport, csv_text, evaluate,
                               score_image, sweep, tolerance)
from dawood.plots import diagnostics_svg
from dawood.train import train_forest

BOX = BoundingBox(0, 0, 50, 50)  # L = 10, tolerance 5


def joints_at(x, y):
    return {p: [(x, y)] for p in range(N_PARTS)}


def test_tolerance_rounds_to_half_pixels():
    assert tolerance(BOX) == 5.0
    assert tolerance(BoundingBox(0, 0, 13, 17)) == 1.5  # 0.1 * sqrt(221) = 1.487


def test_score_boundaries():
    joints = joints_at(20, 20)
    pix = [np.array([[20, 20], [25, 15], [26, 20], [20, 14]])] * N_PARTS
    c, t, skipped = score_image(pix, joints, BOX)
    assert c.tolist() == [2] * N_PARTS and t.tolist() == [4] * N_PARTS and skipped == []


def test_score_uses_nearest_joint_and_skips_missing():
    joints = {0: [(0, 0), (40, 40)], 1: []}
    pix = [np.array([[41, 43], [10, 10]])] * N_PARTS
    c, t, skipped = score_image(pix, joints, BOX)
    assert c[0] == 1 and t[0] == 2
    assert skipped == list(range(1, N_PARTS))


def test_random_extraction_matches_coverage():
    rng = np.random.default_rng(0)
    joints = joints_at(25, 25)
    pix = [rng.integers(0, 50, (4000, 2))] * N_PARTS
    c, t, _ = score_image(pix, joints, BOX)
    p = 11 * 11 / 2500
    sd = np.sqrt(p * (1 - p) / 4000)
    assert abs(c[0] / t[0] - p) < 4 * sd


def test_perfect_labels_score_100(tiny_dataset):
    from dawood.infer import PosteriorMap, extract_pixels
    for _, e in tiny_dataset.of_domain("test"):
        b = e.bbox
        lab = e.load_labels()[b.y:b.y + b.h, b.x:b.x + b.w]
        probs = np.eye(8)[lab]
        phi = np.array([max(np.sum(lab == p), 1) / b.area for p in range(N_PARTS)])
        c, t, _ = score_image(extract_pixels(PosteriorMap(probs, b), phi), e.joints, b)
        assert np.all(c == t)


@pytest.fixture(scope="module")
def forest(tiny_dataset):
    return train_forest(tiny_dataset, 0.5, SMALL)


def test_evaluate_report(forest, tiny_dataset):
    r = evaluate(forest, tiny_dataset)
    assert isinstance(r, EvalReport)
    for v in (r.p, r.p_prior, r.p_prior_only):
        assert 0 <= v <= 100
    assert r.p == pytest.approx(np.mean(list(r.per_part.values())))
    assert r.e_leaf == forest.summary["e_leaf"]
    shuffled = DatasetManifest(list(reversed(tiny_dataset.entries)), tiny_dataset.path)
    assert evaluate(forest, shuffled).p == pytest.approx(r.p, abs=1e-9)


def test_evaluate_needs_test_entries(forest, tiny_dataset):
    with pytest.raises(DataError):
        evaluate(forest, DatasetManifest([e for e in tiny_dataset.entries
                                          if e.domain != "test"]))


def test_sweep_writes_outputs(tiny_dataset, tmp_path):
    res = sweep(tiny_dataset, [0.5], SMALL, out_dir=tmp_path)
    assert len(res.reports) == 1
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_FIELDS) and len(lines) == 2
    diag = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert diag[0] == ",".join(DIAG_FIELDS)
    assert len(diag) == 1 + SMALL.trees * (SMALL.depth + 1)
    assert (tmp_path / "diagnostics.svg").read_text().startswith("<svg")
    assert (tmp_path / "forest_a0.50.dawf").is_file()


def test_csv_and_svg_are_textually_stable():
    rows = [{"level": lv, "tree": 0, "alpha": a, "entropy": 0.5 / (lv + 1), "chi2": 0.1 * a,
             "kl": 0.2, "target_err": -1.0} for a in (0.2, 1.0) for lv in range(3)]
    assert csv_text(rows, DIAG_FIELDS) == csv_text(rows, DIAG_FIELDS)
    svg = diagnostics_svg(rows)
    assert svg == diagnostics_svg(rows)
    for title in ("entropy", "chi2", "KL"):
        assert title in svg
    assert svg.count("<polyline") == 6
    assert "alpha=0.2" in svg and "alpha=1" in svg
