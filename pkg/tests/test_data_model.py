import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import save_manifest, write_entry
from dawood.data_model import (N_LABELS, BoundingBox, DataError, PartLabel, iter_pixels,
                               load_manifest, spatial_bin, spatial_bins)


def test_part_labels():
    assert len(PartLabel) == N_LABELS == 8
    assert PartLabel.BACKGROUND == 7
    assert [p.name.lower() for p in PartLabel][:7] == [
        "foot", "knee", "hip", "shoulder", "elbow", "hand", "head"]


def test_spatial_bin_examples():
    box = BoundingBox(3, 5, 20, 12)
    assert spatial_bin(3, 5, box, 8) == 0
    assert spatial_bin(17, 9, box, 1) == 0
    assert spatial_bin(9, 9, BoundingBox(0, 0, 10, 10), 4) == 15
    # the far boundary is clamped into the last row and column
    assert spatial_bin(10, 10, BoundingBox(0, 0, 10, 10), 4) == 15


def test_spatial_bin_rejects_outside():
    with pytest.raises(ValueError):
        spatial_bin(11, 0, BoundingBox(0, 0, 10, 10), 4)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(1, 40), st.integers(1, 40),
       st.integers(1, 8))
def test_spatial_bins_surjective(x, y, w, h, G):
    box = BoundingBox(x, y, max(w, G), max(h, G))
    ys, xs = np.mgrid[box.y:box.y + box.h, box.x:box.x + box.w]
    z = spatial_bins(xs.ravel(), ys.ravel(), box, G)
    assert set(z.tolist()) == set(range(G * G))
    assert all(spatial_bin(int(a), int(b), box, G) == int(c)
               for a, b, c in zip(xs.ravel()[::7], ys.ravel()[::7], z[::7]))


def test_empty_manifest(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("")
    assert len(load_manifest(path)) == 0


def test_manifest_round_trip(tmp_path):
    img = np.zeros((10, 10, 3), np.uint8)
    lab = np.full((10, 10), 7, np.uint8)
    lab[2, 3] = 1
    e = write_entry(tmp_path, "a", img, lab, joints={0: [(1.0, 2.0)], 6: [(4.5, 5.0)]})
    m = load_manifest(save_manifest(tmp_path, [e]))
    assert len(m) == 1
    got = m.entries[0]
    assert got.bbox == BoundingBox(0, 0, 10, 10)
    assert got.joints == {0: [(1.0, 2.0)], 6: [(4.5, 5.0)]}
    assert got.load_labels()[2, 3] == 1


def test_generated_manifest_round_trip(tiny_dataset):
    again = load_manifest(tiny_dataset.path)
    for a, b in zip(tiny_dataset.entries, again.entries):
        assert a.joints == b.joints and a.bbox == b.bbox


def test_manifest_errors(tmp_path):
    img = np.zeros((10, 10, 3), np.uint8)
    e = write_entry(tmp_path, "a", img, np.zeros((8, 10), np.uint8))
    with pytest.raises(DataError, match="label map is"):
        load_manifest(save_manifest(tmp_path, [e]))

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"image": "a.png", "labels": null, "bbox": [0,0,4,4], "domain": "target"}\n'
                   "not json\n")
    with pytest.raises(DataError, match="line 2"):
        load_manifest(bad)

    src = tmp_path / "src.jsonl"
    src.write_text(json.dumps({"image": "a.png", "labels": None, "bbox": [0, 0, 4, 4],
                               "domain": "source"}) + "\n")
    with pytest.raises(DataError, match="label map"):
        load_manifest(src)

    with pytest.raises(DataError):
        load_manifest(tmp_path / "missing.jsonl")


def test_bbox_clamped_on_load(tmp_path):
    img = np.zeros((10, 12, 3), np.uint8)
    e = write_entry(tmp_path, "a", img, domain="target", bbox=BoundingBox(-2, 3, 20, 20))
    m = load_manifest(save_manifest(tmp_path, [e]))
    assert m.entries[0].bbox == BoundingBox(0, 3, 12, 7)


def test_iter_pixels_counts_and_labels(tmp_path):
    img = np.zeros((12, 12, 3), np.uint8)
    lab = np.full((12, 12), 7, np.uint8)
    box = BoundingBox(1, 1, 10, 10)
    src = write_entry(tmp_path, "s", img, lab, bbox=box)
    tgt = write_entry(tmp_path, "t", img, domain="target", bbox=box)
    m = load_manifest(save_manifest(tmp_path, [src, tgt]))
    pix = list(iter_pixels(m, "source"))
    assert len(pix) == 100
    assert all(p.label == 7 for p in pix)
    assert len(list(iter_pixels(m, "source", stride=2))) == 25
    tp = list(iter_pixels(m, "target"))
    assert all(p.label is None for p in tp)
    assert [(p.px, p.py) for p in tp[:3]] == [(1, 1), (2, 1), (3, 1)]
    assert tp == list(iter_pixels(m, "target"))
