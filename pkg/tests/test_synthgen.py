import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dawood.data_model import BACKGROUND, N_PARTS
from dawood.stats import chi2
from dawood.synthgen import CANVAS, JOINT_PARTS, STYLES, generate, render, sample_pose


def test_pose_is_deterministic():
    assert sample_pose(4, 0.3) == sample_pose(4, 0.3)


def test_half_phase_swaps_sides():
    a, b = sample_pose(11, 0.0).angles, sample_pose(11, 0.5).angles
    for limb in ("thigh", "shin", "upper_arm", "forearm"):
        assert a[f"l_{limb}"] == pytest.approx(b[f"r_{limb}"], abs=1e-9)
        assert a[f"r_{limb}"] == pytest.approx(b[f"l_{limb}"], abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1, exclude_max=True), st.sampled_from(["domA", "domB"]))
def test_render_invariants(seed, phase, style):
    r = render(sample_pose(seed, phase), STYLES[style], CANVAS, rng_seed=seed)
    lab = r["label_map"]
    W, H = CANVAS
    assert r["image"].shape == (H, W, 3) and lab.shape == (H, W)
    assert lab.max() <= BACKGROUND
    for p, pts in r["joints"].items():
        for x, y in pts:
            assert 0 <= x < W and 0 <= y < H
            assert lab[int(y), int(x)] == p
    assert sorted(r["joints"]) == list(range(N_PARTS))
    b = r["bbox"]
    inside = lab[b.y:b.y + b.h, b.x:b.x + b.w]
    assert 0 < np.mean(inside != BACKGROUND) < 0.6


def test_joint_table_covers_thirteen_joints():
    assert len(JOINT_PARTS) == 13


def test_styles_differ():
    a, b = STYLES["domA"], STYLES["domB"]
    assert a.limb_widths != b.limb_widths
    for key in a.textures:
        assert a.textures[key] != b.textures[key]


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_generate_is_byte_deterministic(tmp_path):
    generate(tmp_path / "a", 3, 3, 2, seed=5)
    generate(tmp_path / "b", 3, 3, 2, seed=5)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_generated_sets(tiny_dataset):
    m = tiny_dataset
    assert [len(m.of_domain(d)) for d in ("source", "target", "test")] == [6, 6, 4]
    for _, e in m.of_domain("test"):
        assert all(e.joints.get(p) for p in range(N_PARTS))


def _colour_hist(entries):
    h = np.zeros(3 * 32, np.int64)
    for _, e in entries:
        img = e.load_image()
        for c in range(3):
            h[32 * c:32 * (c + 1)] += np.bincount(img[..., c].ravel() // 8, minlength=32)
    return h


def test_domain_gap_is_measurable(tiny_dataset):
    src = _colour_hist(tiny_dataset.of_domain("source"))
    tst = _colour_hist(tiny_dataset.of_domain("test"))
    assert chi2(src, tst) > 0.05
