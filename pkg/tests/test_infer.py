import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL
from dawood.data_model import N_LABELS, BoundingBox
from dawood.features import compute_channels
from dawood.infer import (PALETTE, LocationPrior, PosteriorMap, dump_posterior,
                          estimate_joints, extract_pixels, modulate, overlay, posterior,
                          prior_only, read_posterior)
from dawood.model import Forest
from dawood.train import train_forest

BOX = BoundingBox(2, 3, 6, 5)


def random_map(seed, box=BOX):
    rng = np.random.default_rng(seed)
    p = rng.random((box.h, box.w, N_LABELS))
    return PosteriorMap(p / p.sum(axis=2, keepdims=True), box)


def uniform_prior(P=4):
    return LocationPrior(np.full((7, P, P), 1.0 / P ** 2))


@pytest.fixture(scope="module")
def forest(tiny_dataset):
    return train_forest(tiny_dataset, 0.5, SMALL.updated(trees=2), diagnostics=False)


def test_posterior_is_a_distribution(forest, tiny_dataset):
    _, e = tiny_dataset.of_domain("test")[0]
    ch = compute_channels(e.load_image(), e.bbox, 9)
    counters = {}
    pm = posterior(forest, ch, e.bbox, counters)
    pm.check()
    assert pm.probs.shape == (e.bbox.h, e.bbox.w, N_LABELS)
    # each pixel walks one root-to-leaf path per tree
    kind, _, left, right, _, roots = forest.flat()
    assert counters["split_evals"] <= e.bbox.area * sum(t.max_depth for t in forest.trees)


def test_single_tree_and_duplicate_trees(forest, tiny_dataset):
    _, e = tiny_dataset.of_domain("test")[0]
    ch = compute_channels(e.load_image(), e.bbox, 9)
    one = Forest([forest.trees[0]], forest.config, forest.area_fractions, forest.prior)
    two = Forest([forest.trees[0]] * 2, forest.config, forest.area_fractions, forest.prior)
    a = posterior(one, ch, e.bbox).probs
    assert np.allclose(posterior(two, ch, e.bbox).probs, a, atol=1e-15)
    # one pixel by hand
    t = forest.trees[0]
    from dawood.features import WeakClassifier, evaluate, Side
    px, py = e.bbox.x + 3, e.bbox.y + 4
    n = 0
    while t.kind[n]:
        side = evaluate(t.weak_classifier(n), ch, px, py)
        n = t.right[n] if side == Side.RIGHT else t.left[n]
    assert np.array_equal(a[4, 3], t.posterior[n])


def test_uniform_prior_is_identity():
    pm = random_map(0)
    q = modulate(pm, uniform_prior())
    assert np.allclose(q.probs, pm.probs, atol=1e-12)
    q.check()


def test_prior_pulls_mass_into_its_support():
    box = BoundingBox(0, 0, 8, 8)
    p = np.full((8, 8, N_LABELS), 1.0 / N_LABELS)
    p[1, 1, 0] += 0.3  # the forest likes the top-left corner for part 0
    p /= p.sum(axis=2, keepdims=True)
    grid = np.full((7, 4, 4), 0.0)
    grid[:, 3, 3] = 1.0  # but the prior only supports the bottom-right cell
    grid += 1e-3
    grid /= grid.sum(axis=(1, 2), keepdims=True)
    q = modulate(PosteriorMap(p, box), LocationPrior(grid))
    q.check()
    r, c = np.unravel_index(np.argmax(q.probs[..., 0]), (8, 8))
    assert r >= 6 and c >= 6


def test_modulate_requires_positive_prior():
    with pytest.raises(ValueError):
        modulate(random_map(1), LocationPrior(np.zeros((7, 2, 2))))


def test_extract_counts_and_floor():
    pm = random_map(2)
    phi = np.array([0.001, 0.1, 0.2, 0.05, 0.3, 0.01, 0.5])
    out = extract_pixels(pm, phi)
    expected = [max(1, round(f * BOX.area)) for f in phi]
    assert [len(o) for o in out] == expected
    for pix in out:
        assert len({tuple(p) for p in pix}) == len(pix)
        assert np.all((pix[:, 0] >= BOX.x) & (pix[:, 0] < BOX.x + BOX.w))
        assert np.all((pix[:, 1] >= BOX.y) & (pix[:, 1] < BOX.y + BOX.h))
    with pytest.raises(ValueError):
        extract_pixels(pm, np.zeros(7))


def test_extract_finds_blob_and_breaks_ties_row_major():
    p = np.full((BOX.h, BOX.w, N_LABELS), 1.0 / N_LABELS)
    p[1:3, 2:4, 4] = 0.9
    pm = PosteriorMap(p, BOX)
    phi = np.full(7, 4 / BOX.area)
    out = extract_pixels(pm, phi)
    assert {tuple(v) for v in out[4]} == {(BOX.x + c, BOX.y + r) for r in (1, 2) for c in (2, 3)}
    # constant plane: the first pixels in row-major order win
    assert out[0].tolist() == [[BOX.x + c, BOX.y] for c in range(4)]


@settings(max_examples=30)
@given(st.integers(0, 1000))
def test_constant_prior_keeps_extraction(seed):
    pm = random_map(seed)
    phi = np.full(7, 0.1)
    a = extract_pixels(pm, phi)
    b = extract_pixels(modulate(pm, uniform_prior()), phi)
    # equal up to float ties, so compare the selected probabilities
    for p in range(7):
        pa = pm.probs.reshape(-1, N_LABELS)[:, p]
        assert np.allclose(np.sort(pa[(a[p][:, 1] - BOX.y) * BOX.w + a[p][:, 0] - BOX.x]),
                           np.sort(pa[(b[p][:, 1] - BOX.y) * BOX.w + b[p][:, 0] - BOX.x]))


def test_prior_only_is_normalised():
    pm = prior_only(uniform_prior(3), BOX)
    pm.check()


def test_joint_estimate_is_centroid():
    pts = [np.array([[0, 0], [2, 4]])] * 7
    assert np.array_equal(estimate_joints(pts), np.tile([1.0, 2.0], (7, 1)))


def test_overlay_and_dump(tmp_path):
    img = np.zeros((10, 12, 3), np.uint8)
    pix = [np.array([[p, 1]]) for p in range(7)]
    out = overlay(img, pix, alpha=1.0)
    for p in range(7):
        assert np.array_equal(out[1, p], PALETTE[p])
    assert not out[5].any()
    pm = random_map(3)
    dump_posterior(tmp_path / "post.bin", pm)
    planes = read_posterior(tmp_path / "post.bin")
    assert planes.shape == (N_LABELS, BOX.h, BOX.w)
    assert np.allclose(planes.transpose(1, 2, 0), pm.probs, atol=1e-7)
    raw = (tmp_path / "post.bin").read_bytes()
    assert raw[:12] == np.array([BOX.w, BOX.h, N_LABELS], "<u4").tobytes()
