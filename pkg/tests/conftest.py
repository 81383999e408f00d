import os

# numba reads this once at import; the determinism checks need 4 threads
os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import numpy as np
import pytest
from PIL import Image

from dawood.config import RunConfig
from dawood.data_model import BoundingBox, DatasetManifest, ManifestEntry, write_manifest
from dawood.synthgen import generate

SMALL = RunConfig(trees=1, depth=4, candidates=40, thresholds=8, samples=40,
                  finalist_shapes=4, finalist_thresholds=3, min_syn=20, stride=2)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    return generate(tmp_path_factory.mktemp("tiny"), 6, 6, 4, seed=3)


@pytest.fixture
def small_config():
    return SMALL


def write_entry(tmp_path, name, image, labels=None, bbox=None, domain="source", joints=None):
    """Save one image (and label map) and return a manifest entry for it."""
    img_path = tmp_path / f"{name}.png"
    Image.fromarray(np.asarray(image, np.uint8), "RGB").save(img_path)
    lab_path = None
    if labels is not None:
        lab_path = tmp_path / f"{name}_labels.png"
        Image.fromarray(np.asarray(labels, np.uint8), "L").save(lab_path)
    h, w = image.shape[:2]
    return ManifestEntry(image_path=img_path, bbox=bbox or BoundingBox(0, 0, w, h),
                         domain=domain, label_path=lab_path, joints=joints)


def save_manifest(tmp_path, entries):
    path = tmp_path / "manifest.jsonl"
    write_manifest(DatasetManifest(entries=entries, path=path), path)
    return path


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
