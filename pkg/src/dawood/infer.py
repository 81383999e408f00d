"""Forest posteriors, location-prior modulation and per-part pixel extraction."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .data_model import BACKGROUND, N_LABELS, N_PARTS, BoundingBox, pixel_grid
from .features import FeatureChannels
from .model import Forest, LocationPrior

__all__ = ["PosteriorMap", "LocationPrior", "PALETTE", "posterior", "modulate",
           "prior_only", "extract_pixels", "estimate_joints", "overlay", "dump_posterior",
           "prior_cells"]

# foot, knee, hip, shoulder, elbow, hand, head, background
PALETTE = np.array([
    (230, 25, 75), (245, 130, 48), (255, 225, 25), (60, 180, 75),
    (70, 240, 240), (0, 130, 200), (145, 30, 180), (128, 128, 128),
], np.uint8)


@dataclass
class PosteriorMap:
    """Per-pixel label distributions over a bounding box, shape (h, w, 8)."""
    probs: np.ndarray
    bbox: BoundingBox

    def check(self, tol: float = 1e-6) -> None:
        if np.any(self.probs < 0) or np.any(np.abs(self.probs.sum(axis=2) - 1) > tol):
            raise ValueError("posterior vectors must be distributions")


def prior_cells(xs, ys, bbox: BoundingBox, P: int):
    """Row and column of each pixel's cell in a P x P grid over the box."""
    cy = np.minimum(P * (np.asarray(ys) - bbox.y) // bbox.h, P - 1)
    cx = np.minimum(P * (np.asarray(xs) - bbox.x) // bbox.w, P - 1)
    return cy, cx


def posterior(forest: Forest, ch: FeatureChannels, bbox: BoundingBox,
              counters: dict | None = None) -> PosteriorMap:
    """Average of the trees' leaf distributions at every pixel of the box."""
    kind, prm, left, right, post, roots = forest.flat()
    xs, ys = pixel_grid(bbox)
    out = np.empty((xs.size, N_LABELS))
    h, w = ch.shape
    evals = kernels.forest_posterior(ch.integrals, h, w, ch.sqrt_area, xs.astype(np.int64),
                                     ys.astype(np.int64), kind, prm, left, right, post,
                                     roots, out)
    if counters is not None:
        counters["split_evals"] = counters.get("split_evals", 0) + int(evals)
    return PosteriorMap(out.reshape(bbox.h, bbox.w, N_LABELS), bbox)


def _prior_planes(prior: LocationPrior, bbox: BoundingBox) -> np.ndarray:
    xs, ys = pixel_grid(bbox)
    cy, cx = prior_cells(xs, ys, bbox, prior.P)
    planes = np.empty((xs.size, N_LABELS))
    planes[:, :N_PARTS] = prior.grid[:, cy, cx].T
    planes[:, BACKGROUND] = 1.0 / prior.P ** 2
    return planes.reshape(bbox.h, bbox.w, N_LABELS)


def modulate(pm: PosteriorMap, prior: LocationPrior) -> PosteriorMap:
    """Multiply each part's probability by its prior at the pixel's cell
    (background gets the uniform cell mass) and renormalise per pixel."""
    if np.any(prior.grid <= 0):
        raise ValueError("location prior must be strictly positive")
    q = pm.probs * _prior_planes(prior, pm.bbox)
    return PosteriorMap(q / q.sum(axis=2, keepdims=True), pm.bbox)


def prior_only(prior: LocationPrior, bbox: BoundingBox) -> PosteriorMap:
    """The location prior alone, normalised per pixel like a posterior."""
    q = _prior_planes(prior, bbox)
    return PosteriorMap(q / q.sum(axis=2, keepdims=True), bbox)


def extract_pixels(pm: PosteriorMap, area_fractions) -> list[np.ndarray]:
    """For each part, the N_p = max(1, round(phi_p * A)) most probable pixels.

    Parts are handled independently, so a pixel may be picked for several.
    Returns one (N_p, 2) array of (x, y) image coordinates per part; equal
    probabilities keep row-major order.
    """
    phi = np.asarray(area_fractions, dtype=np.float64)
    if np.any(phi <= 0):
        raise ValueError("area fractions must be positive")
    b = pm.bbox
    flat = pm.probs.reshape(-1, N_LABELS)
    out = []
    for p in range(N_PARTS):
        n = min(max(1, int(round(phi[p] * b.area))), flat.shape[0])
        idx = np.argsort(-flat[:, p], kind="stable")[:n]
        out.append(np.stack([b.x + idx % b.w, b.y + idx // b.w], axis=1))
    return out


def estimate_joints(extracted: list[np.ndarray]) -> np.ndarray:
    """Joint estimate per part: centroid of its extracted pixels, shape (7, 2)."""
    return np.array([e.mean(axis=0) for e in extracted])


def overlay(image: np.ndarray, extracted: list[np.ndarray], alpha: float = 0.6) -> np.ndarray:
    """Blend part colours over the image at the extracted pixels (later parts on top)."""
    out = image.astype(np.float64).copy()
    for p, pix in enumerate(extracted):
        xs, ys = pix[:, 0], pix[:, 1]
        out[ys, xs] = (1 - alpha) * image[ys, xs] + alpha * PALETTE[p]
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def save_overlay(path, image, extracted) -> None:
    Image.fromarray(overlay(image, extracted), "RGB").save(path)


def dump_posterior(path, pm: PosteriorMap) -> None:
    """Header u32 w, h, parts then one float32 plane per label, little-endian."""
    h, w, k = pm.probs.shape
    with open(Path(path), "wb") as fh:
        fh.write(struct.pack("<III", w, h, k))
        fh.write(np.ascontiguousarray(pm.probs.transpose(2, 0, 1), "<f4").tobytes())


def read_posterior(path) -> np.ndarray:
    data = Path(path).read_bytes()
    w, h, k = struct.unpack_from("<III", data)
    return np.frombuffer(data, "<f4", offset=12).reshape(k, h, w)
