"""Oriented-gradient channels, integral images and the HOG-ratio weak classifier.

Each of the K channels holds the gradient magnitude softly assigned to one
orientation bin.  A HOG bin is a rectangle plus an orientation; its response
is the channel sum over the rectangle, read from a summed-area table.  A weak
classifier compares the ratio of two bin responses with a threshold.

Rectangle corners are offsets from the classified pixel in units of
sqrt(bbox area), so the same classifier applies at any figure scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .data_model import BoundingBox, DataError

EPS = 1e-6
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FeatureChannels:
    image_id: int
    K: int
    channels: np.ndarray   # (K, H, W)
    integrals: np.ndarray  # (K, H + 1, W + 1)
    sqrt_area: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels.shape[1], self.channels.shape[2]


def luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image[..., :3] @ LUMA


def orientation_weights(theta: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear soft assignment of unsigned angles in [0, pi) to K bins.

    Bin k is centred on ``k * pi / K``; returns the lower bin index, the upper
    (wrapped) bin index and the weight of the upper bin.
    """
    pos = np.asarray(theta) * (K / math.pi)
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % K
    return lo, (lo + 1) % K, frac


def compute_channels(image: np.ndarray, bbox: BoundingBox, K: int = 9,
                     image_id: int = 0) -> FeatureChannels:
    if K < 2:
        raise ValueError("K must be >= 2")
    lum = luminance(image)
    H, W = lum.shape
    if H < 3 or W < 3:
        raise DataError(f"image is {W}x{H}; at least 3x3 is required")
    padded = np.pad(lum, 1, mode="edge")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), math.pi)
    lo, hi, frac = orientation_weights(theta, K)

    channels = np.zeros((K, H, W))
    rows, cols = np.indices((H, W))
    np.add.at(channels, (lo, rows, cols), (1.0 - frac) * mag)
    np.add.at(channels, (hi, rows, cols), frac * mag)

    integrals = np.zeros((K, H + 1, W + 1))
    integrals[:, 1:, 1:] = channels.cumsum(axis=1).cumsum(axis=2)
    return FeatureChannels(image_id=image_id, K=K, channels=channels,
                           integrals=integrals, sqrt_area=bbox.sqrt_area)


@njit(cache=True)
def _pixel_rect(px, py, ux, uy, vx, vy, s, h, w):
    """Offset rectangle -> clipped half-open pixel rectangle (x0, y0, x1, y1)."""
    x0 = min(max(int(math.floor(px + ux * s + 0.5)), 0), w)
    y0 = min(max(int(math.floor(py + uy * s + 0.5)), 0), h)
    x1 = min(max(int(math.floor(px + vx * s + 0.5)), 0), w)
    y1 = min(max(int(math.floor(py + vy * s + 0.5)), 0), h)
    return x0, y0, x1, y1


@njit(cache=True)
def _rect_sum(S, x0, y0, x1, y1):
    if x1 <= x0 or y1 <= y0:
        return 0.0
    return S[y1, x1] - S[y0, x1] - S[y1, x0] + S[y0, x0]


@njit(cache=True)
def _response(integ, px, py, ux, uy, vx, vy, theta, s, h, w):
    x0, y0, x1, y1 = _pixel_rect(px, py, ux, uy, vx, vy, s, h, w)
    return _rect_sum(integ[theta], x0, y0, x1, y1)


@njit(cache=True)
def _ratio(integ, px, py, prm, s, h, w):
    """Response ratio r1 / (r2 + EPS) for a parameter row
    (u1x, u1y, v1x, v1y, th1, u2x, u2y, v2x, v2y, th2[, t])."""
    r1 = _response(integ, px, py, prm[0], prm[1], prm[2], prm[3], int(prm[4]), s, h, w)
    r2 = _response(integ, px, py, prm[5], prm[6], prm[7], prm[8], int(prm[9]), s, h, w)
    return r1 / (r2 + EPS)


def pixel_rect(ch: FeatureChannels, px: int, py: int, rect) -> tuple[int, int, int, int]:
    """Pixel rectangle ``[x0, x1) x [y0, y1)`` queried for an offset rectangle."""
    h, w = ch.shape
    ux, uy, vx, vy = rect
    return _pixel_rect(px, py, float(ux), float(uy), float(vx), float(vy), ch.sqrt_area, h, w)


def bin_response(ch: FeatureChannels, px: int, py: int, rect, theta: int) -> float:
    """Accumulated channel ``theta`` over ``rect`` placed at (px, py)."""
    x0, y0, x1, y1 = pixel_rect(ch, px, py, rect)
    return float(_rect_sum(ch.integrals[theta], x0, y0, x1, y1))


class Side(IntEnum):
    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True)
class WeakClassifier:
    rect1: tuple[float, float, float, float]  # (ux, uy, vx, vy)
    theta1: int
    rect2: tuple[float, float, float, float]
    theta2: int
    t: float = 1.0

    def __post_init__(self):
        for ux, uy, vx, vy in (self.rect1, self.rect2):
            if not (ux < vx and uy < vy):
                raise ValueError(f"empty rectangle in {self}")
        # a zero threshold is a valid split: right iff r1 > 0
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"threshold must be finite and >= 0, got {self.t}")

    def params(self) -> np.ndarray:
        return np.array([*self.rect1, self.theta1, *self.rect2, self.theta2, self.t],
                        dtype=np.float64)

    @classmethod
    def from_params(cls, prm) -> "WeakClassifier":
        prm = [float(v) for v in prm]
        t = prm[10] if len(prm) > 10 else 1.0
        return cls(tuple(prm[0:4]), int(prm[4]), tuple(prm[5:9]), int(prm[9]), t)

    def with_threshold(self, t: float) -> "WeakClassifier":
        return WeakClassifier(self.rect1, self.theta1, self.rect2, self.theta2, float(t))


def response_ratio(wc: WeakClassifier, ch: FeatureChannels, px: int, py: int) -> float:
    h, w = ch.shape
    return float(_ratio(ch.integrals, px, py, wc.params(), ch.sqrt_area, h, w))


def evaluate(wc: WeakClassifier, ch: FeatureChannels, px: int, py: int) -> Side:
    """Route a pixel: RIGHT when the response ratio exceeds the threshold."""
    return Side.RIGHT if response_ratio(wc, ch, px, py) > wc.t else Side.LEFT
