"""Procedural two-domain walking-figure datasets.

A side-view 2D kinematic chain (torso, head, two arms, two legs) is posed by
a cyclic gait and drawn as textured capsules, far side first.  Every figure
pixel within Chebyshev distance 0.1*sqrt(A) of a joint gets that joint's
part label; everything else is background.  Two style presets give the
source ("domA") and target ("domB") appearance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .data_model import (BACKGROUND, BoundingBox, DatasetManifest, ManifestEntry,
                         PartLabel, load_manifest, write_manifest)

CANVAS = (64, 96)  # width, height
LABEL_RADIUS = 0.1  # of sqrt(bbox area)
BBOX_MARGIN = 0.025  # per side, of the tight box size
FAR_SIDE_OFFSET = (-2.0, -1.0)
FAR_SIDE_SHADE = 0.7

# segment lengths as fractions of figure height
THIGH, SHIN = 0.24, 0.24
TORSO = 0.29
NECK_TO_HEAD = 0.085
SHOULDER_DROP = 0.035
UPPER_ARM, FOREARM = 0.16, 0.15

JOINT_PARTS = {
    "head": PartLabel.HEAD,
    "l_shoulder": PartLabel.SHOULDER, "r_shoulder": PartLabel.SHOULDER,
    "l_elbow": PartLabel.ELBOW, "r_elbow": PartLabel.ELBOW,
    "l_hand": PartLabel.HAND, "r_hand": PartLabel.HAND,
    "l_hip": PartLabel.HIP, "r_hip": PartLabel.HIP,
    "l_knee": PartLabel.KNEE, "r_knee": PartLabel.KNEE,
    "l_foot": PartLabel.FOOT, "r_foot": PartLabel.FOOT,
}


@dataclass(frozen=True)
class Texture:
    kind: str  # "flat" | "stripes" | "noise"
    color: tuple[int, int, int]
    color2: tuple[int, int, int] = (0, 0, 0)
    angle: float = 0.0  # stripe normal, radians
    period: float = 4.0
    amplitude: float = 0.0  # additive noise std, any kind

    def paint(self, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((height, width, 3))
        out[:] = self.color
        if self.kind == "stripes":
            ys, xs = np.mgrid[0:height, 0:width]
            phase = (xs * math.cos(self.angle) + ys * math.sin(self.angle)) / self.period
            out[np.sin(2 * math.pi * phase) < 0] = self.color2
        elif self.kind != "flat" and self.kind != "noise":
            raise ValueError(f"unknown texture kind {self.kind!r}")
        if self.amplitude > 0:
            out += rng.normal(0.0, self.amplitude, size=(height, width, 1))
        return out


@dataclass(frozen=True)
class FigureStyle:
    name: str
    height: float  # figure height, pixels
    limb_widths: dict = field(default_factory=dict)  # fractions of figure height
    textures: dict = field(default_factory=dict)  # region -> Texture


STYLES = {
    "domA": FigureStyle(
        name="domA", height=76.0,
        limb_widths={"torso": 0.13, "upper_arm": 0.05, "forearm": 0.045,
                     "thigh": 0.075, "shin": 0.06, "head": 0.065},
        textures={
            "torso": Texture("stripes", (200, 30, 30), (235, 235, 235), math.pi / 2, 4.0),
            "arm": Texture("flat", (225, 180, 150)),
            "thigh": Texture("flat", (240, 240, 240)),
            "shin": Texture("stripes", (200, 30, 30), (235, 235, 235), math.pi / 2, 3.0),
            "head": Texture("flat", (225, 180, 150)),
            "background": Texture("noise", (60, 140, 60), amplitude=20.0),
        }),
    "domB": FigureStyle(
        name="domB", height=70.0,
        limb_widths={"torso": 0.16, "upper_arm": 0.06, "forearm": 0.055,
                     "thigh": 0.085, "shin": 0.07, "head": 0.07},
        textures={
            "torso": Texture("stripes", (185, 45, 50), (225, 225, 215), math.pi / 2, 4.0),
            "arm": Texture("flat", (210, 165, 135)),
            "thigh": Texture("flat", (228, 228, 220)),
            "shin": Texture("stripes", (30, 60, 180), (230, 230, 230), math.pi / 2, 3.0),
            "head": Texture("flat", (210, 165, 135)),
            # horizontal bands echo the limb hoops of the source figure
            "background": Texture("stripes", (70, 145, 70), (55, 120, 55), math.pi / 2, 6.0,
                                  amplitude=6.0),
        }),
}


@dataclass(frozen=True)
class PoseSpec:
    """Joint angles (radians from the downward vertical, positive = forward)."""
    angles: dict
    root_dx: float = 0.0
    root_dy: float = 0.0

    def joint_points(self, scale: float, canvas=CANVAS) -> dict[str, tuple[float, float]]:
        """Forward kinematics; returns continuous (x, y) for all 13 joints."""
        return self.skeleton(scale, canvas)[0]

    def skeleton(self, scale: float, canvas=CANVAS):
        """Joint points plus the neck, the torso's upper end."""
        W, H = canvas
        a = self.angles
        root = (W / 2 + self.root_dx,
                H / 2 + (TORSO + NECK_TO_HEAD + 0.06 - THIGH - SHIN) * scale / 2 + self.root_dy)

        def step(p, angle, length):
            return (p[0] + length * scale * math.sin(angle),
                    p[1] + length * scale * math.cos(angle))

        neck = (root[0] + TORSO * scale * math.sin(a["torso"]),
                root[1] - TORSO * scale * math.cos(a["torso"]))
        shoulder = (neck[0] - SHOULDER_DROP * scale * math.sin(a["torso"]),
                    neck[1] + SHOULDER_DROP * scale * math.cos(a["torso"]))
        head = (neck[0] + NECK_TO_HEAD * scale * math.sin(a["head"]),
                neck[1] - NECK_TO_HEAD * scale * math.cos(a["head"]))
        pts = {"head": head}
        for side, off in (("l", (0.0, 0.0)), ("r", FAR_SIDE_OFFSET)):
            hip = (root[0] + off[0], root[1] + off[1])
            sh = (shoulder[0] + off[0], shoulder[1] + off[1])
            knee = step(hip, a[f"{side}_thigh"], THIGH)
            foot = step(knee, a[f"{side}_shin"], SHIN)
            elbow = step(sh, a[f"{side}_upper_arm"], UPPER_ARM)
            hand = step(elbow, a[f"{side}_forearm"], FOREARM)
            pts.update({f"{side}_hip": hip, f"{side}_knee": knee, f"{side}_foot": foot,
                        f"{side}_shoulder": sh, f"{side}_elbow": elbow,
                        f"{side}_hand": hand})
        return pts, neck


def sample_pose(rng_seed: int, gait_phase: float) -> PoseSpec:
    """Walking pose: per-seed gait amplitudes, limbs swung by phase.

    The right limbs run half a cycle behind the left ones, so phases 0 and
    0.5 mirror each other exactly.
    """
    rng = np.random.default_rng(rng_seed)
    leg_amp = rng.uniform(0.30, 0.55)
    knee_amp = rng.uniform(0.25, 0.70)
    arm_amp = rng.uniform(0.25, 0.55)
    elbow_base = rng.uniform(0.30, 0.60)
    elbow_amp = rng.uniform(0.0, 0.40)
    lean = rng.uniform(-0.08, 0.08)
    head = lean + rng.uniform(-0.10, 0.10)
    root_dx = rng.uniform(-3.0, 3.0)
    root_dy = rng.uniform(-2.0, 2.0)
    bob = rng.uniform(0.0, 1.5)

    def limbs(phase):
        w = 2 * math.pi * phase
        thigh = leg_amp * math.sin(w)
        shin = thigh - knee_amp * 0.5 * (1 + math.sin(w - 0.6))
        upper = -arm_amp * math.sin(w)
        fore = upper + elbow_base + elbow_amp * 0.5 * (1 - math.sin(w))
        return thigh, shin, upper, fore

    angles = {"torso": lean, "head": head}
    for side, phase in (("l", gait_phase), ("r", gait_phase + 0.5)):
        thigh, shin, upper, fore = limbs(phase)
        angles.update({f"{side}_thigh": thigh, f"{side}_shin": shin,
                       f"{side}_upper_arm": upper, f"{side}_forearm": fore})
    dy = root_dy - bob * math.cos(4 * math.pi * gait_phase)
    return PoseSpec(angles=angles, root_dx=root_dx, root_dy=dy)


def _capsule(a, b, radius, xs, ys):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0:
        t = np.zeros_like(xs, dtype=np.float64)
    else:
        t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / L2, 0.0, 1.0)
    return (xs - ax - t * dx) ** 2 + (ys - ay - t * dy) ** 2 <= radius * radius


def render(pose: PoseSpec, style: FigureStyle, canvas=CANVAS, rng_seed: int = 0) -> dict:
    """Draw a posed figure; returns image, label_map, bbox and joints."""
    W, H = canvas
    rng = np.random.default_rng(rng_seed)
    F = style.height
    wid = {k: max(v * F, 1.0) for k, v in style.limb_widths.items()}
    pts, neck = pose.skeleton(F, canvas)
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)

    image = style.textures["background"].paint(H, W, rng)
    figure = np.zeros((H, W), dtype=bool)
    tex = {k: t.paint(H, W, rng) for k, t in style.textures.items() if k != "background"}

    def draw(mask, region, shade=1.0):
        image[mask] = tex[region][mask] * shade
        figure[mask] = True

    def limb_set(side, shade):
        draw(_capsule(pts[f"{side}_hip"], pts[f"{side}_knee"], wid["thigh"] / 2, xs, ys),
             "thigh", shade)
        draw(_capsule(pts[f"{side}_knee"], pts[f"{side}_foot"], wid["shin"] / 2, xs, ys),
             "shin", shade)

    def arm_set(side, shade):
        draw(_capsule(pts[f"{side}_shoulder"], pts[f"{side}_elbow"], wid["upper_arm"] / 2,
                      xs, ys), "arm", shade)
        draw(_capsule(pts[f"{side}_elbow"], pts[f"{side}_hand"], wid["forearm"] / 2,
                      xs, ys), "arm", shade)

    arm_set("r", FAR_SIDE_SHADE)
    limb_set("r", FAR_SIDE_SHADE)
    draw(_capsule(pts["l_hip"], neck, wid["torso"] / 2, xs, ys), "torso")
    draw((xs - pts["head"][0]) ** 2 + (ys - pts["head"][1]) ** 2 <= wid["head"] ** 2, "head")
    limb_set("l", 1.0)
    arm_set("l", 1.0)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)

    fy, fx = np.nonzero(figure)
    x0, x1, y0, y1 = fx.min(), fx.max() + 1, fy.min(), fy.max() + 1
    mx = math.ceil(BBOX_MARGIN * (x1 - x0))
    my = math.ceil(BBOX_MARGIN * (y1 - y0))
    bbox = BoundingBox(int(x0 - mx), int(y0 - my), int(x1 - x0 + 2 * mx),
                       int(y1 - y0 + 2 * my)).clamp(W, H)

    names = list(JOINT_PARTS)
    jxy = np.array([[int(math.floor(pts[n][0] + 0.5)), int(math.floor(pts[n][1] + 0.5))]
                    for n in names])
    jpart = np.array([int(JOINT_PARTS[n]) for n in names])
    radius = LABEL_RADIUS * bbox.sqrt_area
    cheb = np.maximum(np.abs(xs[None] - jxy[:, 0, None, None]),
                      np.abs(ys[None] - jxy[:, 1, None, None]))
    eucl = np.hypot(xs[None] - jxy[:, 0, None, None], ys[None] - jxy[:, 1, None, None])
    # nearest joint first, lower part id on equal distance
    dist = np.where(cheb <= radius, eucl, np.inf)
    nearest = dist.min(axis=0)
    part = np.where(dist == nearest, jpart[:, None, None], BACKGROUND).min(axis=0)
    labels = np.where(np.isfinite(nearest) & figure, part, BACKGROUND)

    joints: dict[int, list[tuple[int, int]]] = {}
    for (x, y), p in zip(jxy.tolist(), jpart.tolist()):
        joints.setdefault(p, []).append((x, y))
    return {"image": image, "label_map": labels.astype(np.uint8), "bbox": bbox,
            "joints": dict(sorted(joints.items()))}


TRAIN_CYCLE = 16
TEST_CYCLE = 11


def _seeds(seed: int) -> tuple[int, int, int]:
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return int(a), int(b), int(c)


def generate(out_dir, n_source: int, n_target: int, n_test: int, seed: int = 0,
             canvas=CANVAS) -> DatasetManifest:
    """Write PNGs plus ``manifest.jsonl`` under ``out_dir`` and return the manifest.

    Source and target frames walk the same pose sequences (source in domA,
    target in domB); test frames use domB and unrelated sequences.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    train_base, test_base, noise_base = _seeds(seed)

    plan = []
    for i in range(n_source):
        plan.append(("source", "src", i, train_base + i // TRAIN_CYCLE,
                     (i % TRAIN_CYCLE) / TRAIN_CYCLE, "domA"))
    for i in range(n_target):
        plan.append(("target", "tgt", i, train_base + i // TRAIN_CYCLE,
                     (i % TRAIN_CYCLE) / TRAIN_CYCLE, "domB"))
    for i in range(n_test):
        plan.append(("test", "tst", i, test_base + i // TEST_CYCLE,
                     (i % TEST_CYCLE + 0.5) / TEST_CYCLE, "domB"))

    entries = []
    for k, (domain, prefix, i, pose_seed, phase, style) in enumerate(plan):
        pose = sample_pose(pose_seed, phase)
        r = render(pose, STYLES[style], canvas, rng_seed=noise_base + k)
        img_path = out / "images" / f"{prefix}_{i:04d}.png"
        lab_path = out / "labels" / f"{prefix}_{i:04d}.png"
        Image.fromarray(r["image"], "RGB").save(img_path)
        Image.fromarray(r["label_map"], "L").save(lab_path)
        entries.append(ManifestEntry(
            image_path=img_path, bbox=r["bbox"], domain=domain, label_path=lab_path,
            joints=r["joints"] if domain == "test" else None))
    path = out / "manifest.jsonl"
    write_manifest(DatasetManifest(entries=entries, path=path), path)
    return load_manifest(path)
