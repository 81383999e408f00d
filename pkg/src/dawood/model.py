"""Trees, forests and the DAWF model file.

Layout (little-endian throughout)::

    b"DAWF"  u32 version
    u32 n    n bytes of UTF-8 JSON: config snapshot (sorted keys)
    u32 n_trees
    per tree:  u32 n_nodes, then n_nodes records in breadth-first order
        u8 kind (0 leaf, 1 split)  u8 depth
        split: u32 left  u32 right
               f64 u1x u1y v1x v1y  i64 theta1  f64 u2x u2y v2x v2y  i64 theta2  f64 t
        leaf:  u32 n_syn  8 x f64 posterior
    u32 n_parts   n_parts x f64 area fractions
    u32 P         n_parts x P x P f64 location prior (row-major)
    u32 n    n bytes of UTF-8 JSON: training summary (e_leaf, diagnostics)
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data_model import N_LABELS, N_PARTS, DataError
from .features import WeakClassifier

MAGIC = b"DAWF"
VERSION = 1
LEAF, SPLIT = 0, 1


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, children follow breadth-first."""
    kind: np.ndarray       # int8
    left: np.ndarray       # int64, -1 at leaves
    right: np.ndarray
    params: np.ndarray     # (n, 11) weak-classifier parameters incl. threshold
    posterior: np.ndarray  # (n, 8), zero at split nodes
    depth: np.ndarray      # int64
    n_syn: np.ndarray      # synthetic training pixels that reached the leaf

    def __len__(self):
        return self.kind.shape[0]

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.kind == LEAF)

    def weak_classifier(self, node: int) -> WeakClassifier:
        return WeakClassifier.from_params(self.params[node])

    def validate(self) -> None:
        n = len(self)
        for i in np.flatnonzero(self.kind == SPLIT):
            for c in (self.left[i], self.right[i]):
                if not (i < c < n) or self.depth[c] != self.depth[i] + 1:
                    raise ValueError(f"node {i} has invalid child {c}")
        post = self.posterior[self.kind == LEAF]
        if np.any(post < 0) or np.any(np.abs(post.sum(axis=1) - 1) > 1e-9):
            raise ValueError("leaf posteriors must be distributions")


@dataclass
class LocationPrior:
    """Per-part distribution over a P x P grid on normalised box coordinates."""
    grid: np.ndarray  # (7, P, P)
    smoothing: float = 1e-3

    @property
    def P(self) -> int:
        return self.grid.shape[1]


@dataclass
class Forest:
    trees: list[Tree]
    config: dict
    area_fractions: np.ndarray  # (7,)
    prior: LocationPrior
    summary: dict = field(default_factory=dict)
    counters: Optional[object] = field(default=None, compare=False, repr=False)

    @property
    def alpha(self) -> float:
        return float(self.config["alpha"])

    def flat(self):
        """Concatenated node arrays with per-tree root offsets, for kernels."""
        offs = np.cumsum([0] + [len(t) for t in self.trees])
        shift = lambda a, o: np.where(a >= 0, a + o, -1)
        return (np.concatenate([t.kind for t in self.trees]).astype(np.int8),
                np.ascontiguousarray(np.concatenate([t.params for t in self.trees])),
                np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offs)]),
                np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offs)]),
                np.ascontiguousarray(np.concatenate([t.posterior for t in self.trees])),
                offs[:-1].astype(np.int64))

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        w = buf.write
        w(MAGIC)
        w(struct.pack("<I", VERSION))
        _write_json(buf, self.config)
        w(struct.pack("<I", len(self.trees)))
        for tree in self.trees:
            w(tree_bytes(tree))
        w(struct.pack("<I", N_PARTS))
        w(np.asarray(self.area_fractions, "<f8").tobytes())
        w(struct.pack("<I", self.prior.P))
        w(np.asarray(self.prior.grid, "<f8").tobytes())
        _write_json(buf, self.summary)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Forest":
        r = _Reader(data)
        if r.take(4) != MAGIC:
            raise DataError("not a DAWF model file")
        version = r.unpack("<I")
        if version != VERSION:
            raise DataError(f"unsupported model version {version}")
        config = r.json()
        trees = [_read_tree(r) for _ in range(r.unpack("<I"))]
        n_parts = r.unpack("<I")
        phi = r.array(n_parts)
        P = r.unpack("<I")
        grid = r.array(n_parts * P * P).reshape(n_parts, P, P)
        summary = r.json()
        return cls(trees=trees, config=config, area_fractions=phi,
                   prior=LocationPrior(grid), summary=summary)

    @classmethod
    def load(cls, path) -> "Forest":
        try:
            return cls.from_bytes(Path(path).read_bytes())
        except (struct.error, ValueError) as err:
            if isinstance(err, DataError):
                raise
            raise DataError(f"corrupt model file {path}: {err}")


def _write_json(buf, obj) -> None:
    data = json.dumps(obj, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def tree_bytes(tree: Tree) -> bytes:
    out = [struct.pack("<I", len(tree))]
    for i in range(len(tree)):
        if tree.kind[i] == SPLIT:
            p = tree.params[i]
            out.append(struct.pack("<BBII4dq4dqd", SPLIT, int(tree.depth[i]),
                                   int(tree.left[i]), int(tree.right[i]),
                                   *p[0:4], int(p[4]), *p[5:9], int(p[9]), p[10]))
        else:
            out.append(struct.pack("<BBI", LEAF, int(tree.depth[i]), int(tree.n_syn[i])))
            out.append(np.asarray(tree.posterior[i], "<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError("truncated model file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return vals[0] if len(vals) == 1 else vals

    def array(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), "<f8").astype(np.float64)

    def json(self):
        return json.loads(self.take(self.unpack("<I")).decode("utf-8"))


def _read_tree(r: _Reader) -> Tree:
    n = r.unpack("<I")
    kind = np.zeros(n, np.int8)
    left = np.full(n, -1, np.int64)
    right = np.full(n, -1, np.int64)
    params = np.zeros((n, 11))
    post = np.zeros((n, N_LABELS))
    depth = np.zeros(n, np.int64)
    n_syn = np.zeros(n, np.int64)
    for i in range(n):
        kind[i], depth[i] = r.unpack("<BB")
        if kind[i] == SPLIT:
            rec = r.unpack("<II4dq4dqd")
            left[i], right[i] = rec[0], rec[1]
            params[i] = rec[2:]
        elif kind[i] == LEAF:
            n_syn[i] = r.unpack("<I")
            post[i] = r.array(N_LABELS)
        else:
            raise DataError(f"unknown node kind {kind[i]}")
    tree = Tree(kind, left, right, params, post, depth, n_syn)
    tree.validate()
    return tree
