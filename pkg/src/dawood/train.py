"""Breadth-first forest training with a two-pass step per tree level.

Each level:

1. pass 1 streams every pixel (both domains) to its frontier node and keeps
   a uniform reservoir of ``samples`` synthetic and ``samples`` real pixels
   per node;
2. stage 1 scores ``candidates x thresholds`` weak classifiers on each
   reservoir and keeps ``finalist_shapes x finalist_thresholds`` finalists
   (ranked by entropy gain unless ``screen_entropy`` is 0);
3. pass 2 evaluates the finalists on all pixels of the node and stage 2
   stores the best one under the mixed objective if its gain is positive, otherwise the node becomes
   a leaf.

Real pixels only contribute spatial-bin histograms.  With ``alpha == 1``
they cannot change any gain, so the target domain is not loaded at all.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numba
import numpy as np

from . import kernels
from .config import RunConfig
from .data_model import (BACKGROUND, N_LABELS, N_PARTS, DataError, DatasetManifest,
                         pixel_grid, spatial_bins)
from .features import compute_channels
from .infer import prior_cells
from .model import LEAF, SPLIT, Forest, LocationPrior, Tree
from .stats import RoutingError, _entropy, _fitness, chi2, clogc_table, entropy, kl

log = logging.getLogger(__name__)

STAGE1_BATCH = 32
OBJECTIVES = {"mixed": kernels.OBJ_MIXED, "entropy": kernels.OBJ_ENTROPY}


def set_workers(n: int) -> int:
    """Cap numba's thread count; returns the number actually used."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@dataclass
class Counters:
    """Instrumentation of what training touched."""
    source_images: int = 0
    target_images: int = 0
    source_evals: int = 0
    target_evals: int = 0
    scored_pairs: int = 0
    diag_target_images: int = 0
    diag_target_evals: int = 0


@dataclass
class PixelSet:
    """Flat pixel table of one domain plus its bank of integral images."""
    img: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    label: np.ndarray      # -1 where unknown
    integ: np.ndarray      # (n_images, K, H + 1, W + 1)
    dims: np.ndarray       # (n_images, 2): h, w
    sqa: np.ndarray        # sqrt(bbox area) per image
    image_ids: list = field(default_factory=list)

    def __len__(self):
        return self.x.shape[0]

    @property
    def has_labels(self) -> bool:
        return len(self) > 0 and bool(np.all(self.label >= 0))


def build_pixel_set(manifest: DatasetManifest, domain: str, config: RunConfig,
                    with_labels: bool) -> PixelSet:
    """Load the images of ``domain`` and tabulate their strided in-box pixels.

    Labels are read when ``with_labels`` is set and every entry has a label
    map; otherwise they stay -1.
    """
    entries = manifest.of_domain(domain)
    if not entries:
        raise DataError(f"manifest has no {domain} entries")
    with_labels = with_labels and all(e.label_path is not None for _, e in entries)
    chans, cols = [], {k: [] for k in ("img", "x", "y", "z", "label")}
    for slot, (image_id, entry) in enumerate(entries):
        ch = compute_channels(entry.load_image(), entry.bbox, config.orientations, image_id)
        chans.append(ch)
        xs, ys = pixel_grid(entry.bbox, config.stride)
        cols["img"].append(np.full(xs.shape, slot, np.int64))
        cols["x"].append(xs.astype(np.int64))
        cols["y"].append(ys.astype(np.int64))
        cols["z"].append(spatial_bins(xs, ys, entry.bbox, config.grid))
        if with_labels:
            cols["label"].append(entry.load_labels()[ys, xs].astype(np.int64))
        else:
            cols["label"].append(np.full(xs.shape, -1, np.int64))
    H = max(c.shape[0] for c in chans)
    W = max(c.shape[1] for c in chans)
    integ = np.zeros((len(chans), config.orientations, H + 1, W + 1))
    for i, c in enumerate(chans):
        h, w = c.shape
        integ[i, :, :h + 1, :w + 1] = c.integrals
    return PixelSet(**{k: np.concatenate(v) for k, v in cols.items()}, integ=integ,
                    dims=np.array([c.shape for c in chans], np.int64),
                    sqa=np.array([c.sqrt_area for c in chans]),
                    image_ids=[i for i, _ in entries])


def _empty_set(like: PixelSet) -> PixelSet:
    z = np.zeros(0, np.int64)
    return PixelSet(z, z, z, z, z, np.zeros((1,) + like.integ.shape[1:]),
                    np.ones((1, 2), np.int64), np.ones(1))


# ---------------------------------------------------------------- primitives

def reservoir_sample(stream: Iterable, S: int, seed=0) -> list:
    """Uniform sample of at most S items from a stream in one pass (Algorithm R)."""
    if S < 1:
        raise ValueError("S must be >= 1")
    rng = np.random.default_rng(seed)
    res = []
    for count, item in enumerate(stream, start=1):
        if count <= S:
            res.append(item)
        else:
            j = int(rng.integers(count))
            if j < S:
                res[j] = item
    return res


def propose_candidates(rng_seed, C: int, rho: float, K: int) -> np.ndarray:
    """C random weak-classifier shapes as rows (u1x, u1y, v1x, v1y, th1, u2x, ..., th2).

    Rectangle corners are uniform in [-rho, rho]^2, sorted so u < v.
    """
    if C < 1:
        raise ValueError("C must be >= 1")
    rng = np.random.default_rng(rng_seed)
    corners = rng.uniform(-rho, rho, size=(C, 2, 2, 2))  # shape, rect, corner, xy
    u = corners.min(axis=2)
    v = corners.max(axis=2)
    theta = rng.integers(0, K, size=(C, 2))
    out = np.empty((C, 10))
    for r in range(2):
        out[:, 5 * r:5 * r + 2] = u[:, r]
        out[:, 5 * r + 2:5 * r + 4] = v[:, r]
        out[:, 5 * r + 4] = theta[:, r]
    return out


def propose_thresholds(ratios, T: int) -> np.ndarray:
    """T evenly spaced empirical quantiles (levels k / (T + 1)) of ``ratios``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    vals = np.sort(np.asarray(ratios, dtype=np.float64))
    if vals.size == 0:
        raise ValueError("no ratios to threshold")
    out = np.empty(T)
    kernels.quantile_thresholds(vals, vals.size, T, out)
    return out


def _node_hists(node_of, labels, z, n_nodes, B, with_labels=True):
    sp = np.bincount(node_of * B + z, minlength=n_nodes * B).reshape(n_nodes, B)
    if not with_labels:
        return None, sp
    lab = np.bincount(node_of * N_LABELS + labels,
                      minlength=n_nodes * N_LABELS).reshape(n_nodes, N_LABELS)
    return lab, sp


def _csr(slot_of, n_slots):
    idx = np.flatnonzero(slot_of >= 0)
    order = idx[np.argsort(slot_of[idx], kind="stable")]
    ptr = np.zeros(n_slots + 1, np.int64)
    np.cumsum(np.bincount(slot_of[idx], minlength=n_slots), out=ptr[1:])
    return ptr, order


def _stage1_call(slots, res_s, n_s, res_r, n_r, syn, real, cands, config, alpha,
                 objective, table):
    nb = len(slots)
    F = config.finalist_shapes * config.finalist_thresholds
    # the reservoirs are too small for a stable chi2 over G*G bins, so by
    # default the screen ranks on label entropy and stage 2 applies alpha
    if config.screen_entropy:
        alpha = 1.0
    out_params = np.zeros((nb, F, 11))
    out_gain = np.full((nb, F), -np.inf)
    out_count = np.zeros(nb, np.int64)
    out_scored = np.zeros(nb, np.int64)
    kernels.stage1(np.asarray(slots, np.int64), res_s, n_s, res_r, n_r,
                   syn.img, syn.x, syn.y, syn.label, syn.z,
                   real.img, real.x, real.y, real.z,
                   syn.integ, syn.dims, syn.sqa, real.integ, real.dims, real.sqa,
                   cands, config.thresholds, config.finalist_shapes,
                   config.finalist_thresholds, float(alpha), objective, config.n_bins,
                   table, out_params, out_gain, out_count, out_scored)
    return out_params, out_gain, out_count, out_scored


def _stage2_call(slots, fin, n_fin, syn_ptr, syn_order, real_ptr, real_order, syn, real,
                 p_lab, p_syn, p_real, config, alpha, objective, table):
    out = np.empty(fin.shape[:2])
    kernels.stage2(np.asarray(slots, np.int64), fin, n_fin, syn_ptr, syn_order,
                   real_ptr, real_order, syn.img, syn.x, syn.y, syn.label, syn.z,
                   real.img, real.x, real.y, real.z,
                   syn.integ, syn.dims, syn.sqa, real.integ, real.dims, real.sqa,
                   p_lab, p_syn, p_real, float(alpha), objective, config.n_bins, table, out)
    return out


@dataclass
class FrontierSample:
    """Reservoir contents of one frontier node (indices into the pixel sets)."""
    syn: np.ndarray
    real: np.ndarray


def select_stage1(frontier: FrontierSample, syn: PixelSet, real: Optional[PixelSet],
                  candidates: np.ndarray, alpha: float, config: RunConfig,
                  objective: str = "mixed"):
    """Rank all (shape, threshold) pairs on one frontier sample.

    Returns (finalist parameter rows, their sample gains, number of scored pairs).
    """
    real = real if real is not None else _empty_set(syn)
    ns, nr = len(frontier.syn), len(frontier.real)
    res_s = np.asarray(frontier.syn, np.int64).reshape(1, ns)
    res_r = np.full((1, max(nr, 1)), -1, np.int64)
    res_r[0, :nr] = frontier.real
    table = clogc_table(max(ns, 1))
    p, g, cnt, scored = _stage1_call([0], res_s, np.array([ns]), res_r, np.array([nr]),
                                     syn, real, candidates[None], config, alpha,
                                     OBJECTIVES[objective], table)
    return p[0, :cnt[0]], g[0, :cnt[0]], int(scored[0])


def select_stage2(finalists: np.ndarray, syn: PixelSet, syn_idx, real: Optional[PixelSet],
                  real_idx, alpha: float, config: RunConfig, objective: str = "mixed"):
    """Full-data gains of the finalists at one node; returns (best index or
    None when no gain is positive, gains)."""
    real = real if real is not None else _empty_set(syn)
    syn_idx = np.asarray(syn_idx, np.int64)
    real_idx = np.asarray(real_idx, np.int64)
    B = config.n_bins
    p_lab = np.bincount(syn.label[syn_idx], minlength=N_LABELS)[None]
    p_syn = np.bincount(syn.z[syn_idx], minlength=B)[None]
    p_real = np.bincount(real.z[real_idx], minlength=B)[None]
    table = clogc_table(max(len(syn_idx), 1))
    fin = np.ascontiguousarray(finalists, dtype=np.float64)[None]
    gains = _stage2_call([0], fin, np.array([fin.shape[1]]),
                         np.array([0, len(syn_idx)]), syn_idx,
                         np.array([0, len(real_idx)]), real_idx, syn, real,
                         p_lab, p_syn, p_real, config, alpha, OBJECTIVES[objective],
                         table)[0]
    best = int(np.argmax(gains))
    return (best if gains[best] > 0 else None), gains


# ------------------------------------------------------------------ training

class _Growing:
    def __init__(self):
        self.kind = [LEAF]
        self.left = [-1]
        self.right = [-1]
        self.params = [np.zeros(11)]
        self.depth = [0]

    def __len__(self):
        return len(self.kind)

    def split(self, node, prm):
        d = self.depth[node] + 1
        a = len(self.kind)
        self.kind[node] = SPLIT
        self.left[node], self.right[node] = a, a + 1
        self.params[node] = np.asarray(prm, dtype=np.float64)
        for _ in range(2):
            self.kind.append(LEAF)
            self.left.append(-1)
            self.right.append(-1)
            self.params.append(np.zeros(11))
            self.depth.append(d)
        return a, a + 1

    def arrays(self):
        return (np.array(self.kind, np.int8), np.array(self.left, np.int64),
                np.array(self.right, np.int64), np.array(self.params),
                np.array(self.depth, np.int64))


@dataclass
class LevelResult:
    level: int
    frontier: int
    eligible: int
    split: int
    seconds: float


class TreeGrower:
    """Grows one tree breadth first; each call of ``train_level`` completes a level."""

    def __init__(self, syn: PixelSet, real: Optional[PixelSet], alpha: float,
                 config: RunConfig, tree_index: int, counters: Optional[Counters] = None,
                 objective: str = "mixed"):
        self.syn = syn
        self.use_real = real is not None and len(real) > 0
        self.real = real if self.use_real else _empty_set(syn)
        self.alpha = float(alpha)
        self.config = config
        self.tree_index = tree_index
        self.counters = counters if counters is not None else Counters()
        self.obj = OBJECTIVES[objective]
        self.table = clogc_table(max(len(syn), 1))
        self.tree = _Growing()
        self.syn_node = np.zeros(len(syn), np.int64)
        self.real_node = np.zeros(len(self.real), np.int64)
        self.frontier = [0]

    def _rng(self, level, *tail):
        return np.random.default_rng([self.config.seed, self.tree_index, level, *tail])

    def train_level(self, level: int) -> LevelResult:
        """Two passes over all pixels: reservoirs and stage 1, then full-data
        stage 2; splits the frontier nodes whose best finalist has positive gain."""
        cfg, syn, real, tree, counters = self.config, self.syn, self.real, self.tree, self.counters
        if level >= cfg.depth:
            raise ValueError("level must be < depth")
        B, S = cfg.n_bins, cfg.samples
        F = cfg.finalist_shapes * cfg.finalist_thresholds
        t0 = time.perf_counter()
        n_nodes = len(tree)
        lab, ssp = _node_hists(self.syn_node, syn.label, syn.z, n_nodes, B)
        _, rsp = _node_hists(self.real_node, None, real.z, n_nodes, B, with_labels=False)
        eligible = []
        for n in self.frontier:
            if lab[n].sum() < cfg.min_syn:
                continue
            f = _entropy(lab[n]) if self.obj == kernels.OBJ_ENTROPY else \
                _fitness(lab[n], ssp[n], rsp[n], self.alpha)
            if f > 0:
                eligible.append(n)
        ns = len(eligible)
        if ns == 0:
            result = LevelResult(level, len(self.frontier), 0, 0, time.perf_counter() - t0)
            self.frontier = []
            return result
        slot = np.full(n_nodes, -1, np.int64)
        slot[eligible] = np.arange(ns)
        syn_slot = slot[self.syn_node]
        real_slot = slot[self.real_node]

        # pass 1: per-node reservoirs
        res_s, seen_s = kernels.reservoir_fill(syn_slot, self._rng(level, 0).random(len(syn)),
                                               ns, S)
        if self.use_real:
            res_r, seen_r = kernels.reservoir_fill(
                real_slot, self._rng(level, 1).random(len(real)), ns, S)
        else:
            res_r, seen_r = np.full((ns, 1), -1, np.int64), np.zeros(ns, np.int64)
        n_s = np.minimum(seen_s, S)
        n_r = np.minimum(seen_r, S)

        # stage 1 on the reservoirs
        fin = np.zeros((ns, F, 11))
        n_fin = np.zeros(ns, np.int64)
        for b0 in range(0, ns, STAGE1_BATCH):
            batch = list(range(b0, min(b0 + STAGE1_BATCH, ns)))
            cands = np.stack([
                propose_candidates([cfg.seed, self.tree_index, level, eligible[s], 2],
                                   cfg.candidates, cfg.radius, cfg.orientations)
                for s in batch])
            p, _, cnt, scored = _stage1_call(batch, res_s, n_s, res_r, n_r, syn, real,
                                             cands, cfg, self.alpha, self.obj, self.table)
            fin[b0:b0 + len(batch)] = p
            n_fin[b0:b0 + len(batch)] = cnt
            counters.scored_pairs += int(scored.sum())
        counters.source_evals += int(n_s.sum()) * cfg.candidates
        counters.target_evals += int(n_r.sum()) * cfg.candidates

        # pass 2 over all pixels of the eligible nodes
        syn_ptr, syn_order = _csr(syn_slot, ns)
        real_ptr, real_order = _csr(real_slot, ns)
        el = np.array(eligible)
        gains = _stage2_call(np.arange(ns), fin, n_fin, syn_ptr, syn_order, real_ptr,
                             real_order, syn, real, lab[el], ssp[el], rsp[el], cfg,
                             self.alpha, self.obj, self.table)
        counters.source_evals += int(np.sum(np.diff(syn_ptr) * n_fin))
        counters.target_evals += int(np.sum(np.diff(real_ptr) * n_fin))

        # stage 2: keep the best finalist if it helps
        new_frontier = []
        split_nodes = []
        for s, node in enumerate(eligible):
            best = int(np.argmax(gains[s]))
            if gains[s, best] > 0:
                new_frontier.extend(tree.split(node, fin[s, best]))
                split_nodes.append(node)
        if split_nodes:
            kind, left, right, params, _ = tree.arrays()
            is_new = np.zeros(len(tree), np.bool_)
            is_new[split_nodes] = True
            counters.source_evals += int(kernels.route(
                self.syn_node, syn.img, syn.x, syn.y, syn.integ, syn.dims, syn.sqa,
                params, left, right, is_new))
            if self.use_real:
                counters.target_evals += int(kernels.route(
                    self.real_node, real.img, real.x, real.y, real.integ, real.dims,
                    real.sqa, params, left, right, is_new))
            self._check_conservation(split_nodes, lab, ssp, rsp, left, right)
        result = LevelResult(level, len(self.frontier), ns, len(split_nodes),
                             time.perf_counter() - t0)
        log.info("tree %d level %d: %d frontier, %d eligible, %d split (%.1fs)",
                 self.tree_index, level, result.frontier, ns, result.split, result.seconds)
        self.frontier = new_frontier
        return result

    def _check_conservation(self, nodes, lab, ssp, rsp, left, right):
        n = len(self.tree)
        B = self.config.n_bins
        c_lab, c_syn = _node_hists(self.syn_node, self.syn.label, self.syn.z, n, B)
        _, c_real = _node_hists(self.real_node, None, self.real.z, n, B, with_labels=False)
        for node in nodes:
            l, r = left[node], right[node]
            if not (np.array_equal(c_lab[l] + c_lab[r], lab[node])
                    and np.array_equal(c_syn[l] + c_syn[r], ssp[node])
                    and np.array_equal(c_real[l] + c_real[r], rsp[node])):
                raise RoutingError(f"pixel counts not conserved at node {node}")

    def finish(self) -> Tree:
        """Turn every remaining leaf into a smoothed label distribution."""
        kind, left, right, params, depth = self.tree.arrays()
        n_nodes = len(self.tree)
        lab = np.bincount(self.syn_node * N_LABELS + self.syn.label,
                          minlength=n_nodes * N_LABELS).reshape(n_nodes, N_LABELS)
        n_syn = lab.sum(axis=1)
        post = np.zeros((n_nodes, N_LABELS))
        leaf = kind == LEAF
        post[leaf] = (lab[leaf] + 1.0) / (n_syn[leaf, None] + N_LABELS)
        out = Tree(kind, left, right, params, post, depth, np.where(leaf, n_syn, 0))
        out.validate()
        return out


def grow_tree(syn: PixelSet, real: Optional[PixelSet], alpha: float, config: RunConfig,
              tree_index: int, counters: Optional[Counters] = None,
              objective: str = "mixed") -> Tree:
    grower = TreeGrower(syn, real, alpha, config, tree_index, counters, objective)
    for level in range(config.depth):
        if not grower.frontier:
            break
        grower.train_level(level)
    return grower.finish()


# --------------------------------------------------------------- diagnostics

def _paths(tree: Tree, ps: PixelSet, depth: int):
    path = np.zeros((len(ps), depth + 1), np.int64)
    evals = kernels.descend(ps.img, ps.x, ps.y, ps.integ, ps.dims, ps.sqa,
                            tree.kind, np.ascontiguousarray(tree.params), tree.left,
                            tree.right, np.zeros(len(ps), np.int64), depth, path)
    return path, int(evals)


def tree_diagnostics(tree: Tree, syn: PixelSet, real: Optional[PixelSet], alpha: float,
                     tree_index: int, config: RunConfig,
                     counters: Optional[Counters] = None) -> list[dict]:
    """Per-level weighted statistics of the tree truncated at each depth.

    Row ``level`` describes the partition into nodes at depth ``level`` (and
    shallower leaves).  Entropy, chi2 and KL are weighted by synthetic counts;
    ``target_err`` is the real-count-weighted label entropy of the target
    pixels, or -1 when target labels are unavailable.
    """
    D, B = config.depth, config.n_bins
    n_nodes = len(tree)
    syn_path, _ = _paths(tree, syn, D)
    real_ok = real is not None and len(real) > 0
    if real_ok:
        real_path, evals = _paths(tree, real, D)
        if counters is not None:
            counters.diag_target_evals += evals
    rows = []
    for level in range(D + 1):
        lab, ssp = _node_hists(syn_path[:, level], syn.label, syn.z, n_nodes, B)
        if real_ok:
            rl = real.label if real.has_labels else None
            rlab, rsp = _node_hists(real_path[:, level], rl, real.z, n_nodes, B,
                                    with_labels=rl is not None)
        else:
            rlab, rsp = None, np.zeros_like(ssp)
        m = lab.sum(axis=1)
        k = rsp.sum(axis=1)
        e = c2 = d_kl = t_err = 0.0
        for n in np.flatnonzero(m):
            w = m[n] / m.sum()
            e += w * entropy(lab[n])
            c2 += w * chi2(ssp[n], rsp[n])
            d_kl += w * kl(ssp[n], rsp[n])
        if rlab is not None:
            for n in np.flatnonzero(k):
                t_err += k[n] / k.sum() * entropy(rlab[n])
        else:
            t_err = -1.0
        rows.append({"level": level, "tree": tree_index, "alpha": float(alpha),
                     "entropy": float(e), "chi2": float(c2), "kl": float(d_kl),
                     "target_err": float(t_err)})
    return rows


# -------------------------------------------------------------------- priors

def estimate_priors(manifest: DatasetManifest, P: int) -> tuple[np.ndarray, LocationPrior]:
    """Mean labelled-area fraction per part and per-part location grids, from
    the source label maps."""
    fractions = np.zeros(N_PARTS)
    counts = np.zeros((N_PARTS, P, P))
    entries = manifest.of_domain("source")
    for _, e in entries:
        b = e.bbox
        xs, ys = pixel_grid(b)
        lab = e.load_labels()[ys, xs]
        cy, cx = prior_cells(xs, ys, b, P)
        part = lab < BACKGROUND
        np.add.at(counts, (lab[part], cy[part], cx[part]), 1.0)
        fractions += np.bincount(lab[part], minlength=N_PARTS)[:N_PARTS] / b.area
    fractions /= max(len(entries), 1)
    grid = counts / np.maximum(counts.sum(axis=(1, 2), keepdims=True), 1.0) + 1e-3
    grid /= grid.sum(axis=(1, 2), keepdims=True)
    # parts never seen still need a positive fraction
    fractions = np.maximum(fractions, 1e-6)
    return fractions, LocationPrior(grid, smoothing=1e-3)


# ------------------------------------------------------------------- forests

def train_forest(manifest: DatasetManifest, alpha: float, config: RunConfig = RunConfig(),
                 diagnostics: bool = True, objective: str = "mixed") -> Forest:
    """Train ``config.trees`` trees with per-tree seeds.

    ``objective="entropy"`` is the classical pure-entropy trainer, used as a
    reference for ``alpha == 1``.  Diagnostics are computed after training on
    the finished trees; target pixels they route are tallied separately from
    the training counters.
    """
    config = config.updated(alpha=float(alpha))
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {sorted(OBJECTIVES)}")
    if not manifest.of_domain("source"):
        raise DataError("training needs at least one source entry")
    needs_real = objective == "mixed" and alpha < 1.0
    if (needs_real or diagnostics) and not manifest.of_domain("target"):
        raise DataError("training needs at least one target entry")
    set_workers(config.workers)
    counters = Counters()
    syn = build_pixel_set(manifest, "source", config, with_labels=True)
    counters.source_images = len(syn.image_ids)
    real = None
    if needs_real:
        real = build_pixel_set(manifest, "target", config, with_labels=False)
        counters.target_images = len(real.image_ids)

    trees = [grow_tree(syn, real, alpha, config, t, counters, objective)
             for t in range(config.trees)]

    summary = {}
    if diagnostics:
        diag_real = build_pixel_set(manifest, "target", config, with_labels=True)
        counters.diag_target_images = len(diag_real.image_ids)
        rows = []
        for t, tree in enumerate(trees):
            rows.extend(tree_diagnostics(tree, syn, diag_real, alpha, t, config, counters))
        final = [r for r in rows if r["level"] == config.depth]
        summary = {"e_leaf": float(np.mean([r["entropy"] for r in final])),
                   "root_entropy": float(entropy(np.bincount(syn.label, minlength=N_LABELS))),
                   "diagnostics": rows}
    phi, prior = estimate_priors(manifest, config.prior_grid)
    snapshot = config.snapshot()
    snapshot["objective"] = objective
    return Forest(trees=trees, config=snapshot, area_fractions=phi, prior=prior,
                  summary=summary, counters=counters)
