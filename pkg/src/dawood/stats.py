"""Histogram statistics and the split objective.

Node fitness mixes the normalised label entropy of the synthetic pixels with
the chi-squared distance between the synthetic and real spatial-bin
histograms::

    f(n) = alpha * E(h_l(syn)) + (1 - alpha) * chi2(h_s(syn), h_s(real))

and the gain of a split weights both children by their synthetic counts.

The ``_*`` kernels are compiled with numba and shared with the training
loops, so the values computed here are bit-identical to the ones used for
split selection.  Entropies use ``H = ln(m) - sum(c ln c) / m``, which lets
the hot loops read ``c ln c`` from a table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data_model import N_LABELS

LN8 = math.log(N_LABELS)
KL_SMOOTHING = 1e-3


class RoutingError(RuntimeError):
    """Pixel counts were not conserved across a split."""


@njit(cache=True)
def _clogc(c):
    return c * math.log(c)


@njit(cache=True)
def clogc_table(n):
    """``c * ln(c)`` for c = 0..n (0 at c = 0), for table-driven entropies."""
    out = np.zeros(n + 1)
    for c in range(1, n + 1):
        out[c] = _clogc(c)
    return out


@njit(cache=True)
def _entropy(counts):
    total = 0
    nonzero = 0
    s = 0.0
    for c in counts:
        if c > 0:
            total += c
            nonzero += 1
            s += _clogc(c)
    if nonzero <= 1:
        return 0.0
    return (math.log(total) - s / total) / LN8


@njit(cache=True)
def _entropy_t(counts, table):
    """:func:`_entropy` with ``c * ln(c)`` read from ``table``."""
    total = 0
    nonzero = 0
    s = 0.0
    for c in counts:
        if c > 0:
            total += c
            nonzero += 1
            s += table[c]
    if nonzero <= 1:
        return 0.0
    return (math.log(total) - s / total) / LN8


@njit(cache=True)
def _chi2_active(p, q, active, n_active):
    """Chi-squared distance visiting only the listed (ascending) bins.

    Bins outside ``active`` must be empty in both histograms; the result is
    then identical to the dense loop.
    """
    mp = 0
    mq = 0
    for j in range(n_active):
        i = active[j]
        mp += p[i]
        mq += q[i]
    if mp == 0 or mq == 0:
        return 1.0
    d = 0.0
    for j in range(n_active):
        i = active[j]
        if p[i] > 0 or q[i] > 0:
            a = p[i] / mp
            b = q[i] / mq
            d += (a - b) * (a - b) / (a + b)
    return 0.5 * d


@njit(cache=True)
def _chi2(p, q):
    return _chi2_active(p, q, np.arange(p.shape[0]), p.shape[0])


@njit(cache=True)
def _fitness_t(labels, syn_spatial, real_spatial, alpha, table, active, n_active):
    m = 0
    for c in labels:
        m += c
    if m == 0:
        return 0.0
    return (alpha * _entropy_t(labels, table)
            + (1.0 - alpha) * _chi2_active(syn_spatial, real_spatial, active, n_active))


@njit(cache=True)
def _fitness(labels, syn_spatial, real_spatial, alpha):
    m = 0
    for c in labels:
        m += c
    if m == 0:
        return 0.0
    return alpha * _entropy(labels) + (1.0 - alpha) * _chi2(syn_spatial, real_spatial)


@njit(cache=True)
def _gain_t(f_parent, p_lab, p_syn, p_real, l_lab, l_syn, l_real, alpha,
            r_lab, r_syn, r_real, table, active, n_active):
    """Split gain from the parent fitness and left-child histograms.

    The right child is the parent minus the left child, written into the
    ``r_*`` scratch buffers so the kernel never allocates.  Only bins in
    ``active`` (nonempty in the parent) are touched.
    """
    m = 0
    ml = 0
    for i in range(p_lab.shape[0]):
        m += p_lab[i]
        ml += l_lab[i]
        r_lab[i] = p_lab[i] - l_lab[i]
    if m == 0:
        return 0.0
    for j in range(n_active):
        i = active[j]
        r_syn[i] = p_syn[i] - l_syn[i]
        r_real[i] = p_real[i] - l_real[i]
    mr = m - ml
    return (f_parent
            - (ml / m) * _fitness_t(l_lab, l_syn, l_real, alpha, table, active, n_active)
            - (mr / m) * _fitness_t(r_lab, r_syn, r_real, alpha, table, active, n_active))


@njit(cache=True)
def _entropy_gain_t(e_parent, p_lab, l_lab, r_lab, table):
    """Classical entropy gain; the objective of the pure-entropy trainer."""
    m = 0
    ml = 0
    for i in range(p_lab.shape[0]):
        m += p_lab[i]
        ml += l_lab[i]
        r_lab[i] = p_lab[i] - l_lab[i]
    if m == 0:
        return 0.0
    mr = m - ml
    fl = _entropy_t(l_lab, table) if ml > 0 else 0.0
    fr = _entropy_t(r_lab, table) if mr > 0 else 0.0
    return e_parent - (ml / m) * fl - (mr / m) * fr


@njit(cache=True)
def _gain(p_lab, p_syn, p_real, l_lab, l_syn, l_real, alpha):
    m = 0
    for c in p_lab:
        m += c
    if m == 0:
        return 0.0
    table = clogc_table(m)
    active = np.empty(p_syn.shape[0], np.int64)
    n_active = 0
    for i in range(p_syn.shape[0]):
        if p_syn[i] > 0 or p_real[i] > 0:
            active[n_active] = i
            n_active += 1
    f_parent = _fitness_t(p_lab, p_syn, p_real, alpha, table, active, n_active)
    return _gain_t(f_parent, p_lab, p_syn, p_real, l_lab, l_syn, l_real, alpha,
                   np.empty_like(p_lab), np.empty_like(p_syn), np.empty_like(p_real),
                   table, active, n_active)


def _counts(h) -> np.ndarray:
    a = np.asarray(h, dtype=np.int64)
    if a.ndim != 1 or np.any(a < 0):
        raise ValueError("histogram must be a 1-d array of nonnegative counts")
    return a


def entropy(h) -> float:
    """Shannon entropy of a label histogram divided by ln(8); 0 when empty."""
    return float(_entropy(_counts(h)))


def chi2(p, q) -> float:
    """Symmetric chi-squared distance between two normalised histograms.

    Returns 1.0 (the maximum) when either histogram is empty.
    """
    p, q = _counts(p), _counts(q)
    if p.shape != q.shape:
        raise ValueError(f"histogram sizes differ: {p.shape[0]} vs {q.shape[0]}")
    return float(_chi2(p, q))


def kl(p, q) -> float:
    """KL(p || q) after adding 1e-3 to every bin; for diagnostics only."""
    p, q = _counts(p), _counts(q)
    if p.shape != q.shape:
        raise ValueError(f"histogram sizes differ: {p.shape[0]} vs {q.shape[0]}")
    ps = p + KL_SMOOTHING
    qs = q + KL_SMOOTHING
    ps /= ps.sum()
    qs /= qs.sum()
    return float(max(np.sum(ps * np.log(ps / qs)), 0.0))


@dataclass
class NodeStats:
    """Histograms of the synthetic and real pixels reaching one node."""
    syn_labels: np.ndarray
    syn_spatial: np.ndarray
    real_spatial: np.ndarray

    def __post_init__(self):
        self.syn_labels = _counts(self.syn_labels)
        self.syn_spatial = _counts(self.syn_spatial)
        self.real_spatial = _counts(self.real_spatial)
        if self.syn_labels.sum() != self.syn_spatial.sum():
            raise ValueError("label and spatial histograms disagree on the synthetic count")

    @classmethod
    def empty(cls, n_bins: int) -> "NodeStats":
        return cls(np.zeros(N_LABELS, np.int64), np.zeros(n_bins, np.int64),
                   np.zeros(n_bins, np.int64))

    @classmethod
    def from_samples(cls, labels, syn_bins, real_bins, n_bins: int) -> "NodeStats":
        return cls(np.bincount(np.asarray(labels, np.int64), minlength=N_LABELS),
                   np.bincount(np.asarray(syn_bins, np.int64), minlength=n_bins),
                   np.bincount(np.asarray(real_bins, np.int64), minlength=n_bins))

    @property
    def m(self) -> int:
        return int(self.syn_labels.sum())

    @property
    def k(self) -> int:
        return int(self.real_spatial.sum())

    def __add__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.syn_labels + other.syn_labels,
                         self.syn_spatial + other.syn_spatial,
                         self.real_spatial + other.real_spatial)

    def __sub__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.syn_labels - other.syn_labels,
                         self.syn_spatial - other.syn_spatial,
                         self.real_spatial - other.real_spatial)


def fitness(ns: NodeStats, alpha: float) -> float:
    return float(_fitness(ns.syn_labels, ns.syn_spatial, ns.real_spatial, float(alpha)))


def gain(parent: NodeStats, left: NodeStats, right: NodeStats, alpha: float) -> float:
    if left.m + right.m != parent.m or left.k + right.k != parent.k:
        raise RoutingError(
            f"children hold {left.m}+{right.m} synthetic / {left.k}+{right.k} real pixels, "
            f"parent holds {parent.m} / {parent.k}")
    if (np.any(left.syn_labels + right.syn_labels != parent.syn_labels)
            or np.any(left.syn_spatial + right.syn_spatial != parent.syn_spatial)
            or np.any(left.real_spatial + right.real_spatial != parent.real_spatial)):
        raise RoutingError("children histograms do not sum to the parent's")
    return float(_gain(parent.syn_labels, parent.syn_spatial, parent.real_spatial,
                       left.syn_labels, left.syn_spatial, left.real_spatial, float(alpha)))
