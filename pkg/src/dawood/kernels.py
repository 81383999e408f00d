"""Compiled inner loops for training and inference.

Pixel sets are flat arrays (image index, x, y, label, spatial bin) and the
feature channels of all images of one domain sit in a single padded bank of
integral images, shape (n_images, K, H + 1, W + 1).

Parallel loops only write to disjoint output slots and all histograms are
integer counts, so results do not depend on the number of threads.
"""
import math

import numpy as np
from numba import njit, prange

from .features import _ratio
from .stats import _entropy_t, _fitness_t, _gain_t, _entropy_gain_t

N_LABELS = 8
OBJ_MIXED = 0
OBJ_ENTROPY = 1


@njit(cache=True)
def quantile_thresholds(sorted_vals, n, T, out):
    """T linearly interpolated quantiles at levels k / (T + 1), k = 1..T."""
    if sorted_vals[0] == sorted_vals[n - 1]:
        for j in range(T):
            out[j] = sorted_vals[0]
        return
    for j in range(T):
        pos = (j + 1) / (T + 1) * (n - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        out[j] = sorted_vals[lo] + frac * (sorted_vals[hi] - sorted_vals[lo])


@njit(cache=True)
def reservoir_fill(slot_of, uniforms, n_slots, S):
    """One pass of Algorithm R per slot over a pixel stream.

    ``slot_of[i]`` is the reservoir of pixel i (-1: not sampled) and
    ``uniforms[i]`` its U[0,1) draw.  Returns (reservoir indices, stream
    counts); only the first ``min(count, S)`` entries of a row are valid.
    """
    res = np.full((n_slots, S), -1, np.int64)
    seen = np.zeros(n_slots, np.int64)
    for i in range(slot_of.shape[0]):
        s = slot_of[i]
        if s < 0:
            continue
        c = seen[s]
        if c < S:
            res[s, c] = i
        else:
            j = int(uniforms[i] * (c + 1))
            if j < S:
                res[s, j] = i
        seen[s] = c + 1
    return res, seen


@njit(cache=True)
def _active_bins(p_syn, p_real, active):
    n = 0
    for i in range(p_syn.shape[0]):
        if p_syn[i] > 0 or p_real[i] > 0:
            active[n] = i
            n += 1
    return n


@njit(parallel=True, cache=True)
def stage1(slots, res_syn, n_syn, res_real, n_real,
           syn_img, syn_x, syn_y, syn_lab, syn_z,
           real_img, real_x, real_y, real_z,
           s_integ, s_dims, s_sqa, r_integ, r_dims, r_sqa,
           cands, T, F1, F2, alpha, objective, n_bins, table,
           out_params, out_gain, out_count, out_scored):
    """Score every (shape, threshold) pair on each slot's frontier sample and
    keep the F2 best thresholds of the F1 best shapes.

    Shapes are ranked by their best-threshold gain; ties go to the lower
    shape index, then the lower threshold index.
    """
    nb = slots.shape[0]
    C = cands.shape[1]
    for b in prange(nb):
        s = slots[b]
        ns = n_syn[s]
        nr = n_real[s]
        n = ns + nr
        R = np.empty((C, n))
        lab = np.full(n, -1, np.int64)
        z = np.empty(n, np.int64)
        for i in range(n):
            if i < ns:
                idx = res_syn[s, i]
                img = syn_img[idx]
                integ = s_integ[img]
                px, py = syn_x[idx], syn_y[idx]
                sq, h, w = s_sqa[img], s_dims[img, 0], s_dims[img, 1]
                lab[i] = syn_lab[idx]
                z[i] = syn_z[idx]
            else:
                idx = res_real[s, i - ns]
                img = real_img[idx]
                integ = r_integ[img]
                px, py = real_x[idx], real_y[idx]
                sq, h, w = r_sqa[img], r_dims[img, 0], r_dims[img, 1]
                z[i] = real_z[idx]
            for c in range(C):
                R[c, i] = _ratio(integ, px, py, cands[b, c], sq, h, w)

        p_lab = np.zeros(N_LABELS, np.int64)
        p_syn = np.zeros(n_bins, np.int64)
        p_real = np.zeros(n_bins, np.int64)
        for i in range(n):
            if lab[i] >= 0:
                p_lab[lab[i]] += 1
                p_syn[z[i]] += 1
            else:
                p_real[z[i]] += 1
        active = np.empty(n_bins, np.int64)
        na = _active_bins(p_syn, p_real, active)
        if objective == OBJ_ENTROPY:
            f_parent = _entropy_t(p_lab, table)
        else:
            f_parent = _fitness_t(p_lab, p_syn, p_real, alpha, table, active, na)

        l_lab = np.zeros(N_LABELS, np.int64)
        l_syn = np.zeros(n_bins, np.int64)
        l_real = np.zeros(n_bins, np.int64)
        r_lab = np.empty(N_LABELS, np.int64)
        r_syn = np.zeros(n_bins, np.int64)
        r_real = np.zeros(n_bins, np.int64)
        gains = np.empty((C, T))
        thr = np.empty((C, T))
        vals = np.empty(n)
        for c in range(C):
            order = np.argsort(R[c])
            for i in range(n):
                vals[i] = R[c, order[i]]
            quantile_thresholds(vals, n, T, thr[c])
            l_lab[:] = 0
            for j in range(na):
                l_syn[active[j]] = 0
                l_real[active[j]] = 0
            ptr = 0
            for j in range(T):
                t = thr[c, j]
                while ptr < n and vals[ptr] <= t:
                    i = order[ptr]
                    if lab[i] >= 0:
                        l_lab[lab[i]] += 1
                        l_syn[z[i]] += 1
                    else:
                        l_real[z[i]] += 1
                    ptr += 1
                if objective == OBJ_ENTROPY:
                    gains[c, j] = _entropy_gain_t(f_parent, p_lab, l_lab, r_lab, table)
                else:
                    gains[c, j] = _gain_t(f_parent, p_lab, p_syn, p_real, l_lab, l_syn,
                                          l_real, alpha, r_lab, r_syn, r_real, table,
                                          active, na)

        score = np.empty(C)
        for c in range(C):
            score[c] = gains[c].max()
        shape_rank = np.argsort(-score, kind="mergesort")
        k = 0
        for a in range(min(F1, C)):
            c = shape_rank[a]
            thr_rank = np.argsort(-gains[c], kind="mergesort")
            for q in range(min(F2, T)):
                j = thr_rank[q]
                out_params[b, k, :10] = cands[b, c]
                out_params[b, k, 10] = thr[c, j]
                out_gain[b, k] = gains[c, j]
                k += 1
        out_count[b] = k
        out_scored[b] = C * T


@njit(parallel=True, cache=True)
def stage2(slots, fin, n_fin,
           syn_ptr, syn_order, real_ptr, real_order,
           syn_img, syn_x, syn_y, syn_lab, syn_z,
           real_img, real_x, real_y, real_z,
           s_integ, s_dims, s_sqa, r_integ, r_dims, r_sqa,
           p_lab_all, p_syn_all, p_real_all,
           alpha, objective, n_bins, table, out_gain):
    """Full-data gain of every finalist of every slot.

    Work items are (slot, finalist) pairs; each walks all pixels of its node
    in stream order.
    """
    nb = slots.shape[0]
    F = fin.shape[1]
    for item in prange(nb * F):
        b = item // F
        f = item % F
        if f >= n_fin[b]:
            out_gain[b, f] = -np.inf
            continue
        s = slots[b]
        prm = fin[b, f]
        t = prm[10]
        l_lab = np.zeros(N_LABELS, np.int64)
        l_syn = np.zeros(n_bins, np.int64)
        l_real = np.zeros(n_bins, np.int64)
        for q in range(syn_ptr[s], syn_ptr[s + 1]):
            i = syn_order[q]
            img = syn_img[i]
            r = _ratio(s_integ[img], syn_x[i], syn_y[i], prm, s_sqa[img],
                       s_dims[img, 0], s_dims[img, 1])
            if not r > t:
                l_lab[syn_lab[i]] += 1
                l_syn[syn_z[i]] += 1
        for q in range(real_ptr[s], real_ptr[s + 1]):
            i = real_order[q]
            img = real_img[i]
            r = _ratio(r_integ[img], real_x[i], real_y[i], prm, r_sqa[img],
                       r_dims[img, 0], r_dims[img, 1])
            if not r > t:
                l_real[real_z[i]] += 1
        p_lab = p_lab_all[b]
        p_syn = p_syn_all[b]
        p_real = p_real_all[b]
        r_lab = np.empty(N_LABELS, np.int64)
        if objective == OBJ_ENTROPY:
            out_gain[b, f] = _entropy_gain_t(_entropy_t(p_lab, table), p_lab, l_lab,
                                             r_lab, table)
        else:
            active = np.empty(n_bins, np.int64)
            na = _active_bins(p_syn, p_real, active)
            f_parent = _fitness_t(p_lab, p_syn, p_real, alpha, table, active, na)
            out_gain[b, f] = _gain_t(f_parent, p_lab, p_syn, p_real, l_lab, l_syn, l_real,
                                     alpha, r_lab, np.zeros(n_bins, np.int64),
                                     np.zeros(n_bins, np.int64), table, active, na)


@njit(parallel=True, cache=True)
def route(node_of, img_of, xs, ys, integ, dims, sqa, split_prm, left, right, is_new):
    """Move pixels sitting at a freshly split node to its child."""
    moved = 0
    for i in prange(node_of.shape[0]):
        n = node_of[i]
        if is_new[n]:
            img = img_of[i]
            r = _ratio(integ[img], xs[i], ys[i], split_prm[n], sqa[img],
                       dims[img, 0], dims[img, 1])
            node_of[i] = right[n] if r > split_prm[n, 10] else left[n]
            moved += 1
    return moved


@njit(parallel=True, cache=True)
def descend(img_of, xs, ys, integ, dims, sqa, kind, prm, left, right, roots, depth_cap,
            path):
    """Route pixels from the given roots; ``path[i, d]`` is the node at depth d
    (the leaf repeated below it).  Returns the number of split evaluations."""
    evals = 0
    for i in prange(xs.shape[0]):
        n = roots[i]
        img = img_of[i]
        d = 0
        path[i, 0] = n
        while kind[n] == 1 and d < depth_cap:
            r = _ratio(integ[img], xs[i], ys[i], prm[n], sqa[img], dims[img, 0], dims[img, 1])
            n = right[n] if r > prm[n, 10] else left[n]
            d += 1
            evals += 1
            path[i, d] = n
        for e in range(d + 1, path.shape[1]):
            path[i, e] = n
    return evals


@njit(parallel=True, cache=True)
def forest_posterior(integ, h, w, sqa, xs, ys, kind, prm, left, right, post, roots, out):
    """Average leaf posteriors of all trees for each pixel; returns the number
    of split evaluations."""
    n_trees = roots.shape[0]
    evals = 0
    for i in prange(xs.shape[0]):
        for k in range(out.shape[1]):
            out[i, k] = 0.0
        for tr in range(n_trees):
            n = roots[tr]
            while kind[n] == 1:
                r = _ratio(integ, xs[i], ys[i], prm[n], sqa, h, w)
                n = right[n] if r > prm[n, 10] else left[n]
                evals += 1
            for k in range(out.shape[1]):
                out[i, k] += post[n, k]
        for k in range(out.shape[1]):
            out[i, k] /= n_trees
    return evals
