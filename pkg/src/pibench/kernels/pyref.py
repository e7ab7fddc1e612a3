"""Pure-numpy tree kernel, the fallback when the compiled core is absent.

Both backends implement the same three entry points with bit-identical
results:

  expand_presort  -- turn a full-data presort into a per-sample presort
  grow_tree       -- grow one CART/regression tree on presorted columns
  apply_tree      -- evaluate a grown tree on a column-major matrix

Determinism contract shared with the compiled core:
  * prefix sums run left to right over each feature's presorted segment
    (np.cumsum accumulates sequentially, matching the C running sum);
  * node totals always come from feature 0's segment;
  * split proxy = sl^2/nl + sr^2/nr, compared with strict >, first maximum
    kept, features visited in sampled order;
  * per-node feature subsets drawn by partial Fisher-Yates over splitmix64.

`grow_tree` consumes its position matrix `P` in place.
"""
from __future__ import annotations

import numpy as np

from .._rng import splitmix64

BACKEND = "pure"

LEAF = -1
NO_DEPTH_LIMIT = 1 << 30
_EPS_H = 1e-16


def expand_presort(p_full, counts):
    """Per-feature sorted positions of a row multiset.

    p_full: (f, n) int32, rows sorted per feature over the full matrix.
    counts: (n,) int32, multiplicity of each row in the sample (0 allowed).
    Returns (f, m) int32 with m = counts.sum(); each feature's row keeps the
    full-sort order with rows repeated by multiplicity.
    """
    counts = np.asarray(counts, dtype=np.int32)
    f, _ = p_full.shape
    m = int(counts.sum())
    out = np.empty((f, m), dtype=np.int32)
    for j in range(f):
        seg = p_full[j]
        out[j] = np.repeat(seg, counts[seg])
    return out


def grow_tree(xt, p, s, h, max_depth, min_leaf, k_features, seed):
    """Grow one tree. xt: (f, n) float64 C-contig; p: (f, m) int32 positions
    (consumed); s, h: (n,) per-row split numerator / leaf denominator.
    Returns dict of preorder node arrays."""
    f, n = xt.shape
    m = p.shape[1]
    if max_depth is None:
        max_depth = NO_DEPTH_LIMIT

    feature = []
    threshold = []
    left = []
    right = []
    value = []
    count = []

    mask = np.zeros(n, dtype=bool)
    state = int(seed)
    feat_order = np.arange(f, dtype=np.int64)

    # stack entries: (lo, hi, depth, parent, is_left); push right before left
    stack = [(0, m, 0, -1, False)]
    while stack:
        lo, hi, depth, parent, is_left = stack.pop()
        idx = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = idx
            else:
                right[parent] = idx
        nn = hi - lo
        p0_seg = p[0, lo:hi]
        s_seg = s[p0_seg]
        total_s = float(np.cumsum(s_seg)[-1])
        total_h = float(np.cumsum(h[p0_seg])[-1])
        node_value = total_s / (total_h + _EPS_H)

        best = None
        # constant split numerator: every split's proxy equals the parent's,
        # so the gain guard would reject them all anyway
        pure = bool((s_seg == s_seg[0]).all())
        if not pure and depth < max_depth and nn >= 2 * min_leaf:
            parent_proxy = total_s * total_s / nn
            if k_features < f:
                order = feat_order.copy()
                chosen = np.empty(k_features, dtype=np.int64)
                for i in range(k_features):
                    state, r = splitmix64(state)
                    j = i + r % (f - i)
                    order[i], order[j] = order[j], order[i]
                    chosen[i] = order[i]
                tried = chosen
            else:
                tried = feat_order
            best_proxy = -np.inf
            for j in tried:
                seg = p[j, lo:hi]
                vals = xt[j, seg]
                sl = np.cumsum(s[seg])[:-1]
                nl = np.arange(1, nn, dtype=np.float64)
                nr = nn - nl
                sr = total_s - sl
                proxy = sl * sl / nl + sr * sr / nr
                valid = (vals[:-1] != vals[1:]) \
                    & (nl >= min_leaf) & (nr >= min_leaf)
                if not valid.any():
                    continue
                proxy = np.where(valid, proxy, -np.inf)
                i_best = int(np.argmax(proxy))
                if proxy[i_best] > best_proxy:
                    best_proxy = proxy[i_best]
                    best = (int(j), lo + i_best,
                            0.5 * (float(vals[i_best]) + float(vals[i_best + 1])))
            if best is not None and not (
                    best_proxy > parent_proxy + 1e-12 * (abs(parent_proxy) + 1.0)):
                best = None

        if best is None:
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(node_value)
            count.append(nn)
            continue

        bj, bpos, bthr = best
        n_left = bpos - lo + 1
        mask[p[bj, lo:bpos + 1]] = True
        for j in range(f):
            seg = p[j, lo:hi]
            is_l = mask[seg]
            # materialize both halves first: seg views p, and writing the
            # left block back would corrupt the not-yet-read right block
            left_part = seg[is_l]
            right_part = seg[~is_l]
            p[j, lo:lo + n_left] = left_part
            p[j, lo + n_left:hi] = right_part
        mask[p[bj, lo:lo + n_left]] = False

        feature.append(bj)
        threshold.append(bthr)
        left.append(LEAF)
        right.append(LEAF)
        value.append(node_value)
        count.append(nn)
        stack.append((lo + n_left, hi, depth + 1, idx, False))
        stack.append((lo, lo + n_left, depth + 1, idx, True))

    return {
        "feature": np.array(feature, dtype=np.int32),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int32),
        "right": np.array(right, dtype=np.int32),
        "value": np.array(value, dtype=np.float64),
        "count": np.array(count, dtype=np.int32),
    }


def apply_tree(xt, feature, threshold, left, right, value):
    """Leaf value per column of xt. Level-synchronous descent; comparisons
    only, so results match the compiled per-row walk exactly."""
    n = xt.shape[1]
    node = np.zeros(n, dtype=np.int32)
    while True:
        f_here = feature[node]
        internal = f_here >= 0
        if not internal.any():
            break
        idx = np.nonzero(internal)[0]
        nd = node[idx]
        x = xt[f_here[idx], idx]
        go_left = x <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
    return value[node]
