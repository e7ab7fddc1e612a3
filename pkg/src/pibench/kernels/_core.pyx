# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled tree kernel.

Mirrors kernels/pyref.py operation for operation; see that module's docstring
for the shared determinism contract. Any change here must keep results
bit-identical to the fallback (tests/test_kernels.py enforces this).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

BACKEND = "compiled"

cdef double EPS_H = 1e-16
cdef int NO_DEPTH_LIMIT = 1 << 30


cdef inline unsigned long long _mix(unsigned long long state,
                                    unsigned long long *out) nogil:
    # splitmix64, identical constants to pibench._rng.splitmix64
    cdef unsigned long long z
    state = state + <unsigned long long>0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <unsigned long long>0x94D049BB133111EB
    z = z ^ (z >> 31)
    out[0] = z
    return state


def expand_presort(cnp.int32_t[:, ::1] p_full, cnp.int32_t[::1] counts):
    cdef Py_ssize_t f = p_full.shape[0]
    cdef Py_ssize_t n = p_full.shape[1]
    cdef Py_ssize_t m = 0
    cdef Py_ssize_t i, j, k, c, w
    cdef cnp.int32_t r
    for i in range(n):
        m += counts[i]
    out_arr = np.empty((f, m), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] out = out_arr
    with nogil:
        for j in range(f):
            w = 0
            for k in range(n):
                r = p_full[j, k]
                for c in range(counts[r]):
                    out[j, w] = r
                    w += 1
    return out_arr


def grow_tree(cnp.float64_t[:, ::1] xt, cnp.int32_t[:, ::1] p,
              cnp.float64_t[::1] s, cnp.float64_t[::1] h,
              max_depth, int min_leaf, int k_features,
              unsigned long long seed):
    cdef Py_ssize_t f = xt.shape[0]
    cdef Py_ssize_t n = xt.shape[1]
    cdef Py_ssize_t m = p.shape[1]
    cdef int depth_cap = NO_DEPTH_LIMIT if max_depth is None else <int>max_depth

    cdef Py_ssize_t cap = 2 * m + 2
    feature_arr = np.empty(cap, dtype=np.int32)
    threshold_arr = np.empty(cap, dtype=np.float64)
    left_arr = np.empty(cap, dtype=np.int32)
    right_arr = np.empty(cap, dtype=np.int32)
    value_arr = np.empty(cap, dtype=np.float64)
    count_arr = np.empty(cap, dtype=np.int32)
    cdef cnp.int32_t[::1] feature = feature_arr
    cdef cnp.float64_t[::1] threshold = threshold_arr
    cdef cnp.int32_t[::1] left = left_arr
    cdef cnp.int32_t[::1] right = right_arr
    cdef cnp.float64_t[::1] value = value_arr
    cdef cnp.int32_t[::1] count = count_arr

    stack_arr = np.empty((cap, 5), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] stack = stack_arr
    tmp_arr = np.empty(m if m > 0 else 1, dtype=np.int32)
    cdef cnp.int32_t[::1] tmp = tmp_arr
    mask_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] mask = mask_arr
    order_arr = np.empty(f, dtype=np.int64)
    cdef cnp.int64_t[::1] order = order_arr

    cdef unsigned long long state = seed
    cdef unsigned long long rnd
    cdef Py_ssize_t sp = 0, n_nodes = 0
    cdef Py_ssize_t lo, hi, nn, idx, parent, k, i, j, t, wl, wt, n_try, n_left
    cdef Py_ssize_t best_pos
    cdef int depth, is_left
    cdef cnp.int32_t r
    cdef Py_ssize_t bj, swap_j
    cdef double total_s, total_h, node_value, parent_proxy, s0
    cdef double sl, sr, nl, nr, proxy, best_proxy, best_thr, v1, v2
    cdef bint have_split, pure

    stack[0, 0] = 0
    stack[0, 1] = m
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    sp = 1

    with nogil:
        while sp > 0:
            sp -= 1
            lo = stack[sp, 0]
            hi = stack[sp, 1]
            depth = <int>stack[sp, 2]
            parent = stack[sp, 3]
            is_left = <int>stack[sp, 4]
            idx = n_nodes
            if parent >= 0:
                if is_left:
                    left[parent] = <cnp.int32_t>idx
                else:
                    right[parent] = <cnp.int32_t>idx
            nn = hi - lo

            total_s = 0.0
            total_h = 0.0
            s0 = s[p[0, lo]]
            pure = True
            for k in range(lo, hi):
                r = p[0, k]
                total_s += s[r]
                total_h += h[r]
                if s[r] != s0:
                    pure = False
            node_value = total_s / (total_h + EPS_H)

            have_split = False
            best_proxy = -INFINITY
            bj = -1
            best_pos = -1
            best_thr = 0.0
            # constant split numerator: every split's proxy equals the
            # parent's, so the gain guard would reject them all anyway
            if not pure and depth < depth_cap and nn >= 2 * min_leaf:
                parent_proxy = total_s * total_s / nn
                if k_features < f:
                    for i in range(f):
                        order[i] = i
                    for i in range(k_features):
                        state = _mix(state, &rnd)
                        swap_j = i + <Py_ssize_t>(rnd % <unsigned long long>(f - i))
                        t = order[i]
                        order[i] = order[swap_j]
                        order[swap_j] = t
                    n_try = k_features
                else:
                    for i in range(f):
                        order[i] = i
                    n_try = f
                for t in range(n_try):
                    j = order[t]
                    sl = 0.0
                    for k in range(lo, hi - 1):
                        r = p[j, k]
                        sl += s[r]
                        nl = <double>(k - lo + 1)
                        nr = <double>(nn - (k - lo + 1))
                        if nl < min_leaf:
                            continue
                        if nr < min_leaf:
                            break
                        v1 = xt[j, r]
                        v2 = xt[j, p[j, k + 1]]
                        if v1 == v2:
                            continue
                        sr = total_s - sl
                        proxy = sl * sl / nl + sr * sr / nr
                        if proxy > best_proxy:
                            best_proxy = proxy
                            bj = j
                            best_pos = k
                            best_thr = 0.5 * (v1 + v2)
                if bj >= 0 and best_proxy > parent_proxy \
                        + 1e-12 * (fabs(parent_proxy) + 1.0):
                    have_split = True

            if not have_split:
                feature[idx] = -1
                threshold[idx] = 0.0
                left[idx] = -1
                right[idx] = -1
                value[idx] = node_value
                count[idx] = <cnp.int32_t>nn
                n_nodes += 1
                continue

            n_left = best_pos - lo + 1
            for k in range(lo, best_pos + 1):
                mask[p[bj, k]] = 1
            for j in range(f):
                wl = lo
                wt = 0
                for k in range(lo, hi):
                    r = p[j, k]
                    if mask[r]:
                        p[j, wl] = r
                        wl += 1
                    else:
                        tmp[wt] = r
                        wt += 1
                for k in range(wt):
                    p[j, wl + k] = tmp[k]
            for k in range(lo, lo + n_left):
                mask[p[bj, k]] = 0

            feature[idx] = <cnp.int32_t>bj
            threshold[idx] = best_thr
            left[idx] = -1
            right[idx] = -1
            value[idx] = node_value
            count[idx] = <cnp.int32_t>nn
            n_nodes += 1

            stack[sp, 0] = lo + n_left
            stack[sp, 1] = hi
            stack[sp, 2] = depth + 1
            stack[sp, 3] = idx
            stack[sp, 4] = 0
            sp += 1
            stack[sp, 0] = lo
            stack[sp, 1] = lo + n_left
            stack[sp, 2] = depth + 1
            stack[sp, 3] = idx
            stack[sp, 4] = 1
            sp += 1

    return {
        "feature": feature_arr[:n_nodes].copy(),
        "threshold": threshold_arr[:n_nodes].copy(),
        "left": left_arr[:n_nodes].copy(),
        "right": right_arr[:n_nodes].copy(),
        "value": value_arr[:n_nodes].copy(),
        "count": count_arr[:n_nodes].copy(),
    }


def apply_tree(cnp.float64_t[:, ::1] xt, cnp.int32_t[::1] feature,
               cnp.float64_t[::1] threshold, cnp.int32_t[::1] left,
               cnp.int32_t[::1] right, cnp.float64_t[::1] value):
    cdef Py_ssize_t n = xt.shape[1]
    cdef Py_ssize_t i
    cdef cnp.int32_t node
    out_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if xt[feature[node], i] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = value[node]
    return out_arr
