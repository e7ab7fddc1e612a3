"""Tree-kernel backends: bit-identical parity, split-search oracles, and
structural limits (depth, leaf size, purity)."""
import numpy as np
import pytest

from pibench import kernels
from pibench.kernels import pyref
from pibench.models import tree as treelib

try:
    from pibench.kernels import _core
    HAVE_CORE = True
except ImportError:
    _core = None
    HAVE_CORE = False

needs_core = pytest.mark.skipif(not HAVE_CORE,
                                reason="compiled kernel not built")


def make_problem(n, f, seed, binary_cols=(), constant_cols=(), dup_of=None):
    rng = np.random.default_rng(seed)
    xt = rng.normal(size=(f, n))
    for j in binary_cols:
        xt[j] = (xt[j] > 0).astype(np.float64)
    for j in constant_cols:
        xt[j] = 3.25
    if dup_of:
        for j, k in dup_of:
            xt[j] = xt[k]
    xt = np.ascontiguousarray(xt)
    y = (rng.random(n) < 0.4).astype(np.float64)
    return xt, y


def grow_with(mod, xt, counts, s, h, max_depth, min_leaf, k_features, seed):
    p_full = treelib.presort(xt)
    p = mod.expand_presort(p_full, np.asarray(counts, dtype=np.int32))
    return mod.grow_tree(np.ascontiguousarray(xt), p,
                         np.ascontiguousarray(s, dtype=np.float64),
                         np.ascontiguousarray(h, dtype=np.float64),
                         max_depth, min_leaf, k_features, seed)


def leaf_depths(nodes):
    depths = {}
    stack = [(0, 0)]
    out = []
    while stack:
        idx, d = stack.pop()
        if nodes["feature"][idx] < 0:
            out.append((idx, d))
        else:
            stack.append((int(nodes["left"][idx]), d + 1))
            stack.append((int(nodes["right"][idx]), d + 1))
    return out


# ---------------------------------------------------------------------------
# backend parity

@needs_core
@pytest.mark.parametrize("case", range(8))
def test_backends_grow_identical_trees(case):
    n = (60, 200, 200, 500, 120, 80, 300, 150)[case]
    f = (4, 9, 9, 12, 6, 5, 10, 7)[case]
    depth = (2, 5, None, 6, None, 3, 4, None)[case]
    min_leaf = (1, 5, 1, 20, 1, 2, 5, 1)[case]
    xt, y = make_problem(n, f, seed=100 + case, binary_cols=(1,),
                         constant_cols=(2,) if f > 4 else (),
                         dup_of=[(3, 0)] if f > 4 else None)
    k = f if case % 2 == 0 else max(2, f // 2)
    rng = np.random.default_rng(7 + case)
    counts = np.bincount(rng.integers(0, n, size=n), minlength=n)

    if case < 4:
        s, h = y, np.ones(n)
    else:
        s = rng.normal(size=n) * 0.5
        h = rng.uniform(0.01, 0.25, size=n)

    a = grow_with(pyref, xt, counts, s, h, depth, min_leaf, k, seed=9)
    b = grow_with(_core, xt, counts, s, h, depth, min_leaf, k, seed=9)
    for key in ("feature", "left", "right", "count"):
        assert np.array_equal(a[key], b[key]), key
    for key in ("threshold", "value"):
        assert np.array_equal(a[key], b[key]), key  # bit-exact, no tolerance


@needs_core
def test_backends_expand_presort_identical():
    xt, _ = make_problem(300, 5, seed=2, binary_cols=(0,))
    p_full = treelib.presort(xt)
    rng = np.random.default_rng(3)
    counts = np.bincount(rng.integers(0, 300, size=300),
                         minlength=300).astype(np.int32)
    assert np.array_equal(pyref.expand_presort(p_full, counts),
                          _core.expand_presort(p_full, counts))


@needs_core
def test_backends_apply_identical():
    xt, y = make_problem(400, 6, seed=5)
    nodes = grow_with(pyref, xt, np.ones(400, dtype=np.int32), y,
                      np.ones(400), None, 1, 6, seed=1)
    args = (nodes["feature"], nodes["threshold"], nodes["left"],
            nodes["right"], nodes["value"])
    xq, _ = make_problem(150, 6, seed=6)
    assert np.array_equal(pyref.apply_tree(xq, *args),
                          _core.apply_tree(xq, *args))


def test_active_backend_is_declared():
    assert kernels.BACKEND in ("pure", "compiled")
    if HAVE_CORE:
        assert kernels.BACKEND == "compiled"


# ---------------------------------------------------------------------------
# split-search oracles

def brute_force_best_split(xt, s, min_leaf):
    """Independent exhaustive search for the best root split: maximize
    sl^2/nl + sr^2/nr over features (in index order) and sorted boundaries,
    strict improvement only, first maximum kept."""
    f, n = xt.shape
    total = float(np.sum(s))
    parent = total * total / n
    best = None
    best_proxy = -np.inf
    for j in range(f):
        order = np.argsort(xt[j], kind="stable")
        v = xt[j][order]
        sj = s[order]
        for i in range(1, n):
            if v[i - 1] == v[i] or i < min_leaf or n - i < min_leaf:
                continue
            sl = float(np.cumsum(sj[:i])[-1])
            sr = total - sl
            proxy = sl * sl / i + sr * sr / (n - i)
            if proxy > best_proxy:
                best_proxy = proxy
                best = (j, 0.5 * (float(v[i - 1]) + float(v[i])))
    if best is not None and not (best_proxy > parent + 1e-12 * (abs(parent) + 1.0)):
        best = None
    return best


@pytest.mark.parametrize("seed", range(20))
def test_root_split_matches_brute_force(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(20, 120))
    f = int(rng.integers(2, 8))
    xt = np.ascontiguousarray(rng.normal(size=(f, n)))
    y = (rng.random(n) < 0.5).astype(np.float64)
    min_leaf = int(rng.integers(1, 6))
    nodes = grow_with(kernels.backend, xt, np.ones(n, dtype=np.int32), y,
                      np.ones(n), 1, min_leaf, f, seed=0)
    expected = brute_force_best_split(xt, y, min_leaf)
    if expected is None:
        assert nodes["feature"][0] == -1
    else:
        assert (int(nodes["feature"][0]), float(nodes["threshold"][0])) == expected


def test_hand_worked_four_point_split():
    xt = np.array([[0.0, 1.0, 2.0, 3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    nodes = grow_with(kernels.backend, xt, np.ones(4, dtype=np.int32), y,
                      np.ones(4), None, 1, 1, seed=0)
    assert nodes["feature"][0] == 0
    assert nodes["threshold"][0] == 1.5
    t = treelib.Tree(nodes)
    pred = t.predict(xt)
    np.testing.assert_allclose(pred, [0.0, 0.0, 1.0, 1.0], atol=1e-12)


def test_chosen_split_maximizes_gini_gain():
    # the sum-of-squares proxy must pick a split with maximal impurity
    # decrease when s = labels and h = 1
    for seed in range(10):
        rng = np.random.default_rng(200 + seed)
        n = 80
        xt = np.ascontiguousarray(rng.normal(size=(3, n)))
        y = (rng.random(n) < 0.5).astype(np.float64)
        nodes = grow_with(kernels.backend, xt, np.ones(n, dtype=np.int32), y,
                          np.ones(n), 1, 1, 3, seed=0)
        if nodes["feature"][0] < 0:
            continue
        j, thr = int(nodes["feature"][0]), float(nodes["threshold"][0])
        chosen = treelib.gini_gain(y, y[xt[j] <= thr], y[xt[j] > thr])
        best = 0.0
        for jj in range(3):
            for cut in np.unique(xt[jj])[:-1]:
                lmask = xt[jj] <= cut
                best = max(best, treelib.gini_gain(y, y[lmask], y[~lmask]))
        assert chosen == pytest.approx(best, abs=1e-12)


def test_expand_presort_matches_stable_argsort():
    rng = np.random.default_rng(11)
    n, f = 120, 4
    xt = rng.normal(size=(f, n))
    xt[1] = np.round(xt[1])      # heavy ties
    xt = np.ascontiguousarray(xt)
    counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.int32)
    p_full = treelib.presort(xt)
    expanded = pyref.expand_presort(p_full, counts)
    rows = np.repeat(np.arange(n), counts)
    for j in range(f):
        expected = rows[np.argsort(xt[j, rows], kind="stable")]
        assert np.array_equal(expanded[j], expected)


# ---------------------------------------------------------------------------
# structural limits

def test_max_depth_limits_tree():
    xt, y = make_problem(300, 5, seed=21)
    for depth in (0, 1, 3):
        nodes = grow_with(kernels.backend, xt, np.ones(300, dtype=np.int32),
                          y, np.ones(300), depth, 1, 5, seed=2)
        assert max(d for _, d in leaf_depths(nodes)) <= depth
    nodes0 = grow_with(kernels.backend, xt, np.ones(300, dtype=np.int32),
                       y, np.ones(300), 0, 1, 5, seed=2)
    assert len(nodes0["feature"]) == 1


def test_min_leaf_respected():
    xt, y = make_problem(400, 5, seed=22)
    for min_leaf in (1, 5, 20):
        nodes = grow_with(kernels.backend, xt, np.ones(400, dtype=np.int32),
                          y, np.ones(400), None, min_leaf, 5, seed=3)
        for idx, _ in leaf_depths(nodes):
            assert nodes["count"][idx] >= min_leaf


def test_pure_labels_make_a_single_leaf():
    xt, _ = make_problem(50, 3, seed=23)
    y = np.ones(50)
    nodes = grow_with(kernels.backend, xt, np.ones(50, dtype=np.int32), y,
                      np.ones(50), None, 1, 3, seed=4)
    assert len(nodes["feature"]) == 1
    assert nodes["value"][0] == pytest.approx(1.0, abs=1e-12)
    assert nodes["count"][0] == 50


def test_constant_features_make_a_single_leaf():
    xt = np.ascontiguousarray(np.full((3, 40), 2.5))
    y = (np.arange(40) % 2).astype(np.float64)
    nodes = grow_with(kernels.backend, xt, np.ones(40, dtype=np.int32), y,
                      np.ones(40), None, 1, 3, seed=5)
    assert len(nodes["feature"]) == 1
    assert nodes["value"][0] == pytest.approx(0.5, abs=1e-12)


def test_leaf_value_is_ratio_of_sums():
    xt = np.ascontiguousarray(np.full((1, 4), 1.0))
    s = np.array([1.0, 2.0, 3.0, 4.0])
    h = np.array([0.5, 0.5, 0.5, 0.5])
    nodes = grow_with(kernels.backend, xt, np.ones(4, dtype=np.int32), s, h,
                      None, 1, 1, seed=0)
    assert nodes["value"][0] == pytest.approx(10.0 / (2.0 + 1e-16), rel=1e-15)


def test_threshold_is_midpoint_between_distinct_values():
    xt = np.ascontiguousarray(np.array([[1.0, 1.0, 4.0, 4.0, 10.0]]))
    y = np.array([0.0, 0.0, 1.0, 1.0, 1.0])
    nodes = grow_with(kernels.backend, xt, np.ones(5, dtype=np.int32), y,
                      np.ones(5), 1, 1, 1, seed=0)
    assert nodes["threshold"][0] == 2.5  # (1 + 4) / 2, never inside a tie run


def test_feature_subsampling_is_seeded():
    xt, y = make_problem(200, 10, seed=30)
    args = (np.ones(200, dtype=np.int32), y, np.ones(200), None, 1, 3)
    a = grow_with(kernels.backend, xt, *args, seed=1)
    b = grow_with(kernels.backend, xt, *args, seed=1)
    for key in a:
        assert np.array_equal(a[key], b[key])
    c = grow_with(kernels.backend, xt, *args, seed=2)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def leaf_index_per_row(nodes, xt):
    n = xt.shape[1]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx = 0
        while nodes["feature"][idx] >= 0:
            j = int(nodes["feature"][idx])
            idx = int(nodes["left"][idx]) if xt[j, i] <= nodes["threshold"][idx] \
                else int(nodes["right"][idx])
        out[i] = idx
    return out


def test_bootstrap_counts_route_whole_multiplicities():
    # every copy of a bootstrapped row shares its features, so a leaf's count
    # must equal the summed multiplicities of the rows routed to it
    rng = np.random.default_rng(31)
    n = 60
    xt = np.ascontiguousarray(rng.normal(size=(2, n)))
    y = (rng.random(n) < 0.5).astype(np.float64)
    counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.int32)
    nodes = grow_with(kernels.backend, xt, counts, y, np.ones(n), None, 1, 2,
                      seed=6)
    leaves = leaf_index_per_row(nodes, xt)
    assert int(nodes["count"][0]) == int(counts.sum())
    for leaf in np.unique(leaves[counts > 0]):
        assert int(nodes["count"][leaf]) == int(counts[leaves == leaf].sum())


# ---------------------------------------------------------------------------
# serialization

def test_tree_serialization_round_trip():
    xt, y = make_problem(150, 6, seed=40)
    nodes = grow_with(kernels.backend, xt, np.ones(150, dtype=np.int32), y,
                      np.ones(150), None, 1, 6, seed=7)
    t = treelib.Tree(nodes)
    back = treelib.deserialize_trees(treelib.serialize_trees([t]))[0]
    for attr in ("feature", "threshold", "left", "right", "value", "count"):
        assert np.array_equal(getattr(t, attr), getattr(back, attr))
    assert np.array_equal(t.predict(xt), back.predict(xt))


def test_resolve_feature_count():
    assert treelib.resolve_feature_count("sqrt", 80) == 9
    assert treelib.resolve_feature_count("sqrt", 1) == 1
    assert treelib.resolve_feature_count("all", 13) == 13
    assert treelib.resolve_feature_count(0.5, 13) == 6
    assert treelib.resolve_feature_count(0.01, 13) == 1
