import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnasp import tree as T

TABLE1 = np.array([
    [-0.4413446, 0.6062831],
    [-0.23081768, -0.6257931],
    [0.5207858, 0.9767507],
    [-0.37244028, 0.6900585],
] * 2)
TABLE1_Y = np.array([0, 1, 1, 0] * 2)


def _h(counts):
    n = sum(counts)
    return -sum(c / n * math.log2(c / n) for c in counts if c)


def brute_force_root(X, y, n_classes, min_leaf):
    """Enumerate every (attribute, observed value) split with plain loops.

    Each attribute proposes its highest-gain threshold (ties -> smaller value);
    proposals with gain below their mean are dropped; the highest gain ratio
    wins, ties to the lower attribute index.
    """
    n, d = len(y), len(X[0])
    parent = _h([sum(1 for v in y if v == c) for c in range(n_classes)])
    proposals = []
    for a in range(d):
        best = None
        for v in sorted(set(row[a] for row in X)):
            left = [y[i] for i in range(n) if X[i][a] <= v]
            right = [y[i] for i in range(n) if X[i][a] > v]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            lc = [left.count(c) for c in range(n_classes)]
            rc = [right.count(c) for c in range(n_classes)]
            gain = parent - len(left) / n * _h(lc) - len(right) / n * _h(rc)
            si = _h([len(left), len(right)])
            ratio = gain / si if si > 0 else 0.0
            if best is None or gain > best[1] + T.TIE_EPS:
                best = (v, gain, ratio)
        if best is not None:
            proposals.append((a,) + best)
    if not proposals:
        return None
    mean = sum(p[2] for p in proposals) / len(proposals)
    eligible = [p for p in proposals if p[2] >= mean - T.TIE_EPS]
    top = max(p[3] for p in eligible)
    a, v, gain, _ = next(p for p in eligible if p[3] >= top - T.TIE_EPS)
    if gain <= T.TIE_EPS:
        return None
    return a, v


def test_table1_single_split():
    tree = T.fit(TABLE1, TABLE1_Y, ["h_2_n_0", "h_2_n_1"])
    root = tree.root
    assert isinstance(root, T.Split)
    assert root.attribute == 0 and root.threshold == -0.37244028
    assert root.left == T.Leaf(0, (4, 0))
    assert root.right == T.Leaf(1, (0, 4))


def test_table1_rules_and_confidence():
    tree = T.fit(TABLE1, TABLE1_Y, ["h_2_n_0", "h_2_n_1"])
    r1, r2 = T.to_rules(tree, TABLE1, TABLE1_Y)
    assert [(c.attribute, c.op, c.threshold) for c in r1.conditions] == [("h_2_n_0", T.LEQ, -0.37244028)]
    assert [(c.attribute, c.op, c.threshold) for c in r2.conditions] == [("h_2_n_0", T.GT, -0.37244028)]
    assert (r1.class_label, r2.class_label) == (0, 1)
    assert (r1.cover, r1.ok) == (4, 4)
    assert T.confidence(r1) == 1


def test_gain_ratio_examples():
    assert T.information_gain([[4, 0], [0, 4]]) == 1.0
    assert T.split_info([[4, 0], [0, 4]]) == 1.0
    assert T.gain_ratio([[4, 0], [0, 4]]) == 1.0
    assert T.gain_ratio([[2, 2], [3, 3]]) == 0.0
    assert T.gain_ratio([[3, 5]]) == 0.0  # no split information
    left = np.sum(TABLE1[:, 0] <= -0.37244028)
    assert left == 4
    assert T.gain_ratio([[4, 0], [0, 4]]) == pytest.approx(1.0)


def test_confidence_examples():
    rule = lambda ok, cover: T.IfThenRule((), 0, cover, ok)
    assert T.confidence(rule(4, 4)) == 1
    assert T.confidence(rule(0, 5)) == 0
    assert T.confidence(rule(3, 4)) == 0.75
    with pytest.raises(T.TreeError):
        T.confidence(rule(0, 0))
    with pytest.raises(T.TreeError):
        T.IfThenRule((), 0, 2, 3)


def test_single_class_gives_single_leaf():
    X = np.random.default_rng(0).normal(size=(10, 3))
    tree = T.fit(X, np.ones(10, dtype=int), n_classes=2)
    assert tree.root == T.Leaf(1, (0, 10))
    (rule,) = T.to_rules(tree, X, np.ones(10, dtype=int))
    assert rule.conditions == () and rule.cover == 10 and rule.ok == 10


def test_fit_errors():
    with pytest.raises(T.TreeError):
        T.fit(np.empty((0, 2)), np.empty(0, dtype=int))
    with pytest.raises(T.TreeError):
        T.fit(np.zeros((3, 2)), [0, 1])


def test_leaf_tie_goes_to_smaller_class():
    X = np.zeros((4, 1))  # no admissible split
    tree = T.fit(X, [1, 0, 1, 0])
    assert tree.root.label == 0


def test_attribute_parsing():
    assert T.parse_attribute("h_2_n_0") == ("hidden", 2, 0)
    assert T.parse_attribute("input_feat_7") == ("input", 7)
    with pytest.raises(T.TreeError):
        T.parse_attribute("feature7")


def test_min_branch():
    assert T.min_branch(8, 2, 2) == 2
    assert T.min_branch(800, 2, 2) == 25
    assert T.min_branch(300, 2, 2) == 15
    assert T.min_branch(300, 2, 40) == 40


def _data_strategy():
    @st.composite
    def build(draw):
        n = draw(st.integers(1, 8))
        d = draw(st.integers(1, 4))
        k = draw(st.integers(2, 3))
        values = st.sampled_from([-1.5, -0.25, 0.0, 0.3, 0.3000001, 1.0, 2.0])
        X = [[draw(values) for _ in range(d)] for _ in range(n)]
        y = [draw(st.integers(0, k - 1)) for _ in range(n)]
        min_leaf = draw(st.integers(1, 3))
        return X, y, k, min_leaf
    return build()


@settings(max_examples=400, deadline=None)
@given(_data_strategy())
def test_root_split_matches_brute_force(case):
    X, y, k, min_leaf = case
    tree = T.fit(np.array(X), np.array(y), params=T.TreeParams(min_leaf, 10), n_classes=k)
    expected = None if len(set(y)) <= 1 else brute_force_root(X, y, k, min_leaf)
    if expected is None:
        assert isinstance(tree.root, T.Leaf)
    else:
        assert isinstance(tree.root, T.Split)
        assert (tree.root.attribute, tree.root.threshold) == expected


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 80), st.integers(1, 5), st.integers(1, 4))
def test_tree_invariants(seed, n, d, min_leaf):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 5, size=(n, d)).astype(float) / 4
    y = rng.integers(0, 3, size=n)
    tree = T.fit(X, y, params=T.TreeParams(min_leaf, 6), n_classes=3)
    assert tree.depth <= 6
    rules = T.to_rules(tree, X, y)
    # leaves partition the data
    assert sum(r.cover for r in rules) == n
    assert np.array_equal(np.sum([r.matches(X) for r in rules], axis=0), np.ones(n))
    # rule lookup agrees with traversal
    assert np.array_equal(T.classify_by_rules(rules, X), tree.predict(X))
    for r in rules:
        assert r.ok <= r.cover
        assert r.ok == int(np.sum(r.matches(X) & (y == r.class_label)))
        keys = [(c.attribute, c.op) for c in r.conditions]
        assert len(keys) == len(set(keys))  # merged to one bound per attribute and side

    def thresholds_observed(node, idx):
        if isinstance(node, T.Leaf):
            assert len(idx) >= min(min_leaf, n)
            return
        assert node.threshold in X[idx, node.attribute]
        go = X[idx, node.attribute] <= node.threshold
        thresholds_observed(node.left, idx[go])
        thresholds_observed(node.right, idx[~go])

    thresholds_observed(tree.root, np.arange(n))
    assert T.fit(X, y, params=T.TreeParams(min_leaf, 6), n_classes=3) == tree


def test_path_merge_keeps_tightest_bound():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    y = np.array([0, 0, 1, 1, 0, 0])
    tree = T.fit(X, y, params=T.TreeParams(1, 10))
    for r in T.to_rules(tree, X, y):
        ops = [c.op for c in r.conditions]
        assert ops.count(T.LEQ) <= 1 and ops.count(T.GT) <= 1
