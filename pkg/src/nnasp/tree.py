"""Binary decision trees on real-valued attributes, C4.5 style, and their IF-THEN rules.

Splits are ``attr <= v`` / ``attr > v`` where ``v`` is a value observed in the
node's partition.  A split is chosen by gain ratio among the candidates whose
information gain is at least the mean gain over all candidates.  No pruning.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

LEQ = "leq"
GT = "gt"
OPPOSITE = {LEQ: GT, GT: LEQ}

# ties in gain / gain ratio are decided on the tie-break order, not on float noise
TIE_EPS = 1e-12

_HIDDEN_RE = re.compile(r"^h_(\d+)_n_(\d+)$")
_INPUT_RE = re.compile(r"^input_feat_(\d+)$")


class TreeError(ValueError):
    pass


def parse_attribute(name: str) -> tuple:
    """``h_2_n_0`` -> ("hidden", 2, 0); ``input_feat_3`` -> ("input", 3)."""
    m = _HIDDEN_RE.match(name)
    if m:
        return ("hidden", int(m.group(1)), int(m.group(2)))
    m = _INPUT_RE.match(name)
    if m:
        return ("input", int(m.group(1)))
    raise TreeError(f"attribute {name!r} is neither h_<level>_n_<node> nor input_feat_<i>")


def hidden_attribute(level: int, node: int) -> str:
    return f"h_{level}_n_{node}"


@dataclass(frozen=True)
class AttrCondition:
    attribute: str
    op: str
    threshold: float
    index: int = -1  # column of ``attribute`` in the data the tree was fit on

    def __post_init__(self):
        if self.op not in (LEQ, GT):
            raise TreeError(f"operator must be {LEQ!r} or {GT!r}, got {self.op!r}")
        if not np.isfinite(self.threshold):
            raise TreeError("threshold must be finite")

    def holds(self, values: np.ndarray) -> np.ndarray:
        return values <= self.threshold if self.op == LEQ else values > self.threshold

    def __str__(self):
        return f"{self.attribute} {'<=' if self.op == LEQ else '>'} {self.threshold!r}"


@dataclass(frozen=True)
class IfThenRule:
    conditions: tuple[AttrCondition, ...]
    class_label: int
    cover: int
    ok: int

    def __post_init__(self):
        if not 0 <= self.ok <= self.cover:
            raise TreeError(f"need 0 <= ok <= cover, got ok={self.ok}, cover={self.cover}")

    @property
    def confidence(self) -> float:
        return confidence(self)

    def matches(self, X: np.ndarray) -> np.ndarray:
        mask = np.ones(len(X), dtype=bool)
        for c in self.conditions:
            mask &= c.holds(X[:, c.index])
        return mask

    def __str__(self):
        cond = " AND ".join(map(str, self.conditions)) or "TRUE"
        return f"IF {cond} THEN class = {self.class_label}  [cover={self.cover}, ok={self.ok}]"


def confidence(rule: IfThenRule) -> float:
    """ok / cover, as a fraction in [0, 1]."""
    if rule.cover == 0:
        raise TreeError("confidence undefined for a rule with zero cover")
    return rule.ok / rule.cover


@dataclass(frozen=True)
class Leaf:
    label: int
    histogram: tuple[int, ...]

    @property
    def size(self) -> int:
        return sum(self.histogram)


@dataclass(frozen=True)
class Split:
    attribute: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class DecisionTree:
    root: Node
    attribute_names: tuple[str, ...]
    n_classes: int

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self._predict_one(row) for row in X], dtype=int)

    def _predict_one(self, row) -> int:
        node = self.root
        while isinstance(node, Split):
            node = node.left if row[node.attribute] <= node.threshold else node.right
        return node.label

    def leaves(self) -> list[Leaf]:
        out = []

        def walk(node):
            if isinstance(node, Leaf):
                out.append(node)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    @property
    def depth(self) -> int:
        def walk(node):
            return 0 if isinstance(node, Leaf) else 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


@dataclass(frozen=True)
class TreeParams:
    min_leaf: int = 2
    max_depth: int = 10

    def __post_init__(self):
        if self.min_leaf < 1 or self.max_depth < 0:
            raise TreeError("min_leaf must be >= 1 and max_depth >= 0")


def entropy(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def information_gain(partition: Sequence[Sequence[int]]) -> float:
    children = np.asarray(partition, dtype=float)
    parent = children.sum(axis=0)
    n = parent.sum()
    return entropy(parent) - sum(c.sum() / n * entropy(c) for c in children)


def split_info(partition: Sequence[Sequence[int]]) -> float:
    return entropy([sum(c) for c in partition])


def gain_ratio(partition: Sequence[Sequence[int]]) -> float:
    """Information gain / split information for a partition given as per-child class counts.

    >>> gain_ratio([[4, 0], [0, 4]])
    1.0
    """
    si = split_info(partition)
    if si == 0:
        return 0.0
    return information_gain(partition) / si


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    # counts: (..., K); entropy base 2 along the last axis
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


@dataclass(frozen=True)
class SplitChoice:
    attribute: int
    threshold: float
    gain: float
    ratio: float


def candidate_splits(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: float):
    """All admissible (attribute, threshold) splits of one partition, vectorized.

    Returns arrays (attribute, threshold, gain, ratio), one entry per distinct
    observed threshold that leaves at least ``min_leaf`` instances on both sides.
    """
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    onehot = np.eye(n_classes)[y]                       # (n, K)
    left = np.cumsum(onehot[order], axis=0)             # (n, d, K): counts in x <= xs[i]
    total = left[-1]                                    # (d, K)
    right = total[None, :, :] - left

    nl = np.arange(1, n + 1)[:, None].astype(float)
    valid = np.zeros((n, d), dtype=bool)
    valid[:-1] = xs[:-1] < xs[1:]                       # last occurrence of each distinct value
    valid &= (nl >= min_leaf) & (n - nl >= min_leaf)
    rows, cols = np.nonzero(valid)
    if len(rows) == 0:
        empty = np.array([])
        return empty.astype(int), empty, empty, empty

    l_counts = left[rows, cols]
    r_counts = right[rows, cols]
    wl = (rows + 1) / n
    wr = 1.0 - wl
    parent_h = _entropy_rows(total[0])
    gain = parent_h - wl * _entropy_rows(l_counts) - wr * _entropy_rows(r_counts)
    si = -(wl * np.log2(wl) + wr * np.log2(wr))
    ratio = np.where(si > 0, gain / np.where(si > 0, si, 1.0), 0.0)
    return cols, xs[rows, cols], gain, ratio


def min_branch(n: int, n_classes: int, min_leaf: int) -> float:
    """Smallest admissible branch for a partition of ``n`` rows.

    A tenth of the per-class average, clipped to [min_leaf, 25] (never below
    ``min_leaf``).  Keeps large partitions from peeling off tiny slivers whose
    low split information inflates the gain ratio.
    """
    return max(float(min_leaf), min(25.0, 0.1 * n / n_classes))


def best_split(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int) -> SplitChoice | None:
    """C4.5 selection: each attribute proposes its highest-gain threshold (ties -> smallest);
    among proposals with gain >= their mean, take the max gain ratio (ties -> lowest attribute).
    """
    attrs, thresholds, gain, ratio = candidate_splits(X, y, n_classes, min_branch(len(y), n_classes, min_leaf))
    if len(attrs) == 0:
        return None
    proposals = {}
    for i in np.lexsort((thresholds, -gain, attrs)):
        a = int(attrs[i])
        if a not in proposals:
            proposals[a] = i
        elif gain[i] >= gain[proposals[a]] - TIE_EPS and thresholds[i] < thresholds[proposals[a]]:
            proposals[a] = i
    idx = np.array([proposals[a] for a in sorted(proposals)])
    eligible = gain[idx] >= gain[idx].mean() - TIE_EPS
    top = ratio[idx][eligible].max()
    pick = next(i for i, ok in zip(idx, eligible) if ok and ratio[i] >= top - TIE_EPS)
    if gain[pick] <= TIE_EPS:
        return None
    return SplitChoice(int(attrs[pick]), float(thresholds[pick]), float(gain[pick]), float(ratio[pick]))


def fit(X, y, attribute_names: Sequence[str] | None = None, params: TreeParams = TreeParams(),
        n_classes: int | None = None) -> DecisionTree:
    """Greedy top-down induction.

    A node becomes a leaf when it is pure, at ``max_depth``, or when no split
    with positive gain leaves ``min_branch`` instances on each side.  Leaves
    predict the majority class (ties to the smaller class id).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or len(X) == 0:
        raise TreeError("fit needs a non-empty 2-D attribute matrix")
    if len(y) != len(X):
        raise TreeError(f"{len(X)} rows but {len(y)} labels")
    if attribute_names is None:
        attribute_names = [f"a{i}" for i in range(X.shape[1])]
    if len(attribute_names) != X.shape[1]:
        raise TreeError("one attribute name per column required")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise TreeError("labels must lie in [0, n_classes)")

    def grow(idx: np.ndarray, depth: int) -> Node:
        hist = np.bincount(y[idx], minlength=n_classes)
        leaf = Leaf(int(np.argmax(hist)), tuple(int(c) for c in hist))
        if np.count_nonzero(hist) <= 1 or depth >= params.max_depth:
            return leaf
        choice = best_split(X[idx], y[idx], n_classes, params.min_leaf)
        if choice is None:
            return leaf
        go_left = X[idx, choice.attribute] <= choice.threshold
        return Split(choice.attribute, choice.threshold,
                     grow(idx[go_left], depth + 1), grow(idx[~go_left], depth + 1))

    return DecisionTree(grow(np.arange(len(X)), 0), tuple(attribute_names), n_classes)


def _merge_path(path: list[AttrCondition]) -> tuple[AttrCondition, ...]:
    """Collapse repeated (attribute, op) conditions to the tightest bound, keeping first-seen order."""
    merged: dict[tuple[str, str], AttrCondition] = {}
    for c in path:
        key = (c.attribute, c.op)
        prev = merged.get(key)
        if prev is None:
            merged[key] = c
        elif (c.op == LEQ and c.threshold < prev.threshold) or (c.op == GT and c.threshold > prev.threshold):
            merged[key] = c
    return tuple(merged.values())


def to_rules(tree: DecisionTree, X, y) -> list[IfThenRule]:
    """One rule per leaf, left-to-right, with cover/ok counted on (X, y)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).astype(int)
    rules = []

    def walk(node: Node, path: list[AttrCondition]):
        if isinstance(node, Leaf):
            conds = _merge_path(path)
            mask = np.ones(len(X), dtype=bool)
            for c in conds:
                mask &= c.holds(X[:, c.index])
            cover = int(mask.sum())
            ok = int((y[mask] == node.label).sum())
            rules.append(IfThenRule(conds, node.label, cover, ok))
            return
        name = tree.attribute_names[node.attribute]
        walk(node.left, path + [AttrCondition(name, LEQ, node.threshold, node.attribute)])
        walk(node.right, path + [AttrCondition(name, GT, node.threshold, node.attribute)])

    walk(tree.root, [])
    return rules


def classify_by_rules(rules: Sequence[IfThenRule], X) -> np.ndarray:
    """Label of the first rule whose conditions hold (rules from one tree are mutually exclusive)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.full(len(X), -1, dtype=int)
    for rule in rules:
        mask = rule.matches(X) & (out < 0)
        out[mask] = rule.class_label
    return out
