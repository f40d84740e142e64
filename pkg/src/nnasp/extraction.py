"""Layer-wise rule extraction from a trained network into a stratified logic program.

Top level: a tree on the last hidden layer's activations predicts the class;
each tree rule becomes ``potential_predict_output(class, index, confidence)``.
Every hidden-node condition used in a body is then explained by a tree on the
layer below (intermediate rules), down to trees on the raw inputs (bottom
rules).  A condition whose opposite is already registered in the same scope is
written as the negation of the registered one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import tree as trees
from .dataset import Dataset
from .network import ActivationTrace, Mlp, capture_activations
from .program import (
    DEFAULT_SCALE,
    Comparison,
    HiddenAtom,
    InputBinding,
    LogicRule,
    Neg,
    OutputAtom,
    Pos,
    Program,
    ProgramMeta,
    fixed_point,
)
from .tree import GT, LEQ, AttrCondition, IfThenRule, TreeParams

log = logging.getLogger(__name__)

_OP_RANK = {LEQ: 0, GT: 1}


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractionConfig:
    tree: TreeParams = TreeParams()
    scale: int = DEFAULT_SCALE

    def __post_init__(self):
        if self.scale < 1:
            raise ExtractionError("fixed-point scale must be >= 1")


@dataclass(frozen=True)
class Condition:
    level: int
    node: int
    op: str
    threshold: float
    key: int
    tag: int = 0

    @property
    def identity(self) -> tuple:
        return (self.level, self.node, self.op, self.key, self.tag)

    @property
    def atom(self) -> HiddenAtom:
        return HiddenAtom(self.level, self.node, self.op, self.key, self.tag)

    def opposite(self) -> "Condition":
        return Condition(self.level, self.node, GT if self.op == LEQ else LEQ, self.threshold, self.key, self.tag)

    def sort_key(self) -> tuple:
        return (self.level, self.node, self.key, self.tag, _OP_RANK[self.op])

    def holds(self, values: np.ndarray) -> np.ndarray:
        return values <= self.threshold if self.op == LEQ else values > self.threshold

    def column_name(self) -> str:
        # debug-dump label in the style h_2_n_0_leq_than_minus372440
        key = f"minus{-self.key}" if self.key < 0 else str(self.key)
        return f"h_{self.level}_n_{self.node}_{self.op}_than_{key}"

    def __str__(self):
        return f"h_{self.level}_n_{self.node} {'<=' if self.op == LEQ else '>'} {self.threshold!r}"


class KeyTable:
    """Assigns each (level, node, threshold) a fixed-point key, tagging collisions so keys stay injective."""

    def __init__(self, scale: int = DEFAULT_SCALE):
        self.scale = scale
        self._keys: dict[tuple[int, int, float], tuple[int, int]] = {}
        self._seen: dict[tuple[int, int, int], list[float]] = {}

    def key_for(self, level: int, node: int, threshold: float) -> tuple[int, int]:
        slot = (level, node, float(threshold))
        if slot not in self._keys:
            key = fixed_point(threshold, self.scale)
            same = self._seen.setdefault((level, node, key), [])
            self._keys[slot] = (key, len(same))
            same.append(float(threshold))
        return self._keys[slot]

    def condition(self, level: int, node: int, op: str, threshold: float) -> Condition:
        key, tag = self.key_for(level, node, threshold)
        return Condition(level, node, op, float(threshold), key, tag)


class ConditionRegistry:
    """Conditions registered in one extraction scope; never holds a condition and its opposite."""

    def __init__(self, conditions: Iterable[Condition] = ()):
        self._items: dict[tuple, Condition] = {}
        for c in conditions:
            self.add(c)

    def __contains__(self, c: Condition) -> bool:
        return c.identity in self._items

    def __iter__(self):
        return iter(self._items.values())

    def __len__(self) -> int:
        return len(self._items)

    def add(self, c: Condition) -> None:
        if c.opposite() in self:
            raise ExtractionError(f"registry already holds the opposite of {c}")
        self._items[c.identity] = c

    def sorted(self) -> list[Condition]:
        return sorted(self, key=Condition.sort_key)


def to_condition(t: AttrCondition, keys: KeyTable) -> Condition:
    parsed = trees.parse_attribute(t.attribute)
    if parsed[0] != "hidden":
        raise ExtractionError(f"{t.attribute!r} is not a hidden-node attribute")
    _, level, node = parsed
    return keys.condition(level, node, t.op, t.threshold)


def process_condition(t: AttrCondition | Condition, registry: ConditionRegistry,
                      keys: KeyTable | None = None) -> tuple[ConditionRegistry, Pos | Neg]:
    """Register ``t`` unless it or its opposite is known; return its body literal.

    If the opposite is registered the literal is ``not <opposite>``.
    """
    if isinstance(t, AttrCondition):
        t = to_condition(t, keys if keys is not None else KeyTable())
    opposite = t.opposite()
    if t not in registry and opposite not in registry:
        registry.add(t)
    if opposite in registry:
        return registry, Neg(opposite.atom)
    return registry, Pos(t.atom)


def _hidden_names(level: int, width: int) -> list[str]:
    return [trees.hidden_attribute(level, j) for j in range(width)]


def _fit_rules(A: np.ndarray, labels: np.ndarray, names: Sequence[str], n_classes: int,
               config: ExtractionConfig) -> list[IfThenRule]:
    tree = trees.fit(A, labels, names, config.tree, n_classes=n_classes)
    return trees.to_rules(tree, A, labels)


def _note(prefix: str, i: int, r: IfThenRule) -> str:
    return f"{prefix} tree rule {i}: cover={r.cover} ok={r.ok}"


def extract_top_level(A: np.ndarray, y: np.ndarray, level: int, config: ExtractionConfig = ExtractionConfig(),
                      keys: KeyTable | None = None, n_classes: int | None = None):
    """Class rules from the last hidden layer ``level`` (activations ``A``, labels ``y``).

    Returns (rules, registry, tree_rules); one registry is shared by all rules.
    """
    keys = keys if keys is not None else KeyTable(config.scale)
    A = np.asarray(A, dtype=float)
    if len(A) == 0:
        raise ExtractionError("top-level data is empty")
    y = np.asarray(y).astype(int)
    n_classes = n_classes if n_classes is not None else int(y.max()) + 1
    tree_rules = _fit_rules(A, y, _hidden_names(level, A.shape[1]), n_classes, config)
    registry = ConditionRegistry()
    rules = []
    for index, r in enumerate(tree_rules):
        body = []
        for t in r.conditions:
            registry, lit = process_condition(to_condition(t, keys), registry)
            body.append(lit)
        rules.append(LogicRule(OutputAtom(r.class_label, index, trees.confidence(r)), tuple(body),
                               note=_note("top", index, r)))
    return rules, registry, tree_rules


def evaluate_condition(t: Condition, trace: ActivationTrace) -> np.ndarray:
    """Truth of ``t`` on every traced instance, compared against the exact real threshold."""
    layer = trace.layer(t.level)
    if not 0 <= t.node < layer.shape[1]:
        raise ExtractionError(f"node {t.node} outside layer {t.level} of width {layer.shape[1]}")
    return t.holds(layer[:, t.node])


def extract_intermediate_level(A: np.ndarray, labels: np.ndarray, t: Condition,
                               config: ExtractionConfig = ExtractionConfig(), keys: KeyTable | None = None):
    """Rules deriving ``t``'s atom from conditions on layer ``t.level - 1`` (activations ``A``).

    Only tree rules predicting True are kept.  Returns (rules, registry, tree_rules)
    where the registry is fresh for this call.
    """
    keys = keys if keys is not None else KeyTable(config.scale)
    labels = np.asarray(labels).astype(bool)
    tree_rules = _fit_rules(A, labels.astype(int), _hidden_names(t.level - 1, A.shape[1]), 2, config)
    registry = ConditionRegistry()
    rules = []
    for i, r in enumerate(tree_rules):
        if r.class_label != 1:
            continue
        body = []
        for c in r.conditions:
            registry, lit = process_condition(to_condition(c, keys), registry)
            body.append(lit)
        rules.append(LogicRule(t.atom, tuple(body), note=_note(str(t) + ":", i, r)))
    return rules, registry, tree_rules


def extract_bottom_level(X: np.ndarray, labels: np.ndarray, t: Condition, feature_names: Sequence[str],
                         config: ExtractionConfig = ExtractionConfig()):
    """Rules deriving a layer-1 condition's atom from input comparisons; True-class tree rules only.

    Returns (rules, tree_rules).
    """
    if t.level != 1:
        raise ExtractionError(f"bottom-level extraction needs a layer-1 condition, got level {t.level}")
    labels = np.asarray(labels).astype(bool)
    tree_rules = _fit_rules(X, labels.astype(int), list(feature_names), 2, config)
    rules = []
    for i, r in enumerate(tree_rules):
        if r.class_label != 1:
            continue
        body = []
        for c in r.conditions:
            var = f"V{c.index}"
            body += [InputBinding(c.attribute, var), Comparison(var, c.op, c.threshold)]
        rules.append(LogicRule(t.atom, tuple(body), note=_note(str(t) + ":", i, r)))
    return rules, tree_rules


@dataclass
class LayerStats:
    level: int
    conditions: int = 0          # distinct conditions on this layer that got explained
    tree_conditions: int = 0     # condition occurrences on this layer in converted tree rules


@dataclass
class ExtractionResult:
    program: Program
    conditions: dict[int, list[Condition]] = field(default_factory=dict)
    layer_stats: dict[int, LayerStats] = field(default_factory=dict)

    @property
    def registered_count(self) -> int:
        return sum(len(v) for v in self.conditions.values())


def _dedupe(rules: Iterable[LogicRule]) -> tuple[LogicRule, ...]:
    seen = set()
    out = []
    for r in rules:
        sig = (r.head, r.body)
        if sig not in seen:
            seen.add(sig)
            out.append(r)
    return tuple(out)


def extract_from_trace(trace: ActivationTrace, X: np.ndarray, y: np.ndarray, feature_names: Sequence[str],
                       class_count: int | None = None, config: ExtractionConfig = ExtractionConfig()) -> ExtractionResult:
    """Run the full top / intermediate / bottom extraction on precomputed activations.

    With one hidden layer the intermediate stage is empty and the top-level
    conditions go straight to bottom-level extraction.
    """
    k = trace.depth
    if k < 1:
        raise ExtractionError("extraction needs at least one hidden layer")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if len(X) != len(trace) or len(y) != len(X):
        raise ExtractionError("trace, inputs and labels must have the same number of rows")
    if X.shape[1] != len(feature_names):
        raise ExtractionError(f"{len(feature_names)} feature names for {X.shape[1]} input columns")
    class_count = class_count if class_count is not None else int(y.max()) + 1
    keys = KeyTable(config.scale)
    stats = {i: LayerStats(i) for i in range(1, k + 1)}

    top_rules, registry, _ = extract_top_level(trace.layer(k), y, k, config, keys, class_count)
    program_rules = list(top_rules)
    stats[k].tree_conditions += sum(len(r.body) for r in top_rules)
    worklist = registry.sorted()
    explained: dict[int, list[Condition]] = {}

    for i in range(k - 1, 0, -1):
        explained[i + 1] = worklist
        stats[i + 1].conditions = len(worklist)
        merged: dict[tuple, Condition] = {}
        for t in worklist:
            labels = evaluate_condition(t, trace)
            rules, reg, _ = extract_intermediate_level(trace.layer(i), labels, t, config, keys)
            program_rules += rules
            stats[i].tree_conditions += sum(len(r.body) for r in rules)
            for c in reg:
                merged.setdefault(c.identity, c)
        worklist = sorted(merged.values(), key=Condition.sort_key)
        log.debug("layer %d: %d conditions to explain", i, len(worklist))

    explained[1] = worklist
    stats[1].conditions = len(worklist)
    for t in worklist:
        labels = evaluate_condition(t, trace)
        rules, _ = extract_bottom_level(X, labels, t, feature_names, config)
        program_rules += rules

    counts = np.bincount(y, minlength=class_count)
    meta = ProgramMeta(k, tuple(feature_names), class_count, int(np.argmax(counts)))
    return ExtractionResult(Program(_dedupe(program_rules), meta), explained, stats)


def extract_detailed(model: Mlp, dataset: Dataset, config: ExtractionConfig = ExtractionConfig()) -> ExtractionResult:
    if dataset.n_features != model.input_dim:
        raise ExtractionError(f"model expects {model.input_dim} features, dataset has {dataset.n_features}")
    if len(dataset) == 0:
        raise ExtractionError("cannot extract from an empty dataset")
    trace = capture_activations(model, dataset)
    return extract_from_trace(trace, dataset.X, dataset.y, dataset.feature_names, dataset.class_count, config)


def extract(model: Mlp, dataset: Dataset, config: ExtractionConfig = ExtractionConfig()) -> Program:
    return extract_detailed(model, dataset, config).program


def layer_of(element) -> int:
    """Network level an atom or body element refers to: inputs 0, hidden i, outputs -1 (caller maps to k+1)."""
    if isinstance(element, (Pos, Neg)):
        return element.atom.level
    if isinstance(element, HiddenAtom):
        return element.level
    if isinstance(element, (InputBinding, Comparison)):
        return 0
    return -1


def check_layering(program: Program) -> list[str]:
    """Violations of the rule layering: a head on level i may only use level i - 1 in its body."""
    k = program.meta.layer_count
    problems = []
    for r in program.rules:
        head_level = k + 1 if isinstance(r.head, OutputAtom) else r.head.level
        for el in r.body:
            if layer_of(el) != head_level - 1:
                problems.append(f"{r.head}: body element {el} is not on level {head_level - 1}")
    return problems
