"""Accuracy, fidelity, feature importance, hidden-node impact, and the cross-validated experiment driver."""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import network as nw
from . import tree as trees
from .dataset import Dataset, gen_modified_xor, gen_xor, load_csv, stratified_kfold
from .extraction import ExtractionConfig, extract_detailed
from .program import InputBinding, HiddenAtom, Neg, Pos, Program, predict

log = logging.getLogger(__name__)


class AnalysisError(ValueError):
    pass


def program_accuracy(program: Program, dataset: Dataset) -> float:
    """Percent of instances whose most appropriate class equals the label (abstentions use the fallback class)."""
    if len(dataset) == 0:
        raise AnalysisError("accuracy of an empty dataset is undefined")
    hits = sum(predict(program, inst).class_id == inst.label for inst in dataset.instances)
    return 100.0 * hits / len(dataset)


def program_scores(program: Program, dataset: Dataset) -> tuple[float, float]:
    """(accuracy %, abstention rate %) in one pass."""
    if len(dataset) == 0:
        raise AnalysisError("accuracy of an empty dataset is undefined")
    hits = abstained = 0
    for inst in dataset.instances:
        p = predict(program, inst)
        hits += p.class_id == inst.label
        abstained += p.abstained
    return 100.0 * hits / len(dataset), 100.0 * abstained / len(dataset)


def fidelity(model_acc: float, program_acc: float) -> float:
    """Program accuracy as a percentage of model accuracy."""
    if model_acc <= 0:
        raise AnalysisError("fidelity undefined when the model accuracy is 0")
    return program_acc / model_acc * 100.0


@dataclass
class FeatureImportance:
    counts: dict[str, int]
    shares: dict[str, float]

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.shares.items(), key=lambda kv: (-kv[1], list(self.shares).index(kv[0])))


def feature_importance(program: Program) -> FeatureImportance:
    """Occurrences of input(feature, _) across rule bodies, and each feature's share of the total in percent."""
    counts = {name: 0 for name in program.meta.feature_names}
    for rule in program.rules:
        for el in rule.body:
            if isinstance(el, InputBinding):
                counts[el.feature] = counts.get(el.feature, 0) + 1
    total = sum(counts.values())
    shares = {f: (100.0 * c / total if total else 0.0) for f, c in counts.items()}
    return FeatureImportance(counts, shares)


@dataclass
class NodeImpactRow:
    level: int
    node: int
    head_count: int
    body_count: int
    impact: int
    share: float


def hidden_node_impact(program: Program, layer_widths: Sequence[int] | None = None) -> list[NodeImpactRow]:
    """Per hidden node: h/5 head occurrences x body occurrences (positive and negated), share within its layer.

    Nodes that never occur are listed with impact 0 when ``layer_widths`` is given.
    """
    heads: dict[tuple[int, int], int] = {}
    bodies: dict[tuple[int, int], int] = {}
    for rule in program.rules:
        if isinstance(rule.head, HiddenAtom):
            key = (rule.head.level, rule.head.node)
            heads[key] = heads.get(key, 0) + 1
        for el in rule.body:
            if isinstance(el, (Pos, Neg)):
                key = (el.atom.level, el.atom.node)
                bodies[key] = bodies.get(key, 0) + 1
    nodes = set(heads) | set(bodies)
    if layer_widths is not None:
        nodes |= {(i + 1, j) for i, w in enumerate(layer_widths) for j in range(w)}
    layer_total: dict[int, int] = {}
    for key in nodes:
        layer_total[key[0]] = layer_total.get(key[0], 0) + heads.get(key, 0) * bodies.get(key, 0)
    rows = []
    for level, node in sorted(nodes):
        h, b = heads.get((level, node), 0), bodies.get((level, node), 0)
        total = layer_total[level]
        rows.append(NodeImpactRow(level, node, h, b, h * b, 100.0 * h * b / total if total else 0.0))
    return rows


def top_share(rows: Sequence[NodeImpactRow], level: int, n: int) -> float:
    """Summed share of the ``n`` highest-impact nodes of one layer."""
    shares = sorted((r.share for r in rows if r.level == level), reverse=True)
    return sum(shares[:n])


def baseline_tree_accuracy(dataset: Dataset, k: int = 5, seed: int = 0,
                           params: trees.TreeParams = trees.TreeParams()) -> float:
    """Cross-validated accuracy (%) of the tree learner fit directly on the input features."""
    correct = 0
    for fold in stratified_kfold(dataset, k, seed):
        tree = trees.fit(fold.train.X, fold.train.y, fold.train.feature_names, params,
                         n_classes=dataset.class_count)
        correct += int((tree.predict(fold.test.X) == fold.test.y).sum())
    return 100.0 * correct / len(dataset)


@dataclass(frozen=True)
class Design:
    name: str
    hidden: tuple[int, ...]
    epochs: int
    batch_size: int
    activation: str = "tanh"
    output_activation: str = "sigmoid"
    learning_rate: float = 0.05
    optimizer: str = "sgd"

    @classmethod
    def from_dict(cls, doc: dict) -> "Design":
        doc = dict(doc)
        hidden = doc.pop("hidden")
        doc["hidden"] = tuple([hidden] if isinstance(hidden, int) else hidden)
        return cls(**doc)


@dataclass(frozen=True)
class ExperimentConfig:
    """A dataset, a grid of network designs, and the cross-validation / extraction settings."""

    designs: tuple[Design, ...]
    seed: int
    dataset_kind: str = "xor"     # xor | modified-xor | csv
    n: int = 1000
    d: int = 10
    data_seed: int = 0
    data_path: str | None = None
    k: int = 5
    min_leaf: int = 2
    max_depth: int = 10
    scale: int = 10 ** 6

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "seed" not in doc:
            raise AnalysisError("experiment config must set 'seed'")
        doc["designs"] = tuple(Design.from_dict(x) for x in doc.get("designs", ()))
        if not doc["designs"]:
            raise AnalysisError("experiment config needs at least one design")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise AnalysisError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def load_dataset(self) -> Dataset:
        if self.dataset_kind == "xor":
            return gen_xor(self.n, self.d, self.data_seed)
        if self.dataset_kind == "modified-xor":
            return gen_modified_xor(self.n, self.d, self.data_seed)
        if self.dataset_kind == "csv":
            if not self.data_path:
                raise AnalysisError("dataset_kind 'csv' needs data_path")
            return load_csv(self.data_path)
        raise AnalysisError(f"unknown dataset kind {self.dataset_kind!r}")

    @property
    def extraction(self) -> ExtractionConfig:
        return ExtractionConfig(trees.TreeParams(self.min_leaf, self.max_depth), self.scale)


@dataclass
class FoldResult:
    design: str
    fold: int
    model_accuracy: float
    program_accuracy: float
    fidelity: float
    abstention_rate: float
    rule_count: int
    registered_conditions: int
    feature_importance: dict[str, float]
    node_impact: list[dict]
    train_size: int
    test_size: int


@dataclass
class DesignSummary:
    design: Design
    folds: list[FoldResult] = field(default_factory=list)

    def _stat(self, attr: str) -> tuple[float, float]:
        vals = [getattr(f, attr) for f in self.folds]
        return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else 0.0)

    @property
    def model_accuracy(self) -> float:
        return self._stat("model_accuracy")[0]

    @property
    def program_accuracy(self) -> float:
        return self._stat("program_accuracy")[0]

    def to_dict(self) -> dict:
        out = {"design": asdict(self.design), "folds": [asdict(f) for f in self.folds]}
        for attr in ("model_accuracy", "program_accuracy", "fidelity", "abstention_rate"):
            mean, sd = self._stat(attr)
            out[f"mean_{attr}"] = mean
            out[f"std_{attr}"] = sd
        return out


def run_fold(design: Design, fold, config: ExperimentConfig) -> FoldResult:
    """Train on the fold's train split, extract from the train split, score both on the test split."""
    start = time.perf_counter()
    train, test = fold.train, fold.test
    seed = config.seed + fold.fold_index
    out_width = 1 if train.class_count <= 2 else train.class_count
    arch = [(w, design.activation) for w in design.hidden] + [(out_width, design.output_activation)]
    model = nw.init(arch, train.n_features, seed=seed)
    tc = nw.TrainConfig(design.epochs, min(design.batch_size, len(train)), design.learning_rate, seed,
                        design.optimizer)
    model = nw.train(model, train, tc).model
    result = extract_detailed(model, train, config.extraction)
    program = result.program
    model_acc = nw.accuracy(model, test)
    prog_acc, abstain = program_scores(program, test)
    impact = hidden_node_impact(program, list(design.hidden))
    elapsed = time.perf_counter() - start
    log.info("%s fold %d: model %.1f%% program %.1f%% (%d rules, %.1fs)", design.name, fold.fold_index,
             model_acc, prog_acc, len(program), elapsed)
    return FoldResult(
        design=design.name,
        fold=fold.fold_index,
        model_accuracy=model_acc,
        program_accuracy=prog_acc,
        fidelity=fidelity(model_acc, prog_acc) if model_acc > 0 else float("nan"),
        abstention_rate=abstain,
        rule_count=len(program),
        registered_conditions=result.registered_count,
        feature_importance=feature_importance(program).shares,
        node_impact=[asdict(r) for r in impact],
        train_size=len(train),
        test_size=len(test),
    )


def run_cv_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> list[DesignSummary]:
    dataset = dataset if dataset is not None else config.load_dataset()
    folds = stratified_kfold(dataset, config.k, config.seed)
    summaries = []
    for design in config.designs:
        summary = DesignSummary(design)
        for fold in folds:
            summary.folds.append(run_fold(design, fold, config))
        summaries.append(summary)
    return summaries


def experiment_report(config: ExperimentConfig, summaries: Sequence[DesignSummary]) -> dict:
    return {
        "config": asdict(config),
        "designs": [s.to_dict() for s in summaries],
    }


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=False)
        fh.write("\n")


def format_table(summaries: Sequence[DesignSummary]) -> str:
    """Plain-text table: design, hidden nodes, epochs, batch, mean model and program accuracy."""
    lines = [f"{'design':<12}{'hidden':>10}{'epochs':>8}{'batch':>7}{'M %':>8}{'Pi(M) %':>9}{'fid %':>8}"]
    for s in summaries:
        d = s.design
        fid = s._stat("fidelity")[0]
        lines.append(f"{d.name:<12}{'-'.join(map(str, d.hidden)):>10}{d.epochs:>8}{d.batch_size:>7}"
                     f"{s.model_accuracy:>8.1f}{s.program_accuracy:>9.1f}{fid:>8.1f}")
    return "\n".join(lines)
