"""Extracted logic programs: representation, stratified evaluation, class prediction, ASP text output.

Atoms are ground except in bottom-level rules, whose bodies bind one variable
per input feature through an ``input(Feature, V)`` atom and compare it with a
real bound.  Evaluation computes the unique answer set stratum by stratum;
``not A`` is read against the completed lower strata.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from functools import cached_property
from typing import Iterable, Sequence, Union

from .dataset import Instance

LEQ = "leq"
GT = "gt"
DEFAULT_SCALE = 10 ** 6


class ProgramError(ValueError):
    pass


class StratificationError(ProgramError):
    pass


def fixed_point(value: float, scale: int = DEFAULT_SCALE) -> int:
    """trunc(value * scale) toward zero, computed on the shortest decimal form of ``value``.

    >>> fixed_point(-0.37244028)
    -372440
    """
    return int((Decimal(repr(float(value))) * scale).to_integral_value(rounding=ROUND_DOWN))


@dataclass(frozen=True, order=True)
class HiddenAtom:
    """h(level, node, op, key, true); ``tag`` separates thresholds whose fixed-point keys collide."""

    level: int
    node: int
    op: str
    key: int
    tag: int = 0

    def opposite(self) -> "HiddenAtom":
        return HiddenAtom(self.level, self.node, GT if self.op == LEQ else LEQ, self.key, self.tag)

    def key_term(self) -> str:
        return str(self.key) if self.tag == 0 else f'"{self.key}_{self.tag}"'

    def __str__(self):
        return f'h({self.level},{self.node},"{self.op}",{self.key_term()},true)'


@dataclass(frozen=True)
class OutputAtom:
    class_id: int
    rule_index: int
    confidence: float

    def to_text(self, scale: int = DEFAULT_SCALE) -> str:
        return f"potential_predict_output({self.class_id},{self.rule_index},{fixed_point(self.confidence, scale)})"

    def __str__(self):
        return f"potential_predict_output({self.class_id},{self.rule_index},{self.confidence:g})"


@dataclass(frozen=True)
class InputAtom:
    feature: str
    value: float

    def __str__(self):
        return f"input({_constant(self.feature)},{self.value!r})"


Atom = Union[HiddenAtom, OutputAtom, InputAtom]


@dataclass(frozen=True)
class Pos:
    atom: HiddenAtom


@dataclass(frozen=True)
class Neg:
    atom: HiddenAtom


@dataclass(frozen=True)
class InputBinding:
    feature: str
    var: str


@dataclass(frozen=True)
class Comparison:
    var: str
    op: str
    bound: float

    def holds(self, value: float) -> bool:
        return value <= self.bound if self.op == LEQ else value > self.bound


BodyElement = Union[Pos, Neg, InputBinding, Comparison]


@dataclass(frozen=True)
class LogicRule:
    head: Union[HiddenAtom, OutputAtom]
    body: tuple[BodyElement, ...] = ()
    note: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        if not isinstance(self.head, (HiddenAtom, OutputAtom)):
            raise ProgramError(f"rule heads must be h/5 or potential_predict_output/3 atoms, got {self.head!r}")
        bound = set()
        for el in self.body:
            if isinstance(el, (Pos, Neg)) and not isinstance(el.atom, HiddenAtom):
                raise ProgramError("only h/5 atoms may appear as body literals")
            if isinstance(el, InputBinding):
                bound.add(el.var)
            elif isinstance(el, Comparison) and el.var not in bound:
                raise ProgramError(f"comparison on unbound variable {el.var}")

    @property
    def is_fact(self) -> bool:
        return not self.body

    def body_atoms(self) -> Iterable[tuple[bool, HiddenAtom]]:
        for el in self.body:
            if isinstance(el, Pos):
                yield True, el.atom
            elif isinstance(el, Neg):
                yield False, el.atom


@dataclass(frozen=True)
class ProgramMeta:
    layer_count: int
    feature_names: tuple[str, ...]
    class_count: int = 2
    majority_class: int = 0


@dataclass(frozen=True)
class AnswerSet:
    atoms: frozenset

    def __contains__(self, atom) -> bool:
        return atom in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)

    def outputs(self) -> list[OutputAtom]:
        return sorted((a for a in self.atoms if isinstance(a, OutputAtom)),
                      key=lambda a: (a.class_id, a.rule_index))

    def hidden(self) -> list[HiddenAtom]:
        return sorted(a for a in self.atoms if isinstance(a, HiddenAtom))


@dataclass(frozen=True)
class Prediction:
    class_id: int
    support_count: int
    best_confidence: float
    abstained: bool


@dataclass(frozen=True)
class Program:
    rules: tuple[LogicRule, ...]
    meta: ProgramMeta

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def __len__(self) -> int:
        return len(self.rules)

    @cached_property
    def strata(self) -> tuple[tuple[LogicRule, ...], ...]:
        return stratify(self.rules)

    def head_atoms(self) -> set:
        return {r.head for r in self.rules}


def stratify(rules: Sequence[LogicRule]) -> tuple[tuple[LogicRule, ...], ...]:
    """Group rules by the stratum of their head under the least level mapping.

    Positive dependencies need level(head) >= level(body atom), negative ones
    level(head) > level(body atom).  Output atoms form the last stratum.  Raises StratificationError when no such
    mapping exists (a cycle through negation).
    """
    heads = {r.head for r in rules}
    level: dict = defaultdict(int)
    limit = len(heads) + 1
    changed = True
    while changed:
        changed = False
        for r in rules:
            need = level[r.head]
            for positive, atom in r.body_atoms():
                if atom in heads:
                    need = max(need, level[atom] + (0 if positive else 1))
            if need > level[r.head]:
                if need > limit:
                    raise StratificationError("program is not stratified: negation inside a dependency cycle")
                level[r.head] = need
                changed = True
    # output atoms never occur in bodies, so they can all sit in one final stratum
    top = max((level[h] for h in heads if not isinstance(h, OutputAtom)), default=-1) + 1
    grouped: dict[int, list[LogicRule]] = defaultdict(list)
    for r in rules:
        grouped[top if isinstance(r.head, OutputAtom) else level[r.head]].append(r)
    return tuple(tuple(grouped[s]) for s in sorted(grouped))


def _body_holds(rule: LogicRule, derived: set, inputs: dict[str, float]) -> bool:
    env: dict[str, float] = {}
    for el in rule.body:
        if isinstance(el, Pos):
            if el.atom not in derived:
                return False
        elif isinstance(el, Neg):
            if el.atom in derived:
                return False
        elif isinstance(el, InputBinding):
            if el.feature not in inputs:
                return False
            env[el.var] = inputs[el.feature]
        elif not el.holds(env[el.var]):
            return False
    return True


def input_facts(program: Program, features) -> set[InputAtom]:
    if isinstance(features, Instance):
        features = features.features
    names = program.meta.feature_names
    if len(features) != len(names):
        raise ProgramError(f"program expects {len(names)} features, got {len(features)}")
    return {InputAtom(n, float(v)) for n, v in zip(names, features)}


def _input_map(program: Program, facts: Iterable[InputAtom]) -> dict[str, float]:
    values: dict[str, float] = {}
    for fact in facts:
        if not isinstance(fact, InputAtom):
            raise ProgramError(f"input facts must be input/2 atoms, got {fact!r}")
        if fact.feature in values:
            raise ProgramError(f"two input facts for feature {fact.feature!r}")
        values[fact.feature] = fact.value
    expected = set(program.meta.feature_names)
    if set(values) != expected:
        missing = sorted(expected - set(values))
        extra = sorted(set(values) - expected)
        raise ProgramError(f"input arity mismatch: missing {missing}, unexpected {extra}")
    return values


def evaluate(program: Program, facts: Iterable[InputAtom], reverse: bool = False) -> AnswerSet:
    """The unique answer set of program + facts, by iterated fixpoint over the strata.

    ``reverse`` visits the rules of each stratum in reverse order; the result
    must not change (see :func:`double_evaluate_check`).
    """
    facts = set(facts)
    inputs = _input_map(program, facts)
    derived: set = set()
    for stratum in program.strata:
        rules = stratum[::-1] if reverse else stratum
        pending = list(rules)
        while pending:
            fired = [r for r in pending if r.head not in derived and _body_holds(r, derived, inputs)]
            if not fired:
                break
            derived.update(r.head for r in fired)
            pending = [r for r in pending if r.head not in derived]
    return AnswerSet(frozenset(facts | derived))


def rank_classes(outputs: Sequence[OutputAtom]) -> list[tuple[int, int, float]]:
    """(class, count, best confidence) sorted best first: more atoms, then higher confidence, then smaller id."""
    stats: dict[int, list] = {}
    for a in outputs:
        s = stats.setdefault(a.class_id, [0, float("-inf")])
        s[0] += 1
        s[1] = max(s[1], a.confidence)
    return sorted(((c, n, conf) for c, (n, conf) in stats.items()), key=lambda t: (-t[1], -t[2], t[0]))


def most_appropriate_class(answer: AnswerSet, fallback: int = 0) -> Prediction:
    ranked = rank_classes(answer.outputs())
    if not ranked:
        return Prediction(fallback, 0, 0.0, True)
    c, n, conf = ranked[0]
    return Prediction(c, n, conf, False)


def predict(program: Program, instance) -> Prediction:
    """Most appropriate class for one instance; abstains to the training-majority class."""
    answer = evaluate(program, input_facts(program, instance))
    return most_appropriate_class(answer, program.meta.majority_class)


def predict_many(program: Program, X) -> list[Prediction]:
    return [predict(program, row) for row in X]


def double_evaluate_check(program: Program, instance) -> bool:
    facts = input_facts(program, instance)
    return evaluate(program, facts) == evaluate(program, facts, reverse=True)


_IDENT = re.compile(r"^[a-z][A-Za-z0-9_]*$")


def _constant(name: str) -> str:
    return name if _IDENT.match(name) else '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _element_text(el: BodyElement, scale: int) -> str:
    if isinstance(el, Pos):
        return str(el.atom)
    if isinstance(el, Neg):
        return f"not {el.atom}"
    if isinstance(el, InputBinding):
        return f"input({_constant(el.feature)},{el.var})"
    return f"{el.var} {'<=' if el.op == LEQ else '>'} {fixed_point(el.bound, scale)}"


def rule_text(rule: LogicRule, scale: int = DEFAULT_SCALE) -> str:
    head = rule.head.to_text(scale) if isinstance(rule.head, OutputAtom) else str(rule.head)
    if rule.is_fact:
        return f"{head}."
    return f"{head} :- {', '.join(_element_text(el, scale) for el in rule.body)}."


def emit_text(program: Program, scale: int = DEFAULT_SCALE, comments: bool = True) -> str:
    """ASP source, one rule per line in program order; reals become fixed-point integers."""
    lines = []
    for rule in program.rules:
        if comments and rule.note:
            lines.append(f"% {rule.note}")
        lines.append(rule_text(rule, scale))
    return "".join(line + "\n" for line in lines)


def emit_facts(program: Program, instance, scale: int = DEFAULT_SCALE) -> str:
    """input/2 facts for one instance, values in the same fixed-point encoding as the rule bounds."""
    facts = sorted(input_facts(program, instance), key=lambda f: program.meta.feature_names.index(f.feature))
    return "".join(f"input({_constant(f.feature)},{fixed_point(f.value, scale)}).\n" for f in facts)


def _atom_to_dict(atom) -> dict:
    if isinstance(atom, HiddenAtom):
        return {"h": [atom.level, atom.node, atom.op, atom.key, atom.tag]}
    return {"output": [atom.class_id, atom.rule_index, atom.confidence]}


def _atom_from_dict(doc: dict):
    if "h" in doc:
        level, node, op, key, tag = doc["h"]
        if op not in (LEQ, GT):
            raise ProgramError(f"unknown comparison {op!r}")
        return HiddenAtom(int(level), int(node), op, int(key), int(tag))
    if "output" in doc:
        c, i, conf = doc["output"]
        return OutputAtom(int(c), int(i), float(conf))
    raise ProgramError(f"not an atom: {doc!r}")


def program_to_dict(program: Program) -> dict:
    """Lossless JSON form; thresholds keep full float precision (unlike the ASP text)."""
    rules = []
    for r in program.rules:
        body = []
        for el in r.body:
            if isinstance(el, Pos):
                body.append({"pos": _atom_to_dict(el.atom)})
            elif isinstance(el, Neg):
                body.append({"neg": _atom_to_dict(el.atom)})
            elif isinstance(el, InputBinding):
                body.append({"input": [el.feature, el.var]})
            else:
                body.append({"cmp": [el.var, el.op, el.bound]})
        rules.append({"head": _atom_to_dict(r.head), "body": body, "note": r.note})
    m = program.meta
    return {"format": "nnasp-program/1",
            "meta": {"layer_count": m.layer_count, "feature_names": list(m.feature_names),
                     "class_count": m.class_count, "majority_class": m.majority_class},
            "rules": rules}


def program_from_dict(doc: dict) -> Program:
    try:
        m = doc["meta"]
        meta = ProgramMeta(int(m["layer_count"]), tuple(m["feature_names"]), int(m["class_count"]),
                           int(m["majority_class"]))
        rules = []
        for r in doc["rules"]:
            body = []
            for el in r["body"]:
                (kind, val), = el.items()
                if kind == "pos":
                    body.append(Pos(_atom_from_dict(val)))
                elif kind == "neg":
                    body.append(Neg(_atom_from_dict(val)))
                elif kind == "input":
                    body.append(InputBinding(str(val[0]), str(val[1])))
                elif kind == "cmp":
                    body.append(Comparison(str(val[0]), val[1], float(val[2])))
                else:
                    raise ProgramError(f"unknown body element {kind!r}")
            rules.append(LogicRule(_atom_from_dict(r["head"]), tuple(body), r.get("note", "")))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ProgramError):
            raise
        raise ProgramError(f"malformed program document: {exc}") from exc
    return Program(tuple(rules), meta)


def save_program(program: Program, path) -> None:
    with open(path, "w") as fh:
        json.dump(program_to_dict(program), fh, indent=1)
        fh.write("\n")


def load_program(path) -> Program:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProgramError(f"{path}: not valid JSON ({exc})") from exc
    return program_from_dict(doc)
