import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import H11_GT, H11_LEQ, H20, build_xor_program
from nnasp import extraction as E
from nnasp import network as nw
from nnasp import program as P
from nnasp import tree as T
from nnasp.dataset import Dataset, gen_xor, xor_truth_table
from nnasp.program import HiddenAtom, LogicRule, Neg, OutputAtom, Pos

LAYER2 = np.array([
    [-0.4413446, 0.6062831],
    [-0.23081768, -0.6257931],
    [0.5207858, 0.9767507],
    [-0.37244028, 0.6900585],
] * 2)
LAYER1 = np.array([
    [-0.33337042, 0.22323501, -0.35911334, -0.30652052],
    [-0.93152505, 0.74552625, 0.43851086, -0.88826376],
    [0.41850552, 0.7016869, -0.83853734, 0.4565624],
    [-0.70506656, 0.92262095, -0.35396752, -0.5398724],
] * 2)
INPUTS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 2, dtype=float)
LABELS = np.array([0, 1, 1, 0] * 2)
FEATURES = ("input_feat_0", "input_feat_1")


def masked_layer1():
    # node 1 alone carries the signal; the other columns are held constant
    A = LAYER1.copy()
    A[:, [0, 2, 3]] = 0.0
    return A


def cond(level, node, op, threshold):
    return E.KeyTable().condition(level, node, op, threshold)


def test_process_condition_examples():
    reg = E.ConditionRegistry()
    t = T.AttrCondition("h_2_n_0", T.LEQ, -0.37244028)
    reg, lit = E.process_condition(t, reg)
    assert lit == Pos(H20) and len(reg) == 1
    reg, lit = E.process_condition(T.AttrCondition("h_2_n_0", T.GT, -0.37244028), reg)
    assert lit == Neg(H20) and len(reg) == 1
    reg, lit = E.process_condition(t, reg)
    assert lit == Pos(H20) and len(reg) == 1
    with pytest.raises(E.ExtractionError):
        E.process_condition(T.AttrCondition("input_feat_0", T.LEQ, 0.0), reg)


def test_registry_rejects_opposites():
    reg = E.ConditionRegistry([cond(1, 0, "leq", 0.5)])
    with pytest.raises(E.ExtractionError):
        reg.add(cond(1, 0, "gt", 0.5))


def test_key_collisions_are_tagged():
    keys = E.KeyTable()
    a = keys.condition(1, 0, "leq", 0.1234561)
    b = keys.condition(1, 0, "leq", 0.1234569)
    c = keys.condition(1, 1, "leq", 0.1234569)
    assert (a.key, a.tag) == (123456, 0)
    assert (b.key, b.tag) == (123456, 1)
    assert c.tag == 0
    assert keys.condition(1, 0, "gt", 0.1234569).atom == b.atom.opposite()


def test_top_level_table1():
    rules, reg, _ = E.extract_top_level(LAYER2, LABELS, 2)
    assert rules == [LogicRule(OutputAtom(0, 0, 1.0), (Pos(H20),)),
                     LogicRule(OutputAtom(1, 1, 1.0), (Neg(H20),))]
    assert [str(c) for c in reg] == ["h_2_n_0 <= -0.37244028"]
    assert rules[0].note  # provenance comment


def test_top_level_single_class_is_fact():
    rules, reg, _ = E.extract_top_level(LAYER2, np.zeros(8, dtype=int), 2, n_classes=2)
    assert rules == [LogicRule(OutputAtom(0, 0, 1.0), ())]
    assert len(reg) == 0


def test_evaluate_condition_matches_table2_column():
    trace = nw.ActivationTrace((LAYER1, LAYER2))
    t = cond(2, 0, "leq", -0.37244028)
    assert list(E.evaluate_condition(t, trace)) == [True, False, False, True] * 2
    assert E.evaluate_condition(cond(2, 1, "leq", 10.0), trace).all()
    # exact threshold, not the truncated key: -0.3724405 is below -0.37244028 but has the same key
    assert not E.evaluate_condition(cond(2, 0, "leq", -0.3724405), trace)[3]
    with pytest.raises(E.ExtractionError):
        E.evaluate_condition(cond(2, 5, "leq", 0.0), trace)


def test_intermediate_on_masked_table2():
    labels = np.array([True, False, False, True] * 2)
    rules, reg, _ = E.extract_intermediate_level(masked_layer1(), labels, cond(2, 0, "leq", -0.37244028))
    assert rules == [LogicRule(H20, (Pos(H11_LEQ),)), LogicRule(H20, (Pos(H11_GT),))]
    assert sorted(str(c) for c in reg) == ["h_1_n_1 <= 0.22323501", "h_1_n_1 > 0.74552625"]


def test_intermediate_on_full_table2_explains_labels():
    # four nodes separate the data equally well; the tie goes to node 0
    labels = np.array([True, False, False, True] * 2)
    rules, reg, tree_rules = E.extract_intermediate_level(LAYER1, labels, cond(2, 0, "leq", -0.37244028))
    assert all(r.head == H20 for r in rules)
    assert {c.node for c in reg} == {0}
    fired = np.zeros(8, dtype=bool)
    for r in tree_rules:
        if r.class_label == 1:
            fired |= r.matches(LAYER1)
    assert np.array_equal(fired, labels)


def test_intermediate_all_false_and_all_true():
    t = cond(2, 0, "leq", 0.0)
    rules, reg, _ = E.extract_intermediate_level(LAYER1, np.zeros(8, dtype=bool), t)
    assert rules == [] and len(reg) == 0
    rules, reg, _ = E.extract_intermediate_level(LAYER1, np.ones(8, dtype=bool), t)
    assert rules == [LogicRule(t.atom, ())]


def test_bottom_level_examples():
    labels = LAYER1[:, 1] <= 0.22323501
    rules, _ = E.extract_bottom_level(INPUTS, labels, cond(1, 1, "leq", 0.22323501), FEATURES)
    assert rules == [build_xor_program().rules[4]]
    labels = LAYER1[:, 1] > 0.74552625
    rules, _ = E.extract_bottom_level(INPUTS, labels, cond(1, 1, "gt", 0.74552625), FEATURES)
    assert rules == [build_xor_program().rules[5]]
    with pytest.raises(E.ExtractionError):
        E.extract_bottom_level(INPUTS, labels, cond(2, 0, "leq", 0.0), FEATURES)


def test_full_extraction_reproduces_reference_program():
    trace = nw.ActivationTrace((masked_layer1(), LAYER2))
    result = E.extract_from_trace(trace, INPUTS, LABELS, FEATURES, 2)
    assert result.program == build_xor_program()
    assert E.check_layering(result.program) == []
    text = P.emit_text(result.program, comments=False)
    assert text == P.emit_text(build_xor_program())


def test_single_hidden_layer_goes_top_to_bottom():
    data = gen_xor(120, 3, seed=1)
    model = nw.init([6, 1], 3, seed=2)
    model = nw.train(model, data, nw.TrainConfig(30, 10, 0.1, seed=0)).model
    result = E.extract_detailed(model, data)
    prog = result.program
    assert prog.meta.layer_count == 1
    assert E.check_layering(prog) == []
    assert all(r.head.level == 1 for r in prog.rules if isinstance(r.head, HiddenAtom))


def test_constant_last_layer_gives_majority_fact():
    model = nw.init([3, 2, 1], 2, seed=0)
    layers = list(model.layers)
    layers[1] = nw.LayerSpec(np.zeros((2, 3)), np.array([0.3, -0.2]), "tanh")
    model = nw.Mlp(2, tuple(layers))
    data = Dataset.from_arrays(INPUTS[:5], [0, 1, 1, 0, 0])
    prog = E.extract(model, data)
    assert prog.rules == (LogicRule(OutputAtom(0, 0, 0.6), ()),)


def test_extract_arity_error():
    model = nw.init([3, 1], 4)
    with pytest.raises(E.ExtractionError, match="4 features.*2"):
        E.extract(model, xor_truth_table())


def test_toy_network_extraction_predicts_xor():
    data = xor_truth_table(2)
    model = nw.init([4, 2, 1], 2, seed=4)
    model = nw.train(model, data, nw.TrainConfig(500, 4, 0.05, seed=4)).model
    prog = E.extract(model, data)
    assert [P.predict(prog, inst).class_id for inst in data.instances] == list(data.y)
    assert E.extract(model, data) == prog  # pure


def _random_extraction(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    widths = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(1, 4)))]
    data = gen_xor(int(rng.integers(20, 60)), d, seed=int(rng.integers(1 << 30)))
    model = nw.init(widths + [1], d, seed=int(rng.integers(1 << 30)))
    return model, data, E.extract_detailed(model, data, E.ExtractionConfig(T.TreeParams(int(rng.integers(1, 4)), 6)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_extraction_invariants(seed):
    model, data, result = _random_extraction(seed)
    prog = result.program
    assert E.check_layering(prog) == []
    heads = {r.head for r in prog.rules if isinstance(r.head, HiddenAtom)}
    assert len(heads) <= result.registered_count
    for stats in result.layer_stats.values():
        assert stats.conditions <= stats.tree_conditions
    # every negated atom's positive form is a condition that gets explained
    explained = {c.atom for cs in result.conditions.values() for c in cs}
    for r in prog.rules:
        for positive, atom in r.body_atoms():
            assert atom in explained
    for x in data.X[:5]:
        assert P.double_evaluate_check(prog, x)
