import pytest

from nnasp.program import (
    Comparison,
    HiddenAtom,
    InputBinding,
    LogicRule,
    Neg,
    OutputAtom,
    Pos,
    Program,
    ProgramMeta,
)

H20 = HiddenAtom(2, 0, "leq", -372440)
H11_LEQ = HiddenAtom(1, 1, "leq", 223235)
H11_GT = HiddenAtom(1, 1, "gt", 745526)


def _inputs(op0, op1):
    return (InputBinding("input_feat_0", "V0"), Comparison("V0", op0, 0.0),
            InputBinding("input_feat_1", "V1"), Comparison("V1", op1, 0.0))


def build_xor_program() -> Program:
    """The six-rule program for the 2-4-2-1 XOR network, written out by hand."""
    rules = (
        LogicRule(OutputAtom(0, 0, 1.0), (Pos(H20),)),
        LogicRule(OutputAtom(1, 1, 1.0), (Neg(H20),)),
        LogicRule(H20, (Pos(H11_LEQ),)),
        LogicRule(H20, (Pos(H11_GT),)),
        LogicRule(H11_LEQ, _inputs("leq", "leq")),
        LogicRule(H11_GT, _inputs("gt", "gt")),
    )
    return Program(rules, ProgramMeta(2, ("input_feat_0", "input_feat_1"), 2, 0))


@pytest.fixture
def xor_program() -> Program:
    return build_xor_program()
