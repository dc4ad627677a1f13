import random

import pytest

from currclean.data_model import AttributeSchema, Record
from currclean.rules import (
    WILDCARD,
    Psi1,
    Psi2,
    Psi3,
    RuleSyntaxError,
    cc_holds,
    derive_orders,
    parse_rules,
)

NBA_SCHEMA = [
    AttributeSchema("Pid", is_entity_key=True),
    AttributeSchema("Scores", kind="continuous"),
    AttributeSchema("Team"),
]

CAREER_MINI = [
    AttributeSchema("EID", is_entity_key=True),
    AttributeSchema("Company"),
    AttributeSchema("Title"),
    AttributeSchema("Group"),
    AttributeSchema("City"),
    AttributeSchema("Address"),
    AttributeSchema("Salary", kind="continuous"),
    AttributeSchema("Level", ordering=("P2", "P3", "P4")),
]


def rec(rid, eid="E1", **cells):
    base = {a.name: None for a in CAREER_MINI}
    base["EID"] = eid
    base.update(cells)
    return Record(rid, eid, base)


def by_name(schema):
    return {a.name: a for a in schema}


def test_parse_psi2_with_guard():
    ccs, cfds = parse_rules("CC psi2: same(Pid) & Scores < Scores' => PRECEDES(Scores)", NBA_SCHEMA)
    assert not cfds
    (cc,) = ccs
    assert cc.id == "psi2"
    assert cc.form == Psi2("Scores", "<")
    assert [(g.kind, g.attr) for g in cc.guards] == [("same", "Pid")]


def test_parse_psi1():
    ccs, _ = parse_rules(
        "CC psi1: same(Company) & Title='E' -> Title'='ME' => PRECEDES(Title)", CAREER_MINI
    )
    (cc,) = ccs
    assert cc.form == Psi1("Title", "E", "ME")
    assert [(g.kind, g.attr) for g in cc.guards] == [("same", "Company")]


def test_parse_psi3():
    ccs, _ = parse_rules("CC chain: PRECEDES(Title) => PRECEDES(Group)", CAREER_MINI)
    assert ccs[0].form == Psi3("Title", "Group")


def test_parse_constant_cfd():
    _, cfds = parse_rules("CFD: Company=Baidu, Group=Map -> City=Beijing", CAREER_MINI)
    (rule,) = cfds
    assert rule.lhs == (("Company", "Baidu"), ("Group", "Map"))
    assert rule.rhs == (("City", "Beijing"),)


def test_parse_variable_cfd():
    _, cfds = parse_rules("CFD: Address=_ -> City=_", CAREER_MINI)
    (rule,) = cfds
    assert rule.lhs == (("Address", WILDCARD),)
    assert rule.rhs == (("City", WILDCARD),)


def test_comments_and_blank_lines():
    text = "# header\n\nCC a: Scores < Scores' => PRECEDES(Scores)  # trailing\n"
    ccs, cfds = parse_rules(text, NBA_SCHEMA)
    assert len(ccs) == 1 and not cfds


def test_unknown_attribute_positions_error():
    with pytest.raises(RuleSyntaxError, match="line 2") as exc:
        parse_rules("# ok\nCC a: Wins < Wins' => PRECEDES(Wins)", NBA_SCHEMA)
    assert exc.value.line == 2
    assert "Wins" in exc.value.reason


def test_op_on_unordered_discrete_rejected():
    with pytest.raises(RuleSyntaxError, match="ordering"):
        parse_rules("CC a: Team < Team' => PRECEDES(Team)", NBA_SCHEMA)


def test_type_mismatched_constant_rejected():
    with pytest.raises(RuleSyntaxError, match="numeric"):
        parse_rules("CFD: Scores=abc -> Team=Lakers", NBA_SCHEMA)


def test_unknown_prefix_rejected():
    with pytest.raises(RuleSyntaxError, match="line 1"):
        parse_rules("RULE x: y", NBA_SCHEMA)


def test_cfd_sides_must_be_disjoint():
    with pytest.raises(RuleSyntaxError, match="disjoint"):
        parse_rules("CFD: Team=_ -> Team=_", NBA_SCHEMA)


def salary_cc():
    ccs, _ = parse_rules("CC s: Salary < Salary' => PRECEDES(Salary)", CAREER_MINI)
    return ccs[0]


def test_cc_holds_salary_comparison():
    a = rec(2, Salary=15000.0)
    b = rec(3, Salary=20000.0)
    assert cc_holds(salary_cc(), a, b, by_name(CAREER_MINI)) == (2, 3)
    assert cc_holds(salary_cc(), b, a, by_name(CAREER_MINI)) is None


def test_cc_holds_equal_values_do_not_fire():
    a, b = rec(0, Salary=22000.0), rec(1, Salary=22000.0)
    assert cc_holds(salary_cc(), a, b, by_name(CAREER_MINI)) is None


def test_cc_holds_missing_never_fires():
    a, b = rec(0, Salary=None), rec(1, Salary=20000.0)
    assert cc_holds(salary_cc(), a, b, by_name(CAREER_MINI)) is None


def test_cc_holds_psi3_consults_derived():
    ccs, _ = parse_rules("CC g: PRECEDES(Title) => PRECEDES(Group)", CAREER_MINI)
    a, b = rec(11), rec(12)
    assert cc_holds(ccs[0], a, b, by_name(CAREER_MINI), {("Title", 11, 12)}) == (11, 12)
    assert cc_holds(ccs[0], a, b, by_name(CAREER_MINI), set()) is None


def test_cc_holds_requires_same_entity():
    a, b = rec(0, eid="E1", Salary=1.0), rec(1, eid="E2", Salary=2.0)
    assert cc_holds(salary_cc(), a, b, by_name(CAREER_MINI)) is None


def test_guard_blocks_firing():
    ccs, _ = parse_rules(
        "CC t: same(Company) & Title='E' -> Title'='ME' => PRECEDES(Title)", CAREER_MINI
    )
    a = rec(0, Company="Baidu", Title="E")
    b = rec(1, Company="Alibaba", Title="ME")
    assert cc_holds(ccs[0], a, b, by_name(CAREER_MINI)) is None
    b2 = rec(1, Company="Baidu", Title="ME")
    assert cc_holds(ccs[0], a, b2, by_name(CAREER_MINI)) == (0, 1)


def test_antisymmetry_of_strict_ops_random():
    rng = random.Random(7)
    cc = salary_cc()
    names = by_name(CAREER_MINI)
    for _ in range(500):
        a = rec(0, Salary=float(rng.randint(0, 5)))
        b = rec(1, Salary=float(rng.randint(0, 5)))
        fwd = cc_holds(cc, a, b, names)
        bwd = cc_holds(cc, b, a, names)
        assert not (fwd and bwd)


def test_psi3_fixpoint_chains_across_rules():
    text = (
        "CC s: Salary < Salary' => PRECEDES(Salary)\n"
        "CC p1: PRECEDES(Salary) => PRECEDES(Title)\n"
        "CC p2: PRECEDES(Title) => PRECEDES(Group)\n"
    )
    ccs, _ = parse_rules(text, CAREER_MINI)
    a, b = rec(0, Salary=1.0), rec(1, Salary=2.0)
    concluded = derive_orders([a, b], ccs, CAREER_MINI)
    assert concluded == {(0, 1): {"s", "p1", "p2"}}


def test_psi3_monotone_under_more_facts():
    text = "CC s: Salary < Salary' => PRECEDES(Salary)\nCC p1: PRECEDES(Salary) => PRECEDES(Title)\n"
    ccs, _ = parse_rules(text, CAREER_MINI)
    a, b, c = rec(0, Salary=1.0), rec(1, Salary=2.0), rec(2, Salary=3.0)
    small = derive_orders([a, b], ccs, CAREER_MINI)
    big = derive_orders([a, b, c], ccs, CAREER_MINI)
    for pair, rules in small.items():
        assert rules <= big[pair]


def test_ordinal_comparison_uses_ordering():
    ccs, _ = parse_rules("CC l: Level < Level' => PRECEDES(Level)", CAREER_MINI)
    a, b = rec(0, Level="P2"), rec(1, Level="P4")
    assert cc_holds(ccs[0], a, b, by_name(CAREER_MINI)) == (0, 1)
    assert cc_holds(ccs[0], b, a, by_name(CAREER_MINI)) is None
