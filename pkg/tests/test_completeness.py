import math

import pytest

from currclean.completeness import (
    CURRENCY_FEATURE,
    Imputation,
    imp_c_com,
    posterior,
    train_model,
)
from currclean.consistency import RepairConfig, imp_c_cons
from currclean.data_model import AttributeSchema, Dataset, Record, group_by_entity
from currclean.graph import build_graph
from currclean.ordering import assign_currency_values


def career_state(career_dataset, career_rules):
    """Career data after ordering and consistency repair."""
    ccs, cfds = career_rules
    currency = {}
    for eid, ids in group_by_entity(career_dataset).items():
        g = build_graph([career_dataset.record(i) for i in ids], ccs, career_dataset.schema)
        assign_currency_values(g)
        currency.update(g.record_values())
    repaired, _, _ = imp_c_cons(career_dataset, cfds, RepairConfig(), currency)
    return repaired, currency


# -- posterior ---------------------------------------------------------------


def two_feature_rows(pairs):
    return [
        Record(i, "E", {"Id": "E", "T": t, "F": f})
        for i, (t, f) in enumerate(pairs)
    ]


def test_posterior_uniform_when_uninformative():
    rows = two_feature_rows([("x", "a"), ("y", "a")])
    model = train_model(rows, "T", ["F"], {"F": "discrete"}, {"F": 1}, None)
    post = posterior(model, two_feature_rows([(None, "a")])[0])
    assert post["x"] == pytest.approx(0.5, abs=1e-12)
    assert post["y"] == pytest.approx(0.5, abs=1e-12)


def test_posterior_single_class_is_one():
    rows = two_feature_rows([("x", "a"), ("x", "b")])
    model = train_model(rows, "T", ["F"], {"F": "discrete"}, {"F": 2}, None)
    post = posterior(model, two_feature_rows([(None, "a")])[0])
    assert post == {"x": 1.0}


def test_posterior_matches_hand_bayes_table():
    # 4 rows: T=x with F=a,a; T=y with F=b,a. Test F=a.
    rows = two_feature_rows([("x", "a"), ("x", "a"), ("y", "b"), ("y", "a")])
    model = train_model(rows, "T", ["F"], {"F": "discrete"}, {"F": 2}, None)
    post = posterior(model, two_feature_rows([(None, "a")])[0])
    # priors 1/2 each; P(a|x) = (2+1)/(2+2), P(a|y) = (1+1)/(2+2)
    expected_x = (0.5 * 0.75) / (0.5 * 0.75 + 0.5 * 0.5)
    assert post["x"] == pytest.approx(expected_x, abs=1e-12)
    assert post["y"] == pytest.approx(1 - expected_x, abs=1e-12)


def test_posterior_normalizes(career_dataset, career_rules):
    repaired, currency = career_state(career_dataset, career_rules)
    rows = [
        r
        for r in repaired.records
        if all(v is not None for v in r.cells.values())
    ]
    features = [a for a in repaired.data_attributes() if a != "Title"]
    kinds = {a: repaired.attribute(a).kind for a in features}
    kinds[CURRENCY_FEATURE] = "continuous"
    domains = {a: 14 for a in features}
    model = train_model(rows, "Title", features, kinds, domains, currency)
    for r in repaired.records:
        post = posterior(model, r, currency)
        assert sum(post.values()) == pytest.approx(1.0, abs=1e-9)


# -- the separable toy set ----------------------------------------------------


def toy_dataset():
    schema = [
        AttributeSchema("Id", is_entity_key=True),
        AttributeSchema("T"),
        AttributeSchema("F"),
    ]
    pairs = [("A", "u"), ("A", "u"), ("A", "u"), ("B", "u"), ("B", "u"), ("B", "u"), (None, "u")]
    records = [Record(i, "E", {"Id": "E", "T": t, "F": f}) for i, (t, f) in enumerate(pairs)]
    currency = {0: 0.1, 1: 0.2, 2: 0.3, 3: 0.7, 4: 0.8, 5: 0.85, 6: 0.9}
    return Dataset(schema, records), currency


def hand_gaussian_posterior(currency, test_cv):
    """Oracle: direct naive Bayes arithmetic on the toy set."""
    train = [0.1, 0.2, 0.3, 0.7, 0.8, 0.85]
    g_mean = sum(train) / len(train)
    g_var = sum((v - g_mean) ** 2 for v in train) / len(train)

    def density(x, values):
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        var = max(var, 0.01 * g_var, 1e-6)
        return math.exp(-((x - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)

    # value feature F is constant: likelihood (3+1)/(3+1) = 1 for both classes
    score_a = 0.5 * density(test_cv, [0.1, 0.2, 0.3])
    score_b = 0.5 * density(test_cv, [0.7, 0.8, 0.85])
    return score_b / (score_a + score_b)


def test_separable_toy_prediction_matches_hand_computation():
    ds, currency = toy_dataset()
    filled, log = imp_c_com(ds, sigma=0.5, currency=currency, use_currency=True)
    entry = next(e for e in log if e.record_id == 6)
    assert entry.accepted and entry.chosen == "B"
    assert entry.posterior == pytest.approx(hand_gaussian_posterior(currency, 0.9), abs=1e-9)
    assert entry.posterior > 0.999
    assert filled.record(6).cells["T"] == "B"


def test_currency_feature_is_wired_in():
    # without the recency feature the classes are indistinguishable at cv=0.9
    ds, currency = toy_dataset()
    _, log = imp_c_com(ds, sigma=0.5, currency=currency, use_currency=False)
    entry = next(e for e in log if e.record_id == 6)
    assert entry.posterior == pytest.approx(0.5, abs=1e-9)
    assert entry.chosen == "A"  # bare tie falls to the lexicographically first class
    with_cv = imp_c_com(ds, sigma=0.5, currency=currency, use_currency=True)[1]
    assert next(e for e in with_cv if e.record_id == 6).chosen == "B"


# -- imputation over the career data ------------------------------------------


def test_career_imputations(career_dataset, career_rules):
    repaired, currency = career_state(career_dataset, career_rules)
    filled, log = imp_c_com(repaired, sigma=0.5, currency=currency)
    accepted = {(e.record_id, e.attr): e for e in log if e.accepted}
    assert filled.record(13).cells["Title"] == "MR"
    assert accepted[(13, "Title")].posterior >= 0.5
    assert filled.record(9).cells["Address"] == "Xuhui"
    assert filled.record(8).cells["Salary"] == "15k"


def test_imputation_never_overwrites_present(career_dataset, career_rules):
    repaired, currency = career_state(career_dataset, career_rules)
    present = {
        (r.record_id, a): r.cells[a]
        for r in repaired.records
        for a in repaired.data_attributes()
        if r.cells[a] is not None
    }
    filled, log = imp_c_com(repaired, sigma=0.5, currency=currency)
    for (rid, attr), value in present.items():
        assert filled.record(rid).cells[attr] == value
    assert all((e.record_id, e.attr) not in present for e in log)


def test_sigma_monotonicity(career_dataset, career_rules):
    repaired, currency = career_state(career_dataset, career_rules)
    accepted_sets = []
    for sigma in (0.3, 0.5, 0.7, 0.9):
        _, log = imp_c_com(repaired, sigma=sigma, currency=currency)
        accepted_sets.append({(e.record_id, e.attr) for e in log if e.accepted})
    for smaller, larger in zip(accepted_sets[1:], accepted_sets):
        assert smaller <= larger


def test_untouched_when_nothing_missing():
    schema = [AttributeSchema("Id", is_entity_key=True), AttributeSchema("T")]
    ds = Dataset(schema, [Record(0, "E", {"Id": "E", "T": "x"})])
    filled, log = imp_c_com(ds, sigma=0.5, currency={0: 0.5})
    assert log == []
    assert filled.record(0).cells == {"Id": "E", "T": "x"}


def test_zero_training_rows_rejected_and_reported():
    schema = [AttributeSchema("Id", is_entity_key=True), AttributeSchema("T"), AttributeSchema("F")]
    records = [
        Record(0, "E", {"Id": "E", "T": None, "F": "a"}),
        Record(1, "E", {"Id": "E", "T": None, "F": "b"}),
    ]
    ds = Dataset(schema, records)
    filled, log = imp_c_com(ds, sigma=0.5, currency={0: 0.3, 1: 0.7})
    assert [e.accepted for e in log] == [False, False]
    assert all(e.chosen is None for e in log)
    assert filled.record(0).cells["T"] is None
