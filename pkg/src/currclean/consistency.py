"""Rule-violation detection and repair, biased toward temporally-near sources.

A record violates a dependency when its row matches the rule's left-hand
constants but disagrees with (or is missing) a right-hand value. Repair picks
the cheapest source among (a) same-entity records whose recency value lies
within the tolerance window and which do not themselves violate the rule, and
(b) the rule's own constant tableau. Cost is a weighted sum of recency
distance and value disagreement, so among equally-similar sources the one
closest in time wins.

An accepted source must actually resolve the violation and must not make the
record violate any rule it previously satisfied; otherwise the next-best
source is tried. Repair passes run to a fixpoint, which makes a second run a
no-op.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .data_model import Dataset, Record, group_by_entity
from .rules import WILDCARD, CfdRule


class MissingCurrencyError(ValueError):
    """A record without an assigned currency value entered distance computation."""


@dataclass(frozen=True)
class RepairConfig:
    alpha: float = 0.6  # weight of the recency-distance term
    beta: float = 0.4  # weight of the value-disagreement term
    theta_omega: float = 0.2  # max tolerable recency gap
    theta_plus: float = 0.1  # support ratio for mined schemas
    max_lhs: int = 2

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie in (0,1)")
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError("alpha + beta must equal 1")
        if not (0.0 < self.theta_omega <= 1.0):
            raise ValueError("theta_omega must lie in (0,1]")
        if not (0.0 < self.theta_plus <= 1.0):
            raise ValueError("theta_plus must lie in (0,1]")
        if self.max_lhs < 1:
            raise ValueError("max_lhs must be >= 1")


@dataclass
class Violation:
    record_id: int
    rule_id: str
    matched_lhs: dict[str, bool]
    offending_attrs: frozenset[str]


@dataclass
class RepairPatch:
    record_id: int
    attr: str
    old: object
    new: object
    source: str  # "neighbor:<record_id>" | "tableau:<rule_id>"
    diffcc: float
    stage: str = "consistency"


# ---------------------------------------------------------------------------
# distances


def cons_dist_rr(a: Record, b: Record, dataset: Dataset) -> float:
    """Fraction of non-key attributes on which two records differ.

    Missing-vs-present counts as differing, missing-vs-missing as equal.
    """
    attrs = dataset.data_attributes()
    differing = sum(1 for name in attrs if a.cells[name] != b.cells[name])
    return differing / len(attrs)


def cons_dist_rf(record: Record, rule: CfdRule) -> float:
    """Fraction of the rule's patterns (both sides) the record mismatches.

    Wildcards never mismatch; a missing cell mismatches a constant.
    """
    mismatches = 0
    for attr, pattern in itertools.chain(rule.lhs, rule.rhs):
        if pattern is WILDCARD:
            continue
        if record.cells[attr] != pattern:
            mismatches += 1
    return mismatches / rule.pattern_count()


def curr_dist_records(cv_a: float | None, cv_b: float | None, theta_omega: float) -> float:
    if cv_a is None or cv_b is None:
        raise MissingCurrencyError("record has no currency value (quarantined?)")
    return min(abs(cv_a - cv_b), theta_omega)


def curr_dist_rule(theta_omega: float) -> float:
    # a rule tableau has no definite recency; it sits at the tolerance bound
    return theta_omega


def diffcc_records(
    a: Record, b: Record, dataset: Dataset, cfg: RepairConfig, currency: dict[int, float]
) -> float:
    dc = curr_dist_records(currency.get(a.record_id), currency.get(b.record_id), cfg.theta_omega)
    return cfg.alpha * dc + cfg.beta * cons_dist_rr(a, b, dataset)


def diffcc_rule(record: Record, rule: CfdRule, cfg: RepairConfig) -> float:
    return cfg.alpha * curr_dist_rule(cfg.theta_omega) + cfg.beta * cons_dist_rf(record, rule)


# ---------------------------------------------------------------------------
# detection


def violation_of(record: Record, rule: CfdRule) -> Violation | None:
    """The record's violation of one rule, or None.

    The rule fires when every left-hand pattern matches a present value
    (wildcards match any present value; a missing left-hand cell blocks
    firing). It is violated when a right-hand constant mismatches or a
    right-hand cell is missing.
    """
    matched: dict[str, bool] = {}
    for attr, pattern in rule.lhs:
        v = record.cells[attr]
        if v is None:
            return None
        if pattern is not WILDCARD and v != pattern:
            return None
        matched[attr] = True
    offending = set()
    for attr, pattern in rule.rhs:
        v = record.cells[attr]
        if v is None:
            offending.add(attr)
        elif pattern is not WILDCARD and v != pattern:
            offending.add(attr)
    if not offending:
        return None
    return Violation(record.record_id, rule.id, matched, frozenset(offending))


def detect_violations(dataset: Dataset, rules: list[CfdRule]) -> list[Violation]:
    out = []
    for rule in rules:
        for record in sorted(dataset.records, key=lambda r: r.record_id):
            v = violation_of(record, rule)
            if v is not None:
                out.append(v)
    return out


# ---------------------------------------------------------------------------
# reliable-schema mining


def extract_reliable_schemas(dataset: Dataset, theta_plus: float, max_lhs: int) -> list[CfdRule]:
    """Mine constant dependencies the data supports strongly enough.

    A candidate (left-hand value combination -> right-hand value) qualifies
    when its full-match count M satisfies M/N >= theta_plus and every matching
    record with a present right-hand cell carries that single value.
    """
    n = len(dataset.records)
    if n == 0:
        return []
    discrete = [
        a.name for a in dataset.schema if a.kind == "discrete" and not a.is_entity_key
    ]
    found: list[tuple] = []
    for size in range(1, max_lhs + 1):
        for lhs_attrs in itertools.combinations(discrete, size):
            groups: dict[tuple, list[Record]] = {}
            for record in dataset.records:
                key = tuple(record.cells[a] for a in lhs_attrs)
                if any(v is None for v in key):
                    continue
                groups.setdefault(key, []).append(record)
            for rhs_attr in discrete:
                if rhs_attr in lhs_attrs:
                    continue
                for key, members in groups.items():
                    values = {r.cells[rhs_attr] for r in members if r.cells[rhs_attr] is not None}
                    if len(values) != 1:
                        continue
                    (value,) = values
                    m = sum(1 for r in members if r.cells[rhs_attr] == value)
                    if m / n >= theta_plus:
                        found.append((lhs_attrs, key, rhs_attr, value))
    found.sort(key=lambda item: (item[0], item[2], tuple(map(str, item[1])), str(item[3])))
    return [
        CfdRule(
            id=f"auto-{i + 1}",
            lhs=tuple(zip(lhs_attrs, key)),
            rhs=((rhs_attr, value),),
        )
        for i, (lhs_attrs, key, rhs_attr, value) in enumerate(found)
    ]


# ---------------------------------------------------------------------------
# repair


def _neighbor_patch(record: Record, source: Record, rule: CfdRule, dataset: Dataset) -> dict[str, object]:
    """Cells to copy from a neighbor: every differing non-key attribute outside
    the rule's left-hand side whose source value is present."""
    out = {}
    for attr in dataset.data_attributes():
        if attr in rule.lhs_attrs:
            continue
        sv = source.cells[attr]
        if sv is None:
            continue
        if record.cells[attr] != sv:
            out[attr] = sv
    return out


def _tableau_patch(record: Record, rule: CfdRule) -> dict[str, object]:
    return {
        attr: pattern
        for attr, pattern in rule.rhs
        if pattern is not WILDCARD and record.cells[attr] != pattern
    }


def _with_cells(record: Record, patch: dict[str, object]) -> Record:
    cells = dict(record.cells)
    cells.update(patch)
    return Record(record.record_id, record.entity_id, cells)


def imp_c_cons(
    dataset: Dataset,
    rules: list[CfdRule],
    cfg: RepairConfig,
    currency: dict[int, float] | None,
    excluded_record_ids: frozenset[int] | set[int] = frozenset(),
) -> tuple[Dataset, list[RepairPatch], list[Violation]]:
    """Repair rule violations; returns (repaired data, patches, unrepairable).

    ``currency`` maps record_id to its recency value; passing None disables the
    recency term entirely (all recency distances become 0 and the neighbor
    window stops filtering), which is the ablated pure-value-distance mode.
    Records in ``excluded_record_ids`` are neither repaired nor used as
    sources.
    """
    working = dataset.copy()
    by_id = {r.record_id: r for r in working.records}
    entity_groups = group_by_entity(working)
    patches: list[RepairPatch] = []
    unrepaired: list[Violation] = []

    def neighbor_gap(a_id: int, b_id: int) -> float:
        if currency is None:
            return 0.0
        cv_a, cv_b = currency.get(a_id), currency.get(b_id)
        if cv_a is None or cv_b is None:
            raise MissingCurrencyError(f"records {a_id},{b_id} lack currency values")
        return abs(cv_a - cv_b)

    def diffcc_neighbor(record: Record, other: Record) -> float:
        gap = min(neighbor_gap(record.record_id, other.record_id), cfg.theta_omega)
        return cfg.alpha * gap + cfg.beta * cons_dist_rr(record, other, working)

    def try_repair(record: Record, rule: CfdRule) -> bool:
        candidates: list[tuple[float, int, int, str, dict[str, object]]] = []
        for other_id in entity_groups.get(record.entity_id, []):
            if other_id == record.record_id or other_id in excluded_record_ids:
                continue
            other = by_id[other_id]
            if violation_of(other, rule) is not None:
                continue
            if neighbor_gap(record.record_id, other_id) >= cfg.theta_omega:
                continue
            patch = _neighbor_patch(record, other, rule, working)
            candidates.append(
                (diffcc_neighbor(record, other), 0, other_id, f"neighbor:{other_id}", patch)
            )
        candidates.append(
            (diffcc_rule(record, rule, cfg), 1, -1, f"tableau:{rule.id}", _tableau_patch(record, rule))
        )
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))

        before = {r2.id: violation_of(record, r2) is not None for r2 in rules}
        for dist, _, _, source, patch in candidates:
            if not patch:
                continue
            repaired = _with_cells(record, patch)
            if violation_of(repaired, rule) is not None:
                continue  # source does not resolve this violation
            if any(
                violation_of(repaired, r2) is not None and not before[r2.id] for r2 in rules
            ):
                continue  # would newly break another rule
            for attr, new in sorted(patch.items()):
                patches.append(
                    RepairPatch(record.record_id, attr, record.cells[attr], new, source, dist)
                )
            by_id[record.record_id].cells.update(patch)
            return True
        return False

    # run to a fixpoint: repairing a neighbor can unlock a previously
    # unrepairable violation, and a second external pass must be a no-op
    while True:
        unrepaired = []
        progressed = False
        for rule in rules:
            violating = [
                r.record_id
                for r in sorted(working.records, key=lambda r: r.record_id)
                if r.record_id not in excluded_record_ids
                and violation_of(by_id[r.record_id], rule) is not None
            ]
            for rid in violating:
                record = by_id[rid]
                violation = violation_of(record, rule)
                if violation is None:
                    continue  # fixed while handling an earlier rule
                if try_repair(record, rule):
                    progressed = True
                else:
                    unrepaired.append(violation)
        if not progressed:
            break
    return working, patches, unrepaired
