"""Benchmark harness: synthetic data, noise injection, scoring, baselines.

The generator produces clean career histories over the same schema family as
the bundled example data: an entity moves through a sequence of posts
(company, division), revisits earlier posts now and then, and its salary
steps strictly upward at every post change while staying flat within one.
Division sites pin Address/City and companies pin Email, so the rule file the
generator ships can verify the data is violation-free by construction.

Noise follows the half-missing / half-wrong-value protocol: wrong values are
drawn from the attribute's active domain so the dirt looks plausible, and they
are restricted to rule-governed attributes (a wrong salary is not an
inconsistency, it is a recency error that would poison the order derivation).

Baselines are ablations of the full cleaner: ``cfdRepair`` repairs rule
violations with the recency term forced to zero, ``Bayes`` imputes without the
recency feature, ``baseRepair`` chains both.
"""

from __future__ import annotations

import csv
import math
import random
import time
from dataclasses import dataclass, field

from .consistency import RepairConfig
from .data_model import AttributeSchema, Dataset, Record
from .pipeline import StageResult, run_stages
from .rules import parse_rules

# ---------------------------------------------------------------------------
# fixed world for the synthetic generator (constants so the rule file is too)

_COMPANIES = ("Acme", "Borel", "Cubix", "Dovetail", "Everest", "Fulcrum", "Gorse", "Hylex")
_GROUP_POOL = ("Platform", "Research", "Mobile", "Infra", "Payments", "Search")
_CITIES = tuple(f"City{i:02d}" for i in range(12))
_LEVELS = tuple(f"P{i}" for i in range(1, 9))
_TITLES = tuple(f"T{i}" for i in range(1, 7))


def _company_groups(ci: int) -> tuple[str, ...]:
    return tuple(_GROUP_POOL[(ci + j) % len(_GROUP_POOL)] for j in range(3))


def _site(ci: int, gi: int) -> tuple[str, str]:
    city = _CITIES[(ci * 3 + gi) % len(_CITIES)]
    company = _COMPANIES[ci]
    group = _company_groups(ci)[gi]
    return city, f"{city}-{company}-{group}"


def _covered(ci: int, gi: int) -> bool:
    # 70% of (company, division) sites have explicit city/address rules
    return (ci * 3 + gi) % 10 < 7


def _email(ci: int) -> str:
    return f"mail@{_COMPANIES[ci].lower()}"


def pci_schema() -> list[AttributeSchema]:
    return [
        AttributeSchema("EID", is_entity_key=True),
        AttributeSchema("Name"),
        AttributeSchema("Level", ordering=_LEVELS),
        AttributeSchema("Title", ordering=_TITLES),
        AttributeSchema("Company"),
        AttributeSchema("Address"),
        AttributeSchema("City"),
        AttributeSchema("Salary", kind="continuous"),
        AttributeSchema("Email"),
        AttributeSchema("Group"),
    ]


def pci_rules_text() -> str:
    lines = [
        "# generated rule set for the synthetic career data",
        "CC salary-up: Salary < Salary' => PRECEDES(Salary)",
        "CC level-up: Level < Level' => PRECEDES(Level)",
        "CC title-up: Title < Title' => PRECEDES(Title)",
        "CFD addr-city: Address=_ -> City=_",
    ]
    for ci, company in enumerate(_COMPANIES):
        lines.append(f"CFD email-{company.lower()}: Company={company} -> Email={_email(ci)}")
    for ci, company in enumerate(_COMPANIES):
        for gi, group in enumerate(_company_groups(ci)):
            if not _covered(ci, gi):
                continue
            city, addr = _site(ci, gi)
            lines.append(f"CFD city-{company.lower()}-{gi}: Company={company}, Group={group} -> City={city}")
            lines.append(
                f"CFD addr-{company.lower()}-{gi}: Company={company}, Group={group} -> Address={addr}"
            )
    return "\n".join(lines) + "\n"


def pci_rules(schema: list[AttributeSchema] | None = None):
    return parse_rules(pci_rules_text(), schema or pci_schema())


def generate_pci(
    entities: int, records_per_entity: tuple[int, int], seed: int
) -> Dataset:
    """Clean synthetic career histories; violation- and conflict-free."""
    lo, hi = records_per_entity
    if lo < 1 or hi < lo:
        raise ValueError("records_per_entity must be a (lo, hi) range with 1 <= lo <= hi")
    schema = pci_schema()
    records: list[Record] = []
    rid = 0
    for e in range(entities):
        rng = random.Random((seed * 1_000_003 + e) & 0xFFFFFFFF)
        n = rng.randint(lo, hi)
        eid, name = f"E{e:04d}", f"Person{e:04d}"
        # small personal pool of posts, revisited over the career
        pool_size = rng.randint(2, 4)
        pool = rng.sample([(ci, gi) for ci in range(len(_COMPANIES)) for gi in range(3)], pool_size)
        salary = float(rng.randint(60, 300) * 100)
        post = rng.choice(pool)
        made = 0
        stint_idx = 0
        while made < n:
            stint_len = min(rng.choice((1, 1, 2, 2, 2, 3, 3)), n - made)
            ci, gi = post
            city, addr = _site(ci, gi)
            # rank and title advance on slow career clocks, salary every stint
            level_i = min(stint_idx // 2, len(_LEVELS) - 1)
            title_i = min(stint_idx // 3, len(_TITLES) - 1)
            for _ in range(stint_len):
                records.append(
                    Record(
                        rid,
                        eid,
                        {
                            "EID": eid,
                            "Name": name,
                            "Level": _LEVELS[level_i],
                            "Title": _TITLES[title_i],
                            "Company": _COMPANIES[ci],
                            "Address": addr,
                            "City": city,
                            "Salary": salary,
                            "Email": _email(ci),
                            "Group": _company_groups(ci)[gi],
                        },
                    )
                )
                rid += 1
                made += 1
            salary = round(salary + rng.randint(8, 40) * 100, 1)
            others = [p for p in pool if p != post]
            post = rng.choice(others) if others else post
            stint_idx += 1
    return Dataset(schema, records)


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseSpec:
    noi_percent: float
    mix: float = 0.5  # fraction of dirtied cells made inconsistent (rest blanked)
    rng_seed: int = 0
    protected_attrs: frozenset[str] = frozenset()
    inconsistent_attrs: frozenset[str] | None = None  # None: any unprotected attr

    def __post_init__(self) -> None:
        if not (0.0 <= self.noi_percent <= 100.0):
            raise ValueError("noi_percent must lie in [0, 100]")
        if not (0.0 <= self.mix <= 1.0):
            raise ValueError("mix must lie in [0, 1]")


def inject_noise(clean: Dataset, spec: NoiseSpec) -> tuple[Dataset, dict[tuple[int, str], object]]:
    """Dirty a copy of the dataset; returns it plus the withheld ground truth.

    Selects ceil(noi% of all data cells), blanks the missing share and
    replaces the inconsistent share with a different in-domain value. When the
    eligible pools are too small the shortfall is reported by the actual truth
    size rather than forced.
    """
    rng = random.Random(spec.rng_seed)
    dirty = clean.copy()
    attrs = [a for a in dirty.data_attributes() if a not in spec.protected_attrs]
    entity_key = dirty.entity_key
    assert entity_key not in attrs

    total_cells = len(dirty.records) * len(dirty.data_attributes())
    k = math.ceil(spec.noi_percent / 100.0 * total_cells)
    if k == 0:
        return dirty, {}

    domains: dict[str, list] = {}
    for a in attrs:
        values = sorted({r.cells[a] for r in dirty.records if r.cells[a] is not None}, key=str)
        domains[a] = values

    inc_attrs = [
        a
        for a in attrs
        if (spec.inconsistent_attrs is None or a in spec.inconsistent_attrs)
        and len(domains[a]) >= 2
    ]
    by_id = {r.record_id: r for r in dirty.records}
    inc_pool = [
        (r.record_id, a) for r in dirty.records for a in inc_attrs if r.cells[a] is not None
    ]
    n_inc = min(round(k * spec.mix), len(inc_pool))
    inc_cells = rng.sample(sorted(inc_pool), n_inc)

    taken = set(inc_cells)
    miss_pool = [
        (r.record_id, a)
        for r in dirty.records
        for a in attrs
        if r.cells[a] is not None and (r.record_id, a) not in taken
    ]
    n_miss = min(k - n_inc, len(miss_pool))
    miss_cells = rng.sample(sorted(miss_pool), n_miss)

    truth: dict[tuple[int, str], object] = {}
    for rid, attr in inc_cells:
        old = by_id[rid].cells[attr]
        alternatives = [v for v in domains[attr] if v != old]
        by_id[rid].cells[attr] = rng.choice(alternatives)
        truth[(rid, attr)] = old
    for rid, attr in miss_cells:
        truth[(rid, attr)] = by_id[rid].cells[attr]
        by_id[rid].cells[attr] = None
    return dirty, truth


# ---------------------------------------------------------------------------
# scoring


@dataclass
class EvalResult:
    precision: float
    recall: float
    counts: tuple[int, int, int]  # (correctly_repaired, total_repaired, total_dirty)
    method: str = ""
    runtime_ms: float = 0.0


def _cells_equal(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float):
        return abs(a - b) <= 1e-9
    return a == b


def score(
    repaired: Dataset,
    truth: dict[tuple[int, str], object],
    dirty: Dataset,
    method: str = "",
    runtime_ms: float = 0.0,
) -> EvalResult:
    """Precision/recall of a repair against the withheld clean values.

    A cell counts as repaired when it differs from the dirty version; a repair
    is correct when it matches the truth exactly (strings) or within 1e-9
    (numbers). Precision is defined as 0 when nothing was repaired.
    """
    if [a.name for a in repaired.schema] != [a.name for a in dirty.schema]:
        raise ValueError("repaired and dirty datasets must share a schema")
    dirty_by_id = {r.record_id: r for r in dirty.records}
    clean_value = dict(truth)
    total_repaired = 0
    correct = 0
    for r in repaired.records:
        d = dirty_by_id[r.record_id]
        for a in repaired.data_attributes():
            if r.cells[a] == d.cells[a] or (
                isinstance(r.cells[a], float)
                and isinstance(d.cells[a], float)
                and _cells_equal(r.cells[a], d.cells[a])
            ):
                continue
            total_repaired += 1
            key = (r.record_id, a)
            if key in clean_value and _cells_equal(r.cells[a], clean_value[key]):
                correct += 1
    total_dirty = len(truth)
    precision = correct / total_repaired if total_repaired else 0.0
    recall = correct / total_dirty if total_dirty else 0.0
    return EvalResult(precision, recall, (correct, total_repaired, total_dirty), method, runtime_ms)


# ---------------------------------------------------------------------------
# methods and baselines

METHODS = ("improve3c", "impccons", "impccom", "cfdrepair", "bayes", "baserepair")

_METHOD_SWITCHES = {
    "improve3c": dict(use_currency=True, run_consistency=True, run_completeness=True),
    "impccons": dict(use_currency=True, run_consistency=True, run_completeness=False),
    "impccom": dict(use_currency=True, run_consistency=False, run_completeness=True),
    "cfdrepair": dict(use_currency=False, run_consistency=True, run_completeness=False),
    "bayes": dict(use_currency=False, run_consistency=False, run_completeness=True),
    "baserepair": dict(use_currency=False, run_consistency=True, run_completeness=True),
}


def run_method(
    name: str,
    dirty: Dataset,
    ccs,
    cfds,
    cfg: RepairConfig | None = None,
    sigma: float = 0.5,
) -> tuple[Dataset, StageResult, float]:
    if name not in _METHOD_SWITCHES:
        raise ValueError(f"unknown method {name!r}; choose from {METHODS}")
    cfg = cfg or RepairConfig()
    t0 = time.perf_counter()
    result = run_stages(dirty, ccs, cfds, cfg, sigma, **_METHOD_SWITCHES[name])
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    return result.dataset, result, elapsed_ms


def run_baseline(
    name: str,
    dirty: Dataset,
    rules,
    cfg: RepairConfig | None = None,
    sigma: float = 0.5,
    truth: dict[tuple[int, str], object] | None = None,
) -> tuple[Dataset, EvalResult]:
    """Run one of the ablated baselines: cfdRepair, Bayes, or baseRepair."""
    key = name.lower()
    if key not in ("cfdrepair", "bayes", "baserepair"):
        raise ValueError(f"unknown baseline {name!r}")
    ccs, cfds = rules
    repaired, _, elapsed = run_method(key, dirty, ccs, cfds, cfg, sigma)
    if truth is None:
        return repaired, EvalResult(0.0, 0.0, (0, 0, 0), name, elapsed)
    return repaired, score(repaired, truth, dirty, method=name, runtime_ms=elapsed)


# ---------------------------------------------------------------------------
# grid runner


@dataclass
class BenchConfig:
    sizes: tuple[int, ...] = (1000,)
    noi_percents: tuple[float, ...] = (10.0,)
    methods: tuple[str, ...] = ("improve3c", "cfdrepair", "bayes", "baserepair")
    seeds: tuple[int, ...] = (0, 1, 2)
    records_per_entity: tuple[int, int] = (20, 36)
    sigma: float = 0.5
    repair: RepairConfig = field(default_factory=RepairConfig)


def _noise_spec_for(seed: int, noi: float) -> NoiseSpec:
    return NoiseSpec(
        noi_percent=noi,
        rng_seed=seed,
        inconsistent_attrs=frozenset({"City", "Address", "Email"}),
    )


def run_eval(config: BenchConfig) -> list[dict]:
    """Sweep (size, noi, method, seed); one result row per run."""
    ccs, cfds = pci_rules()
    rows = []
    for size in config.sizes:
        lo, hi = config.records_per_entity
        entities = max(1, round(size / ((lo + hi) / 2)))
        for seed in config.seeds:
            clean = generate_pci(entities, (lo, hi), seed)
            for noi in config.noi_percents:
                dirty, truth = inject_noise(clean, _noise_spec_for(seed, noi))
                for method in config.methods:
                    repaired, stage_result, elapsed = run_method(
                        method, dirty, ccs, cfds, config.repair, config.sigma
                    )
                    metrics = score(repaired, truth, dirty, method=method, runtime_ms=elapsed)
                    timings = stage_result.timings_ms
                    rows.append(
                        {
                            "method": method,
                            "noi": noi,
                            "n_records": len(clean.records),
                            "seed": seed,
                            "precision": round(metrics.precision, 6),
                            "recall": round(metrics.recall, 6),
                            "correct": metrics.counts[0],
                            "repaired": metrics.counts[1],
                            "dirty": metrics.counts[2],
                            "runtime_ms": round(elapsed, 3),
                            "graph_ms": round(timings.get("graph", 0.0), 3),
                            "currency_ms": round(timings.get("currency", 0.0), 3),
                            "consistency_ms": round(timings.get("consistency", 0.0), 3),
                            "completeness_ms": round(timings.get("completeness", 0.0), 3),
                        }
                    )
    return rows


def write_results_csv(rows: list[dict], path) -> None:
    fields = [
        "method",
        "noi",
        "n_records",
        "seed",
        "precision",
        "recall",
        "correct",
        "repaired",
        "dirty",
        "runtime_ms",
        "graph_ms",
        "currency_ms",
        "consistency_ms",
        "completeness_ms",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
