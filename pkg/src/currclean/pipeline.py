"""Four-stage cleaning pipeline and its report artifacts.

Stages run strictly in order: (1) per-entity currency graphs with conflict
detection and quarantine, (2) currency-value assignment, (3) rule-violation
repair, (4) gated imputation of the remaining missing cells. The report
records everything needed to audit a run; the patch log is a separate,
timing-free file so identical inputs produce byte-identical logs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .completeness import Imputation, imp_c_com
from .consistency import (
    RepairConfig,
    RepairPatch,
    Violation,
    detect_violations,
    extract_reliable_schemas,
    imp_c_cons,
)
from .data_model import Dataset, group_by_entity, load_csv, load_schema_config, serialize_csv
from .graph import (
    ConflictReport,
    CurrencyGraph,
    build_graph,
    detect_conflicts,
    quarantined_record_ids,
    to_dot,
)
from .ordering import assign_currency_values
from .rules import CfdRule, CurrencyConstraint, parse_rules


class PipelineInputError(ValueError):
    """Bad input files (data, schema config, or rules)."""


@dataclass
class PipelineConfig:
    data_path: str
    schema_path: str
    rules_path: str
    alpha: float = 0.6
    beta: float = 0.4
    theta_omega: float = 0.2
    theta_plus: float = 0.1
    sigma: float = 0.5
    max_lhs: int = 2
    mine_schemas: bool = False
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    dump_graphs_dir: str | None = None

    def repair_config(self) -> RepairConfig:
        return RepairConfig(
            alpha=self.alpha,
            beta=self.beta,
            theta_omega=self.theta_omega,
            theta_plus=self.theta_plus,
            max_lhs=self.max_lhs,
        )


@dataclass
class StageResult:
    """Everything the four stages produce, before serialization."""

    dataset: Dataset
    graphs: dict[str, CurrencyGraph] = field(default_factory=dict)
    conflicts: list[ConflictReport] = field(default_factory=list)
    quarantined: list[int] = field(default_factory=list)
    currency: dict[int, float] = field(default_factory=dict)
    patches: list[RepairPatch] = field(default_factory=list)
    unrepaired: list[Violation] = field(default_factory=list)
    imputations: list[Imputation] = field(default_factory=list)
    violations_found: int = 0
    mined_rules: list[CfdRule] = field(default_factory=list)
    timings_ms: dict[str, float] = field(default_factory=dict)


def run_stages(
    dataset: Dataset,
    ccs: list[CurrencyConstraint],
    cfds: list[CfdRule],
    cfg: RepairConfig,
    sigma: float,
    *,
    mine_schemas: bool = False,
    use_currency: bool = True,
    run_consistency: bool = True,
    run_completeness: bool = True,
) -> StageResult:
    """Execute the pipeline stages on an in-memory dataset.

    The two ``run_*`` switches and ``use_currency`` exist for the evaluation
    harness's ablations; the CLI always runs everything with currency on.
    """
    result = StageResult(dataset=dataset)

    bad: set[int] = set()
    if use_currency:
        t0 = time.perf_counter()
        graphs: dict[str, CurrencyGraph] = {}
        for entity_id, ids in group_by_entity(dataset).items():
            g = build_graph([dataset.record(i) for i in ids], ccs, dataset.schema)
            graphs[entity_id] = g
            result.conflicts.extend(detect_conflicts(g))
        result.quarantined = sorted(quarantined_record_ids(result.conflicts))
        result.timings_ms["graph"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        bad = set(result.quarantined)
        for entity_id, ids in group_by_entity(dataset).items():
            keep = [i for i in ids if i not in bad]
            if not keep:
                continue
            g = graphs[entity_id]
            if any(i in bad for i in ids):
                g = build_graph([dataset.record(i) for i in keep], ccs, dataset.schema)
            assign_currency_values(g)
            graphs[entity_id] = g
            result.currency.update(g.record_values())
        result.graphs = graphs
        result.timings_ms["currency"] = (time.perf_counter() - t0) * 1000.0
    else:
        result.timings_ms["graph"] = 0.0
        result.timings_ms["currency"] = 0.0

    working = dataset
    sigma_rules = list(cfds)
    t0 = time.perf_counter()
    if run_consistency:
        if mine_schemas:
            result.mined_rules = extract_reliable_schemas(dataset, cfg.theta_plus, cfg.max_lhs)
            sigma_rules.extend(result.mined_rules)
        result.violations_found = len(
            [
                v
                for v in detect_violations(working, sigma_rules)
                if v.record_id not in bad
            ]
        )
        working, result.patches, result.unrepaired = imp_c_cons(
            working,
            sigma_rules,
            cfg,
            result.currency if use_currency else None,
            excluded_record_ids=bad,
        )
    result.timings_ms["consistency"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    if run_completeness:
        working, result.imputations = imp_c_com(
            working,
            sigma,
            result.currency if use_currency else None,
            use_currency=use_currency,
            excluded_record_ids=bad,
        )
    result.timings_ms["completeness"] = (time.perf_counter() - t0) * 1000.0

    result.dataset = working
    return result


# ---------------------------------------------------------------------------
# serialization


def _scalar(value):
    return value  # None, str and float are all JSON-native


def patch_log_entries(result: StageResult) -> list[dict]:
    entries = [
        {
            "stage": p.stage,
            "record_id": p.record_id,
            "attr": p.attr,
            "old": _scalar(p.old),
            "new": _scalar(p.new),
            "source": p.source,
            "diffcc": round(p.diffcc, 12),
        }
        for p in result.patches
    ]
    entries.extend(
        {
            "stage": "completeness",
            "record_id": i.record_id,
            "attr": i.attr,
            "old": None,
            "new": _scalar(i.chosen),
            "source": "imputation",
            "posterior": round(i.posterior, 12),
            "accepted": i.accepted,
        }
        for i in result.imputations
    )
    return entries


def report_dict(result: StageResult) -> dict:
    accepted = [i for i in result.imputations if i.accepted]
    return {
        "conflicts": [
            {
                "entity_id": c.entity_id,
                "cycle": c.cycle,
                "constraints": c.implicated_constraints,
                "records": c.implicated_records,
            }
            for c in result.conflicts
        ],
        "quarantined_record_ids": result.quarantined,
        "currency_values": {str(k): result.currency[k] for k in sorted(result.currency)},
        "violations_found": result.violations_found,
        "violations_repaired": result.violations_found - len(result.unrepaired),
        "mined_rules": [r.id for r in result.mined_rules],
        "patches": [e for e in patch_log_entries(result) if e["stage"] == "consistency"],
        "imputations": [e for e in patch_log_entries(result) if e["stage"] == "completeness"],
        "unrepaired": [
            {
                "record_id": v.record_id,
                "rule_id": v.rule_id,
                "offending_attrs": sorted(v.offending_attrs),
            }
            for v in result.unrepaired
        ],
        "counts": {
            "records": len(result.dataset.records),
            "patches": len(result.patches),
            "imputations_accepted": len(accepted),
            "imputations_rejected": len(result.imputations) - len(accepted),
        },
        "timings_ms": {k: round(v, 3) for k, v in result.timings_ms.items()},
    }


def run_pipeline(config: PipelineConfig) -> tuple[StageResult, int]:
    """Run end to end from files; returns the stage result and an exit code.

    Exit codes: 0 clean success, 2 conflicts were found (data still cleaned
    minus the quarantined records). Input problems raise PipelineInputError,
    which the CLI maps to exit code 1.
    """
    try:
        schema = load_schema_config(config.schema_path)
        dataset = load_csv(config.data_path, schema)
        rules_text = Path(config.rules_path).read_text(encoding="utf-8")
        ccs, cfds = parse_rules(rules_text, schema)
    except (OSError, ValueError) as exc:
        raise PipelineInputError(str(exc)) from exc

    result = run_stages(
        dataset,
        ccs,
        cfds,
        config.repair_config(),
        config.sigma,
        mine_schemas=config.mine_schemas,
    )

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    serialize_csv(result.dataset, out_dir / "repaired.csv")
    (out_dir / "patches.json").write_text(
        json.dumps(patch_log_entries(result), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (out_dir / "report.json").write_text(
        json.dumps(report_dict(result), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if config.dump_graphs_dir:
        dump_dir = Path(config.dump_graphs_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for entity_id, g in sorted(result.graphs.items()):
            (dump_dir / f"{entity_id}.dot").write_text(to_dot(g), encoding="utf-8")

    return result, (2 if result.conflicts else 0)
