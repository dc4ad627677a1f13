"""In-memory relational dataset with nullable cells and CSV ingestion.

A dataset is a flat table with a declared schema. Exactly one attribute is the
entity key: rows sharing its value describe the same real-world entity at
different (unknown) points in time. Missing cells are represented as ``None``;
in CSV form a missing cell is an empty string, nothing else.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path


class IngestError(ValueError):
    """Raised when a CSV or schema-config file cannot be loaded."""


@dataclass(frozen=True)
class AttributeSchema:
    """One column: its name, value kind, and role.

    ``ordering`` optionally lists a discrete attribute's values from oldest to
    newest rank; it enables <, >, <=, >= comparisons on non-numeric values.
    """

    name: str
    kind: str = "discrete"  # "discrete" | "continuous"
    is_entity_key: bool = False
    ordering: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("discrete", "continuous"):
            raise IngestError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.ordering is not None and self.kind != "discrete":
            raise IngestError(f"attribute {self.name!r}: ordering only applies to discrete attributes")

    def rank(self, value):
        """Position of a discrete value in this attribute's ordering list."""
        if self.ordering is None:
            raise IngestError(f"attribute {self.name!r} has no ordering")
        try:
            return self.ordering.index(value)
        except ValueError:
            raise IngestError(f"value {value!r} not in ordering of attribute {self.name!r}") from None


@dataclass
class Record:
    record_id: int
    entity_id: str
    cells: dict[str, object]  # attr name -> str | float | None (None = missing)

    def value(self, attr: str):
        return self.cells[attr]

    def is_missing(self, attr: str) -> bool:
        return self.cells[attr] is None


@dataclass
class Dataset:
    schema: list[AttributeSchema]
    records: list[Record] = field(default_factory=list)

    def __post_init__(self) -> None:
        keys = [a for a in self.schema if a.is_entity_key]
        if len(keys) != 1:
            raise IngestError(f"schema must declare exactly one entity key, found {len(keys)}")
        names = [a.name for a in self.schema]
        if len(set(names)) != len(names):
            raise IngestError("duplicate attribute names in schema")
        seen = set()
        for r in self.records:
            if r.record_id in seen:
                raise IngestError(f"duplicate record_id {r.record_id}")
            seen.add(r.record_id)

    @property
    def entity_key(self) -> str:
        return next(a.name for a in self.schema if a.is_entity_key)

    def attribute(self, name: str) -> AttributeSchema:
        for a in self.schema:
            if a.name == name:
                return a
        raise KeyError(name)

    def data_attributes(self) -> list[str]:
        """All attribute names except the entity key."""
        return [a.name for a in self.schema if not a.is_entity_key]

    def record(self, record_id: int) -> Record:
        return self._by_id()[record_id]

    def _by_id(self) -> dict[int, Record]:
        return {r.record_id: r for r in self.records}

    def missing_cells(self) -> list[tuple[int, str]]:
        return [
            (r.record_id, a)
            for r in self.records
            for a in self.data_attributes()
            if r.cells[a] is None
        ]

    def copy(self) -> "Dataset":
        return Dataset(
            schema=list(self.schema),
            records=[replace(r, cells=dict(r.cells)) for r in self.records],
        )

    def subset(self, record_ids) -> "Dataset":
        wanted = set(record_ids)
        return Dataset(
            schema=list(self.schema),
            records=[replace(r, cells=dict(r.cells)) for r in self.records if r.record_id in wanted],
        )


def load_schema_config(path) -> list[AttributeSchema]:
    """Read a JSON mapping of attribute name -> {kind, entity_key, ordering?}."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"schema config {path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict) or not raw:
        raise IngestError(f"schema config {path}: expected a non-empty JSON object")
    schema = []
    for name, opts in raw.items():
        ordering = opts.get("ordering")
        schema.append(
            AttributeSchema(
                name=name,
                kind=opts.get("kind", "discrete"),
                is_entity_key=bool(opts.get("entity_key", False)),
                ordering=tuple(ordering) if ordering is not None else None,
            )
        )
    return schema


def _parse_cell(raw: str, attr: AttributeSchema, line_no: int):
    if raw == "":
        return None
    if attr.kind == "continuous":
        try:
            value = float(raw)
        except ValueError:
            raise IngestError(
                f"line {line_no}: attribute {attr.name!r}: cannot parse {raw!r} as a number"
            ) from None
        if value != value or value in (float("inf"), float("-inf")):
            raise IngestError(f"line {line_no}: attribute {attr.name!r}: non-finite value {raw!r}")
        return value
    return raw


def load_csv(path, schema: list[AttributeSchema]) -> Dataset:
    """Load an RFC-4180-style CSV with a header row into a Dataset.

    Empty strings become missing cells. record_id is assigned 0..N-1 in file
    order. Rows with the wrong arity and unparseable continuous values raise
    IngestError naming the offending line.
    """
    names = [a.name for a in schema]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, header row required") from None
        if header != names:
            raise IngestError(f"{path}: header {header!r} does not match schema attributes {names!r}")
        entity_key = next(a.name for a in schema if a.is_entity_key)
        records = []
        for i, row in enumerate(reader):
            line_no = i + 2  # header is line 1
            if len(row) != len(names):
                raise IngestError(f"line {line_no}: expected {len(names)} fields, got {len(row)}")
            cells = {a.name: _parse_cell(raw, a, line_no) for a, raw in zip(schema, row)}
            if cells[entity_key] is None:
                raise IngestError(f"line {line_no}: missing entity key {entity_key!r}")
            records.append(Record(record_id=i, entity_id=str(cells[entity_key]), cells=cells))
    return Dataset(schema=list(schema), records=records)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_csv(dataset: Dataset, path) -> None:
    """Write the dataset back out; load_csv(serialize_csv(d)) == d."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([a.name for a in dataset.schema])
        for r in sorted(dataset.records, key=lambda r: r.record_id):
            writer.writerow([_format_cell(r.cells[a.name]) for a in dataset.schema])


def group_by_entity(dataset: Dataset) -> dict[str, list[int]]:
    """Partition record ids by entity, within-group order following record_id."""
    groups: dict[str, list[int]] = {}
    for r in sorted(dataset.records, key=lambda r: r.record_id):
        groups.setdefault(r.entity_id, []).append(r.record_id)
    return groups
