"""Rule languages: currency constraints (CCs) and conditional functional
dependencies (CFDs).

The grammar is line oriented, one rule per line, ``#`` comments:

    CC <id>: same(Company) & Title='E' -> Title'='ME' => PRECEDES(Title)
    CC <id>: Salary < Salary' => PRECEDES(Salary)
    CC <id>: PRECEDES(Title) => PRECEDES(Group)
    CFD <id>: Company=Baidu, Group=Map -> City=Beijing
    CFD <id>: Address=_ -> City=_

The ``<id>:`` part is optional; rules without one get cc-N / cfd-N. A primed
attribute (``Salary'``) denotes the later record of a compared pair. ``_`` is
the CFD wildcard. Values may be single-quoted; quoting is required only when a
value contains a comma.

A CC concludes a recency order a ≺ b between two records of one entity. The
three forms:

* value pair  — a has the from-value and b the to-value of one attribute;
* comparison  — a's value relates to b's under an operator (<, >, <=, >=, =, !=);
* propagation — an already-derived order on one attribute carries to another.

Guards (``same(Attr)`` or ``Attr=const``) must hold on the pair for the rule to
fire; the entity guard is implicit. Comparisons involving a missing cell never
fire.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .data_model import AttributeSchema, Record


class _Wildcard:
    __slots__ = ()

    def __repr__(self) -> str:
        return "_"


WILDCARD = _Wildcard()

OPS = ("<=", ">=", "!=", "<", ">", "=")


class RuleSyntaxError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


@dataclass(frozen=True)
class Psi1:
    """Value-pair form: a[attr]=from_value and b[attr]=to_value => a before b."""

    attr: str
    from_value: object
    to_value: object


@dataclass(frozen=True)
class Psi2:
    """Comparison form: a[attr] op b[attr] => a before b."""

    attr: str
    op: str


@dataclass(frozen=True)
class Psi3:
    """Propagation form: (a before b on premise_attr) => (a before b on conclusion_attr)."""

    premise_attr: str
    conclusion_attr: str


@dataclass(frozen=True)
class Guard:
    kind: str  # "same" | "const"
    attr: str
    value: object = None


@dataclass(frozen=True)
class CurrencyConstraint:
    id: str
    form: Psi1 | Psi2 | Psi3
    guards: tuple[Guard, ...] = ()

    @property
    def target_attr(self) -> str:
        if isinstance(self.form, Psi3):
            return self.form.conclusion_attr
        return self.form.attr


@dataclass(frozen=True)
class CfdRule:
    id: str
    lhs: tuple[tuple[str, object], ...]  # (attr, constant | WILDCARD)
    rhs: tuple[tuple[str, object], ...]

    @property
    def lhs_attrs(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.lhs)

    @property
    def rhs_attrs(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.rhs)

    def pattern_count(self) -> int:
        return len(self.lhs) + len(self.rhs)


_PRECEDES_RE = re.compile(r"^PRECEDES\(\s*([^)\s]+)\s*\)$")
_SAME_RE = re.compile(r"^same\(\s*([^)\s]+)\s*\)$")


def _unquote(token: str):
    token = token.strip()
    if len(token) >= 2 and token[0] == "'" and token[-1] == "'":
        return token[1:-1]
    return token


def _coerce_constant(raw: str, attr: AttributeSchema, line: int):
    if attr.kind == "continuous":
        try:
            return float(raw)
        except ValueError:
            raise RuleSyntaxError(
                line, f"constant {raw!r} is not numeric but attribute {attr.name!r} is continuous"
            ) from None
    return raw


class _Parser:
    def __init__(self, schema: list[AttributeSchema]):
        self.by_name = {a.name: a for a in schema}

    def attr(self, name: str, line: int) -> AttributeSchema:
        name = name.strip()
        if name not in self.by_name:
            raise RuleSyntaxError(line, f"unknown attribute {name!r}")
        return self.by_name[name]

    # -- CC ----------------------------------------------------------------

    def parse_cc(self, body: str, rule_id: str, line: int) -> CurrencyConstraint:
        if "=>" not in body:
            raise RuleSyntaxError(line, "currency rule needs '=> PRECEDES(Attr)'")
        left, _, concl = body.rpartition("=>")
        m = _PRECEDES_RE.match(concl.strip())
        if not m:
            raise RuleSyntaxError(line, f"bad conclusion {concl.strip()!r}, expected PRECEDES(Attr)")
        target = self.attr(m.group(1), line)

        guards: list[Guard] = []
        core = None
        for segment in (s.strip() for s in left.split("&")):
            if not segment:
                raise RuleSyntaxError(line, "empty condition segment")
            same = _SAME_RE.match(segment)
            if same:
                guards.append(Guard("same", self.attr(same.group(1), line).name))
                continue
            if self._is_core(segment):
                if core is not None:
                    raise RuleSyntaxError(line, "more than one ordering condition")
                core = segment
                continue
            if "=" in segment:
                attr_name, _, raw = segment.partition("=")
                attr = self.attr(attr_name, line)
                guards.append(Guard("const", attr.name, _coerce_constant(_unquote(raw), attr, line)))
                continue
            raise RuleSyntaxError(line, f"cannot parse condition {segment!r}")

        if core is None:
            raise RuleSyntaxError(line, "missing ordering condition")
        pm = _PRECEDES_RE.match(core)
        if pm:
            premise = self.attr(pm.group(1), line)
            return CurrencyConstraint(rule_id, Psi3(premise.name, target.name), tuple(guards))
        if "->" in core:
            return CurrencyConstraint(rule_id, self._parse_psi1(core, target, line), tuple(guards))
        return CurrencyConstraint(rule_id, self._parse_psi2(core, target, line), tuple(guards))

    @staticmethod
    def _is_core(segment: str) -> bool:
        """An ordering condition rather than a guard."""
        if _PRECEDES_RE.match(segment) or "->" in segment:
            return True
        if _Parser._op_of(segment):
            return True
        if "=" in segment:  # Attr = Attr' (equality comparison) vs Attr=const (guard)
            rhs = segment.partition("=")[2].strip()
            return rhs.endswith("'") and not rhs.startswith("'")
        return False

    @staticmethod
    def _op_of(segment: str) -> str | None:
        for op in ("<=", ">=", "!=", "<", ">"):
            if op in segment:
                return op
        return None

    def _parse_psi1(self, core: str, target: AttributeSchema, line: int) -> Psi1:
        older, _, newer = core.partition("->")
        attr_a, val_a = self._eq_atom(older, line, primed=False)
        attr_b, val_b = self._eq_atom(newer, line, primed=True)
        if attr_a.name != attr_b.name:
            raise RuleSyntaxError(line, f"value-pair condition mixes attributes {attr_a.name!r} and {attr_b.name!r}")
        if attr_a.name != target.name:
            raise RuleSyntaxError(line, f"condition attribute {attr_a.name!r} must match PRECEDES({target.name})")
        return Psi1(attr_a.name, val_a, val_b)

    def _eq_atom(self, text: str, line: int, primed: bool):
        text = text.strip()
        if "=" not in text:
            raise RuleSyntaxError(line, f"expected Attr='value' in {text!r}")
        name, _, raw = text.partition("=")
        name = name.strip()
        if primed:
            if not name.endswith("'"):
                raise RuleSyntaxError(line, f"expected primed attribute (later record) in {text!r}")
            name = name[:-1]
        elif name.endswith("'"):
            raise RuleSyntaxError(line, f"unexpected primed attribute in {text!r}")
        attr = self.attr(name, line)
        return attr, _coerce_constant(_unquote(raw), attr, line)

    def _parse_psi2(self, core: str, target: AttributeSchema, line: int) -> Psi2:
        op = self._op_of(core) or ("=" if "=" in core else None)
        if op is None:
            raise RuleSyntaxError(line, f"no comparison operator in {core!r}")
        lhs, _, rhs = core.partition(op)
        lhs, rhs = lhs.strip(), rhs.strip()
        if not rhs.endswith("'"):
            raise RuleSyntaxError(line, f"right side of {core!r} must be the primed attribute")
        a = self.attr(lhs, line)
        b = self.attr(rhs[:-1], line)
        if a.name != b.name or a.name != target.name:
            raise RuleSyntaxError(line, f"comparison must relate {target.name!r} to {target.name}'")
        if op in ("<", ">", "<=", ">=") and a.kind == "discrete" and a.ordering is None:
            raise RuleSyntaxError(
                line, f"operator {op!r} needs an ordering list on discrete attribute {a.name!r}"
            )
        return Psi2(a.name, op)

    # -- CFD ---------------------------------------------------------------

    def parse_cfd(self, body: str, rule_id: str, line: int) -> CfdRule:
        if "->" not in body:
            raise RuleSyntaxError(line, "CFD needs 'LHS -> RHS'")
        lhs_text, _, rhs_text = body.partition("->")
        lhs = self._patterns(lhs_text, line)
        rhs = self._patterns(rhs_text, line)
        if not lhs or not rhs:
            raise RuleSyntaxError(line, "CFD sides must be non-empty")
        if {a for a, _ in lhs} & {a for a, _ in rhs}:
            raise RuleSyntaxError(line, "CFD LHS and RHS attributes must be disjoint")
        return CfdRule(rule_id, tuple(lhs), tuple(rhs))

    def _patterns(self, text: str, line: int) -> list[tuple[str, object]]:
        out = []
        for part in (p.strip() for p in text.split(",")):
            if not part:
                raise RuleSyntaxError(line, "empty pattern")
            if "=" not in part:
                raise RuleSyntaxError(line, f"expected Attr=value or Attr=_ in {part!r}")
            name, _, raw = part.partition("=")
            attr = self.attr(name, line)
            raw = _unquote(raw)
            if raw == "_":
                out.append((attr.name, WILDCARD))
            else:
                out.append((attr.name, _coerce_constant(raw, attr, line)))
        return out


def parse_rules(text: str, schema: list[AttributeSchema]):
    """Parse a rules file into (currency constraints, CFDs).

    Any malformed line raises RuleSyntaxError carrying the 1-based line number.
    """
    parser = _Parser(schema)
    ccs: list[CurrencyConstraint] = []
    cfds: list[CfdRule] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        if kind in ("CC", "CC:"):
            default = f"cc-{len(ccs) + 1}"
            rule_id, body = (default, rest) if kind == "CC:" else _split_id(rest, default)
            ccs.append(parser.parse_cc(body, rule_id, line_no))
        elif kind in ("CFD", "CFD:"):
            default = f"cfd-{len(cfds) + 1}"
            rule_id, body = (default, rest) if kind == "CFD:" else _split_id(rest, default)
            cfds.append(parser.parse_cfd(body, rule_id, line_no))
        else:
            raise RuleSyntaxError(line_no, f"rule must start with 'CC' or 'CFD', got {kind!r}")
    return ccs, cfds


def _split_id(rest: str, default: str) -> tuple[str, str]:
    head, sep, body = rest.partition(":")
    if sep and "=" not in head and "(" not in head:
        rule_id = head.strip() or default
        return rule_id, body
    return default, rest


# --------------------------------------------------------------------------
# CC evaluation


def _compare(attr: AttributeSchema, op: str, left, right) -> bool:
    if attr.kind == "continuous":
        a, b = left, right
    elif attr.ordering is not None:
        a, b = attr.rank(left), attr.rank(right)
    else:
        a, b = left, right
        if op not in ("=", "!="):
            raise ValueError(f"operator {op!r} is not defined on unordered attribute {attr.name!r}")
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    if op == ">=":
        return a >= b
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    raise ValueError(f"unknown operator {op!r}")


def _guards_hold(cc: CurrencyConstraint, a: Record, b: Record) -> bool:
    for g in cc.guards:
        va, vb = a.cells.get(g.attr), b.cells.get(g.attr)
        if va is None or vb is None:
            return False
        if g.kind == "same":
            if va != vb:
                return False
        else:
            if va != g.value or vb != g.value:
                return False
    return True


def cc_holds(
    cc: CurrencyConstraint,
    a: Record,
    b: Record,
    schema_by_name: dict[str, AttributeSchema],
    derived_orders: set[tuple[str, int, int]] | None = None,
) -> tuple[int, int] | None:
    """Return (a.record_id, b.record_id) when cc concludes a before b, else None.

    ``derived_orders`` holds (attr, older_id, newer_id) triples already derived;
    the propagation form consults it for its premise. Missing cells never fire.
    """
    if a.entity_id != b.entity_id:
        return None
    if not _guards_hold(cc, a, b):
        return None
    form = cc.form
    if isinstance(form, Psi3):
        if derived_orders and (form.premise_attr, a.record_id, b.record_id) in derived_orders:
            return (a.record_id, b.record_id)
        return None
    va, vb = a.cells.get(form.attr), b.cells.get(form.attr)
    if va is None or vb is None:
        return None
    if isinstance(form, Psi1):
        if va == form.from_value and vb == form.to_value:
            return (a.record_id, b.record_id)
        return None
    if _compare(schema_by_name[form.attr], form.op, va, vb):
        return (a.record_id, b.record_id)
    return None


def derive_orders(
    records: list[Record],
    ccs: list[CurrencyConstraint],
    schema: list[AttributeSchema],
) -> dict[tuple[int, int], set[str]]:
    """All pairwise recency conclusions for one entity's records.

    Value-pair and comparison rules run on every ordered pair; propagation
    rules run as a fixpoint afterwards (they may feed each other). Returns
    (older_id, newer_id) -> ids of the rules that concluded it.
    """
    by_name = {s.name: s for s in schema}
    concluded: dict[tuple[int, int], set[str]] = {}
    derived: set[tuple[str, int, int]] = set()

    base = [c for c in ccs if not isinstance(c.form, Psi3)]
    prop = [c for c in ccs if isinstance(c.form, Psi3)]

    for a in records:
        for b in records:
            if a.record_id == b.record_id:
                continue
            for cc in base:
                pair = cc_holds(cc, a, b, by_name)
                if pair is not None:
                    concluded.setdefault(pair, set()).add(cc.id)
                    derived.add((cc.target_attr, a.record_id, b.record_id))

    changed = True
    while changed:
        changed = False
        for a in records:
            for b in records:
                if a.record_id == b.record_id:
                    continue
                for cc in prop:
                    key = (cc.target_attr, a.record_id, b.record_id)
                    if key in derived:
                        continue
                    pair = cc_holds(cc, a, b, by_name, derived)
                    if pair is not None:
                        concluded.setdefault(pair, set()).add(cc.id)
                        derived.add(key)
                        changed = True
    return concluded
