"""Per-entity currency graphs.

Records of one entity become vertices of a directed graph whose edges encode
"is less current than". Two records share a vertex when no rule orders them
either way and they are ordered identically relative to every other record of
the entity — merging merely-incomparable records would collapse parallel
chains. Edges are transitively reduced so chain lengths stay meaningful.

Contradictory rule conclusions show up as directed cycles; they are reported
(with the rules and records involved) and the affected records are quarantined
rather than repaired.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .data_model import AttributeSchema, Dataset, Record
from .rules import CurrencyConstraint, derive_orders


@dataclass
class Vertex:
    vertex_id: int
    member_record_ids: frozenset[int]
    curr_value: float | None = None
    sup: float = 1.0
    inf: float = 0.0


@dataclass
class ConflictReport:
    entity_id: str
    cycle: list[int]  # vertex ids forming one representative cycle
    implicated_constraints: list[str]
    implicated_records: list[int]


@dataclass
class CurrencyGraph:
    entity_id: str
    vertices: dict[int, Vertex] = field(default_factory=dict)
    edges: set[tuple[int, int]] = field(default_factory=set)
    edge_sources: dict[tuple[int, int], tuple[str, ...]] = field(default_factory=dict)
    valid_edges: set[tuple[int, int]] = field(default_factory=set)
    source_id: int | None = None
    sink_id: int | None = None

    def add_vertex(self, vertex: Vertex) -> None:
        self.vertices[vertex.vertex_id] = vertex

    def successors(self, vid: int) -> list[int]:
        return sorted(w for (v, w) in self.edges if v == vid)

    def predecessors(self, vid: int) -> list[int]:
        return sorted(v for (v, w) in self.edges if w == vid)

    def real_vertex_ids(self) -> list[int]:
        return sorted(v for v in self.vertices if v not in (self.source_id, self.sink_id))

    def successor_map(self) -> dict[int, list[int]]:
        succ: dict[int, list[int]] = {v: [] for v in self.vertices}
        for (a, b) in self.edges:
            succ[a].append(b)
        for lst in succ.values():
            lst.sort()
        return succ

    def topological_order(self) -> list[int] | None:
        """Kahn's algorithm with a deterministic smallest-id tie-break.

        Returns None when the graph has a cycle.
        """
        succ = self.successor_map()
        indeg = {v: 0 for v in self.vertices}
        for _, w in self.edges:
            indeg[w] += 1
        ready = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            v = heapq.heappop(ready)
            order.append(v)
            for w in succ[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
        return order if len(order) == len(self.vertices) else None

    def is_dag(self) -> bool:
        return self.topological_order() is not None

    def record_values(self) -> dict[int, float]:
        """Record-level currency values (each record inherits its vertex's)."""
        out: dict[int, float] = {}
        for v in self.vertices.values():
            if v.vertex_id in (self.source_id, self.sink_id):
                continue
            for rid in v.member_record_ids:
                if v.curr_value is not None:
                    out[rid] = v.curr_value
        return out


def _reachability(n_ids: list[int], adj: dict[int, set[int]]) -> dict[int, set[int]]:
    """reach[v] = all ids reachable from v by 1+ steps (v itself iff on a cycle)."""
    reach: dict[int, set[int]] = {}

    def dfs(start: int) -> set[int]:
        seen: set[int] = set()
        stack = list(adj.get(start, ()))
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(adj.get(v, ()))
        return seen

    for v in n_ids:
        reach[v] = dfs(v)
    return reach


def build_graph(
    records: list[Record],
    ccs: list[CurrencyConstraint],
    schema: list[AttributeSchema],
) -> CurrencyGraph:
    """Construct the currency graph for one entity's records.

    Pairwise rule conclusions (with the propagation fixpoint) are transitively
    closed; records merge under the equivalence rule; edges connect merged
    vertices and are transitively reduced when the result is acyclic.
    """
    if not records:
        raise ValueError("build_graph needs at least one record")
    entity_ids = {r.entity_id for r in records}
    if len(entity_ids) != 1:
        raise ValueError(f"records span multiple entities: {sorted(entity_ids)}")

    conclusions = derive_orders(records, ccs, schema)
    ids = sorted(r.record_id for r in records)
    adj: dict[int, set[int]] = {i: set() for i in ids}
    for (a, b) in conclusions:
        adj[a].add(b)
    reach = _reachability(ids, adj)

    # Merge rule: mutually unreachable and identical relative to every third record.
    parent = {i: i for i in ids}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i_pos, a in enumerate(ids):
        for b in ids[i_pos + 1 :]:
            if b in reach[a] or a in reach[b]:
                continue
            agree = True
            for c in ids:
                if c in (a, b):
                    continue
                if (c in reach[a]) != (c in reach[b]) or (a in reach[c]) != (b in reach[c]):
                    agree = False
                    break
            if agree:
                parent[find(b)] = find(a)

    members: dict[int, set[int]] = {}
    for i in ids:
        members.setdefault(find(i), set()).add(i)

    graph = CurrencyGraph(entity_id=records[0].entity_id)
    vid_of: dict[int, int] = {}
    for group in members.values():
        vid = min(group)
        graph.add_vertex(Vertex(vertex_id=vid, member_record_ids=frozenset(group)))
        for rid in group:
            vid_of[rid] = vid

    # Vertex edges from direct rule conclusions; transitive reduction below
    # leaves the covering relation, so closure edges would be redundant anyway.
    sources: dict[tuple[int, int], set[str]] = {}
    for (a, b), rule_ids in conclusions.items():
        va, vb = vid_of[a], vid_of[b]
        if va != vb:
            graph.edges.add((va, vb))
            sources.setdefault((va, vb), set()).update(rule_ids)

    if graph.is_dag():
        _transitive_reduce(graph, sources)
    graph.edge_sources = {e: tuple(sorted(sources.get(e, ()))) for e in graph.edges}
    return graph


def _transitive_reduce(graph: CurrencyGraph, sources: dict[tuple[int, int], set[str]]) -> None:
    """Drop edge (a, c) whenever a longer path a -> .. -> c exists."""
    succ: dict[int, set[int]] = {v: set() for v in graph.vertices}
    for v, w in graph.edges:
        succ[v].add(w)
    order = graph.topological_order()
    assert order is not None
    # reachable-in-2+-steps sets, built in reverse topological order
    reach2: dict[int, set[int]] = {v: set() for v in graph.vertices}
    for v in reversed(order):
        acc: set[int] = set()
        for w in succ[v]:
            acc |= succ[w]
            acc |= reach2[w]
        reach2[v] = acc
    redundant = {(v, w) for (v, w) in graph.edges if w in reach2[v]}
    graph.edges -= redundant
    for e in redundant:
        sources.pop(e, None)


def _strongly_connected_components(graph: CurrencyGraph) -> list[list[int]]:
    """Tarjan's algorithm, iterative, deterministic vertex order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = [0]

    for root in sorted(graph.vertices):
        if root in index:
            continue
        work = [(root, iter(graph.successors(root)))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(graph.successors(w))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(sorted(comp))
    return sccs


def _walk_cycle(graph: CurrencyGraph, comp: set[int], start: int) -> list[int]:
    """Shortest cycle through ``start`` within the component, via BFS parents."""
    parents: dict[int, int | None] = {start: None}
    queue = [start]
    while queue:
        v = queue.pop(0)
        for w in graph.successors(v):
            if w not in comp:
                continue
            if w == start:
                path = [v]
                node = parents[v]
                while node is not None:
                    path.append(node)
                    node = parents[node]
                path.reverse()
                return path
            if w not in parents:
                parents[w] = v
                queue.append(w)
    return sorted(comp)


def detect_conflicts(
    graph: CurrencyGraph,
    provenance: dict[tuple[int, int], tuple[str, ...]] | None = None,
) -> list[ConflictReport]:
    """Report contradictory rule conclusions (directed cycles).

    One report per strongly connected component of size >= 2, carrying a
    representative cycle, the rules whose conclusions created the component's
    internal edges, and every member record.
    """
    if provenance is None:
        provenance = graph.edge_sources
    reports = []
    for comp in _strongly_connected_components(graph):
        if len(comp) < 2:
            continue
        comp_set = set(comp)
        rule_ids: set[str] = set()
        record_ids: set[int] = set()
        for (v, w) in graph.edges:
            if v in comp_set and w in comp_set:
                rule_ids.update(provenance.get((v, w), ()))
        for v in comp:
            record_ids.update(graph.vertices[v].member_record_ids)
        reports.append(
            ConflictReport(
                entity_id=graph.entity_id,
                cycle=_walk_cycle(graph, comp_set, comp[0]),
                implicated_constraints=sorted(rule_ids),
                implicated_records=sorted(record_ids),
            )
        )
    return reports


def quarantined_record_ids(reports: list[ConflictReport]) -> set[int]:
    out: set[int] = set()
    for r in reports:
        out.update(r.implicated_records)
    return out


def quarantine(dataset: Dataset, reports: list[ConflictReport]) -> Dataset:
    """Working dataset without the records implicated in any conflict."""
    bad = quarantined_record_ids(reports)
    if not bad:
        return dataset
    return dataset.subset(r.record_id for r in dataset.records if r.record_id not in bad)


def to_dot(graph: CurrencyGraph) -> str:
    """GraphViz rendering for debugging; valid edges drawn solid."""
    lines = [f'digraph "{graph.entity_id}" {{', "  rankdir=LR;"]
    for vid in sorted(graph.vertices):
        v = graph.vertices[vid]
        label_members = ",".join(f"r{m}" for m in sorted(v.member_record_ids))
        value = "" if v.curr_value is None else f"\\n{v.curr_value:.3f}"
        name = {graph.source_id: "s", graph.sink_id: "t"}.get(vid, f"v{vid}")
        lines.append(f'  {vid} [label="{name}\\n{{{label_members}}}{value}"];')
    for (a, b) in sorted(graph.edges):
        style = "solid" if (a, b) in graph.valid_edges else "dashed"
        lines.append(f"  {a} -> {b} [style={style}];")
    lines.append("}")
    return "\n".join(lines)
