"""Total currency values on an acyclic currency graph.

Every vertex receives a value in (0,1) such that each edge is strictly
increasing, making all records of an entity comparable on recency. A plain
topological sort would do this but is unstable under input order; instead the
graph gets synthetic endpoints s=0 and t=1 and values are fixed by repeatedly
interpolating along the longest *candidate chain*:

* bounds: an unvalued vertex's inf is the largest value among its valued
  ancestors, its sup the smallest among its valued descendants;
* an edge is valid when its endpoints' bounds agree (both-unvalued: equal inf
  and sup; valued-to-unvalued: equal inf; unvalued-to-valued: equal sup;
  valued-to-valued: never);
* a candidate chain runs from a valued vertex through unvalued interiors over
  valid edges to a valued vertex; the longest one (ties: smallest starting id,
  then lexicographic id sequence) has its interior spaced evenly between its
  endpoint values: position p of m interiors gets a + p*(b-a)/(m+1).

When unvalued vertices remain but no candidate chain exists (possible on
adversarial shapes), the topologically-first unvalued vertex is set to
(inf+sup)/2 and the loop continues; this preserves edge monotonicity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import CurrencyGraph, Vertex


class CyclicGraphError(ValueError):
    """Raised when currency values are requested for a graph with conflicts."""


@dataclass(frozen=True)
class Chain:
    vertex_ids: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.vertex_ids)

    @property
    def interior(self) -> tuple[int, ...]:
        return self.vertex_ids[1:-1]


def add_endpoints(graph: CurrencyGraph) -> None:
    """Attach the synthetic start (value 0) and terminal (value 1) vertices."""
    if graph.source_id is not None:
        return
    real = graph.real_vertex_ids()
    s_id = -1
    t_id = (max(real) + 1) if real else 1
    graph.source_id = s_id
    graph.sink_id = t_id
    indeg = {v: 0 for v in real}
    outdeg = {v: 0 for v in real}
    for (a, b) in graph.edges:
        outdeg[a] += 1
        indeg[b] += 1
    graph.add_vertex(Vertex(s_id, frozenset(), curr_value=0.0, sup=0.0, inf=0.0))
    graph.add_vertex(Vertex(t_id, frozenset(), curr_value=1.0, sup=1.0, inf=1.0))
    for v in real:
        if indeg[v] == 0:
            graph.edges.add((s_id, v))
        if outdeg[v] == 0:
            graph.edges.add((v, t_id))


def update_valid(graph: CurrencyGraph) -> None:
    """Refresh every vertex's bounds and recompute the valid-edge set."""
    order = graph.topological_order()
    if order is None:
        raise CyclicGraphError(f"entity {graph.entity_id}: currency graph has a cycle")

    for v in graph.vertices.values():
        if v.curr_value is not None:
            v.inf = v.curr_value
            v.sup = v.curr_value

    preds: dict[int, list[int]] = {v: [] for v in graph.vertices}
    succs: dict[int, list[int]] = {v: [] for v in graph.vertices}
    for (a, b) in graph.edges:
        preds[b].append(a)
        succs[a].append(b)

    for vid in order:
        v = graph.vertices[vid]
        if v.curr_value is not None:
            continue
        v.inf = max((graph.vertices[p].inf for p in preds[vid]), default=0.0)
    for vid in reversed(order):
        v = graph.vertices[vid]
        if v.curr_value is not None:
            continue
        v.sup = min((graph.vertices[s].sup for s in succs[vid]), default=1.0)

    graph.valid_edges = set()
    for (a, b) in graph.edges:
        va, vb = graph.vertices[a], graph.vertices[b]
        a_set = va.curr_value is not None
        b_set = vb.curr_value is not None
        if a_set and b_set:
            continue
        if not a_set and not b_set:
            ok = va.sup == vb.sup and va.inf == vb.inf
        elif a_set:
            ok = va.inf == vb.inf
        else:
            ok = va.sup == vb.sup
        if ok:
            graph.valid_edges.add((a, b))


def get_max_cand_chain(graph: CurrencyGraph) -> Chain | None:
    """Longest candidate chain over the current valid edges, or None.

    Dynamic programming along a deterministic topological order. Chains are cut
    at valued vertices: a valued vertex may only start or end a chain. Ties are
    broken by the lexicographically smallest vertex-id sequence, which also
    implies the smallest starting id.
    """
    order = graph.topological_order()
    if order is None:
        raise CyclicGraphError(f"entity {graph.entity_id}: currency graph has a cycle")

    extendable: dict[int, tuple[int, ...] | None] = {}
    best: tuple[int, tuple[int, ...]] | None = None  # (-depth, path)

    for vid in order:
        v = graph.vertices[vid]
        if v.curr_value is not None:
            extendable[vid] = (vid,)
        else:
            extendable[vid] = None

    succ = graph.successor_map()
    for vid in order:
        path = extendable[vid]
        if path is None:
            continue
        for w in succ[vid]:
            if (vid, w) not in graph.valid_edges:
                continue
            wv = graph.vertices[w]
            if wv.curr_value is not None:
                if len(path) >= 2:  # at least one unvalued interior
                    candidate = path + (w,)
                    key = (-len(candidate), candidate)
                    if best is None or key < best:
                        best = key
            else:
                candidate = path + (w,)
                current = extendable[w]
                if current is None or (-len(candidate), candidate) < (-len(current), current):
                    extendable[w] = candidate

    return Chain(best[1]) if best else None


def _interpolate(graph: CurrencyGraph, chain: Chain) -> None:
    first = graph.vertices[chain.vertex_ids[0]]
    last = graph.vertices[chain.vertex_ids[-1]]
    lo, hi = first.inf, last.sup
    m = len(chain.interior)
    step = (hi - lo) / (m + 1)
    for p, vid in enumerate(chain.interior, start=1):
        v = graph.vertices[vid]
        v.curr_value = lo + p * step
        v.inf = v.sup = v.curr_value


def assign_currency_values(graph: CurrencyGraph) -> CurrencyGraph:
    """Value every vertex; records inherit their vertex's value.

    Raises CyclicGraphError on cyclic input — run conflict detection and
    quarantine first.
    """
    if not graph.is_dag():
        raise CyclicGraphError(f"entity {graph.entity_id}: resolve conflicts before ordering")
    add_endpoints(graph)
    while True:
        unvalued = [v for v in graph.vertices.values() if v.curr_value is None]
        if not unvalued:
            break
        update_valid(graph)
        chain = get_max_cand_chain(graph)
        if chain is not None:
            _interpolate(graph, chain)
            continue
        order = graph.topological_order()
        vid = next(v for v in order if graph.vertices[v].curr_value is None)
        v = graph.vertices[vid]
        v.curr_value = (v.inf + v.sup) / 2.0
        v.inf = v.sup = v.curr_value
    update_valid(graph)  # leaves bounds consistent; no edge stays valid
    return graph
