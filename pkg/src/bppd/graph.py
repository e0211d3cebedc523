"""Graphlike decomposition of a detector error model for matching decoders.

Mechanisms touching at most two detectors become weighted edges (one
detector means a boundary edge).  A hyperedge splits into its Z-detector
part and X-detector part; each part must coincide with an existing
graphlike column, whose edge absorbs the hyperedge's probability.  Edge
weights are log likelihood ratios ln((1-p)/p).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dem import DetectorErrorModel, combine_probabilities
from .errors import DecompositionError, ParameterError, StructureError


@dataclass
class DecodingGraph:
    """Weighted matching graph over detectors plus one virtual boundary node.

    ``boundary`` equals ``n_detectors``.  Edge arrays are parallel; an
    edge's ``column`` is the graphlike mechanism it represents (used to
    report corrections over mechanisms), ``hyper_columns`` lists the
    hyperedge mechanisms folded into it.
    """

    n_detectors: int
    n_observables: int
    n_mechanisms: int
    edge_u: np.ndarray
    edge_v: np.ndarray          # boundary edges point at n_detectors
    edge_weight: np.ndarray
    edge_prob: np.ndarray
    edge_mask: np.ndarray       # observable bitmask, int64
    edge_column: np.ndarray
    hyper_to_edges: dict = field(default_factory=dict)   # hyper column -> edge ids
    edge_hypers: list = field(default_factory=list)      # edge id -> hyper columns
    skipped_columns: tuple = ()

    # CSR adjacency including the boundary node, filled in __post_init__
    adj_ptr: np.ndarray = None
    adj_node: np.ndarray = None
    adj_edge: np.ndarray = None

    @property
    def boundary(self) -> int:
        return self.n_detectors

    @property
    def n_edges(self) -> int:
        return int(self.edge_u.shape[0])

    def fault_ids(self, edge: int) -> frozenset:
        return frozenset({int(self.edge_column[edge])})

    def __post_init__(self):
        n_nodes = self.n_detectors + 1
        deg = np.zeros(n_nodes + 1, dtype=np.int64)
        for u, v in zip(self.edge_u, self.edge_v):
            deg[u + 1] += 1
            deg[v + 1] += 1
        self.adj_ptr = np.cumsum(deg).astype(np.int32)
        total = int(self.adj_ptr[-1])
        self.adj_node = np.empty(total, dtype=np.int32)
        self.adj_edge = np.empty(total, dtype=np.int32)
        cursor = self.adj_ptr[:-1].astype(np.int64).copy()
        for eid, (u, v) in enumerate(zip(self.edge_u, self.edge_v)):
            self.adj_node[cursor[u]] = v
            self.adj_edge[cursor[u]] = eid
            cursor[u] += 1
            self.adj_node[cursor[v]] = u
            self.adj_edge[cursor[v]] = eid
            cursor[v] += 1

    def adjacency_weights(self, edge_weight=None) -> np.ndarray:
        w = self.edge_weight if edge_weight is None else edge_weight
        return w[self.adj_edge]


def decompose_to_graph(dem: DetectorErrorModel) -> DecodingGraph:
    """Split the model into graphlike edges, folding in hyperedges."""
    if np.any(dem.priors >= 0.5):
        raise ParameterError("matching graphs need priors below 0.5")
    if dem.n_observables > 63:
        raise StructureError("observable bitmasks limited to 63 observables")

    edge_u, edge_v, edge_prob, edge_mask, edge_col = [], [], [], [], []
    by_dets: dict[tuple, list[int]] = {}
    skipped = []
    boundary = dem.n_detectors
    for k in range(dem.n_mechanisms):
        dets = dem.column_dets[k]
        if len(dets) > 2:
            continue
        if len(dets) == 0:
            # mechanism invisible to every detector; it cannot take part in
            # matching at all
            skipped.append(k)
            continue
        mask = 0
        for o in dem.column_obs[k]:
            mask |= 1 << o
        u = dets[0]
        v = dets[1] if len(dets) == 2 else boundary
        eid = len(edge_u)
        edge_u.append(u)
        edge_v.append(v)
        edge_prob.append(float(dem.priors[k]))
        edge_mask.append(mask)
        edge_col.append(k)
        by_dets.setdefault(dets, []).append(eid)

    hyper_to_edges = {}
    edge_hypers = [[] for _ in range(len(edge_u))]
    has_hyper = any(len(d) > 2 for d in dem.column_dets)
    basis = dem.detector_basis() if has_hyper else None
    for k in range(dem.n_mechanisms):
        dets = dem.column_dets[k]
        if len(dets) <= 2:
            continue
        mask = 0
        for o in dem.column_obs[k]:
            mask |= 1 << o
        z_part = tuple(d for d in dets if basis[d] == 0)
        x_part = tuple(d for d in dets if basis[d] == 1)
        if len(z_part) > 2 or len(x_part) > 2:
            raise DecompositionError(
                k, f"basis split ({len(z_part)} Z, {len(x_part)} X detectors) is not graphlike"
            )
        parts = [p for p in (z_part, x_part) if p]
        candidates = []
        for part in parts:
            eids = by_dets.get(part)
            if not eids:
                raise DecompositionError(k, f"no graphlike column covers detectors {part}")
            candidates.append(eids)
        chosen = _pick_mask_consistent(candidates, edge_mask, mask)
        if chosen is None:
            raise DecompositionError(k, "no decomposition reproduces the observable mask")
        for eid in chosen:
            edge_prob[eid] = combine_probabilities(edge_prob[eid], float(dem.priors[k]))
            edge_hypers[eid].append(k)
        hyper_to_edges[k] = tuple(chosen)

    prob = np.array(edge_prob)
    graph = DecodingGraph(
        n_detectors=dem.n_detectors,
        n_observables=dem.n_observables,
        n_mechanisms=dem.n_mechanisms,
        edge_u=np.array(edge_u, dtype=np.int32),
        edge_v=np.array(edge_v, dtype=np.int32),
        edge_weight=np.log((1.0 - prob) / prob),
        edge_prob=prob,
        edge_mask=np.array(edge_mask, dtype=np.int64),
        edge_column=np.array(edge_col, dtype=np.int32),
        hyper_to_edges=hyper_to_edges,
        edge_hypers=edge_hypers,
        skipped_columns=tuple(skipped),
    )
    if np.any(graph.edge_weight < 0) or not np.all(np.isfinite(graph.edge_weight)):
        raise StructureError("edge weights must be finite and nonnegative")
    return graph


def _pick_mask_consistent(candidates, edge_mask, target_mask):
    """Choose one edge per part so the XOR of masks matches the hyperedge."""
    best = None
    if len(candidates) == 1:
        for e in candidates[0]:
            if edge_mask[e] == target_mask:
                best = (e,)
                break
    else:
        for e1 in candidates[0]:
            for e2 in candidates[1]:
                if edge_mask[e1] ^ edge_mask[e2] == target_mask:
                    best = (e1, e2)
                    break
            if best:
                break
    return best
