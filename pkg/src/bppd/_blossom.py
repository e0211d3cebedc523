"""Exact maximum-weight matching in general graphs (blossom algorithm).

Galil-style primal-dual method: grow alternating trees from unmatched
vertices, shrink odd cycles into blossoms, augment along S-to-S paths, and
drive dual variables by the minimum of the four classic delta rules.  Each
stage adds one matched edge and costs O(n^2); the whole run is O(n^3).

Vertices are integers 0..n-1; the graph is an edge list (x, y, w).  Edge
weights may be floats.  Negative-weight edges are never matched, so
callers wanting maximum-cardinality or minimum-weight-perfect behaviour
shift weights first (see ``min_weight_perfect_matching``).

This is a tuned rewrite of the well-known O(n^3) reference implementation;
the test suite fuzzes it against an independent matcher and a brute-force
pairing oracle.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

_LABEL_NONE = 0
_LABEL_S = 1
_LABEL_T = 2


class _Blossom:
    """Trivial blossom: a single vertex.  Base class for real blossoms."""

    __slots__ = ("parent", "base_vertex", "label", "tree_edge", "best_edge",
                 "marker", "subblossoms", "edges", "dual_var", "best_edge_set")

    def __init__(self, base_vertex: int):
        self.parent: Optional[_Blossom] = None
        self.base_vertex = base_vertex
        self.label = _LABEL_NONE
        self.tree_edge: Optional[tuple[int, int]] = None
        self.best_edge = -1
        self.marker = False

    def vertices(self):
        return [self.base_vertex]


class _NonTrivialBlossom(_Blossom):
    """Odd alternating cycle of sub-blossoms with a dual variable."""

    def __init__(self, subblossoms: list[_Blossom], edges: list[tuple[int, int]]):
        super().__init__(subblossoms[0].base_vertex)
        assert len(subblossoms) == len(edges)
        assert len(edges) % 2 == 1 and len(edges) >= 3
        self.subblossoms = subblossoms
        self.edges = edges
        self.dual_var = 0.0
        self.best_edge_set: Optional[list[int]] = None

    def vertices(self):
        stack = [self]
        nodes = []
        while stack:
            b = stack.pop()
            for sub in b.subblossoms:
                if isinstance(sub, _NonTrivialBlossom):
                    stack.append(sub)
                else:
                    nodes.append(sub.base_vertex)
        return nodes


class _AlternatingPath(NamedTuple):
    edges: list[tuple[int, int]]


class _MatchingContext:
    def __init__(self, edges: list[tuple[int, int, float]], num_vertex: int):
        self.edges = edges
        self.num_vertex = num_vertex
        self.adjacent_edges: list[list[int]] = [[] for _ in range(num_vertex)]
        for e, (x, y, _w) in enumerate(edges):
            self.adjacent_edges[x].append(e)
            self.adjacent_edges[y].append(e)
        self.vertex_mate = num_vertex * [-1]
        self.trivial_blossom = [_Blossom(x) for x in range(num_vertex)]
        self.nontrivial_blossom: list[_NonTrivialBlossom] = []
        self.vertex_top_blossom = self.trivial_blossom.copy()
        max_weight = max(w for (_x, _y, w) in edges)
        # duals are stored doubled so tight edges have exactly zero slack
        self.vertex_dual_2x = num_vertex * [max_weight]
        self.vertex_best_edge = num_vertex * [-1]
        self.queue: list[int] = []

    def edge_slack_2x(self, e: int) -> float:
        x, y, w = self.edges[e]
        return self.vertex_dual_2x[x] + self.vertex_dual_2x[y] - 2 * w

    # --- least-slack edge tracking ---------------------------------------

    def lset_reset(self):
        for x in range(self.num_vertex):
            self.vertex_best_edge[x] = -1
        for blossom in self.trivial_blossom:
            blossom.best_edge = -1
        for blossom in self.nontrivial_blossom:
            blossom.best_edge = -1
            blossom.best_edge_set = None

    def lset_add_vertex_edge(self, y: int, e: int, slack: float):
        best_edge = self.vertex_best_edge[y]
        if best_edge == -1 or slack < self.edge_slack_2x(best_edge):
            self.vertex_best_edge[y] = e

    def lset_get_best_vertex_edge(self):
        best_index, best_slack = -1, 0.0
        for x in range(self.num_vertex):
            if self.vertex_top_blossom[x].label == _LABEL_NONE:
                e = self.vertex_best_edge[x]
                if e != -1:
                    slack = self.edge_slack_2x(e)
                    if best_index == -1 or slack < best_slack:
                        best_index, best_slack = e, slack
        return best_index, best_slack

    def lset_new_blossom(self, blossom: _Blossom):
        if isinstance(blossom, _NonTrivialBlossom):
            blossom.best_edge_set = []

    def lset_add_blossom_edge(self, blossom: _Blossom, e: int, slack: float):
        if blossom.best_edge == -1 or slack < self.edge_slack_2x(blossom.best_edge):
            blossom.best_edge = e
        if isinstance(blossom, _NonTrivialBlossom):
            blossom.best_edge_set.append(e)

    def lset_merge_blossoms(self, blossom: _NonTrivialBlossom):
        num_vertex = self.num_vertex
        best_edge_to_blossom = num_vertex * [-1]
        best_slack_to_blossom = num_vertex * [0.0]
        best_edge, best_slack = -1, 0.0
        for sub in blossom.subblossoms:
            if sub.label != _LABEL_S:
                continue
            if isinstance(sub, _NonTrivialBlossom):
                sub_edge_set = sub.best_edge_set
                sub.best_edge_set = None
            else:
                sub_edge_set = self.adjacent_edges[sub.base_vertex]
            for e in sub_edge_set:
                x, y, _w = self.edges[e]
                bx = self.vertex_top_blossom[x]
                by = self.vertex_top_blossom[y]
                if bx is by:
                    continue
                other = by if bx is blossom else bx
                if other.label != _LABEL_S:
                    continue
                slack = self.edge_slack_2x(e)
                base = other.base_vertex
                if best_edge_to_blossom[base] == -1 or slack < best_slack_to_blossom[base]:
                    best_edge_to_blossom[base] = e
                    best_slack_to_blossom[base] = slack
                if best_edge == -1 or slack < best_slack:
                    best_edge, best_slack = e, slack
        blossom.best_edge_set = [e for e in best_edge_to_blossom if e != -1]
        blossom.best_edge = best_edge

    def lset_get_best_blossom_edge(self):
        best_index, best_slack = -1, 0.0
        for blossom in self.trivial_blossom + self.nontrivial_blossom:
            if blossom.label == _LABEL_S and blossom.parent is None:
                e = blossom.best_edge
                if e != -1:
                    slack = self.edge_slack_2x(e)
                    if best_index == -1 or slack < best_slack:
                        best_index, best_slack = e, slack
        return best_index, best_slack

    # --- stage bookkeeping ------------------------------------------------

    def reset_stage(self):
        for blossom in self.trivial_blossom + self.nontrivial_blossom:
            blossom.label = _LABEL_NONE
            blossom.tree_edge = None
        self.queue.clear()
        self.lset_reset()

    def trace_alternating_paths(self, x: int, y: int) -> _AlternatingPath:
        """Trace back from both sides; meeting trees give a blossom cycle,
        disjoint trees give an augmenting path."""
        marked_blossoms = []
        xedges = [(x, y)]
        yedges = [(y, x)]
        first_common = None
        while x != -1 or y != -1:
            bx = self.vertex_top_blossom[x]
            if bx.marker:
                first_common = bx
                break
            bx.marker = True
            marked_blossoms.append(bx)
            if bx.tree_edge is None:
                x = -1
            else:
                xedges.append(bx.tree_edge)
                x = bx.tree_edge[0]
            if y != -1:
                x, y = y, x
                xedges, yedges = yedges, xedges
        for b in marked_blossoms:
            b.marker = False
        if first_common is not None:
            while self.vertex_top_blossom[yedges[-1][0]] is not first_common:
                yedges.pop()
        path_edges = xedges[::-1] + [(q, p) for (p, q) in yedges[1:]]
        assert len(path_edges) % 2 == 1
        return _AlternatingPath(path_edges)

    def make_blossom(self, path: _AlternatingPath):
        subblossoms = [self.vertex_top_blossom[x] for (x, _y) in path.edges]
        blossom = _NonTrivialBlossom(subblossoms, path.edges)
        self.nontrivial_blossom.append(blossom)
        for sub in subblossoms:
            sub.parent = blossom
        for x in blossom.vertices():
            self.vertex_top_blossom[x] = blossom
        blossom.label = _LABEL_S
        blossom.tree_edge = subblossoms[0].tree_edge
        for sub in subblossoms:
            if sub.label == _LABEL_T:
                self.queue.extend(sub.vertices())
        self.lset_merge_blossoms(blossom)

    def find_path_through_blossom(self, blossom: _NonTrivialBlossom, sub: _Blossom):
        nodes = [sub]
        edges: list[tuple[int, int]] = []
        p = blossom.subblossoms.index(sub)
        nsub = len(blossom.subblossoms)
        while p != 0:
            if p % 2 == 0:
                edges.append(blossom.edges[p - 1][::-1])
                nodes.append(blossom.subblossoms[p - 1])
                edges.append(blossom.edges[p - 2][::-1])
                nodes.append(blossom.subblossoms[p - 2])
                p -= 2
            else:
                edges.append(blossom.edges[p])
                nodes.append(blossom.subblossoms[p + 1])
                edges.append(blossom.edges[p + 1])
                nodes.append(blossom.subblossoms[(p + 2) % nsub])
                p = (p + 2) % nsub
        return nodes, edges

    def expand_t_blossom(self, blossom: _NonTrivialBlossom):
        for sub in blossom.subblossoms:
            sub.parent = None
            if isinstance(sub, _NonTrivialBlossom):
                for x in sub.vertices():
                    self.vertex_top_blossom[x] = sub
            else:
                self.vertex_top_blossom[sub.base_vertex] = sub
        # reattach the sub-blossoms to the alternating tree along the path
        # from the tree entry point to the base
        x, y = blossom.tree_edge
        sub = self.vertex_top_blossom[y]
        sub.label = _LABEL_T
        sub.tree_edge = blossom.tree_edge
        path_nodes, path_edges = self.find_path_through_blossom(blossom, sub)
        for p in range(0, len(path_edges), 2):
            _y, x2 = path_edges[p]
            self.assign_label_s(x2)
            nxt = path_nodes[p + 2]
            nxt.label = _LABEL_T
            nxt.tree_edge = path_edges[p + 1]
        self.nontrivial_blossom.remove(blossom)

    def expand_zero_dual_blossoms(self):
        stack = [b for b in self.nontrivial_blossom
                 if b.parent is None and b.dual_var == 0]
        while stack:
            blossom = stack.pop()
            for sub in blossom.subblossoms:
                sub.parent = None
                if isinstance(sub, _NonTrivialBlossom) and sub.dual_var == 0:
                    stack.append(sub)
                else:
                    for x in sub.vertices():
                        self.vertex_top_blossom[x] = sub
            self.nontrivial_blossom.remove(blossom)

    # --- augmenting --------------------------------------------------------

    def augment_blossom_rec(self, blossom, sub, stack):
        path_nodes, path_edges = self.find_path_through_blossom(blossom, sub)
        for p in range(0, len(path_edges), 2):
            x, y = path_edges[p + 1]
            self.vertex_mate[x] = y
            self.vertex_mate[y] = x
            bx = path_nodes[p + 1]
            if isinstance(bx, _NonTrivialBlossom):
                stack.append((bx, self.trivial_blossom[x]))
            by = path_nodes[p + 2]
            if isinstance(by, _NonTrivialBlossom):
                stack.append((by, self.trivial_blossom[y]))
        p = blossom.subblossoms.index(sub)
        blossom.subblossoms = blossom.subblossoms[p:] + blossom.subblossoms[:p]
        blossom.edges = blossom.edges[p:] + blossom.edges[:p]
        blossom.base_vertex = sub.base_vertex

    def augment_blossom(self, blossom, sub):
        stack = [(blossom, sub)]
        while stack:
            outer_blossom, sub = stack.pop()
            parent = sub.parent
            if parent is not outer_blossom:
                stack.append((outer_blossom, parent))
            self.augment_blossom_rec(parent, sub, stack)

    def augment_matching(self, path: _AlternatingPath):
        for x, y in path.edges[0::2]:
            bx = self.vertex_top_blossom[x]
            if isinstance(bx, _NonTrivialBlossom):
                self.augment_blossom(bx, self.trivial_blossom[x])
            by = self.vertex_top_blossom[y]
            if isinstance(by, _NonTrivialBlossom):
                self.augment_blossom(by, self.trivial_blossom[y])
            self.vertex_mate[x] = y
            self.vertex_mate[y] = x

    # --- labels and scanning ------------------------------------------------

    def assign_label_s(self, x: int):
        bx = self.vertex_top_blossom[x]
        bx.label = _LABEL_S
        y = self.vertex_mate[x]
        if y == -1:
            bx.tree_edge = None
        else:
            bx.tree_edge = (y, x)
        self.lset_new_blossom(bx)
        self.queue.extend(bx.vertices())

    def assign_label_t(self, x: int, y: int):
        by = self.vertex_top_blossom[y]
        by.label = _LABEL_T
        by.tree_edge = (x, y)
        z = self.vertex_mate[by.base_vertex]
        self.assign_label_s(z)

    def add_s_to_s_edge(self, x: int, y: int) -> Optional[_AlternatingPath]:
        path = self.trace_alternating_paths(x, y)
        p = path.edges[0][0]
        q = path.edges[-1][1]
        if self.vertex_top_blossom[p] is self.vertex_top_blossom[q]:
            self.make_blossom(path)
            return None
        return path

    def substage_scan(self) -> Optional[_AlternatingPath]:
        edges = self.edges
        adjacent_edges = self.adjacent_edges
        while self.queue:
            x = self.queue.pop()
            for e in adjacent_edges[x]:
                p, q, _w = edges[e]
                y = p if p != x else q
                bx = self.vertex_top_blossom[x]
                by = self.vertex_top_blossom[y]
                if bx is by:
                    continue
                ylabel = by.label
                slack = self.edge_slack_2x(e)
                if slack <= 0:
                    if ylabel == _LABEL_NONE:
                        self.assign_label_t(x, y)
                    elif ylabel == _LABEL_S:
                        path = self.add_s_to_s_edge(x, y)
                        if path is not None:
                            return path
                elif ylabel == _LABEL_S:
                    self.lset_add_blossom_edge(bx, e, slack)
                if ylabel != _LABEL_S:
                    self.lset_add_vertex_edge(y, e, slack)
        return None

    # --- dual updates -------------------------------------------------------

    def substage_calc_dual_delta(self):
        delta_edge, delta_blossom = -1, None
        delta_type = 1
        delta_2x = min(
            self.vertex_dual_2x[x]
            for x in range(self.num_vertex)
            if self.vertex_top_blossom[x].label == _LABEL_S)
        e, slack = self.lset_get_best_vertex_edge()
        if e != -1 and slack <= delta_2x:
            delta_type, delta_2x, delta_edge = 2, slack, e
        e, slack = self.lset_get_best_blossom_edge()
        if e != -1 and slack / 2 <= delta_2x:
            delta_type, delta_2x, delta_edge = 3, slack / 2, e
        for blossom in self.nontrivial_blossom:
            if blossom.label == _LABEL_T and blossom.parent is None:
                if blossom.dual_var <= delta_2x:
                    delta_type, delta_2x, delta_blossom = 4, blossom.dual_var, blossom
        return delta_type, delta_2x, delta_edge, delta_blossom

    def substage_apply_delta_step(self, delta_2x):
        for x in range(self.num_vertex):
            label = self.vertex_top_blossom[x].label
            if label == _LABEL_S:
                self.vertex_dual_2x[x] -= delta_2x
            elif label == _LABEL_T:
                self.vertex_dual_2x[x] += delta_2x
        for blossom in self.nontrivial_blossom:
            if blossom.parent is None:
                if blossom.label == _LABEL_S:
                    blossom.dual_var += delta_2x
                elif blossom.label == _LABEL_T:
                    blossom.dual_var -= delta_2x

    def run_stage(self) -> bool:
        for x in range(self.num_vertex):
            if self.vertex_mate[x] == -1:
                self.assign_label_s(x)
        if not self.queue:
            return False
        augmenting_path = None
        while True:
            augmenting_path = self.substage_scan()
            if augmenting_path is not None:
                break
            delta_type, delta_2x, delta_edge, delta_blossom = \
                self.substage_calc_dual_delta()
            self.substage_apply_delta_step(delta_2x)
            if delta_type == 2:
                x, y, _w = self.edges[delta_edge]
                if self.vertex_top_blossom[x].label != _LABEL_S:
                    x, y = y, x
                self.assign_label_t(x, y)
            elif delta_type == 3:
                x, y, _w = self.edges[delta_edge]
                augmenting_path = self.add_s_to_s_edge(x, y)
                if augmenting_path is not None:
                    break
            elif delta_type == 4:
                self.expand_t_blossom(delta_blossom)
            else:
                break  # delta1: no further improvement possible
        if augmenting_path is not None:
            self.augment_matching(augmenting_path)
        self.expand_zero_dual_blossoms()
        self.reset_stage()
        return augmenting_path is not None


def max_weight_matching(edges: list[tuple[int, int, float]],
                        num_vertex: int | None = None) -> list[tuple[int, int]]:
    """Maximum-weight matching; negative-weight edges are dropped."""
    edges = [e for e in edges if e[2] > 0]
    if not edges:
        return []
    if num_vertex is None:
        num_vertex = 1 + max(max(x, y) for (x, y, _w) in edges)
    ctx = _MatchingContext(edges, num_vertex)
    while ctx.run_stage():
        pass
    return [(x, y) for (x, y, _w) in edges if ctx.vertex_mate[x] == y]


def min_weight_perfect_matching(edges: list[tuple[int, int, float]],
                                num_vertex: int) -> list[tuple[int, int]]:
    """Minimum-weight matching among maximum-cardinality matchings.

    Weights are negated and shifted so every non-maximum-cardinality
    matching is beaten by matching one more edge, then the plain
    maximum-weight matcher runs.  The caller must check that the result is
    actually perfect when perfection is required.
    """
    if not edges:
        return []
    neg = [(x, y, -w) for (x, y, w) in edges]
    min_w = min(w for (_x, _y, w) in neg)
    max_w = max(w for (_x, _y, w) in neg)
    span = max_w - min_w
    shift = (num_vertex * span - min_w) if span > 0 else (1.0 - min_w)
    shifted = [(x, y, w + shift) for (x, y, w) in neg]
    ctx = _MatchingContext(shifted, num_vertex)
    while ctx.run_stage():
        pass
    return [(x, y) for (x, y, _w) in shifted if ctx.vertex_mate[x] == y]
