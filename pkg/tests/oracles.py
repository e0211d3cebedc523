"""Brute-force oracles kept independent of the production code paths.

Exact posterior marginals come from weighted enumeration over all error
patterns; minimum matching weight from exhaustive recursion over defect
pairings with per-defect boundary options, using scipy's Dijkstra rather
than the package's shortest-path kernel.
"""

import itertools

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as scipy_dijkstra


def exact_posteriors(dem, syndrome):
    """P(e_k = 1 | H e = s) by enumeration over all 2^m patterns."""
    m = dem.n_mechanisms
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    total = 0.0
    marg = np.zeros(m)
    for bits in itertools.product((0, 1), repeat=m):
        e = np.array(bits, dtype=np.uint8)
        if not np.array_equal(dem.syndrome_of(e), syndrome):
            continue
        w = float(np.prod(np.where(e, dem.priors, 1.0 - dem.priors)))
        total += w
        marg += w * e
    if total == 0.0:
        raise ValueError("syndrome unreachable: no satisfying error pattern")
    return marg / total


def exact_posteriors_fast(dem, syndrome, max_m=22):
    """Vectorised enumeration; feasible up to ~22 mechanisms."""
    m = dem.n_mechanisms
    if m > max_m:
        raise ValueError(f"too many mechanisms for enumeration ({m})")
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    codes = np.arange(1 << m, dtype=np.uint64)
    ok = np.ones(codes.shape[0], dtype=bool)
    for d in range(dem.n_detectors):
        mask = np.uint64(0)
        for k in range(m):
            if d in dem.column_dets[k]:
                mask |= np.uint64(1) << np.uint64(k)
        bits = codes & mask
        # parity of a masked popcount
        par = np.zeros(codes.shape[0], dtype=np.uint64)
        b = bits.copy()
        while np.any(b):
            par ^= b & np.uint64(1)
            b >>= np.uint64(1)
        ok &= (par.astype(np.uint8) == syndrome[d])
    sel = codes[ok]
    if sel.size == 0:
        raise ValueError("syndrome unreachable")
    logw = np.zeros(sel.shape[0])
    member = np.zeros((sel.shape[0], m), dtype=bool)
    for k in range(m):
        hit = (sel >> np.uint64(k)) & np.uint64(1)
        member[:, k] = hit.astype(bool)
        logw += np.where(member[:, k], np.log(dem.priors[k]), np.log1p(-dem.priors[k]))
    w = np.exp(logw - logw.max())
    return (w[:, None] * member).sum(axis=0) / w.sum()


def oracle_matching_weight(graph, syndrome):
    """Minimum total weight over all defect pairings with boundary options.

    Distances come from scipy's Dijkstra on the decoding graph, so both
    the shortest-path and matching layers of the production decoder are
    checked against independent implementations.
    """
    n = graph.n_detectors + 1
    rows = np.concatenate([graph.edge_u, graph.edge_v])
    cols = np.concatenate([graph.edge_v, graph.edge_u])
    data = np.concatenate([graph.edge_weight, graph.edge_weight])
    adj = csr_matrix((data, (rows, cols)), shape=(n, n))
    defects = np.flatnonzero(np.asarray(syndrome, dtype=np.uint8))
    if defects.size == 0:
        return 0.0
    sources = list(defects) + [graph.boundary]
    dist = scipy_dijkstra(adj, indices=sources)
    k = defects.size
    pair = {(i, j): dist[i][defects[j]] for i in range(k) for j in range(k)}
    bnd = {i: dist[k][defects[i]] for i in range(k)}
    best = [np.inf]

    def rec(rem, acc):
        if acc >= best[0]:
            return
        if not rem:
            best[0] = acc
            return
        u = rem[0]
        if np.isfinite(bnd[u]):
            rec(rem[1:], acc + bnd[u])
        for t in range(1, len(rem)):
            w = pair[(u, rem[t])]
            if np.isfinite(w):
                rec(rem[1:t] + rem[t + 1:], acc + w)

    rec(tuple(range(k)), 0.0)
    return best[0]


def oracle_min_weight_and_mask(graph, syndrome):
    """Exhaustive minimum matching weight plus the observable mask of the
    optimal solution, with a uniqueness flag.

    Paths are resolved on a parity-doubled graph, so each defect pair knows
    its cheapest even-mask and odd-mask connections; a pairing's mask is
    the XOR of its per-pair choices.  ``unique`` is False when a second
    pairing (or an in-pair parity tie) reaches the optimum.
    """
    n = graph.n_detectors + 1
    n2 = 2 * n
    rows, cols, data = [], [], []
    for eid in range(graph.n_edges):
        u, v = int(graph.edge_u[eid]), int(graph.edge_v[eid])
        m = int(graph.edge_mask[eid]) & 1
        w = float(graph.edge_weight[eid])
        for par in (0, 1):
            rows.append(2 * u + par)
            cols.append(2 * v + (par ^ m))
            data.append(w)
            rows.append(2 * v + par)
            cols.append(2 * u + (par ^ m))
            data.append(w)
    adj = csr_matrix((data, (rows, cols)), shape=(n2, n2))
    defects = np.flatnonzero(np.asarray(syndrome, dtype=np.uint8))
    k = defects.size
    if k == 0:
        return 0.0, 0, True
    sources = [2 * int(d) for d in defects] + [2 * graph.boundary]
    dist = scipy_dijkstra(adj, indices=sources)

    def pair_options(i, j):
        row = dist[i]
        target = int(defects[j]) if j < k else graph.boundary
        return row[2 * target], row[2 * target + 1]

    best = [np.inf, 0, True]  # weight, mask, unique

    def offer(w, m, tie_break):
        if w < best[0] - 1e-12:
            best[0], best[1], best[2] = w, m, not tie_break
        elif w < best[0] + 1e-12:
            if m != best[1] or tie_break:
                best[2] = False

    def rec(rem, acc_w, acc_m, ambiguous):
        if acc_w >= best[0] + 1e-12:
            return
        if not rem:
            offer(acc_w, acc_m, ambiguous)
            return
        u = rem[0]
        w0, w1 = pair_options(u, k)
        w = min(w0, w1)
        if np.isfinite(w):
            m = 0 if w0 <= w1 else 1
            tie = np.isfinite(w0) and np.isfinite(w1) and abs(w0 - w1) < 1e-12
            rec(rem[1:], acc_w + w, acc_m ^ m, ambiguous or tie)
        for t in range(1, len(rem)):
            v = rem[t]
            w0, w1 = pair_options(u, v)
            w = min(w0, w1)
            if not np.isfinite(w):
                continue
            m = 0 if w0 <= w1 else 1
            tie = np.isfinite(w0) and np.isfinite(w1) and abs(w0 - w1) < 1e-12
            rec(rem[1:t] + rem[t + 1:], acc_w + w, acc_m ^ m, ambiguous or tie)

    rec(tuple(range(k)), 0.0, 0, False)
    return best[0], best[1], best[2]


def random_graphlike_dem(rng, n_det, n_edges, n_obs=1, boundary_frac=0.25,
                         p_low=0.005, p_high=0.45):
    """Random graphlike model for matching tests."""
    from bppd.dem import DetectorErrorModel

    seen, cols = set(), []
    attempts = 0
    while len(cols) < n_edges and attempts < 50 * n_edges:
        attempts += 1
        if rng.random() < boundary_frac:
            d = (int(rng.integers(0, n_det)),)
        else:
            a, b = rng.choice(n_det, 2, replace=False)
            d = tuple(sorted((int(a), int(b))))
        if d in seen:
            continue
        seen.add(d)
        cols.append(d)
    priors = rng.uniform(p_low, p_high, len(cols))
    obs = [((0,) if (n_obs and rng.random() < 0.3) else ()) for _ in cols]
    return DetectorErrorModel(n_detectors=n_det, n_observables=n_obs, priors=priors,
                              column_dets=cols, column_obs=obs)


def random_forest_dem(rng, max_mech=20):
    """Random DEM whose Tanner graph is a forest (checks as tree nodes)."""
    from bppd.dem import DetectorErrorModel

    n_chk = int(rng.integers(2, 9))
    parent = list(range(n_chk))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    cols = []
    m = int(rng.integers(2, max_mech + 1))
    for _ in range(m):
        if rng.random() < 0.45:
            cols.append((int(rng.integers(0, n_chk)),))
            continue
        a = int(rng.integers(0, n_chk))
        b = int(rng.integers(0, n_chk))
        if find(a) == find(b):
            cols.append((a,))
        else:
            parent[find(a)] = find(b)
            cols.append(tuple(sorted((a, b))))
    # a degree-2 error merges two check-trees; forest structure is kept by
    # the union-find gate above.  Duplicate signatures are disambiguated by
    # splitting probabilities unevenly, so merge them instead.
    merged = {}
    for dets in cols:
        merged[dets] = merged.get(dets, 0) + 1
    dets_list = list(merged)
    priors = rng.uniform(0.02, 0.35, len(dets_list))
    return DetectorErrorModel(n_detectors=n_chk, n_observables=0, priors=priors,
                              column_dets=dets_list, column_obs=[()] * len(dets_list))


def forest_diameter(dem):
    """Longest path (in edges) of the Tanner graph."""
    adj = {}
    for k, dets in enumerate(dem.column_dets):
        e = ("e", k)
        for d in dets:
            adj.setdefault(e, []).append(("c", d))
            adj.setdefault(("c", d), []).append(e)
    seen_global = set()
    best = 0

    def bfs(start):
        frontier = [start]
        seen = {start}
        depth = 0
        last = start
        while frontier:
            nxt = []
            for u in frontier:
                last = u
                for v in adj.get(u, ()):
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            if nxt:
                depth += 1
            frontier = nxt
        return last, depth, seen

    for node in list(adj):
        if node in seen_global:
            continue
        far, _, comp = bfs(node)
        seen_global |= comp
        _, depth, _ = bfs(far)
        best = max(best, depth)
    return best
