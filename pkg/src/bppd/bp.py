"""Parallel product-sum belief propagation over a Tanner graph.

Messages are stored as probability odds.  One iteration updates all
check-to-error messages from the previous iteration's error-to-check
messages, then all error-to-check messages, then posterior odds, a hard
decision, and a convergence check.  Leave-one-out products use prefix and
suffix passes in ascending neighbour order; check-side ratios are carried
as numerator/denominator pairs so exact zeros and saturated messages need
no special cases, and all messages and odds clamp into
[ODDS_MIN, ODDS_MAX], which keeps every quantity finite and NaN-free.

The hot path is a numba kernel that decodes LANES syndromes per call with
identical per-lane arithmetic, so batch composition never changes results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dem import DetectorErrorModel
from .errors import ParameterError, StructureError

ODDS_MIN = 1e-300
ODDS_MAX = 1e300
PAIR_BAND = 2.0 ** 256
PAIR_DOWN = 2.0 ** -256
LANES = 4


@dataclass(frozen=True)
class TannerGraph:
    """CSR views of H in both directions; edge ids are check-major."""

    n_checks: int
    n_errors: int
    chk_ptr: np.ndarray    # (n_checks+1,) int32
    edge_err: np.ndarray   # (n_edges,) error index of each edge
    edge_chk: np.ndarray   # (n_edges,) check index of each edge
    err_ptr: np.ndarray    # (n_errors+1,) int32
    err_edge: np.ndarray   # (n_edges,) edge ids grouped by error
    prior_odds: np.ndarray  # (n_errors,) p/(1-p)
    priors: np.ndarray
    max_degree: int

    @property
    def n_edges(self) -> int:
        return int(self.edge_err.shape[0])

    def check_neighbourhood(self, i: int) -> np.ndarray:
        return self.edge_err[self.chk_ptr[i]:self.chk_ptr[i + 1]]

    def error_neighbourhood(self, k: int) -> np.ndarray:
        return self.edge_chk[self.err_edge[self.err_ptr[k]:self.err_ptr[k + 1]]]


def bp_init(dem: DetectorErrorModel) -> TannerGraph:
    """Build the Tanner graph adjacency of a detector error model."""
    if dem.n_mechanisms == 0:
        raise StructureError("model has no error mechanisms")
    if np.any(dem.priors >= 0.5):
        raise ParameterError("belief propagation expects priors below 0.5")
    rows, cols = [], []
    for k, dets in enumerate(dem.column_dets):
        rows.extend(dets)
        cols.extend([k] * len(dets))
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    n_chk, n_err = dem.n_detectors, dem.n_mechanisms
    chk_ptr = np.zeros(n_chk + 1, dtype=np.int32)
    np.add.at(chk_ptr, rows + 1, 1)
    chk_ptr = np.cumsum(chk_ptr, dtype=np.int32)
    err_ptr = np.zeros(n_err + 1, dtype=np.int32)
    np.add.at(err_ptr, cols + 1, 1)
    err_ptr = np.cumsum(err_ptr, dtype=np.int32)
    err_edge = np.lexsort((rows, cols)).astype(np.int32)
    priors = dem.priors.astype(np.float64)
    deg = max(
        int(np.diff(chk_ptr).max(initial=0)),
        int(np.diff(err_ptr).max(initial=0)),
    )
    return TannerGraph(
        n_checks=n_chk,
        n_errors=n_err,
        chk_ptr=chk_ptr,
        edge_err=cols.astype(np.int32),
        edge_chk=rows.astype(np.int32),
        err_ptr=err_ptr,
        err_edge=err_edge,
        prior_odds=priors / (1.0 - priors),
        priors=priors,
        max_degree=deg,
    )


@dataclass
class BpState:
    """Message tables for the reference (single-shot, numpy) update rules."""

    P: np.ndarray     # check -> error, per edge
    Q: np.ndarray     # error -> check, per edge
    chi: np.ndarray   # posterior odds per error
    iteration: int = 0


def init_state(graph: TannerGraph) -> BpState:
    Q = graph.prior_odds[graph.edge_err].astype(np.float64)
    return BpState(P=np.ones(graph.n_edges), Q=Q, chi=graph.prior_odds.copy())


def check_to_error_messages(graph: TannerGraph, state: BpState, syndrome: np.ndarray) -> BpState:
    """All check-to-error updates from the previous iteration's Q.

    Ratios (1-Q)/(1+Q) are carried as numerator/denominator pairs, so the
    leave-one-out prefix/suffix products need no division and exact zeros
    need no special casing; one division per edge converts the result back
    to odds.  Pairs are normalised by powers of two (which leaves their
    ratio untouched) so products can never overflow.
    """
    P = np.empty_like(state.P)
    for i in range(graph.n_checks):
        lo, hi = graph.chk_ptr[i], graph.chk_ptr[i + 1]
        deg = hi - lo
        rn = np.empty(deg)
        rd = np.empty(deg)
        pn = np.empty(deg + 1)
        pd = np.empty(deg + 1)
        pn[0] = 1.0
        pd[0] = 1.0
        for t in range(deg):
            q = state.Q[lo + t]
            a = 1.0 - q
            b = 1.0 + q
            while b > PAIR_BAND:
                a *= PAIR_DOWN
                b *= PAIR_DOWN
            rn[t] = a
            rd[t] = b
            a = pn[t] * rn[t]
            b = pd[t] * rd[t]
            while b > PAIR_BAND:
                a *= PAIR_DOWN
                b *= PAIR_DOWN
            pn[t + 1] = a
            pd[t + 1] = b
        sn = 1.0
        sd = 1.0
        sgn = -1.0 if syndrome[i] else 1.0
        for t in range(deg - 1, -1, -1):
            loo_n = pn[t] * sn
            loo_d = pd[t] * sd
            num = loo_d - sgn * loo_n
            den = loo_d + sgn * loo_n
            if den == 0.0:
                P[lo + t] = ODDS_MAX
            else:
                P[lo + t] = min(max(num / den, ODDS_MIN), ODDS_MAX)
            sn *= rn[t]
            sd *= rd[t]
            while sd > PAIR_BAND:
                sn *= PAIR_DOWN
                sd *= PAIR_DOWN
    return BpState(P=P, Q=state.Q, chi=state.chi, iteration=state.iteration)


def error_to_check_messages(graph: TannerGraph, state: BpState) -> BpState:
    """All error-to-check updates from this iteration's P.

    Running products are clamped at every step so that saturated messages
    can never combine into NaN.
    """
    Q = np.empty_like(state.Q)
    with np.errstate(over="ignore"):
        for k in range(graph.n_errors):
            lo, hi = graph.err_ptr[k], graph.err_ptr[k + 1]
            deg = hi - lo
            pref = np.empty(deg + 1)
            pref[0] = graph.prior_odds[k]
            for t in range(deg):
                p = state.P[graph.err_edge[lo + t]]
                pref[t + 1] = min(max(pref[t] * p, ODDS_MIN), ODDS_MAX)
            suf = 1.0
            for t in range(deg - 1, -1, -1):
                eid = graph.err_edge[lo + t]
                Q[eid] = min(max(pref[t] * suf, ODDS_MIN), ODDS_MAX)
                suf = min(max(suf * state.P[eid], ODDS_MIN), ODDS_MAX)
    return BpState(P=state.P, Q=Q, chi=state.chi, iteration=state.iteration)


def posterior_and_decision(graph: TannerGraph, state: BpState):
    """Posterior odds over all incident checks and the hard decision."""
    chi = np.empty(graph.n_errors)
    with np.errstate(over="ignore"):
        for k in range(graph.n_errors):
            lo, hi = graph.err_ptr[k], graph.err_ptr[k + 1]
            c = graph.prior_odds[k]
            for t in range(lo, hi):
                c = min(max(c * state.P[graph.err_edge[t]], ODDS_MIN), ODDS_MAX)
            chi[k] = c
    state.chi = chi
    return chi, (chi >= 1.0).astype(np.uint8)


def reference_decode(graph: TannerGraph, syndrome, m_iter: int, stop_on_convergence=True):
    """Pure-python BP loop; oracle twin of the numba kernel."""
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    state = init_state(graph)
    e = np.zeros(graph.n_errors, dtype=np.uint8)
    converged = False
    iters = 0
    for it in range(1, m_iter + 1):
        iters = it
        state = check_to_error_messages(graph, state, syndrome)
        state = error_to_check_messages(graph, state)
        chi, e = posterior_and_decision(graph, state)
        state.iteration = it
        s_hat = np.zeros(graph.n_checks, dtype=np.uint8)
        for k in np.flatnonzero(e):
            for i in graph.error_neighbourhood(k):
                s_hat[i] ^= 1
        ok = np.array_equal(s_hat, syndrome)
        if stop_on_convergence:
            if ok:
                converged = True
                break
        else:
            converged = ok
    posteriors = state.chi / (1.0 + state.chi)
    return posteriors, e, converged, iters


@dataclass(frozen=True)
class BpResult:
    posteriors: np.ndarray
    hard_decision: np.ndarray
    converged: bool
    iterations_used: int


@njit(cache=True, error_model="numpy")
def _bp_kernel(chk_ptr, edge_err, err_ptr, err_edge, edge_chk, prior_odds,
               syn, m_iter, stop_on_conv, max_degree,
               out_chi, out_e, out_done, out_iters):
    """Decode LANES syndromes; per-lane arithmetic identical to the
    reference update functions, one full iteration per pass.

    The inner lane loops are branch-free (sign multipliers, saturating
    clamps, IEEE division semantics) so they vectorise; a lane that
    converges keeps computing but its outputs are frozen.
    """
    n_chk = chk_ptr.shape[0] - 1
    n_err = err_ptr.shape[0] - 1
    n_edge = edge_err.shape[0]
    Q = np.empty((n_edge, LANES))
    P = np.empty((n_edge, LANES))
    acc = np.zeros((n_chk, LANES), np.uint8)
    done = np.zeros(LANES, np.uint8)
    pref_n = np.empty((max_degree + 1, LANES))
    pref_d = np.empty((max_degree + 1, LANES))
    suf_n = np.empty(LANES)
    suf_d = np.empty(LANES)
    rbuf_n = np.empty((max_degree, LANES))
    rbuf_d = np.empty((max_degree, LANES))
    pref = np.empty((max_degree + 1, LANES))
    suf = np.empty(LANES)
    for eid in range(n_edge):
        po = prior_odds[edge_err[eid]]
        for b in range(LANES):
            Q[eid, b] = po
    for b in range(LANES):
        out_iters[b] = 0
        out_done[b] = 0
    for it in range(1, m_iter + 1):
        alldone = stop_on_conv
        for b in range(LANES):
            if not done[b]:
                alldone = False
        if alldone:
            break
        # check -> error: ratio pairs, one division per edge
        for i in range(n_chk):
            lo = chk_ptr[i]
            hi = chk_ptr[i + 1]
            deg = hi - lo
            for b in range(LANES):
                pref_n[0, b] = 1.0
                pref_d[0, b] = 1.0
            for t in range(deg):
                eid = lo + t
                for b in range(LANES):
                    q = Q[eid, b]
                    a = 1.0 - q
                    c = 1.0 + q
                    while c > PAIR_BAND:
                        a *= PAIR_DOWN
                        c *= PAIR_DOWN
                    rbuf_n[t, b] = a
                    rbuf_d[t, b] = c
                    a = pref_n[t, b] * a
                    c = pref_d[t, b] * c
                    while c > PAIR_BAND:
                        a *= PAIR_DOWN
                        c *= PAIR_DOWN
                    pref_n[t + 1, b] = a
                    pref_d[t + 1, b] = c
            for b in range(LANES):
                suf_n[b] = 1.0
                suf_d[b] = 1.0
            for t in range(deg - 1, -1, -1):
                eid = lo + t
                for b in range(LANES):
                    loo_n = pref_n[t, b] * suf_n[b]
                    loo_d = pref_d[t, b] * suf_d[b]
                    sgn = -1.0 if syn[i, b] else 1.0
                    num = loo_d - sgn * loo_n
                    den = loo_d + sgn * loo_n
                    if den == 0.0:
                        P[eid, b] = ODDS_MAX
                    else:
                        P[eid, b] = min(max(num / den, ODDS_MIN), ODDS_MAX)
                    a = suf_n[b] * rbuf_n[t, b]
                    c = suf_d[b] * rbuf_d[t, b]
                    while c > PAIR_BAND:
                        a *= PAIR_DOWN
                        c *= PAIR_DOWN
                    suf_n[b] = a
                    suf_d[b] = c
            for b in range(LANES):
                acc[i, b] = 0
        # error -> check, posterior, hard decision
        for k in range(n_err):
            lo = err_ptr[k]
            hi = err_ptr[k + 1]
            deg = hi - lo
            lam = prior_odds[k]
            for b in range(LANES):
                pref[0, b] = lam
            for t in range(deg):
                eid = err_edge[lo + t]
                for b in range(LANES):
                    v = pref[t, b] * P[eid, b]
                    pref[t + 1, b] = min(max(v, ODDS_MIN), ODDS_MAX)
            for b in range(LANES):
                suf[b] = 1.0
            for t in range(deg - 1, -1, -1):
                eid = err_edge[lo + t]
                for b in range(LANES):
                    q = min(max(pref[t, b] * suf[b], ODDS_MIN), ODDS_MAX)
                    suf[b] = min(max(suf[b] * P[eid, b], ODDS_MIN), ODDS_MAX)
                    Q[eid, b] = q
            anyflip = False
            for b in range(LANES):
                if not done[b]:
                    c = pref[deg, b]
                    out_chi[k, b] = c
                    f = np.uint8(1) if c >= 1.0 else np.uint8(0)
                    out_e[k, b] = f
                    if f:
                        anyflip = True
            if anyflip:
                for t in range(deg):
                    ci = edge_chk[err_edge[lo + t]]
                    for b in range(LANES):
                        if not done[b]:
                            acc[ci, b] ^= out_e[k, b]
        for b in range(LANES):
            if done[b]:
                continue
            ok = True
            for i in range(n_chk):
                if acc[i, b] != syn[i, b]:
                    ok = False
                    break
            out_iters[b] = it
            if ok:
                out_done[b] = 1
                if stop_on_conv:
                    done[b] = 1
            elif not stop_on_conv:
                out_done[b] = 0


def bp_decode_batch(graph: TannerGraph, syndromes: np.ndarray, m_iter: int,
                    stop_on_convergence: bool = True):
    """Decode a (n_shots, n_checks) syndrome array through the kernel.

    Returns (posteriors, hard decisions, converged flags, iteration counts)
    stacked per shot.  Results for a shot do not depend on which other
    shots share its lane group.
    """
    syndromes = np.ascontiguousarray(syndromes, dtype=np.uint8)
    if syndromes.ndim != 2 or syndromes.shape[1] != graph.n_checks:
        raise ParameterError("syndrome batch must be (n_shots, n_detectors)")
    if m_iter < 1:
        raise ParameterError("m_iter must be >= 1")
    n = syndromes.shape[0]
    posteriors = np.empty((n, graph.n_errors))
    hard = np.empty((n, graph.n_errors), dtype=np.uint8)
    conv = np.empty(n, dtype=bool)
    iters = np.empty(n, dtype=np.int64)
    chi = np.empty((graph.n_errors, LANES))
    e = np.zeros((graph.n_errors, LANES), dtype=np.uint8)
    dn = np.zeros(LANES, dtype=np.uint8)
    itc = np.zeros(LANES, dtype=np.int64)
    for lo in range(0, n, LANES):
        hi = min(lo + LANES, n)
        block = np.empty((graph.n_checks, LANES), dtype=np.uint8)
        width = hi - lo
        block[:, :width] = syndromes[lo:hi].T
        for pad in range(width, LANES):
            block[:, pad] = 0
        _bp_kernel(graph.chk_ptr, graph.edge_err, graph.err_ptr, graph.err_edge,
                   graph.edge_chk, graph.prior_odds, block,
                   m_iter, stop_on_convergence, graph.max_degree,
                   chi, e, dn, itc)
        w = chi[:, :width]
        posteriors[lo:hi] = (w / (1.0 + w)).T
        hard[lo:hi] = e[:, :width].T
        conv[lo:hi] = dn[:width].astype(bool)
        iters[lo:hi] = itc[:width]
    return posteriors, hard, conv, iters


def bp_decode(dem: DetectorErrorModel, syndrome, m_iter: int,
              graph: TannerGraph | None = None,
              stop_on_convergence: bool = True) -> BpResult:
    """Run product-sum BP on one syndrome.

    Terminates at the first iteration whose hard decision explains the
    syndrome, or after ``m_iter`` iterations.  ``stop_on_convergence=False``
    runs all iterations regardless (full message propagation).
    """
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    if syndrome.ndim != 1 or syndrome.shape[0] != dem.n_detectors:
        raise ParameterError(
            f"syndrome length {syndrome.shape} does not match {dem.n_detectors} detectors"
        )
    if m_iter < 1:
        raise ParameterError("m_iter must be >= 1")
    if graph is None:
        graph = bp_init(dem)
    post, hard, conv, iters = bp_decode_batch(
        graph, syndrome[None, :], m_iter, stop_on_convergence
    )
    result = BpResult(
        posteriors=post[0],
        hard_decision=hard[0],
        converged=bool(conv[0]),
        iterations_used=int(iters[0]),
    )
    assert not np.any(np.isnan(result.posteriors))
    return result
