"""Experiment runner and metric aggregation.

One experiment = one (distance, p_phys, decoder, parameters) cell: sample
shots from the noisy circuit, decode each shot, and aggregate logical
error rate (Wilson interval), syndrome reduction, BP convergence
probability, weight histograms, a bandwidth proxy, and optionally timing
of the matching stage following the batched protocol (one untimed warm-up
decode, then wall clock over the batch).

Shots are decoded in fixed-size chunks; chunks may be distributed over
worker processes.  Chunk boundaries and per-shot random streams are
independent of the worker count, so results are bit-identical at any
thread setting.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .bp import bp_init, bp_decode_batch
from .dem import extract_dem
from .errors import DecodeError, EstimationError, ParameterError
from .framesim import ShotArray, sample_shots, shots_for
from .graph import decompose_to_graph
from .matching import (mwpm_decode, belief_matching_decode_batch,
                       timed_batch_decode, timed_reweighted_decode)
from .partial import two_stage_decode_batch
from .surface import build_memory_circuit

DECODERS = ("mwpm", "bp+mwpm", "belief-matching")
CHUNK = 2048
CSV_COLUMNS = ("distance", "rounds", "p_phys", "decoder", "m_iter", "t_bp",
               "shots", "seed", "metric", "value", "ci_low", "ci_high")


@dataclass(frozen=True)
class ExperimentConfig:
    distance: int
    p_phys: float
    decoder: str = "bp+mwpm"
    rounds: int | None = None          # defaults to distance
    m_iter: int = 30
    t_bp: float = 0.9
    shots: int | None = None           # defaults to min(1e6, 1/p^2)
    seed: int = 0
    timing_batch: int = 0              # 0 disables the timing pass
    threads: int = 1
    idle_during_mr: bool = True
    max_shots: int | None = None       # cap applied after the shot policy

    def resolved(self) -> "ExperimentConfig":
        if self.decoder not in DECODERS:
            raise ParameterError(f"unknown decoder {self.decoder!r}")
        rounds = self.distance if self.rounds is None else self.rounds
        if rounds < 1:
            raise ParameterError("rounds must be >= 1")
        shots = self.shots
        if shots is None:
            shots = shots_for(self.p_phys) if self.p_phys > 0 else 10_000
        if self.max_shots is not None:
            shots = min(shots, self.max_shots)
        return replace(self, rounds=rounds, shots=shots)


@dataclass
class MetricsReport:
    config: ExperimentConfig
    shots: int
    logical_errors: int
    logical_error_rate: float
    ler_ci: tuple[float, float]
    decode_errors: int
    syndrome_reduction_ratio: float | None
    convergence_probability: float | None
    bandwidth_bits: float | None
    weight_hist_before: np.ndarray | None
    weight_hist_after: np.ndarray | None
    second_stage_seconds_per_shot: float | None = None
    bp_seconds_per_shot: float | None = None
    # per-shot arrays retained for downstream analysis
    homologies: np.ndarray | None = None
    true_homologies: np.ndarray | None = None
    converged: np.ndarray | None = None

    def rows(self):
        cfg = self.config
        base = {
            "distance": cfg.distance, "rounds": cfg.rounds,
            "p_phys": repr(cfg.p_phys), "decoder": cfg.decoder,
            "m_iter": cfg.m_iter, "t_bp": repr(cfg.t_bp),
            "shots": self.shots, "seed": cfg.seed,
        }
        rows = []

        def row(metric, value, lo="", hi=""):
            rows.append({**base, "metric": metric, "value": value,
                         "ci_low": lo, "ci_high": hi})

        row("logical_error_rate", repr(self.logical_error_rate),
            repr(self.ler_ci[0]), repr(self.ler_ci[1]))
        row("decode_errors", self.decode_errors)
        if self.syndrome_reduction_ratio is not None:
            row("syndrome_reduction_ratio", repr(self.syndrome_reduction_ratio))
        if self.convergence_probability is not None:
            row("convergence_probability", repr(self.convergence_probability))
        if self.bandwidth_bits is not None:
            row("bandwidth_bits", repr(self.bandwidth_bits))
        # timing metrics are wall-clock and exempt from determinism checks
        if self.second_stage_seconds_per_shot is not None:
            row("timing.second_stage_seconds_per_shot",
                repr(self.second_stage_seconds_per_shot))
        if self.bp_seconds_per_shot is not None:
            row("timing.bp_seconds_per_shot", repr(self.bp_seconds_per_shot))
        return rows


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    ph = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (ph + z2 / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return (lo, hi)


# Worker-process state: populated in the parent before fork so children see
# it through copy-on-write.
_CTX: dict = {}


def _decode_range(args):
    lo, hi = args
    cfg: ExperimentConfig = _CTX["cfg"]
    dem, graph, tanner = _CTX["dem"], _CTX["graph"], _CTX["tanner"]
    syndromes = _CTX["syndromes"][lo:hi]
    n = hi - lo
    n_obs = dem.n_observables
    hom = np.zeros((n, n_obs), dtype=np.uint8)
    conv = np.zeros(n, dtype=bool)
    orig_w = syndromes.sum(axis=1).astype(np.int64)
    red_w = orig_w.copy()
    errors = np.zeros(n, dtype=bool)
    if cfg.decoder == "mwpm":
        for i in range(n):
            try:
                hom[i] = mwpm_decode(graph, syndromes[i]).observables
            except DecodeError:
                errors[i] = True
    elif cfg.decoder == "bp+mwpm":
        try:
            results = two_stage_decode_batch(dem, graph, syndromes,
                                             cfg.m_iter, cfg.t_bp, tanner=tanner)
        except DecodeError:
            # fall back to per-shot decoding so one bad shot cannot take
            # down the whole chunk
            results = []
            from .partial import two_stage_decode
            for i in range(n):
                try:
                    results.append(two_stage_decode(dem, graph, syndromes[i],
                                                    cfg.m_iter, cfg.t_bp, tanner=tanner))
                except DecodeError:
                    results.append(None)
        for i, r in enumerate(results):
            if r is None:
                errors[i] = True
                continue
            hom[i] = r.homology
            conv[i] = r.partial.converged
            red_w[i] = r.partial.reduced_weight
    else:  # belief-matching
        corrections, bm_conv = belief_matching_decode_batch(
            dem, graph, syndromes, cfg.m_iter, tanner=tanner)
        conv[:] = bm_conv
        for i, c in enumerate(corrections):
            hom[i] = c.observables
    return lo, hom, conv, orig_w, red_w, errors


def _build_pipeline(cfg: ExperimentConfig):
    circuit = build_memory_circuit(cfg.distance, cfg.rounds, cfg.p_phys,
                                   idle_during_mr=cfg.idle_during_mr)
    dem = extract_dem(circuit)
    graph = decompose_to_graph(dem)
    tanner = bp_init(dem)
    return circuit, dem, graph, tanner


def resolve_threads(requested: int | None) -> int:
    env = os.environ.get("BPPD_THREADS")
    if env:
        return max(1, int(env))
    if requested is None or requested <= 0:
        return max(1, os.cpu_count() or 1)
    return requested


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Sample, decode and aggregate one experiment cell."""
    cfg = cfg.resolved()
    if cfg.p_phys == 0:
        zero = np.zeros((cfg.shots, 1), dtype=np.uint8)
        return MetricsReport(
            config=cfg, shots=cfg.shots, logical_errors=0,
            logical_error_rate=0.0, ler_ci=wilson_interval(0, cfg.shots),
            decode_errors=0, syndrome_reduction_ratio=None,
            convergence_probability=None, bandwidth_bits=None,
            weight_hist_before=np.array([cfg.shots]),
            weight_hist_after=np.array([cfg.shots]),
            homologies=zero, true_homologies=zero,
            converged=np.ones(cfg.shots, dtype=bool),
        )

    circuit, dem, graph, tanner = _build_pipeline(cfg)
    shots = sample_shots(circuit, cfg.shots, cfg.seed)
    return evaluate_decoder(cfg, dem, graph, tanner, shots)


def evaluate_decoder(cfg: ExperimentConfig, dem, graph, tanner,
                     shots: ShotArray) -> MetricsReport:
    """Decode pre-sampled shots and aggregate all metrics."""
    cfg = cfg.resolved()
    n = len(shots)
    _CTX.update(cfg=cfg, dem=dem, graph=graph, tanner=tanner,
                syndromes=shots.syndromes)
    ranges = [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]
    threads = resolve_threads(cfg.threads)
    if threads > 1 and len(ranges) > 1:
        import multiprocessing as mp
        # warm the JIT entry points before forking so children inherit them
        _decode_range((0, min(8, n)))
        with mp.get_context("fork").Pool(threads) as pool:
            parts = pool.map(_decode_range, ranges)
    else:
        parts = [_decode_range(r) for r in ranges]
    parts.sort(key=lambda t: t[0])
    hom = np.vstack([p[1] for p in parts])
    conv = np.concatenate([p[2] for p in parts])
    orig_w = np.concatenate([p[3] for p in parts])
    red_w = np.concatenate([p[4] for p in parts])
    errors = np.concatenate([p[5] for p in parts])

    ok = ~errors
    mism = np.any(hom != shots.homologies, axis=1) & ok
    k = int(mism.sum())
    n_ok = int(ok.sum())
    ler = k / n_ok if n_ok else 0.0

    uses_bp = cfg.decoder in ("bp+mwpm", "belief-matching")
    nonzero = orig_w > 0
    reduction = None
    bandwidth = None
    hist_before = np.bincount(orig_w)
    hist_after = None
    if cfg.decoder == "bp+mwpm":
        if nonzero.any():
            reduction = float(np.mean(red_w[nonzero] / orig_w[nonzero]))
        bandwidth = float(np.mean(red_w) * math.ceil(math.log2(dem.n_detectors)))
        hist_after = np.bincount(red_w, minlength=1)
    convergence = None
    if uses_bp and nonzero.any():
        convergence = float(np.mean(conv[nonzero]))

    report = MetricsReport(
        config=cfg, shots=n, logical_errors=k, logical_error_rate=ler,
        ler_ci=wilson_interval(k, n_ok), decode_errors=int(errors.sum()),
        syndrome_reduction_ratio=reduction,
        convergence_probability=convergence,
        bandwidth_bits=bandwidth,
        weight_hist_before=hist_before,
        weight_hist_after=hist_after,
        homologies=hom, true_homologies=shots.homologies.copy(),
        converged=conv,
    )
    if cfg.timing_batch:
        _time_second_stage(report, cfg, dem, graph, tanner, shots)
    return report


def _time_second_stage(report, cfg, dem, graph, tanner, shots: ShotArray):
    """Wall-clock the matching stage per the batched protocol."""
    import time as _time

    batch = shots.syndromes[:min(cfg.timing_batch, len(shots))]
    t0 = _time.perf_counter()
    bp_decode_batch(tanner, batch, cfg.m_iter)
    report.bp_seconds_per_shot = (_time.perf_counter() - t0) / batch.shape[0]
    if cfg.decoder == "mwpm":
        _, secs = timed_batch_decode(graph, batch)
        report.second_stage_seconds_per_shot = secs
    elif cfg.decoder == "bp+mwpm":
        post, hard, conv, _ = bp_decode_batch(tanner, batch, cfg.m_iter)
        reduced = batch.copy()
        for i in range(batch.shape[0]):
            e_p = hard[i] if conv[i] else (post[i] >= cfg.t_bp).astype(np.uint8)
            for kk in np.flatnonzero(e_p):
                for d in dem.column_dets[kk]:
                    reduced[i, d] ^= 1
        _, secs = timed_batch_decode(graph, reduced)
        report.second_stage_seconds_per_shot = secs
    else:
        sample = batch[:min(100, batch.shape[0])]
        copies = max(1, min(100, cfg.timing_batch // max(1, sample.shape[0])))
        _, secs = timed_reweighted_decode(dem, graph, sample, cfg.m_iter,
                                          copies=copies, tanner=tanner)
        report.second_stage_seconds_per_shot = secs


def convergence_curve(cfgs: list[ExperimentConfig]):
    """(distance, p_phys, convergence probability) per config; None where
    no nonzero-syndrome shots were seen."""
    out = []
    for cfg in cfgs:
        rep = run_experiment(cfg)
        out.append((cfg.distance, cfg.p_phys, rep.convergence_probability))
    return out


def weight_histograms(cfg: ExperimentConfig):
    """Syndrome-weight histograms before and after partial decoding."""
    cfg = cfg.resolved()
    if cfg.decoder != "bp+mwpm":
        raise ParameterError("weight histograms require the bp+mwpm decoder")
    rep = run_experiment(cfg)
    return rep.weight_hist_before, rep.weight_hist_after


# --- threshold estimation ----------------------------------------------------

@dataclass(frozen=True)
class ThresholdPoint:
    distance: int
    p_phys: float
    ler: float
    shots: int


@dataclass
class ThresholdFit:
    p_th: float
    ci: tuple[float, float]
    nu: float
    window: tuple[float, float]
    n_bootstrap: int
    points_used: int
    params: tuple = ()


def _crossing_guess(points: list[ThresholdPoint]) -> float:
    by_d: dict[int, list[ThresholdPoint]] = {}
    for pt in points:
        by_d.setdefault(pt.distance, []).append(pt)
    dists = sorted(by_d)
    crossings = []
    for a, b in zip(dists, dists[1:]):
        pa = sorted(by_d[a], key=lambda t: t.p_phys)
        pb = sorted(by_d[b], key=lambda t: t.p_phys)
        ps = sorted(set(t.p_phys for t in pa) & set(t.p_phys for t in pb))
        la = {t.p_phys: t.ler for t in pa}
        lb = {t.p_phys: t.ler for t in pb}
        prev = None
        for p in ps:
            diff = lb[p] - la[p]
            if prev is not None and np.sign(diff) != np.sign(prev[1]) and prev[1] != 0:
                p0, d0 = prev
                # linear interpolation of the sign change
                frac = abs(d0) / (abs(d0) + abs(diff)) if (abs(d0) + abs(diff)) else 0.5
                crossings.append(p0 + frac * (p - p0))
            prev = (p, diff)
    if not crossings:
        raise EstimationError("logical error rate curves do not cross in the data range")
    return float(np.median(crossings))


def _fit_once(points: list[ThresholdPoint], p0: float, window: tuple[float, float]):
    pts = [t for t in points if window[0] <= t.p_phys <= window[1]]
    if len({t.distance for t in pts}) < 3:
        raise EstimationError("need at least 3 distances inside the fit window")
    d = np.array([t.distance for t in pts], dtype=float)
    p = np.array([t.p_phys for t in pts])
    y = np.array([t.ler for t in pts])
    n = np.array([t.shots for t in pts], dtype=float)
    sigma = np.sqrt(np.maximum(y * (1 - y), 1e-9) / n)

    def resid(theta):
        pth, nu, a, b, c = theta
        x = (p - pth) * d ** (1.0 / nu)
        return (a + b * x + c * x * x - y) / sigma

    x0 = np.array([p0, 1.0, float(np.mean(y)), 0.1, 0.0])
    lo = [p.min(), 0.3, -np.inf, -np.inf, -np.inf]
    hi = [p.max(), 5.0, np.inf, np.inf, np.inf]
    sol = least_squares(resid, x0, bounds=(lo, hi))
    return sol.x, len(pts)


def estimate_threshold(points: list[ThresholdPoint], n_bootstrap: int = 50,
                       seed: int = 0, window_frac: float = 0.3) -> ThresholdFit:
    """Fit the critical-scaling ansatz and bootstrap a confidence interval.

    The logical error rate is modelled as a quadratic in the rescaled
    variable (p - p_th) d^(1/nu), fit by weighted least squares inside a
    window of +-``window_frac`` around the visual crossing.
    """
    if len({t.distance for t in points}) < 3:
        raise EstimationError("need at least 3 distances")
    if len({t.p_phys for t in points}) < 4:
        raise EstimationError("need at least 4 physical error rates")
    p0 = _crossing_guess(points)
    window = (p0 * (1 - window_frac), p0 * (1 + window_frac))
    theta, n_used = _fit_once(points, p0, window)
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_bootstrap):
        resampled = [
            ThresholdPoint(t.distance, t.p_phys,
                           rng.binomial(t.shots, min(max(t.ler, 0.0), 1.0)) / t.shots,
                           t.shots)
            for t in points
        ]
        try:
            th, _ = _fit_once(resampled, p0, window)
            boots.append(th[0])
        except EstimationError:
            continue
    if boots:
        ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5)))
    else:
        ci = (theta[0], theta[0])
    return ThresholdFit(
        p_th=float(theta[0]), ci=ci, nu=float(theta[1]), window=window,
        n_bootstrap=n_bootstrap, points_used=n_used,
        params=tuple(float(v) for v in theta),
    )


# --- report output -----------------------------------------------------------

def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(str(r.get(c, "")) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def reports_to_json(reports: list[MetricsReport], fits: dict | None = None) -> str:
    payload = {"results": [r.rows() for r in reports]}
    if fits:
        payload["threshold_fits"] = {
            name: {
                "p_th": fit.p_th, "ci": list(fit.ci), "nu": fit.nu,
                "window": list(fit.window), "n_bootstrap": fit.n_bootstrap,
                "points_used": fit.points_used,
                "ansatz": "quadratic in (p - p_th) * d**(1/nu)",
            }
            for name, fit in fits.items()
        }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
