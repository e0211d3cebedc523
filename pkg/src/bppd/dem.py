"""Detector error model extraction from annotated noisy circuits.

Every noise channel outcome is a Pauli inserted at a circuit location.  A
single backward sweep computes, for each (qubit, location), the set of
detectors and observables flipped by an X or Z inserted there; Y and
two-qubit outcomes follow by XOR linearity.  Mechanisms with identical
signatures merge with XOR probability combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix, csr_matrix

from .circuit import Circuit
from .errors import ParameterError, StructureError

PROB_FLOOR = 1e-15

# non-identity single-qubit Paulis as (x, z) bit pairs
_PAULI_BITS = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


def combine_probabilities(p1: float, p2: float) -> float:
    """Probability that an odd number of two independent events occurs."""
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


@dataclass
class DetectorErrorModel:
    """Sparse (H, L, p) triple plus detector metadata.

    Columns are error mechanisms; ``column_dets[k]`` / ``column_obs[k]`` are
    the sorted detector and observable indices flipped by mechanism ``k``.
    """

    n_detectors: int
    n_observables: int
    priors: np.ndarray
    column_dets: list[tuple[int, ...]]
    column_obs: list[tuple[int, ...]]
    detector_coords: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=np.float64)
        if len(self.column_dets) != len(self.priors) or len(self.column_obs) != len(self.priors):
            raise StructureError("column/prior length mismatch")
        if np.any(self.priors <= 0) or np.any(self.priors >= 1):
            raise ParameterError("priors must lie in (0, 1)")
        seen = set()
        for k, (dets, obs) in enumerate(zip(self.column_dets, self.column_obs)):
            if not dets and not obs:
                raise StructureError(f"column {k} flips nothing")
            sig = (dets, obs)
            if sig in seen:
                raise StructureError(f"column {k} duplicates another signature")
            seen.add(sig)

    @property
    def n_mechanisms(self) -> int:
        return len(self.priors)

    def detector_basis(self) -> np.ndarray:
        """0 for Z-type detectors, 1 for X-type, from plaquette coordinates."""
        if len(self.detector_coords) != self.n_detectors:
            raise StructureError("model lacks detector coordinates")
        return np.array([(rp + cp) % 2 for rp, cp, _ in self.detector_coords], dtype=np.uint8)

    def check_matrix(self) -> csr_matrix:
        rows, cols = [], []
        for k, dets in enumerate(self.column_dets):
            rows.extend(dets)
            cols.extend([k] * len(dets))
        data = np.ones(len(rows), dtype=np.uint8)
        return csr_matrix((data, (rows, cols)), shape=(self.n_detectors, self.n_mechanisms))

    def logical_matrix(self) -> csr_matrix:
        rows, cols = [], []
        for k, obs in enumerate(self.column_obs):
            rows.extend(obs)
            cols.extend([k] * len(obs))
        data = np.ones(len(rows), dtype=np.uint8)
        return csr_matrix((data, (rows, cols)), shape=(self.n_observables, self.n_mechanisms))

    def syndrome_of(self, error: np.ndarray) -> np.ndarray:
        """H @ e mod 2 for a dense binary error vector."""
        s = np.zeros(self.n_detectors, dtype=np.uint8)
        for k in np.flatnonzero(error):
            for d in self.column_dets[k]:
                s[d] ^= 1
        return s

    def homology_of(self, error: np.ndarray) -> np.ndarray:
        lam = np.zeros(self.n_observables, dtype=np.uint8)
        for k in np.flatnonzero(error):
            for o in self.column_obs[k]:
                lam[o] ^= 1
        return lam

    # --- text serialization ---------------------------------------------

    def to_text(self) -> str:
        lines = [f"dem v1 detectors={self.n_detectors} observables={self.n_observables}"]
        for rp, cp, layer in self.detector_coords:
            lines.append(f"detector_coord {rp} {cp} {layer}")
        for k in range(self.n_mechanisms):
            parts = [f"error({self.priors[k]:.17g})"]
            parts += [f"D{d}" for d in self.column_dets[k]]
            parts += [f"L{o}" for o in self.column_obs[k]]
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DetectorErrorModel":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("dem v1"):
            raise StructureError("missing 'dem v1' header")
        head = dict(part.split("=") for part in lines[0].split()[2:])
        n_det, n_obs = int(head["detectors"]), int(head["observables"])
        coords, dets, obs, priors = [], [], [], []
        for ln in lines[1:]:
            if ln.startswith("detector_coord"):
                _, rp, cp, layer = ln.split()
                coords.append((int(rp), int(cp), int(layer)))
                continue
            if not ln.startswith("error("):
                raise StructureError(f"cannot parse line {ln!r}")
            close = ln.index(")")
            priors.append(float(ln[6:close]))
            ds, os_ = [], []
            for tok in ln[close + 1:].split():
                if tok.startswith("D"):
                    ds.append(int(tok[1:]))
                elif tok.startswith("L"):
                    os_.append(int(tok[1:]))
                else:
                    raise StructureError(f"bad token {tok!r}")
            dets.append(tuple(ds))
            obs.append(tuple(os_))
        return cls(
            n_detectors=n_det,
            n_observables=n_obs,
            priors=np.array(priors),
            column_dets=dets,
            column_obs=obs,
            detector_coords=coords,
        )


def _measurement_signatures(circuit: Circuit) -> list[frozenset]:
    """For each measurement index, the detectors/observables it feeds.

    Observables are encoded as ``n_detectors + j`` so a signature is one
    flat frozenset of ints.
    """
    n_det = circuit.n_detectors
    sigs = [set() for _ in range(circuit.n_measurements)]
    for d, meas in enumerate(circuit.detectors):
        for m in meas:
            sigs[m].add(d)
    for j, meas in enumerate(circuit.observables):
        for m in meas:
            sigs[m].add(n_det + j)
    return [frozenset(s) for s in sigs]


class _MechanismAccumulator:
    def __init__(self):
        self.table: dict[frozenset, float] = {}

    def add(self, sig: frozenset, prob: float):
        if not sig or prob == 0.0:
            return
        old = self.table.get(sig)
        self.table[sig] = prob if old is None else combine_probabilities(old, prob)


def extract_dem(circuit: Circuit) -> DetectorErrorModel:
    """Enumerate all noise mechanisms of ``circuit`` and build the model."""
    if not circuit.detectors:
        raise StructureError("circuit carries no detector annotations")
    circuit.validate()
    n_det = circuit.n_detectors
    meas_sig = _measurement_signatures(circuit)
    meas_bases = circuit.measurement_bases()

    empty = frozenset()
    sig_x = [empty] * circuit.n_qubits
    sig_z = [empty] * circuit.n_qubits
    acc = _MechanismAccumulator()

    last_measure_idx = None
    for idx in range(len(circuit.instructions) - 1, -1, -1):
        inst = circuit.instructions[idx]
        name = inst.name
        if name == "h":
            for q in inst.targets:
                sig_x[q], sig_z[q] = sig_z[q], sig_x[q]
        elif name == "cz":
            for a, b in inst.pairs():
                xa = sig_x[a] ^ sig_z[b]
                xb = sig_x[b] ^ sig_z[a]
                sig_x[a], sig_x[b] = xa, xb
        elif name == "measure_z":
            base = meas_bases[idx]
            for off, q in enumerate(inst.targets):
                sig_x[q] = sig_x[q] ^ meas_sig[base + off]
                sig_z[q] = empty
            last_measure_idx = idx
        elif name == "reset_z":
            for q in inst.targets:
                sig_x[q] = empty
                sig_z[q] = empty
        elif name == "depolarize1":
            q3 = inst.prob / 3.0
            for q in inst.targets:
                acc.add(sig_x[q], q3)
                acc.add(sig_z[q], q3)
                acc.add(sig_x[q] ^ sig_z[q], q3)
        elif name == "depolarize2":
            q15 = inst.prob / 15.0
            for a, b in inst.pairs():
                sa = (empty, sig_x[a], sig_x[a] ^ sig_z[a], sig_z[a])
                sb = (empty, sig_x[b], sig_x[b] ^ sig_z[b], sig_z[b])
                for i in range(4):
                    for j in range(4):
                        if i == 0 and j == 0:
                            continue
                        acc.add(sa[i] ^ sb[j], q15)
        elif name == "flip_measurement":
            # backward order reaches the flip before its measure_z
            mi = _preceding_measure(circuit, idx)
            base = meas_bases[mi]
            for off in range(len(circuit.instructions[mi].targets)):
                acc.add(meas_sig[base + off], inst.prob)
        elif name == "tick":
            pass
        else:
            raise StructureError(f"cannot propagate through {name!r}")

    cols = [
        (tuple(sorted(e for e in sig if e < n_det)),
         tuple(sorted(e - n_det for e in sig if e >= n_det)),
         p)
        for sig, p in acc.table.items()
        if p >= PROB_FLOOR
    ]
    cols.sort(key=lambda c: (c[0], c[1]))
    if not cols:
        raise StructureError("noise model produced no mechanisms")
    dem = DetectorErrorModel(
        n_detectors=n_det,
        n_observables=circuit.n_observables,
        priors=np.array([c[2] for c in cols]),
        column_dets=[c[0] for c in cols],
        column_obs=[c[1] for c in cols],
        detector_coords=list(circuit.detector_coords),
    )
    if np.any(dem.priors >= 0.5):
        raise StructureError("merged mechanism reached probability >= 0.5")
    return dem


def _preceding_measure(circuit: Circuit, idx: int) -> int:
    for j in range(idx - 1, -1, -1):
        if circuit.instructions[j].name == "measure_z":
            return j
    raise StructureError("flip_measurement with no preceding measure_z")


def propagate_fault(circuit: Circuit, position: int, paulis: dict[int, str]):
    """Forward-propagate a Pauli inserted before instruction ``position``.

    Returns (detector ids, observable ids) flipped.  Independent of the
    backward sweep in :func:`extract_dem`; used as a cross-check and by the
    frame simulator's fault-injection hook.
    """
    frame = {}
    for q, pauli in paulis.items():
        if pauli not in _PAULI_BITS:
            raise ParameterError(f"bad Pauli {pauli!r}")
        frame[q] = _PAULI_BITS[pauli]
    flips = set()
    meas_bases = circuit.measurement_bases()
    for idx in range(position, len(circuit.instructions)):
        inst = circuit.instructions[idx]
        name = inst.name
        if name == "h":
            for q in inst.targets:
                if q in frame:
                    x, z = frame[q]
                    frame[q] = (z, x)
        elif name == "cz":
            for a, b in inst.pairs():
                xa = frame.get(a, (0, 0))[0]
                xb = frame.get(b, (0, 0))[0]
                if xb:
                    x, z = frame.get(a, (0, 0))
                    frame[a] = (x, z ^ 1)
                if xa:
                    x, z = frame.get(b, (0, 0))
                    frame[b] = (x, z ^ 1)
        elif name == "measure_z":
            base = meas_bases[idx]
            for off, q in enumerate(inst.targets):
                x, _ = frame.get(q, (0, 0))
                if x:
                    flips.add(base + off)
                if q in frame:
                    frame[q] = (x, 0)
        elif name == "reset_z":
            for q in inst.targets:
                frame.pop(q, None)
        # noise channels and ticks do not transform Paulis
    frame = {q: xz for q, xz in frame.items() if xz != (0, 0)}

    n_det = circuit.n_detectors
    sig = frozenset()
    meas_sig = _measurement_signatures(circuit)
    for m in flips:
        sig = sig ^ meas_sig[m]
    dets = tuple(sorted(e for e in sig if e < n_det))
    obs = tuple(sorted(e - n_det for e in sig if e >= n_det))
    return dets, obs
