"""Pauli-frame Monte Carlo sampling of noisy stabilizer circuits.

A frame is the X/Z flip pattern relative to the noiseless reference run;
propagating it through Clifford gates is linear, so whole batches of shots
advance through the instruction list together as boolean matrices.  Shot
``i`` consumes an independent counter-based random stream keyed by
``(seed, i)``, so results are reproducible regardless of batching,
chunking or thread count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .circuit import Circuit
from .dem import DetectorErrorModel
from .errors import ParameterError, StructureError

SHOT_MAGIC = b"BPSH"
_CHUNK = 256

# outcome index 0..15 = (pauli_a * 4 + pauli_b), paulis I,X,Y,Z; index 0 is
# the identity and is never produced by a depolarizing hit
_PAULI_X = np.array([0, 1, 1, 0], dtype=bool)   # I X Y Z flip the X frame
_PAULI_Z = np.array([0, 0, 1, 1], dtype=bool)   # I X Y Z flip the Z frame


@dataclass(frozen=True)
class Shot:
    syndrome: np.ndarray
    true_homology: np.ndarray


class ShotArray:
    """Dense (n_shots, n_detectors) syndromes plus true homology bits.

    Behaves as a sequence of :class:`Shot` views.
    """

    def __init__(self, syndromes: np.ndarray, homologies: np.ndarray):
        self.syndromes = syndromes
        self.homologies = homologies

    def __len__(self):
        return self.syndromes.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return ShotArray(self.syndromes[i], self.homologies[i])
        return Shot(self.syndromes[i], self.homologies[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def shots_for(p_phys: float) -> int:
    """Shot budget for one experiment: min(1e6, ceil(1/p^2))."""
    if p_phys <= 0:
        raise ParameterError("p_phys must be positive")
    return int(min(10**6, int(np.ceil(1.0 / (p_phys * p_phys)))))


def _shot_uniforms(seed: int, shot_index: int, n: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=(seed, shot_index)))
    return gen.random(n)


def _count_draws(circuit: Circuit) -> int:
    n = 0
    last_measure_width = 0
    for inst in circuit.instructions:
        if inst.name == "depolarize1":
            n += len(inst.targets)
        elif inst.name == "depolarize2":
            n += len(inst.targets) // 2
        elif inst.name == "measure_z":
            last_measure_width = len(inst.targets)
        elif inst.name == "flip_measurement":
            if last_measure_width == 0:
                raise StructureError("flip_measurement with no preceding measure_z")
            n += last_measure_width
    return n


def _detector_matrices(circuit: Circuit):
    n_meas = circuit.n_measurements

    def build(rows_of):
        rows, cols = [], []
        for r, meas in enumerate(rows_of):
            for m in meas:
                rows.append(r)
                cols.append(m)
        return csr_matrix(
            (np.ones(len(rows), np.uint8), (rows, cols)),
            shape=(len(rows_of), n_meas),
        )

    return build(circuit.detectors), build(circuit.observables)


def sample_shots(circuit: Circuit, n_shots: int, seed: int,
                 inject: list | None = None) -> ShotArray:
    """Sample detector and observable outcomes of a noisy circuit.

    ``inject`` is a test hook: a list of ``(instruction_index, {qubit:
    pauli})`` deterministic faults applied to every shot just before the
    named instruction.
    """
    if not circuit.detectors:
        raise StructureError("circuit carries no detector annotations")
    n_draws = _count_draws(circuit)
    meas_bases = circuit.measurement_bases()
    det_mat, obs_mat = _detector_matrices(circuit)
    inject_at = {}
    if inject:
        for pos, paulis in inject:
            inject_at.setdefault(pos, []).append(paulis)

    syndromes = np.empty((n_shots, circuit.n_detectors), dtype=np.uint8)
    homologies = np.empty((n_shots, circuit.n_observables), dtype=np.uint8)

    for lo in range(0, n_shots, _CHUNK):
        hi = min(lo + _CHUNK, n_shots)
        b = hi - lo
        draws = np.empty((b, n_draws))
        for i in range(b):
            draws[i] = _shot_uniforms(seed, lo + i, n_draws)
        xf = np.zeros((b, circuit.n_qubits), dtype=bool)
        zf = np.zeros((b, circuit.n_qubits), dtype=bool)
        rec = np.zeros((b, circuit.n_measurements), dtype=bool)
        ptr = 0
        last_measure = None
        for idx, inst in enumerate(circuit.instructions):
            for paulis in inject_at.get(idx, ()):
                for q, pl in paulis.items():
                    if pl in ("X", "Y"):
                        xf[:, q] ^= True
                    if pl in ("Z", "Y"):
                        zf[:, q] ^= True
            name = inst.name
            if name == "h":
                t = list(inst.targets)
                tmp = xf[:, t].copy()
                xf[:, t] = zf[:, t]
                zf[:, t] = tmp
            elif name == "cz":
                a = list(inst.targets[0::2])
                c = list(inst.targets[1::2])
                zf[:, a] ^= xf[:, c]
                zf[:, c] ^= xf[:, a]
            elif name == "measure_z":
                base = meas_bases[idx]
                t = list(inst.targets)
                rec[:, base:base + len(t)] = xf[:, t]
                zf[:, t] = False
                last_measure = idx
            elif name == "reset_z":
                t = list(inst.targets)
                xf[:, t] = False
                zf[:, t] = False
            elif name == "depolarize1":
                k = len(inst.targets)
                u = draws[:, ptr:ptr + k]
                ptr += k
                hit = u < inst.prob
                sub = np.minimum((u * (3.0 / inst.prob)).astype(np.int64), 2)
                t = list(inst.targets)
                xf[:, t] ^= hit & (sub <= 1)   # X or Y
                zf[:, t] ^= hit & (sub >= 1)   # Y or Z
            elif name == "depolarize2":
                k = len(inst.targets) // 2
                u = draws[:, ptr:ptr + k]
                ptr += k
                hit = u < inst.prob
                sub = np.minimum((u * (15.0 / inst.prob)).astype(np.int64), 14) + 1
                pa, pb = sub >> 2, sub & 3
                a = list(inst.targets[0::2])
                c = list(inst.targets[1::2])
                xf[:, a] ^= hit & _PAULI_X[pa]
                zf[:, a] ^= hit & _PAULI_Z[pa]
                xf[:, c] ^= hit & _PAULI_X[pb]
                zf[:, c] ^= hit & _PAULI_Z[pb]
            elif name == "flip_measurement":
                base = meas_bases[last_measure]
                k = len(circuit.instructions[last_measure].targets)
                u = draws[:, ptr:ptr + k]
                ptr += k
                rec[:, base:base + k] ^= u < inst.prob
        assert ptr == n_draws
        rec8 = rec.astype(np.uint8)
        syndromes[lo:hi] = (det_mat @ rec8.T).T % 2
        homologies[lo:hi] = (obs_mat @ rec8.T).T % 2
    return ShotArray(syndromes, homologies)


def sample_dem_shots(dem: DetectorErrorModel, n_shots: int, seed: int,
                     return_errors: bool = False):
    """Sample shots directly from a detector error model.

    Each mechanism fires independently with its prior; the syndrome and
    homology follow by XOR.  Bypasses the circuit entirely.
    """
    H = dem.check_matrix()
    L = dem.logical_matrix()
    m = dem.n_mechanisms
    syndromes = np.empty((n_shots, dem.n_detectors), dtype=np.uint8)
    homologies = np.empty((n_shots, dem.n_observables), dtype=np.uint8)
    errors = np.empty((n_shots, m), dtype=np.uint8) if return_errors else None
    priors = dem.priors
    for lo in range(0, n_shots, _CHUNK):
        hi = min(lo + _CHUNK, n_shots)
        b = hi - lo
        e = np.empty((b, m), dtype=np.uint8)
        for i in range(b):
            e[i] = _shot_uniforms(seed, lo + i, m) < priors
        syndromes[lo:hi] = (H @ e.T).T % 2
        homologies[lo:hi] = (L @ e.T).T % 2
        if return_errors:
            errors[lo:hi] = e
    shots = ShotArray(syndromes, homologies)
    if return_errors:
        return shots, errors
    return shots


# --- shot dump format -------------------------------------------------------

def write_shots(path, shots: ShotArray):
    """Binary dump: 16-byte header, then per shot the packed detector bits
    followed by the packed observable bits (little-endian bit order)."""
    n, nd = shots.syndromes.shape
    no = shots.homologies.shape[1]
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIII", SHOT_MAGIC, nd, no, n))
        det_bytes = np.packbits(shots.syndromes, axis=1, bitorder="little")
        obs_bytes = np.packbits(shots.homologies, axis=1, bitorder="little") \
            if no else np.empty((n, 0), dtype=np.uint8)
        np.hstack([det_bytes, obs_bytes]).tofile(f)


def read_shots(path) -> ShotArray:
    with open(path, "rb") as f:
        magic, nd, no, n = struct.unpack("<4sIII", f.read(16))
        if magic != SHOT_MAGIC:
            raise StructureError("not a shot dump file")
        det_w = (nd + 7) // 8
        obs_w = (no + 7) // 8
        raw = np.fromfile(f, dtype=np.uint8).reshape(n, det_w + obs_w)
    syndromes = np.unpackbits(raw[:, :det_w], axis=1, bitorder="little")[:, :nd]
    homologies = np.unpackbits(raw[:, det_w:], axis=1, bitorder="little")[:, :no] \
        if no else np.zeros((n, 0), dtype=np.uint8)
    return ShotArray(syndromes.astype(np.uint8), homologies.astype(np.uint8))
