"""Rotated planar surface code: layout, extraction circuit, noise model.

The layout places ``d*d`` data qubits on a grid and one ancilla per
stabiliser plaquette.  Z-memory experiments reset data qubits in the Z
basis, run ``rounds`` rounds of stabiliser extraction built from {H, CZ},
and finish with a transversal Z measurement of the data qubits.  The
logical observable is the product of final Z measurements along the
leftmost data column.

The four-step CZ schedule uses a "Z" corner order for Z plaquettes and an
"N" order for X plaquettes, so two-qubit hook faults land parallel to the
matching boundary they can least damage.
"""

from __future__ import annotations

from dataclasses import dataclass

from .circuit import Circuit, Instruction
from .errors import ParameterError, StructureError

CORNER_OFFSETS = {"nw": (-1, -1), "ne": (-1, 0), "sw": (0, -1), "se": (0, 0)}
Z_ORDER = ("nw", "ne", "sw", "se")
X_ORDER = ("nw", "sw", "ne", "se")
TICKS_PER_ROUND = 11


@dataclass(frozen=True)
class Plaquette:
    rp: int
    cp: int
    basis: str  # "Z" or "X"
    ancilla: int
    corners: tuple  # (nw, ne, sw, se), None where off the lattice

    def corner(self, name: str):
        return self.corners[("nw", "ne", "sw", "se").index(name)]

    @property
    def data_qubits(self):
        return tuple(q for q in self.corners if q is not None)


class RotatedSurfaceLayout:
    """Qubit indexing, plaquette list and CZ schedule for one distance."""

    def __init__(self, distance: int):
        if distance < 3 or distance % 2 == 0:
            raise ParameterError("distance must be an odd integer >= 3")
        d = distance
        self.distance = d
        self.n_data = d * d

        plaqs = []
        for rp in range(d + 1):
            for cp in range(d + 1):
                basis = "Z" if (rp + cp) % 2 == 0 else "X"
                corners = []
                for name in ("nw", "ne", "sw", "se"):
                    dr, dc = CORNER_OFFSETS[name]
                    r, c = rp + dr, cp + dc
                    corners.append(r * d + c if 0 <= r < d and 0 <= c < d else None)
                present = [q for q in corners if q is not None]
                if len(present) == 4:
                    keep = True
                elif len(present) == 2:
                    # top/bottom boundaries host Z plaquettes, left/right host X
                    if rp in (0, d):
                        keep = basis == "Z"
                    else:
                        keep = basis == "X"
                else:
                    keep = False
                if keep:
                    plaqs.append((rp, cp, basis, tuple(corners)))

        self.plaquettes = tuple(
            Plaquette(rp, cp, basis, self.n_data + k, corners)
            for k, (rp, cp, basis, corners) in enumerate(plaqs)
        )
        self.n_ancilla = len(self.plaquettes)
        self.n_qubits = self.n_data + self.n_ancilla
        if self.n_ancilla != d * d - 1:
            raise StructureError("plaquette bookkeeping is broken")
        # logical Z: one boundary-to-boundary column of data qubits
        self.logical_z_data = tuple(r * d for r in range(d))

    def data_coord(self, q: int):
        return divmod(q, self.distance)

    def cz_step(self, step: int):
        """CZ pairs (data, ancilla) fired in schedule step 0..3."""
        pairs = []
        for p in self.plaquettes:
            order = Z_ORDER if p.basis == "Z" else X_ORDER
            q = p.corner(order[step])
            if q is not None:
                pairs.append((q, p.ancilla))
        return pairs

    def x_step_data(self, step: int):
        """Data qubits that need an H sandwich around CZ step ``step``."""
        out = set()
        for p in self.plaquettes:
            if p.basis != "X":
                continue
            q = p.corner(X_ORDER[step])
            if q is not None:
                out.add(q)
        return out


def build_noiseless_circuit(layout: RotatedSurfaceLayout, rounds: int) -> Circuit:
    """Z-memory extraction circuit with detector/observable annotations."""
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    d = layout.distance
    anc = [p.ancilla for p in layout.plaquettes]
    circ = Circuit(n_qubits=layout.n_qubits)

    xdata = [layout.x_step_data(s) for s in range(4)]
    h_layers = [
        sorted(set(anc) | xdata[0]),
        sorted(xdata[0] ^ xdata[1]),
        sorted(xdata[1] ^ xdata[2]),
        sorted(xdata[2] ^ xdata[3]),
        sorted(set(anc) | xdata[3]),
    ]
    cz_layers = []
    for s in range(4):
        pairs = layout.cz_step(s)
        flat = [q for pair in pairs for q in pair]
        if len(set(flat)) != len(flat):
            raise StructureError(f"CZ schedule step {s} reuses a qubit")
        cz_layers.append(flat)

    first = True

    def tick():
        nonlocal first
        if not first:
            circ.append("tick")
        first = False

    for r in range(1, rounds + 1):
        tick()
        if r == 1:
            circ.append("reset_z", list(range(layout.n_data)) + anc)
        else:
            circ.append("reset_z", anc)
        for s in range(4):
            tick()
            if h_layers[s]:
                circ.append("h", h_layers[s])
            tick()
            circ.append("cz", cz_layers[s])
        tick()
        if h_layers[4]:
            circ.append("h", h_layers[4])
        tick()
        circ.append("measure_z", anc)
    tick()
    circ.append("measure_z", list(range(layout.n_data)))

    # measurement record layout: rounds * n_ancilla ancilla results, then data
    n_anc = layout.n_ancilla

    def anc_meas(k: int, r: int) -> int:
        return (r - 1) * n_anc + k

    def data_meas(q: int) -> int:
        return rounds * n_anc + q

    for k, p in enumerate(layout.plaquettes):
        if p.basis == "Z":
            circ.detectors.append((anc_meas(k, 1),))
            circ.detector_coords.append((p.rp, p.cp, 1))
    for r in range(2, rounds + 1):
        for k, p in enumerate(layout.plaquettes):
            circ.detectors.append((anc_meas(k, r - 1), anc_meas(k, r)))
            circ.detector_coords.append((p.rp, p.cp, r))
    for k, p in enumerate(layout.plaquettes):
        if p.basis == "Z":
            meas = (anc_meas(k, rounds),) + tuple(data_meas(q) for q in p.data_qubits)
            circ.detectors.append(meas)
            circ.detector_coords.append((p.rp, p.cp, rounds + 1))

    circ.observables.append(tuple(data_meas(q) for q in layout.logical_z_data))
    return circ.validate()


def iter_ticks(circuit: Circuit):
    """Group instructions between tick separators."""
    group = []
    for inst in circuit.instructions:
        if inst.name == "tick":
            yield group
            group = []
        else:
            group.append(inst)
    yield group


def apply_noise_model(circuit: Circuit, p_phys: float, idle_during_mr: bool = True) -> Circuit:
    """Insert the circuit-level noise channels.

    Per tick: depolarize2(p) after each CZ, depolarize1(p/10) after each
    single-qubit gate and after each reset/measurement collapse,
    flip_measurement(p) on each measurement, and depolarize1(p/10) on every
    idle qubit.  ``idle_during_mr=False`` suppresses idle noise in ticks
    that contain only resets and measurements.
    """
    if not (0 <= p_phys < 0.5):
        raise ParameterError("p_phys must lie in [0, 0.5)")
    if any(inst.name in ("depolarize1", "depolarize2", "flip_measurement")
           for inst in circuit.instructions):
        raise StructureError("circuit already carries noise channels")
    noisy = Circuit(
        n_qubits=circuit.n_qubits,
        detectors=list(circuit.detectors),
        detector_coords=list(circuit.detector_coords),
        observables=list(circuit.observables),
    )
    if p_phys == 0:
        noisy.instructions = list(circuit.instructions)
        return noisy.validate()
    p1 = p_phys / 10

    first = True
    for group in iter_ticks(circuit):
        if not first:
            noisy.append("tick")
        first = False
        touched = set()
        singles = []
        cz_pairs = []
        kinds = set()
        for inst in group:
            noisy.instructions.append(inst)
            kinds.add(inst.name)
            touched.update(inst.targets)
            if inst.name == "cz":
                cz_pairs.extend(inst.targets)
            elif inst.name in ("h", "reset_z", "measure_z"):
                singles.extend(inst.targets)
            if inst.name == "measure_z":
                noisy.append("flip_measurement", (), p_phys)
        if cz_pairs:
            noisy.append("depolarize2", cz_pairs, p_phys)
        if singles:
            noisy.append("depolarize1", sorted(singles), p1)
        idle = sorted(set(range(circuit.n_qubits)) - touched)
        if idle and (idle_during_mr or not kinds <= {"reset_z", "measure_z"}):
            noisy.append("depolarize1", idle, p1)
    return noisy.validate()


def build_memory_circuit(
    distance: int, rounds: int, p_phys: float, idle_during_mr: bool = True
) -> Circuit:
    """Noisy Z-memory experiment circuit for the rotated surface code."""
    layout = RotatedSurfaceLayout(distance)
    circ = build_noiseless_circuit(layout, rounds)
    return apply_noise_model(circ, p_phys, idle_during_mr=idle_during_mr)
