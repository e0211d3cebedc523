"""Clifford circuit representation with explicit noise channels.

Instructions operate on integer qubit indices.  Measurements are indexed
globally in program order; detector and observable annotations reference
those measurement indices.  The text format is one instruction per line,
``<opname> <args>`` (see README for the grammar).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParameterError, StructureError

GATE_OPS = frozenset({"reset_z", "measure_z", "h", "cz"})
NOISE_OPS = frozenset({"depolarize1", "depolarize2", "flip_measurement"})
ALL_OPS = GATE_OPS | NOISE_OPS | {"tick"}

# ops whose targets are consumed in pairs
PAIR_OPS = frozenset({"cz", "depolarize2"})


@dataclass(frozen=True)
class Instruction:
    name: str
    targets: tuple[int, ...] = ()
    prob: float | None = None

    def __post_init__(self):
        if self.name not in ALL_OPS:
            raise ParameterError(f"unknown instruction {self.name!r}")
        if self.name in PAIR_OPS and len(self.targets) % 2 != 0:
            raise ParameterError(f"{self.name} needs an even number of targets")
        if self.name in NOISE_OPS and self.prob is None:
            raise ParameterError(f"{self.name} needs a probability")

    def pairs(self):
        t = self.targets
        return [(t[i], t[i + 1]) for i in range(0, len(t), 2)]

    def __str__(self):
        head = self.name if self.prob is None else f"{self.name}({self.prob!r})"
        if not self.targets:
            return head
        return head + " " + " ".join(str(q) for q in self.targets)


@dataclass
class Circuit:
    """Instruction list plus detector/observable annotations.

    ``detectors[i]`` is a tuple of global measurement indices whose recorded
    flips are XORed to give detector ``i``; ``detector_coords[i]`` carries
    (plaquette row, plaquette col, layer) metadata.  ``observables[j]`` works
    the same way for logical observable ``j``.
    """

    n_qubits: int
    instructions: list[Instruction] = field(default_factory=list)
    detectors: list[tuple[int, ...]] = field(default_factory=list)
    detector_coords: list[tuple[int, int, int]] = field(default_factory=list)
    observables: list[tuple[int, ...]] = field(default_factory=list)

    def append(self, name, targets=(), prob=None):
        self.instructions.append(Instruction(name, tuple(targets), prob))

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    @property
    def n_observables(self) -> int:
        return len(self.observables)

    @property
    def n_measurements(self) -> int:
        return sum(len(i.targets) for i in self.instructions if i.name == "measure_z")

    def measurement_bases(self) -> list[int]:
        """First global measurement index of each measure_z instruction."""
        bases, m = [], 0
        for inst in self.instructions:
            if inst.name == "measure_z":
                bases.append(m)
                m += len(inst.targets)
            else:
                bases.append(-1)
        return bases

    def validate(self):
        m_count = 0
        last_measure = None
        for idx, inst in enumerate(self.instructions):
            for q in inst.targets:
                if not (0 <= q < self.n_qubits):
                    raise StructureError(
                        f"instruction {idx} ({inst.name}) targets qubit {q} "
                        f"but circuit has {self.n_qubits} qubits"
                    )
            if inst.name in PAIR_OPS:
                flat = inst.targets
                if len(set(flat)) != len(flat):
                    raise StructureError(
                        f"instruction {idx} ({inst.name}) reuses a qubit within one instruction"
                    )
            if inst.name == "measure_z":
                last_measure = idx
                m_count += len(inst.targets)
            elif inst.name == "flip_measurement":
                if last_measure is None:
                    raise StructureError(
                        f"instruction {idx}: flip_measurement with no preceding measure_z"
                    )
            elif inst.name != "tick" and inst.name not in NOISE_OPS:
                pass
        n_meas = m_count
        for d, meas in enumerate(self.detectors):
            for m in meas:
                if not (0 <= m < n_meas):
                    raise StructureError(f"detector {d} references measurement {m} of {n_meas}")
        for o, meas in enumerate(self.observables):
            for m in meas:
                if not (0 <= m < n_meas):
                    raise StructureError(f"observable {o} references measurement {m} of {n_meas}")
        return self

    # --- text serialization ---------------------------------------------

    def to_text(self) -> str:
        lines = [f"circuit v1 qubits={self.n_qubits}"]
        lines += [str(inst) for inst in self.instructions]
        for meas, coord in zip(self.detectors, self.detector_coords):
            coord_s = ",".join(str(c) for c in coord)
            lines.append(f"detector({coord_s}) " + " ".join(str(m) for m in meas))
        for j, meas in enumerate(self.observables):
            lines.append(f"observable({j}) " + " ".join(str(m) for m in meas))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines or not lines[0].startswith("circuit v1"):
            raise StructureError("missing 'circuit v1' header")
        m = re.search(r"qubits=(\d+)", lines[0])
        if not m:
            raise StructureError("header lacks qubits=<n>")
        circ = cls(n_qubits=int(m.group(1)))
        for ln in lines[1:]:
            head, *args = ln.split()
            pm = re.match(r"([a-z_0-9]+)(?:\(([^)]*)\))?$", head)
            if not pm:
                raise StructureError(f"cannot parse line {ln!r}")
            name, paren = pm.group(1), pm.group(2)
            if name == "detector":
                rp, cp, layer = (int(x) for x in paren.split(","))
                circ.detectors.append(tuple(int(a) for a in args))
                circ.detector_coords.append((rp, cp, layer))
            elif name == "observable":
                idx = int(paren)
                while len(circ.observables) <= idx:
                    circ.observables.append(())
                circ.observables[idx] = tuple(int(a) for a in args)
            else:
                prob = float(paren) if paren is not None else None
                circ.append(name, tuple(int(a) for a in args), prob)
        return circ.validate()

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.instructions == other.instructions
            and self.detectors == other.detectors
            and self.detector_coords == other.detector_coords
            and self.observables == other.observables
        )
