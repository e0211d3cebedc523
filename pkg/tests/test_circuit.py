import numpy as np
import pytest

from bppd.circuit import Circuit, Instruction
from bppd.errors import ParameterError, StructureError
from bppd.surface import (RotatedSurfaceLayout, apply_noise_model,
                          build_memory_circuit, build_noiseless_circuit, iter_ticks)


def test_layout_counts():
    for d in (3, 5, 7):
        lay = RotatedSurfaceLayout(d)
        assert lay.n_data == d * d
        assert lay.n_ancilla == d * d - 1
        z = [p for p in lay.plaquettes if p.basis == "Z"]
        x = [p for p in lay.plaquettes if p.basis == "X"]
        assert len(z) == len(x) == (d * d - 1) // 2


def test_layout_stabilizers_commute():
    lay = RotatedSurfaceLayout(5)
    for a in lay.plaquettes:
        for b in lay.plaquettes:
            if a.basis != b.basis:
                shared = set(a.data_qubits) & set(b.data_qubits)
                assert len(shared) % 2 == 0, (a, b)


def test_logical_column_commutes_with_x_plaquettes():
    lay = RotatedSurfaceLayout(5)
    col = set(lay.logical_z_data)
    for p in lay.plaquettes:
        if p.basis == "X":
            assert len(col & set(p.data_qubits)) % 2 == 0


def test_cz_schedule_disjoint_per_step():
    lay = RotatedSurfaceLayout(7)
    for s in range(4):
        qubits = [q for pair in lay.cz_step(s) for q in pair]
        assert len(qubits) == len(set(qubits))


def test_one_gate_per_qubit_per_tick():
    circ = build_noiseless_circuit(RotatedSurfaceLayout(5), 5)
    for group in iter_ticks(circ):
        touched = []
        for inst in group:
            touched.extend(inst.targets)
        assert len(touched) == len(set(touched))


def test_d3_shape():
    # 9 data + 8 ancilla qubits, 8 stabiliser measurements per round
    circ = build_memory_circuit(3, 3, 0.001)
    assert circ.n_qubits == 17
    meas = [i for i in circ.instructions if i.name == "measure_z"]
    assert len(meas) == 4  # one per round plus the final data measurement
    assert [len(m.targets) for m in meas] == [8, 8, 8, 9]
    assert circ.n_detectors == 24


def test_detector_count_formula():
    for d, r in [(3, 3), (3, 5), (5, 5), (5, 2)]:
        circ = build_memory_circuit(d, r, 0.001)
        per_type = (d * d - 1) // 2
        assert circ.n_detectors == per_type * (r + 1) + per_type * (r - 1)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        build_memory_circuit(4, 4, 0.001)
    with pytest.raises(ParameterError):
        build_memory_circuit(1, 1, 0.001)
    with pytest.raises(ParameterError):
        build_memory_circuit(3, 0, 0.001)
    with pytest.raises(ParameterError):
        build_memory_circuit(3, 3, 0.6)


def test_noise_insertion_rules():
    # a lone H gets a p/10 channel after it
    circ = Circuit(n_qubits=1)
    circ.append("h", (0,))
    noisy = apply_noise_model(circ, 0.01)
    assert [i.name for i in noisy.instructions] == ["h", "depolarize1"]
    assert noisy.instructions[1].prob == pytest.approx(0.001)
    # a CZ gets a two-qubit channel at full p
    circ = Circuit(n_qubits=2)
    circ.append("cz", (0, 1))
    noisy = apply_noise_model(circ, 0.01)
    assert [i.name for i in noisy.instructions] == ["cz", "depolarize2"]
    assert noisy.instructions[1].prob == pytest.approx(0.01)
    # measurements flip at full p and the collapsed qubit depolarises at p/10
    circ = Circuit(n_qubits=2)
    circ.append("measure_z", (0,))
    noisy = apply_noise_model(circ, 0.01)
    names = [i.name for i in noisy.instructions]
    assert names == ["measure_z", "flip_measurement", "depolarize1", "depolarize1"]
    assert noisy.instructions[1].prob == pytest.approx(0.01)
    assert noisy.instructions[2].targets == (0,)   # collapse noise
    assert noisy.instructions[3].targets == (1,)   # idle qubit


def test_noise_p_zero_is_identity():
    circ = build_noiseless_circuit(RotatedSurfaceLayout(3), 2)
    noisy = apply_noise_model(circ, 0.0)
    assert noisy == circ


def test_idle_switch():
    circ = Circuit(n_qubits=2)
    circ.append("measure_z", (0,))
    with_idle = apply_noise_model(circ, 0.01, idle_during_mr=True)
    without = apply_noise_model(circ, 0.01, idle_during_mr=False)
    idle_targets = [i for i in with_idle.instructions
                    if i.name == "depolarize1" and i.targets == (1,)]
    assert idle_targets
    assert all(i.targets != (1,) for i in without.instructions
               if i.name == "depolarize1")


def test_noise_requires_clean_circuit():
    circ = Circuit(n_qubits=1)
    circ.append("h", (0,))
    noisy = apply_noise_model(circ, 0.01)
    with pytest.raises(StructureError):
        apply_noise_model(noisy, 0.01)


def test_circuit_text_round_trip():
    circ = build_memory_circuit(3, 2, 0.01)
    text = circ.to_text()
    back = Circuit.from_text(text)
    assert back == circ
    assert back.to_text() == text


def test_circuit_validation_catches_bad_targets():
    circ = Circuit(n_qubits=2)
    circ.append("h", (5,))
    with pytest.raises(StructureError):
        circ.validate()
    circ = Circuit(n_qubits=2)
    with pytest.raises(ParameterError):
        circ.append("cz", (0, 1, 1))
    circ = Circuit(n_qubits=4)
    circ.append("cz", (0, 1, 1, 2))
    with pytest.raises(StructureError):
        circ.validate()


def test_flip_measurement_must_follow_measure():
    circ = Circuit(n_qubits=1)
    circ.append("flip_measurement", (), 0.1)
    with pytest.raises(StructureError):
        circ.validate()


def test_instruction_str_round_trip():
    inst = Instruction("depolarize1", (0, 3), 0.001)
    assert str(inst) == "depolarize1(0.001) 0 3"
