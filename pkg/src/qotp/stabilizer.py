"""Pauli-frame backend: stabilizer payloads and symplectic error tracking.

On this backend a protocol run never builds a state vector. The channel
attack is a Pauli string; it is pulled back through the code circuit, its
X part on the ancillas gives the syndrome flips, and its restriction to the
payload is the residual error whose effect on a stabilizer payload is
decided by commutation with the payload's generators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codes import CliffordCircuit, random_clifford
from .pauli import PauliString, apply_to_amplitudes
from .qcore import StateVector


@dataclass(frozen=True)
class StabilizerState:
    """Pure stabilizer state given by ``m`` independent commuting generators.

    ``circuit`` (optional) prepares the state from ``|0...0>``; it is only
    needed to hand the same state to the dense backend.
    """

    generators: tuple[PauliString, ...]
    circuit: CliffordCircuit | None = None

    @property
    def n_qubits(self) -> int:
        return self.generators[0].n if self.generators else 0

    @classmethod
    def from_circuit(cls, circuit: CliffordCircuit) -> "StabilizerState":
        gens = tuple(circuit.conjugate(PauliString.single(circuit.n, q, "Z"))
                     for q in range(circuit.n))
        return cls(gens, circuit)

    @classmethod
    def basis(cls, bits: Sequence[int]) -> "StabilizerState":
        n = len(bits)
        gates = []
        for q, b in enumerate(bits):
            if b:
                gates += [("H", q), ("S", q), ("S", q), ("H", q)]
        return cls.from_circuit(CliffordCircuit.from_gates(n, gates))

    def to_statevector(self) -> StateVector:
        if self.circuit is None:
            raise ValueError("stabilizer state has no preparation circuit")
        zero = np.zeros(1 << self.n_qubits, dtype=complex)
        zero[0] = 1.0
        return StateVector(self.circuit.apply(zero))

    def error_fidelity(self, error: PauliString) -> float:
        """|<psi| E |psi>|^2, which is 1 or 0 for a stabilizer state."""
        return 1.0 if all(error.commutes(g) for g in self.generators) else 0.0


def random_stabilizer_state(m: int, rng: np.random.Generator,
                            n_gates: int | None = None) -> StabilizerState:
    n_gates = 4 * m if n_gates is None else n_gates
    return StabilizerState.from_circuit(random_clifford(m, n_gates, rng))


def error_fidelity(state, error: PauliString) -> float:
    """Fidelity of ``E|psi>`` with ``|psi>`` for stabilizer or dense payloads."""
    if isinstance(state, StabilizerState):
        return state.error_fidelity(error)
    amps = state.amplitudes
    return float(min(1.0, abs(np.vdot(amps, apply_to_amplitudes(error, amps))) ** 2))
