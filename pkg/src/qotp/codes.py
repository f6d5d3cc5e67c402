"""Keyed stabilizer purity-testing codes built from pseudorandom Clifford circuits.

A code on ``n = m + s`` qubits is a Clifford circuit ``C``. Encoding appends
``s`` ancillas prepared in ``|y>`` after the payload and applies ``C``; the
code stabilizers are ``C Z_a C^dagger`` for the ancilla positions ``a``.
Verification undoes ``C`` and reads the ancillas in the computational basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .pauli import PauliString
from .qcore import (DensityMatrix, StateVector, SubsystemLayout, apply_unitary,
                    as_density, measure, outcome_probabilities, project)
from .stats import binomial_ci

H, S, CX = 0, 1, 2
_NAMES = {H: "H", S: "S", CX: "CX"}
_CODES = {"H": H, "S": S, "CX": CX}

# dense unitaries are cached only up to this width
UNITARY_MAX_QUBITS = 10

_SQ2 = 1 / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class CliffordCircuit:
    """Gate list over ``{H q, S q, CX c t}`` stored as three parallel arrays.

    ``ops`` holds gate codes, ``a`` the target (or control) qubit and ``b``
    the CNOT target (``-1`` for one-qubit gates).
    """

    n: int
    ops: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=np.int8)
        a = np.asarray(self.a, dtype=np.int64)
        b = np.asarray(self.b, dtype=np.int64)
        if not (ops.shape == a.shape == b.shape) or ops.ndim != 1:
            raise ValueError("gate arrays must be one-dimensional and equally long")
        if ops.size:
            if np.any((ops < 0) | (ops > 2)):
                raise ValueError("unknown gate code")
            if np.any((a < 0) | (a >= self.n)):
                raise ValueError("qubit index out of range")
            two = ops == CX
            if np.any((b[two] < 0) | (b[two] >= self.n)) or np.any(b[two] == a[two]):
                raise ValueError("bad CNOT target")
        for arr in (ops, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_gates(cls, n: int, gates: Sequence[tuple]) -> "CliffordCircuit":
        ops, a, b = [], [], []
        for g in gates:
            if g[0] not in _CODES:
                raise ValueError(f"unknown gate {g[0]!r}; expected H, S or CX")
            ops.append(_CODES[g[0]])
            a.append(g[1])
            b.append(g[2] if len(g) > 2 else -1)
        return cls(n, np.array(ops, dtype=np.int8), np.array(a), np.array(b))

    @property
    def gates(self) -> tuple[tuple, ...]:
        out = []
        for op, a, b in zip(self.ops.tolist(), self.a.tolist(), self.b.tolist()):
            out.append((_NAMES[op], a, b) if op == CX else (_NAMES[op], a))
        return tuple(out)

    def __len__(self) -> int:
        return int(self.ops.size)

    def __eq__(self, other) -> bool:
        return (isinstance(other, CliffordCircuit) and self.n == other.n
                and np.array_equal(self.ops, other.ops) and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b))

    def __hash__(self) -> int:
        return hash((self.n, self.ops.tobytes(), self.a.tobytes(), self.b.tobytes()))

    def inverse(self) -> "CliffordCircuit":
        """Gate-wise reversal; ``S`` becomes ``S S S``."""
        ops, a, b = [], [], []
        for op, qa, qb in zip(self.ops[::-1].tolist(), self.a[::-1].tolist(), self.b[::-1].tolist()):
            reps = 3 if op == S else 1
            ops += [op] * reps
            a += [qa] * reps
            b += [qb] * reps
        return CliffordCircuit(self.n, np.array(ops, dtype=np.int8), np.array(a), np.array(b))

    # text format ----------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"CLIFF n={self.n}"]
        for g in self.gates:
            lines.append(" ".join(str(t) for t in g))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CliffordCircuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("CLIFF n="):
            raise ValueError("missing 'CLIFF n=<n>' header")
        n = int(lines[0].split("=", 1)[1])
        gates = []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] in ("H", "S") and len(parts) == 2:
                gates.append((parts[0], int(parts[1])))
            elif parts[0] == "CX" and len(parts) == 3:
                gates.append(("CX", int(parts[1]), int(parts[2])))
            else:
                raise ValueError(f"cannot parse gate line {ln!r}")
        return cls.from_gates(n, gates)

    # Pauli conjugation ----------------------------------------------------

    def conjugate(self, p: PauliString) -> PauliString:
        """``C p C^dagger``."""
        return PauliString(p.n, *_propagate(p.xs, p.zs, p.phase, self.ops.tolist(),
                                            self.a.tolist(), self.b.tolist(), forward=True))

    def conjugate_inverse(self, p: PauliString) -> PauliString:
        """``C^dagger p C``."""
        return PauliString(p.n, *_propagate(p.xs, p.zs, p.phase, self.ops[::-1].tolist(),
                                            self.a[::-1].tolist(), self.b[::-1].tolist(),
                                            forward=False))

    # dense action ---------------------------------------------------------

    @cached_property
    def _unitary(self) -> np.ndarray:
        if self.n > UNITARY_MAX_QUBITS:
            raise ValueError(f"dense unitary limited to {UNITARY_MAX_QUBITS} qubits")
        u = np.eye(1 << self.n, dtype=complex)
        for op, a, b in zip(self.ops.tolist(), self.a.tolist(), self.b.tolist()):
            u = _apply_gate(u, self.n, op, a, b)
        u.setflags(write=False)
        return u

    def unitary(self) -> np.ndarray:
        return self._unitary

    def apply(self, amps: np.ndarray, qubits: Sequence[int] | None = None,
              inverse: bool = False) -> np.ndarray:
        """Apply the circuit (or its inverse) to register positions ``qubits``."""
        qubits = list(range(self.n)) if qubits is None else list(qubits)
        if self.n <= UNITARY_MAX_QUBITS:
            u = self.unitary()
            return apply_unitary(amps, u.conj().T if inverse else u, qubits)
        circ = self.inverse() if inverse else self
        total = amps.size.bit_length() - 1
        out = np.array(amps, dtype=complex).reshape(-1, 1)
        for op, a, b in zip(circ.ops.tolist(), circ.a.tolist(), circ.b.tolist()):
            out = _apply_gate(out, total, op, qubits[a], qubits[b] if b >= 0 else -1)
        return out.ravel()


def _propagate(xs, zs, k, ops, qa, qb, forward: bool):
    for op, a, b in zip(ops, qa, qb):
        if op == CX:
            if xs >> a & 1:
                xs ^= 1 << b
            if zs >> b & 1:
                zs ^= 1 << a
            continue
        bit = 1 << a
        x = xs & bit
        if op == H:
            z = zs & bit
            if x and z:
                k += 2
            elif x or z:
                xs ^= bit
                zs ^= bit
        elif x:  # S or S^dagger
            k += 1 if forward else 3
            zs ^= bit
    return xs, zs, k


def _apply_gate(u: np.ndarray, n: int, op: int, a: int, b: int) -> np.ndarray:
    """Left-multiply the rows of a C-contiguous ``u`` by one gate, in place.

    Row index bits are the register qubits, big-endian. Reshaping exposes the
    bit of qubit ``a`` as an axis, so every gate is a few strided views.
    """
    v = u.reshape(1 << a, 2, -1)
    if op == S:
        v[:, 1] *= 1j
    elif op == H:
        t0 = v[:, 0].copy()
        v[:, 0] += v[:, 1]
        v[:, 1] *= -1
        v[:, 1] += t0
        u *= _SQ2
    else:
        if b > a:
            w = v[:, 1].reshape(1 << a, 1 << (b - a - 1), 2, -1)
            lo, hi = w[:, :, 0], w[:, :, 1]
        else:
            w = u.reshape(1 << b, 2, 1 << (a - b - 1), 2, -1)[:, :, :, 1]
            lo, hi = w[:, 0], w[:, 1]
        tmp = lo.copy()
        lo[...] = hi
        hi[...] = tmp
    return u


# ---------------------------------------------------------------------------
# codes


def _seed_from_bits(bits: Sequence[int]) -> int:
    v = 1  # leading 1 keeps the bit length in the integer
    for b in bits:
        v = (v << 1) | int(b)
    return v


def random_clifford(n: int, n_gates: int, rng: np.random.Generator) -> CliffordCircuit:
    """Uniform draws from {H, S, CX} on uniformly chosen qubits."""
    if n == 1:
        ops = rng.integers(0, 2, size=n_gates)
        a = np.zeros(n_gates, dtype=np.int64)
        b = np.full(n_gates, -1)
    else:
        ops = rng.integers(0, 3, size=n_gates)
        a = rng.integers(0, n, size=n_gates)
        b = (a + 1 + rng.integers(0, n - 1, size=n_gates)) % n
        b = np.where(ops == CX, b, -1)
    return CliffordCircuit(n, ops.astype(np.int8), a, b)


@dataclass(frozen=True)
class PurityTestingCode:
    m: int
    s: int
    z: tuple[int, ...]
    circuit: CliffordCircuit = field(repr=False)
    family: int = 0

    @property
    def n(self) -> int:
        return self.m + self.s

    @property
    def ancillas(self) -> list[int]:
        return list(range(self.m, self.n))

    def stabilizers(self) -> list[PauliString]:
        return [self.circuit.conjugate(PauliString.single(self.n, q, "Z")) for q in self.ancillas]

    def syndrome_flips(self, attack: PauliString) -> list[int]:
        """Syndrome bits flipped by a Pauli error on the channel."""
        back = self.circuit.conjugate_inverse(attack)
        return [back.xs >> q & 1 for q in self.ancillas]

    def detects(self, attack: PauliString) -> bool:
        back = self.circuit.conjugate_inverse(attack)
        return (back.xs >> self.m) != 0

    def residual(self, attack: PauliString) -> PauliString:
        """Error left on the payload after decoding, phase dropped."""
        back = self.circuit.conjugate_inverse(attack)
        return back.restrict(range(self.m))


def sample_code(m: int, s: int, z: Sequence[int], family: int = 0) -> PurityTestingCode:
    """Deterministic pseudorandom code selected by the secret seed ``z``.

    ``family`` names the public code family agreed before the run; the
    circuit is a function of ``(m, s, family, z)`` only.
    """
    if m < 1 or s < 1:
        raise ValueError("need m >= 1 and s >= 1")
    z = tuple(int(b) for b in z)
    if not z:
        raise ValueError("code seed z must be nonempty")
    n = m + s
    rng = np.random.default_rng(np.random.SeedSequence([m, s, int(family), _seed_from_bits(z)]))
    return PurityTestingCode(m, s, z, random_clifford(n, 4 * n * n, rng), int(family))


# ---------------------------------------------------------------------------
# dense encode / verify


class Verification(NamedTuple):
    accepted: bool
    payload: StateVector | DensityMatrix
    syndrome: tuple[int, ...]
    p_accept: float


def encode(payload, code: PurityTestingCode, y: Sequence[int]):
    """Append ancillas ``|y>`` to the payload and apply the code circuit."""
    if len(y) != code.s:
        raise ValueError(f"syndrome must have {code.s} bits, got {len(y)}")
    if payload.n_qubits != code.m:
        raise ValueError(f"payload has {payload.n_qubits} qubits, code expects {code.m}")
    anc = StateVector.basis(y)
    layout = SubsystemLayout(("channel",), (code.n,))
    u = code.circuit.unitary()
    if isinstance(payload, StateVector):
        return StateVector(u @ np.kron(payload.amplitudes, anc.amplitudes), layout)
    rho = np.kron(as_density(payload).mat, anc.density().mat)
    return DensityMatrix.make(u @ rho @ u.conj().T, layout, check_psd=False)


def decode_and_verify(received, code: PurityTestingCode, y: Sequence[int],
                      rng: np.random.Generator | None = None) -> Verification:
    """Undo the code, measure the ancillas, accept iff the outcome equals ``y``.

    The payload is returned on both branches.
    """
    if len(y) != code.s:
        raise ValueError(f"syndrome must have {code.s} bits, got {len(y)}")
    if received.n_qubits != code.n:
        raise ValueError(f"received {received.n_qubits} qubits, code has {code.n}")
    rng = np.random.default_rng(0) if rng is None else rng
    u = code.circuit.unitary()
    anc = code.ancillas
    payload_layout = SubsystemLayout.qubits(code.m)
    if isinstance(received, StateVector):
        amps = u.conj().T @ received.amplitudes
        p = outcome_probabilities(amps, anc)
        bits, post, _ = measure(amps, anc, rng)
        block = post.reshape(1 << code.m, 1 << code.s)[:, int("".join(map(str, bits)), 2)]
        payload = StateVector.normalised(block, payload_layout)
    else:
        rho = u.conj().T @ as_density(received).mat @ u
        d_m, d_s = 1 << code.m, 1 << code.s
        blocks = rho.reshape(d_m, d_s, d_m, d_s)
        p = np.einsum("ajaj->j", blocks).real
        p = np.clip(p, 0, None)
        idx = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        idx = min(idx, p.size - 1)
        while p[idx] <= 0 and idx > 0:
            idx -= 1
        bits = [idx >> (code.s - 1 - i) & 1 for i in range(code.s)]
        block = blocks[:, idx, :, idx]
        payload = DensityMatrix.make(block / np.trace(block).real, payload_layout, check_psd=False)
    y_idx = int("".join(map(str, y)), 2)
    return Verification(tuple(bits) == tuple(int(b) for b in y), payload, tuple(bits),
                        float(p[y_idx] / p.sum()))


# ---------------------------------------------------------------------------
# soundness


def detection_probability(m: int, s: int, attack: PauliString, trials: int, seed: int,
                          seed_bits: int = 64) -> tuple[float, float]:
    """Fraction of random codes whose stabilizers catch ``attack``.

    Codes are drawn by sampling ``seed_bits``-bit seeds ``z`` uniformly. The
    check per code is the exact symplectic test. Returns the estimate and
    the 95% confidence half-width.
    """
    if attack.n != m + s:
        raise ValueError(f"attack acts on {attack.n} qubits, code has {m + s}")
    if trials < 1:
        raise ValueError("trials must be positive")
    if attack.is_identity(up_to_phase=False):
        raise ValueError("identity attack is trivially undetectable")
    if attack.is_identity():
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        z = rng.integers(0, 2, size=seed_bits).tolist()
        if sample_code(m, s, z).detects(attack):
            hits += 1
    est = hits / trials
    lo, hi = binomial_ci(hits, trials, 0.95)
    return est, max(est - lo, hi - est)


def project_syndrome(amps: np.ndarray, code: PurityTestingCode, y: Sequence[int],
                     offset: int = 0) -> tuple[np.ndarray, float]:
    """Unnormalised accept-branch projection on a register holding the channel at ``offset``."""
    anc = [offset + q for q in code.ancillas]
    return project(amps, anc, y)
