"""Pauli strings, key material, the quantum one-time pad and the bit-flip pad.

A :class:`PauliString` on ``n`` qubits stores ``i**phase * prod_q X_q^{x_q} Z_q^{z_q}``
with the X factor written to the left of the Z factor on every qubit, so the
operator applies Z first and then X. Bit ``q`` of the ``xs``/``zs`` masks
belongs to qubit ``q``; qubit 0 is the most significant qubit of the dense
matrix (see :mod:`qotp.qcore`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .qcore import DensityMatrix, StateVector, SubsystemLayout, as_density

_PHASES = (1, 1j, -1, -1j)


def _parity(v) -> np.ndarray:
    return (np.bitwise_count(v) & 1).astype(np.int64)


@dataclass(frozen=True)
class PauliString:
    n: int
    xs: int = 0
    zs: int = 0
    phase: int = 0  # exponent k of i**k

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        limit = 1 << self.n
        if not (0 <= self.xs < limit and 0 <= self.zs < limit):
            raise ValueError(f"masks do not fit in {self.n} qubits")
        object.__setattr__(self, "phase", self.phase % 4)

    # construction ---------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse labels such as ``"XIZY"``, ``"-iXZ"`` or ``"+Y"``.

        Character ``q`` of the letter part acts on qubit ``q``.
        """
        phase = 0
        body = label.strip()
        if body.startswith(("+", "-")):
            phase = 0 if body[0] == "+" else 2
            body = body[1:]
        if body.startswith("i"):
            phase += 1
            body = body[1:]
        xs = zs = 0
        for q, ch in enumerate(body):
            if ch == "X":
                xs |= 1 << q
            elif ch == "Z":
                zs |= 1 << q
            elif ch == "Y":
                # Y = i X Z
                xs |= 1 << q
                zs |= 1 << q
                phase += 1
            elif ch != "I":
                raise ValueError(f"bad Pauli letter {ch!r} in {label!r}")
        return cls(len(body), xs, zs, phase)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        if not 0 <= qubit < n:
            raise ValueError(f"qubit {qubit} out of range for n={n}")
        return cls.from_label("I" * qubit + letter + "I" * (n - qubit - 1))

    @classmethod
    def from_bits(cls, xbits: Sequence[int], zbits: Sequence[int], phase: int = 0) -> "PauliString":
        if len(xbits) != len(zbits):
            raise ValueError("x and z bit vectors differ in length")
        xs = sum(1 << q for q, b in enumerate(xbits) if b)
        zs = sum(1 << q for q, b in enumerate(zbits) if b)
        return cls(len(xbits), xs, zs, phase)

    # algebra ----------------------------------------------------------------

    @property
    def coefficient(self) -> complex:
        return _PHASES[self.phase]

    @property
    def weight(self) -> int:
        return (self.xs | self.zs).bit_count()

    def is_identity(self, up_to_phase: bool = True) -> bool:
        support_free = self.xs == 0 and self.zs == 0
        return support_free if up_to_phase else support_free and self.phase == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        if self.n != other.n:
            raise ValueError("Pauli strings act on different qubit counts")
        # Z^a X^b = (-1)^{ab} X^b Z^a when moving the right X factors left
        swap = (self.zs & other.xs).bit_count()
        return PauliString(self.n, self.xs ^ other.xs, self.zs ^ other.zs,
                           self.phase + other.phase + 2 * swap)

    def __neg__(self) -> "PauliString":
        return PauliString(self.n, self.xs, self.zs, self.phase + 2)

    def adjoint(self) -> "PauliString":
        # (X^x Z^z)^dagger = Z^z X^x = (-1)^{x.z} X^x Z^z
        return PauliString(self.n, self.xs, self.zs,
                           -self.phase + 2 * (self.xs & self.zs).bit_count())

    def symplectic(self, other: "PauliString") -> int:
        """0 if the two strings commute, 1 if they anticommute."""
        return ((self.xs & other.zs).bit_count() + (self.zs & other.xs).bit_count()) & 1

    def commutes(self, other: "PauliString") -> bool:
        return self.symplectic(other) == 0

    def restrict(self, qubits: Sequence[int]) -> "PauliString":
        """Tensor factor on ``qubits`` (phase kept, bit order follows ``qubits``)."""
        xs = sum(1 << k for k, q in enumerate(qubits) if self.xs >> q & 1)
        zs = sum(1 << k for k, q in enumerate(qubits) if self.zs >> q & 1)
        return PauliString(len(qubits), xs, zs, self.phase)

    def xbits(self) -> list[int]:
        return [self.xs >> q & 1 for q in range(self.n)]

    def zbits(self) -> list[int]:
        return [self.zs >> q & 1 for q in range(self.n)]

    @property
    def label(self) -> str:
        # fold the i from every Y back into the letter
        phase = self.phase - (self.xs & self.zs).bit_count()
        letters = []
        for q in range(self.n):
            x, z = self.xs >> q & 1, self.zs >> q & 1
            letters.append("IZXY"[2 * x + z])
        prefix = {0: "+", 1: "+i", 2: "-", 3: "-i"}[phase % 4]
        return prefix + "".join(letters)

    def __str__(self) -> str:
        return self.label

    # dense action ---------------------------------------------------------

    def to_matrix(self) -> np.ndarray:
        x = np.array([[0, 1], [1, 0]], dtype=complex)
        z = np.array([[1, 0], [0, -1]], dtype=complex)
        out = np.array([[self.coefficient]], dtype=complex)
        for q in range(self.n):
            f = np.eye(2, dtype=complex)
            if self.xs >> q & 1:
                f = f @ x
            if self.zs >> q & 1:
                f = f @ z
            out = np.kron(out, f)
        return out

    def index_masks(self, qubits: Sequence[int] | None, total: int) -> tuple[int, int]:
        """X and Z masks over basis indices of a ``total``-qubit register."""
        qubits = range(self.n) if qubits is None else qubits
        if len(qubits) != self.n:
            raise ValueError(f"Pauli on {self.n} qubits placed on {len(qubits)} positions")
        xm = zm = 0
        for k, q in enumerate(qubits):
            bit = 1 << (total - 1 - q)
            if self.xs >> k & 1:
                xm |= bit
            if self.zs >> k & 1:
                zm |= bit
        return xm, zm


def apply_to_amplitudes(p: PauliString, amps: np.ndarray, qubits=None, axis: int = 0) -> np.ndarray:
    """Apply ``p`` along ``axis`` of an array indexed by register basis states."""
    dim = amps.shape[axis]
    total = dim.bit_length() - 1
    xm, zm = p.index_masks(qubits, total)
    idx = np.arange(dim, dtype=np.int64)
    shape = [1] * amps.ndim
    shape[axis] = dim
    sign = (1 - 2 * _parity(idx & zm)).reshape(shape)
    out = amps * sign
    out = np.take(out, idx ^ xm, axis=axis)
    return out * p.coefficient


def apply_pauli(p: PauliString, state, qubits=None):
    """``p|psi>`` for vectors, ``p rho p^dagger`` for density matrices."""
    if isinstance(state, StateVector):
        return StateVector(apply_to_amplitudes(p, state.amplitudes, qubits), state.layout)
    rho = as_density(state)
    m = apply_to_amplitudes(p, rho.mat, qubits, axis=0)
    m = np.conj(apply_to_amplitudes(p, np.conj(m), qubits, axis=1))
    return DensityMatrix.make(m, rho.layout, check_psd=False)


# ---------------------------------------------------------------------------
# key material


@dataclass(frozen=True)
class KeyString:
    """Bit string with named, disjoint segments that cover it exactly."""

    bits: tuple[int, ...]
    segments: Mapping[str, tuple[int, int]]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("key bits must be 0 or 1")
        spans = sorted(self.segments.values())
        pos = 0
        for start, stop in spans:
            if start != pos or stop < start:
                raise ValueError(f"segments {dict(self.segments)} do not tile the key")
            pos = stop
        if pos != len(bits):
            raise ValueError(f"segments cover {pos} bits, key has {len(bits)}")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "segments", dict(self.segments))

    @classmethod
    def for_protocol(cls, bits: Sequence[int], m: int, s: int) -> "KeyString":
        """Layout ``x`` (2m bits) | ``y`` (s bits) | ``z`` (s bits)."""
        if len(bits) != 2 * m + 2 * s:
            raise ValueError(f"key must have 2m+2s = {2 * m + 2 * s} bits, got {len(bits)}")
        return cls(tuple(bits), {"x": (0, 2 * m), "y": (2 * m, 2 * m + s),
                                 "z": (2 * m + s, 2 * m + 2 * s)})

    @classmethod
    def random(cls, m: int, s: int, rng: np.random.Generator) -> "KeyString":
        return cls.for_protocol(rng.integers(0, 2, size=2 * m + 2 * s).tolist(), m, s)

    @classmethod
    def plain(cls, bits: Sequence[int], name: str = "k") -> "KeyString":
        return cls(tuple(bits), {name: (0, len(bits))})

    def __len__(self) -> int:
        return len(self.bits)

    def segment(self, name: str) -> tuple[int, ...]:
        start, stop = self.segments[name]
        return self.bits[start:stop]

    def to_dict(self) -> dict:
        """Hex serialisation with segment offsets."""
        return {"length": len(self.bits), "hex": bits_to_hex(self.bits),
                "segments": {k: list(v) for k, v in self.segments.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "KeyString":
        return cls(hex_to_bits(d["hex"], d["length"]),
                   {k: tuple(v) for k, v in d["segments"].items()})


def bits_to_hex(bits: Sequence[int]) -> str:
    if not bits:
        return ""
    width = (len(bits) + 3) // 4
    return format(int("".join(map(str, bits)), 2), f"0{width}x")


def hex_to_bits(h: str, length: int) -> tuple[int, ...]:
    if length == 0:
        return ()
    return tuple(int(c) for c in format(int(h, 16), f"0{length}b"))


# ---------------------------------------------------------------------------
# one-time pads


def pauli_from_key(xseg: Sequence[int]) -> PauliString:
    """Pad operator for a 2m-bit key: qubit i gets Z^(b_2i), then X^(b_2i+1)."""
    if len(xseg) % 2:
        raise ValueError(f"one-time-pad key must have even length, got {len(xseg)}")
    return PauliString.from_bits(xseg[1::2], xseg[0::2])


def qotp_encrypt(state, xseg: Sequence[int], qubits=None):
    """Encrypt the qubits ``qubits`` (default: all) of ``state`` with key ``xseg``."""
    p = pauli_from_key(xseg)
    width = state.n_qubits if qubits is None else len(qubits)
    if p.n != width:
        raise ValueError(f"key of {len(xseg)} bits cannot pad {width} qubits")
    return apply_pauli(p, state, qubits)


def qotp_decrypt(state, xseg: Sequence[int], qubits=None):
    p = pauli_from_key(xseg)
    width = state.n_qubits if qubits is None else len(qubits)
    if p.n != width:
        raise ValueError(f"key of {len(xseg)} bits cannot pad {width} qubits")
    return apply_pauli(p.adjoint(), state, qubits)


def all_keys(nbits: int):
    return itertools.product((0, 1), repeat=nbits)


def key_average(state, qubits=None) -> DensityMatrix:
    """Uniform average of the encrypted state over every one-time-pad key."""
    rho = as_density(state)
    width = rho.n_qubits if qubits is None else len(qubits)
    acc = np.zeros_like(rho.mat)
    count = 0
    for key in all_keys(2 * width):
        acc += apply_pauli(pauli_from_key(key), rho, qubits).mat
        count += 1
    return DensityMatrix.make(acc / count, rho.layout, check_psd=False)


# ---------------------------------------------------------------------------
# entanglement protection

_S2 = 1 / np.sqrt(2)
BELL = {
    "phi+": np.array([_S2, 0, 0, _S2], dtype=complex),
    "phi-": np.array([_S2, 0, 0, -_S2], dtype=complex),
    "psi+": np.array([0, _S2, _S2, 0], dtype=complex),
    "psi-": np.array([0, _S2, -_S2, 0], dtype=complex),
}


def bell_state(name: str, labels=("A", "C")) -> StateVector:
    return StateVector(BELL[name], SubsystemLayout(tuple(labels), (1, 1)))


def singlets(n: int, alice: str = "A", claire: str = "C") -> StateVector:
    """n singlets with all of Alice's halves in ``alice`` and Claire's in ``claire``.

    Pair ``i`` is (alice qubit i, claire qubit i).
    """
    amps = np.ones(1, dtype=complex)
    for _ in range(n):
        amps = np.kron(amps, BELL["psi-"])
    # pairwise order A0 C0 A1 C1 ... -> A0 A1 ... C0 C1 ...
    t = amps.reshape((2,) * (2 * n))
    t = t.transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
    return StateVector(t.ravel(), SubsystemLayout((alice, claire), (n, n)))


def bitflip_protect(state, key: Sequence[int], alice: str = "A"):
    """X on Alice's qubit i iff key bit i is 1; other subsystems untouched."""
    layout = state.layout
    qubits = layout.qubit_indices([alice])
    if len(key) != len(qubits):
        raise ValueError(f"key has {len(key)} bits, Alice holds {len(qubits)} qubits")
    p = PauliString.from_bits(list(key), [0] * len(key))
    return apply_pauli(p, state, qubits)


def protected_average(state, flip_prob: float | Sequence[float] = 0.5,
                      alice: str = "A") -> DensityMatrix:
    """Average of :func:`bitflip_protect` over independent key bits.

    ``flip_prob`` is Pr(bit = 1), per qubit or shared.
    """
    rho = as_density(state)
    n = rho.layout.size(alice)
    probs = np.broadcast_to(np.asarray(flip_prob, dtype=float), (n,))
    acc = np.zeros_like(rho.mat)
    for key in all_keys(n):
        w = float(np.prod([p if b else 1 - p for p, b in zip(probs, key)]))
        if w:
            acc += w * bitflip_protect(rho, key, alice).mat
    return DensityMatrix.make(acc, rho.layout, check_psd=False)
