"""Protocol state machines and the adversary channel.

Every run takes an integer seed. Independent random streams for the input
state, key material, public code family, adversary and measurements are
spawned from it, so a run is fully reproducible and two protocols driven by
the same seed see the same keys and the same attack samples.

Dense runs keep the whole register (payload, ancillas, Eve's probe qubits and,
for the modified scheme, the coherent key register) as one state vector.
Stabilizer runs track the attack as a Pauli frame through the code.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import codes
from .codes import PurityTestingCode, sample_code
from .keyring import recycled_length
from .pauli import KeyString, PauliString, apply_to_amplitudes, pauli_from_key
from .qcore import (MAX_STATEVECTOR_QUBITS, CapacityError, DensityMatrix, StateVector,
                    SubsystemLayout, apply_unitary, measure, project, random_state,
                    reduced_from_vector, trace_distance)
from .stabilizer import StabilizerState, error_fidelity, random_stabilizer_state

PROTOCOLS = ("sqas", "modified_qas", "interactive", "teleport", "secret_sharing",
             "protect_entanglement")
BACKENDS = ("dense", "stabilizer")
ATTACKS = ("none", "fixed_pauli", "random_pauli", "steal_replace", "measure_resend",
           "entangling_probe")
PAULI_ATTACKS = ("none", "fixed_pauli", "random_pauli")

MAX_EVE_QUBITS = 2
MAX_MODIFIED_M = 2
MAX_MODIFIED_S = 2
MAX_TELEPORT_M = 2


@dataclass(frozen=True)
class SimulationParams:
    m: int
    s: int
    backend: str = "dense"
    seed: int = 0
    trials: int = 1
    recycle: bool = True

    def __post_init__(self):
        if self.m < 1 or self.s < 1:
            raise ValueError("need m >= 1 and s >= 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def n(self) -> int:
        return self.m + self.s


# ---------------------------------------------------------------------------
# adversary


@dataclass(frozen=True)
class AttackModel:
    """Channel adversary.

    ``paulis`` lists ``(letter, qubit)`` factors of a fixed Pauli so the
    same attack can be placed on codes of any length. ``qubits`` selects the
    channel qubits for steal/measure/probe attacks (empty means all for
    measure-resend).
    """

    kind: str = "none"
    paulis: tuple[tuple[str, int], ...] = ()
    p: float = 0.0
    qubits: tuple[int, ...] = ()
    basis: str = "Z"

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "fixed_pauli" and not self.paulis:
            raise ValueError("fixed_pauli needs at least one Pauli factor")
        if self.kind == "random_pauli" and not 0.0 <= self.p <= 1.0:
            raise ValueError("random_pauli probability must lie in [0, 1]")
        if self.kind == "measure_resend" and self.basis not in ("Z", "X"):
            raise ValueError("measure_resend basis must be Z or X")
        if self.kind == "entangling_probe" and not 1 <= len(self.qubits) <= MAX_EVE_QUBITS:
            raise ValueError(f"entangling probe uses 1..{MAX_EVE_QUBITS} Eve qubits")

    @classmethod
    def parse(cls, text: str) -> "AttackModel":
        """Parse ``kind[:arg]``.

        ``none``, ``fixed_pauli:X0`` or ``fixed_pauli:X0Z3``, ``random_pauli:0.1``,
        ``steal_replace:0,1``, ``measure_resend:Z`` or ``measure_resend:X@0,2``,
        ``entangling_probe:0`` or ``entangling_probe:0,1``.
        """
        kind, _, arg = text.strip().partition(":")
        if kind == "none":
            return cls()
        if kind == "fixed_pauli":
            factors = re.findall(r"([XYZ])(\d+)", arg)
            if not factors or "".join(f + q for f, q in factors) != arg:
                raise ValueError(f"cannot parse Pauli factors {arg!r}")
            return cls(kind, paulis=tuple((f, int(q)) for f, q in factors))
        if kind == "random_pauli":
            return cls(kind, p=float(arg))
        if kind == "steal_replace":
            return cls(kind, qubits=_int_list(arg))
        if kind == "measure_resend":
            basis, _, qs = (arg or "Z").partition("@")
            return cls(kind, basis=basis or "Z", qubits=_int_list(qs) if qs else ())
        if kind == "entangling_probe":
            return cls(kind, qubits=_int_list(arg or "0"))
        raise ValueError(f"unknown attack kind {kind!r}")

    def __str__(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "fixed_pauli":
            return "fixed_pauli:" + "".join(f"{f}{q}" for f, q in self.paulis)
        if self.kind == "random_pauli":
            return f"random_pauli:{self.p}"
        if self.kind == "measure_resend":
            qs = ",".join(map(str, self.qubits))
            return f"measure_resend:{self.basis}" + (f"@{qs}" if qs else "")
        return f"{self.kind}:" + ",".join(map(str, self.qubits))

    @property
    def eve_qubits(self) -> int:
        return len(self.qubits) if self.kind == "entangling_probe" else 0

    @property
    def is_pauli(self) -> bool:
        return self.kind in PAULI_ATTACKS

    def max_qubit(self) -> int:
        qs = [q for _, q in self.paulis] + list(self.qubits)
        return max(qs) if qs else -1

    def sample_pauli(self, n: int, rng: np.random.Generator) -> PauliString:
        """Pauli applied by a Pauli-type attack on ``n`` channel qubits."""
        if self.kind == "none":
            return PauliString.identity(n)
        if self.kind == "fixed_pauli":
            p = PauliString.identity(n)
            for letter, q in self.paulis:
                p = p * PauliString.single(n, q, letter)
            return p
        if self.kind == "random_pauli":
            hit = rng.random(n) < self.p
            letters = rng.integers(0, 3, size=n)
            label = "".join("XYZ"[l] if h else "I" for h, l in zip(hit, letters))
            return PauliString.from_label(label)
        raise ValueError(f"{self.kind} is not a Pauli attack")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def apply_attack(amps: np.ndarray, attack: AttackModel, channel: Sequence[int],
                 eve: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Act on the channel positions (and Eve's probe qubits) of a dense register."""
    channel = list(channel)
    if attack.max_qubit() >= len(channel):
        raise ValueError(f"attack touches qubit {attack.max_qubit()} "
                         f"but the channel has {len(channel)} qubits")
    if attack.is_pauli:
        p = attack.sample_pauli(len(channel), rng)
        return apply_to_amplitudes(p, amps, channel)
    if attack.kind == "steal_replace":
        # Eve keeps the qubit; measuring and resetting unravels the trace-out
        for q in attack.qubits:
            pos = channel[q]
            (bit,), amps, _ = measure(amps, [pos], rng)
            if bit:
                amps = apply_to_amplitudes(PauliString.from_label("X"), amps, [pos])
        return amps
    if attack.kind == "measure_resend":
        targets = attack.qubits or tuple(range(len(channel)))
        for q in targets:
            pos = channel[q]
            if attack.basis == "X":
                amps = apply_unitary(amps, _HAD, [pos])
            _, amps, _ = measure(amps, [pos], rng)
            if attack.basis == "X":
                amps = apply_unitary(amps, _HAD, [pos])
        return amps
    if attack.kind == "entangling_probe":
        if len(eve) < len(attack.qubits):
            raise ValueError("register has too few Eve qubits for the probe")
        for i, q in enumerate(attack.qubits):
            amps = apply_unitary(amps, _CNOT, [channel[q], eve[i]])
        return amps
    raise ValueError(f"unhandled attack {attack.kind}")


# ---------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    protocol: str
    seed: int
    accepted: bool
    fidelity_out: float
    qubits_sent: int
    cbits_forward: int
    cbits_back: int
    key_consumed_bits: int
    key_recycled_bits: int
    message_size: int
    eve_key_product_distance: float | None = None
    analysis: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("qubits_sent", "cbits_forward", "cbits_back", "key_consumed_bits",
                     "key_recycled_bits", "message_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        self.fidelity_out = float(min(1.0, max(0.0, self.fidelity_out)))

    @property
    def message_delivered(self) -> int:
        return self.message_size if self.accepted else 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        missing = names - set(d) - {"analysis", "eve_key_product_distance"}
        extra = set(d) - names
        if missing or extra:
            raise ValueError(f"run record schema mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        return cls(**d)


RUN_RECORD_FIELDS = tuple(f.name for f in fields(RunRecord))


# ---------------------------------------------------------------------------
# randomness


@dataclass
class Streams:
    input: np.random.Generator
    key: np.random.Generator
    code: np.random.Generator
    attack: np.random.Generator
    measure: np.random.Generator


def make_streams(seed: int) -> Streams:
    children = np.random.SeedSequence(int(seed)).spawn(5)
    return Streams(*(np.random.default_rng(c) for c in children))


def trial_seed(seed: int, trial: int) -> int:
    """Per-trial seed from ``seed XOR trial`` through a SeedSequence."""
    words = np.random.SeedSequence(int(seed) ^ int(trial)).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def _family(streams: Streams) -> int:
    return int(streams.code.integers(0, 2**63))


# ---------------------------------------------------------------------------
# shared helpers


def _check_dense(n_total: int, what: str) -> None:
    if n_total > MAX_STATEVECTOR_QUBITS:
        raise CapacityError(f"{what} needs {n_total} qubits; dense statevector cap is "
                            f"{MAX_STATEVECTOR_QUBITS}")


def _check_code_width(n: int) -> None:
    if n > codes.UNITARY_MAX_QUBITS and n > MAX_STATEVECTOR_QUBITS:
        raise CapacityError(f"code on {n} qubits exceeds dense cap {MAX_STATEVECTOR_QUBITS}")


def _as_dense_input(state, m: int) -> StateVector:
    if isinstance(state, StabilizerState):
        state = state.to_statevector()
    if not isinstance(state, StateVector):
        raise TypeError("dense runs take a StateVector or StabilizerState input")
    if state.n_qubits != m:
        raise ValueError(f"input has {state.n_qubits} qubits, protocol expects m={m}")
    return state


def _key_parts(key: KeyString, m: int, s: int):
    if len(key) != 2 * m + 2 * s:
        raise ValueError(f"key must have 2m+2s = {2 * m + 2 * s} bits, got {len(key)}")
    try:
        x, y, z = key.segment("x"), key.segment("y"), key.segment("z")
    except KeyError as exc:
        raise ValueError(f"key lacks segment {exc}") from None
    if len(x) != 2 * m or len(y) != s or len(z) != s:
        raise ValueError("key segments do not match the (2m, s, s) layout")
    return list(x), list(y), list(z)


def _payload_fidelity(amps: np.ndarray, psi: StateVector, payload: Sequence[int]) -> float:
    """<psi| rho_payload |psi> of a normalised register state, rest traced out."""
    total = amps.size.bit_length() - 1
    rest = [q for q in range(total) if q not in set(payload)]
    t = amps.reshape((2,) * total).transpose(list(payload) + rest)
    block = t.reshape(psi.dim, -1)
    f = np.linalg.norm(psi.amplitudes.conj() @ block) ** 2
    return float(min(1.0, f))


def _bits_index(bits: Sequence[int]) -> int:
    return int("".join(str(int(b)) for b in bits) or "0", 2)


@dataclass
class _ChannelResult:
    accepted: bool
    fidelity: float
    syndrome: tuple[int, ...]


def _dense_authenticated_transfer(psi: StateVector, pad: Sequence[int], code: PurityTestingCode,
                                  y: Sequence[int], attack: AttackModel,
                                  streams: Streams) -> tuple[_ChannelResult, np.ndarray]:
    """Encrypt with ``pad``, encode, attack, verify, decrypt on one register.

    Returns the verification result and the post-measurement register
    (channel qubits then Eve's probe qubits) with the payload decrypted.
    """
    m, n = code.m, code.n
    e = attack.eve_qubits
    _check_dense(n + e, "run")
    enc = apply_to_amplitudes(pauli_from_key(pad), psi.amplitudes)
    amps = np.kron(enc, StateVector.basis(y).amplitudes)
    amps = code.circuit.apply(amps)
    if e:
        eve0 = np.zeros(1 << e, dtype=complex)
        eve0[0] = 1.0
        amps = np.kron(amps, eve0)
    channel = list(range(n))
    eve = list(range(n, n + e))
    amps = apply_attack(amps, attack, channel, eve, streams.attack)
    amps = code.circuit.apply(amps, channel, inverse=True)
    bits, amps, _ = measure(amps, code.ancillas, streams.measure)
    amps = apply_to_amplitudes(pauli_from_key(pad).adjoint(), amps, list(range(m)))
    fid = _payload_fidelity(amps, psi, list(range(m)))
    return _ChannelResult(tuple(bits) == tuple(y), fid, tuple(bits)), amps


def _pauli_frame_transfer(state, code: PurityTestingCode, attack: AttackModel,
                          streams: Streams) -> _ChannelResult:
    if not attack.is_pauli:
        raise ValueError(f"stabilizer backend supports only Pauli attacks, not {attack.kind}")
    if attack.max_qubit() >= code.n:
        raise ValueError(f"attack touches qubit {attack.max_qubit()} "
                         f"but the channel has {code.n} qubits")
    err = attack.sample_pauli(code.n, streams.attack)
    back = code.circuit.conjugate_inverse(err)
    flips = tuple(back.xs >> q & 1 for q in code.ancillas)
    residual = back.restrict(range(code.m))
    return _ChannelResult(not any(flips), error_fidelity(state, residual), flips)


def _transfer(params: SimulationParams, state, pad, code, y, attack, streams) -> _ChannelResult:
    if params.backend == "stabilizer":
        return _pauli_frame_transfer(state, code, attack, streams)
    psi = _as_dense_input(state, params.m)
    return _dense_authenticated_transfer(psi, pad, code, y, attack, streams)[0]


# ---------------------------------------------------------------------------
# protocols


def run_sqas(params: SimulationParams, input_state, key: KeyString, attack: AttackModel,
             seed: int | None = None) -> RunRecord:
    """One-way authenticated transfer with a pre-shared ``x|y|z`` key."""
    seed = params.seed if seed is None else seed
    m, s = params.m, params.s
    x, y, z = _key_parts(key, m, s)
    streams = make_streams(seed)
    family = _family(streams)
    code = sample_code(m, s, z, family)
    res = _transfer(params, input_state, x, code, y, attack, streams)
    recycled = recycled_length(m, s, res.accepted) if params.recycle else 0
    return RunRecord(
        protocol="sqas", seed=seed, accepted=res.accepted, fidelity_out=res.fidelity,
        qubits_sent=params.n, cbits_forward=0, cbits_back=1 if params.recycle else 0,
        key_consumed_bits=2 * m + 2 * s, key_recycled_bits=recycled, message_size=m,
        analysis={"code_family": family, "syndrome": list(res.syndrome)})


def run_interactive(params: SimulationParams, input_state, attack: AttackModel,
                    seed: int | None = None) -> RunRecord:
    """Fresh ``x, y, z`` per run, disclosed publicly after Bob's receipt."""
    seed = params.seed if seed is None else seed
    m, s = params.m, params.s
    streams = make_streams(seed)
    key = KeyString.random(m, s, streams.key)
    x, y, z = _key_parts(key, m, s)
    family = _family(streams)
    code = sample_code(m, s, z, family)
    res = _transfer(params, input_state, x, code, y, attack, streams)
    return RunRecord(
        protocol="interactive", seed=seed, accepted=res.accepted, fidelity_out=res.fidelity,
        qubits_sent=params.n,
        # z and y before verification, x only on accept
        cbits_forward=len(z) + len(y) + (len(x) if res.accepted else 0),
        cbits_back=1, key_consumed_bits=0, key_recycled_bits=0, message_size=m,
        analysis={"code_family": family, "syndrome": list(res.syndrome)})


def run_modified_qas(params: SimulationParams, input_state, authkey_yz: KeyString,
                     attack: AttackModel, seed: int | None = None) -> RunRecord:
    """Key register held coherently; measured only if Bob accepts.

    The record's ``eve_key_product_distance`` is the trace distance between
    the joint (key register, Eve) state of the realised branch and the
    product of its marginals, taken before the key register is measured.
    ``analysis`` carries the exact accept probability and the same distance
    conditioned on acceptance, together with ``eps_accept``: one minus the
    overlap of the accepted state with the undisturbed key/payload state.
    """
    if params.backend != "dense":
        raise ValueError("the modified scheme needs the dense backend")
    m, s = params.m, params.s
    if m > MAX_MODIFIED_M or s > MAX_MODIFIED_S:
        raise CapacityError(f"modified scheme limited to m <= {MAX_MODIFIED_M}, "
                            f"s <= {MAX_MODIFIED_S} on the dense backend")
    seed = params.seed if seed is None else seed
    if len(authkey_yz) != 2 * s:
        raise ValueError(f"authentication key must have 2s = {2 * s} bits")
    y, z = list(authkey_yz.bits[:s]), list(authkey_yz.bits[s:])
    psi = _as_dense_input(input_state, m)
    streams = make_streams(seed)
    family = _family(streams)
    code = sample_code(m, s, z, family)
    n, e, k = params.n, attack.eve_qubits, 2 * m
    _check_dense(k + n + e, "modified scheme")

    # sum_x |x> P_x|psi> / 2^m, then ancillas |y> and Eve |0>
    rows = np.array([apply_to_amplitudes(pauli_from_key(xb), psi.amplitudes)
                     for xb in _all_bits(k)]) / (1 << m)
    omega = rows.ravel()  # ideal key/payload state
    amps = np.kron(omega, StateVector.basis(y).amplitudes)
    if e:
        eve0 = np.zeros(1 << e, dtype=complex)
        eve0[0] = 1.0
        amps = np.kron(amps, eve0)
    channel = list(range(k, k + n))
    eve = list(range(k + n, k + n + e))
    amps = code.circuit.apply(amps, channel)
    amps = apply_attack(amps, attack, channel, eve, streams.attack)
    amps = code.circuit.apply(amps, channel, inverse=True)

    anc = [k + q for q in code.ancillas]
    acc_amps, p_acc = project(amps, anc, y)
    accepted = p_acc > 1e-15 and streams.measure.random() < p_acc
    layout = SubsystemLayout(("K", "B", "A'", "E"), (k, m, s, e))

    analysis = {"code_family": family, "p_accept": p_acc}
    if p_acc > 1e-15:
        acc = acc_amps / math.sqrt(p_acc)
        d_acc = _key_eve_distance(acc, layout, e)
        # overlap with omega (x) anything on the ancilla/Eve side
        block = acc.reshape(1 << (k + m), -1)
        eps = max(0.0, 1.0 - float(np.linalg.norm(omega.conj() @ block) ** 2))
        analysis.update(eve_distance_accept=d_acc, eps_accept=eps,
                        psi_plus_overlap=1.0 - eps, product_bound=min(1.0, 3 * math.sqrt(eps)))
    if accepted:
        branch = acc
        distance = analysis["eve_distance_accept"]
        xbits, branch, _ = measure(branch, list(range(k)), streams.measure)
        branch = apply_to_amplitudes(pauli_from_key(xbits).adjoint(), branch,
                                     list(range(k, k + m)))
        fid = _payload_fidelity(branch, psi, list(range(k, k + m)))
    else:
        rej = amps - acc_amps
        norm = np.linalg.norm(rej)
        branch = rej / norm if norm > 0 else amps
        distance = _key_eve_distance(branch, layout, e)
        # key register discarded unmeasured; payload stays encrypted
        fid = _payload_fidelity(branch, psi, list(range(k, k + m)))
    return RunRecord(
        protocol="modified_qas", seed=seed, accepted=bool(accepted), fidelity_out=fid,
        qubits_sent=n, cbits_forward=0, cbits_back=1 if params.recycle else 0,
        key_consumed_bits=2 * m + 2 * s,
        key_recycled_bits=recycled_length(m, s, bool(accepted)) if params.recycle else 0,
        message_size=m, eve_key_product_distance=distance, analysis=analysis)


def _all_bits(k: int):
    for i in range(1 << k):
        yield [i >> (k - 1 - j) & 1 for j in range(k)]


def _key_eve_distance(amps: np.ndarray, layout: SubsystemLayout, e: int) -> float:
    if e == 0:
        return 0.0
    psi = StateVector(amps / np.linalg.norm(amps), layout)
    joint = reduced_from_vector(psi, ["K", "E"])
    k_dim = 1 << layout.size("K")
    e_dim = 1 << e
    t = joint.mat.reshape(k_dim, e_dim, k_dim, e_dim)
    rho_k = np.einsum("aebe->ab", t)
    rho_e = np.einsum("aeaf->ef", t)
    return trace_distance(joint.mat, np.kron(rho_k, rho_e))


def run_teleport_baseline(params: SimulationParams, input_state, attack_on_epr: AttackModel,
                          seed: int | None = None, verify: bool | None = None) -> RunRecord:
    """Teleportation over EPR pairs whose halves cross the attacked channel.

    With ``verify`` (default: whenever there is an attack) ``s`` extra pairs
    are sent and both ends measure the syndrome of a fresh public code before
    teleporting; without it only the ``m`` message pairs are sent.
    """
    if params.backend != "dense":
        raise ValueError("teleportation baseline needs the dense backend")
    m, s = params.m, params.s
    if m > MAX_TELEPORT_M:
        raise CapacityError(f"teleportation baseline limited to m <= {MAX_TELEPORT_M}")
    seed = params.seed if seed is None else seed
    verify = attack_on_epr.kind != "none" if verify is None else verify
    psi = _as_dense_input(input_state, m)
    streams = make_streams(seed)
    pairs = m + s if verify else m
    e = attack_on_epr.eve_qubits
    total = m + 2 * pairs + e
    _check_dense(total, "teleportation baseline")

    # register: payload P | Alice halves A | Bob halves B | Eve
    pa = list(range(m))
    al = list(range(m, m + pairs))
    bo = list(range(m + pairs, m + 2 * pairs))
    ev = list(range(m + 2 * pairs, total))
    phi = np.zeros(1 << (2 * pairs), dtype=complex)
    for i in range(1 << pairs):
        phi[(i << pairs) | i] = 1.0
    phi /= np.sqrt(1 << pairs)
    amps = np.kron(psi.amplitudes, phi)
    if e:
        eve0 = np.zeros(1 << e, dtype=complex)
        eve0[0] = 1.0
        amps = np.kron(amps, eve0)
    amps = apply_attack(amps, attack_on_epr, bo, ev, streams.attack)

    accepted = True
    extra_fwd = 0
    analysis = {}
    if verify:
        family = _family(streams)
        z = streams.key.integers(0, 2, size=s).tolist()
        code = sample_code(m, s, z, family)
        u = code.circuit.unitary()
        # (C^T on A)(C^dagger on B) leaves |phi+> pairs invariant
        amps = apply_unitary(amps, u.T, al)
        amps = apply_unitary(amps, u.conj().T, bo)
        ya, amps, _ = measure(amps, [al[q] for q in code.ancillas], streams.measure)
        yb, amps, _ = measure(amps, [bo[q] for q in code.ancillas], streams.measure)
        accepted = ya == yb
        extra_fwd = s + s  # Alice's syndrome and the public code seed
        analysis["code_family"] = family

    # Bell measurement of (P_i, A_i) and Bob's correction on B_i
    outcome = 0
    for i in range(m):
        amps = apply_unitary(amps, _CNOT, [pa[i], al[i]])
        amps = apply_unitary(amps, _HAD, [pa[i]])
        (bz, bx), amps, _ = measure(amps, [pa[i], al[i]], streams.measure)
        outcome = (outcome << 2) | (bz << 1) | bx
        if bx:
            amps = apply_to_amplitudes(PauliString.from_label("X"), amps, [bo[i]])
        if bz:
            amps = apply_to_amplitudes(PauliString.from_label("Z"), amps, [bo[i]])
    analysis["bell_outcome"] = outcome
    fid = _payload_fidelity(amps, psi, bo[:m])
    return RunRecord(
        protocol="teleport", seed=seed, accepted=bool(accepted), fidelity_out=fid,
        qubits_sent=pairs, cbits_forward=2 * m + extra_fwd, cbits_back=1 if verify else 0,
        key_consumed_bits=0, key_recycled_bits=0, message_size=m, analysis=analysis)


def run_secret_sharing(params: SimulationParams, input_state, key_ab: Sequence[int],
                       key_ac: KeyString, attack: AttackModel, seed: int | None = None,
                       j_bits: Sequence[int] | None = None):
    """Pad with a fresh string J, authenticate to Claire with S, send J xor X to Bob.

    Returns ``(record, bob_holds, claire_holds)``. On Claire's reject the run
    aborts: Bob receives nothing (``None``) and the record is not accepted.
    The record's fidelity is that of the joint Bob+Claire decryption.
    ``j_bits`` fixes J instead of drawing it, for exhaustive checks.
    """
    if params.backend != "dense":
        raise ValueError("secret sharing needs the dense backend")
    m, s = params.m, params.s
    seed = params.seed if seed is None else seed
    key_ab = [int(b) for b in key_ab]
    if len(key_ab) < 2 * m:
        raise ValueError(f"Alice-Bob key needs at least 2m = {2 * m} bits")
    if len(key_ac) != 2 * s:
        raise ValueError(f"Alice-Claire key must have 2s = {2 * s} bits")
    y, z = list(key_ac.bits[:s]), list(key_ac.bits[s:])
    psi = _as_dense_input(input_state, m)
    streams = make_streams(seed)
    j = streams.key.integers(0, 2, size=2 * m).tolist()
    if j_bits is not None:
        j = [int(b) for b in j_bits]
        if len(j) != 2 * m:
            raise ValueError(f"J must have 2m = {2 * m} bits")
    family = _family(streams)
    code = sample_code(m, s, z, family)

    n, e = params.n, attack.eve_qubits
    _check_dense(n + e, "secret sharing")
    enc = apply_to_amplitudes(pauli_from_key(j), psi.amplitudes)
    amps = code.circuit.apply(np.kron(enc, StateVector.basis(y).amplitudes))
    if e:
        eve0 = np.zeros(1 << e, dtype=complex)
        eve0[0] = 1.0
        amps = np.kron(amps, eve0)
    amps = apply_attack(amps, attack, list(range(n)), list(range(n, n + e)), streams.attack)
    amps = code.circuit.apply(amps, list(range(n)), inverse=True)
    bits, amps, _ = measure(amps, code.ancillas, streams.measure)
    accepted = tuple(bits) == tuple(y)

    claire = _payload_state(amps, list(range(m)))
    bob = tuple(a ^ b for a, b in zip(j, key_ab[: 2 * m])) if accepted else None
    # joint decryption: J = (J xor X) xor X
    jj = [a ^ b for a, b in zip(bob, key_ab)] if accepted else j
    dec = apply_to_amplitudes(pauli_from_key(jj).adjoint(), amps, list(range(m)))
    fid = _payload_fidelity(dec, psi, list(range(m)))
    record = RunRecord(
        protocol="secret_sharing", seed=seed, accepted=accepted, fidelity_out=fid,
        qubits_sent=n, cbits_forward=2 * m if accepted else 0, cbits_back=1,
        key_consumed_bits=2 * m + 2 * s, key_recycled_bits=0,
        # quantum payload to Claire plus the padded classical string to Bob
        message_size=m + 2 * m, analysis={"code_family": family})
    return record, bob, claire


def _payload_state(amps: np.ndarray, payload: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix of the payload positions of a register state."""
    psi = StateVector(amps / np.linalg.norm(amps))
    return reduced_from_vector(psi, [str(q) for q in payload])


def run_protect_entanglement(params: SimulationParams, attack: AttackModel,
                             seed: int | None = None) -> RunRecord:
    """Bit-flip pad on Alice's halves of ``m`` singlets, sent to Bob.

    Bob strips the pad with the shared ``m``-bit key; the record's fidelity
    is the overlap of the restored pairs with the original singlets.
    """
    from .pauli import bitflip_protect, singlets

    if params.backend != "dense":
        raise ValueError("entanglement protection needs the dense backend")
    seed = params.seed if seed is None else seed
    n = params.m
    streams = make_streams(seed)
    key = streams.key.integers(0, 2, size=n).tolist()
    pairs = singlets(n)
    _check_dense(2 * n + attack.eve_qubits, "entanglement protection")
    protected = bitflip_protect(pairs, key)
    amps = protected.amplitudes
    e = attack.eve_qubits
    if e:
        eve0 = np.zeros(1 << e, dtype=complex)
        eve0[0] = 1.0
        amps = np.kron(amps, eve0)
    alice = list(range(n))
    amps = apply_attack(amps, attack, alice, list(range(2 * n, 2 * n + e)), streams.attack)
    amps = apply_to_amplitudes(PauliString.from_bits(key, [0] * n), amps, alice)
    fid = _payload_fidelity(amps, pairs, list(range(2 * n)))
    return RunRecord(
        protocol="protect_entanglement", seed=seed, accepted=True, fidelity_out=fid,
        qubits_sent=n, cbits_forward=0, cbits_back=0, key_consumed_bits=n,
        key_recycled_bits=0, message_size=0)


# ---------------------------------------------------------------------------
# trial harness


def draw_input(params: SimulationParams, rng: np.random.Generator):
    if params.backend == "stabilizer":
        return random_stabilizer_state(params.m, rng)
    return random_state(params.m, rng)


def run_trial(protocol: str, params: SimulationParams, attack: AttackModel, trial: int,
              verify: bool | None = None) -> RunRecord:
    """One seeded trial: draws the input and keys, then runs ``protocol``.

    ``verify`` is passed to the teleportation baseline; ``None`` keeps its default.
    """
    seed = trial_seed(params.seed, trial)
    streams = make_streams(seed)
    m, s = params.m, params.s
    if protocol == "protect_entanglement":
        return run_protect_entanglement(params, attack, seed)
    state = draw_input(params, streams.input)
    if protocol == "sqas":
        return run_sqas(params, state, KeyString.random(m, s, streams.key), attack, seed)
    if protocol == "interactive":
        return run_interactive(params, state, attack, seed)
    if protocol == "modified_qas":
        yz = KeyString.plain(streams.key.integers(0, 2, size=2 * s).tolist(), "yz")
        return run_modified_qas(params, state, yz, attack, seed)
    if protocol == "teleport":
        return run_teleport_baseline(params, state, attack, seed, verify=verify)
    if protocol == "secret_sharing":
        x_ab = streams.key.integers(0, 2, size=2 * m).tolist()
        s_ac = KeyString.plain(streams.key.integers(0, 2, size=2 * s).tolist(), "S")
        return run_secret_sharing(params, state, x_ab, s_ac, attack, seed)[0]
    raise ValueError(f"unknown protocol {protocol!r}")


def validate(protocol: str, params: SimulationParams, attack: AttackModel) -> None:
    """Reject configurations that cannot run, before any trial starts."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    m, s, n = params.m, params.s, params.n
    dense_only = ("modified_qas", "teleport", "secret_sharing", "protect_entanglement")
    if params.backend == "stabilizer":
        if protocol in dense_only:
            raise ValueError(f"{protocol} needs the dense backend")
        if not attack.is_pauli:
            raise ValueError(f"stabilizer backend supports only Pauli attacks, not {attack.kind}")
        return
    e = attack.eve_qubits
    if protocol == "modified_qas":
        if m > MAX_MODIFIED_M or s > MAX_MODIFIED_S:
            raise CapacityError(f"modified scheme limited to m <= {MAX_MODIFIED_M}, "
                                f"s <= {MAX_MODIFIED_S} on the dense backend")
        need = 2 * m + n + e
    elif protocol == "teleport":
        if m > MAX_TELEPORT_M:
            raise CapacityError(f"teleportation baseline limited to m <= {MAX_TELEPORT_M}")
        need = m + 2 * (n if attack.kind != "none" else m) + e
    elif protocol == "protect_entanglement":
        need = 2 * m + e
    else:
        need = n + e
    if need > MAX_STATEVECTOR_QUBITS:
        raise CapacityError(f"{protocol} at m={m}, s={s} needs {need} qubits; dense "
                            f"statevector cap is {MAX_STATEVECTOR_QUBITS}")
    width = m if protocol == "protect_entanglement" else n
    if attack.max_qubit() >= width:
        raise ValueError(f"attack touches qubit {attack.max_qubit()} but the channel has "
                         f"{width} qubits")
