"""Dense state primitives: layouts, tensor products, partial operations, spectra.

Qubit ordering is big-endian throughout: the first label of a layout owns the
most significant index bits, and inside a label the first qubit is the most
significant. A 3-qubit basis index ``0b100`` therefore has qubit 0 set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_STATEVECTOR_QUBITS = 22
MAX_DENSITY_QUBITS = 11

# above this size the Jacobi sweep becomes the bottleneck; LAPACK takes over
JACOBI_MAX_DIM = 64
JACOBI_MAX_SWEEPS = 100
JACOBI_REL_TOL = 1e-13

HERMITIAN_TOL = 1e-9


class CapacityError(ValueError):
    """A dense register would exceed the configured qubit cap."""


class ConvergenceError(RuntimeError):
    pass


def _qubits_of_dim(dim: int) -> int:
    q = int(dim).bit_length() - 1
    if dim < 1 or (1 << q) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return q


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered, labelled partition of a qubit register."""

    names: tuple[str, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        names = tuple(self.names)
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "sizes", sizes)
        if len(names) != len(sizes):
            raise ValueError("names and sizes differ in length")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate subsystem labels in {names}")
        if any(s < 0 for s in sizes):
            raise ValueError("subsystem sizes must be non-negative")

    @classmethod
    def qubits(cls, n: int) -> "SubsystemLayout":
        """One label per qubit, named ``"0"``, ``"1"``, ..."""
        return cls(tuple(str(i) for i in range(n)), (1,) * n)

    @classmethod
    def from_dict(cls, spec: dict) -> "SubsystemLayout":
        return cls(tuple(spec), tuple(spec.values()))

    @property
    def n_qubits(self) -> int:
        return sum(self.sizes)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def offset(self, label: str) -> int:
        self._check(label)
        i = self.names.index(label)
        return sum(self.sizes[:i])

    def size(self, label: str) -> int:
        self._check(label)
        return self.sizes[self.names.index(label)]

    def qubit_indices(self, labels: Iterable[str]) -> list[int]:
        """Register positions of the qubits carried by ``labels``, in layout order."""
        wanted = set(labels)
        for label in wanted:
            self._check(label)
        out = []
        pos = 0
        for name, size in zip(self.names, self.sizes):
            if name in wanted:
                out.extend(range(pos, pos + size))
            pos += size
        return out

    def sub(self, labels: Iterable[str]) -> "SubsystemLayout":
        wanted = set(labels)
        for label in wanted:
            self._check(label)
        pairs = [(n, s) for n, s in zip(self.names, self.sizes) if n in wanted]
        return SubsystemLayout(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def __add__(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(self.names + other.names, self.sizes + other.sizes)

    def _check(self, label: str) -> None:
        if label not in self.names:
            raise KeyError(f"unknown subsystem label {label!r}; layout has {self.names}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    layout: SubsystemLayout = field(default=None)

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amplitudes))
        q = _qubits_of_dim(amps.size)
        if q > MAX_STATEVECTOR_QUBITS:
            raise CapacityError(
                f"statevector of {q} qubits exceeds cap of {MAX_STATEVECTOR_QUBITS}")
        layout = self.layout if self.layout is not None else SubsystemLayout.qubits(q)
        if layout.n_qubits != q:
            raise ValueError(f"layout covers {layout.n_qubits} qubits, state has {q}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalised (norm {norm!r})")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "layout", layout)

    @classmethod
    def normalised(cls, amplitudes, layout=None) -> "StateVector":
        a = np.asarray(amplitudes, dtype=complex).ravel()
        return cls(a / np.linalg.norm(a), layout)

    @classmethod
    def basis(cls, bits: Sequence[int] | str, layout=None) -> "StateVector":
        bits = [int(b) for b in bits]
        a = np.zeros(1 << len(bits), dtype=complex)
        a[int("".join(map(str, bits)) or "0", 2)] = 1.0
        return cls(a, layout)

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()), self.layout)

    def with_layout(self, layout: SubsystemLayout) -> "StateVector":
        return StateVector(self.amplitudes, layout)


@dataclass(frozen=True)
class DensityMatrix:
    """Trace-one positive semidefinite operator over a labelled register.

    Construction checks trace and Hermiticity; positivity is checked as well
    unless ``check_psd=False`` is passed to :meth:`make` (used on hot paths
    where the operator is known to be a convex mixture).
    """

    mat: np.ndarray
    layout: SubsystemLayout = field(default=None)

    def __post_init__(self):
        self._init(check_psd=True)

    def _init(self, check_psd: bool) -> None:
        mat = _frozen(self.mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {mat.shape}")
        q = _qubits_of_dim(mat.shape[0])
        if q > MAX_DENSITY_QUBITS:
            raise CapacityError(
                f"density matrix of {q} qubits exceeds cap of {MAX_DENSITY_QUBITS}")
        layout = self.layout if self.layout is not None else SubsystemLayout.qubits(q)
        if layout.n_qubits != q:
            raise ValueError(f"layout covers {layout.n_qubits} qubits, matrix has {q}")
        tr = np.trace(mat)
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"trace {tr!r} differs from 1")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("matrix is not Hermitian")
        if check_psd and np.linalg.eigvalsh(mat)[0] < -1e-9:
            raise ValueError("matrix has a negative eigenvalue")
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "layout", layout)

    @classmethod
    def make(cls, mat, layout=None, check_psd: bool = True) -> "DensityMatrix":
        obj = cls.__new__(cls)
        object.__setattr__(obj, "mat", mat)
        object.__setattr__(obj, "layout", layout)
        obj._init(check_psd)
        return obj

    @classmethod
    def maximally_mixed(cls, n_qubits: int, layout=None) -> "DensityMatrix":
        d = 1 << n_qubits
        return cls(np.eye(d) / d, layout)

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def with_layout(self, layout: SubsystemLayout) -> "DensityMatrix":
        return DensityMatrix.make(self.mat, layout, check_psd=False)


def as_density(state) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, StateVector):
        return state.density()
    raise TypeError(f"expected StateVector or DensityMatrix, got {type(state).__name__}")


def _matrix(a) -> np.ndarray:
    if isinstance(a, DensityMatrix):
        return a.mat
    return np.asarray(a, dtype=complex)


# ---------------------------------------------------------------------------
# tensor products and partial operations


def kron(a, b) -> np.ndarray:
    """Tensor product of two square power-of-two matrices, ``a`` most significant."""
    a, b = _matrix(a), _matrix(b)
    for m in (a, b):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kron expects square matrices")
        _qubits_of_dim(m.shape[0])
    return np.kron(a, b)


def tensor(*states):
    """Tensor product of states, concatenating their layouts.

    All arguments must be of the same kind (all vectors or all density
    matrices); the result is of that kind.
    """
    if all(isinstance(s, StateVector) for s in states):
        amps = states[0].amplitudes
        layout = states[0].layout
        for s in states[1:]:
            amps = np.kron(amps, s.amplitudes)
            layout = layout + s.layout
        return StateVector(amps, layout)
    mats = [as_density(s) for s in states]
    mat = mats[0].mat
    layout = mats[0].layout
    for s in mats[1:]:
        mat = np.kron(mat, s.mat)
        layout = layout + s.layout
    return DensityMatrix.make(mat, layout, check_psd=False)


def _split(labels, layout: SubsystemLayout) -> tuple[list[int], list[int]]:
    labels = [labels] if isinstance(labels, str) else list(labels)
    chosen = layout.qubit_indices(labels)
    chosen_set = set(chosen)
    rest = [q for q in range(layout.n_qubits) if q not in chosen_set]
    return chosen, rest


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the subsystems named in ``keep`` (layout order retained)."""
    rho = as_density(rho)
    keep_q, drop_q = _split(keep, rho.layout)
    nq = rho.n_qubits
    t = rho.mat.reshape((2,) * (2 * nq))
    k, d = len(keep_q), len(drop_q)
    # rows: keep then drop; columns: keep then drop
    perm = keep_q + drop_q + [nq + q for q in keep_q] + [nq + q for q in drop_q]
    t = t.transpose(perm).reshape(1 << k, 1 << d, 1 << k, 1 << d)
    red = np.einsum("ajbj->ab", t)
    return DensityMatrix.make(red, rho.layout.sub(keep if not isinstance(keep, str) else [keep]),
                              check_psd=False)


def reduced_from_vector(psi: StateVector, keep) -> DensityMatrix:
    """Reduced density matrix of a pure state without forming the full projector."""
    keep_q, drop_q = _split(keep, psi.layout)
    nq = psi.n_qubits
    t = psi.amplitudes.reshape((2,) * nq).transpose(keep_q + drop_q)
    m = t.reshape(1 << len(keep_q), 1 << len(drop_q))
    red = m @ m.conj().T
    return DensityMatrix.make(red, psi.layout.sub(keep if not isinstance(keep, str) else [keep]),
                              check_psd=False)


def partial_transpose(rho: DensityMatrix, transpose_part) -> np.ndarray:
    """Matrix of ``rho`` with the indices of ``transpose_part`` transposed."""
    rho = as_density(rho)
    part, _ = _split(transpose_part, rho.layout)
    nq = rho.n_qubits
    t = rho.mat.reshape((2,) * (2 * nq))
    perm = list(range(2 * nq))
    for q in part:
        perm[q], perm[nq + q] = perm[nq + q], perm[q]
    return t.transpose(perm).reshape(rho.dim, rho.dim)


# ---------------------------------------------------------------------------
# Hermitian eigendecomposition


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint pair schedule covering every (p, q) once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a >= 0 and b >= 0:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(a.diagonal())))


def jacobi_eigh(h, max_sweeps: int = JACOBI_MAX_SWEEPS, rel_tol: float = JACOBI_REL_TOL):
    """Cyclic Jacobi diagonalisation of a Hermitian matrix.

    Every sweep visits all index pairs in a round-robin order; the disjoint
    rotations of one round are applied together. Each complex rotation first
    removes the phase of the pivot element and then applies a real Givens
    rotation of angle at most pi/4.

    Returns
    -------
    (w, v) with ascending eigenvalues ``w`` and unitary ``v`` such that
    ``h = v @ diag(w) @ v.conj().T``.
    """
    a = np.array(h, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    if n == 1:
        return a.real.diagonal().copy(), v
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    threshold = rel_tol * scale
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = _off_norm(a)
        if off <= threshold:
            break
        for p, q in rounds:
            apq = a[p, q]
            mag = np.abs(apq)
            live = mag > 0.0
            if not live.any():
                continue
            p, q, apq, mag = p[live], q[live], apq[live], mag[live]
            app = a[p, p].real
            aqq = a[q, q].real
            theta = 0.5 * np.arctan2(2.0 * mag, aqq - app)
            theta = np.where(theta > np.pi / 4, theta - np.pi / 2, theta)
            c = np.cos(theta)
            s = np.sin(theta)
            phase = np.conj(apq) / mag  # e^{-i phi}
            jpp, jpq = c, s
            jqp, jqq = -s * phase, c * phase
            colp, colq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = colp * jpp + colq * jqp
            a[:, q] = colp * jpq + colq * jqq
            rowp, rowq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = np.conj(jpp)[:, None] * rowp + np.conj(jqp)[:, None] * rowq
            a[q, :] = np.conj(jpq)[:, None] * rowp + np.conj(jqq)[:, None] * rowq
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * jpp + vq * jqp
            v[:, q] = vp * jpq + vq * jqq
    else:
        off = _off_norm(a)
        if off > threshold:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal {off:.3e})")
    w = a.diagonal().real
    order = np.argsort(w, kind="stable")
    return w[order].copy(), v[:, order]


def eigh(h):
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.

    Small matrices go through :func:`jacobi_eigh`; larger ones use LAPACK.
    """
    h = _matrix(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("eigh expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if np.max(np.abs(h - h.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    h = 0.5 * (h + h.conj().T)
    if h.shape[0] <= JACOBI_MAX_DIM:
        return jacobi_eigh(h)
    return np.linalg.eigh(h)


def eigvalsh(h) -> np.ndarray:
    return eigh(h)[0]


# ---------------------------------------------------------------------------
# distances and entropies


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    a, b = _matrix(a), _matrix(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    w = eigvalsh(a - b)
    return float(min(1.0, 0.5 * np.sum(np.abs(w))))


def entropy_of_spectrum(w) -> float:
    w = np.asarray(w, dtype=float)
    w = w[w > 1e-15]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def vn_entropy(rho) -> float:
    """Von Neumann entropy in bits."""
    return entropy_of_spectrum(eigvalsh(_matrix(as_density(rho) if isinstance(rho, StateVector) else rho)))


def fidelity_pure(psi: StateVector, rho) -> float:
    """<psi| rho |psi> for a pure reference state."""
    m = _matrix(as_density(rho) if isinstance(rho, StateVector) else rho)
    a = psi.amplitudes
    if m.shape[0] != a.size:
        raise ValueError(f"dimension mismatch: state {a.size} vs matrix {m.shape[0]}")
    f = np.vdot(a, m @ a).real
    return float(min(1.0, max(0.0, f)))


def overlap(psi: StateVector, phi: StateVector) -> float:
    """|<psi|phi>|^2."""
    if psi.dim != phi.dim:
        raise ValueError("dimension mismatch")
    return float(min(1.0, abs(np.vdot(psi.amplitudes, phi.amplitudes)) ** 2))


# ---------------------------------------------------------------------------
# samplers


def random_state(n_qubits: int, rng: np.random.Generator, layout=None) -> StateVector:
    """Haar-random pure state."""
    d = 1 << n_qubits
    a = rng.normal(size=d) + 1j * rng.normal(size=d)
    return StateVector.normalised(a, layout)


def random_unitary(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    d = 1 << n_qubits
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_density(n_qubits: int, rng: np.random.Generator, rank: int | None = None,
                   layout=None) -> DensityMatrix:
    d = 1 << n_qubits
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real, layout)


# ---------------------------------------------------------------------------
# register-level operations on raw amplitude arrays


def apply_unitary(amps: np.ndarray, u: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply ``u`` (acting on ``len(qubits)`` qubits, big-endian) to register positions."""
    total = amps.size.bit_length() - 1
    k = len(qubits)
    if u.shape != (1 << k, 1 << k):
        raise ValueError(f"unitary of shape {u.shape} does not act on {k} qubits")
    t = amps.reshape((2,) * total)
    rest = [q for q in range(total) if q not in set(qubits)]
    t = t.transpose(list(qubits) + rest).reshape(1 << k, -1)
    t = (u @ t).reshape((2,) * total)
    inv = np.argsort(list(qubits) + rest)
    return t.transpose(inv).ravel()


def outcome_probabilities(amps: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Computational-basis outcome distribution of ``qubits`` (big-endian outcome index)."""
    total = amps.size.bit_length() - 1
    t = (np.abs(amps) ** 2).reshape((2,) * total)
    rest = tuple(q for q in range(total) if q not in set(qubits))
    p = t.sum(axis=rest) if rest else t
    # sum keeps remaining axes in ascending order; reorder to the requested order
    order = np.argsort(np.argsort(list(qubits)))
    p = p.transpose(order) if len(qubits) > 1 else p
    return p.ravel()


def project(amps: np.ndarray, qubits: Sequence[int], bits: Sequence[int]) -> tuple[np.ndarray, float]:
    """Unnormalised projection of ``qubits`` onto ``bits`` and its probability."""
    total = amps.size.bit_length() - 1
    t = amps.reshape((2,) * total).copy()
    index = [slice(None)] * total
    for q, b in zip(qubits, bits):
        index[q] = 1 - int(b)
        t[tuple(index)] = 0
        index[q] = slice(None)
    out = t.ravel()
    return out, float(np.vdot(out, out).real)


def measure(amps: np.ndarray, qubits: Sequence[int], rng: np.random.Generator):
    """Projective Z measurement; outcome picked by cumulative probability.

    Returns ``(bits, post_state, probability)`` with the post-measurement
    state renormalised.
    """
    p = outcome_probabilities(amps, qubits)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
    idx = min(idx, p.size - 1)
    while p[idx] <= 0 and idx > 0:
        idx -= 1
    k = len(qubits)
    bits = [idx >> (k - 1 - i) & 1 for i in range(k)]
    post, prob = project(amps, qubits, bits)
    return bits, post / np.sqrt(prob), prob
