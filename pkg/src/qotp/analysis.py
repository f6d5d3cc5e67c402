"""Information-theoretic and entanglement diagnostics.

All entropies and informations are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import (DensityMatrix, SubsystemLayout, as_density, eigvalsh, entropy_of_spectrum,
                    partial_trace, partial_transpose, vn_entropy)

ENSEMBLE_TOL = 1e-12
POVM_TOL = 1e-9
UNITARY_TOL = 1e-9
SEPARABILITY_TOL = 1e-8


@dataclass(frozen=True)
class Ensemble:
    probs: tuple[float, ...]
    states: tuple[DensityMatrix, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        states = tuple(s if isinstance(s, DensityMatrix) else
                       DensityMatrix(s) if isinstance(s, np.ndarray) else as_density(s)
                       for s in self.states)
        if len(probs) != len(states) or not probs:
            raise ValueError("need one probability per state")
        if min(probs) < 0 or abs(sum(probs) - 1.0) > ENSEMBLE_TOL:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if len({s.dim for s in states}) != 1:
            raise ValueError("ensemble states differ in dimension")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)

    @classmethod
    def uniform(cls, states) -> "Ensemble":
        states = list(states)
        return cls(tuple([1.0 / len(states)] * len(states)), tuple(states))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def average(self) -> np.ndarray:
        return sum(p * s.mat for p, s in zip(self.probs, self.states))


@dataclass(frozen=True)
class Povm:
    elements: tuple[np.ndarray, ...]

    def __post_init__(self):
        els = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        if not els:
            raise ValueError("POVM needs at least one element")
        d = els[0].shape[0]
        for e in els:
            if e.shape != (d, d):
                raise ValueError("POVM elements differ in shape")
            if np.abs(e - e.conj().T).max() > POVM_TOL or eigvalsh(e)[0] < -POVM_TOL:
                raise ValueError("POVM element is not positive semidefinite")
        if np.abs(sum(els) - np.eye(d)).max() > POVM_TOL:
            raise ValueError("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", els)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    @classmethod
    def projective(cls, basis: np.ndarray) -> "Povm":
        """Rank-one projectors onto the columns of a unitary ``basis``."""
        return cls(tuple(np.outer(v, v.conj()) for v in np.asarray(basis).T))


def holevo(e: Ensemble) -> float:
    """S(sum p_i rho_i) - sum p_i S(rho_i)."""
    chi = vn_entropy(e.average()) - sum(p * vn_entropy(s.mat) for p, s in zip(e.probs, e.states))
    return max(0.0, chi)


def _shannon(p: np.ndarray) -> float:
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log2(p)))


def mutual_info_measurement(e: Ensemble, m: Povm) -> float:
    """I(i:v) for p(i, v) = p_i Tr(M_v rho_i)."""
    if e.dim != m.dim:
        raise ValueError(f"ensemble dimension {e.dim} vs POVM dimension {m.dim}")
    joint = np.array([[p * np.trace(el @ s.mat).real for el in m.elements]
                      for p, s in zip(e.probs, e.states)])
    joint = np.clip(joint, 0.0, None)
    joint /= joint.sum()
    mi = _shannon(joint.sum(1)) + _shannon(joint.sum(0)) - _shannon(joint.ravel())
    return max(0.0, mi)


def eve_product_distance(joint: DensityMatrix, key: str = "K", eve: str = "E") -> float:
    """Trace distance of the (key, Eve) state from the product of its marginals."""
    from .qcore import trace_distance

    names = joint.layout.names
    for label in (key, eve):
        if label not in names:
            raise ValueError(f"layout lacks subsystem {label!r}")
    ke = partial_trace(joint, [n for n in names if n in (key, eve)])
    rk = partial_trace(ke, [key]).mat
    re_ = partial_trace(ke, [eve]).mat
    prod = np.kron(rk, re_) if ke.layout.names[0] == key else np.kron(re_, rk)
    return trace_distance(ke.mat, prod)


def ppt_min_eigenvalue(rho, cut) -> float:
    """Smallest eigenvalue of the partial transpose over the subsystems in ``cut``."""
    rho = as_density(rho)
    cut = [cut] if isinstance(cut, str) else list(cut)
    for label in cut:
        if label not in rho.layout.names:
            raise ValueError(f"layout lacks subsystem {label!r}")
    return float(eigvalsh(partial_transpose(rho, cut))[0])


def is_ppt(rho, cut, tol: float = 1e-12) -> bool:
    """PPT test; for a 2x2 system this decides separability."""
    return ppt_min_eigenvalue(rho, cut) >= -tol


def entropy_separability_check(rho, cut) -> bool:
    """True iff S(rho) >= S(rho_cut) - 1e-8.

    Separable states always pass; a failure witnesses entanglement.
    """
    rho = as_density(rho)
    cut = [cut] if isinstance(cut, str) else list(cut)
    for label in cut:
        if label not in rho.layout.names:
            raise ValueError(f"layout lacks subsystem {label!r}")
    return vn_entropy(rho.mat) >= vn_entropy(partial_trace(rho, cut).mat) - SEPARABILITY_TOL


def leftover_hash_bound(lambda_max: float, rank_e: int, t: int, eps: float) -> float:
    """2^{(log2 lambda_max + log2 rank_e + t) / 2} + 2 eps."""
    if not 0.0 < lambda_max <= 1.0:
        raise ValueError("lambda_max must lie in (0, 1]")
    if rank_e < 1 or t < 1 or eps < 0:
        raise ValueError("need rank_e >= 1, t >= 1, eps >= 0")
    return 2.0 ** (0.5 * (math.log2(lambda_max) + math.log2(rank_e) + t)) + 2.0 * eps


def hashed_key_distance(key_probs: np.ndarray, eve_of_key: Sequence[int], t: int) -> float:
    """Exact E_G || rho_{G(J)E} - rho_T (x) rho_E ||_1 over all Toeplitz hashes.

    Classical instance: ``key_probs[k]`` is Pr(J = k) over ``j``-bit keys and
    Eve holds the value ``eve_of_key[k]``. The average runs over every
    Toeplitz seed of length ``j + t - 1``.
    """
    from .keyring import ToeplitzHash

    key_probs = np.asarray(key_probs, dtype=float)
    j = int(key_probs.size).bit_length() - 1
    if key_probs.size != 1 << j:
        raise ValueError("key distribution must cover all j-bit strings")
    eve_of_key = np.asarray(eve_of_key)
    e_vals, e_idx = np.unique(eve_of_key, return_inverse=True)
    keys = (np.arange(1 << j)[:, None] >> np.arange(j - 1, -1, -1)) & 1
    n_seeds = 1 << (j + t - 1)
    p_e = np.bincount(e_idx, weights=key_probs, minlength=e_vals.size)
    total = 0.0
    weights = 1 << np.arange(t - 1, -1, -1)
    for seed in range(n_seeds):
        bits = [(seed >> (j + t - 2 - i)) & 1 for i in range(j + t - 1)]
        g = ToeplitzHash(j, t, tuple(bits)).matrix().astype(np.int64)
        out = ((keys @ g.T) & 1) @ weights
        joint = np.zeros((1 << t, e_vals.size))
        np.add.at(joint, (out, e_idx), key_probs)
        p_t = joint.sum(1)
        total += np.abs(joint - np.outer(p_t, p_e)).sum()
    return total / n_seeds


def psi_plus(m: int) -> np.ndarray:
    d = 1 << m
    return np.eye(d, dtype=complex).ravel() / math.sqrt(d)


def transpose_identity_residual(u, form: str = "transpose") -> float:
    """|| (I (x) U)|psi+> - (V (x) I)|psi+> || with V = U^T (default) or U^*.

    The identity holds exactly for every U with ``V = U^T``; the complex
    conjugate form only holds for special U (real, or Paulis up to phase).
    """
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    m = d.bit_length() - 1
    if u.shape != (d, d) or d != 1 << m:
        raise ValueError("u must be a square matrix on m qubits")
    if np.abs(u.conj().T @ u - np.eye(d)).max() > UNITARY_TOL:
        raise ValueError("u is not unitary")
    if form == "transpose":
        v = u.T
    elif form == "conjugate":
        v = u.conj()
    else:
        raise ValueError("form must be 'transpose' or 'conjugate'")
    phi = psi_plus(m)
    lhs = np.kron(np.eye(d), u) @ phi
    rhs = np.kron(v, np.eye(d)) @ phi
    return float(np.linalg.norm(lhs - rhs))


# ---------------------------------------------------------------------------
# relative entropy of entanglement, upper bound

REE_COMPONENTS = 16
REE_RESTARTS = 20
REE_ITERS = 500
REE_STEP = 0.5
REE_MIN_STEP = 1e-7
_EIG_FLOOR = 1e-300


def _bloch_kets(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)


def _projectors(ang: np.ndarray) -> np.ndarray:
    """|a><a| (x) |b><b| for angle rows (theta_a, phi_a, theta_b, phi_b)."""
    a = _bloch_kets(ang[..., 0], ang[..., 1])
    b = _bloch_kets(ang[..., 2], ang[..., 3])
    v = (a[..., :, None] * b[..., None, :]).reshape(*ang.shape[:-1], 4)
    return v[..., :, None] * v[..., None, :].conj()


def _softmax(logits: np.ndarray) -> np.ndarray:
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def _cross_entropy(rho: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """-Tr rho log2 sigma for a batch of sigmas."""
    w, v = np.linalg.eigh(sigmas)
    weights = np.sum(v.conj() * (rho @ v), axis=-2).real
    return -np.sum(weights * np.log2(np.maximum(w, _EIG_FLOOR)), axis=-1)


def _descend(rho: np.ndarray, logits: np.ndarray, ang: np.ndarray,
             iters: int) -> float:
    """Greedy coordinate descent over weight logits and Bloch angles.

    Every iteration scores all +-step single-coordinate moves at once and
    takes the best; the step halves whenever no move improves.
    """
    k = logits.size
    step = REE_STEP
    w = _softmax(logits)
    proj = _projectors(ang)
    sigma = np.einsum("k,kij->ij", w, proj)
    best = float(_cross_entropy(rho, sigma[None])[0])
    eye_k = np.eye(k)
    for _ in range(iters):
        # weight moves: 2k candidates
        cand_logits = np.concatenate([logits + step * eye_k, logits - step * eye_k])
        cand_w = _softmax(cand_logits)
        s_w = np.einsum("ck,kij->cij", cand_w, proj)
        # angle moves: (sign, coordinate, component) candidates
        shift = step * np.array([1.0, -1.0])[:, None, None, None] * \
            np.eye(4)[None, :, None, :]
        cand_ang = ang[None, None] + shift
        cand_proj = _projectors(cand_ang)
        s_a = sigma + w[None, None, :, None, None] * (cand_proj - proj[None, None])
        vals = _cross_entropy(rho, np.concatenate([s_w, s_a.reshape(-1, 4, 4)]))
        i = int(np.argmin(vals))
        if vals[i] < best - 1e-15:
            best = float(vals[i])
            if i < 2 * k:
                logits, w, sigma = cand_logits[i], cand_w[i], s_w[i]
            else:
                sign, coord, comp = np.unravel_index(i - 2 * k, (2, 4, k))
                ang, proj = ang.copy(), proj.copy()
                ang[comp] = cand_ang[sign, coord, comp]
                proj[comp] = cand_proj[sign, coord, comp]
                sigma = s_a[sign, coord, comp]
        else:
            step *= 0.5
            if step < REE_MIN_STEP:
                break
    return best


def rel_entropy_ub(rho, restarts: int = REE_RESTARTS, iters: int = REE_ITERS,
                   seed: int = 0) -> float:
    """Upper bound on the relative entropy of entanglement of a 2-qubit state.

    Minimises S(rho || sigma) over mixtures sigma of 16 product pure states
    by greedy coordinate descent from ``restarts`` seeded random starts.
    Every candidate is separable, so the result never undershoots the true
    value; more restarts can only lower it.
    """
    rho = as_density(rho)
    if rho.dim != 4:
        raise ValueError("rel_entropy_ub takes a 2-qubit state")
    if restarts < 1 or iters < 0:
        raise ValueError("need restarts >= 1 and iters >= 0")
    neg_s = -entropy_of_spectrum(eigvalsh(rho.mat))
    k = REE_COMPONENTS
    best = math.inf
    for r in range(restarts):
        rng = np.random.default_rng([int(seed), r])
        ang = np.column_stack([np.arccos(rng.uniform(-1, 1, k)), rng.uniform(0, 2 * np.pi, k),
                               np.arccos(rng.uniform(-1, 1, k)), rng.uniform(0, 2 * np.pi, k)])
        best = min(best, neg_s + _descend(rho.mat, np.zeros(k), ang, iters))
        if best <= 1e-12:
            break  # already at the floor of zero
    return max(0.0, best)


def entropy_lower_bound(rho, cut) -> float:
    """S(rho_cut) - S(rho), a lower bound on the relative entropy of entanglement."""
    rho = as_density(rho)
    return vn_entropy(partial_trace(rho, [cut] if isinstance(cut, str) else cut).mat) - \
        vn_entropy(rho.mat)


def two_qubit(mat: np.ndarray, labels=("A", "B")) -> DensityMatrix:
    return DensityMatrix.make(mat, SubsystemLayout(tuple(labels), (1, 1)))
