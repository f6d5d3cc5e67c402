"""Key lifecycle: Toeplitz hashing, recycling after accept/reject, and the key ledger.

The ledger audits ``delta_k <= delta_q - delta_m`` for each run and for every
running total: the change in shared private key can never exceed the qubits
sent minus the private message length delivered.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .pauli import KeyString


@dataclass(frozen=True)
class ToeplitzHash:
    in_len: int
    out_len: int
    seed: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= self.out_len <= self.in_len:
            raise ValueError(f"need 1 <= t <= j, got t={self.out_len}, j={self.in_len}")
        seed = tuple(int(b) for b in self.seed)
        if len(seed) != self.in_len + self.out_len - 1:
            raise ValueError(
                f"seed must have j+t-1 = {self.in_len + self.out_len - 1} bits, got {len(seed)}")
        object.__setattr__(self, "seed", seed)

    @classmethod
    def random(cls, in_len: int, out_len: int, rng: np.random.Generator) -> "ToeplitzHash":
        return cls(in_len, out_len, tuple(rng.integers(0, 2, size=in_len + out_len - 1).tolist()))

    def matrix(self) -> np.ndarray:
        """``t x j`` GF(2) matrix; row i is the seed window ``[i, i+j)``."""
        seed = np.asarray(self.seed, dtype=np.uint8)
        return sliding_window_view(seed, self.in_len)[: self.out_len]


def toeplitz_hash(bits: Sequence[int], h: ToeplitzHash) -> tuple[int, ...]:
    if len(bits) != h.in_len:
        raise ValueError(f"input has {len(bits)} bits, hash expects {h.in_len}")
    v = np.asarray(bits, dtype=np.uint8)
    return tuple(((h.matrix().astype(np.int64) @ v) & 1).tolist())


def _hash_for(in_len: int, out_len: int, seed) -> ToeplitzHash:
    """Hash from an integer seed (drawn publicly) or explicit seed bits."""
    if isinstance(seed, ToeplitzHash):
        return seed
    if isinstance(seed, (int, np.integer)):
        return ToeplitzHash.random(in_len, out_len, np.random.default_rng(int(seed)))
    return ToeplitzHash(in_len, out_len, tuple(seed))


def recycle_on_accept(key: KeyString, m: int, s: int, seed) -> KeyString:
    """Keep ``x`` and compress ``y||z`` to ``s - 2`` bits.

    ``seed`` picks the public hash function: an integer seed, explicit
    ``j + t - 1`` seed bits, or a :class:`ToeplitzHash`.
    """
    if len(key) != 2 * m + 2 * s:
        raise ValueError(f"key must have 2m+2s = {2 * m + 2 * s} bits, got {len(key)}")
    if s < 3:
        raise ValueError("accept-branch recycling needs s >= 3")
    x = key.bits[: 2 * m]
    yz = key.bits[2 * m:]
    h = _hash_for(2 * s, s - 2, seed)
    out = x + toeplitz_hash(yz, h)
    return KeyString(out, {"x": (0, 2 * m), "h": (2 * m, len(out))})


def recycle_on_reject(key: KeyString, m: int, s: int, seed) -> KeyString:
    """Compress the whole key to ``m + s - 2`` bits."""
    if len(key) != 2 * m + 2 * s:
        raise ValueError(f"key must have 2m+2s = {2 * m + 2 * s} bits, got {len(key)}")
    if m + s < 3:
        raise ValueError("reject-branch recycling needs m + s >= 3")
    h = _hash_for(2 * m + 2 * s, m + s - 2, seed)
    return KeyString.plain(toeplitz_hash(key.bits, h), "h")


def recycled_length(m: int, s: int, accepted: bool) -> int:
    if accepted:
        return 2 * m + s - 2 if s >= 3 else 0
    return m + s - 2 if m + s >= 3 else 0


def pad_key(key: KeyString, m: int, s: int, rng: np.random.Generator) -> KeyString:
    """Extend a recycled key with fresh bits up to a full ``2m + 2s`` protocol key."""
    need = 2 * m + 2 * s - len(key)
    if need < 0:
        raise ValueError("key already longer than a protocol key")
    return KeyString.for_protocol(key.bits + tuple(rng.integers(0, 2, size=need).tolist()), m, s)


# ---------------------------------------------------------------------------
# ledger


@dataclass(frozen=True)
class LedgerEntry:
    delta_q: int
    delta_m: int
    delta_k: int
    protocol: str
    run_seed: int

    @property
    def slack(self) -> int:
        return self.delta_q - self.delta_m - self.delta_k


class Ledger:
    """Append-only record of per-run resource changes."""

    FIELDS = ("protocol", "seed", "delta_q", "delta_m", "delta_k")

    def __init__(self, entries: Iterable[LedgerEntry] = ()):
        self._entries: list[LedgerEntry] = list(entries)

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, entry: LedgerEntry) -> None:
        self._entries.append(entry)

    def record(self, run) -> LedgerEntry:
        entry = entry_for_run(run)
        self.append(entry)
        return entry

    def totals(self) -> dict:
        return {"delta_q": sum(e.delta_q for e in self._entries),
                "delta_m": sum(e.delta_m for e in self._entries),
                "delta_k": sum(e.delta_k for e in self._entries),
                "runs": len(self._entries)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for e in self._entries:
            w.writerow([e.protocol, e.run_seed, e.delta_q, e.delta_m, e.delta_k])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Ledger":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(h.strip() for h in rows[0]) != cls.FIELDS:
            raise ValueError(f"ledger CSV must start with header {','.join(cls.FIELDS)}")
        entries = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(row)}")
            try:
                entries.append(LedgerEntry(int(row[2]), int(row[3]), int(row[4]),
                                           row[0], int(row[1])))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return cls(entries)


def entry_for_run(run) -> LedgerEntry:
    delta_m = run.message_size if run.accepted else 0
    return LedgerEntry(run.qubits_sent, delta_m,
                       run.key_recycled_bits - run.key_consumed_bits,
                       run.protocol, run.seed)


def ledger_record(ledger: Ledger, run) -> Ledger:
    ledger.record(run)
    return ledger


def audit_law(ledger: Ledger, limit: int = 10) -> tuple[bool, list[dict]]:
    """Check every entry and every prefix sum; report up to ``limit`` violations."""
    violations: list[dict] = []
    q = mm = k = 0
    for i, e in enumerate(ledger.entries):
        if e.slack < 0 and len(violations) < limit:
            violations.append({"kind": "entry", "index": i, "protocol": e.protocol,
                               "seed": e.run_seed, "delta_q": e.delta_q,
                               "delta_m": e.delta_m, "delta_k": e.delta_k})
        q, mm, k = q + e.delta_q, mm + e.delta_m, k + e.delta_k
        if k > q - mm and len(violations) < limit:
            violations.append({"kind": "prefix", "index": i, "delta_q": q,
                               "delta_m": mm, "delta_k": k})
    return not violations, violations
