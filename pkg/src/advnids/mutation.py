"""Packet-level mutations: delay a packet and inject redundant packets before it.

A mutation is (t_m, n_c, s_c): the new arrival time of the packet, the
number of redundant packets placed before it (continuous, rounded when
materialised) and, for the uniform strategy, the payload size shared by
all redundant packets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .features import ExtractorState, StateSnapshot
from .pcap_io import MAX_FRAME_LEN, PacketRecord, reindex, seconds_to_us, synthesize_packet, write_pcap


class Strategy(enum.Enum):
    RA = "RA"  # fresh random sizes on every evaluation
    SA = "SA"  # random sizes from a generator seeded with the rounded count
    UA = "UA"  # every redundant packet has payload size round(s_c)


class Provenance(enum.Enum):
    REDUNDANT = "redundant"
    MODIFIED_ORIGINAL = "modified-original"


class MutationError(ValueError):
    pass


class InfeasibleMutationError(MutationError):
    pass


class MutationBoundsError(MutationError):
    pass


@dataclass(frozen=True)
class MutationBounds:
    max_time_window: float = 1.0
    max_craft_pkt: int = 5
    max_packet_size: int = MAX_FRAME_LEN

    def __post_init__(self):
        if not (self.max_time_window > 0 and self.max_craft_pkt > 0 and self.max_packet_size > 0):
            raise MutationBoundsError("mutation bounds must be positive")

    def max_payload(self, template: PacketRecord) -> int:
        return max(0, min(self.max_packet_size, MAX_FRAME_LEN) - template.header_len)

    def box(self, strategy: Strategy, template: PacketRecord | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Search box in (delay offset, n_c[, s_c]) coordinates."""
        lo = [0.0, 0.0]
        hi = [float(self.max_time_window), float(self.max_craft_pkt)]
        if strategy is Strategy.UA:
            lo.append(0.0)
            cap = self.max_payload(template) if template is not None else self.max_packet_size
            hi.append(float(cap))
        return np.array(lo), np.array(hi)


def round_count(n_c: float) -> int:
    """Round half up so that the cell of k is [k - 0.5, k + 0.5)."""
    return int(math.floor(n_c + 0.5))


@dataclass(frozen=True)
class MutationVector:
    t_m: float
    n_c: float = 0.0
    s_c: float = 0.0

    @property
    def count(self) -> int:
        return round_count(self.n_c)

    @classmethod
    def from_position(cls, pos, t_i: float) -> "MutationVector":
        pos = np.asarray(pos, dtype=float)
        s_c = float(pos[2]) if len(pos) > 2 else 0.0
        return cls(t_i + float(pos[0]), float(pos[1]), s_c)

    @classmethod
    def identity(cls, p: PacketRecord) -> "MutationVector":
        return cls(p.timestamp, 0.0, 0.0)


@dataclass
class AdversarialPacketSet:
    packets: list[PacketRecord]
    provenance: list[Provenance] = field(default_factory=list)

    @property
    def original(self) -> PacketRecord:
        return self.packets[-1]

    @property
    def redundant(self) -> list[PacketRecord]:
        return self.packets[:-1]

    def write(self, path: str | Path) -> None:
        write_pcap(reindex(self.packets), path)


def _redundant_sizes(k: int, strategy: Strategy, s_c: float, cap: int,
                     rng: np.random.Generator) -> list[int]:
    if k == 0:
        return []
    if strategy is Strategy.UA:
        return [int(min(max(round_count(s_c), 0), cap))] * k
    src = np.random.default_rng(k) if strategy is Strategy.SA else rng
    return [int(s) for s in src.integers(0, cap + 1, size=k)]


def materialize(v: MutationVector, p: PacketRecord, t_prev: float | None, strategy: Strategy,
                rng: np.random.Generator, bounds: MutationBounds = MutationBounds(),
                t_m_us: int | None = None, t_prev_us: int | None = None) -> AdversarialPacketSet:
    """Build the packets that replace ``p``.

    ``t_prev`` is the arrival time of the previously emitted packet.  Times
    are resolved to integer microseconds; redundant packets that cannot be
    given distinct arrival times strictly between ``t_prev`` and ``t_m`` are
    dropped.
    """
    k = v.count
    if k < 0 or k > bounds.max_craft_pkt:
        raise MutationBoundsError(f"redundant count {k} outside [0, {bounds.max_craft_pkt}]")
    tm = seconds_to_us(v.t_m) if t_m_us is None else int(t_m_us)
    if t_prev_us is None:
        t_prev_us = tm if t_prev is None else seconds_to_us(t_prev)
    if tm < t_prev_us:
        raise InfeasibleMutationError(f"t_m {tm} us precedes previous packet at {t_prev_us} us")
    span = tm - t_prev_us
    k = max(0, min(k, span - 1))
    cap = bounds.max_payload(p)
    sizes = _redundant_sizes(k, strategy, v.s_c, cap, rng)
    out = [synthesize_packet(p, payload_len=s, rng=rng, ts_us=t_prev_us + (j * span) // (k + 1))
           for j, s in enumerate(sizes, start=1)]
    out.append(p.retimed(tm))
    return AdversarialPacketSet(out, [Provenance.REDUNDANT] * k + [Provenance.MODIFIED_ORIGINAL])


def evaluate_set(aps: AdversarialPacketSet, state: ExtractorState, surrogate) -> np.ndarray:
    """Stream ``aps`` through ``state`` (mutating it) and score every packet."""
    rows = np.array([state.extract(q).values for q in aps.packets])
    return surrogate.score_batch(rows)


def cost(v: MutationVector, p: PacketRecord, state: ExtractorState, snap: StateSnapshot,
         surrogate, strategy: Strategy, rng: np.random.Generator,
         bounds: MutationBounds = MutationBounds(), t_prev: float | None = None,
         t_prev_us: int | None = None, t_m_us: int | None = None) -> float:
    """Maximum surrogate score over the materialised set; ``state`` is restored afterwards."""
    aps = materialize(v, p, t_prev, strategy, rng, bounds, t_m_us=t_m_us, t_prev_us=t_prev_us)
    try:
        return float(evaluate_set(aps, state, surrogate).max())
    finally:
        state.restore(snap)


def make_cost_fn(p: PacketRecord, state: ExtractorState, surrogate, strategy: Strategy,
                 rng: np.random.Generator, bounds: MutationBounds, t_prev_us: int,
                 ) -> Callable[[np.ndarray], float]:
    """Cost over search positions (delay offset, n_c[, s_c]) relative to ``p``'s arrival."""
    snap = state.snapshot_for([p])

    def fn(pos) -> float:
        pos = np.asarray(pos, dtype=float)
        t_m_us = p.ts_us + int(round(pos[0] * 1e6))
        v = MutationVector.from_position(pos, p.timestamp)
        return cost(v, p, state, snap, surrogate, strategy, rng, bounds,
                    t_prev_us=t_prev_us, t_m_us=t_m_us)

    return fn
