"""Streaming per-packet features from damped incremental statistics.

Every packet updates a handful of streams keyed by its addresses. Each
stream keeps exponentially damped statistics for several decay constants
``lambdas``; an observation ``dt`` seconds old carries weight
``2 ** (-lam * dt)``. The emitted vector has 20 values per decay constant:

====  =====================================================
0-2   source link+net packet size: weight, mean, std
3-5   channel inter-arrival jitter: weight, mean, std
6-12  channel (src net -> dst net) size: weight, mean, std,
      magnitude, radius, covariance, correlation
13-19 socket (src net:port -> dst net:port), same 7 values
====  =====================================================

Statistics are kept as (weight, mean, M2) rather than raw linear and
squared sums, which removes the cancellation in ``SS/w - mean**2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .pcap_io import PacketRecord

DEFAULT_LAMBDAS = (5.0, 3.0, 1.0, 0.1, 0.01)
FEATURES_PER_LAMBDA = 20
STAT_NAMES_1D = ("weight", "mean", "std")
STAT_NAMES_2D = STAT_NAMES_1D + ("magnitude", "radius", "covariance", "pcc")
# std products below this (bytes^2) make the correlation numerically meaningless
PCC_DENOM_FLOOR = 1e-9


class TimeRegressionError(ValueError):
    pass


class StaleSnapshotError(RuntimeError):
    pass


class DampedStat1D:
    """Damped weight/mean/variance of a scalar stream, one slot per decay constant."""

    __slots__ = ("lambdas", "w", "mean", "m2", "last_t")

    def __init__(self, lambdas: Sequence[float] | np.ndarray = DEFAULT_LAMBDAS):
        self.lambdas = np.asarray(lambdas, dtype=float)
        n = self.lambdas.size
        self.w = np.zeros(n)
        self.mean = np.zeros(n)
        self.m2 = np.zeros(n)
        self.last_t: float | None = None

    def copy(self) -> "DampedStat1D":
        c = DampedStat1D.__new__(DampedStat1D)
        c.lambdas = self.lambdas
        c.w = self.w.copy()
        c.mean = self.mean.copy()
        c.m2 = self.m2.copy()
        c.last_t = self.last_t
        return c

    def decay_factor(self, t: float) -> np.ndarray:
        if self.last_t is None:
            return np.ones_like(self.lambdas)
        dt = t - self.last_t
        if dt < 0:
            raise TimeRegressionError(f"time {t} precedes last update {self.last_t}")
        return np.exp2(-self.lambdas * dt)

    def update(self, x: float, t: float) -> np.ndarray:
        """Decay to ``t``, absorb ``x``; returns the post-update residual ``x - mean``."""
        gamma = self.decay_factor(t)
        prior = self.w * gamma
        w = prior + 1.0
        delta = x - self.mean
        self.mean = self.mean + delta / w
        self.m2 = self.m2 * gamma + prior * delta * delta / w
        self.w = w
        self.last_t = t
        return delta * prior / w

    def weight_at(self, t: float) -> np.ndarray:
        return self.w * self.decay_factor(t)

    @property
    def lin_sum(self) -> np.ndarray:
        return self.mean * self.w

    @property
    def sq_sum(self) -> np.ndarray:
        return self.m2 + self.w * self.mean ** 2

    @property
    def var(self) -> np.ndarray:
        # the stored weight is >= 1 once anything has been absorbed
        if self.last_t is None:
            return np.zeros_like(self.w)
        return self.m2 / self.w

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.var, 0.0))

    def equals(self, other: "DampedStat1D") -> bool:
        return (self.last_t == other.last_t and np.array_equal(self.w, other.w)
                and np.array_equal(self.mean, other.mean) and np.array_equal(self.m2, other.m2))


def update_1d(stat: DampedStat1D, x: float, t: float) -> DampedStat1D:
    """Functional form of :meth:`DampedStat1D.update`; ``stat`` is left untouched."""
    out = stat.copy()
    out.update(x, t)
    return out


class DampedStat2D:
    """Two directional size streams between a pair of endpoints plus their
    damped residual-product sum (covariance)."""

    __slots__ = ("dirs", "w", "cf", "last_t", "last_res")

    def __init__(self, lambdas: Sequence[float] | np.ndarray = DEFAULT_LAMBDAS):
        lambdas = np.asarray(lambdas, dtype=float)
        self.dirs = (DampedStat1D(lambdas), DampedStat1D(lambdas))
        self.w = np.zeros(lambdas.size)
        self.cf = np.zeros(lambdas.size)
        self.last_t: float | None = None
        self.last_res = (np.zeros(lambdas.size), np.zeros(lambdas.size))

    def copy(self) -> "DampedStat2D":
        c = DampedStat2D.__new__(DampedStat2D)
        c.dirs = (self.dirs[0].copy(), self.dirs[1].copy())
        c.w = self.w.copy()
        c.cf = self.cf.copy()
        c.last_t = self.last_t
        c.last_res = self.last_res  # replaced, never mutated in place
        return c

    def update(self, direction: int, x: float, t: float, out: np.ndarray | None = None) -> np.ndarray:
        """Absorb ``x`` in ``direction`` (0/1); returns the 7 stats for that direction.

        ``out``, if given, is a (7, n_lambdas) array filled in place.
        """
        own, other = self.dirs[direction], self.dirs[1 - direction]
        res = own.update(x, t)
        lambdas = own.lambdas
        gamma = np.ones_like(lambdas) if self.last_t is None else np.exp2(-lambdas * (t - self.last_t))
        self.w = self.w * gamma + 1.0
        self.cf = self.cf * gamma + res * self.last_res[1 - direction]
        self.last_t = t
        self.last_res = (res, self.last_res[1]) if direction == 0 else (self.last_res[0], res)

        if out is None:
            out = np.empty((7, lambdas.size))
        v_own, v_oth = own.var, other.var
        s_own = np.sqrt(v_own)
        out[0] = own.w
        out[1] = own.mean
        out[2] = s_own
        out[3] = np.hypot(own.mean, other.mean)
        out[4] = np.hypot(v_own, v_oth)
        cov = out[5] = self.cf / self.w
        denom = s_own * np.sqrt(v_oth)
        pcc = np.zeros_like(cov)
        np.divide(cov, denom, out=pcc, where=denom > PCC_DENOM_FLOOR)
        np.clip(pcc, -1.0, 1.0, out=out[6])
        return out

    def equals(self, other: "DampedStat2D") -> bool:
        return (self.last_t == other.last_t and self.dirs[0].equals(other.dirs[0])
                and self.dirs[1].equals(other.dirs[1]) and np.array_equal(self.w, other.w)
                and np.array_equal(self.cf, other.cf)
                and all(np.array_equal(a, b) for a, b in zip(self.last_res, other.last_res)))


def _pair_key(kind: str, a: Hashable, b: Hashable) -> tuple[tuple, int]:
    """Order-independent key for an endpoint pair plus the direction of a->b."""
    if a <= b:
        return (kind, a, b), 0
    return (kind, b, a), 1


def stream_keys(p: PacketRecord) -> list[tuple]:
    """Every state key that extracting ``p`` reads or writes."""
    keys = [("srcmi", p.src_link, p.src_net)]
    if p.src_net is None or p.dst_net is None:
        return keys
    keys.append(("jit", p.src_net, p.dst_net))
    keys.append(_pair_key("chan", p.src_net, p.dst_net)[0])
    if p.src_port is not None and p.dst_port is not None:
        keys.append(_pair_key("sock", (p.src_net, p.src_port), (p.dst_net, p.dst_port))[0])
    return keys


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    packet_index: int

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class StateSnapshot:
    owner: int
    log_len: int
    log_tail: int
    saved: dict
    last_t: float | None
    n_processed: int


class ExtractorState:
    """Mutable map from stream key to damped statistics."""

    def __init__(self, lambdas: Sequence[float] = DEFAULT_LAMBDAS):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.streams: dict[tuple, DampedStat1D | DampedStat2D] = {}
        self.last_t: float | None = None
        self.n_processed = 0
        self._version = 0
        # (version, key) per stream update; restore truncates it back to the snapshot
        self._log: list[tuple[int, tuple]] = []

    @property
    def dim(self) -> int:
        return FEATURES_PER_LAMBDA * self.lambdas.size

    def feature_names(self) -> list[str]:
        names = []
        groups = [("srcmi", STAT_NAMES_1D), ("jitter", STAT_NAMES_1D),
                  ("channel", STAT_NAMES_2D), ("socket", STAT_NAMES_2D)]
        for lam in self.lambdas:
            for g, stats in groups:
                names.extend(f"{g}_{lam:g}_{s}" for s in stats)
        return names

    def _stat1d(self, key: tuple) -> DampedStat1D:
        s = self.streams.get(key)
        if s is None:
            s = self.streams[key] = DampedStat1D(self.lambdas)
        return s

    def _stat2d(self, key: tuple) -> DampedStat2D:
        s = self.streams.get(key)
        if s is None:
            s = self.streams[key] = DampedStat2D(self.lambdas)
        return s

    def extract(self, p: PacketRecord) -> FeatureVector:
        """Commit ``p`` to the state and return its feature vector."""
        t = p.timestamp
        if self.last_t is not None and t < self.last_t:
            raise TimeRegressionError(f"packet {p.index} at {t} precedes {self.last_t}")
        size = float(p.frame_len)
        n = self.lambdas.size
        block = np.zeros((FEATURES_PER_LAMBDA, n))
        self._version += 1
        ver = self._version
        log = self._log

        key = ("srcmi", p.src_link, p.src_net)
        s = self._stat1d(key)
        s.update(size, t)
        block[0], block[1], block[2] = s.w, s.mean, s.std
        log.append((ver, key))

        if p.src_net is not None and p.dst_net is not None:
            key = ("jit", p.src_net, p.dst_net)
            s = self._stat1d(key)
            s.update(0.0 if s.last_t is None else t - s.last_t, t)
            block[3], block[4], block[5] = s.w, s.mean, s.std
            log.append((ver, key))

            key, d = _pair_key("chan", p.src_net, p.dst_net)
            self._stat2d(key).update(d, size, t, block[6:13])
            log.append((ver, key))

            if p.src_port is not None and p.dst_port is not None:
                key, d = _pair_key("sock", (p.src_net, p.src_port), (p.dst_net, p.dst_port))
                self._stat2d(key).update(d, size, t, block[13:20])
                log.append((ver, key))

        self.last_t = t
        self.n_processed += 1
        return FeatureVector(block.T.reshape(-1), p.index)

    def extract_all(self, packets: Iterable[PacketRecord]) -> np.ndarray:
        rows = [self.extract(p).values for p in packets]
        return np.vstack(rows) if rows else np.zeros((0, self.dim))

    # ---------------------------------------------------------- snapshots

    def snapshot(self, keys: Iterable[tuple]) -> StateSnapshot:
        saved = {}
        for k in set(keys):
            st = self.streams.get(k)
            saved[k] = None if st is None else st.copy()
        tail = self._log[-1][0] if self._log else 0
        return StateSnapshot(id(self), len(self._log), tail, saved, self.last_t, self.n_processed)

    def snapshot_for(self, packets: Iterable[PacketRecord]) -> StateSnapshot:
        keys: set[tuple] = set()
        for p in packets:
            keys.update(stream_keys(p))
        return self.snapshot(keys)

    def restore(self, snap: StateSnapshot) -> None:
        """Undo everything extracted since ``snap``.

        Raises :class:`StaleSnapshotError` if a stream outside the snapshot's
        key set was modified in the meantime, or if the history the snapshot
        was taken on has itself been rolled back.
        """
        if snap.owner != id(self):
            raise StaleSnapshotError("snapshot belongs to a different extractor")
        log = self._log
        n = snap.log_len
        if n > len(log) or (n and log[n - 1][0] != snap.log_tail):
            raise StaleSnapshotError("snapshot predates a rollback of its own history")
        stale = [k for _, k in log[n:] if k not in snap.saved]
        if stale:
            raise StaleSnapshotError(f"stream changed outside snapshot, e.g. {stale[0]}")
        for k, st in snap.saved.items():
            if st is None:
                self.streams.pop(k, None)
            else:
                self.streams[k] = st.copy()
        del log[n:]
        self.last_t = snap.last_t
        self.n_processed = snap.n_processed

    def clone(self) -> "ExtractorState":
        c = ExtractorState(self.lambdas)
        c.streams = {k: v.copy() for k, v in self.streams.items()}
        c.last_t = self.last_t
        c.n_processed = self.n_processed
        c._version = self._version
        c._log = list(self._log)
        return c

    def equals(self, other: "ExtractorState") -> bool:
        """Exact equality of all statistics (bookkeeping counters excluded)."""
        if self.last_t != other.last_t or self.streams.keys() != other.streams.keys():
            return False
        return all(type(v) is type(other.streams[k]) and v.equals(other.streams[k])
                   for k, v in self.streams.items())


def extract(state: ExtractorState, p: PacketRecord) -> FeatureVector:
    return state.extract(p)


def snapshot(state: ExtractorState, keys: Iterable[tuple]) -> StateSnapshot:
    return state.snapshot(keys)


def restore(state: ExtractorState, snap: StateSnapshot) -> None:
    state.restore(snap)


def write_feature_csv(matrix: np.ndarray, path: str | Path, names: Sequence[str] | None = None,
                      indices: Sequence[int] | None = None) -> None:
    matrix = np.atleast_2d(matrix)
    names = list(names) if names is not None else [f"f{i}" for i in range(matrix.shape[1])]
    indices = range(matrix.shape[0]) if indices is None else indices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["packet_index", *names])
        for i, row in zip(indices, matrix):
            w.writerow([i, *(repr(float(v)) for v in row)])


def read_feature_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (packet indices, feature matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    if not body:
        return np.zeros(0, dtype=int), np.zeros((0, len(rows[0]) - 1))
    idx = np.array([int(r[0]) for r in body])
    return idx, np.array([[float(v) for v in r[1:]] for r in body])
