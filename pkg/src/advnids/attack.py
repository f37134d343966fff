"""Attack driver: stream a malicious capture, mutate every packet the surrogate flags.

Packets scoring at or below the surrogate threshold are committed to the
extractor and copied through.  A flagged packet gets a search over the
mutation box; the cheapest mutation found (the identity included) is
materialised, committed and written in place.  Applying a delay shifts
every later packet by the same amount, so each packet's own delay is
measured against its position on the adversarial timeline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import ExtractorState
from .mutation import (AdversarialPacketSet, MutationBounds, MutationVector, Provenance, Strategy,
                       make_cost_fn, materialize)
from .pcap_io import OrderingError, PacketRecord, read_pcap, reindex, write_pcap
from .search import TRACE_COLUMNS, SearchConfig, optimize, write_trace_rows

REPORT_SCHEMA_VERSION = 1


class AttackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    bounds: MutationBounds = MutationBounds()
    strategy: Strategy = Strategy.UA
    search: SearchConfig = SearchConfig()
    recursion_limit: int = 3
    seed: int = 0
    debug_dump_dir: str | None = None

    def __post_init__(self):
        if self.recursion_limit < 1:
            raise AttackConfigError("recursion_limit must be at least 1")


@dataclass
class PacketLog:
    index: int
    flagged: bool
    pre_cost: float
    post_cost: float
    delay: float = 0.0
    n_c: float = 0.0
    s_c: float = 0.0
    injected: int = 0
    emitted: int = 1
    modified: bool = False


@dataclass
class PassReport:
    pass_no: int
    packets: list[PacketLog] = field(default_factory=list)
    n_input: int = 0
    n_emitted: int = 0
    flagged: int = 0
    modified: int = 0
    injected: int = 0
    residual: int = 0
    committed_scores: list[float] = field(default_factory=list)

    def totals(self) -> dict:
        return {"input": self.n_input, "emitted": self.n_emitted, "flagged": self.flagged,
                "modified": self.modified, "injected": self.injected, "residual": self.residual}


@dataclass
class AttackReport:
    threshold: float
    strategy: str
    passes: list[PassReport] = field(default_factory=list)
    output: str | None = None
    accepted_passes: int = 0
    adversarial: list[PacketRecord] = field(default_factory=list, repr=False)

    @property
    def final(self) -> PassReport:
        return self.passes[self.accepted_passes - 1]

    @property
    def residual_sequence(self) -> list[int]:
        return [p.residual for p in self.passes]

    def to_json(self) -> str:
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "threshold": self.threshold,
            "strategy": self.strategy,
            "output": self.output,
            "accepted_passes": self.accepted_passes,
            "passes": [{"pass": p.pass_no, "totals": p.totals(),
                        "packets": [asdict(x) for x in p.packets]} for p in self.passes],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def summary(self) -> str:
        lines = [f"{'pass':>4} {'input':>7} {'flagged':>7} {'modified':>8} {'injected':>8} "
                 f"{'emitted':>7} {'residual':>8}"]
        for p in self.passes:
            t = p.totals()
            mark = "" if p.pass_no <= self.accepted_passes else "  (discarded)"
            lines.append(f"{p.pass_no:>4} {t['input']:>7} {t['flagged']:>7} {t['modified']:>8} "
                         f"{t['injected']:>8} {t['emitted']:>7} {t['residual']:>8}{mark}")
        return "\n".join(lines)


def _seed_for(seed: int, pass_no: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, pass_no, index]).generate_state(1)[0])


def _attack_pass(packets: Sequence[PacketRecord], surrogate, state: ExtractorState,
                 cfg: AttackConfig, pass_no: int, trace_writer=None) -> tuple[list[PacketRecord], PassReport]:
    thr = surrogate.threshold
    if thr is None:
        raise AttackConfigError("surrogate has no threshold")
    if state.dim != surrogate.normalizer.lo.size:
        raise AttackConfigError(f"extractor emits {state.dim} features, surrogate expects "
                                f"{surrogate.normalizer.lo.size}")
    report = PassReport(pass_no, n_input=len(packets))
    out: list[PacketRecord] = []
    offset = 0
    t_prev = None if state.last_t is None else int(round(state.last_t * 1e6))
    for p in packets:
        q = p.retimed(p.ts_us + offset)
        if t_prev is not None and q.ts_us < t_prev:
            raise OrderingError(f"packet {p.index} at {q.ts_us} us precedes previous packet at {t_prev} us")
        if t_prev is None:
            t_prev = q.ts_us
        snap = state.snapshot_for([q])
        score = float(surrogate.score_batch(state.extract(q).values[None, :])[0])
        if score <= thr:
            out.append(q)
            report.committed_scores.append(score)
            report.packets.append(PacketLog(p.index, False, score, score))
            t_prev = q.ts_us
            continue

        state.restore(snap)
        report.flagged += 1
        rng = np.random.default_rng(_seed_for(cfg.seed, pass_no, p.index))
        cost_fn = make_cost_fn(q, state, surrogate, cfg.strategy, rng, cfg.bounds, t_prev)
        box = cfg.bounds.box(cfg.strategy, q)
        res = optimize(cost_fn, box, replace(cfg.search, seed=_seed_for(cfg.search.seed, pass_no, p.index)))
        if trace_writer is not None:
            write_trace_rows(trace_writer, res, [pass_no, p.index])
        pos = res.best_position if res.best_cost < score else np.zeros(len(box[0]))
        t_m_us = q.ts_us + int(round(pos[0] * 1e6))
        v = MutationVector.from_position(pos, q.timestamp)
        aps = materialize(v, q, None, cfg.strategy, rng, cfg.bounds, t_m_us=t_m_us, t_prev_us=t_prev)
        if cfg.debug_dump_dir:
            Path(cfg.debug_dump_dir).mkdir(parents=True, exist_ok=True)
            aps.write(Path(cfg.debug_dump_dir) / f"pass{pass_no}_pkt{p.index}.pcap")
        scores = _commit(aps, state, surrogate)
        report.committed_scores.extend(scores)
        k = len(aps.packets) - 1
        delay = (t_m_us - q.ts_us) / 1e6
        modified = k > 0 or t_m_us != q.ts_us
        report.modified += int(modified)
        report.injected += k
        report.packets.append(PacketLog(p.index, True, score, max(scores), delay, float(pos[1]),
                                        float(pos[2]) if len(pos) > 2 else 0.0, k, k + 1, modified))
        offset += t_m_us - q.ts_us
        t_prev = t_m_us
        out.extend(aps.packets)
    report.n_emitted = len(out)
    report.residual = sum(s > thr for s in report.committed_scores)
    return reindex(out), report


def _commit(aps: AdversarialPacketSet, state: ExtractorState, surrogate) -> list[float]:
    rows = np.array([state.extract(x).values for x in aps.packets])
    return [float(s) for s in surrogate.score_batch(rows)]


def run_attack(malicious: str | Path | Sequence[PacketRecord], surrogate, warm_state: ExtractorState,
               cfg: AttackConfig = AttackConfig(), out: str | Path | None = None,
               trace_path: str | Path | None = None) -> AttackReport:
    """One attack pass; ``warm_state`` is cloned, not modified."""
    return recurse_attack(malicious, surrogate, warm_state, replace(cfg, recursion_limit=1), out, trace_path)


def recurse_attack(malicious: str | Path | Sequence[PacketRecord], surrogate, warm_state: ExtractorState,
                   cfg: AttackConfig = AttackConfig(), out: str | Path | None = None,
                   trace_path: str | Path | None = None) -> AttackReport:
    """Re-run the attack on its own output until nothing is flagged or the pass limit is hit.

    A pass that leaves more packets above threshold than its input had is
    discarded and recursion stops; the report still lists it.
    """
    packets = read_pcap(malicious) if isinstance(malicious, (str, Path)) else list(malicious)
    report = AttackReport(float(surrogate.threshold), cfg.strategy.value)
    trace_fh = open(trace_path, "w", newline="") if trace_path else None
    writer = None
    if trace_fh:
        writer = csv.writer(trace_fh)
        writer.writerow(["pass", "packet"] + list(TRACE_COLUMNS))
    try:
        current = packets
        for pass_no in range(1, cfg.recursion_limit + 1):
            emitted, rep = _attack_pass(current, surrogate, warm_state.clone(), cfg, pass_no, writer)
            report.passes.append(rep)
            if pass_no > 1 and rep.residual > report.passes[-2].residual:
                break
            report.accepted_passes = pass_no
            current = emitted
            if rep.residual == 0 or rep.flagged == 0:
                break
    finally:
        if trace_fh:
            trace_fh.close()
    if out is not None:
        write_pcap(current, out)
        report.output = str(out)
    report.adversarial = list(current)
    return report
