"""Detection, evasion, search-quality, transferability and semantic metrics.

Rates are computed with exact rational arithmetic and only rounded for
display.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class MetricError(ValueError):
    pass


class UndefinedMetricError(MetricError):
    pass


class DegenerateNormalizationError(MetricError):
    pass


def _q(x) -> Fraction:
    """Exact rational for ints, Fractions, or decimal literals (floats go through repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x))) if isinstance(x, float) else Fraction(str(x))


@dataclass(frozen=True)
class DetectionCounts:
    rho_ben: int
    T_ben: int
    rho_mal: int
    T_mal: int
    rho_adv: int
    T_adv: int
    rho_rep: int = 0
    T_rep: int = 0

    def __post_init__(self):
        for name in ("ben", "mal", "adv", "rep"):
            rho, T = getattr(self, f"rho_{name}"), getattr(self, f"T_{name}")
            if not (0 <= rho <= T):
                raise MetricError(f"need 0 <= rho_{name} <= T_{name}, got {rho}, {T}")


@dataclass(frozen=True)
class EvaluationReport:
    TNR: Fraction | None
    MDR: Fraction
    ADR: Fraction
    RDR: Fraction | None
    AER: Fraction
    RER: Fraction | None

    def as_floats(self) -> dict[str, float | None]:
        return {k: None if v is None else float(v) for k, v in self.__dict__.items()}

    def rounded(self, places: int = 3) -> dict[str, float | None]:
        return {k: None if v is None else round(float(v), places) for k, v in self.__dict__.items()}


def _relative_reduction(mdr: Fraction, other: Fraction) -> Fraction:
    if mdr == 0:
        raise UndefinedMetricError("MDR is zero; relative reduction is undefined")
    return (mdr - other) / mdr


def evasion_from_rates(mdr, adr, rdr=None, tnr=None) -> EvaluationReport:
    """AER/RER from detection rates given directly (e.g. reference table values)."""
    mdr, adr = _q(mdr), _q(adr)
    rdr = None if rdr is None else _q(rdr)
    return EvaluationReport(None if tnr is None else _q(tnr), mdr, adr, rdr,
                            _relative_reduction(mdr, adr),
                            None if rdr is None else _relative_reduction(mdr, rdr))


def compute_evasion(c: DetectionCounts) -> EvaluationReport:
    if c.T_ben == 0 or c.T_mal == 0 or c.T_adv == 0:
        raise MetricError("benign, malicious and adversarial totals must be positive")
    tnr = Fraction(c.T_ben - c.rho_ben, c.T_ben)
    mdr = Fraction(c.rho_mal, c.T_mal)
    adr = Fraction(c.rho_adv, c.T_adv)
    rdr = Fraction(c.rho_rep, c.T_rep) if c.T_rep else None
    return EvaluationReport(tnr, mdr, adr, rdr, _relative_reduction(mdr, adr),
                            None if rdr is None else _relative_reduction(mdr, rdr))


def detection_counts(detector, benign: np.ndarray, malicious: np.ndarray, adversarial: np.ndarray,
                     replay: np.ndarray | None = None) -> DetectionCounts:
    def flagged(X):
        X = np.atleast_2d(X)
        return (int(detector.classify(X).sum()), len(X)) if len(X) else (0, 0)
    rb, tb = flagged(benign)
    rm, tm = flagged(malicious)
    ra, ta = flagged(adversarial)
    rr, tr = flagged(replay) if replay is not None else (0, 0)
    return DetectionCounts(rb, tb, rm, tm, ra, ta, rr, tr)


# ------------------------------------------------------------ search quality

@dataclass(frozen=True)
class SearchQualityReport:
    RP: float | None
    PI: float | None
    PC: float


def compute_search_quality(packets: Sequence, threshold: float, total: int | None = None
                           ) -> SearchQualityReport:
    """RP, PI and PC from per-packet attack logs.

    ``packets`` are objects with ``flagged``, ``modified``, ``pre_cost`` and
    ``post_cost`` in original order.  A flagged packet's impact is itself plus
    the run of following original packets that pass unflagged before the next
    flagged one.  RP is the mean relative score drop over flagged packets.
    """
    packets = list(packets)
    total = len(packets) if total is None else total
    flagged = [i for i, p in enumerate(packets) if p.flagged]
    modified = sum(bool(p.modified) for p in packets)
    pc = modified / total if total else 0.0
    if not flagged:
        return SearchQualityReport(None, None, pc)
    drops = []
    for i in flagged:
        pre, post = packets[i].pre_cost, packets[i].post_cost
        drops.append((pre - post) / pre if pre > 0 else 0.0)
    impacts = []
    for j, i in enumerate(flagged):
        end = flagged[j + 1] if j + 1 < len(flagged) else len(packets)
        impacts.append(end - i)
    return SearchQualityReport(float(np.mean(drops)), float(np.mean(impacts)), pc)


# ------------------------------------------------------------ transferability

@dataclass(frozen=True)
class TransferReport:
    ED: float
    phi_alg: float
    phi_sur: float

    @property
    def delta_phi(self) -> float:
        """Target threshold minus surrogate threshold, both normalised."""
        return self.phi_alg - self.phi_sur


def _minmax_with(series: np.ndarray, thr: float) -> tuple[np.ndarray, float]:
    lo = min(series.min(), thr)
    hi = max(series.max(), thr)
    if hi == lo:
        raise DegenerateNormalizationError("scores and threshold are all equal")
    return (series - lo) / (hi - lo), (thr - lo) / (hi - lo)


def compute_transfer(surrogate_scores, target_scores, t_sur: float, t_alg: float) -> TransferReport:
    a = np.asarray(surrogate_scores, dtype=float)
    b = np.asarray(target_scores, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("score series must be 1-D and of equal length")
    if a.size == 0:
        raise MetricError("empty score series")
    an, phi_sur = _minmax_with(a, t_sur)
    bn, phi_alg = _minmax_with(b, t_alg)
    return TransferReport(float(np.mean(np.abs(an - bn))), float(phi_alg), float(phi_sur))


# ------------------------------------------------------------ semantics

@dataclass(frozen=True)
class SemanticMeasurements:
    R_o: float
    R_a: float
    PS_o: float
    PS_a: float
    t_o: float
    t_a: float

    @classmethod
    def from_file(cls, path: str | Path) -> "SemanticMeasurements":
        values = {}
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = float(val)
        missing = [k for k in cls.__dataclass_fields__ if k not in values]
        if missing:
            raise MetricError(f"measurements file lacks {', '.join(missing)}")
        return cls(**{k: values[k] for k in cls.__dataclass_fields__})


def _ratio(num, den, name: str) -> Fraction:
    den = _q(den)
    if den <= 0:
        raise MetricError(f"{name}: denominator must be positive")
    return _q(num) / den


def compute_semantic(m: SemanticMeasurements) -> dict[str, Fraction]:
    return {"RRD": _ratio(m.R_a, m.R_o, "RRD"), "RPS": _ratio(m.PS_a, m.PS_o, "RPS"),
            "RTD": _ratio(m.t_a, m.t_o, "RTD")}


def rrd(r_o, r_a) -> Fraction:
    return _ratio(r_a, r_o, "RRD")


def rps(ps_o, ps_a) -> Fraction:
    return _ratio(ps_a, ps_o, "RPS")


def rtd(t_o, t_a) -> Fraction:
    return _ratio(t_a, t_o, "RTD")


# ------------------------------------------------------------ tables

EVASION_COLUMNS = ("Attack", "Algorithm", "TNR", "MDR", "ADR", "RDR", "AER", "RER")
TRANSFER_COLUMNS = ("Attack", "Algorithm", "ED", "phi_alg", "phi_sur", "delta_phi")


def _fmt(v, places: int | None) -> str:
    if v is None:
        return ""
    v = float(v)
    return f"{v:.{places}f}" if places is not None else repr(v)


def write_evasion_table(rows: Iterable[tuple[str, str, EvaluationReport]], path: str | Path,
                        places: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVASION_COLUMNS)
        for attack, alg, r in rows:
            w.writerow([attack, alg] + [_fmt(getattr(r, k), places) for k in EVASION_COLUMNS[2:]])


def write_transfer_table(rows: Iterable[tuple[str, str, TransferReport]], path: str | Path,
                         places: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRANSFER_COLUMNS)
        for attack, alg, r in rows:
            w.writerow([attack, alg] + [_fmt(v, places) for v in (r.ED, r.phi_alg, r.phi_sur, r.delta_phi)])


def format_evasion_table(rows: Iterable[tuple[str, str, EvaluationReport]]) -> str:
    out = [f"{'Attack':<10}{'Algorithm':<12}" + "".join(f"{c:>8}" for c in EVASION_COLUMNS[2:])]
    for attack, alg, r in rows:
        out.append(f"{attack:<10}{alg:<12}" + "".join(
            f"{_fmt(getattr(r, k), 3):>8}" for k in EVASION_COLUMNS[2:]))
    return "\n".join(out)
