"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line (collected and repeated in the
terminal summary by ``conftest.py``).  Running this file directly executes
the same checks without pytest.
"""

import copy
import json
import sys
import time
from collections import Counter
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from golden import golden_pcap  # noqa: E402
from oracles import brute_force_features  # noqa: E402
from tracegen import random_trace  # noqa: E402

from advnids.attack import AttackConfig, recurse_attack  # noqa: E402
from advnids.cli import main  # noqa: E402
from advnids.defences import FeatureSqueezer, fit_magnet  # noqa: E402
from advnids.detectors import fit_surrogate, make_detector  # noqa: E402
from advnids.evaluation import evasion_from_rates, rps, rrd, rtd  # noqa: E402
from advnids.features import DEFAULT_LAMBDAS, ExtractorState  # noqa: E402
from advnids.pcap_io import read_pcap, write_pcap  # noqa: E402
from advnids.search import MUTATION_BOX, OPTIMIZERS, SearchConfig, benchmark_suite, optimize  # noqa: E402
from advnids.synthetic import CorpusConfig, generate_corpus  # noqa: E402

DATA = Path(__file__).parent / "data"


def verdict(number: int, title: str, failures: list[str], detail: str = "") -> None:
    status = "PASS" if not failures else "FAIL"
    line = f"{status} criterion {number:>2}: {title}"
    if detail:
        line += f" ({detail})"
    print("\n" + line)
    for f in failures:
        print(f"    {f}")
    assert not failures, "; ".join(failures)


# ------------------------------------------------------------------ 1

REFERENCE_RATES = [
    # attack, detector, TNR, MDR, ADR, RDR, AER, RER
    ("PS", "Kitsune", 1.000, 0.74, 0.00, 0.00, 1.00, 1.00),
    ("PS", "SOM", 0.993, 0.89, 0.05, 0.15, 0.94, 0.83),
    ("PS", "LOF", 0.999, 0.98, 0.98, 0.98, 0.00, 0.00),
    ("PS", "RRCF", 0.992, 0.93, 0.71, 0.71, 0.24, 0.23),
    ("PS", "OCSVM", 0.999, 0.99, 0.98, 0.99, 0.01, 0.00),
    ("OD", "Kitsune", 1.000, 0.41, 0.00, 0.25, 1.00, 0.39),
    ("OD", "SOM", 0.993, 0.66, 0.29, 0.53, 0.55, 0.19),
    ("OD", "LOF", 0.999, 0.95, 0.95, 0.97, 0.00, -0.01),
    ("OD", "RRCF", 0.995, 0.64, 0.46, 0.55, 0.28, 0.15),
    ("OD", "OCSVM", 0.999, 0.84, 0.83, 0.88, 0.00, -0.05),
    ("HF", "Kitsune", 1.000, 1.00, 0.00, 0.33, 1.00, 0.67),
    ("HF", "SOM", 0.993, 1.00, 0.91, 0.77, 0.09, 0.23),
    ("HF", "LOF", 0.999, 1.00, 1.00, 1.00, 0.00, 0.00),
    ("HF", "RRCF", 0.978, 1.00, 1.00, 1.00, 0.00, 0.00),
    ("HF", "OCSVM", 0.999, 1.00, 1.00, 1.00, 0.00, 0.00),
]


def test_criterion_01_evasion_formulas_reproduce_reference_rates():
    t0 = time.perf_counter()
    failures = []
    for attack, det, tnr, mdr, adr, rdr, aer, rer in REFERENCE_RATES:
        r = evasion_from_rates(mdr, adr, rdr, tnr)
        for name, got, want in (("AER", r.AER, aer), ("RER", r.RER, rer)):
            if abs(float(got) - want) > 0.005:
                failures.append(f"{attack}/{det} {name}: computed {float(got):.4f}, reference {want:.2f}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 1.0:
        failures.append(f"took {elapsed:.2f} s")
    verdict(1, "AER/RER from reference MDR/ADR/RDR within 0.005", failures,
            f"{2 * len(REFERENCE_RATES) - len(failures)}/{2 * len(REFERENCE_RATES)} cells")


# ------------------------------------------------------------------ 2

def test_criterion_02_semantic_ratios():
    cases = [("RRD(6.602, 173.393)", rrd(6.602, 173.393), 26.264, 1e-3),
             ("RRD(6.602, 10.303)", rrd(6.602, 10.303), 1.561, 1e-3),
             ("RPS(155, 150)", rps(155, 150), 0.968, 1e-3),
             ("RTD(1.99, 19.99)", rtd(1.99, 19.99), 10.04, 1e-2)]
    failures = [f"{name} = {float(got):.5f}, expected {want} +/- {tol}"
                for name, got, want, tol in cases if abs(float(got) - want) > tol]
    verdict(2, "semantic ratio formulas", failures)


# ------------------------------------------------------------------ 3

def test_criterion_03_extractor_matches_brute_force_oracle():
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst = 0.0
    failures = []
    for i in range(100):
        ps = random_trace(rng, int(rng.integers(1, 1001)))
        got = ExtractorState().extract_all(ps)
        err = float(np.max(np.abs(got - brute_force_features(ps, DEFAULT_LAMBDAS))))
        worst = max(worst, err)
        if got.shape != (len(ps), 100):
            failures.append(f"trace {i}: shape {got.shape}")
        if not err <= 1e-9:
            failures.append(f"trace {i}: max abs error {err:.3g}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 60:
        failures.append(f"took {elapsed:.1f} s")
    verdict(3, "100 random traces vs brute-force oracle within 1e-9", failures,
            f"max error {worst:.2g}, {elapsed:.1f} s")


# ------------------------------------------------------------------ 4

def test_criterion_04_snapshot_cycles_match_deepcopy():
    rng = np.random.default_rng(7)
    state = ExtractorState()
    history = random_trace(rng, 400, long_gaps=False)
    state.extract_all(history[:200])
    t = history[199].ts_us
    failures = []
    for cycle in range(1000):
        oracle = copy.deepcopy(state)
        cands = []
        for j in range(int(rng.integers(0, 7))):
            t_c = t + int(rng.integers(0, 1_000_000))
            cands.append(history[int(rng.integers(len(history)))].retimed(t_c, index=j))
        cands.sort(key=lambda p: p.ts_us)
        snap = state.snapshot_for(cands)
        for c in cands:
            state.extract(c)
        state.restore(snap)
        if not state.equals(oracle):
            failures.append(f"cycle {cycle}: restored state differs")
            break
        # advance the real stream so later cycles start from fresh states
        t += int(rng.integers(0, 300_000))
        nxt = history[int(rng.integers(len(history)))].retimed(t)
        a, b = state.extract(nxt).values, oracle.extract(nxt).values
        if not np.array_equal(a, b):
            failures.append(f"cycle {cycle}: next packet features differ")
            break
    verdict(4, "1000 snapshot/process/restore cycles equal the deep-copy oracle", failures)


# ------------------------------------------------------------------ 5

def test_criterion_05_optimizer_properties():
    t0 = time.perf_counter()
    failures = []
    suite = benchmark_suite()
    means = {}
    for name, (fn, box) in suite.items():
        lo, hi = box
        for opt, prob in OPTIMIZERS.items():
            costs = []
            for seed in range(30):
                res = optimize(fn, box, SearchConfig(mutate_prob=prob, seed=seed))
                h = res.best_history
                if any(b > a for a, b in zip(h, h[1:])):
                    failures.append(f"{name}/{opt}/seed {seed}: best cost increased")
                P = np.array([r.position for r in res.trace])
                if np.any(P < lo) or np.any(P > hi):
                    failures.append(f"{name}/{opt}/seed {seed}: position outside the box")
                costs.append(res.best_cost)
            means[(name, opt)] = float(np.mean(costs))

    # the bowl is scaled to the box, so its diagonal in those units is sqrt(d)
    fn, box = suite["bowl"]
    diag = float(np.sqrt(len(MUTATION_BOX[0])))
    worst = max(optimize(fn, box, SearchConfig(seed=s)).best_cost for s in range(20))
    if worst > 1e-3 * diag:
        failures.append(f"bowl: worst best cost {worst:.3g} > {1e-3 * diag:.3g}")

    hybrid, pso = means[("ua_plateau", "pso-de")], means[("ua_plateau", "pso")]
    if not hybrid <= pso:
        failures.append(f"ua_plateau: PSO-DE mean {hybrid:.3g} > PSO mean {pso:.3g}")
    elapsed = time.perf_counter() - t0
    if elapsed >= 300:
        failures.append(f"took {elapsed:.0f} s")
    verdict(5, "optimizer monotonicity, bounds, bowl convergence and PSO-DE <= PSO", failures,
            f"{elapsed:.0f} s")


# ------------------------------------------------------------------ 6, 7, 9

@pytest.fixture(scope="module")
def end_to_end():
    t0 = time.perf_counter()
    benign, malicious = generate_corpus(CorpusConfig())
    warm = ExtractorState()
    Xb = warm.extract_all(benign)
    surrogate = fit_surrogate(Xb, seed=0)
    target = make_detector("autoencoder", seed=12345).fit(Xb)
    Xm = warm.clone().extract_all(malicious)
    report = recurse_attack(malicious, surrogate, warm, AttackConfig())
    Xa = warm.clone().extract_all(report.adversarial)
    return dict(benign=benign, malicious=malicious, Xb=Xb, Xm=Xm, Xa=Xa, surrogate=surrogate,
                target=target, report=report, elapsed=time.perf_counter() - t0)


def semantics_problems(original, adversarial, report) -> list[str]:
    problems = []
    if Counter(p.payload for p in original) - Counter(p.payload for p in adversarial):
        problems.append("an original payload is missing from the adversarial capture")
    ts = [p.ts_us for p in adversarial]
    if any(b < a for a, b in zip(ts, ts[1:])):
        problems.append("timestamps decrease")
    for rep in report.passes[:report.accepted_passes]:
        for log in rep.packets:
            if not 0 <= log.delay <= 1.0:
                problems.append(f"pass {rep.pass_no} packet {log.index}: delay {log.delay}")
            if log.injected > 5:
                problems.append(f"pass {rep.pass_no} packet {log.index}: {log.injected} injected")
    return problems


def test_criterion_06_end_to_end_evasion(end_to_end):
    e = end_to_end
    sur, tgt = e["surrogate"], e["target"]
    mdr_sur = float(sur.classify(e["Xm"]).mean())
    adr_sur = float(sur.classify(e["Xa"]).mean())
    mdr_tgt = float(tgt.classify(e["Xm"]).mean())
    adr_tgt = float(tgt.classify(e["Xa"]).mean())
    failures = []
    if mdr_sur < 0.8:
        failures.append(f"surrogate MDR {mdr_sur:.3f} < 0.8")
    aer = (mdr_sur - adr_sur) / mdr_sur if mdr_sur else float("nan")
    if not aer >= 0.5:
        failures.append(f"surrogate AER {aer:.3f} < 0.5")
    if not adr_tgt < mdr_tgt:
        failures.append(f"target ADR {adr_tgt:.3f} not below MDR {mdr_tgt:.3f}")
    rep = e["report"]
    seq = rep.residual_sequence[:rep.accepted_passes]
    if any(b > a for a, b in zip(seq, seq[1:])):
        failures.append(f"residual flagged counts {seq} increase")
    if e["elapsed"] >= 600:
        failures.append(f"took {e['elapsed']:.0f} s")
    verdict(6, "end-to-end evasion on the synthetic corpus", failures,
            f"surrogate MDR {mdr_sur:.2f} AER {aer:.2f}; target MDR {mdr_tgt:.2f} ADR {adr_tgt:.2f}; "
            f"residuals {rep.residual_sequence}; {e['elapsed']:.0f} s")


def test_criterion_07_semantics_preserved(end_to_end, tmp_path):
    e = end_to_end
    out = tmp_path / "adv.pcap"
    write_pcap(e["report"].adversarial, out)
    failures = semantics_problems(e["malicious"], read_pcap(out), e["report"])
    verdict(7, "payloads kept, delay <= 1 s, <= 5 injected, ordered timestamps", failures[:10])


# ------------------------------------------------------------------ 8

def test_criterion_08_golden_pcap_round_trip(tmp_path):
    failures = []
    golden = DATA / "golden_three_tcp.pcap"
    if golden.read_bytes() != golden_pcap():
        failures.append("stored golden file differs from its hand assembly")
    out = tmp_path / "rt.pcap"
    write_pcap(read_pcap(golden), out)
    if out.read_bytes() != golden.read_bytes():
        failures.append("re-serialised golden file is not byte-identical")
    verdict(8, "golden pcap re-serialises byte-identically", failures)


# ------------------------------------------------------------------ 9

def test_criterion_09_defence_directions(end_to_end):
    e = end_to_end
    sur = e["surrogate"]
    fs = FeatureSqueezer().calibrate(sur, e["Xb"])
    ben = fs.detect(sur, e["Xb"]).adversarial.mean()
    mal = fs.detect(sur, e["Xm"]).adversarial.mean()
    adv = fs.detect(sur, e["Xa"]).adversarial.mean()
    failures = []
    if ben != 0:
        failures.append(f"FS flags {ben:.4f} of its benign calibration rows")
    if not adv <= mal:
        failures.append(f"FS alert rate on adversarial {adv:.3f} > malicious {mal:.3f}")
    mn = fit_magnet(sur, e["Xb"], seed=1)
    outliers = np.random.default_rng(3).uniform(0, 1, size=(500, e["Xb"].shape[1]))
    before = float(sur.score_normalized(outliers).mean())
    after = float(sur.score_normalized(mn.reform(outliers)).mean())
    if not after < before:
        failures.append(f"reformer did not lower the mean outlier score ({before:.4f} -> {after:.4f})")
    verdict(9, "Feature Squeezing and Mag-Net directions", failures,
            f"FS alerts benign {ben:.3f} malicious {mal:.3f} adversarial {adv:.3f}; "
            f"outlier score {before:.3f} -> {after:.3f}")


# ------------------------------------------------------------------ 10

def _pipeline(out: Path) -> None:
    common = ["--out-dir", str(out), "--seed", "11", "--set", "detectors.targets=['autoencoder']"]
    data = ["--benign", str(out / "benign.pcap"), "--malicious", str(out / "malicious.pcap")]
    assert main(["synth", *common]) == 0
    for cmd in ("train", "attack", "eval"):
        assert main([cmd, *common, *data]) == 0, cmd


def test_criterion_10_pipeline_is_deterministic(tmp_path):
    a, b = tmp_path / "run_a", tmp_path / "run_b"
    _pipeline(a)
    _pipeline(b)
    failures = []
    for name in ("adversarial.pcap", "attack_trace.csv", "attack_report.json", "evasion.csv",
                 "transfer.csv", "metrics.json", "models/surrogate.model"):
        if (a / name).read_bytes() != (b / name).read_bytes():
            failures.append(f"{name} differs between runs")
    doc = json.loads((a / "attack_report.json").read_text())
    failures += semantics_problems(read_pcap(a / "malicious.pcap"), read_pcap(a / "adversarial.pcap"),
                                   _report_view(doc))
    verdict(10, "same seed twice gives byte-identical captures, traces and reports", failures)


def _report_view(doc):
    passes = [SimpleNamespace(pass_no=p["pass"], packets=[SimpleNamespace(**x) for x in p["packets"]])
              for p in doc["passes"]]
    return SimpleNamespace(passes=passes, accepted_passes=doc["accepted_passes"])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
