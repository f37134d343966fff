"""Command-line front end: ``advnids <command> [options]``.

Commands share one configuration (see :mod:`advnids.config`).  Each writes
its outputs under ``paths.out_dir`` together with a manifest recording the
inputs, the configuration digest and library versions, and prints a short
summary on standard output.

Exit codes: 0 success, 2 configuration error, 3 unreadable input,
4 model/state error, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace
from typing import Sequence

import numpy as np

from . import __version__
from .attack import AttackConfigError, recurse_attack
from .config import ConfigError, RunConfig, load_config, parse_overrides
from .defences import FeatureSqueezer, defence_table, fit_magnet, format_defence_table
from .detectors import (ModelFormatError, NotFittedError, fit_surrogate, load_model, make_detector,
                        save_model)
from .evaluation import (MetricError, SemanticMeasurements, compute_evasion, compute_search_quality,
                         compute_semantic, compute_transfer, detection_counts, format_evasion_table,
                         write_evasion_table, write_transfer_table)
from .features import ExtractorState, StaleSnapshotError, write_feature_csv
from .mutation import MutationError, make_cost_fn
from .pcap_io import PcapError, read_pcap, write_pcap
from .search import OPTIMIZERS, TRACE_COLUMNS, benchmark_suite, optimize, write_trace_rows
from .synthetic import CorpusConfig, generate_corpus

log = logging.getLogger("advnids")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_INPUT, EXIT_STATE = 0, 1, 2, 3, 4

MODELS_DIR = "models"
SURROGATE_FILE = "surrogate.model"
ADVERSARIAL_FILE = "adversarial.pcap"
REPORT_FILE = "attack_report.json"
ATTACK_TRACE_FILE = "attack_trace.csv"


# ------------------------------------------------------------ helpers

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict[str, str]:
    import scipy
    import sklearn
    return {"advnids": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def write_manifest(cfg: RunConfig, command: str, inputs: dict[str, str | None],
                   outputs: Sequence[Path]) -> Path:
    out_dir = Path(cfg.paths.out_dir)
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "inputs": {k: {"path": v, "sha256": _sha256(Path(v))} for k, v in sorted(inputs.items()) if v},
        "outputs": {Path(p).relative_to(out_dir).as_posix(): _sha256(Path(p)) for p in outputs},
        "versions": _versions(),
    }
    path = out_dir / f"manifest_{command.replace('-', '_')}.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.paths.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def warm_extractor(cfg: RunConfig) -> tuple[ExtractorState, np.ndarray]:
    """Extractor state after streaming the benign capture, and the benign feature rows."""
    state = ExtractorState(cfg.lambdas)
    X = state.extract_all(read_pcap(cfg.paths.benign))
    return state, X


def _target_kwargs(cfg: RunConfig, kind: str) -> dict:
    d = cfg.detectors
    return {"kitnet": {"max_cluster": d.kitnet_max_cluster},
            "som": {"rows": d.som_rows, "cols": d.som_cols},
            "lof": {"k": d.lof_k},
            "rrcf": {"n_trees": d.rrcf_trees, "tree_size": d.rrcf_tree_size},
            "autoencoder": {"epochs": d.autoencoder_epochs}}[kind]


def load_models(cfg: RunConfig) -> dict:
    """``{"surrogate": ..., <target kind>: ...}`` from the models directory."""
    mdir = Path(cfg.paths.out_dir) / MODELS_DIR
    models = {"surrogate": load_model(mdir / SURROGATE_FILE)}
    for kind in cfg.detectors.targets:
        models[kind] = load_model(mdir / f"{kind}.model")
    return models


def _adversarial_path(cfg: RunConfig) -> Path:
    return Path(cfg.paths.adversarial) if cfg.paths.adversarial else Path(cfg.paths.out_dir) / ADVERSARIAL_FILE


# ------------------------------------------------------------ commands

def cmd_synth(cfg: RunConfig, n_devices: int = 10, duration: float = 1800.0,
              burst_kind: str = "flood", burst_len: int = 100) -> dict:
    """Write a synthetic benign/malicious pair (Poisson flows plus a 1 ms burst)."""
    out = _out_dir(cfg)
    benign, malicious = generate_corpus(CorpusConfig(n_devices=n_devices, duration=duration,
                                                     burst_kind=burst_kind, burst_len=burst_len,
                                                     seed=cfg.seed))
    paths = [out / "benign.pcap", out / "malicious.pcap"]
    write_pcap(benign, paths[0])
    write_pcap(malicious, paths[1])
    write_manifest(cfg, "synth", {}, paths)
    print(f"benign: {len(benign)} packets -> {paths[0]}")
    print(f"malicious: {len(malicious)} packets -> {paths[1]}")
    return {"benign": paths[0], "malicious": paths[1]}


def cmd_extract(cfg: RunConfig) -> dict:
    """Feature CSVs for each configured capture; later captures continue the benign state."""
    out = _out_dir(cfg)
    written = {}
    state = ExtractorState(cfg.lambdas)
    if cfg.paths.benign:
        X = state.extract_all(read_pcap(cfg.paths.benign))
        written["benign"] = out / "features_benign.csv"
        write_feature_csv(X, written["benign"], state.feature_names())
    for key in ("malicious", "adversarial", "replay"):
        path = getattr(cfg.paths, key)
        if path:
            X = state.clone().extract_all(read_pcap(path))
            written[key] = out / f"features_{key}.csv"
            write_feature_csv(X, written[key], state.feature_names())
    if not written:
        raise ConfigError({"paths": "no capture configured to extract"})
    write_manifest(cfg, "extract", {k: getattr(cfg.paths, k) for k in written}, list(written.values()))
    for k, p in written.items():
        print(f"{k}: {p}")
    return written


def cmd_train(cfg: RunConfig) -> dict:
    """Fit the surrogate and every target on the benign capture and save them."""
    out = _out_dir(cfg)
    mdir = out / MODELS_DIR
    mdir.mkdir(exist_ok=True)
    _, Xb = warm_extractor(cfg)
    log.info("training on %d benign rows", len(Xb))
    models = {"surrogate": fit_surrogate(Xb, seed=cfg.derived_seed("surrogate"),
                                         epochs=cfg.detectors.surrogate_epochs)}
    for kind in cfg.detectors.targets:
        log.info("fitting %s", kind)
        det = make_detector(kind, seed=cfg.derived_seed(f"target:{kind}"), **_target_kwargs(cfg, kind))
        models[kind] = det.fit(Xb)
    paths = []
    rows = []
    for name, det in models.items():
        p = mdir / (SURROGATE_FILE if name == "surrogate" else f"{name}.model")
        save_model(det, p)
        paths.append(p)
        tnr = 1.0 - float(det.classify(Xb).mean())
        rows.append((name, det.kind, det.seed, det.threshold, tnr))
    table = out / "thresholds.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "kind", "seed", "threshold", "benign_tnr"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], repr(float(r[3])), repr(r[4])])
    paths.append(table)
    write_manifest(cfg, "train", {"benign": cfg.paths.benign}, paths)
    print(f"{'model':<12}{'threshold':>14}{'benign TNR':>12}")
    for name, _, _, thr, tnr in rows:
        print(f"{name:<12}{thr:>14.6g}{tnr:>12.4f}")
    return {"models": mdir, "thresholds": table}


def cmd_attack(cfg: RunConfig) -> dict:
    """Attack the malicious capture against the saved surrogate (with recursion)."""
    out = _out_dir(cfg)
    surrogate = load_model(out / MODELS_DIR / SURROGATE_FILE)
    warm, _ = warm_extractor(cfg)
    adv = out / ADVERSARIAL_FILE
    trace = out / ATTACK_TRACE_FILE
    report = recurse_attack(cfg.paths.malicious, surrogate, warm, cfg.attack, out=adv, trace_path=trace)
    report.output = adv.name
    rpath = out / REPORT_FILE
    report.write_json(rpath)
    write_manifest(cfg, "attack", {"benign": cfg.paths.benign, "malicious": cfg.paths.malicious},
                   [adv, trace, rpath])
    print(report.summary())
    print(f"adversarial capture: {adv}")
    return {"adversarial": adv, "report": rpath, "trace": trace, "attack_report": report}


def _logs_from_report(path: Path) -> tuple[list, float] | None:
    if not path.is_file():
        return None
    doc = json.loads(path.read_text())
    final = doc["passes"][doc["accepted_passes"] - 1]
    return [SimpleNamespace(**p) for p in final["packets"]], doc["threshold"]


def cmd_eval(cfg: RunConfig) -> dict:
    """Detection/evasion rates per detector, transferability per target, search quality."""
    out = _out_dir(cfg)
    models = load_models(cfg)
    adv_path = _adversarial_path(cfg)
    warm, Xb = warm_extractor(cfg)
    Xm = warm.clone().extract_all(read_pcap(cfg.paths.malicious))
    Xa = warm.clone().extract_all(read_pcap(adv_path))
    Xr = warm.clone().extract_all(read_pcap(cfg.paths.replay)) if cfg.paths.replay else None
    attack = Path(cfg.paths.malicious).stem
    rows = []
    for name, det in models.items():
        rows.append((attack, name, compute_evasion(detection_counts(det, Xb, Xm, Xa, Xr))))
    sur = models["surrogate"]
    sur_scores = sur.score_batch(Xm)
    transfer = []
    for kind in cfg.detectors.targets:
        det = models[kind]
        transfer.append((attack, kind, compute_transfer(sur_scores, det.score_batch(Xm),
                                                        sur.threshold, det.threshold)))
    written = [out / "evasion.csv", out / "transfer.csv"]
    write_evasion_table(rows, written[0])
    write_transfer_table(transfer, written[1])
    extra = {}
    logs = _logs_from_report(out / REPORT_FILE)
    if logs is not None:
        sq = compute_search_quality(logs[0], logs[1])
        extra["search_quality"] = {"RP": sq.RP, "PI": sq.PI, "PC": sq.PC}
    if cfg.paths.measurements:
        sem = compute_semantic(SemanticMeasurements.from_file(cfg.paths.measurements))
        extra["semantic"] = {k: float(v) for k, v in sem.items()}
    if extra:
        written.append(out / "metrics.json")
        written[-1].write_text(json.dumps(extra, indent=1, sort_keys=True) + "\n")
    write_manifest(cfg, "eval", {"benign": cfg.paths.benign, "malicious": cfg.paths.malicious,
                                 "adversarial": str(adv_path), "replay": cfg.paths.replay,
                                 "measurements": cfg.paths.measurements}, written)
    print(format_evasion_table(rows))
    print()
    print(f"{'Algorithm':<12}{'ED':>8}{'phi_alg':>9}{'phi_sur':>9}{'dphi':>8}")
    for _, kind, t in transfer:
        print(f"{kind:<12}{t.ED:>8.3f}{t.phi_alg:>9.3f}{t.phi_sur:>9.3f}{t.delta_phi:>8.3f}")
    for name, vals in extra.items():
        print(f"{name}: " + ", ".join(f"{k}={'n/a' if v is None else format(v, '.3f')}"
                                      for k, v in vals.items()))
    return {"evasion": rows, "transfer": transfer, **extra}


def cmd_defend(cfg: RunConfig) -> dict:
    """Feature Squeezing and Mag-Net verdicts on benign, malicious and adversarial traffic."""
    out = _out_dir(cfg)
    mdir = out / MODELS_DIR
    base_name = cfg.defences.base
    base = load_model(mdir / (SURROGATE_FILE if base_name == "surrogate" else f"{base_name}.model"))
    warm, Xb = warm_extractor(cfg)
    classes = {"benign": Xb, "malicious": warm.clone().extract_all(read_pcap(cfg.paths.malicious)),
               "adversarial": warm.clone().extract_all(read_pcap(_adversarial_path(cfg)))}
    fs = FeatureSqueezer(rule=cfg.defences.fs_rule).calibrate(base, Xb)
    mn = fit_magnet(base, Xb, seed=cfg.derived_seed("magnet"), epochs=cfg.defences.magnet_epochs)
    verdicts = {"fs": {c: fs.detect(base, X) for c, X in classes.items()},
                "magnet": {c: mn.detect(base, X) for c, X in classes.items()}}
    counts = out / "defences.csv"
    per_row = out / "defence_verdicts.csv"
    tables = {}
    with open(counts, "w", newline="") as fh:
        w = None
        for defence, v in verdicts.items():
            tables[defence] = defence_table(v)
            for r in tables[defence]:
                if w is None:
                    w = csv.DictWriter(fh, ["defence"] + list(r))
                    w.writeheader()
                w.writerow({"defence": defence, **r})
    with open(per_row, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["traffic", "index", "fs_adversarial", "fs_malicious", "magnet_adversarial",
                    "magnet_malicious"])
        for c in classes:
            f, m = verdicts["fs"][c], verdicts["magnet"][c]
            for i in range(len(f.adversarial)):
                w.writerow([c, i, int(f.adversarial[i]), int(f.malicious[i]),
                            int(m.adversarial[i]), int(m.malicious[i])])
    write_manifest(cfg, "defend", {"benign": cfg.paths.benign, "malicious": cfg.paths.malicious,
                                   "adversarial": str(_adversarial_path(cfg))}, [counts, per_row])
    for defence, rows in tables.items():
        print(f"[{defence}] base detector: {base_name}")
        print(format_defence_table(rows))
    return {"tables": tables, "verdicts": verdicts}


def cmd_bench_search(cfg: RunConfig, seeds: int = 30, names: Sequence[str] | None = None) -> dict:
    """PSO vs DE vs PSO-DE mean best cost on the benchmark suite."""
    out = _out_dir(cfg)
    suite = benchmark_suite()
    names = list(names or suite)
    unknown = [n for n in names if n not in suite]
    if unknown:
        raise ConfigError({"bench.names": f"unknown benchmark(s) {', '.join(unknown)}"})
    base = cfg.attack.search
    results = {}
    path = out / "bench_search.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["benchmark", "optimizer", "mean_best", "std_best", "min_best", "max_best"])
        for name in names:
            fn, box = suite[name]
            for opt, prob in OPTIMIZERS.items():
                costs = np.array([optimize(fn, box, replace(base, mutate_prob=prob, seed=s)).best_cost
                                  for s in range(seeds)])
                results[(name, opt)] = costs
                w.writerow([name, opt] + [repr(float(f(costs))) for f in (np.mean, np.std, np.min, np.max)])
    write_manifest(cfg, "bench-search", {}, [path])
    print(f"{'benchmark':<14}" + "".join(f"{o:>14}" for o in OPTIMIZERS))
    for name in names:
        print(f"{name:<14}" + "".join(f"{results[(name, o)].mean():>14.4g}" for o in OPTIMIZERS))
    return {"table": path, "costs": results}


def cmd_trace(cfg: RunConfig, packets: Sequence[int] | None = None) -> dict:
    """Search traces for chosen (default: all flagged) malicious packets, without mutating the stream."""
    out = _out_dir(cfg)
    surrogate = load_model(out / MODELS_DIR / SURROGATE_FILE)
    state, _ = warm_extractor(cfg)
    chosen = None if packets is None else set(packets)
    path = out / "trace.csv"
    traced = []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["packet", "pre_cost"] + list(TRACE_COLUMNS))
        t_prev = None
        for p in read_pcap(cfg.paths.malicious):
            if t_prev is None:
                t_prev = p.ts_us
            snap = state.snapshot_for([p])
            score = float(surrogate.score_batch(state.extract(p).values[None, :])[0])
            if (chosen is None and score > surrogate.threshold) or (chosen is not None and p.index in chosen):
                state.restore(snap)
                rng = np.random.default_rng(cfg.derived_seed(f"trace:{p.index}"))
                fn = make_cost_fn(p, state, surrogate, cfg.attack.strategy, rng, cfg.attack.bounds, t_prev)
                res = optimize(fn, cfg.attack.bounds.box(cfg.attack.strategy, p),
                               replace(cfg.attack.search, seed=cfg.derived_seed(f"search:{p.index}")))
                write_trace_rows(w, res, [p.index, repr(score)])
                traced.append((p.index, score, res.best_cost))
                state.extract(p)
            t_prev = p.ts_us
    write_manifest(cfg, "trace", {"benign": cfg.paths.benign, "malicious": cfg.paths.malicious}, [path])
    print(f"{'packet':>7}{'score':>12}{'best cost':>12}")
    for i, s, c in traced:
        print(f"{i:>7}{s:>12.5g}{c:>12.5g}")
    return {"trace": path, "traced": traced}


# ------------------------------------------------------------ argument parsing

_REQUIRES = {
    "synth": (), "extract": (), "train": ("benign",), "attack": ("benign", "malicious"),
    "eval": ("benign", "malicious"), "defend": ("benign", "malicious"), "bench-search": (),
    "trace": ("benign", "malicious"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="advnids", description="Packet-level evasion of anomaly NIDS.")
    ap.add_argument("--version", action="version", version=f"advnids {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="sectioned key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
    common.add_argument("--benign", help="benign capture (paths.benign)")
    common.add_argument("--malicious", help="malicious capture (paths.malicious)")
    common.add_argument("--adversarial", help="adversarial capture (paths.adversarial)")
    common.add_argument("--out-dir", help="output directory (paths.out_dir)")
    common.add_argument("--seed", type=int, help="global seed (run.seed)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("synth", parents=[common], help="write a synthetic benign/malicious pair")
    s.add_argument("--n-devices", type=int, default=10)
    s.add_argument("--duration", type=float, default=1800.0)
    s.add_argument("--burst-kind", choices=("flood", "scan"), default="flood")
    s.add_argument("--burst-len", type=int, default=100)
    sub.add_parser("extract", parents=[common], help="feature CSVs")
    sub.add_parser("train", parents=[common], help="fit surrogate and targets")
    sub.add_parser("attack", parents=[common], help="generate the adversarial capture")
    sub.add_parser("eval", parents=[common], help="evasion and transferability tables")
    sub.add_parser("defend", parents=[common], help="Feature Squeezing and Mag-Net reports")
    b = sub.add_parser("bench-search", parents=[common], help="compare optimisers on the benchmark suite")
    b.add_argument("--seeds", type=int, default=30)
    b.add_argument("--benchmarks", nargs="*")
    t = sub.add_parser("trace", parents=[common], help="emit search traces for malicious packets")
    t.add_argument("--packets", type=int, nargs="*", help="packet indices (default: every flagged packet)")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = parse_overrides(args.set)
    flags = {"benign": args.benign, "malicious": args.malicious, "adversarial": args.adversarial,
             "out_dir": args.out_dir}
    for k, v in flags.items():
        if v is not None:
            overrides.setdefault("paths", {})[k] = v
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = args.seed
    return load_config(args.config, overrides, _REQUIRES[args.command])


def run(args: argparse.Namespace) -> dict:
    cfg = config_from_args(args)
    if args.command == "synth":
        return cmd_synth(cfg, args.n_devices, args.duration, args.burst_kind, args.burst_len)
    if args.command == "bench-search":
        return cmd_bench_search(cfg, args.seeds, args.benchmarks)
    if args.command == "trace":
        return cmd_trace(cfg, args.packets)
    return {"extract": cmd_extract, "train": cmd_train, "attack": cmd_attack, "eval": cmd_eval,
            "defend": cmd_defend}[args.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run(args)
    except ConfigError as e:
        print(f"error[config]: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PcapError, ModelFormatError, FileNotFoundError) as e:
        print(f"error[input]: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (NotFittedError, StaleSnapshotError, AttackConfigError, MutationError, MetricError) as e:
        print(f"error[state]: {e}", file=sys.stderr)
        return EXIT_STATE
    except Exception as e:  # noqa: BLE001 - last-resort categorisation for the exit code
        print(f"error[internal]: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
