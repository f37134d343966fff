import csv
import json

import pytest

from advnids.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, EXIT_STATE, main
from advnids.config import ConfigError, load_config, parse_overrides, parse_value

FAST = ["--set", "search.n_particles=6", "--set", "search.iterations=5",
        "--set", "detectors.targets=['autoencoder', 'som']"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    common = ["--out-dir", str(out), "--seed", "3"]
    assert main(["synth", *common, "--n-devices", "4", "--duration", "600", "--burst-len", "30"]) == EXIT_OK
    data = ["--benign", str(out / "benign.pcap"), "--malicious", str(out / "malicious.pcap")]
    for cmd in ("train", "attack", "eval", "defend"):
        assert main([cmd, *common, *data, *FAST]) == EXIT_OK, cmd
    return out, common + data


def test_pipeline_outputs(pipeline):
    out, _ = pipeline
    for name in ("models/surrogate.model", "models/autoencoder.model", "models/som.model", "thresholds.csv",
                 "adversarial.pcap", "attack_trace.csv", "attack_report.json", "evasion.csv",
                 "transfer.csv", "metrics.json", "defences.csv", "defence_verdicts.csv"):
        assert (out / name).is_file(), name


def test_surrogate_evasion_is_positive(pipeline):
    rows = {r["Algorithm"]: r for r in csv.DictReader((pipeline[0] / "evasion.csv").open())}
    assert set(rows) == {"surrogate", "autoencoder", "som"}
    assert float(rows["surrogate"]["AER"]) > 0


def test_manifest_contents(pipeline):
    out, _ = pipeline
    doc = json.loads((out / "manifest_attack.json").read_text())
    assert doc["command"] == "attack" and len(doc["config_sha256"]) == 64
    assert set(doc["inputs"]) == {"benign", "malicious"}
    assert set(doc["outputs"]) == {"adversarial.pcap", "attack_trace.csv", "attack_report.json"}
    assert {"numpy", "scipy", "scikit-learn", "python", "advnids"} <= set(doc["versions"])
    assert doc["config"]["run"]["seed"] == 3
    for cmd in ("synth", "train", "eval", "defend"):
        assert (out / f"manifest_{cmd}.json").is_file()


def test_search_quality_in_metrics(pipeline):
    sq = json.loads((pipeline[0] / "metrics.json").read_text())["search_quality"]
    assert set(sq) == {"RP", "PI", "PC"} and 0 <= sq["PC"] <= 1


def test_extract_and_trace(pipeline, capsys):
    out, args = pipeline
    assert main(["extract", *args]) == EXIT_OK
    header = (out / "features_malicious.csv").open().readline().strip().split(",")
    assert header[0] == "packet_index" and len(header) == 101
    assert main(["trace", *args, *FAST, "--packets", "0", "1"]) == EXIT_OK
    rows = list(csv.reader((out / "trace.csv").open()))
    assert rows[0][:3] == ["packet", "pre_cost", "iteration"]
    assert len(rows) == 1 + 2 * 30
    assert "best cost" in capsys.readouterr().out


def test_bench_search(tmp_path):
    assert main(["bench-search", "--out-dir", str(tmp_path), "--seeds", "2", "--benchmarks", "bowl", *FAST]) == 0
    rows = list(csv.DictReader((tmp_path / "bench_search.csv").open()))
    assert [r["optimizer"] for r in rows] == ["pso", "pso-de", "de"]


def test_missing_benign_capture_names_the_key(tmp_path, capsys):
    code = main(["train", "--out-dir", str(tmp_path), "--benign", str(tmp_path / "nope.pcap")])
    assert code == EXIT_CONFIG
    assert "paths.benign" in capsys.readouterr().err


def test_every_unknown_key_is_reported(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[search]\nn_particle = 4\n[attack]\nstratgy = \"UA\"\n[bogus]\nx = 1\n")
    assert main(["bench-search", "-c", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert all(k in err for k in ("search.n_particle", "attack.stratgy", "bogus"))


def test_attack_without_models_is_an_input_error(pipeline, tmp_path):
    _, args = pipeline
    args = [a for a in args]
    args[args.index("--out-dir") + 1] = str(tmp_path)
    assert main(["attack", *args]) == EXIT_INPUT


def test_config_values_and_overrides(tmp_path):
    assert parse_value("[5, 3]") == [5, 3] and parse_value("true") is True and parse_value("UA") == "UA"
    f = tmp_path / "c.ini"
    f.write_text("[attack]\nstrategy = SA\nmax_craft_pkt = 3  # fewer\n[run]\nseed = 8\n")
    cfg = load_config(f, parse_overrides(["run.seed=9"]))
    assert cfg.attack.strategy.value == "SA" and cfg.attack.bounds.max_craft_pkt == 3
    assert cfg.seed == 9 and cfg.attack.search.seed == 9
    assert cfg.derived_seed("a") != cfg.derived_seed("b")
    assert cfg.derived_seed("a") == load_config(f, parse_overrides(["run.seed=9"])).derived_seed("a")


@pytest.mark.parametrize("override, key", [
    ("search.n_particles=2", "search"), ("attack.strategy=XX", "attack.strategy"),
    ("attack.recursion_limit=0", "attack.recursion_limit"), ("features.lambdas=[]", "features.lambdas"),
    ("detectors.targets=['svm']", "detectors.targets"), ("defences.fs_rule=2", "defences.fs_rule"),
    ("run.seed=-1", "run.seed"), ("search.cross_p='high'", "search.cross_p"),
])
def test_invalid_config_values(override, key):
    with pytest.raises(ConfigError) as e:
        load_config(None, parse_overrides([override]))
    assert key in e.value.problems


def test_malformed_override():
    with pytest.raises(ConfigError):
        parse_overrides(["seed=3"])


def test_state_errors_map_to_exit_code(pipeline, tmp_path):
    out, args = pipeline
    bad = tmp_path / "m.txt"
    bad.write_text("R_o = 0\nR_a = 1\nPS_o = 1\nPS_a = 1\nt_o = 1\nt_a = 1\n")
    assert main(["eval", *args, *FAST, "--set", f"paths.measurements='{bad}'"]) == EXIT_STATE
