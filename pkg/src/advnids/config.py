"""Run configuration: sectioned ``key = value`` files, overrides and validation.

Values are Python/TOML-style literals (``20``, ``0.5``, ``"UA"``,
``[5, 3, 1]``); anything that does not parse as a literal is kept as a bare
string.  Every problem found during validation is collected so a single
error lists all offending keys.
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attack import AttackConfig, AttackConfigError
from .detectors import TARGET_KINDS
from .features import DEFAULT_LAMBDAS
from .mutation import MutationBounds, MutationError, Strategy
from .search import SearchConfig, SearchConfigError


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` maps ``section.key`` to a message."""

    def __init__(self, problems: dict[str, str]):
        self.problems = dict(problems)
        lines = [f"  {k}: {v}" for k, v in sorted(self.problems.items())]
        super().__init__("invalid configuration:\n" + "\n".join(lines))


@dataclass
class PathsConfig:
    benign: str | None = None
    malicious: str | None = None
    adversarial: str | None = None
    replay: str | None = None
    measurements: str | None = None
    out_dir: str = "out"


@dataclass
class DetectorConfig:
    targets: tuple = TARGET_KINDS
    surrogate_epochs: int = 1
    autoencoder_epochs: int = 1
    kitnet_max_cluster: int = 10
    som_rows: int = 10
    som_cols: int = 10
    lof_k: int = 20
    rrcf_trees: int = 40
    rrcf_tree_size: int = 256


@dataclass
class DefenceConfig:
    base: str = "surrogate"
    fs_rule: object = "max"
    magnet_epochs: int = 1


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    lambdas: tuple = DEFAULT_LAMBDAS
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defences: DefenceConfig = field(default_factory=DefenceConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        a = self.attack
        return {
            "paths": asdict(self.paths),
            "features": {"lambdas": list(self.lambdas)},
            "detectors": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.detectors).items()},
            "attack": {"strategy": a.strategy.value, "recursion_limit": a.recursion_limit,
                       "max_time_window": a.bounds.max_time_window, "max_craft_pkt": a.bounds.max_craft_pkt,
                       "max_packet_size": a.bounds.max_packet_size},
            "search": {k: v for k, v in asdict(a.search).items() if k != "seed"},
            "defences": asdict(self.defences),
            "run": {"seed": self.seed},
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, paths included."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def derived_seed(self, label: str) -> int:
        """Seed for one stochastic component; distinct labels give independent streams."""
        ss = np.random.SeedSequence([self.seed, zlib.crc32(label.encode())])
        return int(ss.generate_state(1)[0])


_SEARCH_KEYS = tuple(f.name for f in fields(SearchConfig) if f.name != "seed")
_SCHEMA = {
    "paths": tuple(f.name for f in fields(PathsConfig)),
    "features": ("lambdas",),
    "detectors": tuple(f.name for f in fields(DetectorConfig)),
    "attack": ("strategy", "recursion_limit", "max_time_window", "max_craft_pkt", "max_packet_size"),
    "search": _SEARCH_KEYS,
    "defences": tuple(f.name for f in fields(DefenceConfig)),
    "run": ("seed",),
}


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config_file(path: str | Path) -> dict[str, dict]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as e:
        raise ConfigError({"<file>": f"{path}: {e}"}) from e
    return {s: {k: parse_value(v) for k, v in cp.items(s)} for s in cp.sections()}


def parse_overrides(items) -> dict[str, dict]:
    """``section.key=value`` strings into a nested dict."""
    out: dict[str, dict] = {}
    bad = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            bad[item] = "override must look like section.key=value"
            continue
        out.setdefault(section, {})[name] = parse_value(val)
    if bad:
        raise ConfigError(bad)
    return out


def merge(*layers: dict) -> dict:
    merged: dict[str, dict] = {}
    for layer in layers:
        for section, values in layer.items():
            merged.setdefault(section, {}).update(values)
    return merged


def _check_type(problems, key, value, kind):
    if kind is int and not (isinstance(value, int) and not isinstance(value, bool)):
        problems[key] = f"expected an integer, got {value!r}"
        return False
    if kind is float and not (isinstance(value, (int, float)) and not isinstance(value, bool)):
        problems[key] = f"expected a number, got {value!r}"
        return False
    return True


def build_config(raw: dict[str, dict], require: tuple[str, ...] = ()) -> RunConfig:
    """Validate ``raw`` and build a :class:`RunConfig`.

    ``require`` names the ``paths`` keys whose files must exist.
    """
    problems: dict[str, str] = {}
    for section, values in raw.items():
        if section not in _SCHEMA:
            problems[section] = "unknown section"
            continue
        for k in values:
            if k not in _SCHEMA[section]:
                problems[f"{section}.{k}"] = "unknown key"

    def get(section, key, default):
        return raw.get(section, {}).get(key, default)

    pd = PathsConfig()
    paths_kw = {k: get("paths", k, getattr(pd, k)) for k in _SCHEMA["paths"]}
    paths = PathsConfig(**{k: None if v is None else str(v) for k, v in paths_kw.items()})
    for k in require:
        p = getattr(paths, k)
        if p is None:
            problems[f"paths.{k}"] = "required for this command but not set"
        elif not Path(p).is_file():
            problems[f"paths.{k}"] = f"file not found: {p}"
    for k in ("adversarial", "replay", "measurements"):
        p = getattr(paths, k)
        if k not in require and p is not None and not Path(p).is_file():
            problems[f"paths.{k}"] = f"file not found: {p}"

    lambdas = get("features", "lambdas", DEFAULT_LAMBDAS)
    if not (isinstance(lambdas, (list, tuple)) and lambdas
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in lambdas)):
        problems["features.lambdas"] = f"expected a non-empty list of positive numbers, got {lambdas!r}"
        lambdas = DEFAULT_LAMBDAS
    lambdas = tuple(float(x) for x in lambdas)

    dd = DetectorConfig()
    det_kw = {}
    for k in _SCHEMA["detectors"]:
        v = get("detectors", k, getattr(dd, k))
        if k == "targets":
            if isinstance(v, str):
                v = [v]
            unknown = [t for t in v if t not in TARGET_KINDS] if isinstance(v, (list, tuple)) else None
            if unknown is None or unknown:
                problems["detectors.targets"] = f"choose from {', '.join(TARGET_KINDS)}; got {v!r}"
                v = dd.targets
            v = tuple(v)
        elif _check_type(problems, f"detectors.{k}", v, int) and v < 1:
            problems[f"detectors.{k}"] = "must be at least 1"
        det_kw[k] = v
    detectors = DetectorConfig(**det_kw)

    sc = SearchConfig()
    search_kw = {}
    for k in _SEARCH_KEYS:
        v = get("search", k, getattr(sc, k))
        if _check_type(problems, f"search.{k}", v, type(getattr(sc, k))):
            search_kw[k] = v
    seed = get("run", "seed", 0)
    if not _check_type(problems, "run.seed", seed, int) or seed < 0:
        problems.setdefault("run.seed", "must be a non-negative integer")
        seed = 0
    search = SearchConfig()
    try:
        search = SearchConfig(seed=seed, **search_kw)
    except SearchConfigError as e:
        problems.setdefault("search", str(e))

    strategy = get("attack", "strategy", "UA")
    try:
        strategy = Strategy(str(strategy).upper())
    except ValueError:
        problems["attack.strategy"] = f"expected RA, SA or UA, got {strategy!r}"
        strategy = Strategy.UA
    bd = MutationBounds()
    bkw = {}
    for k, kind in (("max_time_window", float), ("max_craft_pkt", int), ("max_packet_size", int)):
        v = get("attack", k, getattr(bd, k))
        if _check_type(problems, f"attack.{k}", v, kind):
            bkw[k] = v
    bounds = bd
    try:
        bounds = MutationBounds(**bkw)
    except MutationError as e:
        problems.setdefault("attack.bounds", str(e))
    rl = get("attack", "recursion_limit", 3)
    attack = AttackConfig()
    if _check_type(problems, "attack.recursion_limit", rl, int):
        try:
            attack = AttackConfig(bounds=bounds, strategy=strategy, search=search, recursion_limit=rl, seed=seed)
        except AttackConfigError as e:
            problems["attack.recursion_limit"] = str(e)

    dc = DefenceConfig()
    base = get("defences", "base", dc.base)
    if base != "surrogate" and base not in TARGET_KINDS:
        problems["defences.base"] = f"expected surrogate or a target kind, got {base!r}"
    rule = get("defences", "fs_rule", dc.fs_rule)
    if rule != "max" and not (isinstance(rule, (int, float)) and not isinstance(rule, bool) and 0 < rule <= 1):
        problems["defences.fs_rule"] = f"expected \"max\" or a quantile in (0, 1], got {rule!r}"
    me = get("defences", "magnet_epochs", dc.magnet_epochs)
    if _check_type(problems, "defences.magnet_epochs", me, int) and me < 1:
        problems["defences.magnet_epochs"] = "must be at least 1"

    if problems:
        raise ConfigError(problems)
    return RunConfig(paths=paths, lambdas=lambdas, detectors=detectors, attack=attack,
                     defences=DefenceConfig(base=base, fs_rule=rule, magnet_epochs=me), seed=seed)


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                require: tuple[str, ...] = ()) -> RunConfig:
    """File values (if any), then ``overrides`` on top; validated."""
    raw = read_config_file(path) if path else {}
    return build_config(merge(raw, overrides or {}), require)
