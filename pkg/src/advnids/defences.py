"""Feature-level adversarial-input detectors: Feature Squeezing and Mag-Net.

Both operate on min-max normalised feature rows, using the base detector's
own normaliser.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detectors import MLP, Detector, NotFittedError, rmse

SQUEEZE_LEVELS = (1, 2, 3, 4)


def squeeze(X: np.ndarray, decimals: int) -> np.ndarray:
    return np.round(np.asarray(X, dtype=float), decimals)


@dataclass
class Verdicts:
    """Per-row defence verdict plus the downstream benign/malicious call."""
    adversarial: np.ndarray
    malicious: np.ndarray
    scores: np.ndarray


class FeatureSqueezer:
    """Flags a row when squeezing it moves the anomaly score more than it ever did on benign data.

    ``rule`` is ``"max"`` (the default) or a quantile in (0, 1] applied to the
    benign score differences of each precision level.
    """

    def __init__(self, levels: Sequence[int] = SQUEEZE_LEVELS, rule: str | float = "max"):
        self.levels = tuple(levels)
        self.rule = rule
        self.thresholds: dict[int, float] | None = None

    def _diffs(self, detector: Detector, Xn: np.ndarray) -> dict[int, np.ndarray]:
        base = detector.score_normalized(Xn)
        return {d: np.abs(base - detector.score_normalized(squeeze(Xn, d))) for d in self.levels}

    def calibrate(self, detector: Detector, benign: np.ndarray) -> "FeatureSqueezer":
        diffs = self._diffs(detector, detector.normalizer.transform(benign))
        if self.rule == "max":
            self.thresholds = {d: float(v.max()) for d, v in diffs.items()}
        else:
            self.thresholds = {d: float(np.quantile(v, float(self.rule))) for d, v in diffs.items()}
        return self

    def detect(self, detector: Detector, X: np.ndarray) -> Verdicts:
        if self.thresholds is None:
            raise NotFittedError("feature squeezer is not calibrated")
        Xn = detector.normalizer.transform(np.atleast_2d(X))
        diffs = self._diffs(detector, Xn)
        adv = np.zeros(len(Xn), dtype=bool)
        for d, v in diffs.items():
            adv |= v > self.thresholds[d]
        scores = detector.score_normalized(Xn)
        return Verdicts(adv, scores > detector.threshold, scores)


def fs_detect(fs: FeatureSqueezer, detector: Detector, X: np.ndarray) -> Verdicts:
    return fs.detect(detector, X)


MAGNET_DETECTORS = ((100, 64, 100), (100, 16, 100))
MAGNET_REFORMER = (100, 32, 8, 32, 100)


@dataclass
class MagNet:
    """Two reconstruction-error detectors and a reformer autoencoder."""
    seed: int = 0
    epochs: int = 1
    batch_size: int = 32
    lr: float = 1e-3
    detector_layers: tuple = MAGNET_DETECTORS
    reformer_layers: tuple = MAGNET_REFORMER
    detectors: list = field(default_factory=list)
    reformer: MLP | None = None
    thresholds: list = field(default_factory=list)
    fitted: bool = False

    def initialize(self, dim: int = 100) -> "MagNet":
        """Seeded, untrained networks sized for ``dim`` features."""
        def sized(layers):
            return (dim,) + tuple(layers[1:-1]) + (dim,)
        self.detectors = [MLP(sized(l), seed=self.seed * 10 + i) for i, l in enumerate(self.detector_layers)]
        self.reformer = MLP(sized(self.reformer_layers), seed=self.seed * 10 + 9)
        return self

    def fit(self, benign_normalized: np.ndarray) -> "MagNet":
        Xn = np.atleast_2d(benign_normalized)
        self.initialize(Xn.shape[1])
        for net in self.detectors + [self.reformer]:
            net.train(Xn, self.epochs, self.batch_size, self.lr)
        self.thresholds = [float(rmse(Xn, d.forward(Xn)).max()) for d in self.detectors]
        self.fitted = True
        return self

    def reform(self, Xn: np.ndarray) -> np.ndarray:
        if self.reformer is None:
            raise NotFittedError("Mag-Net reformer is not initialised")
        return self.reformer.forward(np.atleast_2d(Xn))

    def adversarial(self, Xn: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("Mag-Net is not fitted")
        Xn = np.atleast_2d(Xn)
        flags = np.zeros(len(Xn), dtype=bool)
        for d, t in zip(self.detectors, self.thresholds):
            flags |= rmse(Xn, d.forward(Xn)) > t
        return flags

    def detect(self, base: Detector, X: np.ndarray) -> Verdicts:
        Xn = base.normalizer.transform(np.atleast_2d(X))
        scores = base.score_normalized(self.reform(Xn))
        return Verdicts(self.adversarial(Xn), scores > base.threshold, scores)


def magnet_detect(mn: MagNet, base: Detector, X: np.ndarray) -> Verdicts:
    return mn.detect(base, X)


def fit_magnet(base: Detector, benign: np.ndarray, seed: int = 0, **kwargs) -> MagNet:
    return MagNet(seed=seed, **kwargs).fit(base.normalizer.transform(benign))


def defence_table(verdicts: dict[str, Verdicts]) -> list[dict]:
    """Counts per traffic class in the layout class x {clean, adversarial} x {benign, malicious}."""
    rows = []
    for cls, v in verdicts.items():
        row = {"traffic": cls}
        for adv_name, adv in (("clean", ~v.adversarial), ("adversarial", v.adversarial)):
            for mal_name, mal in (("benign", ~v.malicious), ("malicious", v.malicious)):
                row[f"{adv_name}_{mal_name}"] = int((adv & mal).sum())
        rows.append(row)
    return rows


def format_defence_table(rows: list[dict]) -> str:
    cols = ["clean_benign", "clean_malicious", "adversarial_benign", "adversarial_malicious"]
    out = [f"{'traffic':<12}" + "".join(f"{c:>22}" for c in cols)]
    for r in rows:
        out.append(f"{r['traffic']:<12}" + "".join(f"{r[c]:>22}" for c in cols))
    return "\n".join(out)
