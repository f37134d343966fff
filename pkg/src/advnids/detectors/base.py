from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class NotFittedError(RuntimeError):
    pass


class EmptyInputError(ValueError):
    pass


class Normalizer:
    """Per-feature min-max scaling learned from benign data.

    Test values are clipped to [0, 1]; constant features map to 0.
    """

    def __init__(self, lo: np.ndarray | None = None, hi: np.ndarray | None = None):
        self.lo = None if lo is None else np.asarray(lo, dtype=float)
        self.hi = None if hi is None else np.asarray(hi, dtype=float)

    def fit(self, X: np.ndarray) -> "Normalizer":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] == 0:
            raise EmptyInputError("cannot fit a normalizer on an empty matrix")
        self.lo = X.min(axis=0)
        self.hi = X.max(axis=0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.lo is None:
            raise NotFittedError("normalizer is not fitted")
        X = np.asarray(X, dtype=float)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (X - self.lo) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def inverse(self, Xn: np.ndarray) -> np.ndarray:
        return self.lo + np.asarray(Xn) * (self.hi - self.lo)


@dataclass(frozen=True)
class MeanPlus3Sigma:
    k: float = 3.0


@dataclass(frozen=True)
class Percentile:
    q: float = 0.999


ThresholdMethod = Union[MeanPlus3Sigma, Percentile]


def threshold_from_scores(scores: Sequence[float], method: ThresholdMethod) -> float:
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise EmptyInputError("threshold calibration needs at least one score")
    if isinstance(method, MeanPlus3Sigma):
        return float(s.mean() + method.k * s.std())
    if isinstance(method, Percentile):
        return float(np.quantile(s, method.q))
    raise TypeError(f"unknown threshold method {method!r}")


class Detector:
    """Scoring contract: higher is more anomalous; malicious iff score > threshold.

    Subclasses implement ``_fit_normalized`` and ``_score_normalized`` on
    min-max scaled inputs; the public methods take raw feature rows.
    """

    kind = "detector"
    default_threshold: ThresholdMethod = Percentile(0.999)

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.normalizer = Normalizer()
        self.threshold: float | None = None
        self._fitted = False

    def fit(self, benign: np.ndarray, calibrate: bool = True) -> "Detector":
        benign = np.atleast_2d(np.asarray(benign, dtype=float))
        if benign.shape[0] == 0:
            raise EmptyInputError(f"{self.kind}: empty benign matrix")
        self.normalizer.fit(benign)
        self._fit_normalized(self.normalizer.transform(benign))
        self._fitted = True
        if calibrate:
            self.calibrate_threshold(self.score_batch(benign), self.default_threshold)
        return self

    def _check(self) -> None:
        if not self._fitted:
            raise NotFittedError(f"{self.kind} detector is not fitted")

    def score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        self._check()
        Xn = np.atleast_2d(np.asarray(Xn, dtype=float))
        return self._score_normalized(Xn)

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        self._check()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] == 0:
            return np.zeros(0)
        return self._score_normalized(self.normalizer.transform(X))

    def score(self, x) -> float:
        values = getattr(x, "values", x)
        return float(self.score_batch(np.asarray(values)[None, :])[0])

    def calibrate_threshold(self, scores: Sequence[float], method: ThresholdMethod | None = None) -> float:
        self.threshold = threshold_from_scores(scores, method or self.default_threshold)
        return self.threshold

    def classify(self, X: np.ndarray) -> np.ndarray:
        if self.threshold is None:
            raise NotFittedError(f"{self.kind} detector has no threshold")
        return self.score_batch(X) > self.threshold

    # subclass hooks
    def _fit_normalized(self, Xn: np.ndarray) -> None:
        raise NotImplementedError

    def _score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # serialization hooks: JSON-able params + named float arrays
    def get_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        raise NotImplementedError

    def _set_state(self, params: dict, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError

    def _base_state(self) -> tuple[dict, dict[str, np.ndarray]]:
        params = {"seed": self.seed, "threshold": self.threshold}
        arrays = {"norm_lo": self.normalizer.lo, "norm_hi": self.normalizer.hi}
        return params, arrays

    def _set_base_state(self, params: dict, arrays: dict[str, np.ndarray]) -> None:
        self.seed = params["seed"]
        self.threshold = params["threshold"]
        self.normalizer = Normalizer(arrays["norm_lo"], arrays["norm_hi"])
        self._fitted = True


def calibrate_threshold(detector: Detector, scores: Sequence[float],
                        method: ThresholdMethod | None = None) -> float:
    return detector.calibrate_threshold(scores, method)


def write_scores_csv(scores: Sequence[float], path: str | Path, threshold: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "score", "above_threshold"])
        for i, s in enumerate(scores):
            w.writerow([i, repr(float(s)), "" if threshold is None else int(s > threshold)])
