from __future__ import annotations

import numpy as np
from sklearn.neighbors import LocalOutlierFactor

from .base import Detector, Percentile


class LofModel(Detector):
    """Novelty-mode local outlier factor over the stored benign points."""

    kind = "lof"
    default_threshold = Percentile(0.999)

    def __init__(self, seed: int = 0, k: int = 20):
        super().__init__(seed)
        self.k = k
        self.points: np.ndarray | None = None
        self._model: LocalOutlierFactor | None = None

    def _fit_normalized(self, Xn: np.ndarray) -> None:
        self.points = np.array(Xn)
        k = min(self.k, max(1, len(Xn) - 1))
        self._model = LocalOutlierFactor(n_neighbors=k, novelty=True, algorithm="brute")
        self._model.fit(self.points)

    def _score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        return -self._model.score_samples(Xn)

    def get_state(self):
        params, arrays = self._base_state()
        params["k"] = self.k
        arrays["points"] = self.points
        return params, arrays

    def _set_state(self, params, arrays):
        self._set_base_state(params, arrays)
        self.k = params["k"]
        self._fit_normalized(np.array(arrays["points"]))
