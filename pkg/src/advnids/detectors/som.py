from __future__ import annotations

import numpy as np

from .base import Detector, Percentile


class SomGrid(Detector):
    """Self-organising map; the score is the distance to the best-matching unit.

    One pass over the benign rows in a seeded random order, learning rate and
    neighbourhood radius both decaying linearly.
    """

    kind = "som"
    default_threshold = Percentile(0.999)

    def __init__(self, seed: int = 0, rows: int = 10, cols: int = 10,
                 learning_rate: float = 0.5, sigma: float = 1.0):
        super().__init__(seed)
        self.rows, self.cols = rows, cols
        self.learning_rate = learning_rate
        self.sigma = sigma
        self.codebook: np.ndarray | None = None
        gy, gx = np.mgrid[0:rows, 0:cols]
        self._grid = np.column_stack([gy.ravel(), gx.ravel()]).astype(float)

    def _fit_normalized(self, Xn: np.ndarray) -> None:
        rng = np.random.default_rng(self.seed)
        units = self.rows * self.cols
        self.codebook = Xn[rng.integers(0, len(Xn), size=units)].copy()
        order = rng.permutation(len(Xn))
        T = len(order)
        for t, idx in enumerate(order):
            frac = 1.0 - t / T
            lr = self.learning_rate * frac
            sig = max(self.sigma * frac, 1e-3)
            x = Xn[idx]
            bmu = int(np.argmin(((self.codebook - x) ** 2).sum(axis=1)))
            d2 = ((self._grid - self._grid[bmu]) ** 2).sum(axis=1)
            h = np.exp(-d2 / (2 * sig * sig))
            self.codebook += (lr * h)[:, None] * (x - self.codebook)

    def _score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        d2 = ((Xn[:, None, :] - self.codebook[None, :, :]) ** 2).sum(axis=2)
        return np.sqrt(np.maximum(d2.min(axis=1), 0.0))

    def get_state(self):
        params, arrays = self._base_state()
        params.update(rows=self.rows, cols=self.cols, learning_rate=self.learning_rate, sigma=self.sigma)
        arrays["codebook"] = self.codebook
        return params, arrays

    def _set_state(self, params, arrays):
        self.__init__(params["seed"], params["rows"], params["cols"], params["learning_rate"], params["sigma"])
        self._set_base_state(params, arrays)
        self.codebook = np.array(arrays["codebook"])
