"""Autoencoder ensemble in the style of KitNET.

Features are grouped by agglomerative clustering on correlation distance;
each group gets a small autoencoder and a final autoencoder scores the
vector of per-group reconstruction errors.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.cluster.hierarchy import linkage, to_tree

from .autoencoder import MLP, rmse
from .base import Detector, Normalizer, Percentile


def correlation_distance(X: np.ndarray) -> np.ndarray:
    """1 - |Pearson correlation| between columns; constant columns count as uncorrelated."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    c = X - X.mean(axis=0)
    norms = np.sqrt((c * c).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    corr = (c.T @ c) / np.outer(safe, safe)
    live = norms > 0
    corr = np.where(np.outer(live, live), corr, 0.0)
    np.fill_diagonal(corr, 1.0)
    dist = 1.0 - np.abs(np.clip(corr, -1.0, 1.0))
    dist = (dist + dist.T) / 2
    np.fill_diagonal(dist, 0.0)
    return np.clip(dist, 0.0, 1.0) if d else dist


def build_feature_map(X: np.ndarray, max_cluster: int = 10) -> list[list[int]]:
    """Partition column indices into groups of at most ``max_cluster``."""
    d = X.shape[1]
    if d <= max_cluster:
        return [list(range(d))]
    D = correlation_distance(X)
    Z = linkage(D[np.triu_indices(d, 1)], method="single")
    groups: list[list[int]] = []

    def split(node):
        if node.get_count() <= max_cluster:
            groups.append(sorted(node.pre_order()))
        else:
            split(node.get_left())
            split(node.get_right())

    split(to_tree(Z))
    return groups


class KitNetEnsemble(Detector):
    kind = "kitnet"
    default_threshold = Percentile(0.999)

    def __init__(self, seed: int = 0, max_cluster: int = 10, hidden_ratio: float = 0.75,
                 epochs: int = 1, batch_size: int = 32, lr: float = 1e-3):
        super().__init__(seed)
        self.max_cluster = max_cluster
        self.hidden_ratio = hidden_ratio
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.feature_map: list[list[int]] = []
        self.members: list[MLP] = []
        self.output: MLP | None = None
        self.err_norm = Normalizer()

    def _hidden(self, n: int) -> int:
        return max(1, int(math.ceil(self.hidden_ratio * n)))

    def _member_errors(self, Xn: np.ndarray) -> np.ndarray:
        return np.column_stack([rmse(Xn[:, g], m.forward(Xn[:, g]))
                                for g, m in zip(self.feature_map, self.members)])

    def _fit_normalized(self, Xn: np.ndarray) -> None:
        self.feature_map = build_feature_map(Xn, self.max_cluster)
        self.members = []
        for i, g in enumerate(self.feature_map):
            net = MLP((len(g), self._hidden(len(g)), len(g)), ("sigmoid", "sigmoid"),
                      seed=self.seed * 1000 + i)
            net.train(Xn[:, g], self.epochs, self.batch_size, self.lr)
            self.members.append(net)
        E = self._member_errors(Xn)
        self.err_norm.fit(E)
        k = E.shape[1]
        self.output = MLP((k, self._hidden(k), k), ("sigmoid", "sigmoid"), seed=self.seed * 1000 + 999)
        self.output.train(self.err_norm.transform(E), self.epochs, self.batch_size, self.lr)

    def _score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        E = self.err_norm.transform(self._member_errors(Xn))
        return rmse(E, self.output.forward(E))

    def get_state(self):
        params, arrays = self._base_state()
        params.update(max_cluster=self.max_cluster, hidden_ratio=self.hidden_ratio,
                      epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                      feature_map=self.feature_map,
                      members=[m.describe() for m in self.members], output=self.output.describe())
        for i, m in enumerate(self.members):
            arrays.update(m.get_arrays(f"m{i}_"))
        arrays.update(self.output.get_arrays("out_"))
        arrays["err_lo"], arrays["err_hi"] = self.err_norm.lo, self.err_norm.hi
        return params, arrays

    def _set_state(self, params, arrays):
        self._set_base_state(params, arrays)
        for key in ("max_cluster", "hidden_ratio", "epochs", "batch_size", "lr"):
            setattr(self, key, params[key])
        self.feature_map = [list(g) for g in params["feature_map"]]
        self.members = [MLP.from_arrays(d, arrays, f"m{i}_") for i, d in enumerate(params["members"])]
        self.output = MLP.from_arrays(params["output"], arrays, "out_")
        self.err_norm = Normalizer(arrays["err_lo"], arrays["err_hi"])
